//! Line-oriented tokenizer and line classifier.
//!
//! Input is treated as 8-bit text: every byte maps to the char with the same
//! code (Latin-1), so string literals round-trip arbitrary bytes. Each source
//! line is tokenized on its own; `//` starts a comment that runs to the end of
//! the line.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, ErrorKind, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pos {
    pub file: Arc<str>,
    pub line: u32,
    pub col: u32,
}

impl Pos {
    pub fn new(file: impl Into<Arc<str>>, line: u32, col: u32) -> Self {
        Pos { file: file.into(), line, col }
    }

    /// A position inside synthesized text (tests, `--define` values).
    pub fn synthetic() -> Self {
        Pos::new("<input>", 1, 1)
    }

    fn with_col(&self, col: u32) -> Self {
        Pos { file: self.file.clone(), line: self.line, col }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Ident,
    Int,
    Str,
    Op,
    Punct,
    /// `#name` or `@name` in head position.
    Directive,
}

/// Equality ignores `pos`: two tokens are the same lexeme wherever they occur.
#[derive(Debug, Clone)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub value: Option<i64>,
    pub pos: Pos,
}

impl PartialEq for Token {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.text == other.text && self.value == other.value
    }
}

impl Eq for Token {}

impl Token {
    pub fn new(kind: TokenKind, text: impl Into<String>, pos: Pos) -> Self {
        Token { kind, text: text.into(), value: None, pos }
    }

    pub fn int(text: impl Into<String>, value: i64, pos: Pos) -> Self {
        Token { kind: TokenKind::Int, text: text.into(), value: Some(value), pos }
    }

    pub fn is_ident(&self, text: &str) -> bool {
        self.kind == TokenKind::Ident && self.text == text
    }

    pub fn is_punct(&self, text: &str) -> bool {
        self.kind == TokenKind::Punct && self.text == text
    }

    pub fn is_op(&self, text: &str) -> bool {
        self.kind == TokenKind::Op && self.text == text
    }

    /// `#`/`@` prefix of a directive key.
    pub fn directive_prefix(&self) -> Option<char> {
        match self.kind {
            TokenKind::Directive => self.text.chars().next(),
            _ => None,
        }
    }

    /// Identifier or directive key spelling usable as a class name.
    pub fn name(&self) -> Option<&str> {
        match self.kind {
            TokenKind::Ident | TokenKind::Directive => Some(&self.text),
            _ => None,
        }
    }

    /// Decoded bytes of a string literal.
    pub fn string_bytes(&self) -> Option<Vec<u8>> {
        if self.kind != TokenKind::Str {
            return None;
        }
        let inner: Vec<char> = self.text.chars().collect();
        let body = &inner[1..inner.len() - 1];
        let mut out = Vec::with_capacity(body.len());
        let mut i = 0;
        while i < body.len() {
            let (b, used) = decode_escape(&body[i..])?;
            out.push(b);
            i += used;
        }
        Some(out)
    }

    pub fn opens(&self) -> bool {
        self.kind == TokenKind::Punct && matches!(self.text.as_str(), "(" | "[" | "{")
    }

    pub fn closes(&self) -> bool {
        self.kind == TokenKind::Punct && matches!(self.text.as_str(), ")" | "]" | "}")
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// One source line after tokenization.
#[derive(Debug, Clone)]
pub struct Line {
    pub tokens: Vec<Token>,
    pub pos: Pos,
}

impl Line {
    pub fn new(tokens: Vec<Token>, pos: Pos) -> Self {
        Line { tokens, pos }
    }

    pub fn is_blank(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn text(&self) -> String {
        render(&self.tokens)
    }

    pub fn kind(&self) -> LineKind {
        classify_line(&self.tokens)
    }

    /// Re-establish the head-position rule for directive keys after tokens
    /// have been moved between lines.
    pub fn normalize_head(&mut self) {
        for (i, tok) in self.tokens.iter_mut().enumerate() {
            let sigil = tok.text.starts_with(['#', '@']) && tok.text.len() > 1;
            match tok.kind {
                TokenKind::Ident if i == 0 && sigil => tok.kind = TokenKind::Directive,
                TokenKind::Directive if i > 0 => tok.kind = TokenKind::Ident,
                _ => {}
            }
        }
    }
}

impl PartialEq for Line {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

/// Join token spellings with single spaces. Re-tokenizing the result yields
/// the same token sequence.
pub fn render(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&tok.text);
    }
    out
}

/// Map raw bytes to a string one char per byte.
pub fn decode_latin1(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| b as char).collect()
}

const MULTI_OPS: [&str; 10] = ["<=", ">=", "!=", "<>", "&&", "||", "<<", ">>", ":=", ".."];
const SINGLE_OPS: &str = "+-*/%<>=!~&|^";
const PUNCT: &str = "()[]{},;:.?";

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Decode one (possibly escaped) character at the start of `s`, returning
/// its byte value and how many chars it used.
fn decode_escape(s: &[char]) -> Option<(u8, usize)> {
    let c = *s.first()?;
    if c != '\\' {
        return u8::try_from(u32::from(c)).ok().map(|b| (b, 1));
    }
    let e = *s.get(1)?;
    let b = match e {
        'n' => b'\n',
        't' => b'\t',
        'r' => b'\r',
        '0' => 0,
        '\\' => b'\\',
        '\'' => b'\'',
        '"' => b'"',
        'x' => {
            let hi = s.get(2)?.to_digit(16)?;
            let lo = s.get(3)?.to_digit(16)?;
            return Some(((hi * 16 + lo) as u8, 4));
        }
        _ => return None,
    };
    Some((b, 2))
}

/// Tokenize one line. `pos` is the position of the line's first column.
pub fn tokenize(line: &str, pos: &Pos) -> Result<Vec<Token>> {
    let chars: Vec<char> = line.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;

    while i < chars.len() {
        let c = chars[i];
        let at = pos.with_col(pos.col + i as u32);
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            break;
        }

        let start = i;
        let text = |end: usize| chars[start..end].iter().collect::<String>();

        if is_ident_start(c) || ((c == '#' || c == '@') && chars.get(i + 1).is_some_and(|&n| is_ident_start(n))) {
            i += 1;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            let kind = if c == '#' || c == '@' {
                if tokens.is_empty() {
                    TokenKind::Directive
                } else {
                    TokenKind::Ident
                }
            } else {
                TokenKind::Ident
            };
            tokens.push(Token::new(kind, text(i), at));
        } else if c.is_ascii_digit() {
            let hex = c == '0' && matches!(chars.get(i + 1), Some('x' | 'X'));
            if hex {
                i += 2;
            }
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            let spelled = text(i);
            let value = if hex {
                let digits = &spelled[2..];
                if digits.is_empty() || digits.len() > 16 {
                    None
                } else {
                    u64::from_str_radix(digits, 16).ok().map(|v| v as i64)
                }
            } else {
                spelled.parse::<i64>().ok()
            };
            match value {
                Some(v) => tokens.push(Token::int(spelled, v, at)),
                None => return Err(Error::at(ErrorKind::InvalidNumber(spelled), &at)),
            }
        } else if c == '"' {
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(Error::at(ErrorKind::UnterminatedString, &at)),
                    Some('"') => break,
                    Some(_) => match decode_escape(&chars[i..]) {
                        Some((_, used)) => i += used,
                        None => return Err(Error::at(ErrorKind::InvalidChar(text(i + 2)), &at)),
                    },
                }
            }
            i += 1;
            tokens.push(Token::new(TokenKind::Str, text(i), at));
        } else if c == '\'' {
            let decoded = decode_escape(&chars[i + 1..]);
            match decoded {
                Some((b, used)) if chars.get(i + 1 + used) == Some(&'\'') => {
                    i += used + 2;
                    tokens.push(Token::int(text(i), i64::from(b), at));
                }
                _ => {
                    let end = chars[i + 1..].iter().position(|&ch| ch == '\'').map_or(chars.len(), |p| i + 2 + p);
                    return Err(Error::at(ErrorKind::InvalidChar(text(end)), &at));
                }
            }
        } else if let Some(op) = MULTI_OPS.iter().find(|op| {
            let mut it = op.chars();
            Some(c) == it.next() && chars.get(i + 1) == it.next().as_ref()
        }) {
            i += 2;
            let spelled = if *op == "<>" { "!=" } else { op };
            tokens.push(Token::new(TokenKind::Op, spelled, at));
        } else if SINGLE_OPS.contains(c) {
            i += 1;
            tokens.push(Token::new(TokenKind::Op, c.to_string(), at));
        } else if PUNCT.contains(c) {
            i += 1;
            tokens.push(Token::new(TokenKind::Punct, c.to_string(), at));
        } else {
            return Err(Error::at(ErrorKind::IllegalChar(c), &at));
        }
    }
    Ok(tokens)
}

/// Split `text` into lines and tokenize each. Line numbers start at 1.
pub fn tokenize_source(text: &str, file: &str) -> Result<Vec<Line>> {
    let file: Arc<str> = Arc::from(file);
    text.split('\n')
        .enumerate()
        .map(|(n, raw)| {
            let raw = raw.strip_suffix('\r').unwrap_or(raw);
            let pos = Pos { file: file.clone(), line: n as u32 + 1, col: 1 };
            Ok(Line::new(tokenize(raw, &pos)?, pos))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    SourceDirective,
    DestDirective,
    ClassDefinition,
    ClassBodyDelimiter,
    Assignment,
    Label,
    DataEmission,
    SymbolSubstitution,
    Blank,
    Plain,
}

pub const DATA_DIRECTIVES: [&str; 10] = ["db", "dw", "dd", "dp", "dq", "rb", "rw", "rd", "rp", "rq"];

pub fn is_data_directive(tok: &Token) -> bool {
    tok.kind == TokenKind::Ident && DATA_DIRECTIVES.contains(&tok.text.as_str())
}

/// Parse `ident (. ident)*` starting at `start`; returns the joined name and
/// the index just past it.
pub fn dotted_name(tokens: &[Token], start: usize) -> Option<(String, usize)> {
    let first = tokens.get(start)?;
    if first.kind != TokenKind::Ident {
        return None;
    }
    let mut name = first.text.clone();
    let mut i = start + 1;
    while i + 1 < tokens.len() && tokens[i].is_punct(".") && tokens[i + 1].kind == TokenKind::Ident {
        name.push('.');
        name.push_str(&tokens[i + 1].text);
        i += 2;
    }
    Some((name, i))
}

pub fn classify_line(tokens: &[Token]) -> LineKind {
    let Some(head) = tokens.first() else {
        return LineKind::Blank;
    };
    match head.directive_prefix() {
        Some('#') => return LineKind::SourceDirective,
        Some(_) => return LineKind::DestDirective,
        None => {}
    }
    if head.is_ident("class") {
        return LineKind::ClassDefinition;
    }
    if head.is_punct("{") || head.is_punct("}") {
        return LineKind::ClassBodyDelimiter;
    }
    if is_data_directive(head) {
        return LineKind::DataEmission;
    }
    if let Some((_, end)) = dotted_name(tokens, 0) {
        match tokens.get(end) {
            Some(t) if t.is_punct(":") && end + 1 == tokens.len() => return LineKind::Label,
            Some(t) if t.is_op(":=") && end == 1 => return LineKind::SymbolSubstitution,
            Some(t) if t.is_op("=") => return LineKind::Assignment,
            Some(t) if is_data_directive(t) => return LineKind::DataEmission,
            _ => {}
        }
    }
    LineKind::Plain
}
