//! The `class` construct: user-defined patterns of parameters and separator
//! symbols, resolved newest definition first.
//!
//! A pattern is read from the class header: identifiers are parameters, every
//! other token is a literal separator. Matching splits the argument tokens at
//! top-level separator occurrences only (never inside `()`, `[]` or `{}`),
//! choosing the rightmost viable occurrence for each separator run while
//! walking the pattern right to left. Two parameters with no separator between
//! them split by juxtaposition: the left one takes a single atom (one token or
//! one bracketed group).
//!
//! A `..` marker in the header ends the fixed part. Everything after the fixed
//! part is bound, verbatim, to each of the variadic parameters.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, ErrorKind, Result};
use crate::lexer::{Line, Pos, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PatternElem {
    Param(String),
    Sep(Vec<Token>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variadic {
    /// Separator run written between `..` and the first variadic parameter.
    pub lead: Vec<Token>,
    pub params: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Pattern {
    pub fixed: Vec<PatternElem>,
    pub variadic: Option<Variadic>,
}

impl Pattern {
    /// Build a pattern from header tokens following the class name.
    pub fn parse(tokens: &[Token]) -> Result<Pattern> {
        let mut fixed: Vec<PatternElem> = Vec::new();
        let mut variadic: Option<Variadic> = None;
        let mut seen: Vec<&str> = Vec::new();

        for tok in tokens {
            if tok.is_op("..") {
                if variadic.is_some() {
                    return Err(class_err("more than one `..` marker in class pattern", &tok.pos));
                }
                variadic = Some(Variadic { lead: Vec::new(), params: Vec::new() });
                continue;
            }
            if tok.kind == TokenKind::Ident {
                if seen.contains(&tok.text.as_str()) {
                    return Err(class_err(&format!("duplicate parameter `{}`", tok.text), &tok.pos));
                }
                seen.push(&tok.text);
                match &mut variadic {
                    Some(v) => v.params.push(tok.text.clone()),
                    None => fixed.push(PatternElem::Param(tok.text.clone())),
                }
                continue;
            }
            match &mut variadic {
                Some(v) if v.params.is_empty() => v.lead.push(tok.clone()),
                // separators between repeated parameters only describe the
                // repetition; the tail is bound as a whole
                Some(_) => {}
                None => match fixed.last_mut() {
                    Some(PatternElem::Sep(run)) => run.push(tok.clone()),
                    _ => fixed.push(PatternElem::Sep(vec![tok.clone()])),
                },
            }
        }
        if let Some(v) = &variadic {
            if v.params.is_empty() {
                let pos = tokens.last().map(|t| t.pos.clone()).unwrap_or_else(Pos::synthetic);
                return Err(class_err("`..` must be followed by a parameter", &pos));
            }
        }
        Ok(Pattern { fixed, variadic })
    }

    pub fn fixed_count(&self) -> usize {
        self.fixed.iter().filter(|e| matches!(e, PatternElem::Param(_))).count()
    }

    pub fn params(&self) -> Vec<&str> {
        let fixed = self.fixed.iter().filter_map(|e| match e {
            PatternElem::Param(p) => Some(p.as_str()),
            PatternElem::Sep(_) => None,
        });
        let tail = self.variadic.iter().flat_map(|v| v.params.iter().map(String::as_str));
        fixed.chain(tail).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ClassDef {
    pub name: String,
    pub aliases: Vec<String>,
    pub pattern: Pattern,
    pub body: Vec<Line>,
    pub seq: usize,
    pub pos: Pos,
}

impl ClassDef {
    pub fn fixed_count(&self) -> usize {
        self.pattern.fixed_count()
    }

    pub fn has_variadic(&self) -> bool {
        self.pattern.variadic.is_some()
    }

    pub fn answers_to(&self, name: &str) -> bool {
        self.name == name || self.aliases.iter().any(|a| a == name)
    }
}

/// Parameter name to bound argument tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Binding(pub BTreeMap<String, Vec<Token>>);

impl Binding {
    pub fn get(&self, param: &str) -> Option<&[Token]> {
        self.0.get(param).map(Vec::as_slice)
    }

    /// Bound tokens rendered with single spaces.
    pub fn text(&self, param: &str) -> Option<String> {
        self.get(param).map(crate::lexer::render)
    }
}

/// A class definition as it appears in the input, before registration.
#[derive(Debug, Clone)]
pub struct ClassSyntax {
    pub header: Vec<Token>,
    pub body: Vec<Line>,
    pub aliases: Vec<String>,
    pub pos: Pos,
}

fn class_err(msg: &str, pos: &Pos) -> Error {
    Error::at(ErrorKind::Class(msg.to_string()), pos)
}

/// Gather a class definition starting at `lines[start]`, which must begin
/// with `class`. The body runs from the first `{` to its matching `}`, possibly
/// over several lines; identifiers after the closing brace are aliases.
/// Returns the syntax and the index of the first line after the definition.
pub fn collect_class(lines: &[Line], start: usize) -> Result<(ClassSyntax, usize)> {
    let first = &lines[start];
    let pos = first.pos.clone();
    let mut header = Vec::new();
    let mut li = start;
    let mut ti = 0;
    loop {
        let toks = &lines[li].tokens;
        if let Some(off) = toks[ti..].iter().position(|t| t.is_punct("{")) {
            header.extend_from_slice(&toks[ti..ti + off]);
            ti += off;
            break;
        }
        header.extend_from_slice(&toks[ti..]);
        li += 1;
        ti = 0;
        while li < lines.len() && lines[li].is_blank() {
            li += 1;
        }
        match lines.get(li) {
            Some(l) if l.tokens[0].is_punct("{") => {}
            _ => return Err(class_err("class definition without a `{ ... }` body", &pos)),
        }
    }

    let mut body = Vec::new();
    let mut current: Vec<Token> = Vec::new();
    let mut current_pos = lines[li].pos.clone();
    let mut depth = 0usize;
    loop {
        let line = &lines[li];
        while ti < line.tokens.len() {
            let tok = &line.tokens[ti];
            ti += 1;
            if tok.is_punct("{") {
                depth += 1;
                if depth == 1 {
                    continue;
                }
            } else if tok.is_punct("}") {
                depth -= 1;
                if depth == 0 {
                    flush(&mut body, &mut current, &current_pos);
                    let aliases = parse_aliases(&line.tokens[ti..])?;
                    let syntax = ClassSyntax { header, body, aliases, pos };
                    return Ok((syntax, li + 1));
                }
            }
            if current.is_empty() {
                current_pos = tok.pos.clone();
            }
            current.push(tok.clone());
        }
        flush(&mut body, &mut current, &current_pos);
        li += 1;
        ti = 0;
        if li >= lines.len() {
            return Err(class_err("unbalanced `{}` in class definition", &pos));
        }
    }
}

fn flush(body: &mut Vec<Line>, current: &mut Vec<Token>, pos: &Pos) {
    if !current.is_empty() {
        let mut line = Line::new(std::mem::take(current), pos.clone());
        line.normalize_head();
        body.push(line);
    }
}

fn parse_aliases(tokens: &[Token]) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for tok in tokens {
        match tok.kind {
            TokenKind::Ident => out.push(tok.text.clone()),
            TokenKind::Punct if tok.text == "," => {}
            _ => return Err(class_err(&format!("unexpected `{}` after class body", tok.text), &tok.pos)),
        }
    }
    Ok(out)
}

/// For every token: is it at bracket depth zero? An opener is top-level when
/// it starts at depth zero, a closer when it returns to depth zero.
pub fn top_level_mask(args: &[Token]) -> Vec<bool> {
    let mut depth = 0usize;
    args.iter()
        .map(|t| {
            if t.closes() {
                depth = depth.saturating_sub(1);
                depth == 0
            } else {
                let top = depth == 0;
                if t.opens() {
                    depth += 1;
                }
                top
            }
        })
        .collect()
}

/// Split into atoms: single tokens, or a bracket with everything up to its
/// matching close.
pub fn atoms(seg: &[Token]) -> Vec<&[Token]> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < seg.len() {
        let start = i;
        if seg[i].opens() {
            let mut depth = 0usize;
            while i < seg.len() {
                if seg[i].opens() {
                    depth += 1;
                } else if seg[i].closes() {
                    depth -= 1;
                    if depth == 0 {
                        break;
                    }
                }
                i += 1;
            }
            i = (i + 1).min(seg.len());
        } else {
            i += 1;
        }
        out.push(&seg[start..i]);
    }
    out
}

fn occurs_at(args: &[Token], mask: &[bool], sep: &[Token], at: usize) -> bool {
    at + sep.len() <= args.len() && sep.iter().enumerate().all(|(k, s)| mask[at + k] && args[at + k] == *s)
}

/// Brackets in `seg` pair up: no closer without its opener, none left open.
fn balanced(seg: &[Token]) -> bool {
    let mut depth = 0usize;
    for t in seg {
        if t.opens() {
            depth += 1;
        } else if t.closes() {
            match depth.checked_sub(1) {
                Some(d) => depth = d,
                None => return false,
            }
        }
    }
    depth == 0
}

fn bind_group(binding: &mut Binding, params: &[&str], seg: &[Token]) -> bool {
    let parts = atoms(seg);
    if parts.len() < params.len() || params.is_empty() || !balanced(seg) {
        return false;
    }
    let mut offset = 0;
    for (k, p) in params.iter().enumerate() {
        let take = if k + 1 == params.len() { seg.len() - offset } else { parts[k].len() };
        binding.0.insert((*p).to_string(), seg[offset..offset + take].to_vec());
        offset += take;
    }
    true
}

/// Match the fixed part of a pattern against the whole of `args`.
fn match_fixed(elems: &[PatternElem], args: &[Token]) -> Option<Binding> {
    let mut lead: Option<&[Token]> = None;
    let mut trail: Option<&[Token]> = None;
    let mut groups: Vec<Vec<&str>> = Vec::new();
    let mut seps: Vec<&[Token]> = Vec::new();
    for (i, e) in elems.iter().enumerate() {
        match e {
            PatternElem::Param(p) => match groups.last_mut() {
                Some(g) if !matches!(elems[i - 1], PatternElem::Sep(_)) => g.push(p),
                _ => groups.push(vec![p]),
            },
            PatternElem::Sep(run) if groups.is_empty() => lead = Some(run),
            PatternElem::Sep(run) if i + 1 == elems.len() => trail = Some(run),
            PatternElem::Sep(run) => seps.push(run),
        }
    }

    if groups.is_empty() {
        let expected = lead.unwrap_or(&[]);
        return (args == expected).then(Binding::default);
    }

    let mask = top_level_mask(args);
    let mut end = args.len();
    if let Some(t) = trail {
        if end < t.len() || !occurs_at(args, &mask, t, end - t.len()) {
            return None;
        }
        end -= t.len();
    }
    let start = match lead {
        Some(l) if occurs_at(args, &mask, l, 0) => l.len(),
        Some(_) => return None,
        None => 0,
    };
    if start > end {
        return None;
    }

    let mut binding = Binding::default();
    for gi in (1..groups.len()).rev() {
        let sep = seps[gi - 1];
        let need = groups[gi].len();
        let mut found = None;
        let mut p = end.checked_sub(sep.len())?;
        loop {
            if p < start {
                break;
            }
            if occurs_at(args, &mask, sep, p) && atoms(&args[p + sep.len()..end]).len() >= need {
                found = Some(p);
                break;
            }
            if p == start {
                break;
            }
            p -= 1;
        }
        let p = found?;
        if !bind_group(&mut binding, &groups[gi], &args[p + sep.len()..end]) {
            return None;
        }
        end = p;
    }
    bind_group(&mut binding, &groups[0], &args[start..end]).then_some(binding)
}

/// Match `args` against `pattern`. `None` on mismatch.
pub fn match_pattern(pattern: &Pattern, args: &[Token]) -> Option<Binding> {
    let Some(v) = &pattern.variadic else {
        return match_fixed(&pattern.fixed, args);
    };
    let mask = top_level_mask(args);
    let mut boundaries = vec![0];
    let mut acc = 0;
    for a in atoms(args) {
        acc += a.len();
        boundaries.push(acc);
    }
    for s in boundaries {
        let tail = &args[s..];
        if !balanced(tail) {
            continue;
        }
        if !v.lead.is_empty() && !tail.is_empty() && !occurs_at(args, &mask, &v.lead, s) {
            continue;
        }
        if let Some(mut binding) = match_fixed(&pattern.fixed, &args[..s]) {
            for p in &v.params {
                binding.0.insert(p.clone(), tail.to_vec());
            }
            return Some(binding);
        }
    }
    None
}

/// Replace parameter identifiers in `tokens`. An identifier right after `.`
/// is a field name and is left alone.
fn substitute(tokens: &[Token], binding: &Binding) -> Vec<Token> {
    let mut out = Vec::with_capacity(tokens.len());
    for (i, tok) in tokens.iter().enumerate() {
        let after_dot = i > 0 && tokens[i - 1].is_punct(".");
        match binding.get(&tok.text) {
            Some(bound) if tok.kind == TokenKind::Ident && !after_dot => out.extend_from_slice(bound),
            _ => out.push(tok.clone()),
        }
    }
    out
}

/// Instantiate the body of `def` with `binding`. Nested `class` lines in the
/// result are registered when the caller processes them.
pub fn expand(def: &ClassDef, binding: &Binding) -> Vec<Line> {
    def.body
        .iter()
        .map(|line| {
            let mut out = Line::new(substitute(&line.tokens, binding), line.pos.clone());
            out.normalize_head();
            out
        })
        .filter(|l| !l.is_blank())
        .collect()
}

/// All class definitions of a translation unit plus `:=` substitutions.
#[derive(Debug, Clone, Default)]
pub struct ClassTable {
    defs: Vec<ClassDef>,
    symbol_subs: HashMap<String, Vec<Token>>,
}

impl ClassTable {
    pub fn new() -> Self {
        ClassTable::default()
    }

    pub fn defs(&self) -> &[ClassDef] {
        &self.defs
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    /// Register a definition. `header` starts with the `class` keyword.
    pub fn define_class(&mut self, header: &[Token], body: Vec<Line>, aliases: Vec<String>) -> Result<&ClassDef> {
        let pos = header.first().map(|t| t.pos.clone()).unwrap_or_else(Pos::synthetic);
        let name = match header.get(1) {
            Some(t) if t.name().is_some() => t.text.clone(),
            Some(t) => return Err(class_err(&format!("`{}` is not a valid class name", t.text), &t.pos)),
            None => return Err(class_err("class definition without a name", &pos)),
        };
        let pattern = Pattern::parse(&header[2..])?;
        self.defs.push(ClassDef { name, aliases, pattern, body, seq: self.defs.len(), pos });
        Ok(self.defs.last().expect("just pushed"))
    }

    pub fn define_syntax(&mut self, syntax: &ClassSyntax) -> Result<&ClassDef> {
        self.define_class(&syntax.header, syntax.body.clone(), syntax.aliases.clone())
    }

    pub fn is_class(&self, name: &str) -> bool {
        self.defs.iter().any(|d| d.answers_to(name))
    }

    /// Try definitions answering to `name`, newest first; the first whose
    /// pattern matches wins.
    pub fn resolve(&self, name: &str, args: &[Token]) -> Option<(&ClassDef, Binding)> {
        self.defs
            .iter()
            .rev()
            .filter(|d| d.answers_to(name))
            .find_map(|d| match_pattern(&d.pattern, args).map(|b| (d, b)))
    }

    pub fn define_symbol_substitution(&mut self, name: &str, replacement: Vec<Token>) {
        self.symbol_subs.insert(name.to_string(), replacement);
    }

    pub fn symbol_substitution(&self, name: &str) -> Option<&[Token]> {
        self.symbol_subs.get(name).map(Vec::as_slice)
    }

    /// One substitution step over `tokens`: replacement text is not scanned
    /// again. Returns `None` when nothing was replaced.
    pub fn substitute_symbols(&self, tokens: &[Token]) -> Option<Vec<Token>> {
        if self.symbol_subs.is_empty() {
            return None;
        }
        let mut changed = false;
        let mut out = Vec::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            let after_dot = i > 0 && tokens[i - 1].is_punct(".");
            match self.symbol_subs.get(&tok.text) {
                Some(rep) if tok.kind == TokenKind::Ident && !after_dot => {
                    changed = true;
                    out.extend(rep.iter().map(|r| Token { pos: tok.pos.clone(), ..r.clone() }));
                }
                _ => out.push(tok.clone()),
            }
        }
        changed.then_some(out)
    }

    /// Expand every `Name(...)` call of a registered class inside `tokens`.
    /// The parenthesized contents are tried as arguments first, then the
    /// whole group including its parentheses. Expansions must produce at most
    /// one line. Returns `None` when nothing was replaced.
    pub fn replace_calls(&self, tokens: &[Token], limit: usize) -> Result<Option<Vec<Token>>> {
        let mut out = tokens.to_vec();
        let mut replaced = 0usize;
        let mut i = 0;
        while i < out.len() {
            let callable = out[i].name().is_some_and(|n| self.is_class(n))
                && out.get(i + 1).is_some_and(|t| t.is_punct("("))
                && !(i > 0 && out[i - 1].is_punct("."));
            if !callable {
                i += 1;
                continue;
            }
            let group = atoms(&out[i + 1..])[0].len();
            let close = i + group;
            if !out[close].is_punct(")") {
                i += 1;
                continue;
            }
            let name = &out[i].text;
            let found = self.resolve(name, &out[i + 2..close]).or_else(|| self.resolve(name, &out[i + 1..=close]));
            let Some((def, binding)) = found else {
                i += 1;
                continue;
            };
            let lines = expand(def, &binding);
            if lines.len() > 1 {
                return Err(class_err(
                    &format!("class `{}` expands to {} lines and cannot be used inline", def.name, lines.len()),
                    &out[i].pos,
                ));
            }
            replaced += 1;
            if replaced > limit {
                return Err(Error::at(ErrorKind::ExpansionDepth(limit), &out[i].pos));
            }
            let spliced: Vec<Token> = lines.into_iter().flat_map(|l| l.tokens).collect();
            out.splice(i..=close, spliced);
        }
        Ok((replaced > 0).then_some(out))
    }
}
