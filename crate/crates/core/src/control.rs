//! Structured control directives shared by both phases.
//!
//! The `#` and `@` directive sets are the same language with a different
//! sigil: `if/elif/else/endif`, `while/endw`, `repeat/until`, `break`,
//! `print` and `error`. Lines are first parsed into a [`Block`] tree, then
//! executed against a [`Host`] that supplies expression evaluation and the
//! meaning of ordinary lines.

use crate::classes::{collect_class, top_level_mask, ClassSyntax};
use crate::error::{Error, ErrorKind, Result};
use crate::expr::Value;
use crate::lexer::{Line, Pos, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dialect {
    pub sigil: char,
    /// Parse `class` definitions into [`Node::Class`].
    pub classes: bool,
    /// Parse `@if [Label]` into [`Node::Guard`].
    pub guards: bool,
}

pub const SOURCE: Dialect = Dialect { sigil: '#', classes: true, guards: false };
pub const DEST: Dialect = Dialect { sigil: '@', classes: false, guards: true };

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    Print,
    Error,
}

pub type Block = Vec<Node>;

#[derive(Debug, Clone)]
pub enum Node {
    Line(Line),
    Class(ClassSyntax),
    If {
        arms: Vec<(Vec<Token>, Block)>,
        otherwise: Option<Block>,
        pos: Pos,
    },
    While {
        cond: Vec<Token>,
        body: Block,
        pos: Pos,
    },
    Repeat {
        times: Vec<Token>,
        body: Block,
        until: Vec<Token>,
        pos: Pos,
    },
    Break {
        levels: Vec<Token>,
        pos: Pos,
    },
    Message {
        kind: MessageKind,
        msg: Vec<Token>,
        pos: Pos,
    },
    /// A block kept only while its label is referenced elsewhere.
    Guard {
        label: String,
        id: usize,
        body: Block,
        pos: Pos,
    },
}

struct Parser<'a> {
    lines: &'a [Line],
    at: usize,
    dialect: Dialect,
    guards: usize,
}

/// The directive closing or continuing a block, with its argument tokens.
struct Terminator {
    name: String,
    args: Vec<Token>,
    pos: Pos,
}

fn structure(msg: String, pos: &Pos) -> Error {
    Error::at(ErrorKind::Structure(msg), pos)
}

impl Parser<'_> {
    fn directive<'l>(&self, line: &'l Line) -> Option<(&'l str, &'l [Token])> {
        let head = line.tokens.first()?;
        (head.directive_prefix() == Some(self.dialect.sigil)).then(|| (&head.text[1..], &line.tokens[1..]))
    }

    fn block(&mut self, opener: Option<(&str, &Pos)>) -> Result<(Block, Option<Terminator>)> {
        let sigil = self.dialect.sigil;
        let mut block = Vec::new();
        while self.at < self.lines.len() {
            let line = &self.lines[self.at];
            if line.is_blank() {
                self.at += 1;
                continue;
            }
            if self.dialect.classes && line.tokens[0].is_ident("class") {
                let (syntax, next) = collect_class(self.lines, self.at)?;
                self.at = next;
                block.push(Node::Class(syntax));
                continue;
            }
            let Some((name, args)) = self.directive(line) else {
                block.push(Node::Line(line.clone()));
                self.at += 1;
                continue;
            };
            let pos = line.pos.clone();
            let args = args.to_vec();
            self.at += 1;
            match name {
                "if" => block.push(self.conditional(args, pos)?),
                "while" => {
                    if args.is_empty() {
                        return Err(structure(format!("`{sigil}while` needs a condition"), &pos));
                    }
                    let body = self.body("while", &pos, &["endw"])?.0;
                    block.push(Node::While { cond: args, body, pos });
                }
                "repeat" => {
                    let (body, end) = self.body("repeat", &pos, &["until"])?;
                    if args.is_empty() && end.args.is_empty() {
                        return Err(Error::at(
                            ErrorKind::Config(format!(
                                "`{sigil}repeat` without a count needs an `{sigil}until` condition"
                            )),
                            &pos,
                        ));
                    }
                    block.push(Node::Repeat { times: args, body, until: end.args, pos });
                }
                "break" => block.push(Node::Break { levels: args, pos }),
                "print" => block.push(Node::Message { kind: MessageKind::Print, msg: args, pos }),
                "error" => block.push(Node::Message { kind: MessageKind::Error, msg: args, pos }),
                "elif" | "else" | "endif" | "endw" | "until" => {
                    let term = Terminator { name: name.to_string(), args, pos };
                    if opener.is_none() {
                        return Err(structure(format!("unmatched `{sigil}{name}`"), &term.pos));
                    }
                    return Ok((block, Some(term)));
                }
                _ => block.push(Node::Line(line.clone())),
            }
        }
        if let Some((name, pos)) = opener {
            return Err(structure(format!("`{sigil}{name}` at line {} is never closed", pos.line), pos));
        }
        Ok((block, None))
    }

    fn body(&mut self, opener: &str, pos: &Pos, closers: &[&str]) -> Result<(Block, Terminator)> {
        let (block, term) = self.block(Some((opener, pos)))?;
        let term = term.expect("opened blocks end with a terminator");
        if !closers.contains(&term.name.as_str()) {
            let s = self.dialect.sigil;
            return Err(structure(
                format!("`{s}{}` does not close `{s}{opener}` at line {}", term.name, pos.line),
                &term.pos,
            ));
        }
        Ok((block, term))
    }

    fn conditional(&mut self, cond: Vec<Token>, pos: Pos) -> Result<Node> {
        let sigil = self.dialect.sigil;
        if self.dialect.guards {
            if let [open, label, close] = cond.as_slice() {
                if open.is_punct("[") && close.is_punct("]") && label.kind == crate::lexer::TokenKind::Ident {
                    let id = self.guards;
                    self.guards += 1;
                    let (body, term) = self.body("if", &pos, &["endif", "elif", "else"])?;
                    if term.name != "endif" {
                        return Err(structure(
                            format!("guarded block `{sigil}if [{}]` cannot have `{sigil}{}`", label.text, term.name),
                            &term.pos,
                        ));
                    }
                    return Ok(Node::Guard { label: label.text.clone(), id, body, pos });
                }
            }
        }
        if cond.is_empty() {
            return Err(structure(format!("`{sigil}if` needs a condition"), &pos));
        }
        let mut arms = Vec::new();
        let mut otherwise = None;
        let mut current = cond;
        loop {
            let (body, term) = self.body("if", &pos, &["elif", "else", "endif"])?;
            match term.name.as_str() {
                "elif" if otherwise.is_none() => {
                    arms.push((std::mem::replace(&mut current, term.args), body));
                }
                "else" if otherwise.is_none() => {
                    arms.push((std::mem::take(&mut current), body));
                    otherwise = Some(Vec::new());
                }
                "endif" => {
                    match otherwise.as_mut() {
                        Some(o) => *o = body,
                        None => arms.push((current, body)),
                    }
                    return Ok(Node::If { arms, otherwise, pos });
                }
                other => {
                    return Err(structure(format!("`{sigil}{other}` after `{sigil}else`"), &term.pos));
                }
            }
        }
    }
}

/// Parse lines into a block tree. Directives with the dialect's sigil become
/// structured nodes; everything else is kept as [`Node::Line`].
pub fn parse_program(lines: &[Line], dialect: Dialect) -> Result<Block> {
    let mut p = Parser { lines, at: 0, dialect, guards: 0 };
    Ok(p.block(None)?.0)
}

/// Result of executing a statement or block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Normal,
    /// Skip to the next iteration of the innermost loop (`break 0`).
    Continue,
    /// Leave this many enclosing loops.
    Break(u32),
}

#[derive(Debug, Clone)]
pub struct ExecState {
    pub sigil: char,
    pub loop_depth: u32,
    pub max_loop: u64,
}

impl ExecState {
    pub fn new(sigil: char, max_loop: u64) -> Self {
        ExecState { sigil, loop_depth: 0, max_loop }
    }
}

/// Phase-specific behaviour plugged into [`run_block`].
pub trait Host: Sized {
    fn eval(&mut self, tokens: &[Token], pos: &Pos) -> Result<Value>;

    fn line(&mut self, st: &mut ExecState, line: &Line) -> Result<Flow>;

    fn class(&mut self, syntax: &ClassSyntax) -> Result<()> {
        Err(Error::at(ErrorKind::Structure("class definitions are not allowed here".into()), &syntax.pos))
    }

    fn guard(&mut self, st: &mut ExecState, label: &str, id: usize, body: &Block, pos: &Pos) -> Result<Flow> {
        let _ = (st, label, id, body);
        Err(Error::at(ErrorKind::Structure("guarded blocks are not allowed here".into()), pos))
    }

    fn print(&mut self, text: String, pos: &Pos);

    /// `#error`/`@error`. Returning `Ok` continues execution.
    fn user_error(&mut self, text: String, pos: &Pos) -> Result<()> {
        Err(Error::at(ErrorKind::User(text), pos))
    }
}

pub fn run_block<H: Host>(host: &mut H, st: &mut ExecState, block: &[Node]) -> Result<Flow> {
    for node in block {
        let flow = match node {
            Node::Line(line) => host.line(st, line)?,
            Node::Class(syntax) => {
                host.class(syntax)?;
                Flow::Normal
            }
            Node::If { arms, otherwise, pos } => exec_conditional(host, st, arms, otherwise.as_deref(), pos)?,
            Node::While { cond, body, pos } => exec_while(host, st, cond, body, pos)?,
            Node::Repeat { times, body, until, pos } => exec_repeat(host, st, times, body, until, pos)?,
            Node::Break { levels, pos } => exec_break(host, st, levels, pos)?,
            Node::Message { kind, msg, pos } => {
                exec_message(host, *kind, msg, pos)?;
                Flow::Normal
            }
            Node::Guard { label, id, body, pos } => host.guard(st, label, *id, body, pos)?,
        };
        if flow != Flow::Normal {
            return Ok(flow);
        }
    }
    Ok(Flow::Normal)
}

/// Run exactly one arm: the first whose condition holds, else `otherwise`.
pub fn exec_conditional<H: Host>(
    host: &mut H,
    st: &mut ExecState,
    arms: &[(Vec<Token>, Block)],
    otherwise: Option<&[Node]>,
    pos: &Pos,
) -> Result<Flow> {
    for (cond, body) in arms {
        if host.eval(cond, pos)?.truthy() {
            return run_block(host, st, body);
        }
    }
    match otherwise {
        Some(body) => run_block(host, st, body),
        None => Ok(Flow::Normal),
    }
}

enum LoopStep {
    Next,
    Exit(Flow),
}

fn loop_body<H: Host>(host: &mut H, st: &mut ExecState, body: &[Node]) -> Result<LoopStep> {
    st.loop_depth += 1;
    let flow = run_block(host, st, body);
    st.loop_depth -= 1;
    Ok(match flow? {
        Flow::Normal | Flow::Continue => LoopStep::Next,
        Flow::Break(1) => LoopStep::Exit(Flow::Normal),
        Flow::Break(n) => LoopStep::Exit(Flow::Break(n - 1)),
    })
}

fn count_iteration(st: &ExecState, n: &mut u64, pos: &Pos) -> Result<()> {
    *n += 1;
    if *n > st.max_loop {
        return Err(Error::at(ErrorKind::RunawayLoop(st.max_loop), pos));
    }
    Ok(())
}

pub fn exec_while<H: Host>(host: &mut H, st: &mut ExecState, cond: &[Token], body: &[Node], pos: &Pos) -> Result<Flow> {
    let mut n = 0;
    while host.eval(cond, pos)?.truthy() {
        count_iteration(st, &mut n, pos)?;
        if let LoopStep::Exit(flow) = loop_body(host, st, body)? {
            return Ok(flow);
        }
    }
    Ok(Flow::Normal)
}

/// `repeat [times] ... until [cond]`: runs until `cond` holds or `times`
/// iterations have run. A count of zero runs nothing.
pub fn exec_repeat<H: Host>(
    host: &mut H,
    st: &mut ExecState,
    times: &[Token],
    body: &[Node],
    until: &[Token],
    pos: &Pos,
) -> Result<Flow> {
    let limit = if times.is_empty() {
        None
    } else {
        match host.eval(times, pos)? {
            Value::Int(t) if t >= 0 => Some(t as u64),
            Value::Int(t) => {
                return Err(structure(format!("`{}repeat` count {t} is negative", st.sigil), pos));
            }
            Value::Str(_) => {
                return Err(Error::at(ErrorKind::TypeMismatch("repeat count must be an integer".into()), pos))
            }
        }
    };
    if limit == Some(0) {
        return Ok(Flow::Normal);
    }
    let mut n = 0;
    loop {
        count_iteration(st, &mut n, pos)?;
        if let LoopStep::Exit(flow) = loop_body(host, st, body)? {
            return Ok(flow);
        }
        if !until.is_empty() && host.eval(until, pos)?.truthy() {
            return Ok(Flow::Normal);
        }
        if limit.is_some_and(|l| n >= l) {
            return Ok(Flow::Normal);
        }
    }
}

/// `break [levels]`: omitted means 1, 0 continues the innermost loop.
pub fn exec_break<H: Host>(host: &mut H, st: &mut ExecState, levels: &[Token], pos: &Pos) -> Result<Flow> {
    let sigil = st.sigil;
    let n = if levels.is_empty() {
        1
    } else {
        match host.eval(levels, pos)? {
            Value::Int(n) if n >= 0 => n,
            _ => return Err(structure(format!("`{sigil}break` level must be a non-negative integer"), pos)),
        }
    };
    if n == 0 {
        return Ok(if st.loop_depth == 0 { Flow::Normal } else { Flow::Continue });
    }
    if n > i64::from(st.loop_depth) {
        let msg = if st.loop_depth == 0 {
            format!("`{sigil}break` outside a loop")
        } else {
            format!("`{sigil}break {n}` exceeds the loop nesting depth {}", st.loop_depth)
        };
        return Err(structure(msg, pos));
    }
    Ok(Flow::Break(n as u32))
}

/// Render message tokens: comma-separated expressions, concatenated. Strings
/// print without quotes, integers in decimal.
pub fn render_message<H: Host>(host: &mut H, msg: &[Token], pos: &Pos) -> Result<String> {
    let mut out = String::new();
    if msg.is_empty() {
        return Ok(out);
    }
    let mask = top_level_mask(msg);
    let mut start = 0;
    for i in 0..=msg.len() {
        if i == msg.len() || (mask[i] && msg[i].is_punct(",")) {
            out.push_str(&host.eval(&msg[start..i], pos)?.to_string());
            start = i + 1;
        }
    }
    Ok(out)
}

pub fn exec_message<H: Host>(host: &mut H, kind: MessageKind, msg: &[Token], pos: &Pos) -> Result<()> {
    let text = render_message(host, msg, pos)?;
    match kind {
        MessageKind::Print => {
            host.print(text, pos);
            Ok(())
        }
        MessageKind::Error => host.user_error(text, pos),
    }
}
