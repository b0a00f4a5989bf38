//! First processing level: `#` directives, class definitions and expansion,
//! `:=` substitution. Produces the intermediate stream.
//!
//! Each non-directive line is handled in this order:
//!
//! 1. if its head names a class, the whole rest of the line is tried as the
//!    argument list (statement form) and a match is expanded in place;
//! 2. otherwise `Name(...)` calls of registered classes are expanded inline;
//! 3. then `:=` symbols are substituted, one step;
//! 4. if 3 changed anything, 1 and 2 are retried on the result.
//!
//! What remains goes to the stream. Assignments are evaluated here for later
//! `#` conditions and also passed on, to be replayed by the destination phase.

use crate::classes::{expand, ClassSyntax, ClassTable};
use crate::control::{self, parse_program, run_block, ExecState, Flow, Host};
use crate::diag::{Diagnostic, Phase};
use crate::error::{Error, ErrorKind, Result};
use crate::expr::{self, SymbolTable, Value};
use crate::lexer::{dotted_name, Line, LineKind, Pos, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceOptions {
    pub max_loop: u64,
    pub max_depth: usize,
}

impl Default for SourceOptions {
    fn default() -> Self {
        SourceOptions { max_loop: 1_000_000, max_depth: 1024 }
    }
}

/// `#`-free lines handed to the destination phase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntermediateStream {
    pub lines: Vec<Line>,
}

impl IntermediateStream {
    pub fn text(&self) -> Vec<String> {
        self.lines.iter().map(Line::text).collect()
    }
}

pub fn run_source_phase(
    lines: &[Line],
    env: &mut SymbolTable,
    table: &mut ClassTable,
    opts: &SourceOptions,
    diags: &mut Vec<Diagnostic>,
) -> Result<IntermediateStream> {
    let block = parse_program(lines, control::SOURCE)?;
    let mut host = SourceHost { env, table, out: Vec::new(), diags, depth: 0, opts };
    let mut st = ExecState::new('#', opts.max_loop);
    match run_block(&mut host, &mut st, &block)? {
        Flow::Normal => Ok(IntermediateStream { lines: host.out }),
        // exec_break refuses levels beyond the current depth
        flow => Err(Error::bare(ErrorKind::Internal(format!("{flow:?} escaped the top level")))),
    }
}

struct SourceHost<'a> {
    env: &'a mut SymbolTable,
    table: &'a mut ClassTable,
    out: Vec<Line>,
    diags: &'a mut Vec<Diagnostic>,
    depth: usize,
    opts: &'a SourceOptions,
}

impl SourceHost<'_> {
    /// Statement-form invocation: head token names a class, the rest of the
    /// line is the argument list.
    fn invoke(&mut self, st: &mut ExecState, line: &Line) -> Result<Option<Flow>> {
        let Some(name) = line.tokens.first().and_then(Token::name) else {
            return Ok(None);
        };
        let Some((def, binding)) = self.table.resolve(name, &line.tokens[1..]) else {
            return Ok(None);
        };
        let body = expand(def, &binding);
        if self.depth >= self.opts.max_depth {
            return Err(Error::at(ErrorKind::ExpansionDepth(self.opts.max_depth), &line.pos));
        }
        let block = parse_program(&body, control::SOURCE)?;
        self.depth += 1;
        let flow = run_block(self, st, &block);
        self.depth -= 1;
        flow.map(Some)
    }

    /// Inline calls, then one step of symbol substitution, then inline calls
    /// again on substituted text. `None` if nothing changed.
    fn rewrite(&self, tokens: &[Token]) -> Result<Option<Vec<Token>>> {
        let limit = self.opts.max_depth;
        let mut current: Option<Vec<Token>> = self.table.replace_calls(tokens, limit)?;
        let base = current.as_deref().unwrap_or(tokens);
        if let Some(subst) = self.table.substitute_symbols(base) {
            current = Some(self.table.replace_calls(&subst, limit)?.unwrap_or(subst));
        }
        Ok(current)
    }

    fn statement(&mut self, st: &mut ExecState, line: &Line) -> Result<Flow> {
        if let Some(flow) = self.invoke(st, line)? {
            return Ok(flow);
        }
        let line = match self.rewrite(&line.tokens)? {
            Some(tokens) => {
                let mut rewritten = Line::new(tokens, line.pos.clone());
                rewritten.normalize_head();
                if let Some(flow) = self.invoke(st, &rewritten)? {
                    return Ok(flow);
                }
                rewritten
            }
            None => line.clone(),
        };
        match line.kind() {
            LineKind::Blank => {}
            LineKind::SourceDirective => {
                let head = &line.tokens[0];
                return Err(Error::at(
                    ErrorKind::Structure(format!("unknown directive or unmatched class invocation `{}`", head.text)),
                    &head.pos,
                ));
            }
            LineKind::Assignment => {
                self.bind_assignment(&line);
                self.out.push(line);
            }
            _ => self.out.push(line),
        }
        Ok(Flow::Normal)
    }

    /// Values that only exist in the destination phase (labels) make the
    /// evaluation fail; the name is then left unbound here.
    fn bind_assignment(&mut self, line: &Line) {
        let Some((name, end)) = dotted_name(&line.tokens, 0) else { return };
        match expr::eval(&line.tokens[end + 1..], &*self.env) {
            Ok(v) => self.env.assign(&name, v),
            Err(_) => {
                self.env.remove(&name);
            }
        }
    }
}

impl Host for SourceHost<'_> {
    fn eval(&mut self, tokens: &[Token], pos: &Pos) -> Result<Value> {
        let rewritten = self.rewrite(tokens)?;
        let tokens = rewritten.as_deref().unwrap_or(tokens);
        expr::eval(tokens, &*self.env).map_err(|e| e.or_at(pos))
    }

    fn line(&mut self, st: &mut ExecState, line: &Line) -> Result<Flow> {
        match line.kind() {
            LineKind::Blank => Ok(Flow::Normal),
            LineKind::SymbolSubstitution => {
                self.table.define_symbol_substitution(&line.tokens[0].text, line.tokens[2..].to_vec());
                Ok(Flow::Normal)
            }
            LineKind::ClassBodyDelimiter => {
                Err(Error::at(ErrorKind::Class("unbalanced `{}` outside a class definition".into()), &line.pos))
            }
            LineKind::DestDirective | LineKind::Label => {
                self.out.push(line.clone());
                Ok(Flow::Normal)
            }
            _ => self.statement(st, line),
        }
    }

    fn class(&mut self, syntax: &ClassSyntax) -> Result<()> {
        self.table.define_syntax(syntax).map(|_| ())
    }

    fn print(&mut self, text: String, pos: &Pos) {
        self.diags.push(Diagnostic::Print { phase: Phase::Source, message: text, pos: pos.clone() });
    }
}
