//! Second processing level: `@` directives, assignments, labels and data
//! emission into an [`EmitImage`].
//!
//! Guarded blocks (`@if [Label] ... @endif`) are decided before any byte is
//! emitted, by a fixed-point iteration over identifier references. Label
//! values are then settled by repeated provisional passes; a final strict
//! pass produces the image and the `@print` output.

use std::collections::{BTreeMap, BTreeSet};

use crate::control::{self, parse_program, run_block, Block, ExecState, Flow, Host, Node};
use crate::diag::{Diagnostic, Phase};
use crate::error::{Error, ErrorKind, Result};
use crate::expr::{self, Scope, SymbolTable, Value};
use crate::lexer::{dotted_name, is_data_directive, Line, LineKind, Pos, Token, TokenKind};
use crate::source_phase::IntermediateStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Endian {
    #[default]
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DestOptions {
    pub endian: Endian,
    /// Reject values that do not fit their unit instead of truncating.
    pub strict_overflow: bool,
    pub max_loop: u64,
    /// Upper bound on provisional label-resolution passes.
    pub max_passes: usize,
}

impl Default for DestOptions {
    fn default() -> Self {
        DestOptions { endian: Endian::Little, strict_overflow: false, max_loop: 1_000_000, max_passes: 16 }
    }
}

/// Unit size of a `dX`/`rX` directive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeCode {
    Byte,
    Word,
    Double,
    /// Three words.
    Pword,
    Quad,
}

impl SizeCode {
    pub const ALL: [SizeCode; 5] = [SizeCode::Byte, SizeCode::Word, SizeCode::Double, SizeCode::Pword, SizeCode::Quad];

    pub fn from_letter(c: char) -> Option<SizeCode> {
        Some(match c {
            'b' => SizeCode::Byte,
            'w' => SizeCode::Word,
            'd' => SizeCode::Double,
            'p' => SizeCode::Pword,
            'q' => SizeCode::Quad,
            _ => return None,
        })
    }

    pub fn letter(self) -> char {
        match self {
            SizeCode::Byte => 'b',
            SizeCode::Word => 'w',
            SizeCode::Double => 'd',
            SizeCode::Pword => 'p',
            SizeCode::Quad => 'q',
        }
    }

    pub fn unit_size(self) -> usize {
        match self {
            SizeCode::Byte => 1,
            SizeCode::Word => 2,
            SizeCode::Double => 4,
            SizeCode::Pword => 6,
            SizeCode::Quad => 8,
        }
    }
}

/// One value of a data line; `Zero` is the `?` placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataValue {
    Value(Value),
    Zero,
}

impl From<i64> for DataValue {
    fn from(v: i64) -> Self {
        DataValue::Value(Value::Int(v))
    }
}

/// Bytes emitted by one stream line, for listings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Span {
    pub offset: usize,
    pub len: usize,
    pub text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmitImage {
    pub bytes: Vec<u8>,
    pub labels: BTreeMap<String, i64>,
    /// Labels referenced by surviving content.
    pub references: BTreeSet<String>,
    pub spans: Vec<Span>,
    pub endian: Endian,
    pub strict_overflow: bool,
}

impl EmitImage {
    pub fn new(endian: Endian, strict_overflow: bool) -> Self {
        EmitImage { endian, strict_overflow, ..Default::default() }
    }

    pub fn cursor(&self) -> usize {
        self.bytes.len()
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    /// Encode one integer unit: truncated modulo 2^(8·size), or rejected
    /// under strict overflow when outside both signed and unsigned range.
    pub fn encode_unit(&self, size: SizeCode, v: i64) -> Result<Vec<u8>> {
        let n = size.unit_size();
        if self.strict_overflow && n < 8 {
            let bits = 8 * n as u32;
            let min = -(1i64 << (bits - 1));
            let max = (1i64 << bits) - 1;
            if v < min || v > max {
                return Err(ErrorKind::Emit(format!("value {v} does not fit in {n} byte(s)")).into());
            }
        }
        let le = v.to_le_bytes();
        let mut unit = le[..n].to_vec();
        if self.endian == Endian::Big {
            unit.reverse();
        }
        Ok(unit)
    }

    pub fn emit_data(&mut self, size: SizeCode, values: &[DataValue]) -> Result<()> {
        for v in values {
            match v {
                DataValue::Zero => self.bytes.extend(std::iter::repeat_n(0, size.unit_size())),
                DataValue::Value(Value::Int(n)) => {
                    let unit = self.encode_unit(size, *n)?;
                    self.bytes.extend(unit);
                }
                DataValue::Value(Value::Str(s)) if size == SizeCode::Byte => self.bytes.extend_from_slice(s),
                DataValue::Value(Value::Str(_)) => {
                    return Err(ErrorKind::Emit(format!(
                        "string value under `d{}`; only `db` takes strings",
                        size.letter()
                    ))
                    .into());
                }
            }
        }
        Ok(())
    }

    pub fn reserve_data(&mut self, size: SizeCode, count: i64, fill: Option<&DataValue>) -> Result<()> {
        if count < 0 {
            return Err(ErrorKind::Emit(format!("negative reservation count {count}")).into());
        }
        let unit = match fill {
            None | Some(DataValue::Zero) => vec![0; size.unit_size()],
            Some(DataValue::Value(Value::Int(v))) => self.encode_unit(size, *v)?,
            Some(DataValue::Value(Value::Str(_))) => {
                return Err(ErrorKind::Emit("reservation fill must be an integer".into()).into());
            }
        };
        for _ in 0..count {
            self.bytes.extend_from_slice(&unit);
        }
        Ok(())
    }

    pub fn define_label(&mut self, name: &str) -> Result<()> {
        if self.labels.contains_key(name) {
            return Err(ErrorKind::Emit(format!("duplicate label `{name}`")).into());
        }
        self.labels.insert(name.to_string(), self.cursor() as i64);
        Ok(())
    }
}

/// Name defined by a label line or a named data line.
fn defined_name(line: &Line) -> Option<(String, usize)> {
    match line.kind() {
        LineKind::Label => dotted_name(&line.tokens, 0),
        LineKind::DataEmission if !is_data_directive(&line.tokens[0]) => dotted_name(&line.tokens, 0),
        _ => None,
    }
}

/// Dotted names used in `tokens`, skipping the first `skip` tokens.
fn names_in(tokens: &[Token], skip: usize, out: &mut Vec<String>) {
    let mut i = skip;
    while i < tokens.len() {
        let after_dot = i > 0 && tokens[i - 1].is_punct(".");
        if tokens[i].kind == TokenKind::Ident && !after_dot {
            let (name, end) = dotted_name(tokens, i).expect("identifier starts a name");
            out.push(name);
            i = end;
        } else {
            i += 1;
        }
    }
}

/// A name occurrence and the guards enclosing it, innermost last.
#[derive(Debug, Clone)]
struct Occurrence {
    name: String,
    guards: Vec<usize>,
}

#[derive(Debug, Default)]
struct GuardMap {
    labels: Vec<String>,
    ancestors: Vec<Vec<usize>>,
    refs: Vec<Occurrence>,
    defs: Vec<Occurrence>,
}

impl GuardMap {
    fn collect(block: &[Node]) -> GuardMap {
        let mut map = GuardMap::default();
        map.walk(block, &mut Vec::new());
        map
    }

    fn tokens(&mut self, tokens: &[Token], skip: usize, stack: &[usize]) {
        let mut names = Vec::new();
        names_in(tokens, skip, &mut names);
        self.refs.extend(names.into_iter().map(|name| Occurrence { name, guards: stack.to_vec() }));
    }

    fn walk(&mut self, block: &[Node], stack: &mut Vec<usize>) {
        for node in block {
            match node {
                Node::Line(line) => match defined_name(line) {
                    Some((name, end)) => {
                        self.defs.push(Occurrence { name, guards: stack.clone() });
                        self.tokens(&line.tokens, end, stack);
                    }
                    None => self.tokens(&line.tokens, 0, stack),
                },
                Node::Class(_) => {}
                Node::If { arms, otherwise, .. } => {
                    for (cond, body) in arms {
                        self.tokens(cond, 0, stack);
                        self.walk(body, stack);
                    }
                    if let Some(body) = otherwise {
                        self.walk(body, stack);
                    }
                }
                Node::While { cond, body, .. } => {
                    self.tokens(cond, 0, stack);
                    self.walk(body, stack);
                }
                Node::Repeat { times, body, until, .. } => {
                    self.tokens(times, 0, stack);
                    self.tokens(until, 0, stack);
                    self.walk(body, stack);
                }
                Node::Break { levels: t, .. } | Node::Message { msg: t, .. } => self.tokens(t, 0, stack),
                Node::Guard { label, id, body, .. } => {
                    if self.labels.len() <= *id {
                        self.labels.resize(*id + 1, String::new());
                        self.ancestors.resize(*id + 1, Vec::new());
                    }
                    self.labels[*id] = label.clone();
                    self.ancestors[*id] = stack.clone();
                    stack.push(*id);
                    self.walk(body, stack);
                    stack.pop();
                }
            }
        }
    }

    fn live(&self, guards: &[usize], included: &[bool]) -> bool {
        guards.iter().all(|&g| included[g])
    }
}

/// Which guarded blocks survive, indexed by guard id in source order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Inclusion {
    pub labels: Vec<String>,
    pub included: Vec<bool>,
    /// Iteration rounds until stable, including the final confirming round.
    pub rounds: usize,
}

impl Inclusion {
    pub fn is_included(&self, label: &str) -> bool {
        self.labels.iter().zip(&self.included).any(|(l, &inc)| l == label && inc)
    }
}

/// Greatest fixed point of guard inclusion. A guard survives when its label
/// occurs outside its own block, in content not inside an excluded guard.
/// Starting from all-included, each round can only exclude more, so at most
/// `guards + 1` rounds are needed.
pub fn resolve_guards(block: &[Node]) -> Result<Inclusion> {
    let map = GuardMap::collect(block);
    let n = map.labels.len();
    let mut included = vec![true; n];
    for round in 1..=n + 1 {
        let next: Vec<bool> = (0..n)
            .map(|g| {
                map.live(&map.ancestors[g], &included)
                    && map.refs.iter().any(|occ| {
                        occ.name == map.labels[g] && !occ.guards.contains(&g) && map.live(&occ.guards, &included)
                    })
            })
            .collect();
        if next == included {
            return Ok(Inclusion { labels: map.labels, included, rounds: round });
        }
        included = next;
    }
    Err(Error::bare(ErrorKind::Internal("guard elimination did not reach a fixed point".into())))
}

pub fn resolve_guarded_procedures(stream: &IntermediateStream) -> Result<Inclusion> {
    resolve_guards(&parse_program(&stream.lines, control::DEST)?)
}

struct DestScope<'a> {
    env: &'a SymbolTable,
    labels: &'a BTreeMap<String, i64>,
    previous: &'a BTreeMap<String, i64>,
    known: &'a BTreeSet<String>,
    provisional: bool,
}

impl Scope for DestScope<'_> {
    fn lookup(&self, name: &str) -> Option<Value> {
        self.env
            .get(name)
            .cloned()
            .or_else(|| self.labels.get(name).or_else(|| self.previous.get(name)).map(|&v| Value::Int(v)))
            .or_else(|| (self.provisional && self.known.contains(name)).then_some(Value::Int(0)))
    }
}

struct DestHost<'a> {
    env: SymbolTable,
    image: EmitImage,
    previous: &'a BTreeMap<String, i64>,
    known: &'a BTreeSet<String>,
    included: &'a [bool],
    /// Evaluation failures read as 0 and `@error` is ignored; prints are
    /// dropped. Used while label offsets are still moving.
    provisional: bool,
    prints: Vec<Diagnostic>,
}

impl DestHost<'_> {
    fn scope(&self) -> DestScope<'_> {
        DestScope {
            env: &self.env,
            labels: &self.image.labels,
            previous: self.previous,
            known: self.known,
            provisional: self.provisional,
        }
    }

    fn value(&self, e: &expr::Expr) -> Result<Value> {
        match e.eval(&self.scope()) {
            Ok(v) => Ok(v),
            Err(_) if self.provisional => Ok(Value::Int(0)),
            Err(err) => Err(err),
        }
    }

    fn data_value(&self, tokens: &[Token], at: usize) -> Result<(DataValue, usize)> {
        if tokens.get(at).is_some_and(|t| t.is_punct("?")) {
            return Ok((DataValue::Zero, 1));
        }
        let (e, used) = expr::parse_prefix(&tokens[at..])?;
        Ok((DataValue::Value(self.value(&e)?), used))
    }

    fn data(&mut self, line: &Line) -> Result<()> {
        let toks = &line.tokens;
        let (name, at) = match defined_name(line) {
            Some((name, end)) => (Some(name), end),
            None => (None, 0),
        };
        let directive = &toks[at];
        let mut letters = directive.text.chars();
        let kind = letters.next();
        let size = letters.next().and_then(SizeCode::from_letter).expect("classified as data directive");
        if let Some(name) = &name {
            self.image.define_label(name).map_err(|e| e.or_at(&directive.pos))?;
        }
        let start = self.image.cursor();
        let mut i = at + 1;
        if kind == Some('r') {
            if i >= toks.len() {
                return Err(emit_err(format!("`{}` needs a count", directive.text), &directive.pos));
            }
            let (e, used) = expr::parse_prefix(&toks[i..])?;
            i += used;
            let count = match self.value(&e)? {
                Value::Int(n) => n,
                Value::Str(_) => return Err(emit_err("reservation count must be an integer".into(), e.pos())),
            };
            if toks.get(i).is_some_and(|t| t.is_punct(",")) {
                i += 1;
            }
            let fill = if i < toks.len() {
                let (v, used) = self.data_value(toks, i)?;
                i += used;
                Some(v)
            } else {
                None
            };
            if let Some(extra) = toks.get(i) {
                return Err(emit_err(format!("unexpected `{}`", extra.text), &extra.pos));
            }
            self.image.reserve_data(size, count, fill.as_ref()).map_err(|e| e.or_at(&directive.pos))?;
        } else {
            let mut values = Vec::new();
            while i < toks.len() {
                let (v, used) = self.data_value(toks, i)?;
                values.push(v);
                i += used;
                if toks.get(i).is_some_and(|t| t.is_punct(",")) {
                    i += 1;
                    if i == toks.len() {
                        return Err(emit_err("trailing `,` in data list".into(), &toks[i - 1].pos));
                    }
                }
            }
            if values.is_empty() {
                return Err(emit_err(format!("`{}` needs at least one value", directive.text), &directive.pos));
            }
            self.image.emit_data(size, &values).map_err(|e| e.or_at(&directive.pos))?;
        }
        let len = self.image.cursor() - start;
        self.image.spans.push(Span { offset: start, len, text: line.text() });
        Ok(())
    }
}

fn emit_err(msg: String, pos: &Pos) -> Error {
    Error::at(ErrorKind::Emit(msg), pos)
}

impl Host for DestHost<'_> {
    fn eval(&mut self, tokens: &[Token], pos: &Pos) -> Result<Value> {
        let e = expr::parse(tokens).map_err(|e| e.or_at(pos))?;
        self.value(&e)
    }

    fn line(&mut self, _st: &mut ExecState, line: &Line) -> Result<Flow> {
        match line.kind() {
            LineKind::Blank => {}
            LineKind::Label => {
                let (name, _) = dotted_name(&line.tokens, 0).expect("label line starts with a name");
                self.image.define_label(&name).map_err(|e| e.or_at(&line.pos))?;
                let offset = self.image.cursor();
                self.image.spans.push(Span { offset, len: 0, text: line.text() });
            }
            LineKind::Assignment => {
                let (name, end) = dotted_name(&line.tokens, 0).expect("assignment starts with a name");
                let v = self.eval(&line.tokens[end + 1..], &line.pos)?;
                self.env.assign(&name, v);
            }
            LineKind::DataEmission => self.data(line)?,
            LineKind::DestDirective => {
                let head = &line.tokens[0];
                return Err(Error::at(ErrorKind::Structure(format!("unknown directive `{}`", head.text)), &head.pos));
            }
            _ => {
                return Err(Error::at(
                    ErrorKind::Structure(format!("unrecognized statement `{}`", line.text())),
                    &line.pos,
                ));
            }
        }
        Ok(Flow::Normal)
    }

    fn guard(&mut self, st: &mut ExecState, _label: &str, id: usize, body: &Block, _pos: &Pos) -> Result<Flow> {
        if self.included[id] {
            run_block(self, st, body)
        } else {
            Ok(Flow::Normal)
        }
    }

    fn print(&mut self, text: String, pos: &Pos) {
        self.prints.push(Diagnostic::Print { phase: Phase::Dest, message: text, pos: pos.clone() });
    }

    fn user_error(&mut self, text: String, pos: &Pos) -> Result<()> {
        if self.provisional {
            Ok(())
        } else {
            Err(Error::at(ErrorKind::User(text), pos))
        }
    }
}

/// Labels defined in content that survives guard elimination.
fn known_labels(block: &[Node], inclusion: &Inclusion) -> BTreeSet<String> {
    let map = GuardMap::collect(block);
    map.defs.into_iter().filter(|d| map_live(&d.guards, &inclusion.included)).map(|d| d.name).collect()
}

fn map_live(guards: &[usize], included: &[bool]) -> bool {
    guards.iter().all(|&g| included[g])
}

fn surviving_references(block: &[Node], inclusion: &Inclusion) -> BTreeSet<String> {
    let map = GuardMap::collect(block);
    map.refs.into_iter().filter(|r| map_live(&r.guards, &inclusion.included)).map(|r| r.name).collect()
}

pub fn run_dest_phase(
    stream: &IntermediateStream,
    env: &SymbolTable,
    opts: &DestOptions,
    diags: &mut Vec<Diagnostic>,
) -> Result<EmitImage> {
    let block = parse_program(&stream.lines, control::DEST)?;
    let inclusion = resolve_guards(&block)?;
    let known = known_labels(&block, &inclusion);

    let pass = |previous: &BTreeMap<String, i64>, provisional: bool| -> Result<(EmitImage, Vec<Diagnostic>)> {
        let mut host = DestHost {
            env: env.clone(),
            image: EmitImage::new(opts.endian, opts.strict_overflow),
            previous,
            known: &known,
            included: &inclusion.included,
            provisional,
            prints: Vec::new(),
        };
        let mut st = ExecState::new('@', opts.max_loop);
        match run_block(&mut host, &mut st, &block)? {
            Flow::Normal => Ok((host.image, host.prints)),
            flow => Err(Error::bare(ErrorKind::Internal(format!("{flow:?} escaped the top level")))),
        }
    };

    let mut labels = BTreeMap::new();
    let mut settled = false;
    for _ in 0..opts.max_passes.max(1) {
        let (image, _) = pass(&labels, true)?;
        if image.labels == labels {
            settled = true;
            break;
        }
        labels = image.labels;
    }
    if !settled {
        return Err(Error::bare(ErrorKind::Emit(format!(
            "label offsets did not settle after {} passes",
            opts.max_passes
        ))));
    }

    let (mut image, prints) = pass(&labels, false)?;
    diags.extend(prints);
    if image.labels != labels {
        return Err(Error::bare(ErrorKind::Internal("label table changed in the final pass".into())));
    }
    let refs = surviving_references(&block, &inclusion);
    image.references = refs.into_iter().filter(|r| image.labels.contains_key(r)).collect();
    Ok(image)
}
