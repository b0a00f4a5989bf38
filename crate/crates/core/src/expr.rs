//! Expression evaluation for directive conditions, assignments and data values.
//!
//! Precedence, loosest first:
//!
//! | level | operators            |
//! |-------|----------------------|
//! | 1     | `\|\|`               |
//! | 2     | `&&`                 |
//! | 3     | `\|`                 |
//! | 4     | `^`                  |
//! | 5     | `&`                  |
//! | 6     | `=` `!=` (`<>`)      |
//! | 7     | `<` `<=` `>` `>=`    |
//! | 8     | `<<` `>>`            |
//! | 9     | `+` `-`              |
//! | 10    | `*` `/` `%`          |
//!
//! Unary `!`, `~` and `-` bind tighter than any binary operator. All binary
//! operators are left-associative. Integer arithmetic wraps at 64 bits.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, ErrorKind, Result};
use crate::lexer::{dotted_name, Pos, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Str(Vec<u8>),
}

impl Value {
    pub fn truthy(&self) -> bool {
        truthy(self)
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            Value::Str(_) => None,
        }
    }
}

/// Integer 0 and the empty string are false; everything else is true.
pub fn truthy(v: &Value) -> bool {
    match v {
        Value::Int(n) => *n != 0,
        Value::Str(s) => !s.is_empty(),
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Str(s) => f.write_str(&String::from_utf8_lossy(s)),
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

/// Read access to named values.
pub trait Scope {
    fn lookup(&self, name: &str) -> Option<Value>;
}

/// Nested variable scopes. Lookup searches innermost-outward.
#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    scopes: Vec<BTreeMap<String, Value>>,
}

impl SymbolTable {
    pub fn new() -> Self {
        SymbolTable { scopes: vec![BTreeMap::new()] }
    }

    pub fn push_scope(&mut self) {
        self.scopes.push(BTreeMap::new());
    }

    /// The outermost scope is never popped.
    pub fn pop_scope(&mut self) {
        if self.scopes.len() > 1 {
            self.scopes.pop();
        }
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }

    /// Write to the innermost scope already holding `name`, else create it in
    /// the innermost scope.
    pub fn assign(&mut self, name: &str, value: Value) {
        if let Some(scope) = self.scopes.iter_mut().rev().find(|s| s.contains_key(name)) {
            scope.insert(name.to_string(), value);
        } else {
            self.define(name, value);
        }
    }

    /// Bind in the innermost scope, shadowing outer bindings.
    pub fn define(&mut self, name: &str, value: Value) {
        self.scopes.last_mut().expect("symbol table has a root scope").insert(name.to_string(), value);
    }

    /// Drop the innermost binding of `name`.
    pub fn remove(&mut self, name: &str) -> Option<Value> {
        self.scopes.iter_mut().rev().find_map(|s| s.remove(name))
    }

    pub fn depth(&self) -> usize {
        self.scopes.len()
    }
}

impl Scope for SymbolTable {
    fn lookup(&self, name: &str) -> Option<Value> {
        self.get(name).cloned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Not,
    BitNot,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Or,
    And,
    BitOr,
    BitXor,
    BitAnd,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Shl,
    Shr,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl BinaryOp {
    pub fn from_token(tok: &Token) -> Option<BinaryOp> {
        if tok.kind != TokenKind::Op {
            return None;
        }
        Some(match tok.text.as_str() {
            "||" => BinaryOp::Or,
            "&&" => BinaryOp::And,
            "|" => BinaryOp::BitOr,
            "^" => BinaryOp::BitXor,
            "&" => BinaryOp::BitAnd,
            "=" => BinaryOp::Eq,
            "!=" => BinaryOp::Ne,
            "<" => BinaryOp::Lt,
            "<=" => BinaryOp::Le,
            ">" => BinaryOp::Gt,
            ">=" => BinaryOp::Ge,
            "<<" => BinaryOp::Shl,
            ">>" => BinaryOp::Shr,
            "+" => BinaryOp::Add,
            "-" => BinaryOp::Sub,
            "*" => BinaryOp::Mul,
            "/" => BinaryOp::Div,
            "%" => BinaryOp::Rem,
            _ => return None,
        })
    }

    pub fn precedence(self) -> u8 {
        use BinaryOp::*;
        match self {
            Or => 1,
            And => 2,
            BitOr => 3,
            BitXor => 4,
            BitAnd => 5,
            Eq | Ne => 6,
            Lt | Le | Gt | Ge => 7,
            Shl | Shr => 8,
            Add | Sub => 9,
            Mul | Div | Rem => 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Value, Pos),
    Name(String, Pos),
    Unary(UnaryOp, Box<Expr>, Pos),
    Binary(BinaryOp, Box<Expr>, Box<Expr>, Pos),
}

impl Expr {
    pub fn pos(&self) -> &Pos {
        match self {
            Expr::Lit(_, p) | Expr::Name(_, p) | Expr::Unary(_, _, p) | Expr::Binary(_, _, _, p) => p,
        }
    }

    pub fn eval(&self, env: &dyn Scope) -> Result<Value> {
        match self {
            Expr::Lit(v, _) => Ok(v.clone()),
            Expr::Name(name, pos) => env.lookup(name).ok_or_else(|| Error::at(ErrorKind::Undefined(name.clone()), pos)),
            Expr::Unary(op, inner, pos) => {
                let v = inner.eval(env)?;
                match (op, v) {
                    (UnaryOp::Not, v) => Ok(Value::Int(i64::from(!v.truthy()))),
                    (UnaryOp::BitNot, Value::Int(n)) => Ok(Value::Int(!n)),
                    (UnaryOp::Neg, Value::Int(n)) => Ok(Value::Int(n.wrapping_neg())),
                    (_, Value::Str(_)) => Err(mismatch("unary operator applied to a string", pos)),
                }
            }
            Expr::Binary(op, lhs, rhs, pos) => {
                let l = lhs.eval(env)?;
                match op {
                    BinaryOp::And if !l.truthy() => return Ok(Value::Int(0)),
                    BinaryOp::Or if l.truthy() => return Ok(Value::Int(1)),
                    BinaryOp::And | BinaryOp::Or => {
                        return Ok(Value::Int(i64::from(rhs.eval(env)?.truthy())));
                    }
                    _ => {}
                }
                let r = rhs.eval(env)?;
                binary(*op, l, r, pos)
            }
        }
    }
}

fn mismatch(msg: &str, pos: &Pos) -> Error {
    Error::at(ErrorKind::TypeMismatch(msg.to_string()), pos)
}

fn binary(op: BinaryOp, l: Value, r: Value, pos: &Pos) -> Result<Value> {
    use BinaryOp::*;
    let (a, b) = match (l, r) {
        (Value::Int(a), Value::Int(b)) => (a, b),
        (Value::Str(mut a), Value::Str(b)) => {
            return match op {
                Add => {
                    a.extend_from_slice(&b);
                    Ok(Value::Str(a))
                }
                Eq => Ok(Value::Int(i64::from(a == b))),
                Ne => Ok(Value::Int(i64::from(a != b))),
                Lt | Le | Gt | Ge => Err(mismatch("strings cannot be ordered", pos)),
                _ => Err(mismatch("arithmetic on strings", pos)),
            };
        }
        _ => return Err(mismatch("mixed string and integer operands", pos)),
    };
    let v = match op {
        Add => a.wrapping_add(b),
        Sub => a.wrapping_sub(b),
        Mul => a.wrapping_mul(b),
        Div | Rem if b == 0 => return Err(Error::at(ErrorKind::DivisionByZero, pos)),
        Div => a.wrapping_div(b),
        Rem => a.wrapping_rem(b),
        Shl | Shr if !(0..64).contains(&b) => return Err(Error::at(ErrorKind::ShiftRange(b), pos)),
        Shl => a << b,
        Shr => a >> b,
        Lt => i64::from(a < b),
        Le => i64::from(a <= b),
        Gt => i64::from(a > b),
        Ge => i64::from(a >= b),
        Eq => i64::from(a == b),
        Ne => i64::from(a != b),
        BitAnd => a & b,
        BitXor => a ^ b,
        BitOr => a | b,
        And | Or => unreachable!("short-circuit operators handled by caller"),
    };
    Ok(Value::Int(v))
}

struct Parser<'a> {
    tokens: &'a [Token],
    at: usize,
    end_pos: Pos,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.at)
    }

    fn unexpected(&self) -> Error {
        match self.peek() {
            Some(t) => Error::at(ErrorKind::Malformed(format!("unexpected `{}`", t.text)), &t.pos),
            None => Error::at(ErrorKind::Malformed("unexpected end of expression".into()), &self.end_pos),
        }
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(tok) = self.peek() {
            let Some(op) = BinaryOp::from_token(tok) else { break };
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.at += 1;
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs), tok.pos.clone());
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        let Some(tok) = self.peek() else {
            return Err(self.unexpected());
        };
        let op = match tok.text.as_str() {
            "!" if tok.kind == TokenKind::Op => Some(UnaryOp::Not),
            "~" if tok.kind == TokenKind::Op => Some(UnaryOp::BitNot),
            "-" if tok.kind == TokenKind::Op => Some(UnaryOp::Neg),
            _ => None,
        };
        match op {
            Some(op) => {
                self.at += 1;
                let inner = self.unary()?;
                Ok(Expr::Unary(op, Box::new(inner), tok.pos.clone()))
            }
            None => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        let Some(tok) = self.peek() else {
            return Err(self.unexpected());
        };
        match tok.kind {
            TokenKind::Int => {
                self.at += 1;
                Ok(Expr::Lit(Value::Int(tok.value.unwrap_or_default()), tok.pos.clone()))
            }
            TokenKind::Str => {
                self.at += 1;
                let bytes = tok.string_bytes().ok_or_else(|| self.unexpected())?;
                Ok(Expr::Lit(Value::Str(bytes), tok.pos.clone()))
            }
            TokenKind::Ident => {
                let (name, end) = dotted_name(self.tokens, self.at).expect("identifier starts a name");
                self.at = end;
                Ok(Expr::Name(name, tok.pos.clone()))
            }
            TokenKind::Punct if tok.text == "(" => {
                self.at += 1;
                let inner = self.binary(1)?;
                match self.peek() {
                    Some(t) if t.is_punct(")") => {
                        self.at += 1;
                        Ok(inner)
                    }
                    _ => Err(self.unexpected()),
                }
            }
            _ => Err(self.unexpected()),
        }
    }
}

fn end_pos(tokens: &[Token], fallback: Option<&Pos>) -> Pos {
    tokens.last().map(|t| t.pos.clone()).or_else(|| fallback.cloned()).unwrap_or_else(Pos::synthetic)
}

/// Parse the longest expression at the start of `tokens`, returning it and
/// the number of tokens consumed.
pub fn parse_prefix(tokens: &[Token]) -> Result<(Expr, usize)> {
    let mut p = Parser { tokens, at: 0, end_pos: end_pos(tokens, None) };
    let e = p.binary(1)?;
    Ok((e, p.at))
}

/// Parse `tokens` as exactly one expression.
pub fn parse(tokens: &[Token]) -> Result<Expr> {
    let (e, used) = parse_prefix(tokens)?;
    if let Some(extra) = tokens.get(used) {
        return Err(Error::at(ErrorKind::Malformed(format!("unexpected `{}`", extra.text)), &extra.pos));
    }
    Ok(e)
}

pub fn eval(tokens: &[Token], env: &dyn Scope) -> Result<Value> {
    parse(tokens)?.eval(env)
}
