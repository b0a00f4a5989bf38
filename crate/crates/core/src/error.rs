use std::fmt;

use crate::lexer::Pos;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ErrorKind {
    #[error("unterminated string literal")]
    UnterminatedString,
    #[error("invalid numeric literal `{0}`")]
    InvalidNumber(String),
    #[error("invalid character literal `{0}`")]
    InvalidChar(String),
    #[error("illegal character `{0}`")]
    IllegalChar(char),

    #[error("undefined identifier `{0}`")]
    Undefined(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("shift amount {0} out of range")]
    ShiftRange(i64),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("malformed expression: {0}")]
    Malformed(String),

    /// Mis-nested or misplaced control directives.
    #[error("{0}")]
    Structure(String),
    /// Bad class definitions and unresolvable invocations.
    #[error("{0}")]
    Class(String),
    #[error("class expansion depth exceeded {0} (circular class definition?)")]
    ExpansionDepth(usize),
    #[error("loop exceeded {0} iterations")]
    RunawayLoop(u64),
    #[error("{0}")]
    Emit(String),

    /// Raised by `#error` / `@error`.
    #[error("{0}")]
    User(String),

    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("internal error: {0}")]
    Internal(String),
}

/// An error with the source position it was raised at, when one is known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Error {
    pub kind: ErrorKind,
    pub pos: Option<Pos>,
}

impl Error {
    pub fn new(kind: ErrorKind, pos: Option<Pos>) -> Self {
        Error { kind, pos }
    }

    pub fn at(kind: ErrorKind, pos: &Pos) -> Self {
        Error { kind, pos: Some(pos.clone()) }
    }

    pub fn bare(kind: ErrorKind) -> Self {
        Error { kind, pos: None }
    }

    /// Attach `pos` unless the error already carries one.
    pub fn or_at(mut self, pos: &Pos) -> Self {
        if self.pos.is_none() {
            self.pos = Some(pos.clone());
        }
        self
    }

    pub fn is_internal(&self) -> bool {
        matches!(self.kind, ErrorKind::Internal(_))
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.pos {
            Some(pos) => write!(f, "{}:{}: {}", pos.file, pos.line, self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

impl std::error::Error for Error {}

impl From<ErrorKind> for Error {
    fn from(kind: ErrorKind) -> Self {
        Error::bare(kind)
    }
}
