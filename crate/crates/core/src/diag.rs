use std::fmt;

use crate::error::Error;
use crate::lexer::Pos;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Source,
    Dest,
}

/// One entry of the diagnostic log, in emission order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    /// `#print` / `@print` output.
    Print { phase: Phase, message: String, pos: Pos },
    /// The error that stopped the translation.
    Error(Error),
}

impl Diagnostic {
    pub fn message(&self) -> String {
        match self {
            Diagnostic::Print { message, .. } => message.clone(),
            Diagnostic::Error(e) => e.kind.to_string(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Print { message, .. } => f.write_str(message),
            Diagnostic::Error(e) => write!(f, "{e}"),
        }
    }
}
