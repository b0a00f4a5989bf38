//! A two-level, rule-driven translator.
//!
//! Input text passes through a source phase (`#` directives, `class`
//! definitions and their expansion, `:=` substitution) that produces an
//! intermediate stream of lines, then through a destination phase (`@`
//! directives, labels, `dX`/`rX` data) that produces a byte image.

pub mod classes;
pub mod cli;
pub mod control;
pub mod dest_phase;
pub mod diag;
pub mod error;
pub mod expr;
pub mod lexer;
pub mod pipeline;
pub mod source_phase;

pub use dest_phase::{EmitImage, Endian};
pub use diag::Diagnostic;
pub use error::{Error, ErrorKind, Result};
pub use pipeline::{run_pipeline, translate_str, Options, Outcome, Translation};
