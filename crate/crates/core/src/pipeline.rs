//! Both phases chained over one translation unit.

use crate::classes::ClassTable;
use crate::dest_phase::{run_dest_phase, DestOptions, EmitImage, Endian};
use crate::diag::Diagnostic;
use crate::error::Result;
use crate::expr::{SymbolTable, Value};
use crate::lexer::{tokenize_source, Line};
use crate::source_phase::{run_source_phase, IntermediateStream, SourceOptions};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Options {
    pub endian: Endian,
    pub strict_overflow: bool,
    pub max_loop: u64,
    pub max_depth: usize,
    pub max_passes: usize,
    /// Symbols preset in both phases, in order.
    pub defines: Vec<(String, Value)>,
}

impl Default for Options {
    fn default() -> Self {
        let src = SourceOptions::default();
        let dst = DestOptions::default();
        Options {
            endian: dst.endian,
            strict_overflow: dst.strict_overflow,
            max_loop: src.max_loop,
            max_depth: src.max_depth,
            max_passes: dst.max_passes,
            defines: Vec::new(),
        }
    }
}

impl Options {
    fn preset(&self) -> SymbolTable {
        let mut env = SymbolTable::new();
        for (name, value) in &self.defines {
            env.assign(name, value.clone());
        }
        env
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Translation {
    pub stream: IntermediateStream,
    pub image: EmitImage,
}

/// Result of a run plus every diagnostic produced before it ended. On
/// failure the error is also the last diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub result: Result<Translation>,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn run_pipeline(lines: &[Line], opts: &Options) -> Outcome {
    let mut diagnostics = Vec::new();
    let result = phases(lines, opts, &mut diagnostics);
    if let Err(e) = &result {
        diagnostics.push(Diagnostic::Error(e.clone()));
    }
    Outcome { result, diagnostics }
}

fn phases(lines: &[Line], opts: &Options, diags: &mut Vec<Diagnostic>) -> Result<Translation> {
    let mut env = opts.preset();
    let mut table = ClassTable::new();
    let src_opts = SourceOptions { max_loop: opts.max_loop, max_depth: opts.max_depth };
    let stream = run_source_phase(lines, &mut env, &mut table, &src_opts, diags)?;
    let dst_opts = DestOptions {
        endian: opts.endian,
        strict_overflow: opts.strict_overflow,
        max_loop: opts.max_loop,
        max_passes: opts.max_passes,
    };
    let image = run_dest_phase(&stream, &opts.preset(), &dst_opts, diags)?;
    Ok(Translation { stream, image })
}

/// Tokenize `(name, text)` files in order into one unit and translate it.
pub fn translate_str(files: &[(&str, &str)], opts: &Options) -> Outcome {
    let mut lines = Vec::new();
    for (name, text) in files {
        match tokenize_source(text, name) {
            Ok(ls) => lines.extend(ls),
            Err(e) => return Outcome { diagnostics: vec![Diagnostic::Error(e.clone())], result: Err(e) },
        }
    }
    run_pipeline(&lines, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes(files: &[(&str, &str)]) -> Vec<u8> {
        translate_str(files, &Options::default()).result.unwrap().image.bytes
    }

    #[test]
    fn rules_then_source() {
        assert_eq!(bytes(&[("x86.gt", "class nop {db 0x90}"), ("prog.src", "nop")]), [0x90]);
        assert_eq!(bytes(&[("rv.gt", "class nop {dd 0x13}"), ("prog.src", "nop")]), [0x13, 0, 0, 0]);
    }

    #[test]
    fn later_rule_file_wins() {
        let a = ("a.gt", "class nop {db 1}");
        let b = ("b.gt", "class nop {db 2}");
        assert_eq!(bytes(&[a, b, ("p", "nop")]), [2]);
        assert_eq!(bytes(&[b, a, ("p", "nop")]), [1]);
    }

    #[test]
    fn defines_reach_both_phases() {
        let opts = Options { defines: vec![("PLATFORM".into(), Value::Int(1))], ..Default::default() };
        let out = translate_str(&[("p", "#if PLATFORM = 1\ndb PLATFORM\n#endif\n@if PLATFORM\ndb 7\n@endif")], &opts);
        assert_eq!(out.result.unwrap().image.bytes, [1, 7]);
    }

    #[test]
    fn error_recorded_last_and_positions_per_file() {
        let out = translate_str(&[("r.gt", "db 1"), ("p.src", "#print \"x\"\n#error \"stop\"")], &Options::default());
        assert!(out.result.is_err());
        let msgs: Vec<String> = out.diagnostics.iter().map(ToString::to_string).collect();
        assert_eq!(msgs, ["x", "p.src:2: stop"]);
    }

    #[test]
    fn lexical_error_reported() {
        let out = translate_str(&[("p", "db \"open")], &Options::default());
        assert_eq!(out.diagnostics.len(), 1);
        assert!(out.result.is_err());
    }
}
