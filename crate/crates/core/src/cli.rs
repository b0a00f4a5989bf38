//! Command-line driver: argument parsing, file handling, output formats and
//! exit codes.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::dest_phase::{EmitImage, Endian};
use crate::diag::Diagnostic;
use crate::error::{Error, ErrorKind, Result};
use crate::expr::{self, SymbolTable, Value};
use crate::lexer::{decode_latin1, tokenize, tokenize_source, Pos};
use crate::pipeline::{run_pipeline, Options, Translation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Raw,
    Hex,
    Listing,
}

#[derive(Debug, Parser)]
#[command(name = "gentrans", version, about = "Two-level rule-driven translator: source text to binary image")]
struct Args {
    /// Rule file, processed before the input; repeatable, in order.
    #[arg(long = "rules", value_name = "PATH")]
    rules: Vec<PathBuf>,
    /// Source input, `-` for stdin.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Output file, `-` for stdout.
    #[arg(long = "out", value_name = "PATH", default_value = "-")]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Raw)]
    format: Format,
    #[arg(long, value_enum, default_value_t = Endian::Little)]
    endian: Endian,
    /// Preset symbol for both phases; VALUE is an expression.
    #[arg(long = "define", value_name = "NAME=VALUE")]
    defines: Vec<String>,
    /// Iteration cap for every loop.
    #[arg(long, value_name = "N", default_value_t = Options::default().max_loop)]
    max_loop: u64,
    /// Class expansion nesting cap.
    #[arg(long, value_name = "N", default_value_t = Options::default().max_depth)]
    max_depth: usize,
    /// Label-resolution pass cap.
    #[arg(long, value_name = "N", default_value_t = Options::default().max_passes)]
    max_passes: usize,
    /// Reject data values that do not fit their unit.
    #[arg(long)]
    strict_overflow: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslatorConfig {
    pub rules: Vec<PathBuf>,
    pub input: PathBuf,
    pub output: PathBuf,
    pub format: Format,
    pub options: Options,
}

/// Outcome of `parse_args`: either a config, or text for `--help` /
/// `--version` / usage errors together with the exit code to use.
#[derive(Debug)]
pub enum ParsedArgs {
    Run(TranslatorConfig),
    Exit { message: String, code: i32 },
}

pub fn parse_args<I, T>(argv: I) -> ParsedArgs
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { Status::UserError.exit_code() } else { 0 };
            return ParsedArgs::Exit { message: e.render().to_string(), code };
        }
    };
    match config_from(args) {
        Ok(c) => ParsedArgs::Run(c),
        Err(e) => ParsedArgs::Exit { message: format!("error: {e}\n"), code: Status::UserError.exit_code() },
    }
}

fn config_from(args: Args) -> Result<TranslatorConfig> {
    let mut defines: Vec<(String, Value)> = Vec::new();
    for d in &args.defines {
        let (name, value) = parse_define(d, &defines)?;
        defines.push((name, value));
    }
    Ok(TranslatorConfig {
        rules: args.rules,
        input: args.input,
        output: args.output,
        format: args.format,
        options: Options {
            endian: args.endian,
            strict_overflow: args.strict_overflow,
            max_loop: args.max_loop,
            max_depth: args.max_depth,
            max_passes: args.max_passes,
            defines,
        },
    })
}

/// `NAME=EXPR`; the expression may use earlier presets.
fn parse_define(text: &str, earlier: &[(String, Value)]) -> Result<(String, Value)> {
    let bad = |why: &str| Error::bare(ErrorKind::Config(format!("--define `{text}`: {why}")));
    let (name, value) = text.split_once('=').ok_or_else(|| bad("expected NAME=VALUE"))?;
    let name = name.trim();
    let pos = Pos::new("--define", 1, 1);
    let name_toks = tokenize(name, &pos).map_err(|_| bad("invalid name"))?;
    match name_toks.as_slice() {
        [t] if t.is_ident(name) => {}
        _ => return Err(bad("invalid name")),
    }
    let mut env = SymbolTable::new();
    for (n, v) in earlier {
        env.assign(n, v.clone());
    }
    let toks = tokenize(value, &pos).map_err(|e| bad(&e.kind.to_string()))?;
    let v = expr::eval(&toks, &env).map_err(|e| bad(&e.kind.to_string()))?;
    Ok((name.to_string(), v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    UserError,
    InternalError,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::UserError => 1,
            Status::InternalError => 2,
        }
    }

    fn of(e: &Error) -> Status {
        if e.is_internal() {
            Status::InternalError
        } else {
            Status::UserError
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub status: Status,
    pub byte_count: usize,
    pub diagnostics: Vec<Diagnostic>,
}

impl RunReport {
    fn failed(e: Error, mut diagnostics: Vec<Diagnostic>) -> RunReport {
        let status = Status::of(&e);
        diagnostics.push(Diagnostic::Error(e));
        RunReport { status, byte_count: 0, diagnostics }
    }
}

fn io_err(path: &std::path::Path, e: std::io::Error) -> Error {
    Error::bare(ErrorKind::Io(format!("{}: {e}", path.display())))
}

fn is_stdio(path: &std::path::Path) -> bool {
    path.as_os_str() == "-"
}

/// Run the translation with the input text already loaded. Returns the
/// report and, on success, the formatted output.
pub fn translate_loaded(
    config: &TranslatorConfig,
    rules: &[(String, Vec<u8>)],
    input: (&str, &[u8]),
) -> (RunReport, Option<Vec<u8>>) {
    let mut lines = Vec::new();
    for (name, bytes) in rules.iter().map(|(n, b)| (n.as_str(), b.as_slice())).chain(std::iter::once(input)) {
        match tokenize_source(&decode_latin1(bytes), name) {
            Ok(ls) => lines.extend(ls),
            Err(e) => return (RunReport::failed(e, Vec::new()), None),
        }
    }
    let outcome = run_pipeline(&lines, &config.options);
    match outcome.result {
        Ok(t) => {
            let report = RunReport { status: Status::Ok, byte_count: t.image.len(), diagnostics: outcome.diagnostics };
            (report, Some(format_translation(&t, config.format)))
        }
        Err(e) => {
            let status = Status::of(&e);
            (RunReport { status, byte_count: 0, diagnostics: outcome.diagnostics }, None)
        }
    }
}

/// Read inputs, translate, write the output. Nothing is written unless the
/// translation succeeds.
pub fn translate(config: &TranslatorConfig) -> RunReport {
    let mut rules = Vec::new();
    for path in &config.rules {
        match std::fs::read(path) {
            Ok(b) => rules.push((path.display().to_string(), b)),
            Err(e) => return RunReport::failed(io_err(path, e), Vec::new()),
        }
    }
    let input = if is_stdio(&config.input) {
        let mut buf = Vec::new();
        if let Err(e) = std::io::stdin().read_to_end(&mut buf) {
            return RunReport::failed(io_err(&config.input, e), Vec::new());
        }
        ("<stdin>".to_string(), buf)
    } else {
        match std::fs::read(&config.input) {
            Ok(b) => (config.input.display().to_string(), b),
            Err(e) => return RunReport::failed(io_err(&config.input, e), Vec::new()),
        }
    };
    let (mut report, output) = translate_loaded(config, &rules, (&input.0, &input.1));
    if let Some(bytes) = output {
        let written = if is_stdio(&config.output) {
            let mut out = std::io::stdout().lock();
            out.write_all(&bytes).and_then(|_| out.flush())
        } else {
            std::fs::write(&config.output, &bytes)
        };
        if let Err(e) = written {
            report.status = Status::UserError;
            report.diagnostics.push(Diagnostic::Error(io_err(&config.output, e)));
        }
    }
    report
}

fn format_translation(t: &Translation, format: Format) -> Vec<u8> {
    format_output(&t.image, format)
}

pub fn format_output(image: &EmitImage, format: Format) -> Vec<u8> {
    match format {
        Format::Raw => image.bytes.clone(),
        Format::Hex => hex_dump(&image.bytes).into_bytes(),
        Format::Listing => listing(image).into_bytes(),
    }
}

/// `OFFSET: HH HH ...  |ascii|`, 16 bytes per line.
pub fn hex_dump(bytes: &[u8]) -> String {
    let mut out = String::new();
    for (row, chunk) in bytes.chunks(16).enumerate() {
        let hex: Vec<String> = chunk.iter().map(|b| format!("{b:02X}")).collect();
        let ascii: String =
            chunk.iter().map(|&b| if b.is_ascii_graphic() || b == b' ' { b as char } else { '.' }).collect();
        let _ = writeln!(out, "{:08X}: {:<47}  |{ascii}|", row * 16, hex.join(" "));
    }
    out
}

const LISTING_ROW: usize = 8;

/// Each stream line that defined a label or emitted bytes, next to its
/// offset and bytes, followed by the label table.
pub fn listing(image: &EmitImage) -> String {
    let mut out = String::new();
    let width = LISTING_ROW * 3 - 1;
    for span in &image.spans {
        let bytes = &image.bytes[span.offset..span.offset + span.len];
        let mut rows = bytes.chunks(LISTING_ROW);
        let first = rows.next().unwrap_or(&[]);
        let _ = writeln!(out, "{:08X}  {:<width$}  {}", span.offset, hex_row(first), span.text);
        for (i, row) in rows.enumerate() {
            let _ = writeln!(out, "{:08X}  {}", span.offset + (i + 1) * LISTING_ROW, hex_row(row));
        }
    }
    if !image.labels.is_empty() {
        out.push_str("\nlabels:\n");
        for (name, offset) in &image.labels {
            let _ = writeln!(out, "{offset:08X}  {name}");
        }
    }
    out
}

fn hex_row(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02X}")).collect::<Vec<_>>().join(" ")
}
