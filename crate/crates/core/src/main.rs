use std::process::ExitCode;

use gentrans::cli::{parse_args, translate, ParsedArgs};

fn main() -> ExitCode {
    let config = match parse_args(std::env::args_os()) {
        ParsedArgs::Run(c) => c,
        ParsedArgs::Exit { message, code } => {
            if code == 0 {
                print!("{message}");
            } else {
                eprint!("{message}");
            }
            return ExitCode::from(code as u8);
        }
    };
    let report = translate(&config);
    for d in &report.diagnostics {
        eprintln!("{d}");
    }
    ExitCode::from(report.status.exit_code() as u8)
}
