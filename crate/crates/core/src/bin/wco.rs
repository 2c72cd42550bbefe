use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    let code = wco_centered::cli::run(std::env::args_os(), &mut io::stdout(), &mut io::stderr());
    ExitCode::from(code as u8)
}
