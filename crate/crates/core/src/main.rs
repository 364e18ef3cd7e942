use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(pinning::cli::run(std::env::args_os()))
}
