use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(gapscore_cli::run(std::env::args_os()))
}
