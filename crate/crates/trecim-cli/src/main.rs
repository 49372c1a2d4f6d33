use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(trecim_cli::run(std::env::args_os()))
}
