use std::process::ExitCode;

fn main() -> ExitCode {
    sadovskii_cli::cli::main_with_args(std::env::args_os())
}
