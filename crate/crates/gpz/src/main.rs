use std::process::ExitCode;

fn main() -> ExitCode {
    gpz::cli::main_with_args(std::env::args_os())
}
