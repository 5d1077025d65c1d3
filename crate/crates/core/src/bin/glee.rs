use std::process::ExitCode;

fn main() -> ExitCode {
    glee::cli::main_with_args(std::env::args_os())
}
