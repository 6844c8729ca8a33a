use std::process::ExitCode;

fn main() -> ExitCode {
    cjmap::cli::main_from(std::env::args_os())
}
