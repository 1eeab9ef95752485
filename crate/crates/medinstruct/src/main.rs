use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(medinstruct::cli::run(std::env::args_os()).code())
}
