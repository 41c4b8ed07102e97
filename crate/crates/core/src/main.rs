use std::process::ExitCode;

fn main() -> ExitCode {
    qmspline::cli::main_entry()
}
