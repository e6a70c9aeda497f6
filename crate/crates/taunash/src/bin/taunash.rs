use std::process::ExitCode;

fn main() -> ExitCode {
    taunash::cli::main()
}
