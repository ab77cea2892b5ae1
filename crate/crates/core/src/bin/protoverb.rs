use std::process::ExitCode;

fn main() -> ExitCode {
    protoverb::cli::main()
}
