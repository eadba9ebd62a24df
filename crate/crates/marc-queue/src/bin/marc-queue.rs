use std::process::ExitCode;

fn main() -> ExitCode {
    marc_queue::cli::main()
}
