use std::process::ExitCode;

fn main() -> ExitCode {
    merge_sim::cli::main()
}
