use std::process::ExitCode;

fn main() -> ExitCode {
    maplet::cli::main()
}
