use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    match pelt_cli::run_from_args(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pelt: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
