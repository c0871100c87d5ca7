use std::process::ExitCode;

fn configure_threads() -> Result<(), fisherwatch_cli::Failure> {
    let Ok(raw) = std::env::var("FISHERWATCH_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| fisherwatch_cli::Failure::input("threads", format!("FISHERWATCH_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| fisherwatch_cli::Failure::input("threads", e.to_string()))
}

fn main() -> ExitCode {
    if let Err(f) = configure_threads() {
        eprintln!("{}", f.line());
        return ExitCode::from(f.exit);
    }
    ExitCode::from(fisherwatch_cli::main_with_args(std::env::args_os()))
}
