use std::process::ExitCode;

use clap::Parser;
use ddx_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = cli.resolve().and_then(|config| run(&config));
    match result {
        Ok(outcome) => {
            println!("{}: {}", outcome.scenario, outcome.verdict);
            println!("wrote {} and {}", outcome.csv.display(), outcome.provenance.display());
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
