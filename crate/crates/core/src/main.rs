use std::process::ExitCode;

use clap::Parser;
use skewgraph::cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            for (k, v) in &outcome.summary {
                println!("{k}={v}");
            }
            for f in &outcome.files {
                eprintln!("wrote {}", f.display());
            }
            if outcome.validation_failed {
                eprintln!("error: validation failed");
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
