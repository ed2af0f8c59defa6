mod cli;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

fn main() -> ExitCode {
    let args = cli::Cli::parse();
    let quiet = args.quiet;
    match cli::run(args) {
        Ok(outcome) => {
            if !quiet {
                let text = serde_json::to_string_pretty(&outcome.summary).unwrap_or_default();
                let _ = writeln!(std::io::stdout(), "{text}");
            }
            if outcome.failed > 0 {
                eprintln!(
                    "{}",
                    json!({"error": "cells_failed", "failed": outcome.failed, "message": format!("{} cells failed", outcome.failed)})
                );
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(err) => {
            let kind = err
                .downcast_ref::<distreg::Error>()
                .map_or("error", distreg::Error::kind);
            eprintln!("{}", json!({"error": kind, "message": format!("{err:#}")}));
            ExitCode::FAILURE
        }
    }
}
