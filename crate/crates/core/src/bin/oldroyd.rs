use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use oldroyd::diagnostics::{energy_ledger, positivity_report, relative_entropy};
use oldroyd::io::{parse_config_with_overrides, read_state, run};
use oldroyd::{Error, Result};

#[derive(Parser)]
#[command(name = "oldroyd", version, about = "Compressible power-law Oldroyd-B simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write its artifacts.
    Run {
        /// JSON configuration; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory, overriding `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// `key.path=value`, repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Report invariants of a snapshot set.
    Check { dir: PathBuf },
    /// Relative entropy of snapshot set `a` with respect to `b` (resampled onto a's grid).
    Entropy { a: PathBuf, b: PathBuf },
}

fn print(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            mut overrides,
        } => {
            let text = match config {
                Some(p) => fs::read_to_string(&p).map_err(|e| Error::config("", format!("{}: {e}", p.display())))?,
                None => "{}".into(),
            };
            if let Some(s) = seed {
                overrides.push(format!("seed={s}"));
            }
            if let Some(o) = out {
                overrides.push(format!("out_dir={}", serde_json::Value::String(o.display().to_string())));
            }
            let cfg = parse_config_with_overrides(&text, &overrides)?;
            let outcome = run(&cfg)?;
            print(&serde_json::to_value(&outcome.status).expect("status"));
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { dir } => {
            let s = read_state(&dir)?;
            let pos = positivity_report(&s);
            let ledger = energy_ledger(&s);
            print(&json!({
                "time": s.time,
                "admissible": pos.admissible(),
                "positivity": pos,
                "energy": ledger.energy(),
                "ledger": ledger,
            }));
            Ok(if pos.admissible() {
                ExitCode::SUCCESS
            } else if pos.max_div_u_b >= 1.0 {
                ExitCode::from(4)
            } else {
                ExitCode::from(1)
            })
        }
        Command::Entropy { a, b } => {
            let a = read_state(&a)?;
            let b = read_state(&b)?;
            let b = if b.grid() == a.grid() { b } else { b.resample(a.grid())? };
            print(&serde_json::to_value(relative_entropy(&a, &b)?).expect("report"));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
