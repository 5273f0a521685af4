use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gt_adaptive::error::Error;
use gt_adaptive::runner::{self, ExperimentConfig};
use serde_json::Value;

const EXIT_CONFIG: u8 = 2;
const EXIT_VERIFY: u8 = 3;
const EXIT_DIVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "gtadapt", version, about = "Distributed adaptive gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (algorithm, seed) pair and write CSV/JSON outputs.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output.directory`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dotted `key=value` assignment applied before validation.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Short instrumented run checking the exact relations and path-wise bounds.
    Verify {
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Analysis constants and the feasible stepsize interval.
    Constants {
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::NonFiniteState { .. } => EXIT_DIVERGED,
        _ => EXIT_CONFIG,
    }
}

fn load(config: &PathBuf, overrides: &[String]) -> Result<ExperimentConfig, Error> {
    runner::load_config(config, overrides)
}

fn dispatch(command: Command) -> Result<u8, Error> {
    match command {
        Command::Run { config, out, overrides } => {
            let mut cfg = load(&config, &overrides)?;
            if out.is_some() {
                cfg.output.directory = out;
            }
            let outcome = runner::run_experiment(&cfg)?;
            for a in &outcome.summary.algorithms {
                match a.final_gap_mean {
                    Some(g) => println!("{:<22} final_gap_mean = {g:.6e}", a.id.to_string()),
                    None => println!("{:<22} all seeds failed", a.id.to_string()),
                }
            }
            let mut code = 0;
            for f in outcome.failures() {
                if let Err(e) = &f.result {
                    eprintln!("{} seed {}: {e}", f.method, f.seed);
                    code = code.max(exit_code(e));
                }
            }
            if let Some(dir) = &cfg.output.directory {
                println!("outputs written to {}", dir.display());
            }
            Ok(code)
        }
        Command::Verify { config, overrides, format } => {
            let cfg = load(&config, &overrides)?;
            let report = runner::verify_suite(&cfg)?;
            match format {
                Format::Text => print!("{}", report.to_text()),
                Format::Json => println!("{}", to_json(&report)?),
            }
            Ok(if report.passes() { 0 } else { EXIT_VERIFY })
        }
        Command::Constants { config, overrides, format } => {
            let cfg = load(&config, &overrides)?;
            let entries = runner::constants_report(&cfg)?;
            let values: Vec<Value> = entries
                .iter()
                .map(|(spec, tc, feas)| {
                    serde_json::json!({
                        "algorithm": spec,
                        "constants": tc,
                        "feasibility": feas,
                        "alpha_interval": [0.0, feas.alpha_max],
                    })
                })
                .collect();
            match format {
                Format::Json => println!("{}", to_json(&values)?),
                Format::Text => {
                    for (k, v) in values.iter().enumerate() {
                        if k > 0 {
                            println!();
                        }
                        let mut lines = Vec::new();
                        flatten("", v, &mut lines);
                        for (key, val) in lines {
                            println!("{key} = {val}");
                        }
                    }
                }
            }
            Ok(0)
        }
    }
}

fn to_json<T: serde::Serialize + ?Sized>(v: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Internal(e.to_string()))
}

/// Dotted `key = value` lines for a JSON tree.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                flatten(&join(k), child, out);
            }
        }
        Value::Array(items) => {
            for (k, child) in items.iter().enumerate() {
                flatten(&join(&k.to_string()), child, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}
