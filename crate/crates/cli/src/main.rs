mod config;
mod experiments;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use halfext::fixtures::{self, FixtureError};
use serde_json::{json, Value};
use thiserror::Error;

use config::{ExperimentConfig, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Numerical(#[from] halfext::error::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Fixture(#[from] FixtureError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "halfext",
    version,
    about = "Numerical experiments on half-space extension inequalities"
)]
struct Cli {
    /// Recompute the derived-constant fixtures and exit
    #[arg(long)]
    regen_fixtures: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write summary.json (plus CSVs) to --out
    Run {
        experiment: String,
        /// JSON file with the same keys as the flags (snake_case)
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("halfext: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// `Ok(false)` when the experiment ran but a check failed.
fn dispatch(cli: Cli) -> Result<bool, CliError> {
    if cli.regen_fixtures {
        let dir = fixtures::fixture_dir();
        let path = fixtures::write(&dir, &fixtures::generate()?)?;
        println!("wrote {}", path.display());
        return Ok(true);
    }
    let Some(Command::Run {
        experiment,
        config,
        overrides,
    }) = cli.command
    else {
        return Err(CliError::Usage("nothing to do; try `halfext run <experiment>`".into()));
    };
    let cfg = ExperimentConfig::resolve(&experiment, config.as_deref(), overrides)?;
    let threads = if cfg.reproducible { Some(1) } else { cfg.threads };
    if let Some(t) = threads {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    std::fs::create_dir_all(&cfg.out)?;
    let started = Instant::now();
    let outcome = experiments::run(&cfg);
    write_metadata(&cfg, started.elapsed().as_secs_f64())?;
    match outcome {
        Ok(report) => {
            let pass = report.checks.iter().all(|c| c.pass);
            let summary = summary(&cfg, pass, &report);
            write_json(&cfg.out.join("summary.json"), &summary)?;
            if let Some(csv) = &report.trace_csv {
                std::fs::write(cfg.out.join("trace.csv"), csv)?;
            }
            if let Some(csv) = &report.profile_csv {
                std::fs::write(cfg.out.join("profile.csv"), csv)?;
            }
            for c in &report.checks {
                println!(
                    "{} {} = {:.6e} {} {:.1e}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.relation,
                    c.limit
                );
            }
            Ok(pass)
        }
        Err(e) => {
            write_json(&cfg.out.join("summary.json"), &diagnostic(&cfg, &e))?;
            Err(e.into())
        }
    }
}

fn summary(cfg: &ExperimentConfig, pass: bool, report: &experiments::Report) -> BTreeMap<String, Value> {
    let mut out: BTreeMap<String, Value> = report.values.clone();
    out.insert("experiment".into(), json!(cfg.experiment));
    out.insert("pass".into(), json!(pass));
    out.insert("checks".into(), json!(report.checks));
    out.insert("config".into(), json!(cfg));
    out.insert(
        "grid".into(),
        json!({
            "n_radial": cfg.grid_n,
            "n_heights": cfg.grid_heights,
            "scale": cfg.grid_scale,
            "mapping": "tan",
            "quad_order": cfg.quad_order,
        }),
    );
    out
}

fn diagnostic(cfg: &ExperimentConfig, e: &halfext::error::Error) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    out.insert("experiment".to_string(), json!(cfg.experiment));
    out.insert("pass".to_string(), json!(false));
    out.insert("error".to_string(), json!(e.to_string()));
    out.insert("config".to_string(), json!(cfg));
    out
}

/// Wall-clock facts live apart from summary.json so that it stays byte-stable.
fn write_metadata(cfg: &ExperimentConfig, seconds: f64) -> Result<(), CliError> {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = json!({
        "unix_time": stamp,
        "elapsed_seconds": seconds,
        "threads": rayon::current_num_threads(),
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": cfg.experiment,
    });
    write_json(&cfg.out.join("metadata.json"), &meta)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.into()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failures_leave_a_diagnostic() {
        let cfg = ExperimentConfig::resolve("verify-kernel", None, Overrides::default()).unwrap();
        let err = halfext::error::Error::Divergence("residual became NaN".into());
        let diag = diagnostic(&cfg, &err);
        assert_eq!(diag["pass"], json!(false));
        assert!(diag["error"].as_str().unwrap().contains("NaN"));
        assert_eq!(diag["config"]["n"], json!(3));
        assert_eq!(CliError::from(err).exit_code(), 1);
        assert_eq!(CliError::Usage("x".into()).exit_code(), 2);
    }

    #[test]
    fn config_defaults_follow_the_dimension() {
        let flags = Overrides {
            n: Some(4),
            ..Overrides::default()
        };
        let cfg = ExperimentConfig::resolve("solve-el", None, flags).unwrap();
        assert_eq!(cfg.p, 3.0);
        assert_eq!(cfg.grid_heights, 32);
        let bad = Overrides {
            p: Some(1.0),
            ..Overrides::default()
        };
        assert!(matches!(
            ExperimentConfig::resolve("solve-el", None, bad),
            Err(CliError::Usage(_))
        ));
        let two = Overrides {
            n: Some(2),
            ..Overrides::default()
        };
        assert!(ExperimentConfig::resolve("rearrange-demo", None, two).is_err());
    }
}
