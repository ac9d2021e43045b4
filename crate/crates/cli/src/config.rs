//! Resolved experiment configuration: defaults, then the JSON file, then flags.

use std::path::{Path, PathBuf};

use clap::Args;
use halfext::kernel::Dim;
use halfext::solver::{InitKind, Normalization, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const EXPERIMENTS: [&str; 8] = [
    "verify-kernel",
    "verify-identities",
    "weak-type-sweep",
    "estimate-constant",
    "solve-el",
    "rearrange-demo",
    "classify-radial",
    "conformal-invariance",
];

/// Settings shared by the config file and the command line. Every field is
/// optional so that a flag only overrides what it names.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Half-space dimension
    #[arg(long)]
    pub n: Option<usize>,
    /// Boundary exponent
    #[arg(long)]
    pub p: Option<f64>,
    /// Radial nodes; the height mesh gets half as many
    #[arg(long)]
    pub grid_n: Option<usize>,
    /// Angular Gauss–Legendre order of the ring kernel
    #[arg(long)]
    pub quad_order: Option<usize>,
    /// Random trials (ascent starts, random rearrangement inputs)
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads
    #[arg(long)]
    pub threads: Option<usize>,
    /// Single-threaded, deterministic run
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub reproducible: Option<bool>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Initial profile for solve-el: gaussian, compact-bump or wrong-family
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol_residual: Option<f64>,
    #[arg(long)]
    pub damping: Option<f64>,
    /// mass_half or unit_lp
    #[arg(long, value_parser = parse_normalization)]
    pub normalization: Option<Normalization>,
}

fn parse_normalization(s: &str) -> Result<Normalization, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

impl Overrides {
    fn merge(self, top: Overrides) -> Overrides {
        Overrides {
            n: top.n.or(self.n),
            p: top.p.or(self.p),
            grid_n: top.grid_n.or(self.grid_n),
            quad_order: top.quad_order.or(self.quad_order),
            trials: top.trials.or(self.trials),
            seed: top.seed.or(self.seed),
            threads: top.threads.or(self.threads),
            reproducible: top.reproducible.or(self.reproducible),
            out: top.out.or(self.out),
            init: top.init.or(self.init),
            max_iters: top.max_iters.or(self.max_iters),
            tol_residual: top.tol_residual.or(self.tol_residual),
            damping: top.damping.or(self.damping),
            normalization: top.normalization.or(self.normalization),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub n: usize,
    pub p: f64,
    pub grid_n: usize,
    pub grid_heights: usize,
    pub grid_scale: f64,
    pub quad_order: usize,
    pub trials: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub reproducible: bool,
    #[serde(skip)]
    pub out: PathBuf,
    pub init: InitKind,
    pub solver: SolverConfig,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Default exponent: the conformal one where it exists.
fn default_p(n: usize) -> f64 {
    if n >= 3 {
        2.0 * (n as f64 - 1.0) / (n as f64 - 2.0)
    } else {
        2.0
    }
}

impl ExperimentConfig {
    pub fn resolve(experiment: &str, file: Option<&Path>, flags: Overrides) -> Result<Self, CliError> {
        if !EXPERIMENTS.contains(&experiment) {
            return Err(usage(format!(
                "unknown experiment '{experiment}'; expected one of {}",
                EXPERIMENTS.join(", ")
            )));
        }
        let from_file = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
                serde_json::from_str::<Overrides>(&text)
                    .map_err(|e| usage(format!("bad config {}: {e}", path.display())))?
            }
            None => Overrides::default(),
        };
        let o = from_file.merge(flags);
        let n = o.n.unwrap_or(3);
        Dim::new(n).map_err(|e| usage(e.to_string()))?;
        let grid_n = o.grid_n.unwrap_or(64);
        let defaults = SolverConfig::default();
        let solver = SolverConfig {
            max_iters: o.max_iters.unwrap_or(defaults.max_iters),
            tol_residual: o.tol_residual.unwrap_or(defaults.tol_residual),
            damping: o.damping.unwrap_or(defaults.damping),
            normalization: o.normalization.unwrap_or(defaults.normalization),
            seed: o.seed.unwrap_or(0),
        };
        solver.validate().map_err(|e| usage(e.to_string()))?;
        let init = match &o.init {
            Some(s) => s.parse::<InitKind>().map_err(|e| usage(e.to_string()))?,
            None => InitKind::Gaussian,
        };
        let cfg = ExperimentConfig {
            experiment: experiment.to_string(),
            n,
            p: o.p.unwrap_or(default_p(n)),
            grid_n,
            grid_heights: (grid_n / 2).max(16),
            grid_scale: 1.0,
            quad_order: o.quad_order.unwrap_or(64),
            trials: o.trials.unwrap_or(8),
            seed: o.seed.unwrap_or(0),
            threads: o.threads,
            reproducible: o.reproducible.unwrap_or(false),
            out: o.out.unwrap_or_else(|| PathBuf::from("halfext-out")),
            init,
            solver,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parameter domain of each experiment.
    fn validate(&self) -> Result<(), CliError> {
        if self.grid_n < 16 {
            return Err(usage("--grid-n must be at least 16"));
        }
        if self.quad_order < 32 {
            return Err(usage("--quad-order must be at least 32"));
        }
        if self.threads == Some(0) {
            return Err(usage("--threads must be at least 1"));
        }
        if !(self.p.is_finite() && self.p > 1.0) {
            return Err(usage(format!("--p must satisfy 1 < p < ∞, got {}", self.p)));
        }
        let needs = |cond: bool, msg: &str| if cond { Ok(()) } else { Err(usage(msg.to_string())) };
        match self.experiment.as_str() {
            "verify-identities" | "conformal-invariance" => needs(self.n >= 3, "this experiment needs --n >= 3"),
            "estimate-constant" | "solve-el" => {
                needs(self.n >= 3, "this experiment needs --n >= 3")?;
                needs(self.trials >= 1, "--trials must be at least 1")
            }
            "rearrange-demo" => {
                needs(self.n == 3, "rearrange-demo runs in n = 3 only")?;
                needs(self.trials >= 1, "--trials must be at least 1")
            }
            _ => Ok(()),
        }
    }
}
