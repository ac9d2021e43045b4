//! Derived constants frozen to CSV, with the mesh that produced them.
//!
//! The directory comes from `HALFEXT_FIXTURES`, falling back to the
//! `fixtures/` folder of this crate.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::extension::ExtensionOperator;
use crate::extremals::{extremal_profile, normalize_el, singular_constant, ExtremalKind, ExtremalSpec};
use crate::kernel::Dim;
use crate::rearrange::{riesz_gain, LatticeFn};
use crate::solver::{ascent_estimate_constant, SolverConfig};

pub const FIXTURE_ENV: &str = "HALFEXT_FIXTURES";
pub const FIXTURE_FILE: &str = "derived_constants.csv";

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("fixture i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("fixture csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("fixture {0} not found")]
    Missing(String),
    #[error(transparent)]
    Numerical(#[from] Error),
}

/// One derived value. `n_radial = n_heights = 0` marks values that do not
/// come from a half-space mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub name: String,
    pub n: usize,
    pub p: f64,
    pub value: f64,
    pub n_radial: usize,
    pub n_heights: usize,
    pub note: String,
}

pub fn fixture_dir() -> PathBuf {
    match std::env::var_os(FIXTURE_ENV) {
        Some(dir) => PathBuf::from(dir),
        None => Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures"),
    }
}

pub fn load(dir: &Path) -> Result<Vec<Fixture>, FixtureError> {
    let mut reader = csv::Reader::from_path(dir.join(FIXTURE_FILE))?;
    Ok(reader.deserialize().collect::<Result<Vec<Fixture>, _>>()?)
}

pub fn write(dir: &Path, fixtures: &[Fixture]) -> Result<PathBuf, FixtureError> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(FIXTURE_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    for f in fixtures {
        w.serialize(f)?;
    }
    w.flush()?;
    Ok(path)
}

pub fn lookup<'a>(fixtures: &'a [Fixture], name: &str, p: f64, n_radial: usize) -> Result<&'a Fixture, FixtureError> {
    fixtures
        .iter()
        .find(|f| f.name == name && (f.p - p).abs() < 1e-12 && f.n_radial == n_radial)
        .ok_or_else(|| FixtureError::Missing(format!("{name} (p = {p}, {n_radial} radial nodes)")))
}

/// Meshes on which the dual amplitude is recorded; it converges slowly.
pub const DUAL_MESHES: [(usize, usize); 3] = [(48, 24), (64, 32), (80, 40)];

/// Lattice and smoothing used for the two-bump rearrangement margin.
pub const TWO_BUMP: (f64, usize, f64, f64) = (0.1, 61, 1.0, 2.0);

pub fn two_bump_input() -> Result<LatticeFn, Error> {
    let (h, side, _, _) = TWO_BUMP;
    let bump = |x0: f64, x: f64, y: f64| (-((x - x0).powi(2) + y * y) / 0.16).exp();
    LatticeFn::from_fn(h, side, |x, y| bump(1.5, x, y) + bump(-1.5, x, y))
}

/// Recompute every fixture. Takes tens of seconds on one core.
pub fn generate() -> Result<Vec<Fixture>, FixtureError> {
    let n3 = Dim::new(3)?;
    let mut out = Vec::new();
    let fix = |name: &str, p: f64, value: f64, mesh: (usize, usize), note: &str| Fixture {
        name: name.into(),
        n: 3,
        p,
        value,
        n_radial: mesh.0,
        n_heights: mesh.1,
        note: note.into(),
    };

    let op = ExtensionOperator::standard(n3, 64, 32, 1.0)?;
    let conformal = extremal_profile(
        &ExtremalSpec::standard(n3, ExtremalKind::Conformal),
        op.boundary().clone(),
    )?;
    let a = normalize_el(&op, &conformal, 4.0)?;
    out.push(fix(
        "el_amplitude_conformal",
        4.0,
        a.amplitude,
        (64, 32),
        "closed form sqrt(6)",
    ));

    for mesh in DUAL_MESHES {
        let op = ExtensionOperator::standard(n3, mesh.0, mesh.1, 1.0)?;
        let dual = extremal_profile(&ExtremalSpec::standard(n3, ExtremalKind::Dual), op.boundary().clone())?;
        let a = normalize_el(&op, &dual, 4.0 / 3.0)?;
        out.push(fix("el_amplitude_dual", 4.0 / 3.0, a.amplitude, mesh, "mesh dependent"));
    }

    for p in [2.0, 4.0, 4.0 / 3.0] {
        let c = singular_constant(n3, p)?;
        out.push(fix(
            "singular_constant",
            p,
            c,
            (0, 0),
            "log-coordinate quadrature at r = 1",
        ));
    }

    let cfg = SolverConfig::default();
    let ascent = ascent_estimate_constant(&op, 2.0, 4, &cfg)?;
    out.push(fix(
        "ascent_constant",
        2.0,
        ascent.estimate,
        (64, 32),
        "4 trials, seed 0",
    ));

    let (_, side, t, q) = TWO_BUMP;
    let margin = riesz_gain(&two_bump_input()?, n3, t, q)?;
    out.push(fix(
        "riesz_two_bump_margin",
        q,
        margin,
        (side, 0),
        "lattice side in n_radial, h = 0.1, t = 1",
    ));
    Ok(out)
}
