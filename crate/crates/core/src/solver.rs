//! Damped fixed-point iteration for the Euler–Lagrange equation, ascent
//! estimates of the best constant, the mass-half dilation gauge and the
//! symmetry classifiers for inverted solutions.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_domain, Error, Result};
use crate::extension::{Basis, ExtensionOperator};
use crate::extremals::{best_scale, el_parts, el_parts_with, target_exponent, ExtremalKind, ExtremalSpec};
use crate::grids::{ball_mass, lp_norm_boundary, lp_norm_halfspace, PolarSamples, RadialFn, RadialGrid};
use crate::kernel::Dim;

/// Relative least-squares residual accepted by [`classify_inverted_radial`].
pub const CLASSIFY_FIT_TOL: f64 = 1e-6;
/// `|c₂| < PURE_POWER_TOL·c₁·r_max²` counts as a pure power.
pub const PURE_POWER_TOL: f64 = 1e-8;
/// Residual above which iterates count as rough: they are pushed through the
/// local-stencil rows, which keep the ripples of a kinked start from
/// reaching the far field. Below it the spectral rows take over.
pub const ROUGH_PHASE_RESIDUAL: f64 = 1e-2;
/// Iterations over which a tenfold residual growth is declared divergence.
pub const DIVERGENCE_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `‖f‖_p = 1` only; leaves the dilation free.
    UnitLp,
    /// `‖f‖_p = 1` and half the `L^p` mass inside the unit ball.
    MassHalf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tol_residual: f64,
    pub damping: f64,
    pub normalization: Normalization,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 400,
            tol_residual: 1e-6,
            damping: 0.5,
            normalization: Normalization::MassHalf,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_domain!(self.tol_residual > 0.0, "tol_residual must be positive");
        ensure_domain!(
            self.damping > 0.0 && self.damping <= 1.0,
            "damping must lie in (0, 1], got {}",
            self.damping
        );
        ensure_domain!(self.max_iters >= 1, "max_iters must be at least 1");
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub residual: f64,
    pub rayleigh: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
    pub fn max_rayleigh(&self) -> Option<f64> {
        self.records
            .iter()
            .map(|r| r.rayleigh)
            .filter(|r| r.is_finite())
            .reduce(f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,residual,rayleigh,lambda\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{:e},{:e},{:e}", r.iter, r.residual, r.rayleigh, r.lambda);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// Last iterate, normalized per the configuration.
    pub profile: RadialFn,
    pub trace: IterationTrace,
    pub status: Termination,
}

/// A failed solve, carrying the trace up to the failure.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{error}")]
pub struct SolveFailure {
    pub error: Error,
    pub trace: IterationTrace,
}

impl From<Error> for SolveFailure {
    fn from(error: Error) -> Self {
        SolveFailure {
            error,
            trace: IterationTrace::default(),
        }
    }
}

/// The undamped map `f ↦ [T((Pf)^{q−1})]^{1/(p−1)}`.
pub fn el_map(op: &ExtensionOperator, f: &RadialFn, p: f64) -> Result<RadialFn> {
    let (_, rhs, _) = el_parts(op, f, p)?;
    let values = rhs.iter().map(|v| v.max(0.0).powf(1.0 / (p - 1.0))).collect();
    RadialFn::new(f.grid().clone(), values)
}

/// Damped fixed-point iteration for `f^{p−1} = T((Pf)^{q−1})`. The residual
/// recorded per step is the scale-free one: the equation is homogeneous of
/// different degrees on the two sides, so the amplitude is fixed afterwards
/// by [`crate::extremals::normalize_el`].
pub fn el_fixed_point(
    op: &ExtensionOperator,
    p: f64,
    init: &RadialFn,
    cfg: &SolverConfig,
) -> std::result::Result<Solution, SolveFailure> {
    cfg.validate()?;
    ensure_nonnegative_nonzero(init)?;
    let mut trace = IterationTrace::default();
    let fail = |error: Error, trace: &IterationTrace| SolveFailure {
        error,
        trace: trace.clone(),
    };
    let (mut f, mut lambda) = gauge(init, p, cfg.normalization, false).map_err(|e| fail(e, &trace))?;
    let q = target_exponent(op.n(), p);
    let mut basis = Basis::Local;
    for iter in 1..=cfg.max_iters {
        let (mut lhs, mut rhs, mut pf) = el_parts_with(op, &f, p, Some(basis)).map_err(|e| fail(e, &trace))?;
        let (_, mut residual) = best_scale(&lhs, &rhs);
        if basis == Basis::Local && residual <= ROUGH_PHASE_RESIDUAL {
            basis = Basis::Spectral;
            (lhs, rhs, pf) = el_parts_with(op, &f, p, Some(basis)).map_err(|e| fail(e, &trace))?;
            residual = best_scale(&lhs, &rhs).1;
        }
        let rayleigh = lp_norm_halfspace(&pf, q)
            .and_then(|a| Ok(a / lp_norm_boundary(&f, p)?))
            .unwrap_or(f64::NAN);
        trace.records.push(IterationRecord {
            iter,
            residual,
            rayleigh,
            lambda,
        });
        if residual <= cfg.tol_residual {
            let (profile, _) = gauge(&f, p, cfg.normalization, true).map_err(|e| fail(e, &trace))?;
            return Ok(Solution {
                profile,
                trace,
                status: Termination::Converged,
            });
        }
        if let Some(error) = divergence(&trace) {
            return Err(fail(error, &trace));
        }
        let image: Vec<f64> = rhs.iter().map(|v| v.max(0.0).powf(1.0 / (p - 1.0))).collect();
        let image = RadialFn::new(f.grid().clone(), image).map_err(|e| fail(e, &trace))?;
        let image = image.scaled(1.0 / quadrature_norm(&image, p));
        let mixed: Vec<f64> = f
            .values()
            .iter()
            .zip(image.values())
            .map(|(a, b)| (1.0 - cfg.damping) * a + cfg.damping * b)
            .collect();
        let mixed = RadialFn::new(f.grid().clone(), mixed).map_err(|e| fail(e, &trace))?;
        (f, lambda) = gauge(&mixed, p, cfg.normalization, false).map_err(|e| fail(e, &trace))?;
    }
    let (profile, _) = gauge(&f, p, cfg.normalization, true).map_err(|e| fail(e, &trace))?;
    Ok(Solution {
        profile,
        trace,
        status: Termination::MaxIters,
    })
}

/// Divergence verdict on a trace: a non-finite residual, or tenfold growth
/// over [`DIVERGENCE_WINDOW`] iterations.
pub fn divergence(trace: &IterationTrace) -> Option<Error> {
    let last = trace.last()?;
    if !last.residual.is_finite() {
        return Some(Error::Divergence(format!(
            "residual became {} at step {}",
            last.residual, last.iter
        )));
    }
    let k = trace.len();
    if k > DIVERGENCE_WINDOW {
        let earlier = trace.records[k - 1 - DIVERGENCE_WINDOW].residual;
        if last.residual > 10.0 * earlier {
            return Some(Error::Divergence(format!(
                "residual grew from {earlier:.3e} to {:.3e} over {DIVERGENCE_WINDOW} steps",
                last.residual
            )));
        }
    }
    None
}

fn ensure_nonnegative_nonzero(f: &RadialFn) -> Result<()> {
    ensure_domain!(f.is_nonnegative(), "initial profile must be nonnegative");
    ensure_domain!(f.values().iter().any(|&v| v > 0.0), "initial profile must be nonzero");
    Ok(())
}

/// Iterates are re-dilated only once their mass-half parameter leaves
/// `[1/GAUGE_BAND, GAUGE_BAND]`: the map commutes with dilations, and each
/// dilation re-interpolates the profile.
const GAUGE_BAND: f64 = 2.0;

/// Scales `f` to unit norm and, under `MassHalf`, dilates it when forced or
/// out of band. Returns the mass-half parameter of `f` itself.
fn gauge(f: &RadialFn, p: f64, mode: Normalization, force: bool) -> Result<(RadialFn, f64)> {
    let unit = f.scaled(1.0 / quadrature_norm(f, p));
    let lambda = mass_half_lambda(&unit, p)?;
    let dilate = mode == Normalization::MassHalf && (force || lambda.ln().abs() > GAUGE_BAND.ln());
    Ok((
        if dilate {
            dilate_nonnegative(&unit, lambda, p)
        } else {
            unit
        },
        lambda,
    ))
}

/// `‖f‖_p` by the grid rule alone. Iterates are normalized with this rather
/// than the tail-checked norm: interpolation noise from rough starting data
/// can fake a slow decay at the outermost nodes for a step or two, and
/// divergence of the iteration is judged by its residual.
fn quadrature_norm(f: &RadialFn, p: f64) -> f64 {
    let g: Vec<f64> = f.values().iter().map(|v| v.abs().powf(p)).collect();
    (f.grid().sphere_area() * f.grid().integrate(&g)).powf(1.0 / p)
}

/// `λ` such that `f^{λ,0} = λ^{−d/p} f(·/λ)`, after scaling to unit `L^p`
/// norm, carries exactly half its `L^p` mass in the unit ball.
pub fn normalize_mass_half(f: &RadialFn, p: f64) -> Result<(f64, RadialFn)> {
    ensure_domain!(p >= 1.0 && p.is_finite(), "mass gauge needs finite p >= 1");
    let norm = lp_norm_boundary(f, p)?;
    ensure_domain!(norm > 0.0, "mass gauge of the zero function");
    let unit = f.scaled(1.0 / norm);
    let lambda = mass_half_lambda(&unit, p)?;
    Ok((lambda, dilate_nonnegative(&unit, lambda, p)))
}

fn mass_half_lambda(unit: &RadialFn, p: f64) -> Result<f64> {
    let half = 0.5 * ball_mass(unit, p, f64::INFINITY);
    let phi = |r: f64| ball_mass(unit, p, r);
    let (mut lo, mut hi) = (1e-8f64.ln(), 1e8f64.ln());
    if !(half > 0.0) || phi(lo.exp()) >= half || phi(hi.exp()) <= half {
        return Err(Error::Numerical(
            "concentration function is flat across the grid".into(),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid.exp()) < half {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok((-0.5 * (lo + hi)).exp())
}

// Interpolating a profile with a kink can overshoot below zero.
fn dilate_nonnegative(f: &RadialFn, lambda: f64, p: f64) -> RadialFn {
    let dilated = f.dilated(lambda, p);
    if dilated.is_nonnegative() {
        dilated
    } else {
        dilated.map_values(|v| v.max(0.0))
    }
}

/// Starting profiles for the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Gaussian,
    CompactBump,
    /// The extremal family that does not belong to `p`.
    WrongFamily,
}

impl InitKind {
    pub const ALL: [InitKind; 3] = [InitKind::Gaussian, InitKind::CompactBump, InitKind::WrongFamily];

    pub fn name(self) -> &'static str {
        match self {
            InitKind::Gaussian => "gaussian",
            InitKind::CompactBump => "compact_bump",
            InitKind::WrongFamily => "wrong_family",
        }
    }
}

impl std::str::FromStr for InitKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        InitKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Domain(format!("unknown initialization '{s}'")))
    }
}

/// Initial profile of the given kind. A seed perturbs widths and amplitudes.
pub fn initial_profile(kind: InitKind, grid: Arc<RadialGrid>, n: Dim, p: f64, seed: Option<u64>) -> Result<RadialFn> {
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let mut jitter = |lo: f64, hi: f64| match rng.as_mut() {
        Some(r) => r.random_range(lo..hi),
        None => 1.0,
    };
    let width = jitter(0.6, 1.6);
    let amp = jitter(0.5, 2.0);
    Ok(match kind {
        InitKind::Gaussian => RadialFn::from_fn(grid, |r| amp * (-(r / width).powi(2)).exp()),
        InitKind::CompactBump => RadialFn::from_fn(grid, |r| {
            let x = r / (1.5 * width);
            // smooth at the edge of the support, so spectral dilation stays clean
            if x < 1.0 {
                amp * (1.0 - 1.0 / (1.0 - x * x)).exp()
            } else {
                0.0
            }
        }),
        InitKind::WrongFamily => {
            let conformal_p = ExtremalKind::Conformal.critical_p(n)?;
            let kind = if (p - conformal_p).abs() < 1e-12 {
                ExtremalKind::Dual
            } else {
                ExtremalKind::Conformal
            };
            let spec = ExtremalSpec::new(n, kind, width, amp)?;
            // The conformal profile is not p-integrable for the dual exponent,
            // so it gets a far-field Gaussian cutoff there.
            let cutoff = if kind == ExtremalKind::Conformal && conformal_p - p > 0.0 {
                5.0 * width
            } else {
                f64::INFINITY
            };
            RadialFn::from_fn(grid, |r| spec.value(r) * (-(r / cutoff).powi(2)).exp())
        }
    })
}

/// A random positive radial trial function: a mixture of two Gaussians and a
/// slowly decaying bump.
pub fn random_trial(grid: Arc<RadialGrid>, rng: &mut impl Rng) -> RadialFn {
    let w1 = rng.random_range(0.3..3.0);
    let w2 = rng.random_range(0.3..3.0);
    let c = rng.random_range(0.0..2.0);
    let a = rng.random_range(0.1..1.0);
    let b = rng.random_range(0.0..1.0);
    let e = rng.random_range(0.8..2.5);
    RadialFn::from_fn(grid, move |r| {
        (-(r / w1).powi(2)).exp() + a * (-((r - c) / w2).powi(2)).exp() + b * (1.0 + r * r).powf(-e)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AscentReport {
    /// Running maximum of the Rayleigh quotient over all trajectories.
    pub estimate: f64,
    /// Per-trial maxima; `None` for diverged trials.
    pub per_trial: Vec<Option<f64>>,
}

/// Lower-bound estimate of the best constant from random initializations.
pub fn ascent_estimate_constant(
    op: &ExtensionOperator,
    p: f64,
    trials: usize,
    cfg: &SolverConfig,
) -> Result<AscentReport> {
    ensure_domain!(trials >= 1, "need at least one trial");
    cfg.validate()?;
    let grid = op.boundary().clone();
    let per_trial: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
            let init = random_trial(grid.clone(), &mut rng);
            match el_fixed_point(op, p, &init, cfg) {
                Ok(sol) => sol.trace.max_rayleigh(),
                Err(_) => None,
            }
        })
        .collect();
    let estimate = per_trial
        .iter()
        .flatten()
        .cloned()
        .reduce(f64::max)
        .ok_or_else(|| Error::Divergence("every ascent trial diverged".into()))?;
    Ok(AscentReport { estimate, per_trial })
}

/// Result of fitting `a·(λ/(λ²+r²))^e` to a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FamilyMatch {
    pub lambda: f64,
    pub amplitude: f64,
    /// Sup over `r ∈ [0, r_window]` of `|f − a·g_λ| / (a·g_λ)`.
    pub sup_rel_error: f64,
}

/// Best `(λ, a)` in the sup-relative sense on `[0, r_window]`.
pub fn match_family(f: &RadialFn, kind: ExtremalKind, n: Dim, r_window: f64) -> Result<FamilyMatch> {
    ensure_domain!(r_window > 0.0, "matching window must be positive");
    let e = kind.exponent(n);
    let mut pts: Vec<(f64, f64)> = vec![(0.0, f.value_at_zero())];
    pts.extend(
        f.grid()
            .nodes()
            .iter()
            .zip(f.values())
            .filter(|(r, _)| **r <= r_window)
            .map(|(r, v)| (*r, *v)),
    );
    ensure_domain!(
        pts.iter().all(|(_, v)| *v > 0.0),
        "profile must be positive on the window"
    );
    let error_at = |log_lambda: f64| -> (f64, f64) {
        let l = log_lambda.exp();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (r, v) in &pts {
            let ratio = v / (l / (l * l + r * r)).powf(e);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        ((hi - lo) / (hi + lo), 0.5 * (hi + lo))
    };
    let (a, b) = (1e-3f64.ln(), 1e3f64.ln());
    let steps = 120;
    let h = (b - a) / steps as f64;
    let best = (0..=steps)
        .map(|i| a + h * i as f64)
        .min_by(|x, y| error_at(*x).0.total_cmp(&error_at(*y).0))
        .expect("nonempty scan");
    let (x, _) = golden_min(best - h, best + h, 100, |x| error_at(x).0);
    let (err, amp) = error_at(x);
    Ok(FamilyMatch {
        lambda: x.exp(),
        amplitude: amp,
        sup_rel_error: err,
    })
}

fn golden_min<F: Fn(f64) -> f64>(mut lo: f64, mut hi: f64, iters: usize, f: F) -> (f64, f64) {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..iters {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = f(b);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// True when samples strictly decrease with radius.
pub fn is_strictly_decreasing(f: &RadialFn) -> bool {
    f.values().windows(2).all(|w| w[1] < w[0])
}

/// Center search for [`radial_about_point`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterScan {
    /// Search the full plane instead of the first coordinate axis.
    pub full_2d: bool,
    pub circles: usize,
    pub angles: usize,
}

impl Default for CenterScan {
    fn default() -> Self {
        CenterScan {
            full_2d: false,
            circles: 12,
            angles: 64,
        }
    }
}

/// Root-mean-square over circles about `c` of the relative angular standard
/// deviation of `v`.
pub fn angular_variation(v: &PolarSamples, c: [f64; 2], scan: &CenterScan) -> f64 {
    let r_max = v.r_max();
    let c_norm = c[0].hypot(c[1]);
    let reach = r_max - c_norm;
    if reach <= 0.0 {
        return f64::INFINITY;
    }
    let hole = 1.5 * v.r_min();
    let mut acc = 0.0;
    let mut count = 0usize;
    for k in 0..scan.circles {
        let rho = reach * (0.05 + 0.9 * (k as f64 + 0.5) / scan.circles as f64);
        let mut vals = Vec::with_capacity(scan.angles);
        for m in 0..scan.angles {
            let th = std::f64::consts::TAU * m as f64 / scan.angles as f64;
            let (x, y) = (c[0] + rho * th.cos(), c[1] + rho * th.sin());
            if x.hypot(y) > hole {
                vals.push(v.eval(x, y));
            }
        }
        if vals.len() < scan.angles / 2 {
            continue;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        if mean.abs() > 0.0 {
            acc += var / (mean * mean);
            count += 1;
        }
    }
    if count == 0 {
        return f64::INFINITY;
    }
    (acc / count as f64).sqrt()
}

/// Center about which `v` is radial, if the best candidate's angular
/// variation is at most `tol`. Candidates lie on the first axis.
pub fn radial_about_point(v: &PolarSamples, tol: f64) -> Option<[f64; 2]> {
    radial_about_point_with(v, tol, &CenterScan::default()).0
}

/// [`radial_about_point`] with explicit scan settings; also returns the
/// minimized variation.
pub fn radial_about_point_with(v: &PolarSamples, tol: f64, scan: &CenterScan) -> (Option<[f64; 2]>, f64) {
    let span = 0.5 * v.r_max();
    let steps = 40;
    let h = 2.0 * span / steps as f64;
    let axis = |a: f64, b: f64| angular_variation(v, [a, b], scan);
    let best = (0..=steps)
        .map(|i| -span + h * i as f64)
        .min_by(|x, y| axis(*x, 0.0).total_cmp(&axis(*y, 0.0)))
        .expect("nonempty scan");
    let (mut cx, mut val) = golden_min(best - h, best + h, 60, |a| axis(a, 0.0));
    let mut cy = 0.0;
    if scan.full_2d {
        for _ in 0..3 {
            (cy, _) = golden_min(-span, span, 60, |b| axis(cx, b));
            (cx, val) = golden_min(cx - h, cx + h, 60, |a| axis(a, cy));
        }
    }
    ((val <= tol).then_some([cx, cy]), val)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum RadialClass {
    QuadraticPower { c1: f64, c2: f64 },
    PurePower { c1: f64 },
    None,
}

/// Fits `u^{2/α} ≈ c₁r² + c₂` by relative least squares over the grid.
pub fn classify_inverted_radial(u: &RadialFn, alpha: f64) -> Result<RadialClass> {
    Ok(classify_with_residual(u, alpha)?.0)
}

/// [`classify_inverted_radial`] plus the relative fit residual.
pub fn classify_with_residual(u: &RadialFn, alpha: f64) -> Result<(RadialClass, f64)> {
    ensure_domain!(alpha != 0.0 && alpha.is_finite(), "alpha must be nonzero");
    ensure_domain!(u.values().iter().all(|&v| v > 0.0), "u must be positive");
    let nodes = u.grid().nodes();
    let w: Vec<f64> = u.values().iter().map(|v| v.powf(2.0 / alpha)).collect();
    // Weighted normal equations with weights 1/w² (relative residuals).
    let (mut s11, mut s12, mut s22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (r, wi) in nodes.iter().zip(&w) {
        let (x1, x2) = (r * r / wi, 1.0 / wi);
        s11 += x1 * x1;
        s12 += x1 * x2;
        s22 += x2 * x2;
        b1 += x1;
        b2 += x2;
    }
    let det = s11 * s22 - s12 * s12;
    if det.abs() <= f64::EPSILON * s11 * s22 {
        return Err(Error::Numerical("degenerate least-squares system".into()));
    }
    let c1 = (b1 * s22 - b2 * s12) / det;
    let c2 = (s11 * b2 - s12 * b1) / det;
    let residual = nodes
        .iter()
        .zip(&w)
        .map(|(r, wi)| ((c1 * r * r + c2 - wi) / wi).abs())
        .fold(0.0, f64::max);
    let r_max = nodes[nodes.len() - 1];
    let class = if residual > CLASSIFY_FIT_TOL || c1 < 0.0 {
        RadialClass::None
    } else if c1 > 0.0 && c2.abs() < PURE_POWER_TOL * c1 * r_max * r_max {
        RadialClass::PurePower { c1 }
    } else if c2 > 0.0 {
        RadialClass::QuadraticPower { c1, c2 }
    } else {
        RadialClass::None
    };
    Ok((class, residual))
}

/// `max|Δ³(u^{2/α})| / h³` over uniformly spaced samples; vanishes exactly on
/// the family `[a(x−x₀)² + b]^{α/2}`.
pub fn ode_check_1d(samples: &[f64], h: f64, alpha: f64) -> Result<f64> {
    ensure_domain!(samples.len() >= 7, "need at least 7 samples");
    ensure_domain!(h > 0.0, "spacing must be positive");
    ensure_domain!(alpha != 0.0, "alpha must be nonzero");
    ensure_domain!(samples.iter().all(|&v| v > 0.0), "samples must be positive");
    let g: Vec<f64> = samples.iter().map(|v| v.powf(2.0 / alpha)).collect();
    Ok(g.windows(4)
        .map(|w| (w[3] - 3.0 * w[2] + 3.0 * w[1] - w[0]).abs())
        .fold(0.0, f64::max)
        / h.powi(3))
}

/// Third-difference level below which [`ode_check_1d`] accepts a family member.
pub const ODE_MEMBER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseClass {
    QuadraticPower,
    PurePower,
    None,
    OdeMember,
    OdeNonMember,
}

impl From<RadialClass> for CaseClass {
    fn from(c: RadialClass) -> Self {
        match c {
            RadialClass::QuadraticPower { .. } => CaseClass::QuadraticPower,
            RadialClass::PurePower { .. } => CaseClass::PurePower,
            RadialClass::None => CaseClass::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierCase {
    pub label: String,
    pub expected: CaseClass,
    pub outcome: CaseClass,
    /// Fit residual, or the third-difference level for 1-D cases.
    pub residual: f64,
}

impl ClassifierCase {
    pub fn correct(&self) -> bool {
        self.expected == self.outcome
    }
}

type Profile1d = (&'static str, f64, fn(f64) -> f64);

type RadialCase = (&'static str, f64, CaseClass, fn(f64) -> f64);

/// Thirty labelled inputs for the two classifiers: exact family members,
/// pure powers, and perturbed non-members.
pub fn classifier_suite() -> Result<Vec<ClassifierCase>> {
    let grid = Arc::new(RadialGrid::tan(2, 48, 1.0)?);
    let radial: [RadialCase; 20] = [
        ("(0.3r²+0.7)^(-1/2)", -1.0, CaseClass::QuadraticPower, |r| {
            (0.3 * r * r + 0.7).powf(-0.5)
        }),
        ("(r²+1)^(-1/2)", -1.0, CaseClass::QuadraticPower, |r| {
            (r * r + 1.0).powf(-0.5)
        }),
        ("(2r²+0.5)^(-1)", -2.0, CaseClass::QuadraticPower, |r| {
            (2.0 * r * r + 0.5).powi(-1)
        }),
        ("(0.5r²+3)^(-3/2)", -3.0, CaseClass::QuadraticPower, |r| {
            (0.5 * r * r + 3.0).powf(-1.5)
        }),
        ("(r²+1)^(-2)", -4.0, CaseClass::QuadraticPower, |r| {
            (r * r + 1.0).powi(-2)
        }),
        ("(0.1r²+1)^(-3/4)", -1.5, CaseClass::QuadraticPower, |r| {
            (0.1 * r * r + 1.0).powf(-0.75)
        }),
        ("(4r²+1)^(1/2)", 1.0, CaseClass::QuadraticPower, |r| {
            (4.0 * r * r + 1.0).sqrt()
        }),
        ("r²+2", 2.0, CaseClass::QuadraticPower, |r| r * r + 2.0),
        ("r^-1", -1.0, CaseClass::PurePower, |r| r.powi(-1)),
        ("r^-2", -2.0, CaseClass::PurePower, |r| r.powi(-2)),
        ("3r^-3", -3.0, CaseClass::PurePower, |r| 3.0 * r.powi(-3)),
        ("r", 1.0, CaseClass::PurePower, |r| r),
        ("(1+r²+0.05 sin r)^(-1/2)", -1.0, CaseClass::None, |r| {
            (1.0 + r * r + 0.05 * r.sin()).powf(-0.5)
        }),
        ("(1+r²)^(-1/2)(1+0.1r/(1+r))", -1.0, CaseClass::None, |r| {
            (1.0 + r * r).powf(-0.5) * (1.0 + 0.1 * r / (1.0 + r))
        }),
        ("(1+r²)^(-1/2)(1+0.01e^-r)", -1.0, CaseClass::None, |r| {
            (1.0 + r * r).powf(-0.5) * (1.0 + 0.01 * (-r).exp())
        }),
        ("(1+r^2.1)^(-1/2)", -1.0, CaseClass::None, |r| {
            (1.0 + r.powf(2.1)).powf(-0.5)
        }),
        ("(1+r²)^(-0.55)", -1.0, CaseClass::None, |r| (1.0 + r * r).powf(-0.55)),
        ("(1+r)^(-1)", -1.0, CaseClass::None, |r| (1.0 + r).powi(-1)),
        ("r^-1(1+0.01/(1+r²))", -1.0, CaseClass::None, |r| {
            (1.0 + 0.01 / (1.0 + r * r)) / r
        }),
        ("(1+r²)^(-1/2)+0.02(1+r²)^(-1)", -1.0, CaseClass::None, |r| {
            (1.0 + r * r).powf(-0.5) + 0.02 / (1.0 + r * r)
        }),
    ];
    let mut cases = Vec::with_capacity(30);
    for (label, alpha, expected, u) in radial {
        let (class, residual) = classify_with_residual(&RadialFn::from_fn(grid.clone(), u), alpha)?;
        cases.push(ClassifierCase {
            label: label.into(),
            expected,
            outcome: class.into(),
            residual,
        });
    }
    let h = 0.1;
    let xs: Vec<f64> = (0..21).map(|i| -1.0 + h * i as f64).collect();
    let line: [(Profile1d, CaseClass); 10] = [
        (
            ("(x²+1)^(-1/2)", -1.0, |x| (x * x + 1.0).powf(-0.5)),
            CaseClass::OdeMember,
        ),
        (
            ("(2(x-1)²+3)^(-1/2)", -1.0, |x| {
                (2.0 * (x - 1.0).powi(2) + 3.0).powf(-0.5)
            }),
            CaseClass::OdeMember,
        ),
        (
            ("((x+0.5)²+0.2)^(-1)", -2.0, |x| ((x + 0.5).powi(2) + 0.2).powi(-1)),
            CaseClass::OdeMember,
        ),
        (
            ("(0.5x²+2)^(3/2)", 3.0, |x| (0.5 * x * x + 2.0).powf(1.5)),
            CaseClass::OdeMember,
        ),
        (("(x²+1)^(-2)", -4.0, |x| (x * x + 1.0).powi(-2)), CaseClass::OdeMember),
        (("e^x", 2.0, f64::exp), CaseClass::OdeNonMember),
        (
            ("(x⁴+1)^(-1/2)", -1.0, |x| (x.powi(4) + 1.0).powf(-0.5)),
            CaseClass::OdeNonMember,
        ),
        (
            ("(x²+1)^(-0.55)", -1.0, |x| (x * x + 1.0).powf(-0.55)),
            CaseClass::OdeNonMember,
        ),
        (("1/cosh x", -1.0, |x| 1.0 / x.cosh()), CaseClass::OdeNonMember),
        (
            ("(1+x²+0.1x³)^(-1/2)", -1.0, |x| {
                (1.0 + x * x + 0.1 * x.powi(3)).powf(-0.5)
            }),
            CaseClass::OdeNonMember,
        ),
    ];
    for ((label, alpha, u), expected) in line {
        let samples: Vec<f64> = xs.iter().map(|&x| u(x)).collect();
        let residual = ode_check_1d(&samples, h, alpha)?;
        let outcome = if residual <= ODE_MEMBER_TOL {
            CaseClass::OdeMember
        } else {
            CaseClass::OdeNonMember
        };
        cases.push(ClassifierCase {
            label: label.into(),
            expected,
            outcome,
            residual,
        });
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extremals::{extremal_profile, normalize_el};
    use crate::grids::{ball_mass, RadialGrid};
    use approx::assert_relative_eq;

    fn dim(n: usize) -> Dim {
        Dim::new(n).unwrap()
    }

    fn conformal(grid: Arc<RadialGrid>) -> RadialFn {
        extremal_profile(&ExtremalSpec::standard(dim(3), ExtremalKind::Conformal), grid).unwrap()
    }

    #[test]
    fn config_is_validated() {
        let bad = SolverConfig {
            damping: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            tol_residual: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn trace_csv_header() {
        let t = IterationTrace {
            records: vec![IterationRecord {
                iter: 1,
                residual: 0.5,
                rayleigh: 0.6,
                lambda: 1.0,
            }],
        };
        assert!(t.to_csv().starts_with("iter,residual,rayleigh,lambda\n1,"));
    }

    #[test]
    fn mass_half_gauge_examples() {
        let g = Arc::new(RadialGrid::tan(2, 64, 1.0).unwrap());
        let f = conformal(g.clone());
        let (lambda, normalized) = normalize_mass_half(&f, 4.0).unwrap();
        assert_relative_eq!(lambda, 1.0, max_relative = 1e-8);
        assert_relative_eq!(ball_mass(&normalized, 4.0, 1.0), 0.5, epsilon = 1e-8);
        let stretched = normalized.dilated(2.0, 4.0);
        let (lambda2, _) = normalize_mass_half(&stretched, 4.0).unwrap();
        assert_relative_eq!(lambda2, 0.5, max_relative = 1e-7);
        let g2 = Arc::new(RadialGrid::tan(2, 64, 1.0).unwrap());
        let gauss = RadialFn::from_fn(g2, |r| (-r * r / 9.0).exp());
        let (_, gn) = normalize_mass_half(&gauss, 4.0).unwrap();
        assert_relative_eq!(ball_mass(&gn, 4.0, 1.0), 0.5, epsilon = 1e-8);
    }

    #[test]
    fn classifier_examples() {
        let g = Arc::new(RadialGrid::tan(2, 48, 1.0).unwrap());
        let member = RadialFn::from_fn(g.clone(), |r| (0.3 * r * r + 0.7).powf(-0.5));
        match classify_inverted_radial(&member, -1.0).unwrap() {
            RadialClass::QuadraticPower { c1, c2 } => {
                assert_relative_eq!(c1, 0.3, max_relative = 1e-10);
                assert_relative_eq!(c2, 0.7, max_relative = 1e-10);
            }
            other => panic!("{other:?}"),
        }
        let power = RadialFn::from_fn(g.clone(), |r| r.powf(-1.0));
        assert!(matches!(
            classify_inverted_radial(&power, -1.0).unwrap(),
            RadialClass::PurePower { .. }
        ));
        let wobble = RadialFn::from_fn(g.clone(), |r| (1.0 + r * r + 0.05 * r.sin()).powf(-0.5));
        assert_eq!(classify_inverted_radial(&wobble, -1.0).unwrap(), RadialClass::None);
        assert!(classify_inverted_radial(&member, 0.0).is_err());
    }

    #[test]
    fn classifier_suite_is_all_correct() {
        let cases = classifier_suite().unwrap();
        assert_eq!(cases.len(), 30);
        for c in &cases {
            assert!(c.correct(), "{c:?}");
            if c.expected == CaseClass::OdeMember {
                assert!(c.residual <= 1e-8);
            }
        }
    }

    #[test]
    fn ode_check_examples() {
        let h = 0.1;
        let xs: Vec<f64> = (0..21).map(|i| -1.0 + h * i as f64).collect();
        let alpha = -1.0;
        let a: Vec<f64> = xs.iter().map(|x| (x * x + 1.0f64).powf(alpha / 2.0)).collect();
        assert!(ode_check_1d(&a, h, alpha).unwrap() <= 1e-8);
        let b: Vec<f64> = xs
            .iter()
            .map(|x| (2.0 * (x - 1.0f64).powi(2) + 3.0).powf(alpha / 2.0))
            .collect();
        assert!(ode_check_1d(&b, h, alpha).unwrap() <= 1e-8);
        let e: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        let res = ode_check_1d(&e, h, 2.0).unwrap();
        assert!(res >= 0.5 * (-1.0f64).exp());
        assert!(ode_check_1d(&[1.0; 6], h, 2.0).is_err());
        assert!(ode_check_1d(&[1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0], h, 2.0).is_err());
    }

    #[test]
    fn fixed_point_is_recognized_at_the_first_step() {
        let op = ExtensionOperator::standard(dim(3), 48, 24, 1.0).unwrap();
        let f = conformal(op.boundary().clone());
        let (_, f) = normalize_mass_half(&f, 4.0).unwrap();
        let sol = el_fixed_point(&op, 4.0, &f, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, Termination::Converged);
        assert_eq!(sol.trace.len(), 1);
        for (a, b) in sol.profile.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-6);
        }
        let scaling = normalize_el(&op, &sol.profile, 4.0).unwrap();
        assert!(scaling.residual <= 1e-6 && scaling.shape_matched);
    }

    #[test]
    fn el_map_commutes_with_dilation() {
        let op = ExtensionOperator::standard(dim(3), 48, 24, 1.0).unwrap();
        let g = op.boundary().clone();
        let p = 4.0;
        let f = RadialFn::from_fn(g.clone(), |r| (1.0 + r * r).powf(-0.7));
        let lambda: f64 = 2.0;
        let d = 2.0;
        let q = target_exponent(dim(3), p);
        let c = lambda.powf(-d / p);
        let dilated = RadialFn::from_fn(g.clone(), |r| c * (1.0 + (r / lambda).powi(2)).powf(-0.7));
        let direct = el_map(&op, &dilated, p).unwrap();
        let base = el_map(&op, &f, p).unwrap();
        let factor = lambda.powf((1.0 - d * (q - 1.0) / p) / (p - 1.0));
        let mut worst = 0.0f64;
        for (r, v) in g.nodes().iter().zip(direct.values()) {
            if *r <= 20.0 {
                let expect = factor * base.eval(r / lambda);
                worst = worst.max((v - expect).abs() / expect);
            }
        }
        assert!(worst <= 1e-6, "{worst:e}");
    }

    fn shared_op() -> &'static ExtensionOperator {
        static OP: std::sync::OnceLock<ExtensionOperator> = std::sync::OnceLock::new();
        OP.get_or_init(|| ExtensionOperator::standard(dim(3), 48, 24, 1.0).unwrap())
    }

    #[test]
    fn gaussian_start_reaches_the_conformal_family() {
        let op = shared_op();
        let init = initial_profile(InitKind::Gaussian, op.boundary().clone(), dim(3), 4.0, None).unwrap();
        let sol = el_fixed_point(op, 4.0, &init, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, Termination::Converged);
        let m = match_family(&sol.profile, ExtremalKind::Conformal, dim(3), 10.0).unwrap();
        assert!(m.sup_rel_error <= 1e-3, "{m:?}");
        assert!(is_strictly_decreasing(&sol.profile));
        assert_relative_eq!(m.lambda, 1.0, max_relative = 1e-4);
    }

    #[test]
    fn compact_bump_reaches_the_dual_family() {
        let op = shared_op();
        let p = 4.0 / 3.0;
        let init = initial_profile(InitKind::CompactBump, op.boundary().clone(), dim(3), p, None).unwrap();
        assert!(init.values().contains(&0.0));
        let cfg = SolverConfig {
            tol_residual: 1e-4,
            ..SolverConfig::default()
        };
        let sol = el_fixed_point(op, p, &init, &cfg).unwrap();
        assert_eq!(sol.status, Termination::Converged);
        let m = match_family(&sol.profile, ExtremalKind::Dual, dim(3), 10.0).unwrap();
        assert!(m.sup_rel_error <= 2e-3, "{m:?}");
        let wrong = match_family(&sol.profile, ExtremalKind::Conformal, dim(3), 10.0).unwrap();
        assert!(wrong.sup_rel_error > 0.1);
    }

    #[test]
    fn traces_are_reproducible_and_bounded() {
        let op = shared_op();
        let init = initial_profile(InitKind::WrongFamily, op.boundary().clone(), dim(3), 4.0, Some(7)).unwrap();
        let cfg = SolverConfig {
            max_iters: 12,
            ..SolverConfig::default()
        };
        let a = el_fixed_point(op, 4.0, &init, &cfg).unwrap();
        let b = el_fixed_point(op, 4.0, &init, &cfg).unwrap();
        assert_eq!(a.status, Termination::MaxIters);
        assert_eq!(a.trace.len(), 12);
        assert_eq!(a.trace.to_csv(), b.trace.to_csv());
        assert_eq!(a.profile.values(), b.profile.values());
    }

    #[test]
    fn divergence_rule() {
        let record = |iter, residual| IterationRecord {
            iter,
            residual,
            rayleigh: 0.5,
            lambda: 1.0,
        };
        let mut trace = IterationTrace {
            records: (1..=51).map(|i| record(i, 1e-2)).collect(),
        };
        assert!(divergence(&trace).is_none());
        trace.records.push(record(52, 0.11));
        assert!(matches!(divergence(&trace), Some(Error::Divergence(_))));
        let nan = IterationTrace {
            records: vec![record(1, f64::NAN)],
        };
        assert!(divergence(&nan).is_some());
    }

    #[test]
    fn rejects_bad_starts() {
        let op = shared_op();
        let zero = RadialFn::zeros(op.boundary().clone());
        assert!(el_fixed_point(op, 4.0, &zero, &SolverConfig::default()).is_err());
        let neg = RadialFn::from_fn(op.boundary().clone(), |r| (-r * r).exp() - 0.5);
        assert!(el_fixed_point(op, 4.0, &neg, &SolverConfig::default()).is_err());
    }

    #[test]
    fn init_kinds_parse() {
        for k in InitKind::ALL {
            assert_eq!(k.name().parse::<InitKind>().unwrap(), k);
        }
        assert_eq!("compact-bump".parse::<InitKind>().unwrap(), InitKind::CompactBump);
        assert!("spike".parse::<InitKind>().is_err());
    }

    #[test]
    fn ascent_estimates() {
        let op = shared_op();
        let cfg = SolverConfig {
            seed: 11,
            ..SolverConfig::default()
        };
        let conformal = ascent_estimate_constant(op, 4.0, 3, &cfg).unwrap();
        let sharp = crate::extremals::sharp_constant(dim(3), ExtremalKind::Conformal).unwrap();
        assert!((conformal.estimate / sharp - 1.0).abs() <= 5e-3, "{conformal:?}");
        let cfg = SolverConfig {
            tol_residual: 1e-4,
            ..cfg
        };
        let dual = ascent_estimate_constant(op, 4.0 / 3.0, 3, &cfg).unwrap();
        let sharp = crate::extremals::sharp_constant(dim(3), ExtremalKind::Dual).unwrap();
        assert!((dual.estimate / sharp - 1.0).abs() <= 5e-3, "{dual:?}");
        assert!(ascent_estimate_constant(op, 4.0, 0, &cfg).is_err());
    }

    mod centers {
        use super::*;
        use crate::moebius::{boundary_inversion, InversionSpec, InversionTarget};

        fn polar_of(u: impl Fn(f64) -> f64 + Send + Sync, spec: &InversionSpec) -> PolarSamples {
            let g = Arc::new(RadialGrid::tan(2, 64, 1.0).unwrap());
            let u = RadialFn::from_fn(g, u);
            let target = InversionTarget::Polar {
                r_min: 0.05,
                r_max: 3.0,
                n_radii: 60,
                n_angles: 64,
            };
            boundary_inversion(&u, spec, &target).unwrap().into_polar().unwrap()
        }

        #[test]
        fn shifted_family_member_is_radial_about_half_e1() {
            let v = polar_of(|s| (0.5 * s * s + 0.5).powf(-0.5), &InversionSpec::shifted_e1(-1.0, 2));
            let c = radial_about_point(&v, 1e-3).expect("radial");
            assert!((c[0] - 0.5).abs() < 1e-2 && c[1] == 0.0, "{c:?}");
        }

        #[test]
        fn unshifted_self_dual_member_is_radial_about_origin() {
            let spec = InversionSpec::new(-1.0, vec![0.0, 0.0]).unwrap();
            let v = polar_of(|s| (1.0 + s * s).powf(-0.5), &spec);
            let c = radial_about_point(&v, 1e-3).expect("radial");
            assert!(c[0].abs() < 1e-2, "{c:?}");
        }

        #[test]
        fn perturbed_member_has_no_center() {
            let v = polar_of(
                |s| (1.0 + s * s).powf(-0.5) * (1.0 + 0.1 * s / (1.0 + s)),
                &InversionSpec::shifted_e1(-1.0, 2),
            );
            let (center, margin) = radial_about_point_with(&v, 1e-3, &CenterScan::default());
            assert!(center.is_none(), "variation {margin:e}");
            let full = CenterScan {
                full_2d: true,
                ..CenterScan::default()
            };
            assert!(radial_about_point_with(&v, 1e-3, &full).0.is_none());
        }
    }
}
