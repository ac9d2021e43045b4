//! Closed-form extremals, sharp constants and the Euler–Lagrange residual
//! `f^{p−1} = T((Pf)^{q−1})` with `q = np/(n−1)`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_domain, Error, Result};
use crate::extension::{Basis, ExtensionOperator, RingKernel};
use crate::grids::{lp_norm_boundary, lp_norm_halfspace, AxisymFn, PolarSamples, RadialFn, RadialGrid};
use crate::interp::UniformTable;
use crate::kernel::{gamma_half, unit_ball_volume, BoundaryPoint, Dim};
use crate::quad::{graded_breaks, integrate_panels, merge_breaks};

/// Shape residual below which [`normalize_el`] reports a matched profile.
pub const EL_SHAPE_TOL: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremalKind {
    Conformal,
    Dual,
}

impl ExtremalKind {
    /// Power `e` in `(λ/(λ²+r²))^e`.
    pub fn exponent(self, n: Dim) -> f64 {
        match self {
            ExtremalKind::Conformal => (n.as_f64() - 2.0) / 2.0,
            ExtremalKind::Dual => n.as_f64() / 2.0,
        }
    }

    /// Boundary exponent `p` at which this family is extremal.
    pub fn critical_p(self, n: Dim) -> Result<f64> {
        ensure_domain!(n.get() >= 3, "extremal families need n >= 3");
        let nf = n.as_f64();
        Ok(match self {
            ExtremalKind::Conformal => 2.0 * (nf - 1.0) / (nf - 2.0),
            ExtremalKind::Dual => 2.0 * (nf - 1.0) / nf,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalSpec {
    pub n: Dim,
    pub kind: ExtremalKind,
    pub lambda: f64,
    pub center: BoundaryPoint,
    pub amplitude: f64,
}

impl ExtremalSpec {
    pub fn new(n: Dim, kind: ExtremalKind, lambda: f64, amplitude: f64) -> Result<Self> {
        ensure_domain!(lambda > 0.0 && lambda.is_finite(), "lambda must be positive");
        ensure_domain!(amplitude > 0.0 && amplitude.is_finite(), "amplitude must be positive");
        Ok(ExtremalSpec {
            n,
            kind,
            lambda,
            center: BoundaryPoint(vec![0.0; n.boundary()]),
            amplitude,
        })
    }

    /// Unit-amplitude, unit-scale member centred at the origin.
    pub fn standard(n: Dim, kind: ExtremalKind) -> Self {
        Self::new(n, kind, 1.0, 1.0).expect("unit parameters are valid")
    }

    pub fn with_center(mut self, center: BoundaryPoint) -> Result<Self> {
        ensure_domain!(
            center.0.len() == self.n.boundary() && center.0.iter().all(|c| c.is_finite()),
            "center must be a finite point of ℝ^{}",
            self.n.boundary()
        );
        self.center = center;
        Ok(self)
    }

    /// Value at distance `rho` from the center.
    pub fn value(&self, rho: f64) -> f64 {
        let e = self.kind.exponent(self.n);
        let l = self.lambda;
        self.amplitude * (l / (l * l + rho * rho)).powf(e)
    }
}

/// Samples of `amplitude·(λ/(λ²+r²))^e` on `grid`.
pub fn extremal_profile(spec: &ExtremalSpec, grid: Arc<RadialGrid>) -> Result<RadialFn> {
    ensure_domain!(
        spec.center.0.iter().all(|&c| c == 0.0),
        "radial samples need center 0; use extremal_polar for shifted members"
    );
    ensure_domain!(grid.d() == spec.n.boundary(), "grid dimension does not match n");
    let e = spec.kind.exponent(spec.n);
    Ok(RadialFn::from_fn(grid, |r| spec.value(r)).with_tail_exponent(2.0 * e))
}

/// A shifted member on a polar mesh of the plane (n = 3 only).
pub fn extremal_polar(
    spec: &ExtremalSpec,
    r_min: f64,
    r_max: f64,
    n_radii: usize,
    n_angles: usize,
) -> Result<PolarSamples> {
    ensure_domain!(spec.n.get() == 3, "polar samples exist for n = 3 only");
    let (cx, cy) = (spec.center.0[0], spec.center.0[1]);
    PolarSamples::from_fn(r_min, r_max, n_radii, n_angles, |x, y| {
        spec.value((x - cx).hypot(y - cy))
    })
}

/// Closed-form best constant of `‖Pf‖_{L^{np/(n−1)}} ≤ c‖f‖_{L^p}` at the
/// two exponents where the extremals are known.
pub fn sharp_constant(n: Dim, which: ExtremalKind) -> Result<f64> {
    ensure_domain!(n.get() >= 3, "closed-form sharp constants need n >= 3");
    let nf = n.as_f64();
    Ok(match which {
        ExtremalKind::Conformal => {
            let omega = unit_ball_volume(n.get())?;
            nf.powf(-(nf - 2.0) / (2.0 * (nf - 1.0))) * omega.powf(-(nf - 2.0) / (2.0 * nf * (nf - 1.0)))
        }
        ExtremalKind::Dual => {
            let fact: f64 = (1..=n.get() - 2).map(|k| k as f64).product();
            let ratio = fact / gamma_half(n.get() - 1);
            (2.0 * (nf - 2.0)).sqrt().recip() * std::f64::consts::PI.powf(-0.25) * ratio.powf(1.0 / (2.0 * (nf - 1.0)))
        }
    })
}

fn check_exponent(p: f64) -> Result<()> {
    ensure_domain!(p > 1.0 && p.is_finite(), "exponent p must satisfy 1 < p < ∞, got {p}");
    Ok(())
}

/// `q = np/(n−1)`.
pub fn target_exponent(n: Dim, p: f64) -> f64 {
    n.as_f64() * p / (n.as_f64() - 1.0)
}

/// `‖Pf‖_{L^{np/(n−1)}(ℝ₊ⁿ)} / ‖f‖_{L^p(ℝ^{n−1})}`.
pub fn rayleigh_quotient(op: &ExtensionOperator, f: &RadialFn, p: f64) -> Result<f64> {
    ensure_domain!(p >= 1.0 && p.is_finite(), "rayleigh quotient needs finite p >= 1");
    ensure_domain!(
        f.values().iter().any(|&v| v != 0.0),
        "rayleigh quotient of the zero function"
    );
    let q = target_exponent(op.n(), p);
    let pf = op.extend(f)?;
    Ok(lp_norm_halfspace(&pf, q)? / lp_norm_boundary(f, p)?)
}

/// Both sides of the Euler–Lagrange equation at the boundary nodes:
/// `(f^{p−1}, T((Pf)^{q−1}))`.
pub fn el_sides(op: &ExtensionOperator, f: &RadialFn, p: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let (lhs, rhs, _) = el_parts(op, f, p)?;
    Ok((lhs, rhs))
}

/// [`el_sides`] together with the extension `Pf` it was computed from.
pub(crate) fn el_parts(op: &ExtensionOperator, f: &RadialFn, p: f64) -> Result<(Vec<f64>, Vec<f64>, AxisymFn)> {
    el_parts_with(op, f, p, None)
}

/// `basis = None` runs the checked public path; with an explicit basis the
/// decay test on `(Pf)^{q−1}` is skipped, as the iteration judges divergence
/// by its residual.
pub(crate) fn el_parts_with(
    op: &ExtensionOperator,
    f: &RadialFn,
    p: f64,
    basis: Option<Basis>,
) -> Result<(Vec<f64>, Vec<f64>, AxisymFn)> {
    check_exponent(p)?;
    ensure_domain!(f.is_nonnegative(), "Euler–Lagrange residual needs f >= 0");
    ensure_domain!(f.values().iter().any(|&v| v > 0.0), "Euler–Lagrange residual of f = 0");
    let q = target_exponent(op.n(), p);
    let pf = match basis {
        None => op.extend(f)?,
        Some(b) => op.extend_values_with(f.values(), b),
    };
    let u = pf.map_values(|v| v.max(0.0).powf(q - 1.0));
    let image = match basis {
        None => op.dual(&u)?.values().to_vec(),
        Some(b) => op.dual_values_with(u.values(), b),
    };
    let lhs = f.values().iter().map(|v| v.powf(p - 1.0)).collect();
    Ok((lhs, image, pf))
}

/// `max|f^{p−1} − T((Pf)^{q−1})| / max f^{p−1}` over the grid nodes.
pub fn el_residual(op: &ExtensionOperator, f: &RadialFn, p: f64) -> Result<f64> {
    let (lhs, rhs) = el_sides(op, f, p)?;
    Ok(relative_gap(&lhs, &rhs, 1.0))
}

fn relative_gap(lhs: &[f64], rhs: &[f64], s: f64) -> f64 {
    let peak = lhs.iter().cloned().fold(0.0, f64::max);
    let worst = lhs.iter().zip(rhs).map(|(a, b)| (a - s * b).abs()).fold(0.0, f64::max);
    worst / peak
}

/// Best scalar `s` in `max|lhs − s·rhs|` and the attained relative gap.
/// The objective is convex and piecewise linear in `s`.
pub(crate) fn best_scale(lhs: &[f64], rhs: &[f64]) -> (f64, f64) {
    let ratios: Vec<f64> = lhs
        .iter()
        .zip(rhs)
        .filter(|(_, b)| **b > 0.0)
        .map(|(a, b)| a / b)
        .collect();
    if ratios.is_empty() {
        return (0.0, relative_gap(lhs, rhs, 0.0));
    }
    let mut lo = 0.0;
    let mut hi = 2.0 * ratios.iter().cloned().fold(0.0, f64::max);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if relative_gap(lhs, rhs, a) <= relative_gap(lhs, rhs, b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let s = 0.5 * (lo + hi);
    (s, relative_gap(lhs, rhs, s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElScaling {
    /// `a` such that `a·f` best satisfies the unit-coefficient equation.
    pub amplitude: f64,
    /// `el_residual(a·f)`.
    pub residual: f64,
    /// False when even the best multiple leaves a residual above [`EL_SHAPE_TOL`].
    pub shape_matched: bool,
}

/// Amplitude that calibrates `f` to the Euler–Lagrange equation. Under
/// `f → a·f` the two sides scale as `a^{p−1}` and `a^{q−1}`, so the residual
/// of `a·f` is `max|f^{p−1} − a^{q−p} T(...)| / max f^{p−1}`.
pub fn normalize_el(op: &ExtensionOperator, f: &RadialFn, p: f64) -> Result<ElScaling> {
    let (lhs, rhs) = el_sides(op, f, p)?;
    let q = target_exponent(op.n(), p);
    let (s, residual) = best_scale(&lhs, &rhs);
    if s <= 0.0 {
        return Err(Error::Numerical("dual image vanishes; no calibrating amplitude".into()));
    }
    Ok(ElScaling {
        amplitude: s.powf(1.0 / (q - p)),
        residual,
        shape_matched: residual <= EL_SHAPE_TOL,
    })
}

/// `c` such that `c|ξ|^{−(n−1)/p}` solves the Euler–Lagrange equation.
pub fn singular_constant(n: Dim, p: f64) -> Result<f64> {
    Ok(singular_constant_at(n, p, &[1.0])?[0])
}

/// [`singular_constant`] solved from the equation at each radius in `radii`.
/// Both sides are homogeneous of the same degree, so the results agree.
pub fn singular_constant_at(n: Dim, p: f64, radii: &[f64]) -> Result<Vec<f64>> {
    check_exponent(p)?;
    ensure_domain!(
        radii.iter().all(|r| *r > 0.0 && r.is_finite()),
        "evaluation radii must be positive"
    );
    let ring = RingKernel::with_default_order(n);
    let d = n.boundary() as f64;
    let a = d / p;
    let q = target_exponent(n, p);
    let profile = unit_height_profile(&ring, a)?;
    radii
        .iter()
        .map(|&r| {
            let h = dual_of_power(&ring, &profile, a, q, r);
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Numerical(format!("singular dual integral evaluated to {h}")));
            }
            Ok((r.powf(-a * (p - 1.0)) / h).powf(1.0 / (q - p)))
        })
        .collect()
}

const LOG_WINDOW: f64 = 25.0;
const TABLE_STEP: f64 = 0.1;

/// `g(ρ) = P(|·|^{−a})(ρ, 1)`, tabulated as `ln g` over `ln ρ ∈ [−25, 25]`.
/// Beyond the window `g` is flat at the origin and `~ρ^{−a}` at infinity.
struct HeightOneProfile {
    table: UniformTable,
    a: f64,
}

impl HeightOneProfile {
    fn eval(&self, rho: f64) -> f64 {
        let x = rho.ln().max(-LOG_WINDOW);
        if x > LOG_WINDOW {
            return (self.table.eval(LOG_WINDOW) - self.a * (x - LOG_WINDOW)).exp();
        }
        self.table.eval(x).exp()
    }
}

fn unit_height_profile(ring: &RingKernel, a: f64) -> Result<HeightOneProfile> {
    let d = ring.n().boundary() as f64;
    let m = (2.0 * LOG_WINDOW / TABLE_STEP).round() as usize;
    let xs: Vec<f64> = (0..=m).map(|i| -LOG_WINDOW + TABLE_STEP * i as f64).collect();
    let values: Vec<f64> = xs
        .par_iter()
        .map(|&x| {
            let rho = x.exp();
            // s = e^y; the integrand decays exponentially at both ends of y.
            let base: Vec<f64> = (0..=40).map(|i| -80.0 + 4.0 * i as f64).collect();
            let width = 0.5 * (1.0 / rho).min(1.0);
            let breaks = merge_breaks(&base, &graded_breaks(-80.0, 80.0, x, width));
            let g = integrate_panels(&breaks, 20, |y| {
                let s = y.exp();
                ring.eval_profile(rho, s, 1.0, crate::extension::Profile::Poisson) * (y * (d - a)).exp()
            });
            g.ln()
        })
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("power-law extension profile is not finite".into()));
    }
    Ok(HeightOneProfile {
        table: UniformTable::new(-LOG_WINDOW, TABLE_STEP, values),
        a,
    })
}

/// `T((P|·|^{−a})^{q−1})(s0)` in log coordinates `r = e^x`, `t = e^y`; the inner
/// radial integral is split and graded at the kernel peak `r = s0`.
fn dual_of_power(ring: &RingKernel, g: &HeightOneProfile, a: f64, q: f64, s0: f64) -> f64 {
    let d = ring.n().boundary() as f64;
    let ls = s0.ln();
    let y_breaks: Vec<f64> = (0..=30).map(|i| -40.0 + 4.0 * i as f64).collect();
    let x_base: Vec<f64> = (0..=20).map(|i| ls - 40.0 + 4.0 * i as f64).collect();
    let mut y_nodes = Vec::new();
    crate::quad::for_each_panel_node(&y_breaks, 16, |y, w| y_nodes.push((y, w)));
    y_nodes
        .par_iter()
        .map(|&(y, wy)| {
            let t = y.exp();
            let breaks = if t < s0 {
                merge_breaks(&x_base, &graded_breaks(ls - 40.0, ls + 40.0, ls, 0.5 * t / s0))
            } else {
                x_base.clone()
            };
            let inner = integrate_panels(&breaks, 16, |x| {
                let r = x.exp();
                let u = t.powf(-a) * g.eval(r / t);
                ring.eval_profile(r, s0, t, crate::extension::Profile::Poisson) * u.powf(q - 1.0) * (x * d).exp()
            });
            wy * t * inner
        })
        .sum()
}
