//! Möbius map from the half-space to the ball and the Kelvin-type
//! inversions `f ↦ |ξ|^α f(ξ/|ξ|² − e₁)`.

use std::sync::Arc;

use crate::error::{ensure_domain, Error, Result};
use crate::grids::{AxisymFn, HalfspaceGrid, PolarSamples, RadialFn, RadialGrid};
use crate::interp::MonotoneCubic;
use crate::kernel::{Dim, HalfspacePoint};

/// `v(ξ) = |ξ|^α f(ξ/|ξ|² − shift)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InversionSpec {
    pub alpha: f64,
    pub shift: Vec<f64>,
}

impl InversionSpec {
    pub fn new(alpha: f64, shift: Vec<f64>) -> Result<Self> {
        ensure_domain!(
            alpha.is_finite() && shift.iter().all(|s| s.is_finite()),
            "inversion parameters must be finite"
        );
        Ok(InversionSpec { alpha, shift })
    }

    /// The unshifted transform on ℝ^{n−1} preserving `L^{2(n−1)/(n−2)}`.
    pub fn kelvin_boundary(n: Dim) -> Self {
        InversionSpec {
            alpha: 2.0 - n.as_f64(),
            shift: vec![0.0; n.boundary()],
        }
    }

    /// Shift by the first basis vector of ℝ^d.
    pub fn shifted_e1(alpha: f64, d: usize) -> Self {
        let mut shift = vec![0.0; d];
        shift[0] = 1.0;
        InversionSpec { alpha, shift }
    }

    pub fn is_unshifted(&self) -> bool {
        self.shift.iter().all(|&s| s == 0.0)
    }
}

/// `φ(x) = (x + e_n/2)/|x + e_n/2|² − e_n`, mapping ℝ₊ⁿ onto the unit ball.
pub fn ball_map(x: &HalfspacePoint) -> Vec<f64> {
    let mut y: Vec<f64> = x.x_prime.clone();
    y.push(x.x_n + 0.5);
    let norm2: f64 = y.iter().map(|v| v * v).sum();
    let last = y.len() - 1;
    for v in &mut y {
        *v /= norm2;
    }
    y[last] -= 1.0;
    y
}

/// Conformal factor `|x + e_n/2|^{−2}` of [`ball_map`].
pub fn ball_conformal_factor(x: &HalfspacePoint) -> f64 {
    let n2: f64 = x.x_prime.iter().map(|v| v * v).sum::<f64>() + (x.x_n + 0.5).powi(2);
    1.0 / n2
}

/// Where the inverted samples are placed.
#[derive(Debug, Clone)]
pub enum InversionTarget {
    Radial(Arc<RadialGrid>),
    /// Polar mesh of the plane; required when the shift is nonzero.
    Polar {
        r_min: f64,
        r_max: f64,
        n_radii: usize,
        n_angles: usize,
    },
}

#[derive(Debug, Clone)]
pub enum Inverted {
    Radial(RadialFn),
    Polar(PolarSamples),
}

impl Inverted {
    pub fn into_radial(self) -> Option<RadialFn> {
        match self {
            Inverted::Radial(f) => Some(f),
            Inverted::Polar(_) => None,
        }
    }
    pub fn into_polar(self) -> Option<PolarSamples> {
        match self {
            Inverted::Polar(v) => Some(v),
            Inverted::Radial(_) => None,
        }
    }
}

/// Reads a radial function at arbitrary radii: exact node values when the
/// radius is a node, monotone cubic in `log r` between nodes, the fitted
/// power law beyond the last node and the spectral interpolant inside the
/// first one.
struct OffGridReader<'a> {
    f: &'a RadialFn,
    cubic: MonotoneCubic,
}

impl<'a> OffGridReader<'a> {
    fn new(f: &'a RadialFn) -> Self {
        let x: Vec<f64> = f.grid().nodes().iter().map(|r| r.ln()).collect();
        OffGridReader {
            f,
            cubic: MonotoneCubic::new(x, f.values().to_vec()),
        }
    }

    fn eval(&self, r: f64) -> f64 {
        let nodes = self.f.grid().nodes();
        let n = nodes.len();
        if r <= nodes[0] {
            return self.f.eval(r);
        }
        if r >= nodes[n - 1] {
            let m = self.f.tail_exponent().unwrap_or(f64::INFINITY);
            if m.is_infinite() {
                return if r == nodes[n - 1] { self.f.values()[n - 1] } else { 0.0 };
            }
            return self.f.values()[n - 1] * (r / nodes[n - 1]).powf(-m);
        }
        let i = nodes.partition_point(|&v| v < r);
        for j in [i.saturating_sub(1), i] {
            if (nodes[j] - r).abs() <= 1e-12 * r {
                return self.f.values()[j];
            }
        }
        self.cubic.eval(r.ln())
    }
}

/// Samples of `|ξ|^α f(ξ/|ξ|² − shift)` for radial `f` on ℝ^d.
pub fn boundary_inversion(f: &RadialFn, spec: &InversionSpec, target: &InversionTarget) -> Result<Inverted> {
    let d = f.grid().d();
    ensure_domain!(spec.shift.len() == d, "shift must be a point of ℝ^{d}");
    ensure_domain!(f.values().iter().all(|v| v.is_finite()), "f must be finite");
    let reader = OffGridReader::new(f);
    match target {
        InversionTarget::Radial(grid) => {
            ensure_domain!(
                spec.is_unshifted(),
                "a shifted inversion is not radial; use a polar target"
            );
            ensure_domain!(grid.d() == d, "output grid dimension differs");
            let values: Vec<f64> = grid
                .nodes()
                .iter()
                .map(|&r| r.powf(spec.alpha) * reader.eval(1.0 / r))
                .collect();
            let out = RadialFn::new(grid.clone(), values)?;
            Ok(Inverted::Radial(out))
        }
        InversionTarget::Polar {
            r_min,
            r_max,
            n_radii,
            n_angles,
        } => {
            ensure_domain!(d == 2, "polar targets exist for the plane only");
            let (sx, sy) = (spec.shift[0], spec.shift[1]);
            let v = PolarSamples::from_fn(*r_min, *r_max, *n_radii, *n_angles, |x, y| {
                let r2 = x * x + y * y;
                let rho = (x / r2 - sx).hypot(y / r2 - sy);
                r2.sqrt().powf(spec.alpha) * reader.eval(rho)
            })?;
            Ok(Inverted::Polar(v))
        }
    }
}

/// `ũ(x) = |x|^{2−n} u(x/|x|²)` on `out_grid`, reading `u` through its tensor
/// spectral interpolant.
pub fn halfspace_inversion(u: &AxisymFn, n: Dim, out_grid: &Arc<HalfspaceGrid>) -> Result<AxisymFn> {
    ensure_domain!(
        u.grid().n() == n.get() && out_grid.n() == n.get(),
        "grid dimension differs from n"
    );
    let alpha = 2.0 - n.as_f64();
    let out = AxisymFn::from_fn(out_grid.clone(), |r, t| {
        let r2 = r * r + t * t;
        r2.sqrt().powf(alpha) * u.eval(r / r2, t / r2)
    });
    if out.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("inverted half-space samples are not finite".into()));
    }
    Ok(out)
}
