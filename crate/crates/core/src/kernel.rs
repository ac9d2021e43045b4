//! The half-space Poisson kernel and its radial profiles.
//!
//! `P(x, ξ) = 2/(n ω_n) · x_n / (|x' − ξ|² + x_n²)^{n/2}` on ℝ₊ⁿ × ℝ^{n−1}.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{ensure_domain, Error, Result};
use crate::quad;

/// Dimension `n` of the half-space ℝ₊ⁿ. Always at least 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Dim(usize);

impl Dim {
    pub fn new(n: usize) -> Result<Self> {
        ensure_domain!(n >= 2, "half-space dimension must be at least 2, got {n}");
        Ok(Dim(n))
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }

    /// Dimension of the boundary ℝ^{n−1}.
    pub fn boundary(self) -> usize {
        self.0 - 1
    }

    /// The normalizing constant 2/(n ω_n).
    pub fn kernel_constant(self) -> f64 {
        2.0 / (self.as_f64() * unit_ball_volume(self.0).expect("n >= 2"))
    }
}

impl TryFrom<usize> for Dim {
    type Error = Error;
    fn try_from(n: usize) -> Result<Self> {
        Dim::new(n)
    }
}

impl From<Dim> for usize {
    fn from(d: Dim) -> usize {
        d.0
    }
}

/// A point of the boundary ℝ^{n−1}.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoundaryPoint(pub Vec<f64>);

/// A point `x = (x', x_n)` of the open upper half-space.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspacePoint {
    pub x_prime: Vec<f64>,
    pub x_n: f64,
}

impl HalfspacePoint {
    pub fn new(x_prime: Vec<f64>, x_n: f64) -> Result<Self> {
        ensure_domain!(x_n > 0.0, "half-space points need x_n > 0, got {x_n}");
        ensure_domain!(
            x_prime.iter().all(|v| v.is_finite()),
            "non-finite tangential coordinate"
        );
        Ok(HalfspacePoint { x_prime, x_n })
    }

    pub fn dim(&self) -> usize {
        self.x_prime.len() + 1
    }
}

/// Volume ω_n of the unit ball in ℝⁿ.
pub fn unit_ball_volume(n: usize) -> Result<f64> {
    ensure_domain!(n >= 1, "unit ball volume needs n >= 1");
    Ok(PI.powf(n as f64 / 2.0) / gamma_half(n + 2))
}

/// `Γ(k/2)` for a positive integer `k`, by the half-step recurrence.
pub fn gamma_half(k: usize) -> f64 {
    assert!(k >= 1, "Γ(k/2) needs k >= 1");
    let (mut value, mut j) = if k.is_multiple_of(2) { (1.0, 2) } else { (PI.sqrt(), 1) };
    while j < k {
        value *= j as f64 / 2.0;
        j += 2;
    }
    value
}

/// Surface area of the unit sphere S^{d−1} ⊂ ℝ^d, i.e. 2π^{d/2}/Γ(d/2).
/// For d = 1 this is the counting measure of {−1, 1}.
pub fn sphere_area(d: usize) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / gamma_half(d)
}

pub fn poisson_kernel(n: Dim, x: &HalfspacePoint, xi: &BoundaryPoint) -> Result<f64> {
    ensure_domain!(x.x_n > 0.0, "poisson kernel needs x_n > 0");
    ensure_domain!(
        x.x_prime.len() == n.boundary() && xi.0.len() == n.boundary(),
        "point dimensions do not match n = {}",
        n.get()
    );
    let rho2: f64 = x.x_prime.iter().zip(&xi.0).map(|(a, b)| (a - b) * (a - b)).sum();
    pt_profile(n, x.x_n, rho2.sqrt())
}

/// `P_t` at radius `rho`.
pub fn pt_profile(n: Dim, t: f64, rho: f64) -> Result<f64> {
    ensure_domain!(t > 0.0, "profile height must be positive, got {t}");
    ensure_domain!(rho >= 0.0, "radius must be nonnegative, got {rho}");
    Ok(pt_unchecked(n, t, rho))
}

#[inline]
pub(crate) fn pt_unchecked(n: Dim, t: f64, rho: f64) -> f64 {
    n.kernel_constant() * t / (rho * rho + t * t).powf(n.as_f64() / 2.0)
}

/// `Q_t(ξ) = P_t(ξ)·|ξ|/t` at radius `rho`.
pub fn qt_profile(n: Dim, t: f64, rho: f64) -> Result<f64> {
    Ok(pt_profile(n, t, rho)? * rho / t)
}

/// Default Gauss–Legendre order for [`pt_lp_norm`].
pub const PT_NORM_ORDER: usize = 128;

/// `‖P_t‖_{L^p(ℝ^{n−1})}`; `p = f64::INFINITY` selects the peak value.
pub fn pt_lp_norm(n: Dim, p: f64, t: f64) -> Result<f64> {
    pt_lp_norm_with_order(n, p, t, PT_NORM_ORDER)
}

pub fn pt_lp_norm_with_order(n: Dim, p: f64, t: f64, order: usize) -> Result<f64> {
    ensure_domain!(t > 0.0, "profile height must be positive, got {t}");
    let nf = n.as_f64();
    let d = n.boundary();
    if p <= (nf - 1.0) / nf || p.is_nan() {
        return Err(Error::Divergence(format!(
            "P_t is not in L^{p} for n = {} (need p > (n-1)/n)",
            n.get()
        )));
    }
    if p.is_infinite() {
        return Ok(pt_unchecked(n, t, 0.0));
    }
    // rho = t·tan(θ): the half-line becomes [0, π/2).
    let rule = quad::gauss_legendre(order);
    let radial = rule.integrate(0.0, FRAC_PI_2, |theta| {
        let (s, c) = theta.sin_cos();
        let rho = t * s / c;
        let jac = t / (c * c);
        pt_unchecked(n, t, rho).powf(p) * rho.powi(d as i32 - 1) * jac
    });
    Ok((sphere_area(d) * radial).powf(1.0 / p))
}
