//! Quadrature meshes for radial boundary functions and axisymmetric
//! half-space functions, and the norms computed on them.
//!
//! A [`RadialGrid`] is a Gauss–Legendre rule in a mapped variable. The
//! `Tan` mapping `r = scale·tan θ`, `θ ∈ (0, π/2)`, covers the whole half
//! line, so its last panel edge is `r = ∞` and no truncation tail exists.
//! The `Exp` mapping `r = scale·e^x`, `x ∈ [−L, L]`, stops at a finite
//! `r_max`; the part beyond is added analytically from a fitted power law.

use std::f64::consts::FRAC_PI_4;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_domain, Error, Result};
use crate::interp::{barycentric_basis, barycentric_eval, legendre_barycentric_weights, MonotoneCubic};
use crate::kernel::sphere_area;
use crate::quad::gauss_legendre;

/// Half-width of the log-radius window used by [`Mapping::Exp`].
pub const EXP_HALF_RANGE: f64 = 9.210_340_371_976_184; // ln 1e4

/// Smallest admissible node count.
pub const MIN_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mapping {
    Tan,
    Exp,
}

/// Radial quadrature mesh: `Σ weights[i]·g(nodes[i]) ≈ ∫₀^∞ g(r) r^{d−1} dr`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    d: usize,
    mapping: Mapping,
    scale: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    z: Vec<f64>,
    bary: Vec<f64>,
    r_min: f64,
    r_max: f64,
}

impl RadialGrid {
    pub fn new(d: usize, n_nodes: usize, mapping: Mapping, scale: f64) -> Result<Self> {
        ensure_domain!(d >= 1, "radial grid needs ambient dimension d >= 1");
        ensure_domain!(
            n_nodes >= MIN_NODES,
            "radial grid needs at least {MIN_NODES} nodes, got {n_nodes}"
        );
        ensure_domain!(scale > 0.0 && scale.is_finite(), "grid scale must be positive");
        let rule = gauss_legendre(n_nodes);
        let z = rule.nodes.clone();
        let bary = legendre_barycentric_weights(&rule.nodes, &rule.weights);
        let mut nodes = Vec::with_capacity(n_nodes);
        let mut weights = Vec::with_capacity(n_nodes);
        for (&zi, &wi) in rule.nodes.iter().zip(&rule.weights) {
            let (r, dr) = unmap(mapping, scale, zi);
            nodes.push(r);
            weights.push(wi * dr * r.powi(d as i32 - 1));
        }
        let (r_min, r_max) = match mapping {
            Mapping::Tan => (0.0, f64::INFINITY),
            Mapping::Exp => (scale * (-EXP_HALF_RANGE).exp(), scale * EXP_HALF_RANGE.exp()),
        };
        Ok(RadialGrid {
            d,
            mapping,
            scale,
            nodes,
            weights,
            z,
            bary,
            r_min,
            r_max,
        })
    }

    /// Tan-mapped boundary grid for ℝ^{d}.
    pub fn tan(d: usize, n_nodes: usize, scale: f64) -> Result<Self> {
        Self::new(d, n_nodes, Mapping::Tan, scale)
    }

    /// One-dimensional height mesh on (0, ∞).
    pub fn heights(n_nodes: usize, scale: f64) -> Result<Self> {
        Self::new(1, n_nodes, Mapping::Tan, scale)
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn mapping(&self) -> Mapping {
        self.mapping
    }
    pub fn scale(&self) -> f64 {
        self.scale
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    /// Outer panel edge (∞ for the tan mapping).
    pub fn r_max(&self) -> f64 {
        self.r_max
    }
    /// Inner panel edge (0 for the tan mapping).
    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    /// Surface measure of S^{d−1}.
    pub fn sphere_area(&self) -> f64 {
        sphere_area(self.d)
    }

    /// Measure in ℝ^d carried by each node (shell volumes).
    pub fn cell_measures(&self) -> Vec<f64> {
        let s = self.sphere_area();
        self.weights.iter().map(|w| w * s).collect()
    }

    /// Mapped coordinate in [−1, 1] of radius `r`.
    pub fn mapped(&self, r: f64) -> f64 {
        match self.mapping {
            Mapping::Tan => {
                if r.is_infinite() {
                    1.0
                } else {
                    (r / self.scale).atan() / FRAC_PI_4 - 1.0
                }
            }
            Mapping::Exp => (r / self.scale).ln() / EXP_HALF_RANGE,
        }
    }

    /// Radius and `dr/dz` at mapped coordinate `z ∈ [−1, 1]`.
    pub fn radius_at(&self, z: f64) -> (f64, f64) {
        unmap(self.mapping, self.scale, z)
    }

    /// Mapped Gauss nodes in [−1, 1].
    pub fn mapped_nodes(&self) -> &[f64] {
        &self.z
    }

    pub fn barycentric_weights(&self) -> &[f64] {
        &self.bary
    }

    /// Polynomial interpolant (in the mapped variable) of `values` at `r`.
    /// Inside the mapped window only.
    pub fn interpolate(&self, values: &[f64], r: f64) -> f64 {
        barycentric_eval(&self.z, &self.bary, values, self.mapped(r).clamp(-1.0, 1.0))
    }

    /// Lagrange basis `L_i(r)` for the interpolant used by [`Self::interpolate`].
    pub fn basis_at(&self, r: f64, out: &mut [f64]) {
        barycentric_basis(&self.z, &self.bary, self.mapped(r).clamp(-1.0, 1.0), out);
    }

    /// `Σ w_i g_i`, the truncated integral of `g·r^{d−1}`.
    pub fn integrate(&self, g: &[f64]) -> f64 {
        self.weights.iter().zip(g).map(|(w, v)| w * v).sum()
    }

    /// `∫₀^∞ g(r) r^{d−1} dr` from samples of a nonnegative `g`, with a
    /// power-law tail beyond `r_max` and a divergence check on the decay.
    /// `declared_decay` is used when the samples cannot be fitted.
    pub fn integrate_with_tail(&self, g: &[f64], declared_decay: Option<f64>) -> Result<f64> {
        let body = self.integrate(g);
        let decay = fit_decay(&self.nodes, g).or(declared_decay);
        let d = self.d as f64;
        let Some(m) = decay else {
            return Ok(body);
        };
        if m <= d {
            // A slow fitted decay in samples that carry no mass is quadrature
            // noise far out, not a divergent integral.
            let r_last = self.nodes[self.nodes.len() - 1];
            let far: f64 = self
                .nodes
                .iter()
                .zip(&self.weights)
                .zip(g)
                .filter(|((r, _), _)| **r >= r_last / 10.0)
                .map(|((_, w), v)| w * v)
                .sum();
            if far <= NEGLIGIBLE_TAIL_SHARE * body.abs() {
                return Ok(body);
            }
            return Err(Error::Divergence(format!(
                "integrand decays like r^-{m:.3}, not integrable against r^{} dr",
                self.d - 1
            )));
        }
        if self.r_max.is_infinite() {
            return Ok(body);
        }
        let n = self.nodes.len();
        let anchor = g[n - 1] * self.nodes[n - 1].powf(m);
        let tail = anchor * self.r_max.powf(d - m) / (m - d);
        let head = g[0] * self.r_min.powf(d) / d;
        Ok(body + tail + head)
    }
}

/// Share of the quadrature mass in the last decade of nodes below which a
/// slow fitted decay is ignored.
pub const NEGLIGIBLE_TAIL_SHARE: f64 = 1e-4;

fn unmap(mapping: Mapping, scale: f64, z: f64) -> (f64, f64) {
    match mapping {
        Mapping::Tan => {
            let theta = FRAC_PI_4 * (z + 1.0);
            let c = theta.cos();
            if c <= 0.0 {
                return (f64::INFINITY, f64::INFINITY);
            }
            (scale * theta.tan(), scale * FRAC_PI_4 / (c * c))
        }
        Mapping::Exp => {
            let r = scale * (EXP_HALF_RANGE * z).exp();
            (r, EXP_HALF_RANGE * r)
        }
    }
}

/// Decay exponent `m` of `g ~ A r^{−m}` from a log-log least-squares fit over
/// the last decade of nodes (at least the last four). `None` when the tail
/// samples are not all positive.
pub fn fit_decay(nodes: &[f64], g: &[f64]) -> Option<f64> {
    let n = nodes.len();
    if n < 4 {
        return None;
    }
    let r_last = nodes[n - 1];
    let mut start = n - 4;
    while start > 0 && nodes[start - 1] >= r_last / 10.0 {
        start -= 1;
    }
    let tail = &g[start..];
    // a tail at roundoff level relative to the peak carries no decay information
    let peak = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if tail.iter().all(|&v| v.abs() <= 1e-13 * peak) {
        return Some(f64::INFINITY);
    }
    if tail.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return None;
    }
    // Theil–Sen: one corrupted end sample must not flip the verdict
    let xs: Vec<f64> = nodes[start..].iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|v| v.ln()).collect();
    let mut slopes = Vec::with_capacity(xs.len() * (xs.len() - 1) / 2);
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            slopes.push((ys[j] - ys[i]) / (xs[j] - xs[i]));
        }
    }
    slopes.sort_by(f64::total_cmp);
    let k = slopes.len();
    let median = if k % 2 == 1 {
        slopes[k / 2]
    } else {
        0.5 * (slopes[k / 2 - 1] + slopes[k / 2])
    };
    Some(-median)
}

/// Samples of a radial function on ℝ^d at the nodes of a [`RadialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct RadialFn {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
    value_at_zero: f64,
    tail_exponent: Option<f64>,
}

impl RadialFn {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        ensure_domain!(
            values.len() == grid.len(),
            "expected {} samples, got {}",
            grid.len(),
            values.len()
        );
        ensure_domain!(values.iter().all(|v| v.is_finite()), "non-finite sample");
        let value_at_zero = match grid.mapping() {
            Mapping::Tan => grid.interpolate(&values, 0.0),
            Mapping::Exp => values[0],
        };
        let tail_exponent = fit_decay(grid.nodes(), &values.iter().map(|v| v.abs()).collect::<Vec<_>>());
        Ok(RadialFn {
            grid,
            values,
            value_at_zero,
            tail_exponent,
        })
    }

    /// Sample `f` at every node; `f(0)` becomes `value_at_zero`.
    pub fn from_fn<F: Fn(f64) -> f64>(grid: Arc<RadialGrid>, f: F) -> Self {
        let values: Vec<f64> = grid.nodes().iter().map(|&r| f(r)).collect();
        let value_at_zero = f(0.0);
        let tail_exponent = fit_decay(grid.nodes(), &values.iter().map(|v| v.abs()).collect::<Vec<_>>());
        RadialFn {
            grid,
            values,
            value_at_zero,
            tail_exponent,
        }
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        RadialFn {
            grid,
            values: vec![0.0; n],
            value_at_zero: 0.0,
            tail_exponent: None,
        }
    }

    pub fn with_tail_exponent(mut self, exponent: f64) -> Self {
        self.tail_exponent = Some(exponent);
        self
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn value_at_zero(&self) -> f64 {
        self.value_at_zero
    }
    /// Decay power of |f| at infinity (fitted or declared).
    pub fn tail_exponent(&self) -> Option<f64> {
        self.tail_exponent
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    /// Value at an arbitrary radius. Inside the mapped window this is the
    /// spectral interpolant; beyond `r_max` the fitted power law is used.
    pub fn eval(&self, r: f64) -> f64 {
        let g = &self.grid;
        if r <= 0.0 {
            return self.value_at_zero;
        }
        if g.mapping() == Mapping::Exp {
            let n = g.len();
            if r < g.nodes()[0] {
                return self.values[0];
            }
            if r > g.nodes()[n - 1] {
                let m = self.tail_exponent.unwrap_or(f64::INFINITY);
                return self.values[n - 1] * (r / g.nodes()[n - 1]).powf(-m);
            }
        }
        g.interpolate(&self.values, r)
    }

    pub fn map_values<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        let values: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        RadialFn::from_parts(self.grid.clone(), values, f(self.value_at_zero))
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.map_values(|v| c * v);
        out.tail_exponent = self.tail_exponent;
        out
    }

    /// The L^p-preserving dilation `λ^{−d/p} f(·/λ)` resampled on the same grid.
    ///
    /// Off-node values come from the spectral interpolant unless it strays
    /// from a local monotone interpolant by more than a tenth of the nearby
    /// samples, which happens near kinks and in deep tails.
    pub fn dilated(&self, lambda: f64, p: f64) -> Self {
        let c = lambda.powf(-(self.grid.d() as f64) / p);
        let local = self.local_interpolant();
        let values = self
            .grid
            .nodes()
            .iter()
            .map(|&r| {
                let rho = r / lambda;
                let spectral = self.eval(rho);
                let Some(local) = &local else { return c * spectral };
                let z = self.grid.mapped(rho).clamp(-1.0, 1.0);
                let (a, b) = local.bracket(z);
                let fallback = local.eval(z);
                if (spectral - fallback).abs() <= 0.1 * a.abs().max(b.abs()) {
                    c * spectral
                } else {
                    c * fallback
                }
            })
            .collect();
        RadialFn {
            grid: self.grid.clone(),
            values,
            value_at_zero: c * self.value_at_zero,
            tail_exponent: self.tail_exponent,
        }
    }

    /// Monotone cubic through the samples in the mapped variable, closed off
    /// by the value at the origin and the limit at infinity. Tan grids only.
    fn local_interpolant(&self) -> Option<MonotoneCubic> {
        if self.grid.mapping() != Mapping::Tan {
            return None;
        }
        let n = self.values.len();
        let at_infinity = match self.tail_exponent {
            Some(m) if m > 0.0 => 0.0,
            _ => self.values[n - 1],
        };
        let mut x = Vec::with_capacity(n + 2);
        let mut y = Vec::with_capacity(n + 2);
        x.push(-1.0);
        y.push(self.value_at_zero);
        x.extend_from_slice(self.grid.mapped_nodes());
        y.extend_from_slice(&self.values);
        x.push(1.0);
        y.push(at_infinity);
        Some(MonotoneCubic::new(x, y))
    }

    pub(crate) fn from_parts(grid: Arc<RadialGrid>, values: Vec<f64>, value_at_zero: f64) -> Self {
        let tail_exponent = fit_decay(grid.nodes(), &values.iter().map(|v| v.abs()).collect::<Vec<_>>());
        RadialFn {
            grid,
            values,
            value_at_zero,
            tail_exponent,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,value\n");
        for (r, v) in self.grid.nodes().iter().zip(&self.values) {
            let _ = writeln!(out, "{r:e},{v:e}");
        }
        out
    }

    /// Parse the `r,value` schema back onto `grid`; radii must match the nodes.
    pub fn from_csv(grid: Arc<RadialGrid>, text: &str) -> Result<Self> {
        let rows = parse_csv(text, &["r", "value"])?;
        ensure_domain!(rows.len() == grid.len(), "row count does not match grid");
        for (row, r) in rows.iter().zip(grid.nodes()) {
            ensure_domain!((row[0] - r).abs() <= 1e-12 * r.abs().max(1.0), "radius mismatch");
        }
        RadialFn::new(grid, rows.into_iter().map(|row| row[1]).collect())
    }
}

fn parse_csv(text: &str, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let found: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Domain(format!("bad csv header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    ensure_domain!(found == header, "expected header {header:?}, found {found:?}");
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Domain(format!("bad csv row: {e}")))?;
            rec.iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Domain(format!("bad number {s:?}: {e}")))
                })
                .collect()
        })
        .collect()
}

/// Product mesh for axisymmetric functions on ℝ₊ⁿ: radius |x'| × height x_n.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfspaceGrid {
    radial: Arc<RadialGrid>,
    heights: Arc<RadialGrid>,
}

impl HalfspaceGrid {
    pub fn new(radial: Arc<RadialGrid>, heights: Arc<RadialGrid>) -> Result<Self> {
        ensure_domain!(heights.d() == 1, "height mesh must be one-dimensional");
        ensure_domain!(
            heights.nodes().windows(2).all(|w| w[0] < w[1]) && heights.nodes()[0] > 0.0,
            "heights must be positive and increasing"
        );
        Ok(HalfspaceGrid { radial, heights })
    }

    /// Tan-mapped radius × tan-mapped height mesh for ℝ₊ⁿ.
    pub fn tan(n: usize, n_radial: usize, n_heights: usize, scale: f64) -> Result<Self> {
        ensure_domain!(n >= 2, "half-space dimension must be at least 2");
        Self::new(
            Arc::new(RadialGrid::tan(n - 1, n_radial, scale)?),
            Arc::new(RadialGrid::heights(n_heights, scale)?),
        )
    }

    pub fn radial(&self) -> &Arc<RadialGrid> {
        &self.radial
    }
    pub fn heights(&self) -> &Arc<RadialGrid> {
        &self.heights
    }
    /// Dimension n of the half-space.
    pub fn n(&self) -> usize {
        self.radial.d() + 1
    }
    pub fn len(&self) -> usize {
        self.radial.len() * self.heights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    #[inline]
    pub fn index(&self, j: usize, k: usize) -> usize {
        j * self.heights.len() + k
    }

    /// Volume carried by node (j, k), laid out like [`AxisymFn::values`].
    pub fn cell_measures(&self) -> Vec<f64> {
        let s = self.radial.sphere_area();
        let mut out = Vec::with_capacity(self.len());
        for wr in self.radial.weights() {
            for wt in self.heights.weights() {
                out.push(s * wr * wt);
            }
        }
        out
    }
}

/// Samples `u(r_j, t_k)` of an axisymmetric half-space function.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisymFn {
    grid: Arc<HalfspaceGrid>,
    values: Vec<f64>,
}

impl AxisymFn {
    pub fn new(grid: Arc<HalfspaceGrid>, values: Vec<f64>) -> Result<Self> {
        ensure_domain!(values.len() == grid.len(), "sample count does not match grid");
        ensure_domain!(values.iter().all(|v| v.is_finite()), "non-finite sample");
        Ok(AxisymFn { grid, values })
    }

    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: Arc<HalfspaceGrid>, f: F) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for &r in grid.radial().nodes() {
            for &t in grid.heights().nodes() {
                values.push(f(r, t));
            }
        }
        AxisymFn { grid, values }
    }

    pub fn zeros(grid: Arc<HalfspaceGrid>) -> Self {
        let n = grid.len();
        AxisymFn {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn grid(&self) -> &Arc<HalfspaceGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn at(&self, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(j, k)]
    }

    pub fn map_values<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        AxisymFn {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Tensor-product spectral interpolant at an arbitrary (r, t), t > 0.
    pub fn eval(&self, r: f64, t: f64) -> f64 {
        let radial = self.grid.radial();
        let heights = self.grid.heights();
        let mut lr = vec![0.0; radial.len()];
        let mut lt = vec![0.0; heights.len()];
        radial.basis_at(r, &mut lr);
        heights.basis_at(t, &mut lt);
        let nt = heights.len();
        let mut acc = 0.0;
        for (j, a) in lr.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            let row = &self.values[j * nt..(j + 1) * nt];
            acc += a * row.iter().zip(&lt).map(|(v, b)| v * b).sum::<f64>();
        }
        acc
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,t,value\n");
        for (j, r) in self.grid.radial().nodes().iter().enumerate() {
            for (k, t) in self.grid.heights().nodes().iter().enumerate() {
                let _ = writeln!(out, "{r:e},{t:e},{:e}", self.at(j, k));
            }
        }
        out
    }

    pub fn from_csv(grid: Arc<HalfspaceGrid>, text: &str) -> Result<Self> {
        let rows = parse_csv(text, &["r", "t", "value"])?;
        ensure_domain!(rows.len() == grid.len(), "row count does not match grid");
        let values = rows.into_iter().map(|row| row[2]).collect();
        AxisymFn::new(grid, values)
    }
}

/// `‖f‖_{L^p(ℝ^d)}` of a radial function.
pub fn lp_norm_boundary(f: &RadialFn, p: f64) -> Result<f64> {
    ensure_domain!(p >= 1.0 && p.is_finite(), "lp_norm_boundary needs finite p >= 1");
    let g: Vec<f64> = f.values().iter().map(|v| v.abs().powf(p)).collect();
    let declared = f.tail_exponent().map(|k| k * p);
    let integral = f.grid().integrate_with_tail(&g, declared)?;
    Ok((f.grid().sphere_area() * integral).powf(1.0 / p))
}

/// `∫_{|ξ| < radius} |f|^p dξ`. The whole mapped integrand
/// `|f|^p r^{d−1} dr/dz` is interpolated and integrated exactly; interpolating
/// `f` alone lets small overshoots far out pick up the `r^{d−1}` weight.
pub fn ball_mass(f: &RadialFn, p: f64, radius: f64) -> f64 {
    let grid = f.grid();
    if radius <= 0.0 {
        return 0.0;
    }
    let d = grid.d() as f64;
    let z_hi = grid.mapped(radius.min(grid.r_max())).clamp(-1.0, 1.0);
    let integrand: Vec<f64> = grid
        .mapped_nodes()
        .iter()
        .zip(f.values())
        .map(|(&z, v)| {
            let (r, jac) = grid.radius_at(z);
            v.abs().powf(p) * r.powf(d - 1.0) * jac
        })
        .collect();
    let rule = gauss_legendre(grid.len().div_ceil(2) + 1);
    let mut total = 0.0;
    let mid = 0.5 * (z_hi - 1.0);
    for (lo, hi) in [(-1.0, mid), (mid, z_hi)] {
        rule.for_each_on(lo, hi, |z, w| {
            total += w * barycentric_eval(grid.mapped_nodes(), grid.barycentric_weights(), &integrand, z);
        });
    }
    if grid.mapping() == Mapping::Exp {
        total += f.values()[0].abs().powf(p) * grid.r_min().powf(d) / d;
        if radius > grid.r_max() {
            let m = f.tail_exponent().unwrap_or(f64::INFINITY) * p;
            let n = grid.len();
            let anchor = f.values()[n - 1].abs().powf(p) * grid.nodes()[n - 1].powf(m);
            if m > d {
                total += anchor * (grid.r_max().powf(d - m) - radius.powf(d - m)) / (m - d);
            }
        }
    }
    grid.sphere_area() * total
}

/// `‖u‖_{L^p(ℝ₊ⁿ)}` of an axisymmetric function.
pub fn lp_norm_halfspace(u: &AxisymFn, p: f64) -> Result<f64> {
    Ok(halfspace_integral_abs_pow(u, p)?.powf(1.0 / p))
}

/// `∫_{ℝ₊ⁿ} |u|^p dx` with tail control in both directions.
pub fn halfspace_integral_abs_pow(u: &AxisymFn, p: f64) -> Result<f64> {
    ensure_domain!(p >= 1.0 && p.is_finite(), "lp_norm_halfspace needs finite p >= 1");
    let grid = u.grid();
    let radial = grid.radial();
    let heights = grid.heights();
    let nt = heights.len();
    let nr = radial.len();
    // Per-height radial integrals, then the height integral.
    // Rows far above the boundary are not yet in their power-law regime at
    // the last radial nodes, so only the lowest row is held to the strict
    // decay check.
    let mut column = vec![0.0; nr];
    let mut per_height = Vec::with_capacity(nt);
    for k in 0..nt {
        for (j, c) in column.iter_mut().enumerate() {
            *c = u.values()[j * nt + k].abs().powf(p);
        }
        let row = if k == 0 {
            radial.integrate_with_tail(&column, None)?
        } else {
            radial
                .integrate_with_tail(&column, None)
                .unwrap_or_else(|_| radial.integrate(&column))
        };
        per_height.push(row);
    }
    let total = heights.integrate_with_tail(&per_height, None)?;
    Ok(radial.sphere_area() * total)
}

/// Measure of `{x : u(x) > level}` from quadrature cell measures.
pub fn distribution_mass(u: &AxisymFn, level: f64) -> f64 {
    u.values()
        .iter()
        .zip(u.grid().cell_measures())
        .filter(|(v, _)| **v > level)
        .map(|(_, m)| m)
        .sum()
}

/// `sup_t t·|{|u| > t}|^{1/p}` over thresholds equal to sampled values.
pub fn weak_lp_norm(u: &AxisymFn, p: f64) -> Result<f64> {
    ensure_domain!(p > 0.0, "weak L^p needs p > 0");
    let measures = u.grid().cell_measures();
    let mut cells: Vec<(f64, f64)> = u.values().iter().map(|v| v.abs()).zip(measures).collect();
    Ok(weak_sup(&mut cells, p))
}

/// Weak-type supremum over (value, measure) cells; values must be ≥ 0.
pub(crate) fn weak_sup(cells: &mut [(f64, f64)], p: f64) -> f64 {
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = 0.0f64;
    let mut above = 0.0f64;
    let mut i = 0;
    while i < cells.len() {
        let level = cells[i].0;
        if level <= 0.0 {
            break;
        }
        best = best.max(level * above.powf(1.0 / p));
        while i < cells.len() && cells[i].0 == level {
            above += cells[i].1;
            i += 1;
        }
    }
    best
}

/// Samples on a polar mesh (radius × angle) of the plane, used for
/// non-radial functions produced by shifted inversions.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarSamples {
    radii: Vec<f64>,
    n_angles: usize,
    values: Vec<f64>,
}

impl PolarSamples {
    /// Uniform radii `r_min..=r_max` (inclusive) and `n_angles` uniform angles.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(
        r_min: f64,
        r_max: f64,
        n_radii: usize,
        n_angles: usize,
        f: F,
    ) -> Result<Self> {
        ensure_domain!(
            r_min > 0.0 && r_max > r_min,
            "polar radii must satisfy 0 < r_min < r_max"
        );
        ensure_domain!(n_radii >= 4 && n_angles >= 8, "polar mesh too coarse");
        let radii: Vec<f64> = (0..n_radii)
            .map(|i| r_min + (r_max - r_min) * i as f64 / (n_radii - 1) as f64)
            .collect();
        let mut values = Vec::with_capacity(n_radii * n_angles);
        for &r in &radii {
            for a in 0..n_angles {
                let phi = std::f64::consts::TAU * a as f64 / n_angles as f64;
                values.push(f(r * phi.cos(), r * phi.sin()));
            }
        }
        ensure_domain!(values.iter().all(|v| v.is_finite()), "non-finite polar sample");
        Ok(PolarSamples {
            radii,
            n_angles,
            values,
        })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }
    pub fn n_angles(&self) -> usize {
        self.n_angles
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn r_max(&self) -> f64 {
        *self.radii.last().expect("nonempty")
    }
    pub fn r_min(&self) -> f64 {
        self.radii[0]
    }

    /// Local bicubic (4×4 Lagrange, periodic in angle) interpolation at (x, y).
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let r = x.hypot(y);
        let nr = self.radii.len();
        let dr = self.radii[1] - self.radii[0];
        let fr = ((r - self.radii[0]) / dr).clamp(0.0, (nr - 1) as f64);
        let ir = (fr.floor() as isize - 1).clamp(0, nr as isize - 4) as usize;
        let na = self.n_angles as f64;
        let mut phi = y.atan2(x);
        if phi < 0.0 {
            phi += std::f64::consts::TAU;
        }
        let fa = phi / std::f64::consts::TAU * na;
        let ia = fa.floor() as isize - 1;
        let wr = lagrange4(fr - ir as f64);
        let wa = lagrange4(fa - ia as f64);
        let mut acc = 0.0;
        for (a, wr_a) in wr.iter().enumerate() {
            let row = (ir + a) * self.n_angles;
            for (b, wa_b) in wa.iter().enumerate() {
                let col = (ia + b as isize).rem_euclid(self.n_angles as isize) as usize;
                acc += wr_a * wa_b * self.values[row + col];
            }
        }
        acc
    }
}

/// Cubic Lagrange weights for nodes 0, 1, 2, 3 at position `s`.
fn lagrange4(s: f64) -> [f64; 4] {
    [
        -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0,
        s * (s - 2.0) * (s - 3.0) / 2.0,
        -s * (s - 1.0) * (s - 3.0) / 2.0,
        s * (s - 1.0) * (s - 2.0) / 6.0,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn grid(d: usize, n: usize) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::tan(d, n, 1.0).unwrap())
    }

    #[test]
    fn gaussian_and_cauchy_moments() {
        let g = grid(2, 128);
        let v: f64 = g.integrate(&g.nodes().iter().map(|r| (-r * r).exp()).collect::<Vec<_>>());
        assert!((v - 0.5).abs() < 1e-10, "{v}");
        let g1 = grid(1, 128);
        let v = g1.integrate(&g1.nodes().iter().map(|r| 1.0 / (1.0 + r * r)).collect::<Vec<_>>());
        assert!((v - PI / 2.0).abs() < 1e-10, "{v}");
        for n in [64, 96] {
            let g = grid(3, n);
            let v = g.integrate(&g.nodes().iter().map(|r| (-r * r).exp()).collect::<Vec<_>>());
            assert!((v - PI.sqrt() / 4.0).abs() < 1e-10, "N={n}: {v}");
        }
    }

    #[test]
    fn coarse_grid_convergence() {
        // measured: N=16 error on the d=2 Gaussian moment is ~4e-6
        let g = grid(2, 16);
        let v = g.integrate(&g.nodes().iter().map(|r| (-r * r).exp()).collect::<Vec<_>>());
        assert!((v - 0.5).abs() < 1e-4, "{v}");
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(RadialGrid::tan(0, 32, 1.0).is_err());
        assert!(RadialGrid::tan(2, 8, 1.0).is_err());
        assert!(RadialGrid::tan(2, 32, -1.0).is_err());
    }

    #[test]
    fn grid_invariants() {
        for mapping in [Mapping::Tan, Mapping::Exp] {
            let g = RadialGrid::new(2, 40, mapping, 0.5).unwrap();
            assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
            assert!(g.nodes()[0] > 0.0);
            assert!(g.weights().iter().all(|&w| w > 0.0));
            assert!(g.r_max() > *g.nodes().last().unwrap());
        }
    }

    #[test]
    fn boundary_norm_closed_forms() {
        let g = grid(2, 128);
        let f = RadialFn::from_fn(g.clone(), |r| (1.0 + r * r).powf(-0.5));
        assert_relative_eq!(lp_norm_boundary(&f, 4.0).unwrap(), PI.powf(0.25), max_relative = 1e-12);
        let f = RadialFn::from_fn(g.clone(), |r| (1.0 + r * r).powf(-1.5));
        assert_relative_eq!(
            lp_norm_boundary(&f, 4.0 / 3.0).unwrap(),
            PI.powf(0.75),
            max_relative = 1e-12
        );
        assert_eq!(lp_norm_boundary(&RadialFn::zeros(g), 2.0).unwrap(), 0.0);
    }

    #[test]
    fn exp_mapping_uses_tail_correction() {
        let g = Arc::new(RadialGrid::new(2, 96, Mapping::Exp, 1.0).unwrap());
        let f = RadialFn::from_fn(g, |r| (1.0 + r * r).powf(-0.5));
        assert_relative_eq!(lp_norm_boundary(&f, 4.0).unwrap(), PI.powf(0.25), max_relative = 1e-9);
    }

    #[test]
    fn divergent_tail_detected() {
        let g = grid(2, 64);
        let f = RadialFn::from_fn(g, |r| (1.0 + r * r).powf(-0.5));
        assert!(matches!(lp_norm_boundary(&f, 2.0), Err(Error::Divergence(_))));
    }

    #[test]
    fn halfspace_norm_of_shifted_inverse_distance() {
        // ∫_{ℝ₊³} |x+e₃|^{-6} dx = π/6
        let hg = Arc::new(HalfspaceGrid::tan(3, 96, 64, 1.0).unwrap());
        let u = AxisymFn::from_fn(hg.clone(), |r, t| (r * r + (t + 1.0).powi(2)).powf(-0.5));
        assert_relative_eq!(
            lp_norm_halfspace(&u, 6.0).unwrap(),
            (PI / 6.0).powf(1.0 / 6.0),
            max_relative = 1e-10
        );
        assert_eq!(lp_norm_halfspace(&AxisymFn::zeros(hg), 3.0).unwrap(), 0.0);
    }

    #[test]
    fn distribution_and_weak_norm_basics() {
        let hg = Arc::new(HalfspaceGrid::tan(3, 32, 24, 1.0).unwrap());
        let zero = AxisymFn::zeros(hg.clone());
        assert_eq!(distribution_mass(&zero, 0.1), 0.0);
        assert_eq!(weak_lp_norm(&zero, 1.5).unwrap(), 0.0);
        let u = AxisymFn::from_fn(hg.clone(), |r, t| 1.0 / (1.0 + r * r + t * t));
        let w1 = weak_lp_norm(&u, 1.5).unwrap();
        let w2 = weak_lp_norm(&u.map_values(|v| 2.0 * v), 1.5).unwrap();
        assert_eq!(w2, 2.0 * w1);
        let mut last = f64::INFINITY;
        for k in 1..20 {
            let m = distribution_mass(&u, k as f64 / 20.0);
            assert!(m <= last);
            last = m;
        }
    }

    #[test]
    fn csv_round_trip() {
        let g = grid(2, 20);
        let f = RadialFn::from_fn(g.clone(), |r| (-r).exp());
        let back = RadialFn::from_csv(g, &f.to_csv()).unwrap();
        assert_eq!(back.values(), f.values());
        let hg = Arc::new(HalfspaceGrid::tan(3, 16, 16, 1.0).unwrap());
        let u = AxisymFn::from_fn(hg.clone(), |r, t| r + t);
        assert!(u.to_csv().starts_with("r,t,value\n"));
        let back = AxisymFn::from_csv(hg, &u.to_csv()).unwrap();
        assert_eq!(back.values(), u.values());
    }

    #[test]
    fn interpolation_is_spectral_for_extremals() {
        let g = grid(2, 96);
        let f = RadialFn::from_fn(g, |r| (1.0 + r * r).powf(-0.5));
        for r in [0.0, 0.013, 0.5, 1.7, 33.0, 1e3] {
            assert!((f.eval(r) - (1.0 + r * r).powf(-0.5)).abs() < 1e-12, "r={r}");
        }
    }

    #[test]
    fn polar_interpolation() {
        let ps = PolarSamples::from_fn(0.1, 3.0, 80, 96, |x, y| (x - 0.5).powi(2) + y * y).unwrap();
        let v = ps.eval(1.1, -0.4);
        assert!((v - (0.6f64.powi(2) + 0.16)).abs() < 1e-5, "{v}");
    }
}
