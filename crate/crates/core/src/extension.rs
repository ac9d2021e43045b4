//! The Poisson extension `P` for radial boundary data and its dual `T`.
//!
//! For radial `f` the extension reduces to a one-dimensional integral
//! against the ring kernel
//!
//! `K(r, s, t) = 2/(n ω_n) · t · ∫_{S^{n−2}} dσ(ω) / (r² + s² − 2rsω₁ + t²)^{n/2}`,
//!
//! so that `(Pf)(r, t) = ∫₀^∞ K(r, s, t) f(s) s^{n−2} ds`. The operator is
//! assembled once per pair of grids as a dense matrix acting on boundary
//! samples, which enter through an interpolant in the mapped radius. Since
//! `K` is symmetric in `(r, s)`, the same rows integrate `T` directly, one
//! height at a time; `⟨Tu, f⟩ = ⟨u, Pf⟩` then holds to quadrature accuracy.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{ensure_domain, Error, Result};
use crate::grids::{fit_decay, AxisymFn, HalfspaceGrid, RadialFn, RadialGrid};
use crate::interp::{barycentric_basis, local_lagrange_basis};
use crate::kernel::{sphere_area, Dim};
use crate::quad::{for_each_panel_node, gauss_legendre, graded_breaks, merge_breaks};

/// Default angular Gauss–Legendre order.
pub const DEFAULT_RING_ORDER: usize = 64;
/// Order of each panel in graded composite rules.
const PANEL_ORDER: usize = 20;
/// Uniform panels laid over the mapped radial window before grading.
const BASE_PANELS: usize = 8;

/// Which radial profile a convolution uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// `P_t`
    Poisson,
    /// `Q_t = P_t·|ξ|/t`
    Q,
}

/// Angular reduction of the Poisson kernel for radial data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingKernel {
    n: Dim,
    quad_order: usize,
}

impl RingKernel {
    pub fn new(n: Dim, quad_order: usize) -> Result<Self> {
        ensure_domain!(quad_order >= 32, "ring kernel order must be at least 32");
        Ok(RingKernel { n, quad_order })
    }

    pub fn with_default_order(n: Dim) -> Self {
        RingKernel {
            n,
            quad_order: DEFAULT_RING_ORDER,
        }
    }

    pub fn n(&self) -> Dim {
        self.n
    }

    pub fn quad_order(&self) -> usize {
        self.quad_order
    }

    /// `K(r, s, t)`.
    pub fn eval(&self, r: f64, s: f64, t: f64) -> Result<f64> {
        ensure_domain!(t > 0.0, "ring kernel needs t > 0, got {t}");
        ensure_domain!(r >= 0.0 && s >= 0.0, "radii must be nonnegative");
        Ok(self.eval_profile(r, s, t, Profile::Poisson))
    }

    /// The `Q_t` analogue of [`Self::eval`].
    pub fn eval_q(&self, r: f64, s: f64, t: f64) -> Result<f64> {
        ensure_domain!(t > 0.0, "ring kernel needs t > 0, got {t}");
        ensure_domain!(r >= 0.0 && s >= 0.0, "radii must be nonnegative");
        Ok(self.eval_profile(r, s, t, Profile::Q))
    }

    pub(crate) fn eval_profile(&self, r: f64, s: f64, t: f64, profile: Profile) -> f64 {
        let n = self.n.get();
        let c = self.n.kernel_constant() * t;
        let t2 = t * t;
        let integrand = |rho2: f64| -> f64 {
            let base = inv_pow_half(rho2 + t2, n);
            match profile {
                Profile::Poisson => base,
                Profile::Q => base * rho2.max(0.0).sqrt() / t,
            }
        };
        c * self.angular(r, s, t, integrand)
    }

    /// `∫_{S^{d−1}} g(r² + s² − 2rs ω₁) dσ(ω)` with d = n − 1.
    fn angular<G: Fn(f64) -> f64>(&self, r: f64, s: f64, t: f64, g: G) -> f64 {
        let d = self.n.boundary();
        let b = 2.0 * r * s;
        if d == 1 {
            return g((r - s) * (r - s)) + g((r + s) * (r + s));
        }
        let weight_power = d as i32 - 2;
        let shell = sphere_area(d - 1);
        if b == 0.0 {
            // integrand is constant on the sphere
            return sphere_area(d) * g(r * r + s * s);
        }
        // A − B cos ψ ≈ δ² + rs ψ² near ψ = 0
        let delta = ((r - s) * (r - s) + t * t).sqrt();
        let width = delta / (r * s).sqrt();
        let pi = std::f64::consts::PI;
        let eval = |psi: f64| {
            // 2rs(1 − cos ψ) = 4rs sin²(ψ/2), accurate near ψ = 0
            let h = (0.5 * psi).sin();
            let rho2 = (r - s) * (r - s) + 2.0 * b * h * h;
            g(rho2) * psi.sin().powi(weight_power)
        };
        let integral = if width >= 1.0 {
            gauss_legendre(self.quad_order).integrate(0.0, pi, eval)
        } else {
            let breaks = graded_breaks(0.0, pi, 0.0, width);
            crate::quad::integrate_panels(&breaks, PANEL_ORDER, eval)
        };
        shell * integral
    }
}

/// `x^{−n/2}` without a general `powf`.
#[inline]
fn inv_pow_half(x: f64, n: usize) -> f64 {
    if n.is_multiple_of(2) {
        x.powi(-((n / 2) as i32))
    } else {
        1.0 / (x.powi(((n - 1) / 2) as i32) * x.sqrt())
    }
}

/// Evaluate `K(r, s, t)`.
pub fn ring_kernel(n: Dim, r: f64, s: f64, t: f64) -> Result<f64> {
    RingKernel::with_default_order(n).eval(r, s, t)
}

/// Coefficients `c_i` with `Σ c_i f_i ≈ ∫₀^∞ K(r, s, t) f̃(s) s^{d−1} ds`,
/// where `f̃` is the spectral interpolant of samples on `grid`.
pub(crate) fn convolution_row(ring: &RingKernel, grid: &RadialGrid, r: f64, t: f64, profile: Profile) -> Vec<f64> {
    let [row] = convolution_rows(ring, grid, r, t, profile, [Basis::Spectral]);
    row
}

/// Rows for several interpolation bases from one pass of kernel evaluations.
fn convolution_rows<const B: usize>(
    ring: &RingKernel,
    grid: &RadialGrid,
    r: f64,
    t: f64,
    profile: Profile,
    bases: [Basis; B],
) -> [Vec<f64>; B] {
    let n_nodes = grid.len();
    let d = grid.d();
    let mut rows: [Vec<f64>; B] = std::array::from_fn(|_| vec![0.0; n_nodes]);
    let mut basis = vec![0.0; n_nodes];
    let breaks = row_breaks(grid, r, t);
    for_each_panel_node(&breaks, PANEL_ORDER, |z, wz| {
        let Some((s, jac)) = mapped_radius(grid, z) else {
            return;
        };
        let k = ring.eval_profile(r, s, t, profile);
        let factor = k * s.powi(d as i32 - 1) * jac * wz;
        if factor == 0.0 || !factor.is_finite() {
            return;
        }
        for (row, b) in rows.iter_mut().zip(bases) {
            match b {
                Basis::Spectral => barycentric_basis(grid.mapped_nodes(), grid.barycentric_weights(), z, &mut basis),
                Basis::Local => local_lagrange_basis(grid.mapped_nodes(), LOCAL_STENCIL, z, &mut basis),
            }
            for (c, l) in row.iter_mut().zip(&basis) {
                *c += factor * l;
            }
        }
    });
    rows
}

/// Radius and `ds/dz` at mapped coordinate `z ∈ [−1, 1]`.
fn mapped_radius(grid: &RadialGrid, z: f64) -> Option<(f64, f64)> {
    let (r, j) = grid.radius_at(z);
    r.is_finite().then_some((r, j))
}

/// Breakpoints in the mapped variable, graded around the kernel peak.
fn row_breaks(grid: &RadialGrid, r: f64, t: f64) -> Vec<f64> {
    let mut breaks: Vec<f64> = (0..=BASE_PANELS)
        .map(|i| -1.0 + 2.0 * i as f64 / BASE_PANELS as f64)
        .collect();
    // Peak near s = r with width t, plus the bulk of the mass near s ≈ |(r, t)|
    // once t dominates.
    for (center, w) in [(r, t), (r.hypot(t), 0.5 * r.hypot(t))] {
        let zc = grid.mapped(center).clamp(-1.0, 1.0);
        let slope = mapped_radius(grid, zc).map(|(_, j)| j).unwrap_or(f64::INFINITY);
        let width = w / slope;
        if width < 0.25 && width.is_finite() && width > 0.0 {
            breaks = merge_breaks(&breaks, &graded_breaks(-1.0, 1.0, zc, width));
        }
    }
    breaks
}

/// Interpolant of the sampled data inside the row quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// Global polynomial in the mapped variable; spectrally accurate on
    /// smooth data.
    Spectral = 0,
    /// Moving `LOCAL_STENCIL`-point Lagrange stencil. Less accurate on
    /// smooth data, but a kink only disturbs its own neighbourhood, where the
    /// global interpolant spreads ripples to every node.
    Local = 1,
}

/// Points per stencil for [`Basis::Local`].
pub const LOCAL_STENCIL: usize = 10;

/// Both row sets for `count` evaluation points `(r, t) = at(idx)`.
fn assemble<F>(ring: &RingKernel, grid: &RadialGrid, count: usize, at: F) -> [Vec<f64>; 2]
where
    F: Fn(usize) -> (f64, f64) + Sync,
{
    let width = grid.len();
    let rows: Vec<[Vec<f64>; 2]> = (0..count)
        .into_par_iter()
        .map(|idx| {
            let (r, t) = at(idx);
            convolution_rows(ring, grid, r, t, Profile::Poisson, [Basis::Spectral, Basis::Local])
        })
        .collect();
    let mut out = [Vec::with_capacity(count * width), Vec::with_capacity(count * width)];
    for pair in rows {
        for (dst, src) in out.iter_mut().zip(pair) {
            dst.extend_from_slice(&src);
        }
    }
    out
}

/// Dense discretization of `P` from one boundary grid to one half-space grid.
#[derive(Debug, Clone)]
pub struct ExtensionOperator {
    ring: RingKernel,
    boundary: Arc<RadialGrid>,
    halfspace: Arc<HalfspaceGrid>,
    /// Per basis: row-major, `halfspace.len()` rows × `boundary.len()` columns.
    matrix: [Vec<f64>; 2],
    /// Per basis: rows for `T` at `(s_i, t_k)` over the half-space radial nodes.
    /// `None` when the radial meshes coincide, since those rows are then rows
    /// of `matrix`.
    dual_matrix: Option<[Vec<f64>; 2]>,
    w_boundary: Vec<f64>,
    w_halfspace: Vec<f64>,
}

impl ExtensionOperator {
    pub fn new(ring: RingKernel, boundary: Arc<RadialGrid>, halfspace: Arc<HalfspaceGrid>) -> Result<Self> {
        let n = ring.n().get();
        ensure_domain!(
            boundary.d() == n - 1 && halfspace.radial().d() == n - 1,
            "grids must live on ℝ^{} for n = {n}",
            n - 1
        );
        let nb = boundary.len();
        let heights = halfspace.heights().nodes().to_vec();
        let radii = halfspace.radial().nodes().to_vec();
        let nt = heights.len();
        let matrix = assemble(&ring, &boundary, halfspace.len(), |idx| {
            (radii[idx / nt], heights[idx % nt])
        });
        let shared = Arc::ptr_eq(&boundary, halfspace.radial()) || *boundary == **halfspace.radial();
        let dual_matrix = (!shared).then(|| {
            assemble(&ring, halfspace.radial(), nb * nt, |idx| {
                (boundary.nodes()[idx / nt], heights[idx % nt])
            })
        });
        let w_boundary = boundary.weights().to_vec();
        let mut w_halfspace = Vec::with_capacity(halfspace.len());
        for wr in halfspace.radial().weights() {
            for wt in halfspace.heights().weights() {
                w_halfspace.push(wr * wt);
            }
        }
        Ok(ExtensionOperator {
            ring,
            boundary,
            halfspace,
            matrix,
            dual_matrix,
            w_boundary,
            w_halfspace,
        })
    }

    /// Operator on tan-mapped grids sharing one radial mesh.
    pub fn standard(n: Dim, n_radial: usize, n_heights: usize, scale: f64) -> Result<Self> {
        let boundary = Arc::new(RadialGrid::tan(n.boundary(), n_radial, scale)?);
        let heights = Arc::new(RadialGrid::heights(n_heights, scale)?);
        let halfspace = Arc::new(HalfspaceGrid::new(boundary.clone(), heights)?);
        Self::new(RingKernel::with_default_order(n), boundary, halfspace)
    }

    pub fn n(&self) -> Dim {
        self.ring.n()
    }
    pub fn ring(&self) -> &RingKernel {
        &self.ring
    }
    pub fn boundary(&self) -> &Arc<RadialGrid> {
        &self.boundary
    }
    pub fn halfspace(&self) -> &Arc<HalfspaceGrid> {
        &self.halfspace
    }

    fn check_boundary(&self, f: &RadialFn) -> Result<()> {
        ensure_domain!(
            Arc::ptr_eq(f.grid(), &self.boundary) || **f.grid() == *self.boundary,
            "boundary function lives on a different grid"
        );
        if let Some(k) = f.tail_exponent() {
            if k <= -1.0 {
                return Err(Error::Divergence(format!(
                    "boundary data growing like r^{:.3} has no Poisson extension",
                    -k
                )));
            }
        }
        Ok(())
    }

    /// `Pf` sampled on the half-space grid.
    pub fn extend(&self, f: &RadialFn) -> Result<AxisymFn> {
        self.check_boundary(f)?;
        Ok(self.extend_values(f.values()))
    }

    pub(crate) fn extend_values(&self, f: &[f64]) -> AxisymFn {
        self.extend_values_with(f, Basis::Spectral)
    }

    pub(crate) fn extend_values_with(&self, f: &[f64], basis: Basis) -> AxisymFn {
        let nb = self.boundary.len();
        let values: Vec<f64> = self.matrix[basis as usize]
            .chunks(nb)
            .map(|row| row.iter().zip(f).map(|(a, b)| a * b).sum())
            .collect();
        AxisymFn::new(self.halfspace.clone(), values).expect("matrix product has grid shape")
    }

    /// `(Pf)(r, t)` at an arbitrary point.
    pub fn extend_at(&self, f: &RadialFn, r: f64, t: f64) -> Result<f64> {
        self.check_boundary(f)?;
        ensure_domain!(t > 0.0 && r >= 0.0, "evaluation point must lie in the half-space");
        let row = convolution_row(&self.ring, &self.boundary, r, t, Profile::Poisson);
        Ok(row.iter().zip(f.values()).map(|(a, b)| a * b).sum())
    }

    /// `P_t ∗ f` or `Q_t ∗ f` at the boundary nodes.
    pub fn convolve(&self, f: &RadialFn, t: f64, profile: Profile) -> Result<RadialFn> {
        self.check_boundary(f)?;
        convolve_on_grid(&self.ring, f, t, profile)
    }

    /// `Tu` sampled on the boundary grid.
    pub fn dual(&self, u: &AxisymFn) -> Result<RadialFn> {
        ensure_domain!(
            Arc::ptr_eq(u.grid(), &self.halfspace) || **u.grid() == *self.halfspace,
            "half-space function lives on a different grid"
        );
        check_dual_integrable(u)?;
        Ok(RadialFn::new(self.boundary.clone(), self.dual_values(u.values())).expect("adjoint product has grid shape"))
    }

    // T is integrated directly: by symmetry of the ring kernel in (r, s), the inner
    // radial integral at height t is a convolution row evaluated at s.
    pub(crate) fn dual_values(&self, u: &[f64]) -> Vec<f64> {
        self.dual_values_with(u, Basis::Spectral)
    }

    pub(crate) fn dual_values_with(&self, u: &[f64], basis: Basis) -> Vec<f64> {
        let nb = self.boundary.len();
        let nt = self.halfspace.heights().len();
        let nr = self.halfspace.radial().len();
        let wt = self.halfspace.heights().weights();
        let rows: &[f64] = match &self.dual_matrix {
            Some(m) => &m[basis as usize],
            None => &self.matrix[basis as usize],
        };
        (0..nb)
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                for (k, w) in wt.iter().enumerate() {
                    let row = &rows[(i * nt + k) * nr..(i * nt + k + 1) * nr];
                    let layer: f64 = row.iter().enumerate().map(|(j, a)| a * u[j * nt + k]).sum();
                    acc += w * layer;
                }
                acc
            })
            .collect()
    }

    /// `⟨Tu, f⟩ − ⟨u, Pf⟩` discretely; vanishes up to quadrature error.
    pub fn duality_gap(&self, u: &AxisymFn, f: &RadialFn) -> Result<f64> {
        self.check_boundary(f)?;
        let tu = self.dual_values(u.values());
        let pf = self.extend_values(f.values());
        let area = self.boundary.sphere_area();
        let lhs: f64 = tu
            .iter()
            .zip(f.values())
            .zip(&self.w_boundary)
            .map(|((a, b), w)| a * b * w)
            .sum();
        let rhs: f64 = u
            .values()
            .iter()
            .zip(pf.values())
            .zip(&self.w_halfspace)
            .map(|((a, b), w)| a * b * w)
            .sum();
        Ok(area * (lhs - rhs))
    }

    /// `∫_{0 < x_n < a} (Pf)(x) dx`.
    pub fn slab_mass(&self, f: &RadialFn, a: f64) -> Result<f64> {
        self.check_boundary(f)?;
        slab_mass_with(&self.ring, f, a)
    }
}

fn check_dual_integrable(u: &AxisymFn) -> Result<()> {
    // P(x, ξ)u(x) ~ |x|^{1−n}·|u|; integrable at infinity iff u decays faster than |x|^{-1}
    let grid = u.grid();
    let nt = grid.heights().len();
    let along_height: Vec<f64> = (0..nt).map(|k| u.at(0, k).abs()).collect();
    let along_radius: Vec<f64> = (0..grid.radial().len()).map(|j| u.at(j, 0).abs()).collect();
    for (nodes, vals) in [
        (grid.heights().nodes(), along_height),
        (grid.radial().nodes(), along_radius),
    ] {
        if let Some(m) = fit_decay(nodes, &vals) {
            if m <= 1.0 {
                return Err(Error::Divergence(format!(
                    "half-space data decaying like |x|^-{m:.3} is not integrable against P"
                )));
            }
        }
    }
    Ok(())
}

fn convolve_on_grid(ring: &RingKernel, f: &RadialFn, t: f64, profile: Profile) -> Result<RadialFn> {
    ensure_domain!(t > 0.0, "convolution height must be positive");
    let grid = f.grid();
    let values: Vec<f64> = grid
        .nodes()
        .par_iter()
        .map(|&r| {
            let row = convolution_row(ring, grid, r, t, profile);
            row.iter().zip(f.values()).map(|(a, b)| a * b).sum()
        })
        .collect();
    let at_zero = {
        let row = convolution_row(ring, grid, 0.0, t, profile);
        row.iter().zip(f.values()).map(|(a, b)| a * b).sum()
    };
    Ok(RadialFn::from_parts(grid.clone(), values, at_zero))
}

fn slab_mass_with(ring: &RingKernel, f: &RadialFn, a: f64) -> Result<f64> {
    ensure_domain!(a > 0.0 && a.is_finite(), "slab height must be positive, got {a}");
    let grid = f.grid();
    let heights = gauss_legendre(16);
    let mut total = 0.0;
    for (zt, wt) in heights.nodes.iter().zip(&heights.weights) {
        let t = 0.5 * a * (zt + 1.0);
        let layer = convolve_on_grid(ring, f, t, Profile::Poisson)?;
        total += 0.5 * a * wt * grid.integrate(layer.values());
    }
    Ok(grid.sphere_area() * total)
}

/// `Pf` on `grid`; assembles a fresh operator.
pub fn poisson_extend(f: &RadialFn, grid: &Arc<HalfspaceGrid>) -> Result<AxisymFn> {
    let n = Dim::new(f.grid().d() + 1)?;
    let op = ExtensionOperator::new(RingKernel::with_default_order(n), f.grid().clone(), grid.clone())?;
    op.extend(f)
}

/// `Tu` on `grid`; assembles a fresh operator.
pub fn dual_extend(u: &AxisymFn, grid: &Arc<RadialGrid>) -> Result<RadialFn> {
    let n = Dim::new(u.grid().n())?;
    let op = ExtensionOperator::new(RingKernel::with_default_order(n), grid.clone(), u.grid().clone())?;
    op.dual(u)
}

/// `∫_{0 < x_n < a} Pf dx`, which equals `a·∫f` for integrable f.
pub fn slab_mass(f: &RadialFn, a: f64) -> Result<f64> {
    let n = Dim::new(f.grid().d() + 1)?;
    slab_mass_with(&RingKernel::with_default_order(n), f, a)
}

/// `max_j ( |P_t∗(φf) − φ·(P_t∗f)| − [φ]_Lip·t·(Q_t∗f) )` over the grid.
/// Nonpositive (up to quadrature error) when the commutator bound holds.
pub fn commutator_gap(f: &RadialFn, phi_lip: f64, phi: &RadialFn, t: f64) -> Result<f64> {
    ensure_domain!(t > 0.0, "commutator height must be positive");
    ensure_domain!(phi_lip >= 0.0, "Lipschitz seminorm must be nonnegative");
    ensure_domain!(
        f.grid() == phi.grid() || **f.grid() == **phi.grid(),
        "f and φ must share a grid"
    );
    ensure_domain!(f.is_nonnegative(), "commutator check needs f ≥ 0");
    let n = Dim::new(f.grid().d() + 1)?;
    let ring = RingKernel::with_default_order(n);
    let product = RadialFn::from_parts(
        f.grid().clone(),
        f.values().iter().zip(phi.values()).map(|(a, b)| a * b).collect(),
        f.value_at_zero() * phi.value_at_zero(),
    );
    let lhs_a = convolve_on_grid(&ring, &product, t, Profile::Poisson)?;
    let pf = convolve_on_grid(&ring, f, t, Profile::Poisson)?;
    let qf = convolve_on_grid(&ring, f, t, Profile::Q)?;
    let gap = lhs_a
        .values()
        .iter()
        .zip(pf.values())
        .zip(phi.values())
        .zip(qf.values())
        .map(|(((a, p), ph), q)| (a - ph * p).abs() - phi_lip * t * q)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(gap)
}
