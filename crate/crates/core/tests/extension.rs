use std::sync::OnceLock;

use halfext::extension::{commutator_gap, ExtensionOperator};
use halfext::extremals::{sharp_constant, ExtremalKind};
use halfext::grids::{lp_norm_boundary, lp_norm_halfspace, AxisymFn, RadialFn};
use halfext::kernel::{poisson_kernel, pt_lp_norm, pt_profile, BoundaryPoint, Dim, HalfspacePoint};
use halfext::solver::random_trial;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn n3() -> Dim {
    Dim::new(3).unwrap()
}

fn op() -> &'static ExtensionOperator {
    static OP: OnceLock<ExtensionOperator> = OnceLock::new();
    OP.get_or_init(|| ExtensionOperator::standard(n3(), 48, 24, 1.0).unwrap())
}

#[test]
fn maximum_principle_and_uniform_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let f = random_trial(op().boundary().clone(), &mut rng);
        let sup = f.values().iter().cloned().fold(f.value_at_zero(), f64::max);
        let u = op().extend(&f).unwrap();
        let top = u.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(top <= sup * (1.0 + 1e-9), "sup |Pf| = {top}, sup f = {sup}");
        // Hölder against P_t: u(x', t) ≤ ‖P_t‖_{p'}·‖f‖_p with p = 4.
        let norm = lp_norm_boundary(&f, 4.0).unwrap();
        let heights = op().halfspace().heights().nodes().to_vec();
        for (k, &t) in heights.iter().enumerate() {
            let bound = pt_lp_norm(n3(), 4.0 / 3.0, t).unwrap() * norm;
            assert!(u.at(0, k) <= bound * (1.0 + 1e-9), "t = {t}");
        }
    }
}

#[test]
fn strong_bounds_hold_on_random_inputs() {
    let c = sharp_constant(n3(), ExtremalKind::Conformal).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let f = random_trial(op().boundary().clone(), &mut rng);
        let u = op().extend(&f).unwrap();
        let ratio = lp_norm_halfspace(&u, 6.0).unwrap() / lp_norm_boundary(&f, 4.0).unwrap();
        assert!(ratio <= c * (1.0 + 1e-3), "{ratio} > {c}");
    }
}

#[test]
fn dual_operator_respects_its_bound() {
    // T is the adjoint of P: L^{4/3} → L², so ‖Tu‖₄ ≤ C‖u‖₂ with the dual constant.
    let c = sharp_constant(n3(), ExtremalKind::Dual).unwrap();
    for shift in [0.5, 1.0, 2.0] {
        let u = AxisymFn::from_fn(op().halfspace().clone(), |r, t| (r * r + (t + shift).powi(2)).powi(-2));
        let tu = op().dual(&u).unwrap();
        let ratio = lp_norm_boundary(&tu, 4.0).unwrap() / lp_norm_halfspace(&u, 2.0).unwrap();
        assert!(ratio <= c * (1.0 + 1e-3), "shift {shift}: {ratio} > {c}");
    }
}

#[test]
fn commutator_with_a_lipschitz_cutoff() {
    let g = op().boundary().clone();
    let phi = RadialFn::from_fn(g.clone(), |s| s.min(1.0));
    let f = RadialFn::from_fn(g, |s| (1.0 + s * s).powf(-1.5));
    for t in [0.3, 1.0, 3.0] {
        assert!(commutator_gap(&f, 1.0, &phi, t).unwrap() <= 1e-6);
    }
}

#[test]
fn extension_is_harmonic() {
    let f = RadialFn::from_fn(op().boundary().clone(), |s| (1.0 + s * s).powi(-2));
    let h = 1e-2;
    for (r, t) in [(0.5, 0.5), (1.0, 2.0), (2.0, 0.7)] {
        let u = |r: f64, t: f64| op().extend_at(&f, r, t).unwrap();
        // axisymmetric Laplacian in ℝ³: u_rr + u_r / r + u_tt
        let urr = (u(r + h, t) - 2.0 * u(r, t) + u(r - h, t)) / (h * h);
        let ur = (u(r + h, t) - u(r - h, t)) / (2.0 * h);
        let utt = (u(r, t + h) - 2.0 * u(r, t) + u(r, t - h)) / (h * h);
        let lap = urr + ur / r + utt;
        assert!(lap.abs() < 1e-3 * urr.abs().max(utt.abs()), "({r}, {t}): {lap}");
    }
}

proptest! {
    #[test]
    fn kernel_is_translation_invariant(
        x in -3.0..3.0f64, y in -3.0..3.0f64, t in 0.05..4.0f64, a in -5.0..5.0f64, b in -5.0..5.0f64,
    ) {
        let p = poisson_kernel(n3(), &HalfspacePoint::new(vec![x, y], t).unwrap(), &BoundaryPoint(vec![0.0, 0.0])).unwrap();
        let q = poisson_kernel(n3(), &HalfspacePoint::new(vec![x + a, y + b], t).unwrap(), &BoundaryPoint(vec![a, b])).unwrap();
        prop_assert!((p - q).abs() <= 1e-12 * p.abs().max(1e-300));
    }

    #[test]
    fn kernel_scales_homogeneously(n in 2usize..6, rho in 0.0..10.0f64, t in 0.05..4.0f64, lambda in 0.1..10.0f64) {
        let n = Dim::new(n).unwrap();
        let a = pt_profile(n, lambda * t, lambda * rho).unwrap();
        let b = lambda.powf(1.0 - n.as_f64()) * pt_profile(n, t, rho).unwrap();
        prop_assert!((a / b - 1.0).abs() < 1e-12);
    }
}
