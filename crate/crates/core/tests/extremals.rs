use std::sync::OnceLock;

use halfext::extension::ExtensionOperator;
use halfext::extremals::{
    el_residual, extremal_profile, normalize_el, rayleigh_quotient, sharp_constant, ExtremalKind, ExtremalSpec,
};
use halfext::grids::RadialFn;
use halfext::kernel::Dim;
use halfext::solver::{el_fixed_point, initial_profile, is_strictly_decreasing, InitKind, SolverConfig, Termination};

fn n3() -> Dim {
    Dim::new(3).unwrap()
}

fn op() -> &'static ExtensionOperator {
    static OP: OnceLock<ExtensionOperator> = OnceLock::new();
    OP.get_or_init(|| ExtensionOperator::standard(n3(), 64, 32, 1.0).unwrap())
}

fn profile(kind: ExtremalKind) -> RadialFn {
    extremal_profile(&ExtremalSpec::standard(n3(), kind), op().boundary().clone()).unwrap()
}

#[test]
fn rayleigh_quotient_is_dilation_invariant() {
    for (kind, p, tol) in [
        (ExtremalKind::Conformal, 4.0, 1e-6),
        (ExtremalKind::Dual, 4.0 / 3.0, 1e-4),
    ] {
        let f = profile(kind);
        let base = rayleigh_quotient(op(), &f, p).unwrap();
        for lambda in [0.25, 0.5, 2.0, 4.0] {
            let spec = ExtremalSpec::new(n3(), kind, lambda, 1.0).unwrap();
            let g = extremal_profile(&spec, op().boundary().clone()).unwrap();
            let rq = rayleigh_quotient(op(), &g, p).unwrap();
            assert!((rq / base - 1.0).abs() < tol, "{kind:?} λ = {lambda}: {rq} vs {base}");
        }
    }
}

#[test]
fn wrong_family_falls_short_of_the_constant() {
    let c = sharp_constant(n3(), ExtremalKind::Conformal).unwrap();
    let rq = rayleigh_quotient(op(), &profile(ExtremalKind::Dual), 4.0).unwrap();
    assert!(rq < c * (1.0 - 5e-3));
}

#[test]
fn only_the_matching_family_solves_the_equation() {
    let g = op().boundary().clone();
    let gaussian = RadialFn::from_fn(g.clone(), |r| (-r * r).exp());
    let bump = RadialFn::from_fn(g, |r| {
        if r < 1.0 {
            (1.0 - 1.0 / (1.0 - r * r)).exp()
        } else {
            0.0
        }
    });
    assert!(
        normalize_el(op(), &profile(ExtremalKind::Conformal), 4.0)
            .unwrap()
            .residual
            < 1e-6
    );
    for f in [profile(ExtremalKind::Dual), gaussian, bump] {
        let s = normalize_el(op(), &f, 4.0).unwrap();
        assert!(s.residual > 1e-2 && !s.shape_matched);
    }
}

#[test]
fn calibrated_amplitude_is_the_only_good_multiple() {
    let f = profile(ExtremalKind::Conformal);
    let s = normalize_el(op(), &f, 4.0).unwrap();
    assert!((s.amplitude - 6f64.sqrt()).abs() < 1e-8);
    assert!(el_residual(op(), &f.scaled(s.amplitude), 4.0).unwrap() < 1e-6);
    assert!(el_residual(op(), &f.scaled(2.0 * s.amplitude), 4.0).unwrap() > 1.0);
}

#[test]
fn off_critical_exponent_still_converges() {
    let init = initial_profile(InitKind::Gaussian, op().boundary().clone(), n3(), 2.0, None).unwrap();
    let sol = el_fixed_point(op(), 2.0, &init, &SolverConfig::default()).unwrap();
    assert_eq!(sol.status, Termination::Converged);
    assert!(is_strictly_decreasing(&sol.profile));
    let s = normalize_el(op(), &sol.profile, 2.0).unwrap();
    assert!(s.residual < 1e-5);
    let rq = sol.trace.max_rayleigh().unwrap();
    assert!((rq - 0.534_692_5).abs() < 1e-5);
}

#[test]
fn converged_conformal_profile_is_inversion_symmetric() {
    let init = initial_profile(InitKind::CompactBump, op().boundary().clone(), n3(), 4.0, None).unwrap();
    let sol = el_fixed_point(op(), 4.0, &init, &SolverConfig::default()).unwrap();
    let f = &sol.profile;
    // Up to the gauge scale λ, f(r) = (λ/r)·f(λ²/r) for a conformal extremal.
    let lambda = halfext::solver::match_family(f, ExtremalKind::Conformal, n3(), 10.0)
        .unwrap()
        .lambda;
    for r in [0.2, 0.5, 1.5, 3.0] {
        let mirrored = lambda / r * f.eval(lambda * lambda / r);
        assert!((mirrored / f.eval(r) - 1.0).abs() < 1e-4, "r = {r}");
    }
}
