//! The experiments behind `halfext run`. Each returns its checks, its
//! reported values and optional CSV artifacts.

use std::collections::BTreeMap;
use std::sync::Arc;

use halfext::error::{Error, Result};
use halfext::extension::{commutator_gap, ExtensionOperator, RingKernel};
use halfext::extremals::{extremal_profile, normalize_el, sharp_constant, ExtremalKind, ExtremalSpec};
use halfext::fixtures::{two_bump_input, TWO_BUMP};
use halfext::grids::{
    distribution_mass, lp_norm_boundary, lp_norm_halfspace, weak_lp_norm, AxisymFn, HalfspaceGrid, RadialFn, RadialGrid,
};
use halfext::kernel::{pt_lp_norm, pt_profile, Dim};
use halfext::moebius::{boundary_inversion, halfspace_inversion, InversionSpec, InversionTarget};
use halfext::rearrange::{pipeline_gain, random_bump_field, riesz_gain, symmetric_rearrangement};
use halfext::solver::{
    ascent_estimate_constant, classifier_suite, el_fixed_point, initial_profile, is_strictly_decreasing, match_family,
    CaseClass, Termination,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: &'static str,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            value,
            relation: "<=",
            limit,
            pass: value <= limit,
        }
    }
    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            value,
            relation: ">=",
            limit,
            pass: value >= limit,
        }
    }
}

#[derive(Debug, Default)]
pub struct Report {
    pub checks: Vec<Check>,
    pub values: BTreeMap<String, Value>,
    pub trace_csv: Option<String>,
    pub profile_csv: Option<String>,
}

impl Report {
    fn value(&mut self, key: &str, v: impl Serialize) {
        self.values.insert(key.to_string(), json!(v));
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    match cfg.experiment.as_str() {
        "verify-kernel" => verify_kernel(cfg),
        "verify-identities" => verify_identities(cfg),
        "weak-type-sweep" => weak_type_sweep(cfg),
        "estimate-constant" => estimate_constant(cfg),
        "solve-el" => solve_el(cfg),
        "rearrange-demo" => rearrange_demo(cfg),
        "classify-radial" => classify_radial(cfg),
        "conformal-invariance" => conformal_invariance(cfg),
        other => Err(Error::Domain(format!("unknown experiment {other}"))),
    }
}

fn operator(cfg: &ExperimentConfig) -> Result<ExtensionOperator> {
    let n = Dim::new(cfg.n)?;
    let boundary = Arc::new(RadialGrid::tan(n.boundary(), cfg.grid_n, cfg.grid_scale)?);
    let heights = Arc::new(RadialGrid::heights(cfg.grid_heights, cfg.grid_scale)?);
    let halfspace = Arc::new(HalfspaceGrid::new(boundary.clone(), heights)?);
    ExtensionOperator::new(RingKernel::new(n, cfg.quad_order)?, boundary, halfspace)
}

/// The extremal family whose critical exponent is `p`, if any.
fn family_of(n: Dim, p: f64) -> Option<ExtremalKind> {
    [ExtremalKind::Conformal, ExtremalKind::Dual]
        .into_iter()
        .find(|k| k.critical_p(n).map(|c| (c - p).abs() < 1e-12).unwrap_or(false))
}

fn verify_kernel(cfg: &ExperimentConfig) -> Result<Report> {
    let n = Dim::new(cfg.n)?;
    let mut rep = Report::default();
    for t in [0.25, 1.0, 4.0] {
        let l1 = pt_lp_norm(n, 1.0, t)?;
        rep.checks
            .push(Check::at_most(format!("pt_l1_norm_t{t}"), (l1 - 1.0).abs(), 1e-8));
        if t == 1.0 {
            rep.value("pt_l1_norm", l1);
        }
    }
    let p = 2.0;
    let power = (n.as_f64() - 1.0) * (p - 1.0) / p;
    let scaled: Vec<f64> = [0.1, 0.3, 1.0, 3.0, 10.0]
        .iter()
        .map(|&t| pt_lp_norm(n, p, t).map(|v| v * f64::powf(t, power)))
        .collect::<Result<_>>()?;
    let spread =
        scaled.iter().cloned().fold(f64::MIN, f64::max) / scaled.iter().cloned().fold(f64::MAX, f64::min) - 1.0;
    rep.checks.push(Check::at_most("pt_l2_scaling_spread", spread, 1e-8));
    rep.value("pt_l2_constant", scaled[2]);
    let sup = pt_lp_norm(n, f64::INFINITY, 2.0)?;
    let peak = n.kernel_constant() / 2f64.powi(cfg.n as i32 - 1);
    rep.checks
        .push(Check::at_most("pt_sup_norm_rel_err", (sup / peak - 1.0).abs(), 1e-14));
    rep.value("pt_sup_norm_t2", sup);
    rep.value("pt_at_t1_rho1", pt_profile(n, 1.0, 1.0)?);
    Ok(rep)
}

fn verify_identities(cfg: &ExperimentConfig) -> Result<Report> {
    let n = Dim::new(cfg.n)?;
    let nf = n.as_f64();
    let op = operator(cfg)?;
    let g = op.boundary().clone();
    let conformal = RadialFn::from_fn(g.clone(), |s| (1.0 + s * s).powf(-(nf - 2.0) / 2.0));
    let dual = RadialFn::from_fn(g.clone(), |s| (1.0 + s * s).powf(-nf / 2.0));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut err_c, mut err_d) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let (r, t): (f64, f64) = (rng.random_range(0.0..5.0), rng.random_range(0.2..5.0));
        let rho2 = r * r + (t + 1.0).powi(2);
        err_c = err_c.max((op.extend_at(&conformal, r, t)? - rho2.powf(-(nf - 2.0) / 2.0)).abs());
        err_d = err_d.max((op.extend_at(&dual, r, t)? - (t + 1.0) * rho2.powf(-nf / 2.0)).abs());
    }
    let mut rep = Report::default();
    rep.checks
        .push(Check::at_most("extension_conformal_max_err", err_c, 1e-6));
    rep.checks.push(Check::at_most("extension_dual_max_err", err_d, 1e-6));

    let inputs: [(&str, RadialFn); 3] = [
        ("dual_extremal", dual.clone()),
        ("quartic", RadialFn::from_fn(g.clone(), |s| 1.0 / (1.0 + s.powi(4)))),
        (
            "cauchy_squared",
            RadialFn::from_fn(g.clone(), |s| (1.0 + s * s).powi(-2)),
        ),
    ];
    let mut slab_worst = 0.0f64;
    for (_, f) in &inputs {
        let mass = lp_norm_boundary(f, 1.0)?;
        for a in [0.3, 0.7, 2.0] {
            slab_worst = slab_worst.max((op.slab_mass(f, a)? - a * mass).abs() / mass);
        }
    }
    rep.checks.push(Check::at_most("slab_mass_rel_err", slab_worst, 1e-6));

    let f = RadialFn::from_fn(g.clone(), |s| (-s * s).exp() * (1.0 + s));
    let u = AxisymFn::from_fn(op.halfspace().clone(), |r, t| {
        (1.0 + r * r + (t + 0.5).powi(2)).powi(-2)
    });
    let pf = op.extend(&f)?;
    let pairing = lp_norm_halfspace(
        &AxisymFn::new(
            op.halfspace().clone(),
            u.values().iter().zip(pf.values()).map(|(a, b)| a * b).collect(),
        )?,
        1.0,
    )?;
    let gap = op.duality_gap(&u, &f)?.abs() / pairing;
    rep.checks.push(Check::at_most("duality_rel_gap", gap, 1e-6));

    if cfg.n == 3 {
        let phi = RadialFn::from_fn(g.clone(), |s| s.min(1.0));
        let cauchy = RadialFn::from_fn(g.clone(), |s| (1.0 + s * s).powf(-1.5));
        let cg = commutator_gap(&cauchy, 1.0, &phi, 1.0)?;
        rep.checks.push(Check::at_most("commutator_gap", cg, 1e-6));
        rep.value("commutator_gap", cg);
    }
    rep.value("extension_conformal_max_err", err_c);
    rep.value("extension_dual_max_err", err_d);
    rep.value("slab_mass_rel_err", slab_worst);
    rep.value("duality_rel_gap", gap);
    Ok(rep)
}

fn weak_type_sweep(cfg: &ExperimentConfig) -> Result<Report> {
    let n = Dim::new(cfg.n)?;
    let pw = n.as_f64() / (n.as_f64() - 1.0);
    let kernel_on = |radial: usize| -> Result<f64> {
        let grid = Arc::new(HalfspaceGrid::tan(cfg.n, radial, (radial / 2).max(16), cfg.grid_scale)?);
        let u = AxisymFn::from_fn(grid, |r, t| pt_profile(n, t, r).unwrap_or(0.0));
        weak_lp_norm(&u, pw)
    };
    let coarse = kernel_on(cfg.grid_n)?;
    let grid = Arc::new(HalfspaceGrid::tan(
        cfg.n,
        cfg.grid_n,
        (cfg.grid_n / 2).max(16),
        cfg.grid_scale,
    )?);
    let kernel = AxisymFn::from_fn(grid, |r, t| pt_profile(n, t, r).unwrap_or(0.0));
    let doubled = weak_lp_norm(&kernel.map_values(|v| 2.0 * v), pw)?;
    let homogeneity = (doubled / (2.0 * weak_lp_norm(&kernel, pw)?) - 1.0).abs();
    let fine = kernel_on(2 * cfg.grid_n)?;
    let mut rep = Report::default();
    rep.value("kernel_weak_norm", fine);
    rep.value("kernel_weak_norm_coarse", coarse);
    rep.checks.push(Check::at_most(
        "kernel_weak_norm_resolution_gap",
        (coarse / fine - 1.0).abs(),
        2e-2,
    ));
    rep.checks
        .push(Check::at_most("weak_norm_homogeneity", homogeneity, 1e-14));

    let op = operator(cfg)?;
    let raw = RadialFn::from_fn(op.boundary().clone(), |s| (1.0 + s * s).powf(-n.as_f64() / 2.0));
    let f = raw.scaled(1.0 / lp_norm_boundary(&raw, 1.0)?);
    let u = op.extend(&f)?;
    let levels: Vec<f64> = (0..13).map(|i| 10f64.powf(-4.0 + 0.5 * i as f64)).collect();
    let sweep: Vec<(f64, f64)> = levels
        .iter()
        .map(|&l| (l, l.powf(pw) * distribution_mass(&u, l)))
        .collect();
    let c_est = sweep.iter().map(|s| s.1).fold(0.0, f64::max);
    let masses: Vec<f64> = levels.iter().map(|&l| distribution_mass(&u, l)).collect();
    let monotone = masses.windows(2).all(|w| w[1] <= w[0]);
    rep.checks.push(Check::at_least(
        "distribution_mass_monotone",
        monotone as u8 as f64,
        1.0,
    ));
    rep.checks.push(Check::at_most(
        "weak_type_constant_finite",
        if c_est.is_finite() { 0.0 } else { 1.0 },
        0.0,
    ));
    rep.value("weak_type_constant", c_est);
    let mut csv = String::from("level,scaled_mass\n");
    for (l, c) in &sweep {
        csv.push_str(&format!("{l:e},{c:e}\n"));
    }
    rep.value("sweep", sweep);
    rep.profile_csv = Some(csv);
    Ok(rep)
}

fn estimate_constant(cfg: &ExperimentConfig) -> Result<Report> {
    let n = Dim::new(cfg.n)?;
    let op = operator(cfg)?;
    let ascent = ascent_estimate_constant(&op, cfg.p, cfg.trials, &cfg.solver)?;
    let mut rep = Report::default();
    rep.value("c_estimate", ascent.estimate);
    rep.value("per_trial", &ascent.per_trial);
    match family_of(n, cfg.p) {
        Some(kind) => {
            let closed = sharp_constant(n, kind)?;
            let rel = (ascent.estimate / closed - 1.0).abs();
            rep.value("closed_form", closed);
            rep.value("rel_err", rel);
            rep.checks.push(Check::at_most("rel_err", rel, 5e-3));
        }
        None => {
            rep.value("closed_form", Value::Null);
            let spread = ascent.per_trial.iter().flatten().cloned().fold(f64::MAX, f64::min);
            rep.value("min_trial", spread);
        }
    }
    Ok(rep)
}

fn solve_el(cfg: &ExperimentConfig) -> Result<Report> {
    let n = Dim::new(cfg.n)?;
    let op = operator(cfg)?;
    let seed = (cfg.seed != 0).then_some(cfg.seed);
    let init = initial_profile(cfg.init, op.boundary().clone(), n, cfg.p, seed)?;
    let sol = el_fixed_point(&op, cfg.p, &init, &cfg.solver).map_err(|f| f.error)?;
    let mut rep = Report {
        trace_csv: Some(sol.trace.to_csv()),
        profile_csv: Some(sol.profile.to_csv()),
        ..Report::default()
    };
    let last = sol.trace.last().copied();
    rep.value("status", sol.status);
    rep.value("iterations", sol.trace.len());
    rep.value("residual", last.map(|r| r.residual));
    rep.value("rayleigh", last.map(|r| r.rayleigh));
    rep.checks.push(Check::at_least(
        "converged",
        (sol.status == Termination::Converged) as u8 as f64,
        1.0,
    ));
    let decreasing = is_strictly_decreasing(&sol.profile);
    rep.checks
        .push(Check::at_least("strictly_decreasing", decreasing as u8 as f64, 1.0));
    let scaling = normalize_el(&op, &sol.profile, cfg.p)?;
    rep.value("el_amplitude", scaling.amplitude);
    rep.value("el_residual_calibrated", scaling.residual);
    if let Some(kind) = family_of(n, cfg.p) {
        let m = match_family(&sol.profile, kind, n, 10.0)?;
        rep.value("family", kind);
        rep.value("family_lambda", m.lambda);
        rep.value("family_match_error", m.sup_rel_error);
        rep.checks
            .push(Check::at_most("family_match_error", m.sup_rel_error, 1e-3));
    }
    Ok(rep)
}

fn rearrange_demo(cfg: &ExperimentConfig) -> Result<Report> {
    let n = Dim::new(cfg.n)?;
    let (_, _, t, q) = TWO_BUMP;
    let f = two_bump_input()?;
    let cells = f.cells();
    let star = symmetric_rearrangement(&cells)?;
    let mut rep = Report::default();
    let mut worst = 0.0f64;
    for p in [1.0, 2.0, 4.0] {
        worst = worst.max((star.lp_norm(p) / cells.lp_norm(p) - 1.0).abs());
    }
    rep.checks.push(Check::at_most("lp_preservation_rel_err", worst, 1e-8));
    let cell = f.h() * f.h();
    let mut dist = 0.0f64;
    for level in [0.0, 0.05, 0.2, 0.5, 0.8, 0.95] {
        dist = dist.max((star.distribution(level) - cells.distribution(level)).abs());
    }
    rep.checks.push(Check::at_most("equimeasurability_gap", dist, cell));
    let gain = riesz_gain(&f, n, t, q)?;
    rep.checks
        .push(Check::at_least("two_bump_riesz_gain", gain, f64::MIN_POSITIVE));
    let pipe = pipeline_gain(&f, n, 4.0 / 3.0)?;
    rep.checks
        .push(Check::at_least("two_bump_pipeline_gain", pipe.gain, f64::MIN_POSITIVE));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut min_gain = f64::INFINITY;
    for _ in 0..cfg.trials {
        let g = random_bump_field(&mut rng)?;
        let q = [1.5, 2.0, 3.0, 4.0][rng.random_range(0..4)];
        let t = [0.5, 1.0, 2.0][rng.random_range(0..3)];
        min_gain = min_gain.min(riesz_gain(&g, n, t, q)?);
    }
    rep.checks
        .push(Check::at_least("random_min_riesz_gain", min_gain, -1e-8));
    rep.value("two_bump_riesz_gain", gain);
    rep.value("two_bump_pipeline", pipe);
    rep.value("random_min_riesz_gain", min_gain);
    let mut csv = String::from("r,value\n");
    for r in (0..=60).map(|i| 0.05 * i as f64) {
        csv.push_str(&format!("{r:e},{:e}\n", star.eval(r)));
    }
    rep.profile_csv = Some(csv);
    Ok(rep)
}

fn classify_radial(_cfg: &ExperimentConfig) -> Result<Report> {
    let cases = classifier_suite()?;
    let correct = cases.iter().filter(|c| c.correct()).count();
    let member_level = cases
        .iter()
        .filter(|c| c.expected == CaseClass::OdeMember)
        .map(|c| c.residual)
        .fold(0.0, f64::max);
    let mut rep = Report::default();
    rep.checks
        .push(Check::at_least("accuracy", correct as f64 / cases.len() as f64, 1.0));
    rep.checks
        .push(Check::at_most("ode_member_third_difference", member_level, 1e-8));
    rep.value("cases", &cases);
    rep.value("correct", correct);
    Ok(rep)
}

fn conformal_invariance(cfg: &ExperimentConfig) -> Result<Report> {
    let n = Dim::new(cfg.n)?;
    let nf = n.as_f64();
    let g = Arc::new(RadialGrid::tan(n.boundary(), cfg.grid_n, cfg.grid_scale)?);
    let spec = InversionSpec::kelvin_boundary(n);
    let target = InversionTarget::Radial(g.clone());
    let pc = 2.0 * (nf - 1.0) / (nf - 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut crit, mut off) = (0.0f64, f64::INFINITY);
    for _ in 0..5 {
        let (a, b, c) = (
            rng.random_range(0.3..3.0),
            rng.random_range(0.6..1.5),
            rng.random_range(0.0..1.0),
        );
        let f = RadialFn::from_fn(g.clone(), |s| {
            (1.0 + a * s * s).powf(-b * (nf - 2.0)) * (1.0 + c * (-s).exp())
        });
        let ft = boundary_inversion(&f, &spec, &target)?
            .into_radial()
            .ok_or_else(|| Error::Numerical("unshifted inversion must stay radial".into()))?;
        let ratio = |p: f64| -> Result<f64> { Ok((lp_norm_boundary(&ft, p)? / lp_norm_boundary(&f, p)? - 1.0).abs()) };
        crit = crit.max(ratio(pc)?);
        off = off.min(ratio(1.1 * pc)?.min(ratio(0.9 * pc)?));
    }
    let mut rep = Report::default();
    rep.checks
        .push(Check::at_most("boundary_critical_norm_rel_err", crit, 1e-6));
    rep.checks
        .push(Check::at_least("boundary_off_critical_rel_change", off, 1e-2));

    let op = operator(cfg)?;
    // The unit-scale conformal extension is inversion-fixed; a dilate is not.
    let conformal = RadialFn::from_fn(op.boundary().clone(), |s| (4.0 + s * s).powf(-(nf - 2.0) / 2.0));
    let u = op.extend(&conformal)?;
    let ut = halfspace_inversion(&u, n, op.halfspace())?;
    let ph = 2.0 * nf / (nf - 2.0);
    let hratio = |p: f64| -> Result<f64> { Ok((lp_norm_halfspace(&ut, p)? / lp_norm_halfspace(&u, p)? - 1.0).abs()) };
    let hcrit = hratio(ph)?;
    let hoff = hratio(1.1 * ph)?.min(hratio(0.9 * ph)?);
    rep.checks
        .push(Check::at_most("halfspace_critical_norm_rel_err", hcrit, 1e-6));
    rep.checks
        .push(Check::at_least("halfspace_off_critical_rel_change", hoff, 1e-2));
    rep.value("boundary_critical_exponent", pc);
    rep.value("halfspace_critical_exponent", ph);
    rep.value("boundary_critical_norm_rel_err", crit);
    rep.value("halfspace_critical_norm_rel_err", hcrit);
    let spec_e = ExtremalSpec::standard(n, ExtremalKind::Conformal);
    let e = extremal_profile(&spec_e, g.clone())?;
    let et = boundary_inversion(&e, &spec, &target)?
        .into_radial()
        .ok_or_else(|| Error::Numerical("unshifted inversion must stay radial".into()))?;
    let self_dual = e
        .values()
        .iter()
        .zip(et.values())
        .map(|(a, b)| ((a - b) / a).abs())
        .fold(0.0, f64::max);
    rep.checks
        .push(Check::at_most("conformal_extremal_self_dual", self_dual, 1e-3));
    rep.value("conformal_extremal_self_dual", self_dual);
    Ok(rep)
}
