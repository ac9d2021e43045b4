//! Gauss–Legendre rules and graded composite integration.

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::legendre::GaussLegendre;

/// Nodes and weights of an `order`-point Gauss–Legendre rule on [-1, 1],
/// nodes ascending.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Cached Gauss–Legendre rule of the given order (order ≥ 1).
pub fn gauss_legendre(order: usize) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry(order)
        .or_insert_with(|| {
            let order = NonZeroUsize::new(order).expect("Gauss-Legendre order must be positive");
            let mut pairs: Vec<(f64, f64)> = GaussLegendre::new(order).as_node_weight_pairs().to_vec();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            Arc::new(Rule {
                nodes: pairs.iter().map(|p| p.0).collect(),
                weights: pairs.iter().map(|p| p.1).collect(),
            })
        })
        .clone()
}

impl Rule {
    /// Integrate `f` over [a, b].
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Call `visit(x, w)` for every mapped node of the rule on [a, b].
    pub fn for_each_on<F: FnMut(f64, f64)>(&self, a: f64, b: f64, mut visit: F) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            visit(mid + half * x, w * half);
        }
    }
}

/// Breakpoints on [lo, hi] graded geometrically (ratio 4) away from `center`,
/// starting at distance `width`. The result is sorted and always contains
/// `lo` and `hi`.
pub fn graded_breaks(lo: f64, hi: f64, center: f64, width: f64) -> Vec<f64> {
    let mut breaks = vec![lo, hi];
    if width > 0.0 && width.is_finite() {
        if center > lo && center < hi {
            breaks.push(center);
        }
        let mut d = width;
        while d < hi - lo {
            for x in [center - d, center + d] {
                if x > lo && x < hi {
                    breaks.push(x);
                }
            }
            d *= 4.0;
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * (1.0 + b.abs()));
    breaks
}

/// Merge two sorted breakpoint lists.
pub fn merge_breaks(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = a.iter().chain(b).copied().collect();
    out.sort_by(f64::total_cmp);
    out.dedup_by(|x, y| (*x - *y).abs() <= 1e-15 * (1.0 + y.abs()));
    out
}

/// Composite Gauss–Legendre over consecutive breakpoints.
pub fn integrate_panels<F: FnMut(f64) -> f64>(breaks: &[f64], order: usize, mut f: F) -> f64 {
    let rule = gauss_legendre(order);
    breaks.windows(2).map(|w| rule.integrate(w[0], w[1], &mut f)).sum()
}

/// Visit `(x, w)` for every node of the composite rule over `breaks`.
pub fn for_each_panel_node<F: FnMut(f64, f64)>(breaks: &[f64], order: usize, mut visit: F) {
    let rule = gauss_legendre(order);
    for w in breaks.windows(2) {
        rule.for_each_on(w[0], w[1], &mut visit);
    }
}

/// Integrate `f` over [a, ∞) through the substitution x = a + scale·tan(θ).
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(a: f64, scale: f64, order: usize, panels: usize, mut f: F) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let breaks: Vec<f64> = (0..=panels).map(|i| half_pi * i as f64 / panels as f64).collect();
    integrate_panels(&breaks, order, |theta| {
        let c = theta.cos();
        if c <= 0.0 {
            return 0.0;
        }
        let x = a + scale * theta.tan();
        f(x) * scale / (c * c)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let rule = gauss_legendre(8);
        let v = rule.integrate(0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        assert!(rule.nodes.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn graded_breaks_bracket_the_center() {
        let b = graded_breaks(0.0, 1.0, 0.3, 1e-3);
        assert_eq!(b[0], 0.0);
        assert_eq!(*b.last().unwrap(), 1.0);
        assert!(b.contains(&0.3));
        assert!(b.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn peaked_lorentzian_resolved_by_grading() {
        let eps = 1e-5;
        let breaks = graded_breaks(-1.0, 1.0, 0.2, eps);
        let v = integrate_panels(&breaks, 16, |x| eps / ((x - 0.2).powi(2) + eps * eps));
        let exact = (0.8 / eps).atan() + (1.2 / eps).atan();
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
    }

    #[test]
    fn half_line_substitution() {
        let v = integrate_to_infinity(0.0, 1.0, 32, 4, |x| 1.0 / (1.0 + x * x));
        assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-13);
    }
}
