//! Interpolation on quadrature meshes.

/// Barycentric weights for interpolation through Gauss–Legendre nodes
/// `z` (ascending) with quadrature weights `w`.
pub fn legendre_barycentric_weights(z: &[f64], w: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(w)
        .enumerate()
        .map(|(i, (&zi, &wi))| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * ((1.0 - zi * zi) * wi).sqrt()
        })
        .collect()
}

/// Evaluate the polynomial interpolant of `values` at `x`.
pub fn barycentric_eval(nodes: &[f64], bary: &[f64], values: &[f64], x: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&zi, &bi), &vi) in nodes.iter().zip(bary).zip(values) {
        let diff = x - zi;
        if diff == 0.0 {
            return vi;
        }
        let c = bi / diff;
        num += c * vi;
        den += c;
    }
    num / den
}

/// Lagrange basis values `L_i(x)` written into `out`.
pub fn barycentric_basis(nodes: &[f64], bary: &[f64], x: f64, out: &mut [f64]) {
    if let Some(hit) = nodes.iter().position(|&zi| zi == x) {
        out.iter_mut().for_each(|o| *o = 0.0);
        out[hit] = 1.0;
        return;
    }
    let mut den = 0.0;
    for ((o, &zi), &bi) in out.iter_mut().zip(nodes).zip(bary) {
        *o = bi / (x - zi);
        den += *o;
    }
    out.iter_mut().for_each(|o| *o /= den);
}

/// Lagrange basis of the `m`-point stencil of `nodes` (ascending) nearest to
/// `x`, written into `out`; entries outside the stencil are zero.
pub fn local_lagrange_basis(nodes: &[f64], m: usize, x: f64, out: &mut [f64]) {
    let n = nodes.len();
    let m = m.min(n);
    out.iter_mut().for_each(|o| *o = 0.0);
    let i = nodes.partition_point(|&v| v < x);
    let start = i.saturating_sub(m / 2).min(n - m);
    let stencil = &nodes[start..start + m];
    if let Some(hit) = stencil.iter().position(|&v| v == x) {
        out[start + hit] = 1.0;
        return;
    }
    let mut den = 0.0;
    for (k, &zk) in stencil.iter().enumerate() {
        let mut w = 1.0;
        for (j, &zj) in stencil.iter().enumerate() {
            if j != k {
                w /= zk - zj;
            }
        }
        let c = w / (x - zk);
        out[start + k] = c;
        den += c;
    }
    out[start..start + m].iter_mut().for_each(|o| *o /= den);
}

/// Piecewise-cubic Hermite interpolant with Fritsch–Carlson slopes; preserves
/// monotonicity of the data. `x` must be strictly increasing.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len());
        assert!(x.len() >= 2, "need at least two points");
        let n = x.len();
        let secants: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = secants[0];
        slopes[n - 1] = secants[n - 2];
        for i in 1..n - 1 {
            let (a, b) = (secants[i - 1], secants[i]);
            slopes[i] = if a * b <= 0.0 {
                0.0
            } else {
                // weighted harmonic mean keeps the interpolant monotone
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                (w1 + w2) / (w1 / a + w2 / b)
            };
        }
        MonotoneCubic { x, y, slopes }
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    /// Data values at the two nodes around `t` (clamped at the ends).
    pub fn bracket(&self, t: f64) -> (f64, f64) {
        let n = self.x.len();
        let i = self.x.partition_point(|&v| v <= t).clamp(1, n - 1);
        (self.y[i - 1], self.y[i])
    }

    /// Evaluate; outside the data range the end value is held.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = match self.x.binary_search_by(|v| v.total_cmp(&t)) {
            Ok(i) => return self.y[i],
            Err(i) => i - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i] + h10 * h * self.slopes[i] + h01 * self.y[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

/// Samples on a uniform grid, read back with six-point local Lagrange
/// interpolation (stencil clamped at the ends).
#[derive(Debug, Clone)]
pub struct UniformTable {
    x0: f64,
    h: f64,
    values: Vec<f64>,
}

impl UniformTable {
    pub fn new(x0: f64, h: f64, values: Vec<f64>) -> Self {
        assert!(values.len() >= 6 && h > 0.0);
        UniformTable { x0, h, values }
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.x0, self.x0 + self.h * (self.values.len() - 1) as f64)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let u = (x - self.x0) / self.h;
        let start = (u.floor() as isize - 2).clamp(0, n as isize - 6) as usize;
        let mut acc = 0.0;
        for i in 0..6 {
            let mut l = 1.0;
            let xi = (start + i) as f64;
            for j in 0..6 {
                if i != j {
                    let xj = (start + j) as f64;
                    l *= (u - xj) / (xi - xj);
                }
            }
            acc += l * self.values[start + i];
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::gauss_legendre;

    #[test]
    fn barycentric_reproduces_polynomials() {
        let rule = gauss_legendre(12);
        let bary = legendre_barycentric_weights(&rule.nodes, &rule.weights);
        let vals: Vec<f64> = rule.nodes.iter().map(|z| z.powi(7) - 2.0 * z).collect();
        for x in [-1.0, -0.3, 0.11, 0.999, 1.0] {
            let v = barycentric_eval(&rule.nodes, &bary, &vals, x);
            assert!((v - (x.powi(7) - 2.0 * x)).abs() < 1e-12);
        }
        let mut basis = vec![0.0; 12];
        barycentric_basis(&rule.nodes, &bary, 0.37, &mut basis);
        assert!((basis.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn monotone_cubic_stays_monotone() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 5.0, 5.1, 5.2, 9.0];
        let m = MonotoneCubic::new(x, y);
        let mut last = f64::NEG_INFINITY;
        for k in 0..=900 {
            let v = m.eval(k as f64 / 100.0);
            assert!(v >= last - 1e-14);
            last = v;
        }
        assert_eq!(m.eval(3.0), 1.0);
    }

    #[test]
    fn uniform_table_is_sixth_order() {
        let h = 0.05;
        let vals: Vec<f64> = (0..201).map(|i| (-5.0 + h * i as f64).sin()).collect();
        let t = UniformTable::new(-5.0, h, vals);
        for x in [-4.99, -1.234, 0.0, 2.71, 4.999] {
            assert!((t.eval(x) - x.sin()).abs() < 1e-9, "{x}");
        }
    }
}
