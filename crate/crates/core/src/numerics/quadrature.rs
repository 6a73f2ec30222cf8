use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Fixed-order Gauss–Legendre rule on `[a, b]`.
pub fn integrate_fixed(f: impl Fn(f64) -> Complex64, a: f64, b: f64, n: usize) -> Complex64 {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter()
        .zip(&w)
        .map(|(&xi, &wi)| f(mid + half * xi) * wi)
        .sum::<Complex64>()
        * half
}

/// `∫_a^b f(x) dx` for integrands with square-root behaviour at both ends.
///
/// Substitutes `x = (a+b)/2 + (b−a)/2 · sin θ`, which makes such integrands
/// smooth, then doubles the Gauss–Legendre order from 16 until the relative
/// change drops below `rel_tol` (or the absolute change below `1e-14`).
pub fn integrate_sqrt_endpoints(f: impl Fn(f64) -> Complex64, a: f64, b: f64, rel_tol: f64) -> Result<Complex64> {
    const ABS_FLOOR: f64 = 1e-14;
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let g = |theta: f64| f(mid + half * theta.sin()) * (half * theta.cos());
    let mut n = 16;
    let mut prev = integrate_fixed(g, -PI / 2.0, PI / 2.0, n);
    while n < 8192 {
        n *= 2;
        let next = integrate_fixed(g, -PI / 2.0, PI / 2.0, n);
        let scale = next.norm().max(f64::MIN_POSITIVE);
        if (next - prev).norm() <= (rel_tol * scale).max(ABS_FLOOR) {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::numeric("Gauss–Legendre order doubling", n))
}

/// Real-valued convenience wrapper around [`integrate_sqrt_endpoints`].
pub fn integrate_sqrt_endpoints_real(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    integrate_sqrt_endpoints(|x| Complex64::new(f(x), 0.0), a, b, rel_tol).map(|z| z.re)
}
