use num_complex::Complex64;

use crate::error::{Error, Result};

use super::thomas::solve_tridiagonal;

const MAX_SWEEPS: usize = 80;

/// Complex symmetric (not Hermitian) tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSymTridiagonal {
    pub diag: Vec<Complex64>,
    pub off: Vec<Complex64>,
}

impl ComplexSymTridiagonal {
    pub fn new(diag: Vec<Complex64>, off: Vec<Complex64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::Dimension {
                expected: diag.len().saturating_sub(1),
                found: off.len(),
            });
        }
        Ok(Self { diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// Refines an approximate eigenpair by shifted inverse iteration with the
    /// bilinear (unconjugated) Rayleigh quotient `vᵀAv / vᵀv`.
    ///
    /// Returns the eigenvalue, the right eigenvector and the final residual
    /// `‖Av − λv‖ / ‖v‖`.
    pub fn refine(&self, guess: Complex64, iterations: usize) -> Result<(Complex64, Vec<Complex64>, f64)> {
        let n = self.len();
        let mut lambda = guess;
        let mut v: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(1.0 + 0.05 * ((i * 31) % 7) as f64, 0.0))
            .collect();
        let mut work = vec![Complex64::default(); n];
        let mut residual = f64::INFINITY;
        for _ in 0..iterations.max(1) {
            let diag: Vec<Complex64> = self.diag.iter().map(|&d| d - lambda).collect();
            let mut rhs = v.clone();
            if solve_tridiagonal(&self.off, &diag, &self.off, &mut rhs, &mut work).is_err() {
                // shift hit an eigenvalue exactly
                lambda += Complex64::new(1e-12, 1e-12) * (1.0 + lambda.norm());
                continue;
            }
            let nrm = rhs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if !(nrm.is_finite() && nrm > 0.0) {
                return Err(Error::numeric("complex inverse iteration", iterations));
            }
            v = rhs.into_iter().map(|z| z / nrm).collect();
            let av = self.matvec(&v);
            let num: Complex64 = v.iter().zip(&av).map(|(a, b)| a * b).sum();
            let den: Complex64 = v.iter().map(|a| a * a).sum();
            if den.norm() == 0.0 {
                return Err(Error::numeric(
                    "bilinear Rayleigh quotient (self-orthogonal vector)",
                    iterations,
                ));
            }
            lambda = num / den;
            residual = av
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - lambda * b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if residual < 1e-13 * (1.0 + lambda.norm()) {
                break;
            }
        }
        Ok((lambda, v, residual))
    }
}

/// All eigenvalues of a complex symmetric tridiagonal matrix by implicit QL
/// with complex orthogonal rotations. Returned in the order they deflate.
pub fn complex_symmetric_eigenvalues(mat: &ComplexSymTridiagonal) -> Result<Vec<Complex64>> {
    let n = mat.len();
    let mut d = mat.diag.clone();
    let mut e = mat.off.clone();
    e.push(Complex64::default());
    let one = Complex64::new(1.0, 0.0);

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].norm() + d[m + 1].norm();
                if e[m].norm() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_SWEEPS {
                return Err(Error::numeric(format!("complex QL sweep on row {l}"), iter));
            }
            // exceptional shift every tenth sweep to break cycles
            let mut g = (d[l + 1] - d[l]) / (e[l] * 2.0);
            if iter % 10 == 0 {
                g += Complex64::new(0.0, 0.5);
            }
            let r = (g * g + one).sqrt();
            let denom = if (g + r).norm() >= (g - r).norm() { g + r } else { g - r };
            g = d[m] - d[l] + e[l] / denom;
            let (mut s, mut c, mut p) = (one, one, Complex64::default());
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                let r = (f * f + g * g).sqrt();
                e[i + 1] = r;
                if r.norm() <= f64::MIN_POSITIVE {
                    d[i + 1] -= p;
                    e[m] = Complex64::default();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                let r2 = (d[i] - g) * s + c * b * 2.0;
                p = s * r2;
                d[i + 1] = g + p;
                g = c * r2 - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = Complex64::default();
        }
    }
    if d.iter().any(|z| !z.is_finite()) {
        return Err(Error::numeric("complex QL produced non-finite values", MAX_SWEEPS));
    }
    Ok(d)
}
