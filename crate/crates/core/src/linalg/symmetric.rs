use num_complex::Complex64;

use crate::error::{Error, Result};

use super::thomas::solve_tridiagonal;

const MAX_QL_SWEEPS: usize = 60;

/// Real symmetric tridiagonal matrix; `off[i]` couples rows `i` and `i+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
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

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
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

    /// Infinity norm, which bounds the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.off[i - 1].abs();
                }
                if i + 1 < n {
                    s += self.off[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence).
    pub fn count_below(&self, x: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt();
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            if q.abs() < tiny {
                q = if q < 0.0 { -tiny } else { tiny };
            }
            q = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / q;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th smallest eigenvalue (0-based) by Sturm bisection.
    pub fn eigenvalue_by_bisection(&self, k: usize) -> Result<f64> {
        if k >= self.len() {
            return Err(Error::InvalidLevel {
                level: k,
                count: self.len(),
            });
        }
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        lo -= 1e-12 * scale;
        hi += 1e-12 * scale;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 4.0 * f64::EPSILON * scale {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Eigenvector for an accurately known eigenvalue by inverse iteration,
    /// normalized to unit Euclidean length and orthogonalized against
    /// `previous`.
    pub fn inverse_iteration(&self, lambda: f64, previous: &[Vec<f64>]) -> Result<Vec<f64>> {
        let n = self.len();
        let shift = lambda + 1e-10 * self.norm_inf().max(1.0) * f64::EPSILON.sqrt();
        let lower: Vec<Complex64> = self.off.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let diag: Vec<Complex64> = self.diag.iter().map(|&v| Complex64::new(v - shift, 0.0)).collect();
        let mut work = vec![Complex64::default(); n];
        // deterministic, non-symmetric start vector
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
        for _ in 0..4 {
            let mut rhs: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            solve_tridiagonal(&lower, &diag, &lower, &mut rhs, &mut work)?;
            v = rhs.iter().map(|z| z.re).collect();
            for p in previous {
                let d: f64 = p.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(p).for_each(|(x, y)| *x -= d * y);
            }
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(nrm > 0.0 && nrm.is_finite()) {
                return Err(Error::numeric("inverse iteration", 4));
            }
            v.iter_mut().for_each(|x| *x /= nrm);
        }
        Ok(v)
    }

    /// Lowest `count` eigenpairs by bisection and inverse iteration.
    pub fn lowest_eigenpairs(&self, count: usize) -> Result<Vec<(f64, Vec<f64>)>> {
        let mut out: Vec<(f64, Vec<f64>)> = Vec::with_capacity(count);
        for k in 0..count.min(self.len()) {
            let e = self.eigenvalue_by_bisection(k)?;
            let prev: Vec<Vec<f64>> = out.iter().map(|(_, v)| v.clone()).collect();
            let v = self.inverse_iteration(e, &prev)?;
            out.push((e, v));
        }
        Ok(out)
    }
}

/// Implicit-shift QL on a symmetric tridiagonal matrix.
///
/// On entry `diag` and `off` hold the matrix (`off.len() == diag.len() - 1`).
/// `rows` is a row-major `n_rows × n` block `R`; on exit it is replaced by
/// `R·Z`, where the columns of `Z` are the orthonormal eigenvectors. Passing the
/// identity yields the eigenvectors themselves; passing a handful of rows
/// yields only their projections, at `O(n²·n_rows)` cost.
///
/// Returns the eigenvalues in ascending order, with the columns of `rows`
/// permuted to match.
pub fn ql_implicit(diag: &[f64], off: &[f64], rows: &mut [f64], n_rows: usize) -> Result<Vec<f64>> {
    let n = diag.len();
    if off.len() + 1 != n {
        return Err(Error::Dimension {
            expected: n.saturating_sub(1),
            found: off.len(),
        });
    }
    if rows.len() != n * n_rows {
        return Err(Error::Dimension {
            expected: n * n_rows,
            found: rows.len(),
        });
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_SWEEPS {
                return Err(Error::numeric(format!("QL sweep on row {l}"), iter));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in rows.chunks_exact_mut(n) {
                    let zi = row[i];
                    let zn = row[i + 1];
                    row[i + 1] = s * zi + c * zn;
                    row[i] = c * zi - s * zn;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values: Vec<f64> = order.iter().map(|&k| d[k]).collect();
    let mut scratch = vec![0.0; n];
    for row in rows.chunks_exact_mut(n) {
        for (dst, &k) in scratch.iter_mut().zip(&order) {
            *dst = row[k];
        }
        row.copy_from_slice(&scratch);
    }
    Ok(values)
}
