use num_complex::Complex64;

use crate::error::{Error, Result};

/// Solves `T x = rhs` in place, where `T` has sub-diagonal `lower[i]`
/// (row `i+1`), diagonal `diag[i]` and super-diagonal `upper[i]` (row `i`).
///
/// Gaussian elimination without pivoting; `work` must have the length of `diag`.
pub fn solve_tridiagonal(
    lower: &[Complex64],
    diag: &[Complex64],
    upper: &[Complex64],
    rhs: &mut [Complex64],
    work: &mut [Complex64],
) -> Result<()> {
    let n = diag.len();
    for (len, want) in [
        (lower.len(), n.saturating_sub(1)),
        (upper.len(), n.saturating_sub(1)),
        (rhs.len(), n),
        (work.len(), n),
    ] {
        if len != want {
            return Err(Error::Dimension {
                expected: want,
                found: len,
            });
        }
    }
    if n == 0 {
        return Ok(());
    }
    let mut pivot = diag[0];
    check_pivot(pivot, 0)?;
    rhs[0] /= pivot;
    for i in 1..n {
        work[i] = upper[i - 1] / pivot;
        pivot = diag[i] - lower[i - 1] * work[i];
        check_pivot(pivot, i)?;
        rhs[i] = (rhs[i] - lower[i - 1] * rhs[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= work[i + 1] * next;
    }
    Ok(())
}

/// As [`solve_tridiagonal`] with every off-diagonal entry equal to `off`.
pub fn solve_uniform_tridiagonal(
    off: Complex64,
    diag: &[Complex64],
    rhs: &mut [Complex64],
    work: &mut [Complex64],
) -> Result<()> {
    let n = diag.len();
    if rhs.len() != n || work.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: rhs.len().min(work.len()),
        });
    }
    if n == 0 {
        return Ok(());
    }
    let mut pivot = diag[0];
    check_pivot(pivot, 0)?;
    rhs[0] /= pivot;
    for i in 1..n {
        work[i] = off / pivot;
        pivot = diag[i] - off * work[i];
        check_pivot(pivot, i)?;
        rhs[i] = (rhs[i] - off * rhs[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= work[i + 1] * next;
    }
    Ok(())
}

fn check_pivot(p: Complex64, row: usize) -> Result<()> {
    if p.norm() == 0.0 || !p.is_finite() {
        Err(Error::numeric(
            format!("tridiagonal solve: zero pivot at row {row}"),
            row,
        ))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn matches_dense_product() {
        let n = 7;
        let lower: Vec<_> = (0..n - 1).map(|i| c(0.3 + i as f64 * 0.1, -0.2)).collect();
        let upper: Vec<_> = (0..n - 1).map(|i| c(-0.5, 0.1 * i as f64)).collect();
        let diag: Vec<_> = (0..n).map(|i| c(3.0 + i as f64, 0.5)).collect();
        let x: Vec<_> = (0..n).map(|i| c(i as f64 - 2.0, 1.0 / (i + 1) as f64)).collect();
        let mut b = vec![Complex64::default(); n];
        for i in 0..n {
            b[i] = diag[i] * x[i];
            if i > 0 {
                b[i] += lower[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                b[i] += upper[i] * x[i + 1];
            }
        }
        let mut work = vec![Complex64::default(); n];
        let mut sol = b.clone();
        solve_tridiagonal(&lower, &diag, &upper, &mut sol, &mut work).unwrap();
        for i in 0..n {
            assert!((sol[i] - x[i]).norm() < 1e-13);
        }
        let off = c(0.7, -0.4);
        let mut b2 = vec![Complex64::default(); n];
        for i in 0..n {
            b2[i] = diag[i] * x[i];
            if i > 0 {
                b2[i] += off * x[i - 1];
            }
            if i + 1 < n {
                b2[i] += off * x[i + 1];
            }
        }
        solve_uniform_tridiagonal(off, &diag, &mut b2, &mut work).unwrap();
        for i in 0..n {
            assert!((b2[i] - x[i]).norm() < 1e-13);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let diag = vec![Complex64::default(); 3];
        let mut rhs = vec![c(1.0, 0.0); 3];
        let mut work = vec![Complex64::default(); 3];
        assert!(solve_uniform_tridiagonal(c(1.0, 0.0), &diag, &mut rhs, &mut work).is_err());
    }
}
