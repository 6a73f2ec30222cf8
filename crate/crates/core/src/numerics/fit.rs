use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordinary least-squares line `y = slope·x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Root-mean-square residual.
    pub rms: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            found: y.len(),
        });
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::FitDomain(format!("need at least 2 points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::FitDomain("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        rms: (sse / nf).sqrt(),
    })
}

/// Outcome of a Levenberg–Marquardt run.
#[derive(Debug, Clone, PartialEq)]
pub struct LmResult {
    pub params: Vec<f64>,
    /// Root-mean-square residual at `params`.
    pub rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nonlinear least squares for a model `f(x; p)` returning value and
/// gradient with respect to `p`.
pub fn levenberg_marquardt<F>(model: F, x: &[f64], y: &[f64], p0: &[f64], max_iter: usize) -> Result<LmResult>
where
    F: Fn(f64, &[f64]) -> (f64, Vec<f64>),
{
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            found: y.len(),
        });
    }
    let np = p0.len();
    if x.len() < np {
        return Err(Error::FitDomain(format!(
            "{} points cannot determine {np} parameters",
            x.len()
        )));
    }
    let sse = |p: &[f64]| -> f64 { x.iter().zip(y).map(|(&xi, &yi)| (yi - model(xi, p).0).powi(2)).sum() };
    let mut p = p0.to_vec();
    let mut cost = sse(&p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut jtj = vec![0.0; np * np];
        let mut jtr = vec![0.0; np];
        for (&xi, &yi) in x.iter().zip(y) {
            let (v, g) = model(xi, &p);
            let r = yi - v;
            for a in 0..np {
                jtr[a] += g[a] * r;
                for b in 0..np {
                    jtj[a * np + b] += g[a] * g[b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for k in 0..np {
                a[k * np + k] += lambda * jtj[k * np + k].max(1e-300);
            }
            let Some(step) = solve_dense(&mut a, &jtr, np) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
            let c = sse(&trial);
            if c.is_finite() && c <= cost {
                let small_step = step
                    .iter()
                    .zip(&trial)
                    .all(|(s, t)| s.abs() <= 1e-12 * (t.abs() + 1e-12));
                let small_gain = cost - c <= 1e-15 * cost.max(f64::MIN_POSITIVE) || c == 0.0;
                p = trial;
                cost = c;
                lambda = (lambda / 10.0).max(1e-15);
                improved = true;
                if small_step || small_gain {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // no downhill step at any damping: a (local) minimum
            converged = true;
        }
        if converged {
            break;
        }
    }
    Ok(LmResult {
        params: p,
        rms: (cost / x.len() as f64).sqrt(),
        iterations,
        converged,
    })
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense(a: &mut [f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut b = b.to_vec();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if a[piv * n + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i * n + k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i * n + i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| -0.1 * v + 2.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope + 0.1).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-13);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
        assert!(linear_fit(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn lm_recovers_offset_exponential() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|t| 0.2 + 0.8 * (-0.05 * t).exp()).collect();
        let model = |t: f64, p: &[f64]| {
            let e = (-p[2] * t).exp();
            (p[0] + p[1] * e, vec![1.0, e, -p[1] * t * e])
        };
        let r = levenberg_marquardt(model, &x, &y, &[0.0, 1.0, 0.03], 200).unwrap();
        assert!(r.converged);
        assert!((r.params[0] - 0.2).abs() < 1e-9);
        assert!((r.params[1] - 0.8).abs() < 1e-9);
        assert!((r.params[2] - 0.05).abs() < 1e-9);
    }
}
