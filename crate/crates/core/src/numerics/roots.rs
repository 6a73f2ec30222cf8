use crate::error::{Error, Result};

/// Root of `f` in `[lo, hi]` by bisection; `f(lo)` and `f(hi)` must differ
/// in sign.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, xtol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || !flo.is_finite() || !fhi.is_finite() {
        return Err(Error::param(format!(
            "root not bracketed on [{lo}, {hi}]: f = {flo}, {fhi}"
        )));
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= xtol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Walks from `start` in steps of `step` until `f` changes sign, returning the
/// bracketing pair, or `None` after `max_steps`.
pub fn scan_for_sign_change(f: impl Fn(f64) -> f64, start: f64, step: f64, max_steps: usize) -> Option<(f64, f64)> {
    let mut x0 = start;
    let mut f0 = f(x0);
    for _ in 0..max_steps {
        let x1 = x0 + step;
        let f1 = f(x1);
        if f0 == 0.0 || f0.signum() != f1.signum() {
            return Some(if step > 0.0 { (x0, x1) } else { (x1, x0) });
        }
        x0 = x1;
        f0 = f1;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-10).is_err());
        let (a, b) = scan_for_sign_change(|x| x - 3.3, 0.0, 0.5, 100).unwrap();
        assert!(a < 3.3 && b > 3.3);
        let (a, b) = scan_for_sign_change(|x| x + 1.2, 0.0, -0.5, 100).unwrap();
        assert!(a < -1.2 && b > -1.2);
    }
}
