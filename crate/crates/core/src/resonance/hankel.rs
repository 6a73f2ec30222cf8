//! Hankel functions `H^{(1,2)}_ν(σ)` of complex order and real argument in the
//! oscillatory regime `0 < Re ν < σ`, from the Sommerfeld integral
//!
//! `H^{(1)}_ν(σ) = (1/πi) ∫_{−∞}^{∞+πi} exp(σ sinh w − ν w) dw`
//!
//! taken along the steepest-descent path of the real-order exponent through
//! the saddle `w = iβ`, `cos β = Re ν / σ`. The path is parametrised by
//! `σ sinh w − ν_r w = f(iβ) − s²`, so the integrand is a Gaussian in `s`
//! times a smooth factor and the trapezoid rule converges geometrically.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Half-length of the integration range in the path parameter `s`.
const S_MAX: f64 = 10.0;
const MAX_SUBSTEP: f64 = 0.02;

/// Steepest-descent path through the saddle `w0 = iβ` of
/// `f(w) = σ sinh w − ν_r w`, parametrised by `f(w) − f(w0) = −s²`.
struct Path {
    sigma: f64,
    nu_r: f64,
    /// `σ sinh w0 = iσ sin β`.
    f2: Complex64,
    /// `σ sin β − ν_r β`, the constant imaginary part of `f` on the path.
    level: f64,
    /// `dδ/ds` at the saddle and the next two Taylor coefficients.
    c: [Complex64; 3],
}

fn sinh_minus_id(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        let z2 = z * z;
        let mut term = z * z2 / 6.0;
        let mut sum = term;
        for k in 2..12 {
            term *= z2 / ((2 * k) as f64 * (2 * k + 1) as f64);
            sum += term;
        }
        sum
    } else {
        z.sinh() - z
    }
}

impl Path {
    fn new(nu_r: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && nu_r > 0.0 && nu_r < sigma) {
            return Err(Error::OutOfRange {
                value: nu_r,
                lo: 0.0,
                hi: sigma,
            });
        }
        let beta = (nu_r / sigma).acos();
        let f2 = Complex64::new(0.0, sigma * beta.sin());
        let f3 = Complex64::new(nu_r, 0.0);
        let f4 = f2;
        // branch heading towards ∞ + πi
        let mut c1 = (-2.0 / f2).sqrt();
        if c1.re < 0.0 {
            c1 = -c1;
        }
        let c2 = -f3 * c1 * c1 / (6.0 * f2);
        let c3 = -(f2 * c2 * c2 / 2.0 + f3 * c1 * c1 * c2 / 2.0 + f4 * c1.powi(4) / 24.0) / (f2 * c1);
        Ok(Self {
            sigma,
            nu_r,
            f2,
            level: sigma * beta.sin() - nu_r * beta,
            c: [c1, c2, c3],
        })
    }

    fn saddle(&self) -> Complex64 {
        Complex64::new(0.0, (self.nu_r / self.sigma).acos())
    }

    /// `f(w0 + δ) − f(w0)` and its derivative, free of cancellation.
    fn excess(&self, d: Complex64) -> (Complex64, Complex64) {
        let half = (d * 0.5).sinh();
        let g = self.f2 * 2.0 * half * half + sinh_minus_id(d) * self.nu_r;
        let dg = self.f2 * d.sinh() + (half * half * 2.0) * self.nu_r;
        (g, dg)
    }

    fn series(&self, s: f64) -> (Complex64, Complex64) {
        let [c1, c2, c3] = self.c;
        (
            c1 * s + c2 * s * s + c3 * s * s * s,
            c1 + c2 * (2.0 * s) + c3 * (3.0 * s * s),
        )
    }

    /// Offsets `δ(s_k)` and `dδ/ds` at `s_k = k h`, `k = 0..=n`, for the
    /// direction `sign`.
    fn march(&self, h: f64, n: usize, sign: f64) -> Result<Vec<(Complex64, Complex64)>> {
        let mut out = Vec::with_capacity(n + 1);
        out.push((Complex64::default(), self.c[0] * 1.0));
        let sub = (h / MAX_SUBSTEP).ceil().max(1.0) as usize;
        let ds = sign * h / sub as f64;
        let (mut d, mut dd) = (Complex64::default(), self.c[0]);
        let mut s = 0.0;
        for _ in 0..n {
            for _ in 0..sub {
                s += ds;
                let (mut guess, series_slope) = self.series(s);
                if s.abs() > 0.05 {
                    guess = d + dd * ds;
                }
                d = self.newton(guess, s)?;
                dd = if s.abs() < 1e-6 {
                    series_slope
                } else {
                    (-2.0 * s) / self.excess(d).1
                };
            }
            out.push((d, dd));
        }
        Ok(out)
    }

    fn newton(&self, mut d: Complex64, s: f64) -> Result<Complex64> {
        for _ in 0..60 {
            let (g, dg) = self.excess(d);
            let step = (g + s * s) / dg;
            d -= step;
            if !d.re.is_finite() {
                break;
            }
            if step.norm() <= 1e-15 * (1.0 + d.norm()) {
                return Ok(d);
            }
        }
        Err(Error::numeric("Hankel contour path", 60))
    }
}

/// `∫ exp(σ sinh w − ν w) e^{shift·w} dw` along the path (or its mirror image
/// in the real axis when `lower` is set), for each requested shift.
fn contour_integrals(nu: Complex64, sigma: f64, shifts: &[f64], lower: bool) -> Result<Vec<Complex64>> {
    let path = Path::new(nu.re, sigma)?;
    let w0 = path.saddle();
    let integrate = |h: f64| -> Result<Vec<Complex64>> {
        let n = (S_MAX / h).round() as usize;
        let mut sums = vec![Complex64::default(); shifts.len()];
        for (sign, skip) in [(1.0, 0usize), (-1.0, 1)] {
            for (k, (d, dd)) in path.march(h, n, sign)?.into_iter().enumerate().skip(skip) {
                let s = k as f64 * h;
                let (mut w, mut dw) = (w0 + d, dd);
                if lower {
                    w = w.conj();
                    dw = dw.conj();
                }
                // exp(f − f(w0)) = exp(−s²) on the path; Im ν enters separately
                let base = (Complex64::new(0.0, -nu.im) * w).exp() * dw * ((-s * s).exp() * h);
                for (acc, &shift) in sums.iter_mut().zip(shifts) {
                    *acc += base * (w * shift).exp();
                }
            }
        }
        Ok(sums)
    };
    let mut h = 0.2;
    let mut prev = integrate(h)?;
    for _ in 0..6 {
        h *= 0.5;
        let next = integrate(h)?;
        let converged = next.iter().zip(&prev).all(|(a, b)| (a - b).norm() <= 1e-13 * a.norm());
        if converged {
            let level = Complex64::cis(if lower { -path.level } else { path.level });
            return Ok(next.into_iter().map(|z| z * level).collect());
        }
        prev = next;
    }
    Err(Error::numeric("Hankel contour quadrature", 6))
}

/// `H^{(1)}_ν(σ)` for `0 < Re ν < σ`.
pub fn hankel1(nu: Complex64, sigma: f64) -> Result<Complex64> {
    let i = contour_integrals(nu, sigma, &[0.0], false)?[0];
    Ok(i / Complex64::new(0.0, PI))
}

/// `H^{(2)}_ν(σ)` for `0 < Re ν < σ`, integrated along the mirrored path
/// from `−∞` to `∞ − πi`.
pub fn hankel2(nu: Complex64, sigma: f64) -> Result<Complex64> {
    let i = contour_integrals(nu, sigma, &[0.0], true)?[0];
    Ok(-i / Complex64::new(0.0, PI))
}

fn ratio(nu: Complex64, sigma: f64, lower: bool) -> Result<Complex64> {
    let r = contour_integrals(nu, sigma, &[1.0, 0.0], lower)?;
    if r[1].norm() == 0.0 {
        return Err(Error::numeric("Hankel ratio with vanishing denominator", 0));
    }
    Ok(r[0] / r[1])
}

/// `H^{(1)}_{ν−1}(σ) / H^{(1)}_ν(σ)`.
pub fn hankel1_ratio(nu: Complex64, sigma: f64) -> Result<Complex64> {
    ratio(nu, sigma, false)
}

/// `H^{(2)}_{ν−1}(σ) / H^{(2)}_ν(σ)`.
pub fn hankel2_ratio(nu: Complex64, sigma: f64) -> Result<Complex64> {
    ratio(nu, sigma, true)
}
