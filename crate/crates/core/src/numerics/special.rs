use std::f64::consts::PI;

use num_complex::Complex64;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Principal branch of `ln Γ(z)` for complex `z`, by the Lanczos
/// approximation with reflection for `Re z < 1/2`.
///
/// The imaginary part is continuous along lines of constant `Re z > 0`, which
/// is what phase derivatives need.
pub fn ln_gamma(z: Complex64) -> Complex64 {
    if z.re < 0.5 {
        // Γ(z)Γ(1−z) = π / sin(πz)
        let s = (z * PI).sin();
        return Complex64::new(PI.ln(), 0.0) - s.ln() - ln_gamma(Complex64::new(1.0, 0.0) - z);
    }
    let z = z - 1.0;
    let mut x = Complex64::new(LANCZOS_COEF[0], 0.0);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

/// `arg Γ(1/2 + i y)`, continuous in `y` (not reduced modulo 2π).
pub fn arg_gamma_half(y: f64) -> f64 {
    // Stirling series at z + 8, pulled back with Γ(z+8) = Γ(z) Π (z+k);
    // every logarithm here has a positive real argument part, so no branch
    // cut is crossed as y varies.
    let z = Complex64::new(0.5, y);
    let w = z + 8.0;
    let mut s = (w - 0.5) * w.ln() - w;
    let w2 = w * w;
    let mut wp = w;
    for c in [1.0 / 12.0, -1.0 / 360.0, 1.0 / 1260.0, -1.0 / 1680.0, 1.0 / 1188.0] {
        s += c / wp;
        wp *= w2;
    }
    let shift: f64 = (0..8).map(|k| (z + k as f64).arg()).sum();
    s.im - shift
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_values() {
        assert!(ln_gamma(Complex64::new(1.0, 0.0)).norm() < 1e-14);
        assert!((ln_gamma(Complex64::new(5.0, 0.0)).re - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(Complex64::new(0.5, 0.0)).re - PI.sqrt().ln()).abs() < 1e-14);
    }

    #[test]
    fn modulus_on_half_line() {
        // |Γ(1/2 + iy)|² = π / cosh(πy)
        for &y in &[0.0, 0.3, 1.0, 2.5, 6.0, 15.0] {
            let lg = ln_gamma(Complex64::new(0.5, y));
            let want = 0.5 * (PI.ln() - (PI * y).cosh().ln());
            assert!((lg.re - want).abs() < 1e-12, "y = {y}");
        }
    }

    #[test]
    fn recurrence_and_phase_continuity() {
        let z = Complex64::new(0.7, 1.3);
        let lhs = ln_gamma(z + 1.0);
        let rhs = ln_gamma(z) + z.ln();
        let d = lhs - rhs;
        assert!(d.re.abs() < 1e-12);
        let wraps = (d.im / (2.0 * PI)).round();
        assert!((d.im - 2.0 * PI * wraps).abs() < 1e-12);
        for &y in &[0.0, 0.4, 1.7, 3.0] {
            let a = arg_gamma_half(y);
            let b = ln_gamma(Complex64::new(0.5, y)).im;
            let wraps = ((a - b) / (2.0 * PI)).round();
            assert!((a - b - 2.0 * PI * wraps).abs() < 1e-12);
        }
        // derivative of arg Γ(1/2+iy) is Re ψ(1/2+iy) ≈ ln y for large y
        let mut prev = arg_gamma_half(0.0);
        for i in 1..4000 {
            let y = i as f64 * 0.005;
            let a = arg_gamma_half(y);
            assert!((a - prev).abs() < 0.1, "jump at y = {y}");
            prev = a;
        }
        let y = 12.0;
        let h = 1e-4;
        let slope = (arg_gamma_half(y + h) - arg_gamma_half(y - h)) / (2.0 * h);
        assert!((slope - y.ln()).abs() < 1e-2);
    }
}
