use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::Grid;

/// Complex amplitudes on a [`Grid`].
///
/// Inner products are `dx·Σ conj(a_j) b_j`, the metric under which the
/// lattice Hamiltonian is symmetric and Crank–Nicolson steps are unitary.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: Grid,
    amplitudes: Vec<Complex64>,
}

impl WaveFunction {
    pub fn new(grid: Grid, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != grid.n_points() {
            return Err(Error::Dimension {
                expected: grid.n_points(),
                found: amplitudes.len(),
            });
        }
        if amplitudes.iter().any(|z| !z.is_finite()) {
            return Err(Error::param("wavefunction has non-finite amplitudes"));
        }
        Ok(Self { grid, amplitudes })
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    /// Samples `f` on the grid.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        Self::new(grid, grid.points().map(f).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.grid.dx() * self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr();
        if !(n > 0.0) {
            return Err(Error::param("cannot normalize a zero wavefunction"));
        }
        let s = 1.0 / n.sqrt();
        self.amplitudes.iter_mut().for_each(|z| *z *= s);
        Ok(())
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &WaveFunction) -> Result<Complex64> {
        if !self.grid.matches(&other.grid) {
            return Err(Error::Dimension {
                expected: self.grid.n_points(),
                found: other.grid.n_points(),
            });
        }
        let s: Complex64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.grid.dx())
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap_probability(&self, other: &WaveFunction) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// Probability on the listed sites.
    pub fn weight_on(&self, sites: &[usize]) -> f64 {
        self.grid.dx() * sites.iter().map(|&j| self.amplitudes[j].norm_sqr()).sum::<f64>()
    }

    /// Probability on sites with `x` inside `[lo, hi]`.
    pub fn weight_between(&self, lo: f64, hi: f64) -> f64 {
        self.grid.dx()
            * self
                .grid
                .points()
                .zip(&self.amplitudes)
                .filter(|(x, _)| *x >= lo && *x <= hi)
                .map(|(_, z)| z.norm_sqr())
                .sum::<f64>()
    }

    /// Multiplies by `exp(i k x)`.
    pub fn boost(&mut self, k: f64) {
        let step = Complex64::cis(k * self.grid.dx());
        let mut phase = Complex64::cis(k * self.grid.x_min());
        for z in &mut self.amplitudes {
            *z *= phase;
            phase *= step;
        }
    }

    pub fn boosted(&self, k: f64) -> Self {
        let mut w = self.clone();
        w.boost(k);
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inner_product_and_norm() {
        let g = Grid::new(0.0, 1.0, 0.25).unwrap();
        let a = WaveFunction::from_real(g, &[1.0, 2.0, 0.0, -1.0, 1.0]).unwrap();
        assert!((a.norm_sqr() - 0.25 * 7.0).abs() < 1e-15);
        let mut b = a.clone();
        b.normalize().unwrap();
        assert!((b.norm_sqr() - 1.0).abs() < 1e-14);
        let ib = b.boosted(3.0);
        assert!((ib.norm_sqr() - 1.0).abs() < 1e-14);
        let direct: Complex64 = g
            .points()
            .zip(b.amplitudes())
            .map(|(x, z)| z.conj() * z * Complex64::cis(3.0 * x))
            .sum::<Complex64>()
            * g.dx();
        assert!((b.inner(&ib).unwrap() - direct).norm() < 1e-13);
    }

    #[test]
    fn shape_errors() {
        let g = Grid::new(0.0, 1.0, 0.25).unwrap();
        assert!(WaveFunction::from_real(g, &[1.0, 2.0]).is_err());
        let h = Grid::new(0.0, 2.0, 0.25).unwrap();
        let a = WaveFunction::from_real(g, &[1.0; 5]).unwrap();
        let b = WaveFunction::from_real(h, &[1.0; 9]).unwrap();
        assert!(matches!(a.inner(&b), Err(Error::Dimension { .. })));
        let z = WaveFunction::from_real(g, &[0.0; 5]).unwrap();
        assert!(z.clone().normalize().is_err());
        assert!(WaveFunction::from_real(g, &[f64::NAN; 5]).is_err());
    }

    #[test]
    fn weights() {
        let g = Grid::new(0.0, 1.0, 0.25).unwrap();
        let a = WaveFunction::from_real(g, &[1.0, 1.0, 1.0, 1.0, 2.0]).unwrap();
        assert!((a.weight_on(&[0, 4]) - 0.25 * 5.0).abs() < 1e-15);
        assert!((a.weight_between(0.4, 0.8) - 0.25 * 2.0).abs() < 1e-15);
    }
}
