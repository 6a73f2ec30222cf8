//! Exact diagonalization of the lattice Hamiltonian, expansion of states in
//! its eigenbasis, dephasing survival sums and decay-rate fits.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ql_implicit, SymTridiagonal};
use crate::model::{bound_state_wavefunction, tilted_potential, Grid, PhysicalParams, PotentialSpec};
use crate::numerics::fit::{levenberg_marquardt, linear_fit};
use crate::wavefunction::WaveFunction;

/// Hopping amplitude `ħ²/(2m dx²)`.
pub fn hopping(params: &PhysicalParams, dx: f64) -> f64 {
    params.hbar * params.hbar / (2.0 * params.mass * dx * dx)
}

/// `H = −t (shift₊ + shift₋ − 2) + V` on the grid with hard walls just outside
/// the first and last mesh points.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHamiltonian {
    grid: Grid,
    hopping: f64,
    potential: Vec<f64>,
}

impl DiscreteHamiltonian {
    pub fn new(grid: Grid, params: &PhysicalParams, potential: Vec<f64>) -> Result<Self> {
        params.validate()?;
        if potential.len() != grid.n_points() {
            return Err(Error::Dimension {
                expected: grid.n_points(),
                found: potential.len(),
            });
        }
        Ok(Self {
            grid,
            hopping: hopping(params, grid.dx()),
            potential,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn hopping(&self) -> f64 {
        self.hopping
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.potential.iter().map(|v| v + 2.0 * self.hopping).collect()
    }

    pub fn matrix(&self) -> SymTridiagonal {
        SymTridiagonal {
            diag: self.diagonal(),
            off: vec![-self.hopping; self.grid.n_points() - 1],
        }
    }

    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let n = psi.len();
        let t = self.hopping;
        (0..n)
            .map(|j| {
                let mut s = (self.potential[j] + 2.0 * t) * psi[j];
                if j > 0 {
                    s -= t * psi[j - 1];
                }
                if j + 1 < n {
                    s -= t * psi[j + 1];
                }
                s
            })
            .collect()
    }
}

pub fn build_hamiltonian(grid: &Grid, spec: &PotentialSpec) -> Result<DiscreteHamiltonian> {
    let v = grid.points().map(|x| tilted_potential(spec, x)).collect();
    DiscreteHamiltonian::new(*grid, &spec.params, v)
}

/// Full eigensystem. Eigenvectors are stored as the columns of a row-major
/// `n × n` block and have unit Euclidean length.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    grid: Grid,
    energies: Vec<f64>,
    vectors: Vec<f64>,
}

impl SpectralDecomposition {
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Component `j` of eigenvector `k`.
    pub fn component(&self, j: usize, k: usize) -> f64 {
        self.vectors[j * self.len() + k]
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.len()).map(|j| self.component(j, k)).collect()
    }

    /// Eigenvector `k` as a grid-normalized wavefunction.
    pub fn state(&self, k: usize) -> WaveFunction {
        let s = 1.0 / self.grid.dx().sqrt();
        let v: Vec<f64> = self.vector(k).into_iter().map(|x| x * s).collect();
        WaveFunction::from_real(self.grid, &v).expect("eigenvector matches its grid")
    }
}

pub fn diagonalize(h: &DiscreteHamiltonian) -> Result<SpectralDecomposition> {
    let n = h.grid.n_points();
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    let m = h.matrix();
    let energies = ql_implicit(&m.diag, &m.off, &mut z, n)?;
    Ok(SpectralDecomposition {
        grid: h.grid,
        energies,
        vectors: z,
    })
}

/// Lowest `count` eigenstates by Sturm bisection and inverse iteration,
/// signed so that the largest component is positive.
pub fn lowest_states(h: &DiscreteHamiltonian, count: usize) -> Result<Vec<(f64, WaveFunction)>> {
    let s = 1.0 / h.grid.dx().sqrt();
    h.matrix()
        .lowest_eigenpairs(count)?
        .into_iter()
        .map(|(e, v)| {
            let big = v
                .iter()
                .copied()
                .fold(0.0, |a: f64, b| if b.abs() > a.abs() { b } else { a });
            let sign = if big < 0.0 { -s } else { s };
            let v: Vec<f64> = v.iter().map(|x| x * sign).collect();
            Ok((e, WaveFunction::from_real(h.grid, &v)?))
        })
        .collect()
}

/// Level `n` of the untilted lattice well, signed like the analytic state.
pub fn discrete_bound_state(grid: &Grid, params: &PhysicalParams, n: usize) -> Result<(f64, WaveFunction)> {
    let analytic = bound_state_wavefunction(params, n, grid)?;
    let h = build_hamiltonian(grid, &PotentialSpec::at_rest(*params))?;
    let (e, mut wf) = lowest_states(&h, n + 1)?
        .pop()
        .ok_or(Error::InvalidLevel { level: n, count: 0 })?;
    if analytic.inner(&wf)?.re < 0.0 {
        wf.amplitudes_mut().iter_mut().for_each(|z| *z = -*z);
    }
    Ok((e, wf))
}

/// Ground state of the untilted lattice well.
pub fn discrete_ground_state(grid: &Grid, params: &PhysicalParams) -> Result<WaveFunction> {
    discrete_bound_state(grid, params, 0).map(|(_, w)| w)
}

/// One row of an energy-level diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramRow {
    pub acceleration: f64,
    pub energies: Vec<f64>,
}

/// Lowest `k_max` lattice levels for each acceleration.
pub fn energy_diagram(params: &PhysicalParams, a_values: &[f64], grid: &Grid, k_max: usize) -> Result<Vec<DiagramRow>> {
    if let Some(a) = a_values.iter().find(|a| !a.is_finite()) {
        return Err(Error::param(format!("non-finite acceleration {a}")));
    }
    a_values
        .par_iter()
        .map(|&a| {
            let h = build_hamiltonian(grid, &PotentialSpec::new(*params, a))?;
            let m = h.matrix();
            let energies = (0..k_max.min(grid.n_points()))
                .map(|k| m.eigenvalue_by_bisection(k))
                .collect::<Result<Vec<_>>>()?;
            Ok(DiagramRow {
                acceleration: a,
                energies,
            })
        })
        .collect()
}

/// Amplitudes `d_k = ⟨Φ_k|ψ⟩` with their eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapCoefficients {
    pub energies: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
}

impl OverlapCoefficients {
    pub fn new(energies: Vec<f64>, amplitudes: Vec<Complex64>) -> Result<Self> {
        if energies.len() != amplitudes.len() {
            return Err(Error::Dimension {
                expected: energies.len(),
                found: amplitudes.len(),
            });
        }
        Ok(Self { energies, amplitudes })
    }

    pub fn weights(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|d| d.norm_sqr()).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.amplitudes.iter().map(|d| d.norm_sqr()).sum()
    }

    pub fn mean_energy(&self) -> f64 {
        let w = self.total_weight();
        self.energies
            .iter()
            .zip(&self.amplitudes)
            .map(|(e, d)| e * d.norm_sqr())
            .sum::<f64>()
            / w
    }

    pub fn energy_variance(&self) -> f64 {
        let mu = self.mean_energy();
        let w = self.total_weight();
        self.energies
            .iter()
            .zip(&self.amplitudes)
            .map(|(e, d)| (e - mu).powi(2) * d.norm_sqr())
            .sum::<f64>()
            / w
    }

    /// Long-time average of the survival probability, `Σ|d_k|⁴`.
    pub fn inverse_participation(&self) -> f64 {
        self.amplitudes.iter().map(|d| d.norm_sqr().powi(2)).sum()
    }
}

pub fn expansion_coefficients(state: &WaveFunction, decomp: &SpectralDecomposition) -> Result<OverlapCoefficients> {
    if !state.grid().matches(&decomp.grid) {
        return Err(Error::Dimension {
            expected: decomp.grid.n_points(),
            found: state.grid().n_points(),
        });
    }
    let n = decomp.len();
    let s = state.grid().dx().sqrt();
    let psi = state.amplitudes();
    let amplitudes = (0..n)
        .into_par_iter()
        .map(|k| (0..n).map(|j| psi[j] * decomp.component(j, k)).sum::<Complex64>() * s)
        .collect();
    OverlapCoefficients::new(decomp.energies.clone(), amplitudes)
}

/// Eigen-expansion of one state together with a few eigenvector rows
/// (site amplitudes `Φ_k(x_j)` for selected `j`), obtained without forming
/// the full eigenvector matrix.
#[derive(Debug, Clone)]
pub struct ProjectedSpectrum {
    pub coefficients: OverlapCoefficients,
    pub probe_sites: Vec<usize>,
    probe_rows: Vec<f64>,
}

impl ProjectedSpectrum {
    /// Probability on the probe sites, given the phase factors
    /// `e^{−iE_k t/ħ}` for the time of interest.
    pub fn probe_weight(&self, phases: &[Complex64]) -> f64 {
        let n = self.coefficients.energies.len();
        self.probe_rows
            .chunks_exact(n)
            .map(|row| {
                row.iter()
                    .zip(&self.coefficients.amplitudes)
                    .zip(phases)
                    .map(|((z, d), ph)| d * ph * *z)
                    .sum::<Complex64>()
                    .norm_sqr()
            })
            .sum()
    }
}

/// Expansion of `state` in the eigenbasis of `h`, plus eigenvector rows at
/// `probe_sites`, at `O(n²)` cost per row.
pub fn project_state(
    h: &DiscreteHamiltonian,
    state: &WaveFunction,
    probe_sites: &[usize],
) -> Result<ProjectedSpectrum> {
    let grid = h.grid;
    if !state.grid().matches(&grid) {
        return Err(Error::Dimension {
            expected: grid.n_points(),
            found: state.grid().n_points(),
        });
    }
    let n = grid.n_points();
    if let Some(&j) = probe_sites.iter().find(|&&j| j >= n) {
        return Err(Error::param(format!("probe site {j} outside grid of {n} points")));
    }
    let complex = state.amplitudes().iter().any(|z| z.im != 0.0);
    let lead = if complex { 2 } else { 1 };
    let n_rows = lead + probe_sites.len();
    let mut rows = vec![0.0; n_rows * n];
    let s = grid.dx().sqrt();
    for (j, z) in state.amplitudes().iter().enumerate() {
        rows[j] = z.re * s;
        if complex {
            rows[n + j] = z.im * s;
        }
    }
    for (r, &j) in probe_sites.iter().enumerate() {
        rows[(lead + r) * n + j] = 1.0;
    }
    let m = h.matrix();
    let energies = ql_implicit(&m.diag, &m.off, &mut rows, n_rows)?;
    let amplitudes = (0..n)
        .map(|k| Complex64::new(rows[k], if complex { rows[n + k] } else { 0.0 }))
        .collect();
    Ok(ProjectedSpectrum {
        coefficients: OverlapCoefficients::new(energies, amplitudes)?,
        probe_sites: probe_sites.to_vec(),
        probe_rows: rows[lead * n..].to_vec(),
    })
}

fn phases(energies: &[f64], t: f64, hbar: f64) -> Vec<Complex64> {
    energies.iter().map(|e| Complex64::cis(-e * t / hbar)).collect()
}

/// `p(t) = |Σ_k |d_k|² e^{−iE_k t/ħ}|²`.
pub fn dephasing_survival(coeffs: &OverlapCoefficients, times: &[f64], hbar: f64) -> Vec<f64> {
    let w = coeffs.weights();
    times
        .par_iter()
        .map(|&t| {
            coeffs
                .energies
                .iter()
                .zip(&w)
                .map(|(e, w)| Complex64::cis(-e * t / hbar) * w)
                .sum::<Complex64>()
                .norm_sqr()
        })
        .collect()
}

/// The same quantity as the explicit double sum
/// `Σ|d_k|⁴ + Σ_{k≠k′} |d_k|²|d_k′|² cos((E_k − E_k′)t/ħ)`.
pub fn dephasing_survival_double_sum(coeffs: &OverlapCoefficients, times: &[f64], hbar: f64) -> Vec<f64> {
    let w = coeffs.weights();
    let e = &coeffs.energies;
    times
        .iter()
        .map(|&t| {
            let mut s = 0.0;
            for k in 0..w.len() {
                s += w[k] * w[k];
                for q in k + 1..w.len() {
                    s += 2.0 * w[k] * w[q] * ((e[k] - e[q]) * t / hbar).cos();
                }
            }
            s
        })
        .collect()
}

/// Functional form for [`fit_exponential`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitForm {
    /// `p = A e^{−Γt}`, fitted as a line in `ln p`.
    Pure,
    /// `p = p0 + A e^{−Γt}` by nonlinear least squares.
    Offset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub gamma: f64,
    pub offset: Option<f64>,
    pub amplitude: Option<f64>,
    pub window: (f64, f64),
    /// RMS residual, in `ln p` for the pure form and in `p` for the offset form.
    pub residual: f64,
    /// Coefficient of determination of the log-linear fit.
    pub r_squared: f64,
    pub points: usize,
}

pub fn fit_exponential(times: &[f64], values: &[f64], window: (f64, f64), form: FitForm) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::Dimension {
            expected: times.len(),
            found: values.len(),
        });
    }
    let (t0, t1) = window;
    let (t, p): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= t0 && **t <= t1)
        .map(|(a, b)| (*a, *b))
        .unzip();
    if t.len() < 3 {
        return Err(Error::FitDomain(format!(
            "window [{t0}, {t1}] holds {} samples, need at least 3",
            t.len()
        )));
    }
    if let Some(v) = p.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::FitDomain(format!("non-positive value {v} in fit window")));
    }
    let logs: Vec<f64> = p.iter().map(|v| v.ln()).collect();
    let lin = linear_fit(&t, &logs)?;
    let window = (t[0], t[t.len() - 1]);
    let fit = match form {
        FitForm::Pure => DecayFit {
            gamma: -lin.slope,
            offset: None,
            amplitude: Some(lin.intercept.exp()),
            window,
            residual: lin.rms,
            r_squared: lin.r_squared,
            points: t.len(),
        },
        FitForm::Offset => {
            let model = |x: f64, q: &[f64]| {
                let e = (-q[2] * x).exp();
                (q[0] + q[1] * e, vec![1.0, e, -q[1] * x * e])
            };
            let seed = [0.0, lin.intercept.exp(), -lin.slope];
            let r = levenberg_marquardt(model, &t, &p, &seed, 500)?;
            if !r.converged {
                return Err(Error::numeric("offset exponential fit", r.iterations));
            }
            DecayFit {
                gamma: r.params[2],
                offset: Some(r.params[0]),
                amplitude: Some(r.params[1]),
                window,
                residual: r.rms,
                r_squared: lin.r_squared,
                points: t.len(),
            }
        }
    };
    if !(fit.gamma > 0.0) {
        return Err(Error::FitDomain(format!("fitted rate {} is not positive", fit.gamma)));
    }
    Ok(fit)
}

/// `|d_k|² ≈ c / ((E − E0)² + w²)`; `width` is the half width at half maximum,
/// so the matching decay rate is `2·width/ħ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center: f64,
    pub width: f64,
    pub scale: f64,
    pub levels_used: usize,
    pub rms: f64,
}

impl LorentzianFit {
    pub fn decay_rate(&self, hbar: f64) -> f64 {
        2.0 * self.width / hbar
    }
}

/// Least-squares Lorentzian through the weight distribution around its peak.
///
/// Levels whose weight exceeds 2% of the peak, contiguous with it, enter the
/// fit; at least five are required.
pub fn lorentzian_fit(coeffs: &OverlapCoefficients) -> Result<LorentzianFit> {
    let w = coeffs.weights();
    let e = &coeffs.energies;
    let (peak, &wmax) = w
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::NoResonance("empty distribution".into()))?;
    if !(wmax > 0.0) {
        return Err(Error::NoResonance("all weights vanish".into()));
    }
    let cut = 0.02 * wmax;
    let mut lo = peak;
    while lo > 0 && w[lo - 1] >= cut {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < w.len() && w[hi + 1] >= cut {
        hi += 1;
    }
    if hi - lo + 1 < 5 || lo == peak || hi == peak {
        return Err(Error::NoResonance(format!(
            "only {} level(s) around the peak at E = {}",
            hi - lo + 1,
            e[peak]
        )));
    }
    let x = &e[lo..=hi];
    let y = &w[lo..=hi];
    // half width from the half-maximum crossings
    let half = 0.5 * wmax;
    let left = (lo..=peak).rev().find(|&k| w[k] < half).map(|k| e[k]).unwrap_or(e[lo]);
    let right = (peak..=hi).find(|&k| w[k] < half).map(|k| e[k]).unwrap_or(e[hi]);
    let g0 = (0.5 * (right - left)).max(1e-12);
    let seed = [wmax * g0 * g0, e[peak], g0];
    let model = |x: f64, q: &[f64]| {
        let d = x - q[1];
        let den = d * d + q[2] * q[2];
        let v = q[0] / den;
        (
            v,
            vec![
                1.0 / den,
                2.0 * q[0] * d / (den * den),
                -2.0 * q[0] * q[2] / (den * den),
            ],
        )
    };
    let r = levenberg_marquardt(model, x, y, &seed, 1000)?;
    if !r.converged {
        return Err(Error::numeric("Lorentzian fit", r.iterations));
    }
    Ok(LorentzianFit {
        center: r.params[1],
        width: r.params[2].abs(),
        scale: r.params[0],
        levels_used: x.len(),
        rms: r.rms,
    })
}

/// Settings for [`relaxation_run`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelaxationOptions {
    pub t_max: f64,
    pub dt_sample: f64,
    /// The window opens once `−ln p` first exceeds this.
    pub transient_threshold: f64,
    /// Width of the boundary strip, in grid spacings.
    pub boundary_cells: f64,
    /// Strip probability that marks a reflection.
    pub boundary_threshold: f64,
    /// Also skip the first half of the usable interval.
    pub late_half: bool,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        Self {
            t_max: 100.0,
            dt_sample: 0.1,
            transient_threshold: 0.1,
            boundary_cells: 5.0,
            boundary_threshold: 1e-4,
            late_half: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxationRun {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub boundary_weight: Vec<f64>,
    pub reflection_time: Option<f64>,
    pub fit: DecayFit,
}

/// Fit window: from the end of the transient (or the midpoint of the usable
/// interval when `late_half` is set) to the first boundary reflection.
pub fn relaxation_window(
    times: &[f64],
    survival: &[f64],
    reflection: Option<f64>,
    opts: &RelaxationOptions,
) -> Result<(f64, f64)> {
    let end = reflection.unwrap_or(*times.last().ok_or_else(|| Error::FitDomain("empty series".into()))?);
    let start = times
        .iter()
        .zip(survival)
        .find(|(_, p)| -p.ln() > opts.transient_threshold)
        .map(|(t, _)| *t)
        .ok_or_else(|| Error::FitDomain("survival never leaves the transient".into()))?;
    let start = if opts.late_half { start.max(0.5 * end) } else { start };
    if start >= end {
        return Err(Error::FitDomain(format!(
            "transient ends at t = {start} after the reflection at t = {end}"
        )));
    }
    Ok((start, end))
}

/// Dephasing decay of the untilted ground state after the tilt `m·a` is
/// switched on, with reflection monitoring and a pure-exponential fit.
pub fn relaxation_run(
    params: &PhysicalParams,
    acceleration: f64,
    grid: &Grid,
    opts: &RelaxationOptions,
) -> Result<RelaxationRun> {
    if !(opts.dt_sample > 0.0 && opts.t_max > opts.dt_sample) {
        return Err(Error::param("relaxation needs 0 < dt_sample < t_max"));
    }
    let psi0 = discrete_ground_state(grid, params)?;
    let h = build_hamiltonian(grid, &PotentialSpec::new(*params, acceleration))?;
    let sites = grid.boundary_indices(opts.boundary_cells * grid.dx());
    let proj = project_state(&h, &psi0, &sites)?;
    let n_t = (opts.t_max / opts.dt_sample).round() as usize + 1;
    let times: Vec<f64> = (0..n_t).map(|i| i as f64 * opts.dt_sample).collect();
    let w = proj.coefficients.weights();
    let (survival, boundary_weight): (Vec<f64>, Vec<f64>) = times
        .par_iter()
        .map(|&t| {
            let ph = phases(&proj.coefficients.energies, t, params.hbar);
            let p = ph.iter().zip(&w).map(|(z, w)| z * w).sum::<Complex64>().norm_sqr();
            (p, proj.probe_weight(&ph))
        })
        .unzip();
    let reflection_time = times
        .iter()
        .zip(&boundary_weight)
        .find(|(_, b)| **b > opts.boundary_threshold)
        .map(|(t, _)| *t);
    let window = relaxation_window(&times, &survival, reflection_time, opts)?;
    let fit = fit_exponential(&times, &survival, window, FitForm::Pure)?;
    Ok(RelaxationRun {
        times,
        survival,
        boundary_weight,
        reflection_time,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::bound_state_energies;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit() -> PhysicalParams {
        PhysicalParams::default()
    }

    #[test]
    fn hopping_value() {
        assert!((hopping(&unit(), 0.1) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn three_point_free_hamiltonian() {
        let g = Grid::new(0.0, 0.2, 0.1).unwrap();
        let h = DiscreteHamiltonian::new(g, &unit(), vec![0.0; 3]).unwrap();
        let d = diagonalize(&h).unwrap();
        let t = 50.0;
        let want = [2.0 * t - 2f64.sqrt() * t, 2.0 * t, 2.0 * t + 2f64.sqrt() * t];
        for (a, b) in d.energies().iter().zip(want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn particle_in_a_box() {
        // walls sit one spacing outside the end points
        let g = Grid::new(0.0, 10.0, 0.01).unwrap();
        let h = DiscreteHamiltonian::new(g, &unit(), vec![0.0; g.n_points()]).unwrap();
        let e = h.matrix().eigenvalue_by_bisection(0).unwrap();
        let width = g.x_max() - g.x_min() + 2.0 * g.dx();
        let want = PI * PI / (2.0 * width * width);
        assert!((e - want).abs() / want < 1e-4);
    }

    #[test]
    fn ground_energy_and_convergence_order() {
        let p = unit();
        let err = |dx: f64| {
            let g = Grid::symmetric(10.0, dx).unwrap();
            let h = build_hamiltonian(&g, &PotentialSpec::at_rest(p)).unwrap();
            (h.matrix().eigenvalue_by_bisection(0).unwrap() + 0.5).abs()
        };
        let e1 = err(0.1);
        assert!(e1 < 2e-3);
        let e2 = err(0.05);
        let e3 = err(0.025);
        assert!(e1 / e2 >= 3.0, "{e1} {e2}");
        assert!(e2 / e3 >= 3.0, "{e2} {e3}");
    }

    #[test]
    fn bound_state_count_m10() {
        let p = PhysicalParams::with_mass(10.0).unwrap();
        let g = Grid::symmetric(10.0, 0.1).unwrap();
        let h = build_hamiltonian(&g, &PotentialSpec::at_rest(p)).unwrap();
        let d = diagonalize(&h).unwrap();
        assert_eq!(d.energies().iter().filter(|e| **e < 0.0).count(), 4);
        for (e, exact) in d.energies().iter().zip(bound_state_energies(&p)) {
            assert!((e - exact).abs() < 0.01);
        }
    }

    #[test]
    fn decomposition_contracts() {
        let p = unit();
        let g = Grid::symmetric(10.0, 0.1).unwrap();
        let h = build_hamiltonian(&g, &PotentialSpec::new(p, 0.2)).unwrap();
        let d = diagonalize(&h).unwrap();
        let m = h.matrix();
        let n = d.len();
        assert_eq!(n, g.n_points());
        assert!((d.energies().iter().sum::<f64>() - m.trace()).abs() <= 1e-6 * m.trace().abs());
        for k in (0..n).step_by(17) {
            let v = d.vector(k);
            let hv = m.matvec(&v);
            let res = hv
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - d.energies()[k] * b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(res <= 1e-8 * m.norm_inf());
            for k2 in (k..n).step_by(23) {
                let dot: f64 = v.iter().zip(d.vector(k2)).map(|(a, b)| a * b).sum();
                assert!((dot - if k == k2 { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
        // completeness and the trivial expansion
        let psi0 = discrete_ground_state(&g, &p).unwrap();
        let c = expansion_coefficients(&psi0, &d).unwrap();
        assert!((c.total_weight() - 1.0).abs() < 1e-8);
        let d0 = diagonalize(&build_hamiltonian(&g, &PotentialSpec::at_rest(p)).unwrap()).unwrap();
        let c0 = expansion_coefficients(&d0.state(0), &d0).unwrap();
        assert!((c0.weights()[0] - 1.0).abs() < 1e-10);
        assert!(c0.weights()[1..].iter().all(|w| *w < 1e-10));
        // projected rows agree with the full expansion
        let proj = project_state(&h, &psi0, &[0, 5, 200]).unwrap();
        for k in 0..n {
            assert!((proj.coefficients.amplitudes[k].norm() - c.amplitudes[k].norm()).abs() < 1e-10);
        }
        let ph = phases(d.energies(), 0.0, 1.0);
        let at0 = proj.probe_weight(&ph);
        let direct: f64 = [0usize, 5, 200]
            .iter()
            .map(|&j| psi0.amplitudes()[j].norm_sqr() * g.dx())
            .sum();
        assert!((at0 - direct).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let g = Grid::symmetric(5.0, 0.1).unwrap();
        let h = Grid::symmetric(6.0, 0.1).unwrap();
        let d = diagonalize(&build_hamiltonian(&g, &PotentialSpec::at_rest(unit())).unwrap()).unwrap();
        let psi = discrete_ground_state(&h, &unit()).unwrap();
        assert!(matches!(expansion_coefficients(&psi, &d), Err(Error::Dimension { .. })));
    }

    #[test]
    fn distribution_peaks_near_bound_energy_and_widens() {
        let p = unit();
        let g = Grid::symmetric(40.0, 0.1).unwrap();
        let psi0 = discrete_ground_state(&g, &p).unwrap();
        let mut last = 0.0;
        for (i, a) in [0.2, 0.4, 0.6, 0.8, 1.0].into_iter().enumerate() {
            let h = build_hamiltonian(&g, &PotentialSpec::new(p, a)).unwrap();
            let c = project_state(&h, &psi0, &[]).unwrap().coefficients;
            let var = c.energy_variance();
            assert!(var > last, "variance must grow with a");
            last = var;
            if i == 0 {
                let w = c.weights();
                let k = (0..w.len()).max_by(|&x, &y| w[x].total_cmp(&w[y])).unwrap();
                assert!((c.energies[k] + 0.5).abs() < 0.1);
            }
        }
    }

    #[test]
    fn two_level_dephasing() {
        let c = OverlapCoefficients::new(vec![0.0, 0.3], vec![Complex64::new(0.5f64.sqrt(), 0.0); 2]).unwrap();
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.7).collect();
        let p = dephasing_survival(&c, &times, 1.0);
        for (t, p) in times.iter().zip(p) {
            assert!((p - 0.5 * (1.0 + (0.3 * t).cos())).abs() < 1e-14);
        }
        let single = OverlapCoefficients::new(vec![-0.2], vec![Complex64::new(0.0, 1.0)]).unwrap();
        assert!(dephasing_survival(&single, &times, 1.0)
            .iter()
            .all(|p| (p - 1.0).abs() < 1e-14));
    }

    #[test]
    fn time_average_is_inverse_participation() {
        let e = vec![-0.5, -0.31, -0.12, 0.07, 0.29, 0.53];
        let a: Vec<Complex64> = [0.7, 0.4, 0.35, 0.3, 0.25, 0.2]
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        let nrm: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let c = OverlapCoefficients::new(e, a.into_iter().map(|z| z / nrm).collect()).unwrap();
        let times: Vec<f64> = (0..200_000).map(|i| i as f64 * 0.05).collect();
        let p = dephasing_survival(&c, &times, 1.0);
        let avg = p.iter().sum::<f64>() / p.len() as f64;
        assert!((avg - c.inverse_participation()).abs() < 1e-3);
    }

    #[test]
    fn exponential_fits() {
        let t: Vec<f64> = (0..400).map(|i| i as f64 * 0.25).collect();
        let y: Vec<f64> = t.iter().map(|t| (-0.1 * t).exp()).collect();
        let f = fit_exponential(&t, &y, (0.0, 100.0), FitForm::Pure).unwrap();
        assert!((f.gamma - 0.1).abs() < 1e-10);
        let y: Vec<f64> = t.iter().map(|t| 0.2 + 0.8 * (-0.05 * t).exp()).collect();
        let f = fit_exponential(&t, &y, (0.0, 100.0), FitForm::Offset).unwrap();
        assert!((f.offset.unwrap() - 0.2).abs() < 1e-6);
        assert!((f.amplitude.unwrap() - 0.8).abs() < 1e-6);
        assert!((f.gamma - 0.05).abs() < 1e-6);
        let mut bad = y.clone();
        bad[10] = 0.0;
        assert!(matches!(
            fit_exponential(&t, &bad, (0.0, 100.0), FitForm::Pure),
            Err(Error::FitDomain(_))
        ));
        let grow: Vec<f64> = t.iter().map(|t| (0.1 * t).exp()).collect();
        assert!(fit_exponential(&t, &grow, (0.0, 10.0), FitForm::Pure).is_err());
    }

    #[test]
    fn lorentzian_self_consistency() {
        let e: Vec<f64> = (0..200).map(|i| -1.0 + i as f64 * 0.01).collect();
        let (e0, g, c) = (-0.56, 0.022, 3e-6);
        let a: Vec<Complex64> = e
            .iter()
            .map(|x| Complex64::new((c / ((x - e0).powi(2) + g * g)).sqrt(), 0.0))
            .collect();
        let f = lorentzian_fit(&OverlapCoefficients::new(e, a).unwrap()).unwrap();
        assert!((f.center - e0).abs() < 1e-8);
        assert!((f.width - g).abs() < 1e-8);
        assert!((f.scale - c).abs() < 1e-8 * c.max(1e-6) * 1e3);
        assert!((f.decay_rate(1.0) - 0.044).abs() < 1e-8);
        let flat = OverlapCoefficients::new(vec![0.0, 1.0], vec![Complex64::new(1.0, 0.0); 2]).unwrap();
        assert!(matches!(lorentzian_fit(&flat), Err(Error::NoResonance(_))));
    }

    #[test]
    fn diagram_structure() {
        let g = Grid::symmetric(10.0, 0.1).unwrap();
        let rows = energy_diagram(&unit(), &[0.0, 0.1, 0.2], &g, 5).unwrap();
        assert_eq!(rows.len(), 3);
        assert!((rows[0].energies[0] + 0.5).abs() < 2e-3);
        assert!(energy_diagram(&unit(), &[f64::NAN], &g, 5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn double_sum_identity(
            raw in prop::collection::vec((0.01f64..1.0, -3.0f64..3.0, -2.0f64..2.0), 2..25),
            t in 0.0f64..200.0,
        ) {
            let nrm: f64 = raw.iter().map(|(a, _, _)| a * a).sum::<f64>().sqrt();
            let amps = raw.iter().map(|(a, _, ph)| Complex64::from_polar(a / nrm, *ph)).collect();
            let c = OverlapCoefficients::new(raw.iter().map(|r| r.1).collect(), amps).unwrap();
            let a = dephasing_survival(&c, &[t], 1.0)[0];
            let b = dephasing_survival_double_sum(&c, &[t], 1.0)[0];
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
        }
    }
}
