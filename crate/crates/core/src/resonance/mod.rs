//! Siegert resonance of the tilted well.
//!
//! Outside `[x_min, x_max]` the well is negligible and the lattice equation
//! reduces to a three-term recurrence in a linear ramp, which is the Bessel
//! recurrence in the order `ν_j = j + σ(1 − E/2t)` at fixed argument
//! `σ = 2t/(maΔx)`. The decaying solution on the uphill side and the
//! outgoing solution on the downhill side fold into energy-dependent
//! boundary corrections of an interior complex-symmetric matrix whose
//! eigenvalue is then made self-consistent.

pub mod hankel;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complex_symmetric_eigenvalues, ComplexSymTridiagonal};
use crate::model::{Grid, Orientation, PotentialSpec};
use crate::numerics::minimize::nelder_mead;
use crate::semiclassics::{quantize, quantize_weber, WkbOptions};
use crate::spectral::{build_hamiltonian, diagonalize, discrete_ground_state, expansion_coefficients, hopping};
use crate::wavefunction::WaveFunction;

pub use hankel::{hankel1, hankel1_ratio, hankel2, hankel2_ratio};

const INVERSE_ITERATIONS: usize = 60;
const CF_TOL: f64 = 1e-12;
const CF_MAX_DEPTH: usize = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExteriorSide {
    Left,
    Right,
}

/// Boundary correction from one exterior region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExteriorClosure {
    pub side: ExteriorSide,
    pub energy: Complex64,
    /// `Φ_{outside}/Φ_{boundary}` for the first exterior site.
    pub ratio: Complex64,
    pub hopping: f64,
    /// Continued-fraction depth (right side) or 0.
    pub depth: usize,
}

impl ExteriorClosure {
    pub fn v_eff(&self) -> Complex64 {
        -self.ratio * self.hopping
    }
}

fn check_spec(spec: &PotentialSpec) -> Result<()> {
    if spec.acceleration <= 0.0 {
        return Err(Error::NoSlope);
    }
    if spec.orientation != Orientation::Forward {
        return Err(Error::Geometry(
            "resonance exteriors need the forward orientation (escape towards -x)".into(),
        ));
    }
    Ok(())
}

/// Lattice index of `x`, counted from the origin.
fn site_index(x: f64, dx: f64) -> f64 {
    (x / dx).round()
}

/// Order `ν_j` and argument `σ` of the exterior Bessel recurrence.
pub fn nu_sigma(j: f64, energy: Complex64, spec: &PotentialSpec, grid: &Grid) -> Result<(Complex64, f64)> {
    check_spec(spec)?;
    let t = hopping(&spec.params, grid.dx());
    let sigma = 2.0 * t / (spec.slope() * grid.dx());
    let nu = (1.0 - energy / (2.0 * t)) * sigma + j;
    Ok((nu, sigma))
}

/// `Φ_{j+1}/Φ_j` at `j = j0` for the minimal solution of
/// `Φ_{j+1} + Φ_{j−1} = (2ν_j/σ) Φ_j`, by backward continued fraction.
fn continued_fraction(j0: f64, depth: usize, nu0: Complex64, sigma: f64) -> Complex64 {
    // nu0 is ν at j = 0
    let mut r = Complex64::default();
    for k in (1..=depth).rev() {
        let b = (nu0 + (j0 + k as f64)) * (2.0 / sigma);
        r = 1.0 / (b - r);
    }
    r
}

/// Decaying closure at the uphill (right) boundary.
pub fn right_closure(energy: Complex64, spec: &PotentialSpec, grid: &Grid) -> Result<ExteriorClosure> {
    let (nu0, sigma) = nu_sigma(0.0, energy, spec, grid)?;
    let t = hopping(&spec.params, grid.dx());
    let jb = site_index(grid.x_max(), grid.dx());
    // start where the order clears the argument, the exterior turning point
    let past_turning = (sigma - nu0.re - jb).max(0.0);
    let mut depth = (past_turning as usize + 64).max(256);
    let mut prev = continued_fraction(jb, depth, nu0, sigma);
    while depth < CF_MAX_DEPTH {
        depth *= 2;
        let next = continued_fraction(jb, depth, nu0, sigma);
        if (next - prev).norm() < CF_TOL * next.norm().max(1e-300) {
            return Ok(ExteriorClosure {
                side: ExteriorSide::Right,
                energy,
                ratio: next,
                hopping: t,
                depth,
            });
        }
        prev = next;
    }
    Err(Error::numeric("right exterior continued fraction", depth))
}

/// Outgoing closure at the downhill (left) boundary:
/// `H^{(1)}_{ν_{b−1}}(σ) / H^{(1)}_{ν_b}(σ)`.
pub fn left_closure(energy: Complex64, spec: &PotentialSpec, grid: &Grid) -> Result<ExteriorClosure> {
    let jb = site_index(grid.x_min(), grid.dx());
    let (nu, sigma) = nu_sigma(jb, energy, spec, grid)?;
    let t = hopping(&spec.params, grid.dx());
    Ok(ExteriorClosure {
        side: ExteriorSide::Left,
        energy,
        ratio: hankel1_ratio(nu, sigma)?,
        hopping: t,
        depth: 0,
    })
}

/// How the interior matrix is terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Outgoing,
    HardWall,
}

/// Interior tridiagonal matrix, with the closures evaluated at `energy`.
pub fn interior_matrix(
    energy: Complex64,
    spec: &PotentialSpec,
    grid: &Grid,
    boundary: Boundary,
) -> Result<ComplexSymTridiagonal> {
    let t = hopping(&spec.params, grid.dx());
    let mut diag: Vec<Complex64> = grid
        .points()
        .map(|x| Complex64::new(spec.value(x) + 2.0 * t, 0.0))
        .collect();
    if boundary == Boundary::Outgoing {
        let n = diag.len();
        diag[0] += left_closure(energy, spec, grid)?.v_eff();
        diag[n - 1] += right_closure(energy, spec, grid)?.v_eff();
    }
    let off = vec![Complex64::new(-t, 0.0); diag.len() - 1];
    ComplexSymTridiagonal::new(diag, off)
}

/// One eigenpair of the interior matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorEigenpair {
    pub energy: Complex64,
    /// Unit-norm (Euclidean) eigenvector.
    pub vector: Vec<Complex64>,
    pub residual: f64,
}

/// Full interior spectrum with the closures frozen at `energy`.
pub fn interior_spectrum(energy: Complex64, spec: &PotentialSpec, grid: &Grid) -> Result<Vec<Complex64>> {
    complex_symmetric_eigenvalues(&interior_matrix(energy, spec, grid, Boundary::Outgoing)?)
}

/// Eigenvalue `e_k(E)` of the closed interior matrix nearest `guess`.
pub fn interior_eigensolve(guess: Complex64, spec: &PotentialSpec, grid: &Grid) -> Result<InteriorEigenpair> {
    let mat = interior_matrix(guess, spec, grid, Boundary::Outgoing)?;
    let tol = 1e-9 * (1.0 + guess.norm());
    let (energy, vector, residual) = mat.refine(guess, INVERSE_ITERATIONS)?;
    if residual <= tol {
        return Ok(InteriorEigenpair {
            energy,
            vector,
            residual,
        });
    }
    // stagnation: two eigenvalues nearly equidistant from the shift. Take the
    // candidate closest to the real axis below the band edge.
    let t = hopping(&spec.params, grid.dx());
    let best = complex_symmetric_eigenvalues(&mat)?
        .into_iter()
        .filter(|e| e.re < 2.0 * t && (e - guess).norm() <= 2.0 * (energy - guess).norm().max(tol))
        .max_by(|a, b| a.im.total_cmp(&b.im));
    let Some(target) = best else {
        return Err(Error::NotConverged { best: energy, residual });
    };
    let (energy, vector, residual) = mat.refine(target, INVERSE_ITERATIONS)?;
    if residual <= tol {
        Ok(InteriorEigenpair {
            energy,
            vector,
            residual,
        })
    } else {
        Err(Error::NotConverged { best: energy, residual })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResonanceOptions {
    pub tolerance: f64,
    pub max_fixed_point: usize,
    pub simplex_budget: usize,
}

impl Default for ResonanceOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_fixed_point: 60,
            simplex_budget: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResonanceMethod {
    FixedPoint,
    Simplex,
}

#[derive(Debug, Clone)]
pub struct ResonanceState {
    pub energy: Complex64,
    /// `−2 Im E / ħ`.
    pub gamma: f64,
    /// Interior eigenvector scaled to unit norm on the grid, with the
    /// largest amplitude real and positive.
    pub state: WaveFunction,
    /// `|e_k(E) − E|`.
    pub residual: f64,
    pub iterations: usize,
    pub method: ResonanceMethod,
}

impl ResonanceState {
    /// Discrete probability current between sites `j` and `j+1`.
    pub fn current(&self, j: usize, mass: f64, hbar: f64) -> f64 {
        let a = self.state.amplitudes();
        let dx = self.state.grid().dx();
        hbar / (mass * dx) * (a[j].conj() * a[j + 1]).im
    }
}

fn phase_fix(grid: &Grid, vector: Vec<Complex64>) -> Result<WaveFunction> {
    let peak = vector
        .iter()
        .copied()
        .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
        .unwrap_or_default();
    let rot = if peak.norm() > 0.0 {
        peak.conj() / peak.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let mut wf = WaveFunction::new(*grid, vector.into_iter().map(|z| z * rot).collect())?;
    wf.normalize()?;
    Ok(wf)
}

pub fn solve_resonance(e0: Complex64, spec: &PotentialSpec, grid: &Grid) -> Result<ResonanceState> {
    solve_resonance_with(e0, spec, grid, &ResonanceOptions::default())
}

/// Solves `e_k(E) = E`: fixed-point iteration first, then a simplex search
/// on `|e_k(E) − E|` if that stalls.
pub fn solve_resonance_with(
    e0: Complex64,
    spec: &PotentialSpec,
    grid: &Grid,
    opts: &ResonanceOptions,
) -> Result<ResonanceState> {
    check_spec(spec)?;
    let hbar = spec.params.hbar;
    let finish = |pair: InteriorEigenpair, energy: Complex64, residual: f64, iterations, method| {
        Ok(ResonanceState {
            energy,
            gamma: -2.0 * energy.im / hbar,
            state: phase_fix(grid, pair.vector)?,
            residual,
            iterations,
            method,
        })
    };

    let mut e = e0;
    let mut best = (f64::INFINITY, e0);
    for it in 1..=opts.max_fixed_point {
        let Ok(pair) = interior_eigensolve(e, spec, grid) else {
            break;
        };
        let residual = (pair.energy - e).norm();
        if residual < best.0 {
            best = (residual, e);
        }
        if residual <= opts.tolerance {
            return finish(pair, e, residual, it, ResonanceMethod::FixedPoint);
        }
        if !pair.energy.re.is_finite() || residual > 10.0 * best.0.max(opts.tolerance) {
            break;
        }
        e = pair.energy;
    }

    let start = best.1;
    let objective = |p: &[f64]| {
        let z = Complex64::new(p[0], p[1]);
        match interior_eigensolve(z, spec, grid) {
            Ok(pair) => (pair.energy - z).norm(),
            Err(_) => f64::NAN,
        }
    };
    let scale = 1e-3 * (1.0 + start.norm());
    let min = nelder_mead(
        objective,
        &[start.re, start.im],
        &[scale, scale],
        1e-16,
        opts.simplex_budget,
    );
    let z = Complex64::new(min.x[0], min.x[1]);
    let pair = interior_eigensolve(z, spec, grid)?;
    let residual = (pair.energy - z).norm();
    if residual <= opts.tolerance {
        finish(pair, z, residual, min.evaluations, ResonanceMethod::Simplex)
    } else {
        Err(Error::NotConverged { best: z, residual })
    }
}

/// Starting point: the lattice level with the largest overlap on the
/// untilted ground state, shifted by `−iΓħ/2` with the Weber width (Airy if
/// that fails, `Γħ/2 = 0.05` if both do). The Airy width overshoots by
/// several times near the barrier top.
pub fn default_initial_guess(spec: &PotentialSpec, grid: &Grid) -> Result<Complex64> {
    let h = build_hamiltonian(grid, spec)?;
    let decomp = diagonalize(&h)?;
    let ground = discrete_ground_state(grid, &spec.params)?;
    let coeffs = expansion_coefficients(&ground, &decomp)?;
    let weights = coeffs.weights();
    let k = (0..weights.len())
        .max_by(|&a, &b| weights[a].total_cmp(&weights[b]))
        .ok_or_else(|| Error::param("empty spectrum"))?;
    let re = coeffs.energies[k];
    let opts = WkbOptions::default();
    let im = crate::semiclassics::mirror_for_wkb(spec)
        .and_then(|m| quantize_weber(&m, 0, &opts).or_else(|_| quantize(&m, 0, &opts)))
        .map(|level| -0.5 * level.gamma * spec.params.hbar)
        .ok()
        .filter(|g| g.is_finite() && *g < 0.0 && *g > -spec.params.depth)
        .unwrap_or(-0.05);
    Ok(Complex64::new(re, im))
}
