//! Crank–Nicolson propagation in the frame co-moving with the trap.
//!
//! In that frame the Hamiltonian is `p²/2m + V(x) + m·ẍ0(t)·x`; the
//! x-independent `−m ẋ0²/2` term only contributes a global phase and is
//! dropped.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_uniform_tridiagonal;
use crate::model::{well_potential, Grid, PhysicalParams};
use crate::spectral::{discrete_ground_state, fit_exponential, hopping, DecayFit, FitForm};
use crate::wavefunction::WaveFunction;

/// Where the absorbing layer sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Both,
}

/// Quadratic negative-imaginary layer `−i v_ab ((x − x_edge ∓ w_ab)/w_ab)²`
/// inside a strip of width `w_ab` at the chosen edge(s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorbingPotential {
    pub strength: f64,
    pub width: f64,
    pub side: Side,
}

impl AbsorbingPotential {
    pub fn new(strength: f64, width: f64, side: Side) -> Result<Self> {
        if !(strength >= 0.0 && strength.is_finite()) {
            return Err(Error::param(format!(
                "absorber strength must be non-negative, got {strength}"
            )));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::param(format!("absorber width must be positive, got {width}")));
        }
        Ok(Self { strength, width, side })
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        Self::new(self.strength, self.width, self.side)?;
        let span = grid.x_max() - grid.x_min();
        let layers = if self.side == Side::Both { 2.0 } else { 1.0 };
        if layers * self.width >= span {
            return Err(Error::param(format!(
                "absorber layers ({} × {}) do not fit in a domain of length {span}",
                layers, self.width
            )));
        }
        Ok(())
    }

    /// Magnitude of the imaginary part at `x`.
    pub fn magnitude(&self, grid: &Grid, x: f64) -> f64 {
        let w = self.width;
        let mut v = 0.0;
        if matches!(self.side, Side::Left | Side::Both) && x < grid.x_min() + w {
            v += self.strength * ((x - grid.x_min() - w) / w).powi(2);
        }
        if matches!(self.side, Side::Right | Side::Both) && x > grid.x_max() - w {
            v += self.strength * ((x - grid.x_max() + w) / w).powi(2);
        }
        v
    }

    pub fn profile(&self, grid: &Grid) -> Vec<f64> {
        grid.points().map(|x| self.magnitude(grid, x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { dt, n_steps })
    }

    /// Steps of size close to `dt` that land exactly on `duration`.
    pub fn covering(duration: f64, dt: f64) -> Result<Self> {
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Error::param(format!("duration must be non-negative, got {duration}")));
        }
        Self::new(dt, 0)?;
        let n = (duration / dt).ceil().max(1.0) as usize;
        Self::new(duration.max(f64::MIN_POSITIVE) / n as f64, n)
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }
}

/// Reusable Crank–Nicolson stepper for one grid.
#[derive(Debug, Clone)]
pub struct CrankNicolson {
    hopping: f64,
    beta: Complex64,
    diag: Vec<Complex64>,
    rhs: Vec<Complex64>,
    work: Vec<Complex64>,
}

impl CrankNicolson {
    pub fn new(grid: &Grid, params: &PhysicalParams, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::param(format!("dt must be finite and nonzero, got {dt}")));
        }
        let n = grid.n_points();
        Ok(Self {
            hopping: hopping(params, grid.dx()),
            beta: Complex64::new(0.0, dt / (2.0 * params.hbar)),
            diag: vec![Complex64::default(); n],
            rhs: vec![Complex64::default(); n],
            work: vec![Complex64::default(); n],
        })
    }

    /// Solves `(1 + iΔt H_{n+1}/2ħ) ψ′ = (1 − iΔt H_n/2ħ) ψ` in place.
    pub fn step(&mut self, psi: &mut [Complex64], v_now: &[Complex64], v_next: &[Complex64]) -> Result<()> {
        let n = self.diag.len();
        for len in [psi.len(), v_now.len(), v_next.len()] {
            if len != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: len,
                });
            }
        }
        let t = self.hopping;
        let b = self.beta;
        let bt = b * t;
        for j in 0..n {
            let mut s = psi[j] - b * (v_now[j] + 2.0 * t) * psi[j];
            if j > 0 {
                s += bt * psi[j - 1];
            }
            if j + 1 < n {
                s += bt * psi[j + 1];
            }
            self.rhs[j] = s;
            self.diag[j] = 1.0 + b * (v_next[j] + 2.0 * t);
        }
        solve_uniform_tridiagonal(-bt, &self.diag, &mut self.rhs, &mut self.work)?;
        psi.copy_from_slice(&self.rhs);
        Ok(())
    }
}

/// One Crank–Nicolson step of `psi` with potentials sampled at the start and
/// end of the step.
pub fn cn_step(
    psi: &mut WaveFunction,
    v_now: &[Complex64],
    v_next: &[Complex64],
    dt: f64,
    params: &PhysicalParams,
) -> Result<()> {
    let grid = *psi.grid();
    CrankNicolson::new(&grid, params, dt)?.step(psi.amplitudes_mut(), v_now, v_next)
}

/// Trap kinematics seen by the propagator.
pub trait Schedule: Sync {
    /// `ẍ0(t)`.
    fn acceleration(&self, t: f64) -> f64;
    /// `ẋ0(t)`.
    fn velocity(&self, t: f64) -> f64;
}

/// `ẍ0 = a` for all `t ≥ 0`, starting from rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantAcceleration(pub f64);

impl Schedule for ConstantAcceleration {
    fn acceleration(&self, _t: f64) -> f64 {
        self.0
    }

    fn velocity(&self, t: f64) -> f64 {
        self.0 * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationOptions {
    pub absorber: Option<AbsorbingPotential>,
    /// Store the full state every this many steps; 0 stores none.
    pub snapshot_stride: usize,
    /// Width of the boundary strip for reflection monitoring, in grid spacings.
    pub boundary_cells: f64,
    pub boundary_threshold: f64,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            absorber: None,
            snapshot_stride: 100,
            boundary_cells: 5.0,
            boundary_threshold: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub state: WaveFunction,
}

/// Time series recorded at every step (index 0 is the initial state).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `|⟨Φ(0)|Φ(t)⟩|²`.
    pub p: Vec<f64>,
    /// `|⟨Ψ(0)|e^{i m ẋ0(t) x/ħ}|Φ(t)⟩|²`.
    pub rest_frame: Vec<f64>,
    pub norm: Vec<f64>,
    pub boundary_weight: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: WaveFunction,
    boundary_threshold: f64,
}

impl Trajectory {
    fn index_of(&self, t: f64) -> Option<usize> {
        let dt = if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            1.0
        };
        let i = self.times.partition_point(|&s| s < t - 0.5 * dt);
        (i < self.times.len() && (self.times[i] - t).abs() <= 0.5 * dt + 1e-12).then_some(i)
    }
}

/// Propagates `initial` (a moving-frame state) under `schedule`.
///
/// The rest-frame reference for `P(t)` is `e^{i m ẋ0(0) x/ħ} Φ(0)`.
pub fn propagate_moving_frame(
    initial: &WaveFunction,
    schedule: &dyn Schedule,
    params: &PhysicalParams,
    time_grid: &TimeGrid,
    options: &PropagationOptions,
) -> Result<Trajectory> {
    let grid = *initial.grid();
    let well: Vec<f64> = grid.points().map(|x| well_potential(params, x, 0.0)).collect();
    propagate_with_potential(initial, &well, schedule, params, time_grid, options)
}

/// As [`propagate_moving_frame`] with an arbitrary static potential in place
/// of the trap.
pub fn propagate_with_potential(
    initial: &WaveFunction,
    static_potential: &[f64],
    schedule: &dyn Schedule,
    params: &PhysicalParams,
    time_grid: &TimeGrid,
    options: &PropagationOptions,
) -> Result<Trajectory> {
    let grid = *initial.grid();
    let n = grid.n_points();
    if static_potential.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: static_potential.len(),
        });
    }
    let absorb = match &options.absorber {
        Some(a) => {
            a.validate(&grid)?;
            a.profile(&grid)
        }
        None => vec![0.0; n],
    };
    let xs: Vec<f64> = grid.points().collect();
    let potential_at = |t: f64, out: &mut Vec<Complex64>| {
        let f = params.mass * schedule.acceleration(t);
        out.clear();
        out.extend(
            static_potential
                .iter()
                .zip(&xs)
                .zip(&absorb)
                .map(|((v, x), w)| Complex64::new(v + f * x, -w)),
        );
    };
    let boundary = grid.boundary_indices(options.boundary_cells * grid.dx());
    let phi0 = initial.clone();
    let k0 = params.mass * schedule.velocity(0.0) / params.hbar;
    let psi0 = initial.boosted(k0);
    let mut stepper = CrankNicolson::new(&grid, params, time_grid.dt)?;
    let mut state = initial.clone();
    let mut v_now = Vec::with_capacity(n);
    let mut v_next = Vec::with_capacity(n);
    potential_at(0.0, &mut v_now);

    let cap = time_grid.n_steps + 1;
    let mut traj = Trajectory {
        times: Vec::with_capacity(cap),
        p: Vec::with_capacity(cap),
        rest_frame: Vec::with_capacity(cap),
        norm: Vec::with_capacity(cap),
        boundary_weight: Vec::with_capacity(cap),
        velocity: Vec::with_capacity(cap),
        acceleration: Vec::with_capacity(cap),
        snapshots: Vec::new(),
        final_state: initial.clone(),
        boundary_threshold: options.boundary_threshold,
    };
    let record = |traj: &mut Trajectory, state: &WaveFunction, step: usize| -> Result<()> {
        let t = time_grid.time(step);
        let v = schedule.velocity(t);
        traj.times.push(t);
        traj.p.push(phi0.inner(state)?.norm_sqr());
        traj.rest_frame
            .push(rest_frame_overlap(&psi0, state, params.mass * v / params.hbar));
        traj.norm.push(state.norm_sqr());
        traj.boundary_weight.push(state.weight_on(&boundary));
        traj.velocity.push(v);
        traj.acceleration.push(schedule.acceleration(t));
        if options.snapshot_stride > 0 && step.is_multiple_of(options.snapshot_stride) {
            traj.snapshots.push(Snapshot {
                t,
                state: state.clone(),
            });
        }
        Ok(())
    };
    record(&mut traj, &state, 0)?;
    for step in 1..=time_grid.n_steps {
        potential_at(time_grid.time(step), &mut v_next);
        stepper.step(state.amplitudes_mut(), &v_now, &v_next)?;
        std::mem::swap(&mut v_now, &mut v_next);
        record(&mut traj, &state, step)?;
    }
    traj.final_state = state;
    Ok(traj)
}

/// `|⟨ψ0| e^{ikx} |φ⟩|²` without forming the boosted state.
fn rest_frame_overlap(psi0: &WaveFunction, phi: &WaveFunction, k: f64) -> f64 {
    let grid = phi.grid();
    let step = Complex64::cis(k * grid.dx());
    let mut phase = Complex64::cis(k * grid.x_min());
    let mut s = Complex64::default();
    for (a, b) in psi0.amplitudes().iter().zip(phi.amplitudes()) {
        s += a.conj() * phase * b;
        phase *= step;
    }
    (s * grid.dx()).norm_sqr()
}

/// `p(t)` at a stored time.
pub fn survival_p(traj: &Trajectory, t: f64) -> Option<f64> {
    traj.index_of(t).map(|i| traj.p[i])
}

/// Rest-frame survival `P(t)` at a stored time.
pub fn survival_p_rest(traj: &Trajectory, t: f64) -> Option<f64> {
    traj.index_of(t).map(|i| traj.rest_frame[i])
}

/// First stored time at which the boundary strip holds more than the
/// configured probability.
pub fn reflection_monitor(traj: &Trajectory) -> Option<f64> {
    traj.times
        .iter()
        .zip(&traj.boundary_weight)
        .find(|(_, w)| **w > traj.boundary_threshold)
        .map(|(t, _)| *t)
}

/// Constant-acceleration decay measured with an absorbing layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbsorbRun {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub norm: Vec<f64>,
    pub fit: DecayFit,
}

/// Releases the discrete ground state of the resting well into the slope
/// `m·a`, propagates with `absorber`, and fits `p(t)` on `window`.
pub fn absorb_decay(
    params: &PhysicalParams,
    acceleration: f64,
    grid: &Grid,
    time_grid: &TimeGrid,
    absorber: AbsorbingPotential,
    window: (f64, f64),
    form: FitForm,
) -> Result<AbsorbRun> {
    let initial = discrete_ground_state(grid, params)?;
    let options = PropagationOptions {
        absorber: Some(absorber),
        snapshot_stride: 0,
        ..PropagationOptions::default()
    };
    let traj = propagate_moving_frame(
        &initial,
        &ConstantAcceleration(acceleration),
        params,
        time_grid,
        &options,
    )?;
    let fit = fit_exponential(&traj.times, &traj.p, window, form)?;
    Ok(AbsorbRun {
        times: traj.times,
        survival: traj.p,
        norm: traj.norm,
        fit,
    })
}
