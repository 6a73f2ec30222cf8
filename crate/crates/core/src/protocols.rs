//! Conveyance schedules and end-to-end conveyance runs.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, RwLock};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{bound_state_energies, well_potential, Grid, PhysicalParams, PotentialSpec};
use crate::propagator::{
    propagate_moving_frame, AbsorbingPotential, CrankNicolson, PropagationOptions, Schedule, TimeGrid, Trajectory,
};
use crate::spectral::{build_hamiltonian, diagonalize, discrete_bound_state, SpectralDecomposition};
use crate::wavefunction::WaveFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    ConstantVelocity,
    Cos,
    Sin,
    Custom,
}

impl ProtocolKind {
    /// Smoothness exponent `μ` of the start, `x0 ∝ t^μ`.
    pub fn smoothness(self) -> Option<u32> {
        match self {
            Self::ConstantVelocity => Some(1),
            Self::Cos => Some(2),
            Self::Sin => Some(3),
            Self::Custom => None,
        }
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant-velocity" | "const-v" => Ok(Self::ConstantVelocity),
            "cos" => Ok(Self::Cos),
            "sin" => Ok(Self::Sin),
            "custom" => Ok(Self::Custom),
            other => Err(Error::InvalidProtocol(format!("unknown protocol kind '{other}'"))),
        }
    }
}

/// Natural cubic spline through sampled accelerations, with exact running
/// integrals for velocity and position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledAcceleration {
    times: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
    /// `v` and `x0` at each knot.
    v_knots: Vec<f64>,
    x_knots: Vec<f64>,
}

impl SampledAcceleration {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = times.len();
        if n < 3 || values.len() != n {
            return Err(Error::InvalidProtocol(
                "custom acceleration needs at least three (t, a) samples".into(),
            ));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidProtocol(
                "sample times must start at 0 and increase strictly".into(),
            ));
        }
        // natural spline: tridiagonal system for the interior second derivatives
        let mut second = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = times[i] - times[i - 1];
            let h1 = times[i + 1] - times[i];
            let rhs = 6.0 * ((values[i + 1] - values[i]) / h1 - (values[i] - values[i - 1]) / h0);
            let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
            c[i] = h1 / diag;
            d[i] = (rhs - h0 * d[i - 1]) / diag;
        }
        for i in (1..n - 1).rev() {
            second[i] = d[i] - c[i] * second[i + 1];
        }
        let mut s = Self {
            times,
            values,
            second,
            v_knots: vec![0.0; n],
            x_knots: vec![0.0; n],
        };
        for i in 0..n - 1 {
            let h = s.times[i + 1] - s.times[i];
            let (dv, dx) = s.segment_integrals(i, h);
            s.v_knots[i + 1] = s.v_knots[i] + dv;
            s.x_knots[i + 1] = s.x_knots[i] + s.v_knots[i] * h + dx;
        }
        Ok(s)
    }

    /// `∫ a` and `∫∫ a` over `[t_i, t_i + u]`.
    fn segment_integrals(&self, i: usize, u: f64) -> (f64, f64) {
        let h = self.times[i + 1] - self.times[i];
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        // a(t_i + u) = y0 + b u + m0/2 u² + (m1 − m0)/(6h) u³
        let b = (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0;
        let c3 = (m1 - m0) / (6.0 * h);
        let int1 = y0 * u + b * u * u / 2.0 + m0 * u.powi(3) / 6.0 + c3 * u.powi(4) / 4.0;
        let int2 = y0 * u * u / 2.0 + b * u.powi(3) / 6.0 + m0 * u.powi(4) / 24.0 + c3 * u.powi(5) / 20.0;
        (int1, int2)
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let i = self.times.partition_point(|&s| s <= t).clamp(1, self.times.len() - 1) - 1;
        (i, t - self.times[i])
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn acceleration(&self, t: f64) -> f64 {
        let (i, u) = self.locate(t);
        let h = self.times[i + 1] - self.times[i];
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let b = (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0;
        y0 + b * u + m0 * u * u / 2.0 + (m1 - m0) / (6.0 * h) * u.powi(3)
    }

    pub fn velocity(&self, t: f64) -> f64 {
        let (i, u) = self.locate(t);
        self.v_knots[i] + self.segment_integrals(i, u).0
    }

    pub fn position(&self, t: f64) -> f64 {
        let (i, u) = self.locate(t);
        self.x_knots[i] + self.v_knots[i] * u + self.segment_integrals(i, u).1
    }
}

/// A trap trajectory `x0(t)` carrying the well over `distance` in `duration`.
/// Outside `[0, τ]` the trap is at rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub kind: ProtocolKind,
    pub distance: f64,
    pub duration: f64,
    /// `c` (constant velocity), `a1` (cos) or `a2` (sin).
    pub coefficient: f64,
    /// `ω = π/τ` for the cos and sin kinds.
    pub omega: f64,
    samples: Option<SampledAcceleration>,
}

pub fn make_protocol(kind: ProtocolKind, distance: f64, duration: f64) -> Result<Protocol> {
    if !(distance > 0.0 && distance.is_finite()) {
        return Err(Error::param(format!("distance must be positive, got {distance}")));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::param(format!("duration must be positive, got {duration}")));
    }
    let omega = PI / duration;
    let coefficient = match kind {
        ProtocolKind::ConstantVelocity => distance / duration,
        ProtocolKind::Cos => omega * omega * distance / 2.0,
        ProtocolKind::Sin => 2.0 * PI * distance / (duration * duration),
        ProtocolKind::Custom => {
            return Err(Error::InvalidProtocol(
                "custom protocols are built from samples with Protocol::custom".into(),
            ))
        }
    };
    Ok(Protocol {
        kind,
        distance,
        duration,
        coefficient,
        omega,
        samples: None,
    })
}

impl Protocol {
    /// Schedule from sampled `a(t)` on `[0, τ]`. The endpoint conditions
    /// `x0(τ) = L` and `ẋ0(τ) = 0` are checked to `tolerance` (relative to
    /// `L` and `L/τ`), not enforced.
    pub fn custom(times: Vec<f64>, accelerations: Vec<f64>, distance: f64, tolerance: f64) -> Result<Self> {
        let s = SampledAcceleration::new(times, accelerations)?;
        let tau = s.duration();
        let x_end = s.position(tau);
        let v_end = s.velocity(tau);
        if (x_end - distance).abs() > tolerance * distance.abs().max(1.0) {
            return Err(Error::InvalidProtocol(format!(
                "sampled schedule ends at x0 = {x_end}, expected {distance}"
            )));
        }
        if v_end.abs() > tolerance * (distance / tau).abs().max(1.0) {
            return Err(Error::InvalidProtocol(format!(
                "sampled schedule ends with velocity {v_end}"
            )));
        }
        Ok(Self {
            kind: ProtocolKind::Custom,
            distance,
            duration: tau,
            coefficient: 0.0,
            omega: PI / tau,
            samples: Some(s),
        })
    }

    pub fn smoothness(&self) -> Option<u32> {
        self.kind.smoothness()
    }

    pub fn position(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.duration {
            return self.distance;
        }
        let w = self.omega;
        match self.kind {
            ProtocolKind::ConstantVelocity => self.coefficient * t,
            ProtocolKind::Cos => self.coefficient / (w * w) * (1.0 - (w * t).cos()),
            ProtocolKind::Sin => self.coefficient / (2.0 * w) * (t - (2.0 * w * t).sin() / (2.0 * w)),
            ProtocolKind::Custom => self.sampled().position(t),
        }
    }

    /// `ẋ0(t)`; the constant-velocity kind moves on the closed interval `[0, τ]`.
    pub fn velocity(&self, t: f64) -> f64 {
        let inside = match self.kind {
            ProtocolKind::ConstantVelocity => (0.0..=self.duration).contains(&t),
            _ => t > 0.0 && t < self.duration,
        };
        if !inside {
            return 0.0;
        }
        let w = self.omega;
        match self.kind {
            ProtocolKind::ConstantVelocity => self.coefficient,
            ProtocolKind::Cos => self.coefficient / w * (w * t).sin(),
            ProtocolKind::Sin => self.coefficient / (2.0 * w) * (1.0 - (2.0 * w * t).cos()),
            ProtocolKind::Custom => self.sampled().velocity(t),
        }
    }

    /// `ẍ0(t)` on `[0, τ]` (one-sided at the ends), zero outside.
    pub fn acceleration(&self, t: f64) -> f64 {
        if !(0.0..=self.duration).contains(&t) {
            return 0.0;
        }
        let w = self.omega;
        match self.kind {
            ProtocolKind::ConstantVelocity => 0.0,
            ProtocolKind::Cos => self.coefficient * (w * t).cos(),
            ProtocolKind::Sin => self.coefficient * (2.0 * w * t).sin(),
            ProtocolKind::Custom => self.sampled().acceleration(t),
        }
    }

    /// Acceleration immediately after the start and before the stop.
    pub fn end_accelerations(&self) -> (f64, f64) {
        (self.acceleration(0.0), self.acceleration(self.duration))
    }

    fn sampled(&self) -> &SampledAcceleration {
        self.samples.as_ref().expect("custom protocol without samples")
    }
}

impl Schedule for Protocol {
    fn acceleration(&self, t: f64) -> f64 {
        Protocol::acceleration(self, t)
    }

    fn velocity(&self, t: f64) -> f64 {
        Protocol::velocity(self, t)
    }
}

/// Instantaneous-eigenbasis populations along a run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PopulationSpectrogram {
    pub times: Vec<f64>,
    pub accelerations: Vec<f64>,
    /// `Ẽ_k(t)` per sample, ascending.
    pub energies: Vec<Vec<f64>>,
    /// `|⟨k̃(t)|Φ(t)⟩|²` per sample.
    pub weights: Vec<Vec<f64>>,
}

impl PopulationSpectrogram {
    pub fn total_weight(&self, sample: usize) -> f64 {
        self.weights[sample].iter().sum()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConveyanceResult {
    pub times: Vec<f64>,
    pub x0: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
    /// Moving-frame survival `p(t)`.
    pub p: Vec<f64>,
    /// Rest-frame survival `P(t)`.
    pub big_p: Vec<f64>,
    pub norm: Vec<f64>,
    /// `p` and `P` at the sample nearest `t = τ`.
    pub p_final: f64,
    pub big_p_final: f64,
    pub level: usize,
    pub spectrogram: Option<PopulationSpectrogram>,
}

/// Settings shared by the conveyance runners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConveyanceOptions {
    pub dt: f64,
    pub absorber: Option<AbsorbingPotential>,
    /// Bound level of `H0` to convey.
    pub level: usize,
    /// Extra time simulated after the stop (constant-velocity runs).
    pub after: f64,
    /// Snapshot stride for the population spectrogram; 0 disables it.
    pub spectrogram_stride: usize,
}

impl Default for ConveyanceOptions {
    fn default() -> Self {
        Self {
            dt: 0.1,
            absorber: None,
            level: 0,
            after: 0.0,
            spectrogram_stride: 0,
        }
    }
}

fn check_level(params: &PhysicalParams, level: usize) -> Result<()> {
    let count = bound_state_energies(params).len();
    if level >= count {
        return Err(Error::InvalidLevel { level, count });
    }
    Ok(())
}

/// Conveys bound level `opts.level` of `H0` with `protocol`, integrating in
/// the moving frame. Constant-velocity protocols are routed through
/// [`run_constant_velocity`].
pub fn run_conveyance(
    protocol: &Protocol,
    params: &PhysicalParams,
    grid: &Grid,
    opts: &ConveyanceOptions,
) -> Result<ConveyanceResult> {
    if protocol.kind == ProtocolKind::ConstantVelocity {
        return run_constant_velocity(protocol, params, grid, opts).map(|r| r.result);
    }
    check_level(params, opts.level)?;
    let (_, initial) = discrete_bound_state(grid, params, opts.level)?;
    let time_grid = TimeGrid::covering(protocol.duration, opts.dt)?;
    let prop = PropagationOptions {
        absorber: opts.absorber,
        snapshot_stride: opts.spectrogram_stride,
        ..PropagationOptions::default()
    };
    let traj = propagate_moving_frame(&initial, protocol, params, &time_grid, &prop)?;
    let spectrogram = if opts.spectrogram_stride > 0 {
        Some(population_spectrogram(
            &traj,
            protocol,
            params,
            &SpectrumCache::default(),
        )?)
    } else {
        None
    };
    Ok(collect(protocol, traj, opts.level, spectrogram))
}

fn final_index(times: &[f64], tau: f64) -> usize {
    let i = times.partition_point(|&t| t < tau);
    if i == 0 {
        return 0;
    }
    if i >= times.len() || (times[i] - tau).abs() > (times[i - 1] - tau).abs() {
        i - 1
    } else {
        i
    }
}

fn collect(
    protocol: &Protocol,
    traj: Trajectory,
    level: usize,
    spectrogram: Option<PopulationSpectrogram>,
) -> ConveyanceResult {
    let k = final_index(&traj.times, protocol.duration);
    ConveyanceResult {
        x0: traj.times.iter().map(|&t| protocol.position(t)).collect(),
        p_final: traj.p[k],
        big_p_final: traj.rest_frame[k],
        times: traj.times,
        velocity: traj.velocity,
        acceleration: traj.acceleration,
        p: traj.p,
        big_p: traj.rest_frame,
        norm: traj.norm,
        level,
        spectrogram,
    }
}

/// Constant-velocity run with both moving-frame references.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConstantVelocityResult {
    /// `p(t)`: `p₊` on `[0, τ]`, `p₋` afterwards.
    pub result: ConveyanceResult,
    /// `|⟨Φ(0₊)|Φ(t)⟩|²` over the whole run.
    pub p_plus: Vec<f64>,
    /// `|⟨Φ(0₋)|Φ(t)⟩|²` over the whole run.
    pub p_minus: Vec<f64>,
    /// `p₊(τ₋)`, `p₋(τ₊)` and `P(τ)`.
    pub p_plus_before_stop: f64,
    pub p_minus_after_stop: f64,
    pub big_p_at_stop: f64,
}

/// Constant-velocity conveyance. The moving-frame state jumps at both ends:
/// `Φ(0₊) = e^{−imcx/ħ} Ψ(0)` and `Φ(τ₊) = e^{imcx/ħ} Φ(τ₋)`. Between the
/// jumps the moving-frame Hamiltonian is `H0` up to a constant.
pub fn run_constant_velocity(
    protocol: &Protocol,
    params: &PhysicalParams,
    grid: &Grid,
    opts: &ConveyanceOptions,
) -> Result<ConstantVelocityResult> {
    if protocol.kind != ProtocolKind::ConstantVelocity {
        return Err(Error::InvalidProtocol("expected a constant-velocity protocol".into()));
    }
    check_level(params, opts.level)?;
    let (_, psi0) = discrete_bound_state(grid, params, opts.level)?;
    let k = params.mass * protocol.coefficient / params.hbar;
    let phi_plus = psi0.boosted(-k);

    let moving = TimeGrid::covering(protocol.duration, opts.dt)?;
    let stop_step = moving.n_steps;
    let after_steps = if opts.after > 0.0 {
        (opts.after / opts.dt).ceil() as usize
    } else {
        0
    };
    let absorb = match &opts.absorber {
        Some(a) => {
            a.validate(grid)?;
            a.profile(grid)
        }
        None => vec![0.0; grid.n_points()],
    };
    let potential: Vec<Complex64> = grid
        .points()
        .zip(&absorb)
        .map(|(x, w)| Complex64::new(well_potential(params, x, 0.0), -w))
        .collect();
    let mut stepper = CrankNicolson::new(grid, params, moving.dt)?;

    let mut out = ConstantVelocityResult::default();
    out.result.level = opts.level;
    let mut state = phi_plus.clone();
    let record = |state: &WaveFunction,
                  step: usize,
                  moving_frame_velocity: f64,
                  out: &mut ConstantVelocityResult|
     -> Result<()> {
        let t = step as f64 * moving.dt;
        // rest-frame state relative to the trap: e^{imẋ0 x/ħ} Φ
        let rest = state.boosted(params.mass * moving_frame_velocity / params.hbar);
        let pp = phi_plus.inner(state)?.norm_sqr();
        let pm = psi0.inner(state)?.norm_sqr();
        let big = psi0.inner(&rest)?.norm_sqr();
        out.p_plus.push(pp);
        out.p_minus.push(pm);
        let r = &mut out.result;
        r.times.push(t);
        r.x0.push(protocol.position(t));
        r.velocity.push(moving_frame_velocity);
        r.acceleration.push(0.0);
        r.p.push(if step <= stop_step && moving_frame_velocity != 0.0 {
            pp
        } else {
            pm
        });
        r.big_p.push(big);
        r.norm.push(state.norm_sqr());
        Ok(())
    };
    record(&state, 0, protocol.coefficient, &mut out)?;
    for step in 1..=stop_step {
        stepper.step(state.amplitudes_mut(), &potential, &potential)?;
        record(&state, step, protocol.coefficient, &mut out)?;
    }
    out.p_plus_before_stop = *out.p_plus.last().unwrap_or(&1.0);
    out.big_p_at_stop = *out.result.big_p.last().unwrap_or(&1.0);
    // stop: back to the rest frame of the (now resting) trap
    state.boost(k);
    out.p_minus_after_stop = psi0.inner(&state)?.norm_sqr();
    for step in stop_step + 1..=stop_step + after_steps {
        stepper.step(state.amplitudes_mut(), &potential, &potential)?;
        record(&state, step, 0.0, &mut out)?;
    }
    out.result.p_final = out.p_plus_before_stop;
    out.result.big_p_final = out.big_p_at_stop;
    Ok(out)
}

/// Harmonic estimate `α²/(8β)` of the drop caused by a sudden slope change
/// `α = m·Δa`, with `β = V0/w²` the curvature of the well bottom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropEstimate {
    pub value: f64,
    /// False once the estimate exceeds 0.5 and the expansion is meaningless.
    pub valid: bool,
}

pub fn initial_drop_estimate(params: &PhysicalParams, alpha: f64) -> DropEstimate {
    let beta = params.depth / (params.width * params.width);
    let value = alpha * alpha / (8.0 * beta);
    DropEstimate {
        value,
        valid: value <= 0.5,
    }
}

/// Exact displaced-oscillator drop `1 − exp(−mω d²/2ħ)` for the same
/// harmonic approximation, `d = α/2β`, `mω = √(2mβ)`.
pub fn harmonic_displacement_drop(params: &PhysicalParams, alpha: f64) -> f64 {
    let beta = params.depth / (params.width * params.width);
    let d = alpha / (2.0 * beta);
    let m_omega = (2.0 * params.mass * beta).sqrt();
    -(-m_omega * d * d / (2.0 * params.hbar)).exp_m1()
}

/// `Γ(|a|)` sampled on ascending `|a|`, interpolated linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaTable {
    pub accelerations: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl GammaTable {
    pub fn new(accelerations: Vec<f64>, gammas: Vec<f64>) -> Result<Self> {
        if accelerations.len() != gammas.len() || accelerations.is_empty() {
            return Err(Error::Dimension {
                expected: accelerations.len(),
                found: gammas.len(),
            });
        }
        if accelerations.windows(2).any(|w| !(w[1] > w[0])) || accelerations[0] < 0.0 {
            return Err(Error::param("Γ table accelerations must be nonnegative and increasing"));
        }
        if gammas.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::param("Γ table entries must be finite and nonnegative"));
        }
        Ok(Self { accelerations, gammas })
    }

    /// Semiclassical table from `|a| = 0` (bound, Γ = 0) up to `a_max`.
    pub fn semiclassical(
        params: &PhysicalParams,
        a_max: f64,
        points: usize,
        opts: &crate::semiclassics::WkbOptions,
        weber: bool,
    ) -> Result<Self> {
        let points = points.max(2);
        let a: Vec<f64> = (0..points).map(|i| a_max * i as f64 / (points - 1) as f64).collect();
        let ma: Vec<f64> = a[1..].iter().map(|a| a * params.mass).collect();
        let rows = crate::semiclassics::gamma_table(params, &ma, opts);
        let mut gammas = vec![0.0];
        for row in rows {
            let level = if weber { row.weber } else { row.airy };
            let level = level.ok_or_else(|| {
                Error::Geometry(format!(
                    "no semiclassical Γ at ma = {}: {}",
                    row.ma,
                    row.errors.join("; ")
                ))
            })?;
            gammas.push(level.gamma);
        }
        Self::new(a, gammas)
    }

    pub fn gamma(&self, a: f64) -> Result<f64> {
        let a = a.abs();
        let lo = self.accelerations[0];
        let hi = *self.accelerations.last().unwrap_or(&lo);
        if a < lo || a > hi {
            return Err(Error::OutOfRange { value: a, lo, hi });
        }
        let i = self
            .accelerations
            .partition_point(|&s| s <= a)
            .clamp(1, self.accelerations.len().max(2) - 1);
        if self.accelerations.len() == 1 {
            return Ok(self.gammas[0]);
        }
        let (a0, a1) = (self.accelerations[i - 1], self.accelerations[i]);
        let f = (a - a0) / (a1 - a0);
        Ok(self.gammas[i - 1] * (1.0 - f) + self.gammas[i] * f)
    }
}

/// `p(τ) ≈ (1 − d_ini) exp(−∫Γ(a(t))dt) (1 − d_fin)` and its running form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdiabaticEstimate {
    pub d_initial: f64,
    pub d_final: f64,
    /// `∫₀^τ Γ(a(t)) dt`.
    pub exponent: f64,
    pub p_final: f64,
    pub times: Vec<f64>,
    /// `(1 − d_ini) exp(−∫₀^t Γ)`.
    pub p: Vec<f64>,
}

pub fn adiabatic_tunneling_estimate(
    protocol: &Protocol,
    params: &PhysicalParams,
    table: &GammaTable,
    samples: usize,
) -> Result<AdiabaticEstimate> {
    if protocol.kind == ProtocolKind::ConstantVelocity {
        return Err(Error::InvalidProtocol(
            "the adiabatic tunneling estimate needs an acceleration schedule".into(),
        ));
    }
    let (a_start, a_stop) = protocol.end_accelerations();
    let d_initial = initial_drop_estimate(params, params.mass * a_start).value.min(1.0);
    let d_final = initial_drop_estimate(params, params.mass * a_stop).value.min(1.0);
    let n = samples.max(2);
    let times: Vec<f64> = (0..n).map(|i| protocol.duration * i as f64 / (n - 1) as f64).collect();
    let rates = times
        .iter()
        .map(|&t| table.gamma(protocol.acceleration(t)))
        .collect::<Result<Vec<_>>>()?;
    let mut integral = 0.0;
    let mut p = vec![1.0 - d_initial];
    for i in 1..n {
        integral += 0.5 * (rates[i] + rates[i - 1]) * (times[i] - times[i - 1]);
        p.push((1.0 - d_initial) * (-integral).exp());
    }
    Ok(AdiabaticEstimate {
        d_initial,
        d_final,
        exponent: integral,
        p_final: (1.0 - d_initial) * (-integral).exp() * (1.0 - d_final),
        times,
        p,
    })
}

/// Diagonalisations of `H̃(a)` keyed by `a` rounded to 1e−12, filled once
/// and shared between threads.
#[derive(Default)]
pub struct SpectrumCache {
    map: RwLock<HashMap<(i64, u64), Arc<SpectralDecomposition>>>,
}

impl SpectrumCache {
    pub fn get(&self, params: &PhysicalParams, grid: &Grid, a: f64) -> Result<Arc<SpectralDecomposition>> {
        let key = ((a * 1e12).round() as i64, grid_key(grid));
        if let Some(hit) = self.map.read().expect("spectrum cache poisoned").get(&key) {
            return Ok(Arc::clone(hit));
        }
        let h = build_hamiltonian(grid, &PotentialSpec::new(*params, a))?;
        let decomp = Arc::new(diagonalize(&h)?);
        let mut map = self.map.write().expect("spectrum cache poisoned");
        Ok(Arc::clone(map.entry(key).or_insert(decomp)))
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("spectrum cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn grid_key(grid: &Grid) -> u64 {
    let mut h = grid.n_points() as u64;
    h = h.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ grid.dx().to_bits();
    h.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ grid.x_min().to_bits()
}

/// Projects each stored snapshot onto the eigenbasis of the moving-frame
/// Hamiltonian at the snapshot's acceleration.
pub fn population_spectrogram(
    traj: &Trajectory,
    protocol: &Protocol,
    params: &PhysicalParams,
    cache: &SpectrumCache,
) -> Result<PopulationSpectrogram> {
    let rows = traj
        .snapshots
        .par_iter()
        .map(|snap| {
            let grid = *snap.state.grid();
            let a = protocol.acceleration(snap.t);
            let decomp = cache.get(params, &grid, a)?;
            let amps = snap.state.amplitudes();
            let dx = grid.dx();
            let weights: Vec<f64> = (0..decomp.len())
                .map(|k| {
                    // eigenvectors are unit vectors; states carry the √dx scaling
                    let s: Complex64 = (0..amps.len()).map(|j| amps[j] * decomp.component(j, k)).sum();
                    s.norm_sqr() * dx
                })
                .collect();
            Ok((snap.t, a, decomp.energies().to_vec(), weights))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = PopulationSpectrogram::default();
    for (t, a, e, w) in rows {
        out.times.push(t);
        out.accelerations.push(a);
        out.energies.push(e);
        out.weights.push(w);
    }
    Ok(out)
}

/// Conveyance of several bound levels, each in its own run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiStateResult {
    pub levels: Vec<usize>,
    pub runs: Vec<ConveyanceResult>,
}

impl MultiStateResult {
    pub fn p_final(&self, level: usize) -> Option<f64> {
        self.levels
            .iter()
            .position(|&l| l == level)
            .map(|i| self.runs[i].p_final)
    }

    /// `p_0(τ)/p_1(τ)`.
    pub fn selection_ratio(&self) -> Option<f64> {
        Some(self.p_final(0)? / self.p_final(1)?)
    }
}

pub fn multi_state_conveyance(
    protocol: &Protocol,
    params: &PhysicalParams,
    grid: &Grid,
    levels: &[usize],
    opts: &ConveyanceOptions,
) -> Result<MultiStateResult> {
    for &l in levels {
        check_level(params, l)?;
    }
    let runs = levels
        .par_iter()
        .map(|&level| run_conveyance(protocol, params, grid, &ConveyanceOptions { level, ..*opts }))
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiStateResult {
        levels: levels.to_vec(),
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> PhysicalParams {
        PhysicalParams::default()
    }

    #[test]
    fn closed_form_coefficients() {
        let c = make_protocol(ProtocolKind::ConstantVelocity, 50.0, 100.0).unwrap();
        assert_eq!(c.coefficient, 0.5);
        let cos = make_protocol(ProtocolKind::Cos, 50.0, 30.0).unwrap();
        assert!((cos.omega - PI / 30.0).abs() < 1e-15);
        assert!((cos.coefficient - cos.omega * cos.omega * 25.0).abs() < 1e-15);
        let sin = make_protocol(ProtocolKind::Sin, 50.0, 30.0).unwrap();
        assert!((sin.coefficient - 2.0 * PI * 50.0 / 900.0).abs() < 1e-15);
        assert!(make_protocol(ProtocolKind::Cos, -1.0, 3.0).is_err());
        assert!(make_protocol(ProtocolKind::Cos, 1.0, 0.0).is_err());
        assert!(make_protocol(ProtocolKind::Custom, 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn endpoints_are_exact(l in 0.1f64..200.0, tau in 1.0f64..500.0) {
            for kind in [ProtocolKind::ConstantVelocity, ProtocolKind::Cos, ProtocolKind::Sin] {
                let p = make_protocol(kind, l, tau).unwrap();
                let eps = 1e-9;
                prop_assert!((p.position(tau * (1.0 - eps)) - l).abs() <= 1e-12 * l + 1e-8 * l);
                prop_assert_eq!(p.position(tau), l);
                prop_assert_eq!(p.position(0.0), 0.0);
            }
            // closed forms evaluated just inside the interval
            let cos = make_protocol(ProtocolKind::Cos, l, tau).unwrap();
            let w = cos.omega;
            prop_assert!((cos.coefficient / (w * w) * (1.0 - (w * tau).cos()) - l).abs() <= 1e-12 * l);
            let sin = make_protocol(ProtocolKind::Sin, l, tau).unwrap();
            let x_end = sin.coefficient / (2.0 * w) * (tau - (2.0 * w * tau).sin() / (2.0 * w));
            prop_assert!((x_end - l).abs() <= 1e-12 * l);
        }

        #[test]
        fn net_velocity_change_vanishes(l in 0.1f64..200.0, tau in 1.0f64..500.0) {
            for kind in [ProtocolKind::Cos, ProtocolKind::Sin] {
                let p = make_protocol(kind, l, tau).unwrap();
                // Simpson on a smooth periodic-type integrand
                let n = 2000;
                let h = tau / n as f64;
                let mut s = p.acceleration(0.0) + p.acceleration(tau);
                for i in 1..n {
                    s += if i % 2 == 1 { 4.0 } else { 2.0 } * p.acceleration(i as f64 * h);
                }
                let integral = s * h / 3.0;
                prop_assert!(integral.abs() <= 1e-12 * p.coefficient.abs() * tau + 1e-13);
                prop_assert!(p.velocity(tau * (1.0 - 1e-12)).abs() < 1e-9 * l / tau);
                prop_assert!(p.velocity(1e-12 * tau).abs() < 1e-9 * l / tau);
            }
        }
    }

    #[test]
    fn derivatives_are_consistent() {
        for kind in [ProtocolKind::Cos, ProtocolKind::Sin] {
            let p = make_protocol(kind, 10.0, 15.0).unwrap();
            let h = 1e-5;
            for &t in &[1.0, 4.0, 7.5, 12.0] {
                let v = (p.position(t + h) - p.position(t - h)) / (2.0 * h);
                let a = (p.velocity(t + h) - p.velocity(t - h)) / (2.0 * h);
                assert!((v - p.velocity(t)).abs() < 1e-7);
                assert!((a - p.acceleration(t)).abs() < 1e-7);
            }
        }
        let (a0, a1) = make_protocol(ProtocolKind::Cos, 10.0, 15.0)
            .unwrap()
            .end_accelerations();
        assert!(a0 > 0.0 && (a1 + a0).abs() < 1e-15);
        let (s0, s1) = make_protocol(ProtocolKind::Sin, 10.0, 15.0)
            .unwrap()
            .end_accelerations();
        assert!(s0 == 0.0 && s1.abs() < 1e-15);
    }

    #[test]
    fn custom_samples_reproduce_sin_protocol() {
        let sin = make_protocol(ProtocolKind::Sin, 10.0, 20.0).unwrap();
        let times: Vec<f64> = (0..=400).map(|i| 20.0 * i as f64 / 400.0).collect();
        let acc: Vec<f64> = times.iter().map(|&t| sin.acceleration(t)).collect();
        let custom = Protocol::custom(times, acc, 10.0, 1e-4).unwrap();
        for &t in &[0.3, 5.0, 11.1, 19.9] {
            assert!((custom.acceleration(t) - sin.acceleration(t)).abs() < 1e-6);
            assert!((custom.velocity(t) - sin.velocity(t)).abs() < 1e-6);
            assert!((custom.position(t) - sin.position(t)).abs() < 1e-6);
        }
        // wrong distance is reported, not repaired
        let times: Vec<f64> = (0..=40).map(|i| i as f64 * 0.5).collect();
        let acc: Vec<f64> = times.iter().map(|&t| sin.acceleration(t)).collect();
        assert!(matches!(
            Protocol::custom(times, acc, 12.0, 1e-4),
            Err(Error::InvalidProtocol(_))
        ));
    }

    #[test]
    fn drop_estimate_scaling() {
        let p = unit();
        assert_eq!(initial_drop_estimate(&p, 0.0).value, 0.0);
        let a = initial_drop_estimate(&p, 0.1).value;
        let b = initial_drop_estimate(&p, 0.2).value;
        assert!((b / a - 4.0).abs() < 1e-12);
        assert!((a - 0.01 / 8.0).abs() < 1e-15);
        assert!(!initial_drop_estimate(&p, 3.0).valid);
        // exact harmonic overlap agrees at leading order up to √(2m)/ħ
        let exact = harmonic_displacement_drop(&p, 1e-3);
        assert!((exact / initial_drop_estimate(&p, 1e-3).value - 2f64.sqrt()).abs() < 1e-5);
    }

    #[test]
    fn gamma_table_interpolation_and_range() {
        let t = GammaTable::new(vec![0.0, 0.1, 0.2], vec![0.0, 0.01, 0.05]).unwrap();
        assert!((t.gamma(0.15).unwrap() - 0.03).abs() < 1e-15);
        assert!((t.gamma(-0.05).unwrap() - 0.005).abs() < 1e-15);
        assert!(matches!(t.gamma(0.3), Err(Error::OutOfRange { .. })));
        assert!(GammaTable::new(vec![0.1, 0.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn estimate_limits() {
        let p = unit();
        let zero = GammaTable::new(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let sin = make_protocol(ProtocolKind::Sin, 10.0, 50.0).unwrap();
        let est = adiabatic_tunneling_estimate(&sin, &p, &zero, 500).unwrap();
        assert!((est.p_final - 1.0).abs() < 1e-15);
        let cos = make_protocol(ProtocolKind::Cos, 10.0, 50.0).unwrap();
        let est = adiabatic_tunneling_estimate(&cos, &p, &zero, 500).unwrap();
        let d = initial_drop_estimate(&p, cos.coefficient).value;
        assert!((est.p_final - (1.0 - d) * (1.0 - d)).abs() < 1e-14);
        // constant rate integrates exactly
        let flat = GammaTable::new(vec![0.0, 1.0], vec![0.01, 0.01]).unwrap();
        let est = adiabatic_tunneling_estimate(&sin, &p, &flat, 101).unwrap();
        assert!((est.exponent - 0.5).abs() < 1e-12);
        let narrow = GammaTable::new(vec![0.0, 1e-3], vec![0.0, 0.0]).unwrap();
        assert!(adiabatic_tunneling_estimate(&cos, &p, &narrow, 10).is_err());
    }

    fn small_grid() -> Grid {
        Grid::symmetric(20.0, 0.1).unwrap()
    }

    #[test]
    fn constant_velocity_bookkeeping() {
        let p = unit();
        let grid = small_grid();
        let proto = make_protocol(ProtocolKind::ConstantVelocity, 10.0, 15.0).unwrap();
        let opts = ConveyanceOptions {
            after: 5.0,
            ..ConveyanceOptions::default()
        };
        let r = run_constant_velocity(&proto, &p, &grid, &opts).unwrap();
        assert!((r.p_plus[0] - 1.0).abs() < 1e-12);
        assert!(r.p_minus[0] < 1.0);
        assert!((r.p_plus_before_stop - r.p_minus_after_stop).abs() < 1e-8);
        assert!((r.p_plus_before_stop - r.big_p_at_stop).abs() < 1e-8);
        // P follows p₊ while moving and p₋ after the stop
        let stop = final_index(&r.result.times, proto.duration);
        for i in 0..=stop {
            assert!((r.result.big_p[i] - r.p_plus[i]).abs() < 1e-10);
        }
        for i in stop + 1..r.result.times.len() {
            assert!((r.result.big_p[i] - r.p_minus[i]).abs() < 1e-10);
            assert_eq!(r.result.p[i], r.p_minus[i]);
        }
        assert!(r.result.p.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
    }

    #[test]
    fn slow_constant_velocity_keeps_particle() {
        let proto = make_protocol(ProtocolKind::ConstantVelocity, 1e-3, 10.0).unwrap();
        let r = run_constant_velocity(&proto, &unit(), &small_grid(), &ConveyanceOptions::default()).unwrap();
        assert!(r.result.p.iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn smooth_protocols_end_with_p_equal_big_p() {
        let p = unit();
        let grid = small_grid();
        for kind in [ProtocolKind::Cos, ProtocolKind::Sin] {
            let proto = make_protocol(kind, 10.0, 15.0).unwrap();
            let r = run_conveyance(&proto, &p, &grid, &ConveyanceOptions::default()).unwrap();
            assert!((r.p_final - r.big_p_final).abs() < 1e-10, "{kind:?}");
            assert!(r.p.iter().chain(&r.big_p).all(|v| (0.0..=1.0 + 1e-12).contains(v)));
        }
    }

    #[test]
    fn spectrogram_start_and_cache() {
        let p = unit();
        let grid = small_grid();
        let opts = ConveyanceOptions {
            spectrogram_stride: 50,
            ..ConveyanceOptions::default()
        };
        let sin = run_conveyance(&make_protocol(ProtocolKind::Sin, 10.0, 15.0).unwrap(), &p, &grid, &opts).unwrap();
        let s = sin.spectrogram.unwrap();
        let ground = s.weights[0][0];
        assert!((ground - 1.0).abs() < 1e-8, "{ground}");
        for i in 0..s.times.len() {
            assert!(s.total_weight(i) <= 1.0 + 1e-8);
        }
        let cos = run_conveyance(&make_protocol(ProtocolKind::Cos, 10.0, 15.0).unwrap(), &p, &grid, &opts).unwrap();
        let s = cos.spectrogram.unwrap();
        assert!(s.weights[0][0] < 1.0 - 1e-4);

        let cache = SpectrumCache::default();
        cache.get(&p, &grid, 0.1).unwrap();
        cache.get(&p, &grid, 0.1 + 1e-14).unwrap();
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn multi_state_rejects_unbound_level() {
        let p = unit();
        let proto = make_protocol(ProtocolKind::Sin, 10.0, 15.0).unwrap();
        assert!(matches!(
            multi_state_conveyance(&proto, &p, &small_grid(), &[0, 1], &ConveyanceOptions::default()),
            Err(Error::InvalidLevel { level: 1, count: 1 })
        ));
    }
}
