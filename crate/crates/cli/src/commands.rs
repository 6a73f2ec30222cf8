//! One function per subcommand. The config has been validated for the
//! command before any of these run.

use anyhow::{Context, Result};
use conveyance::propagator::{propagate_moving_frame, ConstantAcceleration, PropagationOptions, Snapshot, TimeGrid};
use conveyance::protocols::{
    adiabatic_tunneling_estimate, make_protocol, run_constant_velocity, run_conveyance, ConveyanceOptions,
    ConveyanceResult, GammaTable, Protocol, ProtocolKind,
};
use conveyance::resonance::{default_initial_guess, solve_resonance, ResonanceState};
use conveyance::semiclassics::{gamma_table, GammaRow};
use conveyance::spectral::{
    build_hamiltonian, discrete_bound_state, discrete_ground_state, energy_diagram, fit_exponential, lorentzian_fit,
    project_state, relaxation_run, FitForm, RelaxationOptions, RelaxationRun,
};
use conveyance::{Complex64, Grid, PhysicalParams, PotentialSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ConveyConfig, ExperimentConfig};
use crate::output::{num, opt, tag, Output, Table};

pub struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
}

impl Ctx<'_> {
    fn params(&self) -> PhysicalParams {
        self.cfg.params()
    }

    fn accel(&self, ma: f64) -> f64 {
        ma / self.cfg.params.mass
    }
}

/// A failure at one slope of a sweep is a warning; the sweep fails only
/// when nothing succeeded.
#[derive(Default)]
struct Sweep {
    succeeded: usize,
    last_error: Option<anyhow::Error>,
}

impl Sweep {
    fn keep<T>(&mut self, out: &mut Output, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => {
                self.succeeded += 1;
                Some(v)
            }
            Err(e) => {
                out.warn(format!("{e:#}"));
                self.last_error = Some(e);
                None
            }
        }
    }

    fn finish(self) -> Result<()> {
        match (self.succeeded, self.last_error) {
            (0, Some(e)) => Err(e),
            _ => Ok(()),
        }
    }
}

pub fn spectrum(ctx: &Ctx, out: &mut Output) -> Result<()> {
    let a: Vec<f64> = ctx.cfg.ma.iter().map(|&ma| ctx.accel(ma)).collect();
    let rows = energy_diagram(&ctx.params(), &a, &ctx.cfg.grid_for(None), ctx.cfg.spectrum.levels)?;
    let mut cols = vec!["ma".to_string(), "a".to_string()];
    cols.extend((0..ctx.cfg.spectrum.levels).map(|k| format!("e{k}")));
    let mut t = Table::new(&cols);
    for (ma, row) in ctx.cfg.ma.iter().zip(&rows) {
        let mut cells = vec![num(*ma), num(row.acceleration)];
        cells.extend(row.energies.iter().map(|e| num(*e)));
        cells.resize(cols.len(), String::new());
        t.row(&cells);
    }
    out.csv("spectrum.csv", &t)
}

fn relax_one(ctx: &Ctx, ma: f64) -> Result<(RelaxationRun, conveyance::spectral::OverlapCoefficients)> {
    let params = ctx.params();
    let grid = ctx.cfg.grid_for(ctx.cfg.relax.grid);
    let opts = RelaxationOptions {
        t_max: ctx.cfg.relax.t_max,
        dt_sample: ctx.cfg.relax.dt_sample,
        late_half: ctx.cfg.relax.late_half,
        ..RelaxationOptions::default()
    };
    let run = relaxation_run(&params, ctx.accel(ma), &grid, &opts).with_context(|| format!("relax at ma = {ma}"))?;
    let h = build_hamiltonian(&grid, &PotentialSpec::new(params, ctx.accel(ma)))?;
    let psi0 = discrete_ground_state(&grid, &params)?;
    let coeffs = project_state(&h, &psi0, &[])?.coefficients;
    Ok((run, coeffs))
}

pub fn relax(ctx: &Ctx, out: &mut Output) -> Result<()> {
    let mut fits = Table::new(&[
        "ma",
        "gamma_relax",
        "window_lo",
        "window_hi",
        "r_squared",
        "reflection_time",
        "lorentz_center",
        "lorentz_width",
        "gamma_lorentz",
    ]);
    let mut sweep = Sweep::default();
    for &ma in &ctx.cfg.ma {
        let Some((run, coeffs)) = sweep.keep(out, relax_one(ctx, ma)) else {
            continue;
        };
        let mut series = Table::new(&["t", "p", "boundary_weight"]);
        for i in 0..run.times.len() {
            series.nums(&[run.times[i], run.survival[i], run.boundary_weight[i]]);
        }
        out.csv(&format!("relax_ma{}.csv", tag(ma)), &series)?;
        let mut weights = Table::new(&["energy", "weight"]);
        for (e, w) in coeffs.energies.iter().zip(coeffs.weights()) {
            weights.nums(&[*e, w]);
        }
        out.csv(&format!("coefficients_ma{}.csv", tag(ma)), &weights)?;
        let lor = match lorentzian_fit(&coeffs) {
            Ok(l) => Some(l),
            Err(e) => {
                out.warn(format!("Lorentzian fit at ma = {ma}: {e}"));
                None
            }
        };
        let f = &run.fit;
        fits.row(&[
            num(ma),
            num(f.gamma),
            num(f.window.0),
            num(f.window.1),
            num(f.r_squared),
            opt(run.reflection_time),
            opt(lor.as_ref().map(|l| l.center)),
            opt(lor.as_ref().map(|l| l.width)),
            opt(lor.as_ref().map(|l| l.decay_rate(ctx.cfg.params.hbar))),
        ]);
    }
    sweep.finish()?;
    out.csv("relax_fits.csv", &fits)
}

struct AbsorbOne {
    times: Vec<f64>,
    p: Vec<f64>,
    big_p: Vec<f64>,
    norm: Vec<f64>,
    snapshots: Vec<Snapshot>,
    fit: conveyance::spectral::DecayFit,
}

fn absorb_one(ctx: &Ctx, ma: f64) -> Result<AbsorbOne> {
    let params = ctx.params();
    let grid = ctx.cfg.grid_for(ctx.cfg.absorb.grid);
    let time = ctx.cfg.time();
    let tg = TimeGrid::covering(time.t_max, time.dt)?;
    let psi0 = discrete_ground_state(&grid, &params)?;
    let opts = PropagationOptions {
        absorber: ctx.cfg.absorber(),
        snapshot_stride: ctx.cfg.absorb.snapshot_stride,
        ..PropagationOptions::default()
    };
    let traj = propagate_moving_frame(&psi0, &ConstantAcceleration(ctx.accel(ma)), &params, &tg, &opts)
        .with_context(|| format!("absorb at ma = {ma}"))?;
    let (window, form) = match ctx.cfg.absorb.fit {
        Some(f) => (f.window, f.form.into()),
        None => ((0.5 * time.t_max, time.t_max), FitForm::Pure),
    };
    let fit =
        fit_exponential(&traj.times, &traj.p, window, form).with_context(|| format!("absorb fit at ma = {ma}"))?;
    Ok(AbsorbOne {
        times: traj.times,
        p: traj.p,
        big_p: traj.rest_frame,
        norm: traj.norm,
        snapshots: traj.snapshots,
        fit,
    })
}

fn snapshot_table(snaps: &[Snapshot]) -> Table {
    let mut t = Table::new(&["t", "x", "abs2"]);
    for s in snaps {
        let grid = s.state.grid();
        for (j, a) in s.state.amplitudes().iter().enumerate() {
            t.nums(&[s.t, grid.x(j), a.norm_sqr()]);
        }
    }
    t
}

pub fn absorb(ctx: &Ctx, out: &mut Output) -> Result<()> {
    let mut fits = Table::new(&[
        "ma",
        "gamma_absorb",
        "offset",
        "amplitude",
        "window_lo",
        "window_hi",
        "r_squared",
    ]);
    let mut sweep = Sweep::default();
    for &ma in &ctx.cfg.ma {
        let Some(run) = sweep.keep(out, absorb_one(ctx, ma)) else {
            continue;
        };
        let mut series = Table::new(&["t", "p", "P", "norm"]);
        for i in 0..run.times.len() {
            series.nums(&[run.times[i], run.p[i], run.big_p[i], run.norm[i]]);
        }
        out.csv(&format!("absorb_ma{}.csv", tag(ma)), &series)?;
        if !run.snapshots.is_empty() {
            out.csv(
                &format!("absorb_snapshots_ma{}.csv", tag(ma)),
                &snapshot_table(&run.snapshots),
            )?;
        }
        let f = &run.fit;
        fits.row(&[
            num(ma),
            num(f.gamma),
            opt(f.offset),
            opt(f.amplitude),
            num(f.window.0),
            num(f.window.1),
            num(f.r_squared),
        ]);
    }
    sweep.finish()?;
    out.csv("absorb_fits.csv", &fits)
}

fn wkb_rows(ctx: &Ctx) -> Vec<GammaRow> {
    gamma_table(&ctx.params(), &ctx.cfg.ma, &ctx.cfg.wkb.options())
}

pub fn wkb(ctx: &Ctx, out: &mut Output) -> Result<()> {
    let mut t = Table::new(&[
        "ma",
        "airy_energy",
        "airy_hbar_omega",
        "airy_s",
        "airy_gamma",
        "weber_energy",
        "weber_hbar_omega",
        "weber_s",
        "weber_kappa",
        "weber_gamma",
    ]);
    for row in wkb_rows(ctx) {
        for e in &row.errors {
            out.warn(format!("wkb at ma = {}: {e}", row.ma));
        }
        let a = row.airy.as_ref();
        let w = row.weber.as_ref();
        t.row(&[
            num(row.ma),
            opt(a.map(|l| l.energy)),
            opt(a.map(|l| l.hbar_omega)),
            opt(a.map(|l| l.s)),
            opt(a.map(|l| l.gamma)),
            opt(w.map(|l| l.energy)),
            opt(w.map(|l| l.hbar_omega)),
            opt(w.map(|l| l.s)),
            opt(w.map(|l| l.kappa)),
            opt(w.map(|l| l.gamma)),
        ]);
    }
    out.csv("wkb.csv", &t)
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct ResonanceRecord {
    m: f64,
    ma: f64,
    dx: f64,
    xmin: f64,
    xmax: f64,
    reE: f64,
    imE: f64,
    gamma: f64,
    residual: f64,
    iterations: usize,
}

fn resonance_one(ctx: &Ctx, ma: f64) -> Result<(Grid, ResonanceState)> {
    let grid = ctx.cfg.grid_for(ctx.cfg.resonance.grid);
    let spec = PotentialSpec::new(ctx.params(), ctx.accel(ma));
    let guess = match ctx.cfg.resonance.guess {
        Some((re, im)) => Complex64::new(re, im),
        None => default_initial_guess(&spec, &grid)?,
    };
    let state = solve_resonance(guess, &spec, &grid).with_context(|| format!("resonance at ma = {ma}"))?;
    Ok((grid, state))
}

pub fn resonance(ctx: &Ctx, out: &mut Output) -> Result<()> {
    let mut records = Vec::new();
    let mut sweep = Sweep::default();
    for &ma in &ctx.cfg.ma {
        let Some((grid, s)) = sweep.keep(out, resonance_one(ctx, ma)) else {
            continue;
        };
        let mut t = Table::new(&["x", "re", "im", "abs2", "phase"]);
        for (j, z) in s.state.amplitudes().iter().enumerate() {
            t.nums(&[grid.x(j), z.re, z.im, z.norm_sqr(), z.arg()]);
        }
        out.csv(&format!("resonance_ma{}.csv", tag(ma)), &t)?;
        records.push(ResonanceRecord {
            m: ctx.cfg.params.mass,
            ma,
            dx: grid.dx(),
            xmin: grid.x_min(),
            xmax: grid.x_max(),
            reE: s.energy.re,
            imE: s.energy.im,
            gamma: s.gamma,
            residual: s.residual,
            iterations: s.iterations,
        });
    }
    sweep.finish()?;
    out.json("resonance.json", &records)
}

pub fn compare(ctx: &Ctx, out: &mut Output) -> Result<()> {
    let wkb = wkb_rows(ctx);
    let rows: Vec<[Result<f64>; 3]> = ctx
        .cfg
        .ma
        .par_iter()
        .map(|&ma| {
            [
                relax_one(ctx, ma).map(|r| r.0.fit.gamma),
                absorb_one(ctx, ma).map(|r| r.fit.gamma),
                resonance_one(ctx, ma).map(|r| r.1.gamma),
            ]
        })
        .collect();
    let mut t = Table::new(&[
        "ma",
        "gamma_relax",
        "gamma_absorb",
        "gamma_res",
        "gamma_airy",
        "gamma_weber",
    ]);
    for ((ma, row), w) in ctx.cfg.ma.iter().zip(rows).zip(&wkb) {
        let mut cells = vec![num(*ma)];
        for (name, r) in ["relax", "absorb", "resonance"].iter().zip(row) {
            match r {
                Ok(g) => cells.push(num(g)),
                Err(e) => {
                    out.warn(format!("{name} at ma = {ma}: {e:#}"));
                    cells.push(String::new());
                }
            }
        }
        cells.push(opt(w.airy.map(|l| l.gamma)));
        cells.push(opt(w.weber.map(|l| l.gamma)));
        t.row(&cells);
    }
    out.csv("compare.csv", &t)
}

struct Job {
    kind: ProtocolKind,
    name: String,
    protocol: Protocol,
    level: usize,
}

struct JobResult {
    result: ConveyanceResult,
    p_plus_minus: Option<(Vec<f64>, Vec<f64>)>,
    snapshots: Vec<Snapshot>,
}

fn convey_jobs(c: &ConveyConfig) -> Result<Vec<Job>> {
    let mut jobs = Vec::new();
    for name in &c.kinds {
        let kind: ProtocolKind = name.parse()?;
        let protocols = if kind == ProtocolKind::Custom {
            let s = c.custom.as_ref().context("custom kind without samples")?;
            vec![Protocol::custom(
                s.times.clone(),
                s.accelerations.clone(),
                c.distance,
                s.tolerance,
            )?]
        } else {
            c.durations
                .iter()
                .map(|&tau| make_protocol(kind, c.distance, tau))
                .collect::<conveyance::Result<_>>()?
        };
        for protocol in protocols {
            for &level in &c.levels {
                jobs.push(Job {
                    kind,
                    name: name.clone(),
                    protocol: protocol.clone(),
                    level,
                });
            }
        }
    }
    Ok(jobs)
}

fn run_job(ctx: &Ctx, job: &Job) -> Result<JobResult> {
    let c = ctx.cfg.convey.as_ref().expect("validated convey section");
    let params = ctx.params();
    let grid = ctx.cfg.grid_for(None);
    let dt = c.dt;
    let opts = ConveyanceOptions {
        dt,
        absorber: ctx.cfg.convey_absorber(),
        level: job.level,
        after: c.after,
        spectrogram_stride: c.spectrogram_stride,
    };
    let context = || format!("{} τ = {} level {}", job.name, job.protocol.duration, job.level);
    if job.kind == ProtocolKind::ConstantVelocity {
        let r = run_constant_velocity(&job.protocol, &params, &grid, &opts).with_context(context)?;
        return Ok(JobResult {
            result: r.result,
            p_plus_minus: Some((r.p_plus, r.p_minus)),
            snapshots: Vec::new(),
        });
    }
    let result = run_conveyance(&job.protocol, &params, &grid, &opts).with_context(context)?;
    let snapshots = if c.snapshot_stride > 0 {
        let (_, psi) = discrete_bound_state(&grid, &params, job.level)?;
        let tg = TimeGrid::covering(job.protocol.duration, dt)?;
        let prop = PropagationOptions {
            absorber: opts.absorber,
            snapshot_stride: c.snapshot_stride,
            ..PropagationOptions::default()
        };
        propagate_moving_frame(&psi, &job.protocol, &params, &tg, &prop)
            .with_context(context)?
            .snapshots
    } else {
        Vec::new()
    };
    Ok(JobResult {
        result,
        p_plus_minus: None,
        snapshots,
    })
}

pub fn convey(ctx: &Ctx, out: &mut Output) -> Result<()> {
    let c = ctx.cfg.convey.as_ref().expect("validated convey section");
    let jobs = convey_jobs(c)?;
    let results = jobs.par_iter().map(|j| run_job(ctx, j)).collect::<Result<Vec<_>>>()?;
    let multi_level = c.levels.len() > 1;
    let mut sweep = Table::new(&["kind", "tau", "p_final", "one_minus_p", "level", "P_final"]);
    for (job, res) in jobs.iter().zip(&results) {
        let r = &res.result;
        let stem = if multi_level {
            format!("convey_{}_tau{}_n{}", job.name, tag(job.protocol.duration), job.level)
        } else {
            format!("convey_{}_tau{}", job.name, tag(job.protocol.duration))
        };
        let mut series = Table::new(&["t", "x0", "v", "a", "p", "P", "norm"]);
        for i in 0..r.times.len() {
            series.nums(&[
                r.times[i],
                r.x0[i],
                r.velocity[i],
                r.acceleration[i],
                r.p[i],
                r.big_p[i],
                r.norm[i],
            ]);
        }
        out.csv(&format!("{stem}.csv"), &series)?;
        if let Some((plus, minus)) = &res.p_plus_minus {
            let mut t = Table::new(&["t", "p_plus", "p_minus"]);
            for i in 0..r.times.len() {
                t.nums(&[r.times[i], plus[i], minus[i]]);
            }
            out.csv(&format!("{stem}_p_plus_minus.csv"), &t)?;
        }
        if let Some(s) = &r.spectrogram {
            let mut t = Table::new(&["t", "k", "energy", "weight"]);
            for i in 0..s.times.len() {
                for (k, (e, w)) in s.energies[i].iter().zip(&s.weights[i]).enumerate() {
                    t.row(&[num(s.times[i]), k.to_string(), num(*e), num(*w)]);
                }
            }
            out.csv(&format!("{stem}_spectrogram.csv"), &t)?;
        }
        if !res.snapshots.is_empty() {
            out.csv(&format!("{stem}_snapshots.csv"), &snapshot_table(&res.snapshots))?;
        }
        sweep.row(&[
            job.name.clone(),
            num(job.protocol.duration),
            num(r.p_final),
            num(1.0 - r.p_final),
            job.level.to_string(),
            num(r.big_p_final),
        ]);
    }
    out.csv("sweep.csv", &sweep)?;

    if let Some(a) = &c.adiabatic {
        let params = ctx.params();
        let table = GammaTable::semiclassical(&params, a.a_max, a.points, &ctx.cfg.wkb.options(), a.weber)?;
        let mut t = Table::new(&[
            "kind",
            "tau",
            "d_initial",
            "d_final",
            "exponent",
            "p_estimate",
            "p_final",
        ]);
        for (job, res) in jobs.iter().zip(&results) {
            if job.kind == ProtocolKind::ConstantVelocity || job.level != 0 {
                continue;
            }
            match adiabatic_tunneling_estimate(&job.protocol, &params, &table, a.samples) {
                Ok(e) => t.row(&[
                    job.name.clone(),
                    num(job.protocol.duration),
                    num(e.d_initial),
                    num(e.d_final),
                    num(e.exponent),
                    num(e.p_final),
                    num(res.result.p_final),
                ]),
                Err(e) => out.warn(format!(
                    "adiabatic estimate for {} τ = {}: {e}",
                    job.name, job.protocol.duration
                )),
            }
        }
        out.csv("adiabatic.csv", &t)?;
    }
    Ok(())
}
