//! Experiment configuration: one JSON document per run.

use std::path::Path;

use conveyance::propagator::{AbsorbingPotential, Side};
use conveyance::semiclassics::{AboveBarrier, KappaConvention, WkbOptions};
use conveyance::spectral::FitForm;
use conveyance::{Grid, PhysicalParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Command;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub mass: f64,
    #[serde(default = "one")]
    pub depth: f64,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default = "one")]
    pub hbar: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            depth: 1.0,
            width: 1.0,
            hbar: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_max: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbsorberConfig {
    pub strength: f64,
    pub width: f64,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitFormConfig {
    Pure,
    Offset,
}

impl From<FitFormConfig> for FitForm {
    fn from(f: FitFormConfig) -> Self {
        match f {
            FitFormConfig::Pure => FitForm::Pure,
            FitFormConfig::Offset => FitForm::Offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub window: (f64, f64),
    pub form: FitFormConfig,
}

/// `spectrum`: lowest `levels` eigenvalues per slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub levels: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { levels: 20 }
    }
}

/// `relax`: dephasing sum of the untilted ground state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaxConfig {
    pub grid: Option<GridConfig>,
    pub t_max: f64,
    pub dt_sample: f64,
    pub late_half: bool,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        Self {
            grid: None,
            t_max: 100.0,
            dt_sample: 0.1,
            late_half: true,
        }
    }
}

/// `absorb`: Crank–Nicolson decay with an absorbing layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct AbsorbConfig {
    pub grid: Option<GridConfig>,
    pub time: Option<TimeConfig>,
    pub absorber: Option<AbsorberConfig>,
    pub fit: Option<FitConfig>,
    /// Store `|Φ|²` every this many steps; 0 stores none.
    pub snapshot_stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ResonanceConfig {
    pub grid: Option<GridConfig>,
    /// Starting energy `[Re, Im]`; the default guess is used when absent.
    pub guess: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WkbConfig {
    pub above_barrier: AboveBarrier,
    pub kappa: KappaConvention,
    pub include_phase_derivative: bool,
}

impl Default for WkbConfig {
    fn default() -> Self {
        let o = WkbOptions::default();
        Self {
            above_barrier: o.above_barrier,
            kappa: o.kappa,
            include_phase_derivative: o.include_phase_derivative,
        }
    }
}

impl WkbConfig {
    pub fn options(&self) -> WkbOptions {
        WkbOptions {
            above_barrier: self.above_barrier,
            kappa: self.kappa,
            include_phase_derivative: self.include_phase_derivative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSchedule {
    pub times: Vec<f64>,
    pub accelerations: Vec<f64>,
    #[serde(default = "default_custom_tolerance")]
    pub tolerance: f64,
}

fn default_custom_tolerance() -> f64 {
    1e-3
}

/// Semiclassical `Γ(a)` table feeding the adiabatic estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdiabaticConfig {
    pub a_max: f64,
    #[serde(default = "default_table_points")]
    pub points: usize,
    #[serde(default)]
    pub weber: bool,
    #[serde(default = "default_estimate_samples")]
    pub samples: usize,
}

fn default_table_points() -> usize {
    41
}

fn default_estimate_samples() -> usize {
    401
}

/// `convey`: one run per (kind, duration, level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConveyConfig {
    pub kinds: Vec<String>,
    pub distance: f64,
    pub durations: Vec<f64>,
    #[serde(default = "default_convey_dt")]
    pub dt: f64,
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
    #[serde(default)]
    pub after: f64,
    #[serde(default)]
    pub spectrogram_stride: usize,
    #[serde(default)]
    pub snapshot_stride: usize,
    #[serde(default)]
    pub custom: Option<CustomSchedule>,
    #[serde(default)]
    pub adiabatic: Option<AdiabaticConfig>,
}

fn default_convey_dt() -> f64 {
    0.1
}

fn default_levels() -> Vec<usize> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub params: ParamsConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub time: Option<TimeConfig>,
    #[serde(default)]
    pub absorber: Option<AbsorberConfig>,
    /// Slopes `m·a`.
    #[serde(default)]
    pub ma: Vec<f64>,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub relax: RelaxConfig,
    #[serde(default)]
    pub absorb: AbsorbConfig,
    #[serde(default)]
    pub resonance: ResonanceConfig,
    #[serde(default)]
    pub wkb: WkbConfig,
    #[serde(default)]
    pub convey: Option<ConveyConfig>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, Vec<String>> {
        let text = std::fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
        serde_json::from_str(&text).map_err(|e| vec![format!("{}: {e}", path.display())])
    }

    /// SHA-256 of the normalized config with sorted keys.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn params(&self) -> PhysicalParams {
        let p = self.params;
        PhysicalParams::new(p.mass, p.depth, p.width, p.hbar).expect("validated params")
    }

    pub fn grid_for(&self, over: Option<GridConfig>) -> Grid {
        let g = over.unwrap_or(self.grid);
        Grid::new(g.x_min, g.x_max, g.dx).expect("validated grid")
    }

    pub fn time(&self) -> TimeConfig {
        self.absorb.time.or(self.time).expect("validated time grid")
    }

    pub fn absorber(&self) -> Option<AbsorbingPotential> {
        self.absorb
            .absorber
            .or(self.absorber)
            .map(|a| AbsorbingPotential::new(a.strength, a.width, a.side).expect("validated absorber"))
    }

    pub fn convey_absorber(&self) -> Option<AbsorbingPotential> {
        self.absorber
            .map(|a| AbsorbingPotential::new(a.strength, a.width, a.side).expect("validated absorber"))
    }

    /// Every violated constraint for `cmd`; empty when the config is usable.
    pub fn validate(&self, cmd: Command) -> Vec<String> {
        let mut errs = Vec::new();
        let p = self.params;
        if let Err(e) = PhysicalParams::new(p.mass, p.depth, p.width, p.hbar) {
            errs.push(format!("params: {e}"));
        }
        check_grid("grid", &self.grid, p.width, &mut errs);
        let uses_ma = matches!(
            cmd,
            Command::Spectrum | Command::Relax | Command::Absorb | Command::Wkb | Command::Resonance | Command::Compare
        );
        if uses_ma {
            if self.ma.is_empty() {
                errs.push("ma: at least one slope is required".into());
            }
            for (i, ma) in self.ma.iter().enumerate() {
                if !(ma.is_finite() && *ma >= 0.0) {
                    errs.push(format!("ma[{i}]: slope must be finite and non-negative, got {ma}"));
                }
            }
        }
        if let Some(t) = &self.time {
            check_time("time", t, &mut errs);
        }
        if let Some(a) = &self.absorber {
            check_absorber("absorber", a, &self.grid, &mut errs);
        }
        match cmd {
            Command::Spectrum => {
                if self.spectrum.levels == 0 {
                    errs.push("spectrum.levels: must be at least 1".into());
                }
            }
            Command::Relax => self.check_relax(&mut errs),
            Command::Compare => {
                self.check_relax(&mut errs);
                self.check_absorb(&mut errs);
                self.check_resonance(&mut errs);
            }
            Command::Absorb => self.check_absorb(&mut errs),
            Command::Resonance => self.check_resonance(&mut errs),
            Command::Convey => self.check_convey(&mut errs),
            Command::Wkb => {}
        }
        errs
    }

    fn check_relax(&self, errs: &mut Vec<String>) {
        if let Some(g) = &self.relax.grid {
            check_grid("relax.grid", g, self.params.width, errs);
        }
        let r = &self.relax;
        if !(r.dt_sample > 0.0 && r.t_max > r.dt_sample) {
            errs.push(format!(
                "relax: need 0 < dt_sample < t_max, got {} and {}",
                r.dt_sample, r.t_max
            ));
        }
    }

    fn check_absorb(&self, errs: &mut Vec<String>) {
        let grid = self.absorb.grid.unwrap_or(self.grid);
        if let Some(g) = &self.absorb.grid {
            check_grid("absorb.grid", g, self.params.width, errs);
        }
        match self.absorb.time.or(self.time) {
            Some(t) => {
                if let Some(t) = &self.absorb.time {
                    check_time("absorb.time", t, errs);
                }
                if let Some(f) = &self.absorb.fit {
                    let (lo, hi) = f.window;
                    if !(lo >= 0.0 && hi > lo && hi <= t.t_max * (1.0 + 1e-12)) {
                        errs.push(format!(
                            "absorb.fit.window: need 0 ≤ lo < hi ≤ t_max = {}, got ({lo}, {hi})",
                            t.t_max
                        ));
                    }
                }
            }
            None => errs.push("absorb: a time grid is required (absorb.time or time)".into()),
        }
        match self.absorb.absorber.or(self.absorber) {
            Some(a) => {
                if let Some(a) = &self.absorb.absorber {
                    check_absorber("absorb.absorber", a, &grid, errs);
                } else if self.absorb.grid.is_some() {
                    check_absorber("absorber", &a, &grid, errs);
                }
            }
            None => errs.push("absorb: an absorber is required (absorb.absorber or absorber)".into()),
        }
    }

    fn check_resonance(&self, errs: &mut Vec<String>) {
        if let Some(g) = &self.resonance.grid {
            check_grid("resonance.grid", g, self.params.width, errs);
        }
        if self.ma.iter().any(|ma| *ma <= 0.0) {
            errs.push("ma: resonances need strictly positive slopes".into());
        }
        if let Some((re, im)) = self.resonance.guess {
            if !(re.is_finite() && im.is_finite() && im <= 0.0) {
                errs.push(format!("resonance.guess: need finite Re and Im ≤ 0, got ({re}, {im})"));
            }
        }
    }

    fn check_convey(&self, errs: &mut Vec<String>) {
        let Some(c) = &self.convey else {
            errs.push("convey: section is required".into());
            return;
        };
        if !(c.dt.is_finite() && c.dt > 0.0) {
            errs.push(format!("convey.dt: must be positive, got {}", c.dt));
        }
        if c.kinds.is_empty() {
            errs.push("convey.kinds: at least one protocol kind is required".into());
        }
        for k in &c.kinds {
            match k.parse::<conveyance::protocols::ProtocolKind>() {
                Ok(conveyance::protocols::ProtocolKind::Custom) if c.custom.is_none() => {
                    errs.push("convey.custom: the custom kind needs sampled accelerations".into())
                }
                Ok(_) => {}
                Err(e) => errs.push(format!("convey.kinds: {e}")),
            }
        }
        let only_custom = c.kinds.iter().all(|k| k == "custom");
        if c.durations.is_empty() && !only_custom {
            errs.push("convey.durations: at least one duration is required".into());
        }
        for (i, d) in c.durations.iter().enumerate() {
            if !(d.is_finite() && *d > 0.0) {
                errs.push(format!("convey.durations[{i}]: must be positive, got {d}"));
            }
        }
        if !(c.distance.is_finite() && c.distance > 0.0) {
            errs.push(format!("convey.distance: must be positive, got {}", c.distance));
        }
        if c.levels.is_empty() {
            errs.push("convey.levels: at least one level is required".into());
        }
        if let Ok(params) =
            PhysicalParams::new(self.params.mass, self.params.depth, self.params.width, self.params.hbar)
        {
            let count = conveyance::model::bound_state_energies(&params).len();
            for &l in &c.levels {
                if l >= count {
                    errs.push(format!(
                        "convey.levels: level {l} does not exist ({count} bound state(s))"
                    ));
                }
            }
        }
        if !(c.after.is_finite() && c.after >= 0.0) {
            errs.push(format!("convey.after: must be non-negative, got {}", c.after));
        }
        if let Some(a) = &c.adiabatic {
            if !(a.a_max.is_finite() && a.a_max > 0.0) {
                errs.push(format!("convey.adiabatic.a_max: must be positive, got {}", a.a_max));
            }
        }
    }
}

fn check_grid(name: &str, g: &GridConfig, well_width: f64, errs: &mut Vec<String>) {
    match Grid::new(g.x_min, g.x_max, g.dx) {
        Ok(_) => {
            // the trap sits at the origin; keep two widths either side
            if g.x_min > -2.0 * well_width || g.x_max < 2.0 * well_width {
                errs.push(format!(
                    "{name}: [{}, {}] does not contain the well (need x_min ≤ {} and x_max ≥ {})",
                    g.x_min,
                    g.x_max,
                    -2.0 * well_width,
                    2.0 * well_width
                ));
            }
        }
        Err(e) => errs.push(format!("{name}: {e}")),
    }
}

fn check_time(name: &str, t: &TimeConfig, errs: &mut Vec<String>) {
    if !(t.dt > 0.0 && t.dt.is_finite()) {
        errs.push(format!("{name}.dt: must be positive, got {}", t.dt));
    }
    if !(t.t_max >= t.dt && t.t_max.is_finite()) {
        errs.push(format!("{name}.t_max: must be at least dt, got {}", t.t_max));
    }
}

fn check_absorber(name: &str, a: &AbsorberConfig, g: &GridConfig, errs: &mut Vec<String>) {
    match AbsorbingPotential::new(a.strength, a.width, a.side) {
        Ok(abs) => {
            if let Ok(grid) = Grid::new(g.x_min, g.x_max, g.dx) {
                if let Err(e) = abs.validate(&grid) {
                    errs.push(format!("{name}: {e}"));
                }
                // the layer must not reach into the well
                let reach_left = matches!(a.side, Side::Left | Side::Both) && g.x_min + a.width > -1.0;
                let reach_right = matches!(a.side, Side::Right | Side::Both) && g.x_max - a.width < 1.0;
                if reach_left || reach_right {
                    errs.push(format!("{name}: layer of width {} overlaps the well", a.width));
                }
            }
        }
        Err(e) => errs.push(format!("{name}: {e}")),
    }
}
