//! WKB treatment of the tilted well: turning points, phase integrals,
//! quantization and decay widths from the Airy and Weber (parabolic
//! cylinder) connection formulas.
//!
//! Everything here works in the orientation where the particle escapes to
//! `x → +∞`: `U(x) = V(x) − F·x` with `F = m·a > 0`, so the turning points
//! satisfy `c < a < b` with the well between `c` and `a` and the barrier
//! between `a` and `b`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{has_metastable_well, tilted_potential, Orientation, PhysicalParams, PotentialSpec};
use crate::numerics::quadrature::{integrate_sqrt_endpoints, integrate_sqrt_endpoints_real};
use crate::numerics::roots::bisect;
use crate::numerics::special::arg_gamma_half;

const QUAD_TOL: f64 = 1e-12;
const ROOT_TOL: f64 = 1e-13;
/// Energies closer than this to the barrier maximum are refused when
/// continuation above the barrier is disabled.
pub const BARRIER_TOP_MARGIN: f64 = 1e-6;

/// Reflects `x → −x` so that the outgoing side lies at `x > 0`.
pub fn mirror_for_wkb(spec: &PotentialSpec) -> Result<PotentialSpec> {
    if !has_metastable_well(spec) {
        return Err(Error::NoMetastableWell { slope: spec.slope() });
    }
    let orientation = match spec.orientation {
        Orientation::Forward => Orientation::Mirrored,
        Orientation::Mirrored => Orientation::Forward,
    };
    Ok(PotentialSpec { orientation, ..*spec })
}

/// Tilted well in escape-to-the-right orientation, with complex continuation.
#[derive(Debug, Clone, Copy)]
struct Profile {
    params: PhysicalParams,
    force: f64,
}

impl Profile {
    fn new(spec: &PotentialSpec) -> Result<Self> {
        let force = match spec.orientation {
            Orientation::Forward => -spec.slope(),
            Orientation::Mirrored => spec.slope(),
        };
        if !(force > 0.0) {
            return Err(Error::Geometry(format!(
                "expected the outgoing side at x > 0 (mirrored orientation with m·a > 0), got effective force {force}"
            )));
        }
        if !has_metastable_well(spec) {
            return Err(Error::NoMetastableWell { slope: spec.slope() });
        }
        Ok(Self {
            params: spec.params,
            force,
        })
    }

    fn value(&self, x: f64) -> f64 {
        let t = (x / self.params.width).tanh();
        self.params.depth * (t * t - 1.0) - self.force * x
    }

    fn value_c(&self, z: Complex64) -> Complex64 {
        let t = (z / self.params.width).tanh();
        self.params.depth * (t * t - 1.0) - self.force * z
    }

    fn slope_c(&self, z: Complex64) -> Complex64 {
        let t = (z / self.params.width).tanh();
        2.0 * self.params.depth / self.params.width * t * (1.0 - t * t) - self.force
    }

    fn curvature(&self, x: f64) -> f64 {
        let t = (x / self.params.width).tanh();
        let w = self.params.width;
        2.0 * self.params.depth / (w * w) * (1.0 - 3.0 * t * t) * (1.0 - t * t)
    }

    fn momentum(&self, energy: f64, x: f64) -> f64 {
        (2.0 * self.params.mass * (energy - self.value(x))).max(0.0).sqrt()
    }
}

/// Stationary points of the tilted well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellGeometry {
    pub well_position: f64,
    pub well_energy: f64,
    pub barrier_position: f64,
    pub barrier_energy: f64,
}

fn geometry_of(p: &Profile) -> Result<WellGeometry> {
    // U′ = 0 ⇔ t(1 − t²) = F w / (2 V0) with t = tanh(x/w)
    let q = p.force * p.params.width / (2.0 * p.params.depth);
    let g = |t: f64| t * (1.0 - t * t) - q;
    let t_star = 1.0 / 3f64.sqrt();
    let t_well = bisect(g, 0.0, t_star, 1e-16)?;
    let t_top = bisect(g, t_star, 1.0, 1e-16)?;
    let w = p.params.width;
    let xw = w * t_well.atanh();
    let xb = w * t_top.atanh();
    Ok(WellGeometry {
        well_position: xw,
        well_energy: p.value(xw),
        barrier_position: xb,
        barrier_energy: p.value(xb),
    })
}

/// Minimum and barrier maximum of a mirrored spec.
pub fn geometry(spec: &PotentialSpec) -> Result<WellGeometry> {
    geometry_of(&Profile::new(spec)?)
}

/// Classical turning points, `c < a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurningPoints {
    pub c: f64,
    pub a: f64,
    pub b: f64,
}

fn outer_root(f: impl Fn(f64) -> f64, from: f64, dir: f64) -> Result<f64> {
    let mut step = 0.5;
    let mut inner = from;
    for _ in 0..200 {
        let outer = inner + dir * step;
        if f(outer) > 0.0 {
            let (lo, hi) = if dir > 0.0 { (inner, outer) } else { (outer, inner) };
            return bisect(&f, lo, hi, ROOT_TOL);
        }
        inner = outer;
        step *= 1.5;
    }
    Err(Error::numeric("turning point bracket", 200))
}

fn left_turning_point(p: &Profile, geo: &WellGeometry, energy: f64) -> Result<f64> {
    outer_root(|x| p.value(x) - energy, geo.well_position, -1.0)
}

fn turning_points_of(p: &Profile, geo: &WellGeometry, energy: f64) -> Result<TurningPoints> {
    if !(energy > geo.well_energy && energy < geo.barrier_energy) {
        return Err(Error::NoTurningPoints { energy });
    }
    let c = left_turning_point(p, geo, energy)?;
    let a = bisect(
        |x| p.value(x) - energy,
        geo.well_position,
        geo.barrier_position,
        ROOT_TOL,
    )?;
    let b = outer_root(|x| energy - p.value(x), geo.barrier_position, 1.0)?;
    Ok(TurningPoints { c, a, b })
}

pub fn turning_points(spec: &PotentialSpec, energy: f64) -> Result<TurningPoints> {
    let p = Profile::new(spec)?;
    turning_points_of(&p, &geometry_of(&p)?, energy)
}

/// `(1/ħ) ∫_lo^hi √(2m(E − U)) dx` between two simple roots of `E − U`.
pub fn well_action(u: impl Fn(f64) -> f64, mass: f64, hbar: f64, energy: f64, lo: f64, hi: f64) -> Result<f64> {
    integrate_sqrt_endpoints_real(|x| (2.0 * mass * (energy - u(x))).max(0.0).sqrt(), lo, hi, QUAD_TOL)
        .map(|v| v / hbar)
}

/// `(1/ħ) ∫_lo^hi √(2m(U − E)) dx` across a barrier.
pub fn barrier_action(u: impl Fn(f64) -> f64, mass: f64, hbar: f64, energy: f64, lo: f64, hi: f64) -> Result<f64> {
    well_action(|x| 2.0 * energy - u(x), mass, hbar, energy, lo, hi)
}

/// How phase integrals are continued once `E` exceeds the barrier top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AboveBarrier {
    /// Refuse energies within [`BARRIER_TOP_MARGIN`] of the top or above it.
    Refuse,
    /// `S` from the complex turning-point pair, `X` up to the barrier maximum.
    #[default]
    BarrierTop,
    /// `S` as above, `X` as the real part of the integral continued to the
    /// complex turning point.
    ComplexContinuation,
}

/// Which exponential enters the Weber width formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaConvention {
    /// `κ = e^{+S}`: the width reduces to the Airy result for opaque barriers.
    #[default]
    Opaque,
    /// `κ = e^{−S}` as literally written in the connection matrix; tends to
    /// `2ħω/π` for opaque barriers.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WkbOptions {
    pub above_barrier: AboveBarrier,
    pub kappa: KappaConvention,
    /// Differentiate the Weber phase correction when computing `ħω`.
    pub include_phase_derivative: bool,
}

impl Default for WkbOptions {
    fn default() -> Self {
        Self {
            above_barrier: AboveBarrier::default(),
            kappa: KappaConvention::default(),
            include_phase_derivative: true,
        }
    }
}

/// `S = (1/ħ)∫_a^b ρ dx`, `X = (1/ħ)∫_c^a p dx` and `dX/dE`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionIntegrals {
    pub s: f64,
    pub x: f64,
    pub dx_de: f64,
}

/// Complex turning point above the barrier top (upper half plane).
fn complex_turning_point(p: &Profile, geo: &WellGeometry, energy: f64) -> Result<Complex64> {
    let k = p.curvature(geo.barrier_position).abs();
    let mut z = Complex64::new(geo.barrier_position, (2.0 * (energy - geo.barrier_energy) / k).sqrt());
    for it in 0..100 {
        let f = p.value_c(z) - energy;
        let d = p.slope_c(z);
        let dz = f / d;
        z -= dz;
        if !z.is_finite() {
            break;
        }
        if dz.norm() < 1e-14 * (1.0 + z.norm()) {
            if z.im <= 0.0 {
                z = z.conj();
            }
            if z.im == 0.0 {
                break;
            }
            return Ok(z);
        }
        if it == 99 {
            return Err(Error::numeric("complex turning point", 100));
        }
    }
    Err(Error::NoTurningPoints { energy })
}

fn phase_integrals(p: &Profile, geo: &WellGeometry, energy: f64, mode: AboveBarrier) -> Result<(f64, f64)> {
    let (m, hbar) = (p.params.mass, p.params.hbar);
    let u = |x: f64| p.value(x);
    if energy < geo.barrier_energy - BARRIER_TOP_MARGIN || (mode == AboveBarrier::Refuse && energy < geo.barrier_energy)
    {
        if mode == AboveBarrier::Refuse && energy > geo.barrier_energy - BARRIER_TOP_MARGIN {
            return Err(Error::NoTurningPoints { energy });
        }
        let tp = turning_points_of(p, geo, energy)?;
        let x = well_action(u, m, hbar, energy, tp.c, tp.a)?;
        let s = barrier_action(u, m, hbar, energy, tp.a, tp.b)?;
        return Ok((s, x));
    }
    if mode == AboveBarrier::Refuse {
        return Err(Error::NoTurningPoints { energy });
    }
    if energy <= geo.well_energy {
        return Err(Error::NoTurningPoints { energy });
    }
    let c = left_turning_point(p, geo, energy)?;
    let (s, x_end) = if energy <= geo.barrier_energy {
        // inside the margin: the real pair has (nearly) coalesced
        let tp = turning_points_of(p, geo, energy);
        match tp {
            Ok(tp) => (barrier_action(u, m, hbar, energy, tp.a, tp.b)?, tp.a),
            Err(_) => (0.0, geo.barrier_position),
        }
    } else {
        let b = complex_turning_point(p, geo, energy)?;
        let a = b.conj();
        let seg = b - a;
        // ρ = i √(2m(E − U)) on the principal branch along a → b
        let s = integrate_sqrt_endpoints(
            |t| {
                let z = a + seg * t;
                Complex64::i() * (2.0 * m * (energy - p.value_c(z))).sqrt() * seg
            },
            0.0,
            1.0,
            QUAD_TOL,
        )?;
        (s.re / hbar, b.re)
    };
    let x = match mode {
        AboveBarrier::ComplexContinuation if energy > geo.barrier_energy => {
            let b = complex_turning_point(p, geo, energy)?;
            let real = integrate_sqrt_endpoints_real(|x| p.momentum(energy, x), c, b.re, QUAD_TOL)?;
            let h = b.im;
            let vertical = integrate_sqrt_endpoints(
                |t| (2.0 * m * (energy - p.value_c(Complex64::new(b.re, t * h)))).sqrt() * Complex64::new(0.0, h),
                0.0,
                1.0,
                QUAD_TOL,
            )?;
            (real + vertical.re) / hbar
        }
        _ => {
            let end = if energy > geo.barrier_energy {
                geo.barrier_position
            } else {
                x_end
            };
            integrate_sqrt_endpoints_real(|x| p.momentum(energy, x), c, end, QUAD_TOL)? / hbar
        }
    };
    Ok((s, x))
}

fn actions_of(p: &Profile, geo: &WellGeometry, energy: f64, mode: AboveBarrier) -> Result<ActionIntegrals> {
    let (s, x) = phase_integrals(p, geo, energy, mode)?;
    let h = 1e-6 * energy.abs().max(1e-3);
    let (_, xp) = phase_integrals(p, geo, energy + h, mode)?;
    let (_, xm) = phase_integrals(p, geo, energy - h, mode)?;
    Ok(ActionIntegrals {
        s,
        x,
        dx_de: (xp - xm) / (2.0 * h),
    })
}

/// Phase integrals below the barrier top.
pub fn actions(spec: &PotentialSpec, energy: f64) -> Result<ActionIntegrals> {
    actions_with(spec, energy, AboveBarrier::Refuse)
}

/// Phase integrals with the chosen continuation above the barrier top.
pub fn actions_with(spec: &PotentialSpec, energy: f64, mode: AboveBarrier) -> Result<ActionIntegrals> {
    let p = Profile::new(spec)?;
    actions_of(&p, &geometry_of(&p)?, energy, mode)
}

/// Weber phase correction `φ(S) = arg Γ(½ + iS/π) − (S/π) ln|S/π| + S/π`.
pub fn weber_phase(s: f64) -> f64 {
    let y = s / PI;
    if y == 0.0 {
        return 0.0;
    }
    arg_gamma_half(y) - y * y.abs().ln() + y
}

pub fn weber_kappa(s: f64, convention: KappaConvention) -> f64 {
    match convention {
        KappaConvention::Opaque => s.exp(),
        KappaConvention::Literal => (-s).exp(),
    }
}

/// Connection formula used for a level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connection {
    Airy,
    Weber,
}

/// A quasi-bound level and its decay width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiclassicalLevel {
    pub n: usize,
    pub connection: Connection,
    pub energy: f64,
    pub hbar_omega: f64,
    pub s: f64,
    pub x: f64,
    /// Weber phase `φ` (0 for the Airy variant).
    pub phi: f64,
    pub kappa: f64,
    /// Decay rate `Γ` (per unit time).
    pub gamma: f64,
    pub above_barrier: bool,
}

/// `(ħω/2π) e^{−2S}`, as a rate.
pub fn gamma_airy(hbar_omega: f64, s: f64, hbar: f64) -> f64 {
    hbar_omega / (2.0 * PI) * (-2.0 * s).exp() / hbar
}

/// `(2ħω/π)(√(1+κ²) − κ)/(√(1+κ²) + κ)`, as a rate.
pub fn gamma_weber(hbar_omega: f64, kappa: f64, hbar: f64) -> f64 {
    let q = (1.0 + kappa * kappa).sqrt();
    // (q − κ)/(q + κ) = 1/(q + κ)² without cancellation
    2.0 * hbar_omega / PI / ((q + kappa) * (q + kappa)) / hbar
}

/// Root `E` of `phase(E) = (n + ½)π` between `lo` and `hi`, together with
/// `π / phase′(E)`.
pub fn solve_level(phase: impl Fn(f64) -> Result<f64>, n: usize, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let target = (n as f64 + 0.5) * PI;
    let g = |e: f64| phase(e).map(|v| v - target);
    let steps = 400;
    let de = (hi - lo) / steps as f64;
    let mut e0 = lo;
    let mut g0 = g(e0)?;
    let mut bracket = None;
    for i in 1..=steps {
        let e1 = lo + de * i as f64;
        let Ok(g1) = g(e1) else { break };
        if g0 <= 0.0 && g1 > 0.0 {
            bracket = Some((e0, e1));
            break;
        }
        e0 = e1;
        g0 = g1;
    }
    let (a, b) = bracket.ok_or(Error::LevelNotFound { n })?;
    let e = bisect(|e| g(e).unwrap_or(f64::NAN), a, b, 1e-14)?;
    let h = 1e-6 * e.abs().max(1e-3);
    let d = (g(e + h)? - g(e - h)?) / (2.0 * h);
    if !(d > 0.0) {
        return Err(Error::numeric("non-increasing phase at level", 0));
    }
    Ok((e, PI / d))
}

fn energy_window(p: &Profile, geo: &WellGeometry, mode: AboveBarrier) -> (f64, f64) {
    let depth = geo.barrier_energy - geo.well_energy;
    let lo = geo.well_energy + 1e-9 * depth.max(1e-12);
    let hi = match mode {
        AboveBarrier::Refuse => geo.barrier_energy - BARRIER_TOP_MARGIN,
        _ => geo.barrier_energy + 2.0 * depth + 2.0 * p.params.depth,
    };
    (lo, hi)
}

/// Level `n` from `X(E) = (n+½)π` with the Airy width.
pub fn quantize(spec: &PotentialSpec, n: usize, opts: &WkbOptions) -> Result<SemiclassicalLevel> {
    let p = Profile::new(spec)?;
    let geo = geometry_of(&p)?;
    let (lo, hi) = energy_window(&p, &geo, opts.above_barrier);
    let (e, hw) = solve_level(
        |e| phase_integrals(&p, &geo, e, opts.above_barrier).map(|v| v.1),
        n,
        lo,
        hi,
    )?;
    let (s, x) = phase_integrals(&p, &geo, e, opts.above_barrier)?;
    Ok(SemiclassicalLevel {
        n,
        connection: Connection::Airy,
        energy: e,
        hbar_omega: hw,
        s,
        x,
        phi: 0.0,
        kappa: (-s).exp(),
        gamma: gamma_airy(hw, s, p.params.hbar),
        above_barrier: e > geo.barrier_energy,
    })
}

/// Level `n` from `X(E) − φ(S(E))/2 = (n+½)π` with the Weber width.
pub fn quantize_weber(spec: &PotentialSpec, n: usize, opts: &WkbOptions) -> Result<SemiclassicalLevel> {
    let p = Profile::new(spec)?;
    let geo = geometry_of(&p)?;
    let (lo, hi) = energy_window(&p, &geo, opts.above_barrier);
    let modified = |e: f64| phase_integrals(&p, &geo, e, opts.above_barrier).map(|(s, x)| x - 0.5 * weber_phase(s));
    let (e, hw_mod) = solve_level(modified, n, lo, hi)?;
    let (s, x) = phase_integrals(&p, &geo, e, opts.above_barrier)?;
    let hw = if opts.include_phase_derivative {
        hw_mod
    } else {
        PI / actions_of(&p, &geo, e, opts.above_barrier)?.dx_de
    };
    let kappa = weber_kappa(s, opts.kappa);
    Ok(SemiclassicalLevel {
        n,
        connection: Connection::Weber,
        energy: e,
        hbar_omega: hw,
        s,
        x,
        phi: weber_phase(s),
        kappa,
        gamma: gamma_weber(hw, kappa, p.params.hbar),
        above_barrier: e > geo.barrier_energy,
    })
}

/// Widths of the lowest level over a range of slopes `m·a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub ma: f64,
    pub airy: Option<SemiclassicalLevel>,
    pub weber: Option<SemiclassicalLevel>,
    pub errors: Vec<String>,
}

pub fn gamma_table(params: &PhysicalParams, ma_values: &[f64], opts: &WkbOptions) -> Vec<GammaRow> {
    ma_values
        .par_iter()
        .map(|&ma| {
            let mut errors = Vec::new();
            let spec = mirror_for_wkb(&PotentialSpec::new(*params, ma / params.mass));
            let (airy, weber) = match spec {
                Ok(spec) => {
                    let airy = quantize(&spec, 0, opts)
                        .map_err(|e| errors.push(format!("airy: {e}")))
                        .ok();
                    let weber = quantize_weber(&spec, 0, opts)
                        .map_err(|e| errors.push(format!("weber: {e}")))
                        .ok();
                    (airy, weber)
                }
                Err(e) => {
                    errors.push(e.to_string());
                    (None, None)
                }
            };
            GammaRow {
                ma,
                airy,
                weber,
                errors,
            }
        })
        .collect()
}

/// Potential of a mirrored spec, for diagnostics.
pub fn mirrored_potential(spec: &PotentialSpec, x: f64) -> f64 {
    tilted_potential(spec, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_hamiltonian, energy_diagram};
    use crate::Grid;

    fn spec(m: f64, ma: f64) -> PotentialSpec {
        mirror_for_wkb(&PotentialSpec::new(PhysicalParams::with_mass(m).unwrap(), ma / m)).unwrap()
    }

    #[test]
    fn mirroring() {
        let s0 = PotentialSpec::new(PhysicalParams::default(), 0.2);
        let s1 = mirror_for_wkb(&s0).unwrap();
        assert_eq!(mirror_for_wkb(&s1).unwrap(), s0);
        for x in [-3.0, 0.4, 2.0] {
            assert_eq!(tilted_potential(&s1, x), tilted_potential(&s0, -x));
        }
        let g = geometry(&s1).unwrap();
        assert!(g.barrier_position > g.well_position && g.barrier_position > 0.0);
        assert!(geometry(&s0).is_err());
        assert!(matches!(
            mirror_for_wkb(&PotentialSpec::new(PhysicalParams::default(), 0.9)),
            Err(Error::NoMetastableWell { .. })
        ));
        // turning points of the unmirrored well are the negatives of the mirrored ones
        let tp = turning_points(&s1, -0.5).unwrap();
        for x in [tp.c, tp.a, tp.b] {
            assert!((tilted_potential(&s0, -x) + 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn turning_point_residuals_and_limits() {
        let s = spec(1.0, 0.2);
        let tp = turning_points(&s, -0.5).unwrap();
        assert!(tp.c < tp.a && tp.a < tp.b);
        for x in [tp.c, tp.a, tp.b] {
            assert!((tilted_potential(&s, x) + 0.5).abs() <= 1e-10);
        }
        let g = geometry(&s).unwrap();
        let near_min = turning_points(&s, g.well_energy + 1e-8).unwrap();
        assert!((near_min.a - near_min.c) < 1e-3);
        let near_top = turning_points(&s, g.barrier_energy - 1e-8).unwrap();
        assert!((near_top.b - near_top.a) < 1e-2);
        assert!(matches!(
            turning_points(&s, g.barrier_energy + 0.1),
            Err(Error::NoTurningPoints { .. })
        ));
        assert!(matches!(
            turning_points(&s, g.well_energy - 0.1),
            Err(Error::NoTurningPoints { .. })
        ));
    }

    #[test]
    fn harmonic_oracle() {
        let (m, w) = (2.0, 1.5);
        let u = |x: f64| 0.5 * m * w * w * x * x;
        for e in [0.3, 1.0, 4.0] {
            let r = (2.0 * e / (m * w * w)).sqrt();
            let x = well_action(u, m, 1.0, e, -r, r).unwrap();
            assert!((x - PI * e / w).abs() < 1e-8);
        }
        let phase = |e: f64| {
            let r = (2.0 * e / (m * w * w)).sqrt();
            well_action(u, m, 1.0, e, -r, r)
        };
        for n in 0..3 {
            let (e, hw) = solve_level(phase, n, 1e-6, 10.0).unwrap();
            assert!((e - w * (n as f64 + 0.5)).abs() < 1e-6);
            assert!((hw - w).abs() < 1e-6);
        }
    }

    #[test]
    fn linear_barrier_oracle() {
        let (m, f, e) = (3.0, 0.7, -1.2);
        let s = barrier_action(|x| -f * x, m, 1.0, e, 0.0, -e / f).unwrap();
        let want = 2.0 / 3.0 * (2.0 * m).sqrt() * e.abs().powf(1.5) / f;
        assert!((s - want).abs() < 1e-8);
    }

    #[test]
    fn action_monotone_in_tilt() {
        let mut last = f64::INFINITY;
        for ma in [0.1, 0.15, 0.2, 0.25] {
            let s = actions(&spec(1.0, ma), -0.6).unwrap().s;
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn actions_are_smooth() {
        let s = spec(10.0, 0.2);
        let g = geometry(&s).unwrap();
        let es: Vec<f64> = (1..40)
            .map(|i| g.well_energy + (g.barrier_energy - g.well_energy) * i as f64 / 40.0)
            .collect();
        let x: Vec<f64> = es.iter().map(|&e| actions(&s, e).unwrap().x).collect();
        let h = es[1] - es[0];
        for w in x.windows(3) {
            let d2 = (w[2] - 2.0 * w[1] + w[0]) / (h * h);
            assert!(d2.abs() < 1e3);
        }
    }

    #[test]
    fn quantization_residuals() {
        let s = spec(10.0, 0.1);
        let opts = WkbOptions::default();
        let lv = quantize(&s, 0, &opts).unwrap();
        assert!((lv.x - PI / 2.0).abs() <= 1e-8);
        let wb = quantize_weber(&s, 0, &opts).unwrap();
        assert!((wb.x - 0.5 * wb.phi - PI / 2.0).abs() <= 1e-8);
        assert!(lv.gamma > 0.0 && wb.gamma > 0.0 && lv.hbar_omega > 0.0);
    }

    #[test]
    fn ground_level_matches_lattice_branch() {
        // lowest lattice level localized in the well for small tilt
        let p = PhysicalParams::with_mass(10.0).unwrap();
        let ma = 0.05;
        let lv = quantize(&spec(10.0, ma), 0, &WkbOptions::default()).unwrap();
        let g = Grid::symmetric(10.0, 0.05).unwrap();
        let h = build_hamiltonian(&g, &PotentialSpec::new(p, ma / 10.0)).unwrap();
        let ed = h.matrix().eigenvalue_by_bisection(0).unwrap();
        assert!(((lv.energy - ed) / ed).abs() < 0.05, "{} vs {ed}", lv.energy);
        let _ = energy_diagram;
    }

    #[test]
    fn weber_limits() {
        let hw = 0.8;
        let want = 2.0 * hw / PI * (2f64.sqrt() - 1.0) / (2f64.sqrt() + 1.0);
        assert!((gamma_weber(hw, weber_kappa(0.0, KappaConvention::Opaque), 1.0) - want).abs() < 1e-15);
        for s in [4.0, 6.0, 10.0] {
            let r = gamma_weber(hw, weber_kappa(s, KappaConvention::Opaque), 1.0) / gamma_airy(hw, s, 1.0);
            assert!((0.9..=1.1).contains(&r), "S = {s}: {r}");
        }
        // literal convention tends to 2ħω/π
        let lit = gamma_weber(hw, weber_kappa(40.0, KappaConvention::Literal), 1.0);
        assert!((lit - 2.0 * hw / PI).abs() < 1e-12);
        assert!(weber_phase(200.0).abs() < 1e-3);
        assert!(weber_phase(0.0) == 0.0);
        assert!((weber_phase(-1.3) + weber_phase(1.3)).abs() < 1e-12);
        assert!(gamma_airy(hw, 50.0, 1.0) < 1e-40);
    }

    #[test]
    fn level_not_found() {
        // far more levels than the well holds
        let r = quantize(
            &spec(1.0, 0.2),
            30,
            &WkbOptions {
                above_barrier: AboveBarrier::Refuse,
                ..Default::default()
            },
        );
        assert!(matches!(r, Err(Error::LevelNotFound { n: 30 })));
    }

    #[test]
    fn airy_exceeds_weber_and_both_grow() {
        let rows = gamma_table(
            &PhysicalParams::default(),
            &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            &WkbOptions::default(),
        );
        let mut last = 0.0;
        for r in &rows {
            let w = r.weber.as_ref().unwrap_or_else(|| panic!("{:?}", r.errors));
            assert!(w.gamma > last, "ma = {}", r.ma);
            last = w.gamma;
        }
        for r in rows.iter().filter(|r| r.ma >= 0.5) {
            assert!(r.airy.unwrap().gamma > r.weber.unwrap().gamma);
        }
        let tiny = gamma_table(&PhysicalParams::default(), &[0.02], &WkbOptions::default());
        assert!(tiny[0].airy.unwrap().gamma < 1e-8);
    }
}
