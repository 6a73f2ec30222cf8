//! Trap potential, its tilted co-moving form, and the analytic bound states
//! of the untilted well.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavefunction::WaveFunction;

/// Dimensionless physical constants.
///
/// `depth` is `V0`, the scale that multiplies the `tanh²` profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalParams {
    pub mass: f64,
    pub depth: f64,
    pub width: f64,
    pub hbar: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            depth: 1.0,
            width: 1.0,
            hbar: 1.0,
        }
    }
}

impl PhysicalParams {
    pub fn new(mass: f64, depth: f64, width: f64, hbar: f64) -> Result<Self> {
        let p = Self {
            mass,
            depth,
            width,
            hbar,
        };
        p.validate()?;
        Ok(p)
    }

    /// Unit depth, width and ħ with the given mass.
    pub fn with_mass(mass: f64) -> Result<Self> {
        Self::new(mass, 1.0, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mass", self.mass),
            ("depth", self.depth),
            ("width", self.width),
            ("hbar", self.hbar),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Dimensionless strength `2 m w² V0 / ħ²`.
    pub fn strength(&self) -> f64 {
        2.0 * self.mass * self.width * self.width * self.depth / (self.hbar * self.hbar)
    }
}

/// Uniform 1D mesh `x_j = x_min + j·dx`, `j = 0..n_points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_min: f64,
    dx: f64,
    n_points: usize,
}

impl Grid {
    /// Mesh covering `[x_min, x_max]`. The point count is
    /// `round((x_max − x_min)/dx) + 1`.
    pub fn new(x_min: f64, x_max: f64, dx: f64) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && dx.is_finite()) {
            return Err(Error::param("grid bounds must be finite"));
        }
        if dx <= 0.0 {
            return Err(Error::param(format!("dx must be positive, got {dx}")));
        }
        if x_max <= x_min {
            return Err(Error::param(format!("empty grid: x_max {x_max} <= x_min {x_min}")));
        }
        let n = ((x_max - x_min) / dx).round() as usize + 1;
        if n < 3 {
            return Err(Error::param(format!("grid needs at least 3 points, got {n}")));
        }
        Ok(Self { x_min, dx, n_points: n })
    }

    /// Mesh on `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, dx: f64) -> Result<Self> {
        Self::new(-half_width, half_width, dx)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.n_points - 1)
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n_points).map(move |j| self.x(j))
    }

    /// Index of the mesh point closest to `x`, clamped to the mesh.
    pub fn nearest_index(&self, x: f64) -> usize {
        let j = ((x - self.x_min) / self.dx).round();
        j.clamp(0.0, (self.n_points - 1) as f64) as usize
    }

    /// Same mesh up to round-off in the stored spacing.
    pub fn matches(&self, other: &Grid) -> bool {
        self.n_points == other.n_points
            && (self.dx - other.dx).abs() <= 1e-12 * self.dx
            && (self.x_min - other.x_min).abs() <= 1e-9 * self.dx.max(self.x_min.abs())
    }

    /// Sites within `margin` of either end.
    pub fn boundary_indices(&self, margin: f64) -> Vec<usize> {
        let k = ((margin / self.dx) + 1e-9).floor() as usize;
        let k = k.min((self.n_points - 1) / 2);
        let mut idx: Vec<usize> = (0..=k).collect();
        idx.extend((self.n_points - 1 - k)..self.n_points);
        idx.dedup();
        idx
    }
}

/// Which way the tilt points.
///
/// `Mirrored` evaluates the potential at `-x`, which turns the downhill side
/// from `x < 0` to `x > 0` without changing any physics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    #[default]
    Forward,
    Mirrored,
}

/// Well plus constant-acceleration tilt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub params: PhysicalParams,
    pub acceleration: f64,
    #[serde(default)]
    pub orientation: Orientation,
}

impl PotentialSpec {
    pub fn new(params: PhysicalParams, acceleration: f64) -> Self {
        Self {
            params,
            acceleration,
            orientation: Orientation::Forward,
        }
    }

    pub fn at_rest(params: PhysicalParams) -> Self {
        Self::new(params, 0.0)
    }

    pub fn mirrored(self) -> Self {
        Self {
            orientation: Orientation::Mirrored,
            ..self
        }
    }

    /// The tilt `m·a`.
    pub fn slope(&self) -> f64 {
        self.params.mass * self.acceleration
    }

    pub fn value(&self, x: f64) -> f64 {
        tilted_potential(self, x)
    }
}

/// `V0 [tanh²((x − x0)/w) − 1]`.
pub fn well_potential(params: &PhysicalParams, x: f64, x0: f64) -> f64 {
    let t = ((x - x0) / params.width).tanh();
    params.depth * (t * t - 1.0)
}

/// `V(x) + m·a·x`, evaluated at `-x` for the mirrored orientation.
pub fn tilted_potential(spec: &PotentialSpec, x: f64) -> f64 {
    let x = match spec.orientation {
        Orientation::Forward => x,
        Orientation::Mirrored => -x,
    };
    well_potential(&spec.params, x, 0.0) + spec.slope() * x
}

/// Largest slope `m·a` for which the tilted well keeps a local minimum.
///
/// The steepest point of `V0 tanh²(x/w)` has gradient
/// `(2V0/w) max t(1 − t²) = (2V0/w)·2/(3√3)`.
pub fn critical_slope(params: &PhysicalParams) -> f64 {
    2.0 * params.depth / params.width * 2.0 / (3.0 * 3f64.sqrt())
}

pub fn has_metastable_well(spec: &PotentialSpec) -> bool {
    spec.slope().abs() < critical_slope(&spec.params)
}

/// Closed-form bound-state energies of the untilted well, ascending.
pub fn bound_state_energies(params: &PhysicalParams) -> Vec<f64> {
    let s = (params.strength() + 0.25).sqrt();
    let scale = params.hbar * params.hbar / (2.0 * params.mass * params.width * params.width);
    (0..)
        .map(|n| s - (2 * n + 1) as f64 / 2.0)
        .take_while(|&b| b > 0.0)
        .map(|b| -scale * b * b)
        .collect()
}

/// Jacobi polynomial `P_n^{(α,α)}(ξ)` by the three-term recurrence.
pub fn jacobi_symmetric(n: usize, alpha: f64, xi: f64) -> f64 {
    let mut p_prev = 1.0;
    if n == 0 {
        return p_prev;
    }
    let mut p = (alpha + 1.0) * xi;
    for k in 2..=n {
        let k = k as f64;
        let s = 2.0 * k + 2.0 * alpha;
        let a = 2.0 * k * (k + 2.0 * alpha) * (s - 2.0);
        let b = (s - 1.0) * s * (s - 2.0) * xi;
        let c = 2.0 * (k + alpha - 1.0).powi(2) * s;
        let next = (b * p - c * p_prev) / a;
        p_prev = p;
        p = next;
    }
    p
}

/// Analytic level `n` of the untilted well, centred at `x = 0` and sampled on
/// `grid`, normalized with the grid inner product.
///
/// Even levels are positive at the centre; odd levels are positive on the
/// `x > 0` side.
pub fn bound_state_wavefunction(params: &PhysicalParams, n: usize, grid: &Grid) -> Result<WaveFunction> {
    bound_state_wavefunction_at(params, n, grid, 0.0)
}

/// As [`bound_state_wavefunction`] with the well centred at `x0`.
pub fn bound_state_wavefunction_at(params: &PhysicalParams, n: usize, grid: &Grid, x0: f64) -> Result<WaveFunction> {
    let energies = bound_state_energies(params);
    let e = *energies.get(n).ok_or(Error::InvalidLevel {
        level: n,
        count: energies.len(),
    })?;
    let alpha = (-2.0 * params.mass * params.width * params.width * e).sqrt() / params.hbar;
    let values: Vec<f64> = grid
        .points()
        .map(|x| {
            let u = (x - x0) / params.width;
            let xi = u.tanh();
            // (1 − ξ²)^{α/2} = sech^α, computed without cancellation in the tails
            let envelope = (-alpha * (u.abs() + (-2.0 * u.abs()).exp().ln_1p() - std::f64::consts::LN_2)).exp();
            envelope * jacobi_symmetric(n, alpha, xi)
        })
        .collect();
    let mut sign = 1.0;
    if n.is_multiple_of(2) && jacobi_symmetric(n, alpha, 0.0) < 0.0 {
        sign = -1.0;
    }
    let values: Vec<f64> = values.into_iter().map(|v| sign * v).collect();
    let mut wf = WaveFunction::from_real(*grid, &values)?;
    wf.normalize()?;
    Ok(wf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> PhysicalParams {
        PhysicalParams::default()
    }

    #[test]
    fn well_examples() {
        let p = unit();
        assert_eq!(well_potential(&p, 0.3, 0.3), -1.0);
        assert!(well_potential(&p, 60.0, 0.0).abs() < 1e-15);
        let t1 = 1f64.tanh();
        assert!((well_potential(&p, 1.0, 0.0) - (t1 * t1 - 1.0)).abs() < 1e-15);
        assert!((well_potential(&p, 1.0, 0.0) + 0.419974).abs() < 1e-6);
    }

    #[test]
    fn tilt_examples() {
        let spec = PotentialSpec::new(unit(), 0.2);
        assert_eq!(tilted_potential(&spec, 0.0), -1.0);
        let t5 = 5f64.tanh();
        assert!((tilted_potential(&spec, 5.0) - t5 * t5).abs() < 1e-15);
        assert!((tilted_potential(&spec, 5.0) - 0.999818).abs() < 1e-6);
        let m = spec.mirrored();
        assert_eq!(tilted_potential(&m, -5.0), tilted_potential(&spec, 5.0));
    }

    #[test]
    fn metastable_threshold() {
        assert!(has_metastable_well(&PotentialSpec::new(unit(), 0.2)));
        assert!(!has_metastable_well(&PotentialSpec::new(unit(), 0.9)));
        assert!(has_metastable_well(&PotentialSpec::new(unit(), 0.0)));
        // brute-force maximum of the well gradient
        let p = unit();
        let max_grad = (0..200_000)
            .map(|i| {
                let x = i as f64 * 1e-5;
                let t = x.tanh();
                2.0 * t * (1.0 - t * t)
            })
            .fold(0.0, f64::max);
        assert!((critical_slope(&p) - max_grad).abs() < 1e-8);
    }

    #[test]
    fn level_counts() {
        assert_eq!(bound_state_energies(&unit()), vec![-0.5]);
        assert_eq!(bound_state_energies(&PhysicalParams::with_mass(10.0).unwrap()).len(), 4);
        assert_eq!(bound_state_energies(&PhysicalParams::with_mass(1.0).unwrap()).len(), 1);
    }

    #[test]
    fn invalid_params() {
        assert!(PhysicalParams::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, -1.0, 1.0, 1.0).is_err());
        assert!(Grid::new(0.0, 0.1, 0.1).is_err());
        assert!(Grid::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn grid_layout() {
        let g = Grid::symmetric(10.0, 0.1).unwrap();
        assert_eq!(g.n_points(), 201);
        assert!((g.x(100)).abs() < 1e-12);
        assert!((g.x_max() - 10.0).abs() < 1e-12);
        assert_eq!(
            g.boundary_indices(0.5),
            vec![0, 1, 2, 3, 4, 5, 195, 196, 197, 198, 199, 200]
        );
        assert_eq!(g.nearest_index(0.04), 100);
    }

    #[test]
    fn jacobi_matches_explicit_low_orders() {
        // closed form from the Gegenbauer relation
        for &a in &[0.0, 0.5, 1.7, 3.0] {
            for &x in &[-0.9, -0.2, 0.0, 0.4, 1.0] {
                let p2 = (a + 2.0) / 4.0 * ((2.0 * a + 3.0) * x * x - 1.0);
                assert!((jacobi_symmetric(2, a, x) - p2).abs() < 1e-12);
            }
        }
        // Legendre at α = 0
        let x: f64 = 0.37;
        let p3 = 0.5 * (5.0 * x.powi(3) - 3.0 * x);
        assert!((jacobi_symmetric(3, 0.0, x) - p3).abs() < 1e-14);
    }

    #[test]
    fn wavefunction_parity_and_overlap() {
        let p = PhysicalParams::with_mass(10.0).unwrap();
        let g = Grid::symmetric(15.0, 0.005).unwrap();
        let w0 = bound_state_wavefunction(&p, 0, &g).unwrap();
        let w1 = bound_state_wavefunction(&p, 1, &g).unwrap();
        let c = g.nearest_index(0.0);
        assert!(w1.amplitudes()[c].norm() < 1e-12);
        assert!(w0.amplitudes().iter().all(|z| z.re >= 0.0 && z.im == 0.0));
        assert!(w0.inner(&w1).unwrap().norm() < 1e-10);
        assert!((w0.norm_sqr() - 1.0).abs() < 1e-12);
        assert!(bound_state_wavefunction(&p, 4, &g).is_err());
        for n in 0..4 {
            let w = bound_state_wavefunction(&p, n, &g).unwrap();
            let parity = if n % 2 == 0 { 1.0 } else { -1.0 };
            let a = w.amplitudes();
            for j in 0..g.len() {
                let mirror = g.len() - 1 - j;
                assert!((a[j].re - parity * a[mirror].re).abs() < 1e-12);
            }
            if n % 2 == 0 {
                assert!(a[c].re > 0.0);
            }
        }
    }

    #[test]
    fn wavefunction_solves_schrodinger_equation() {
        // finite-difference residual of −ħ²/2m ψ'' + Vψ − eψ on a fine mesh
        let p = PhysicalParams::with_mass(10.0).unwrap();
        let g = Grid::symmetric(8.0, 1e-3).unwrap();
        let es = bound_state_energies(&p);
        for (n, &e) in es.iter().enumerate() {
            let w = bound_state_wavefunction(&p, n, &g).unwrap();
            let a = w.amplitudes();
            let mut worst: f64 = 0.0;
            for j in 1..g.len() - 1 {
                let lap = (a[j + 1].re - 2.0 * a[j].re + a[j - 1].re) / (g.dx() * g.dx());
                let r = -lap / (2.0 * p.mass) + (well_potential(&p, g.x(j), 0.0) - e) * a[j].re;
                worst = worst.max(r.abs());
            }
            assert!(worst < 1e-4, "level {n}: residual {worst}");
        }
    }

    proptest! {
        #[test]
        fn untilted_equals_well(x in -50.0f64..50.0, m in 0.1f64..50.0) {
            let p = PhysicalParams::with_mass(m).unwrap();
            let spec = PotentialSpec::at_rest(p);
            prop_assert_eq!(tilted_potential(&spec, x), well_potential(&p, x, 0.0));
        }

        #[test]
        fn tilt_is_exact(x in -50.0f64..50.0, a in 0.0f64..1.0) {
            let p = unit();
            let spec = PotentialSpec::new(p, a);
            prop_assert_eq!(tilted_potential(&spec, x), well_potential(&p, x, 0.0) + a * x);
        }

        #[test]
        fn levels_inside_well(m in 0.05f64..200.0, depth in 0.1f64..5.0) {
            let p = PhysicalParams::new(m, depth, 1.0, 1.0).unwrap();
            let es = bound_state_energies(&p);
            prop_assert!(!es.is_empty());
            for w in es.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
            for e in es {
                prop_assert!(e > -depth && e < 0.0);
            }
        }

        #[test]
        fn metastability_monotone(a in 0.0f64..2.0, b in 0.0f64..2.0, m in 0.1f64..10.0) {
            let p = PhysicalParams::with_mass(m).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if has_metastable_well(&PotentialSpec::new(p, hi)) {
                prop_assert!(has_metastable_well(&PotentialSpec::new(p, lo)));
            }
        }

        #[test]
        fn well_is_even_and_bounded(x in -30.0f64..30.0, x0 in -5.0f64..5.0) {
            let p = unit();
            let v = well_potential(&p, x0 + x, x0);
            prop_assert!((-1.0..0.0).contains(&v) || (v == 0.0 && x.abs() > 15.0));
            prop_assert!((v - well_potential(&p, x0 - x, x0)).abs() < 1e-14);
        }
    }
}
