//! Survival of a quantum particle carried by a moving potential well.
//!
//! The particle sits in a `V0 [tanh²((x − x0(t))/w) − 1]` trap whose centre is
//! moved along a schedule `x0(t)`. In the co-moving frame an acceleration
//! shows up as a linear tilt `m·a·x`, and the trapped population leaks out by
//! tunnelling. The crate estimates that leakage four ways:
//!
//! * [`spectral`]: exact diagonalization of the tilted lattice Hamiltonian and
//!   the dephasing sum over its eigenstates;
//! * [`propagator`]: Crank–Nicolson time stepping, optionally with a complex
//!   absorbing layer;
//! * [`semiclassics`]: WKB phase integrals with Airy and Weber connection
//!   formulas;
//! * [`resonance`]: the complex (Siegert) eigenvalue of the lattice problem with
//!   outgoing exterior closures.
//!
//! [`protocols`] builds complete conveyance schedules on top of these.
//!
//! All quantities are dimensionless; with the defaults `V0 = w = ħ = 1` the
//! only free parameters are the mass `m` and the acceleration `a`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod linalg;
pub mod model;
pub mod numerics;
pub mod propagator;
pub mod protocols;
pub mod resonance;
pub mod semiclassics;
pub mod spectral;
pub mod wavefunction;

pub use error::{Error, Result};
pub use model::{Grid, Orientation, PhysicalParams, PotentialSpec};
pub use wavefunction::WaveFunction;

pub use num_complex::Complex64;
