//! Tridiagonal eigen- and linear solvers.

mod complex_symmetric;
mod symmetric;
mod thomas;

pub use complex_symmetric::{complex_symmetric_eigenvalues, ComplexSymTridiagonal};
pub use symmetric::{ql_implicit, SymTridiagonal};
pub use thomas::{solve_tridiagonal, solve_uniform_tridiagonal};
