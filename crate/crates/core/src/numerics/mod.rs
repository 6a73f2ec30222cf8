//! Small numerical kernels: quadrature, root bracketing, fitting and
//! derivative-free minimization.

pub mod fit;
pub mod minimize;
pub mod quadrature;
pub mod roots;
pub mod special;
