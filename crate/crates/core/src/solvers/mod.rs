//! Time integration, Jacobian assembly, eigen-analysis and Krylov equilibrium solves.

pub mod eigen;
pub mod jacobian;
pub mod krylov;
pub mod ode;
