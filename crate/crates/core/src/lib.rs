//! Equation-free patch scheme for heterogeneous visco-elastic beams.

pub mod coupling;
pub mod error;
pub mod hetero;
pub mod micro;
pub mod network;
pub mod solvers;

pub use error::{Error, Result};
