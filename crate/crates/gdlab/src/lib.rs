//! Numerical laboratory for gradient descent on multiscale objectives:
//! deterministic chaos onset, Lyapunov exponents, rescaled-Gibbs invariant
//! statistics, bifurcations, and well-escape behavior.

pub mod chaos;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod objective;
pub mod stats;

pub use error::{Error, Result};
