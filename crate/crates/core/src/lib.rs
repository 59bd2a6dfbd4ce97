//! Continuous weak measurement of qudits, complementary-basis feedback and
//! the resulting purification speed-up.

pub mod analytic;
pub mod basis_search;
pub mod checks;
pub mod error;
pub mod feedback;
pub mod qcore;
pub mod quad;
pub mod rng;
pub mod trajectories;
pub mod wigner;

pub use error::{QpError, QpResult};
pub use num_complex::Complex64 as C64;
