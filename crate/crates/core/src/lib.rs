//! Numerical laboratory for critical thresholds of the relaxation system
//!
//! ```text
//! rho_t + (rho f(rho, u))_x = 0
//! u_t + u u_x = rho (f(rho, u) - u)
//! ```
//!
//! classifying initial data as globally regular or blowing up, and checking
//! the a-priori bounds against direct numerical solutions.

// `!(x >= y)` is used on purpose so that NaN fails the test
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod characteristics;
pub mod closures;
pub mod error;
pub mod grid;
pub mod ode;
pub mod profile;
pub mod quadrature;
pub mod scenario;
pub mod thresholds;

pub use error::{LabError, Result};
