//! Polynomial chaos expansion for statistically dependent random variables
//! via Gaussian copulas, with dimension-reduced tensor-grid quadrature, and a
//! chance-constrained two-zone reserve procurement SOCP validated by
//! Monte-Carlo sampling.

pub mod basis;
pub mod copula;
pub mod distributions;
pub mod error;
pub mod linalg;
pub mod pce;
pub mod pipeline;
pub mod procurement;
pub mod quadrature;
pub mod scenario;
pub mod validation;

pub use error::{Error, Result};
