//! Limiting spectral distributions for sample covariance matrices built from
//! independent but non-identically distributed columns.
//!
//! The crate is organized bottom-up:
//!
//! * [`measures`]: discrete/empirical measures and CDF distances
//! * [`spectra`]: Gram matrices, a dense symmetric eigensolver, ESDs
//! * [`simulate`]: seeded generators for the seven model families
//! * [`kernel`]: the fixed-point solver and Stieltjes inversion
//! * [`theory`]: model-to-equation mapping and closed-form residual checks
//! * [`compare`]: empirical vs theoretical agreement reports

pub mod compare;
pub mod error;
pub mod kernel;
pub mod measures;
pub mod simulate;
pub mod spectra;
pub mod theory;

pub use error::{Error, Result};
