//! Degenerating families of Abelian differentials on plumbed nodal curves
//! whose components are all Riemann spheres.
//!
//! The pipeline: describe a stable curve ([`curve`]), put a stable or twisted
//! differential on it ([`ratdiff`], [`twisted`]), solve the jump problem on
//! the plumbed surface ([`jump`]), then read off periods and period matrices
//! ([`period`]). [`closed_form`] and [`schottky`] provide independent
//! reference values.

pub mod closed_form;
pub mod curve;
pub mod kernel;
pub mod jump;
pub mod numerics;
pub mod period;
pub mod ratdiff;
pub mod scenario;
pub mod schottky;
pub mod twisted;
pub mod cli;

pub use num_complex::Complex64;

/// Shorthand for building a complex number.
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}
