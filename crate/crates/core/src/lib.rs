//! Transient full counting statistics of bath observables for open quantum
//! systems, computed with a counting-field resolved hierarchy of equations of
//! motion.
//!
//! The crate is `no_std` (with `alloc`). Everything that touches the file
//! system or the command line lives in the companion `fcs-heom` crate.
//!
//! Module map:
//!
//! * [`model`]: system Hamiltonian, couplings, baths, validation.
//! * [`correlation`]: bath correlation functions, exponential decompositions
//!   and counting-field derivative tables.
//! * [`hierarchy`]: auxiliary-field multi-indices, partition coefficients.
//! * [`propagator`]: right-hand side assembly and time integration.
//! * [`statistics`]: moments, cumulants, transport coefficients and the
//!   transient fluctuation relations.
//! * [`oracle`]: exact finite-mode references and the weak-coupling limit.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod cmat;
pub mod correlation;
pub mod error;
pub mod hierarchy;
pub mod model;
pub mod oracle;
pub mod propagator;
pub mod quad;
pub mod special;
pub mod statistics;

pub use cmat::CMat;
pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Imaginary unit.
pub const I: C64 = C64::new(0.0, 1.0);
