//! Numerical toolkit for transport equations driven by Osgood vector fields.
//!
//! The crate is organised by subsystem:
//!
//! * [`growth`]: admissible growth functions and iterated logarithms.
//! * [`modulus`]: moduli of continuity, Osgood integrals, `R`, `R⁻¹` and
//!   propagated moduli.
//! * [`acm`]: the cell cascade used to exhibit immediate loss of Sobolev
//!   regularity, its series conditions and a surrogate mixing field.
//! * [`fields`]: periodic grid fields, spectral norms, the weighted increment
//!   functional, the Lusin square function and modulus witnesses.
//! * [`flow`]: adaptive trajectory integration, back-to-label maps and
//!   semi-Lagrangian transport.
//! * [`interp`]: the logarithmic interpolation inequality and its pieces.
//! * [`euler`]: a pseudo-spectral 2D Euler solver and twin-run stability
//!   experiments.
//!
//! Shared numerical plumbing (quadrature, bracketing, FFTs, seeded RNG) lives
//! in [`quad`], [`roots`], [`spectral`] and [`rng`].

pub mod acm;
pub mod error;
pub mod euler;
pub mod fields;
pub mod flow;
pub mod growth;
pub mod interp;
pub mod modulus;
pub mod quad;
pub mod rng;
pub mod roots;
pub mod spectral;
pub mod stats;
pub mod table;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
