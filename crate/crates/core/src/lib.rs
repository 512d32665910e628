//! Numerical laboratory for the SU(N+1) open Toda system and its
//! Moser–Trudinger functional on the flat unit-area torus.
//!
//! * [`grid`]: periodic grid, spectral calculus, stable exponential integrals.
//! * [`cartan`]: the Cartan matrix, `Λ_J` and the `4π` threshold.
//! * [`functional`]: energy, gradient and Euler–Lagrange residual.
//! * [`minimizer`]: preconditioned descent, boundedness classification, sweeps.
//! * [`bubbles`]: the concentrating test family and the Liouville profile.
//! * [`radial`]: radial entire solutions on the plane and their identities.
//! * [`pohozaev`]: local Pohozaev balance on torus disks.
//! * [`cli`]: configuration, command dispatch and report emission.

pub mod bubbles;
pub mod cartan;
pub mod cli;
pub mod error;
pub mod functional;
pub mod grid;
pub mod minimizer;
pub mod pohozaev;
pub mod quadrature;
pub mod radial;

pub use error::{Error, Result};
