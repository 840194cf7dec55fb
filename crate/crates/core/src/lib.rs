//! Kuramoto oscillators on nearest-neighbor graphs and their continuum limit.
//!
//! The crate is organised around the pipeline used to study q-twisted states:
//!
//! * [`graphon`] builds the band graphon and its deterministic or random
//!   finite-n realisations.
//! * [`spectrum`] holds the closed-form linear stability theory of twisted
//!   states (χ₁, χ₂, the ζ constants and eigenvalue enumeration).
//! * [`bifurcation`] computes the bifurcation points κ_{ℓq} and the
//!   normal-form constants governing the reduced amplitude dynamics.
//! * [`dynamics`] integrates the finite-n model with an O(n) banded path,
//!   a CSR path for random graphs and the DOP853 integrator in [`ode`].
//! * [`analysis`] fits twisted states, extracts the first Fourier mode and
//!   measures distances modulo rotation.
//! * [`io`] reads and writes the CSV and binary artifacts.

pub mod analysis;
pub mod bifurcation;
pub mod dynamics;
mod error;
pub mod graphon;
pub mod io;
pub mod ode;
pub mod phase;
pub mod roots;
pub mod spectrum;

pub use error::{Error, Result};
