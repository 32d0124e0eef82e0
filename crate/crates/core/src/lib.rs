//! Pseudo-spectral simulator and verification toolkit for the normalized
//! two-dimensional Euler-Poisson electron-fluid system on a square torus.
//!
//! The crate is organized bottom-up:
//!
//! * [`spectral`]: grid, transforms, Fourier multipliers and the Poisson solve.
//! * [`lp`]: Littlewood-Paley cutoffs, physical localizers and the `H^N`, `X`, `Z` norms.
//! * [`dynamics`]: plasma state, nonlinearity, the profile integrator and diagnostics.
//! * [`normal_form`]: phases, quadratic multipliers, boundary and bulk terms.
//! * [`paradiff`]: Weyl paradifferential operators and the quartic energy.
//! * [`dispersion`]: linear Klein-Gordon experiments.
//! * [`harness`]: run configuration, persistence, scans, reports and `verify`.

pub mod dispersion;
pub mod dynamics;
pub mod error;
pub mod fit;
pub mod harness;
pub mod lp;
pub mod normal_form;
pub mod paradiff;
pub mod snapshot;
pub mod spectral;

pub use error::{Error, Result};
pub use spectral::{Multiplier, PhysicalField, SpectralField, TorusGrid};
