//! Approximate two-soliton solutions and soliton collision experiments for
//! the Benjamin-Bona-Mahony equation `(1 - ∂²) u_t + ∂(u + u²) = 0`.

pub mod approx;
pub mod banded;
pub mod collision;
pub mod error;
pub mod expansion;
pub mod fit;
pub mod grid;
pub mod integrator;
pub mod omega;
pub mod operator;
pub mod profile;
pub mod solitons;
pub mod spectral;
pub mod suites;

pub use error::{Error, Result};
pub use grid::{Grid, GridFunction, GridKind};
pub use solitons::{SolitonState, SpeedParams};
