//! Level-set percolation of the discrete Gaussian free field on `Z^d`, `d ≥ 3`:
//! lattice geometry, potential theory, field samplers, disconnection
//! estimators and the random-interlacement comparison.

pub mod error;
pub mod experiments;
pub mod gff;
pub mod interlace;
pub mod lattice;
pub mod linalg;
pub mod percolation;
pub mod potential;
pub mod rng;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
