//! Multimode circuit model of coplanar-waveguide resonator lattices:
//! normal modes, Bloch bands, tight-binding comparison, transmon couplings
//! and four-wave-mixing estimates.

pub mod bands;
pub mod bloch;
pub mod circuit;
pub mod device;
pub mod error;
pub mod mixing;
pub mod modes;
pub mod presets;
pub mod saturation;
pub mod tight_binding;
pub mod transmon;
pub mod units;

pub use error::{Error, Result};
