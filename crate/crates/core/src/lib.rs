//! Simulation and certification of time-bin entangled photon pairs measured
//! through programmable fiber-loop quantum walks.
//!
//! Everything here is `no_std` with `alloc`; file formats, the CLI and
//! parallel ensembles live in the `timebin-cert` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;

pub mod certify;
pub mod four_photon;
pub mod sampling;
pub mod scheme;
pub mod state;
pub mod walk;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
