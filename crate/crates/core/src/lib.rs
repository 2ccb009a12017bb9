//! Behavioral simulator for digitally controlled low-dropout regulators.
//!
//! Two control schemes are modeled: a variable-shift controller driving a
//! thermometer-coded switch array from a symmetric comparator bank, and a
//! time-interleaved controller where `N` comparators sharing one reference
//! fire at staggered sub-phases of the clock. The [`engine`] integrates a
//! single regulated node exactly between controller events; [`grid`]
//! co-simulates several regulators on a resistive power grid with package
//! pads.

pub mod circuit;
pub mod config;
pub mod engine;
pub mod error;
pub mod grid;
pub mod interleave;
pub mod presets;
pub mod varshift;

pub use error::{Error, Result};
