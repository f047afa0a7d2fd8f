//! Direction-of-arrival estimation for a uniform sparse array of rotatable
//! directional antennas.
//!
//! Received samples over `M` synchronized rotations form an `N × M × T`
//! tensor. A CP decomposition separates the per-target array, gain and signal
//! factors; correlating the Kronecker product of each array/gain column pair
//! against the model removes the grating-lobe ambiguity of the sparse array.
//! Conventional MUSIC baselines and a Monte Carlo harness are included.

pub mod array_model;
pub mod cli;
pub mod config;
pub mod cp;
pub mod doa;
pub mod error;
pub mod eval;
pub mod music;
pub mod scene;
pub mod tensor;

pub use error::{Error, Result};
