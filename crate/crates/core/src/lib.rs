//! Shoebox room acoustics with a configurable number of virtual
//! reverberation sources (VRS), rendered by VBAP onto spherical loudspeaker
//! arrays, plus the coherence and decay analysis used to evaluate them.

// `!(x > 0.0)` is used on purpose to reject NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod csv;
pub mod dsp;
pub mod error;
pub mod fdn;
pub mod geometry;
pub mod ism;
pub mod pipeline;
pub mod render;
pub mod scene;

pub use error::{Error, Result};
