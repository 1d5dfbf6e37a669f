//! OVSF-basis weight compression, a cycle-granular model of an on-the-fly
//! weights generator feeding a tiled GEMM engine, and the analytical
//! performance/resource models used to explore accelerator configurations.
//!
//! The crate is organised bottom-up:
//!
//! - [`ovsf`]: Sylvester–Hadamard code sets and bit-packed codes.
//! - [`compress`]: projection of pretrained filters onto the basis, greedy
//!   truncation, 3×3 representation operators, parameter counting.
//! - [`model`]: layer/model/platform/schedule descriptors, builtin presets,
//!   text formats and the binary weights container.
//! - [`wgen`]: Alpha buffer geometry, OVSF FIFO + aligner and the tiled
//!   weights-generation reference and simulator.
//! - [`engine`]: im2col, direct convolution, tiled GEMM and PE-array cycle
//!   models including input-selective PEs.
//! - [`perf`], [`resources`], [`dse`]: analytical models and exhaustive search.
//! - [`report`]: CSV / markdown rendering of estimates and sweeps.

pub mod compress;
pub mod dse;
pub mod engine;
pub mod error;
pub mod fixed;
pub mod matrix;
pub mod model;
pub mod ovsf;
pub mod perf;
pub mod report;
pub mod resources;
pub mod wgen;

pub use error::{Error, Result};
