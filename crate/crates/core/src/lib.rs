//! Simulation and analysis toolkit for nested two-mirror multipass delay cells
//! used as all-optical photon buffers.
//!
//! The crate is split along the physical pipeline:
//!
//! - [`geometry`]: exact 3D ray tracing of the nested cell, ring analysis,
//!   Gaussian-beam spot sizes and the reference-injection search.
//! - [`delay`]: delay times, retrieval efficiency, coating reflectance,
//!   time-bandwidth product and fiber comparison curves.
//! - [`channel`]: the cell as a single-qubit polarization channel (Jones,
//!   Kraus, process matrix), fidelities and fringe visibility.
//! - [`tomography`]: coincidence-count simulation, linear and
//!   maximum-likelihood state tomography, process tomography and
//!   delay histograms.
//! - [`io`]: run configuration, CSV/JSON/SVG serialization used by the CLI.

pub mod channel;
pub mod delay;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod tomography;

pub use error::{Error, Result};

/// Vacuum speed of light in millimetres per nanosecond.
pub const SPEED_OF_LIGHT_MM_PER_NS: f64 = 299.792_458;

/// Vacuum speed of light in metres per second.
pub const SPEED_OF_LIGHT_M_PER_S: f64 = 299_792_458.0;
