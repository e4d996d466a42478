//! Data-driven output matching for output-generalized bilinear systems.
//!
//! The crate is organised bottom-up:
//!
//! * [`signal`]: trajectories, partitioning and seeded excitation.
//! * [`numlin`]: rank decisions, pseudo-inverses and minimal parameterizations.
//! * [`hankel`]: block Hankel matrices, rank conditions and data-length formulas.
//! * [`ogb`]: the model class, additional inputs and the pulse-probing matrix.
//! * [`matcher`]: the output-matching solver.
//! * [`lpv`]: affine LPV systems and their embedding into the model class.
//! * [`structest`]: structure estimation from a shallow Hankel matrix.
//! * [`plants`]: ground-truth simulators and the RRMSE metric.
//! * [`experiment`]: end-to-end benchmark runners shared by the CLI and tests.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod hankel;
pub mod lpv;
pub mod matcher;
pub mod numlin;
pub mod ogb;
pub mod plants;
pub mod signal;
pub mod structest;

pub use error::{Error, Result};
