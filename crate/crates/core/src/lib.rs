//! EMG-driven musculoskeletal forward dynamics and a physics-informed
//! surrogate that predicts wrist angle and muscle forces while identifying
//! subject-specific muscle parameters.

pub mod autodiff;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod joint;
pub mod muscle;
pub mod neural;
pub mod sweep;
pub mod train;

pub use error::{Error, Result};
