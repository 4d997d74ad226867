//! Searchlight shared-response factor models for multi-subject 4D data.
//!
//! The library fits joint factorizations `X_i ≈ W_i S` (PCA, SRM, FastICA,
//! SR-ICA, SR-GICA) in every local cube neighborhood of a volume, selects the
//! best factor count per location, and validates the shared response with
//! time-segment matching and scene-recall classification, producing accuracy
//! and k maps.

pub mod error;
pub mod eval;
pub mod linalg;
pub mod models;
pub mod sweep;
pub mod synth;
pub mod volume;

mod binio;

pub use error::{Error, Result};
pub use linalg::Matrix;
