//! Attention-based multiple instance learning with a teacher/student
//! distillation scheme and hard positive instance mining.
//!
//! Everything runs on a small reverse-mode differentiation engine in
//! [`ad`]; [`data`] builds and stores synthetic bag datasets; [`train`]
//! holds the alternating optimization loop.

pub mod ad;
pub mod data;
pub mod error;
pub mod eval;
pub mod hpm;
pub mod labels;
pub mod models;
pub mod train;

pub use error::{Error, Result};
