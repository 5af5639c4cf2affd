//! Face detection pipeline: skin-color search-space reduction, an extended
//! Haar feature Adaboost cascade for candidate detection, and a two-stage
//! Extended-LBP + linear SVM validator that rejects false alarms.
//!
//! Every stage is a pure function over immutable rasters, so models and
//! images can be shared freely across worker threads.

pub mod config;
mod error;
pub mod eval;
pub mod exlbp;
pub mod geom;
pub mod haar;
pub mod image;
pub mod pipeline;
pub mod skin;

pub use error::{Error, Result};
pub use geom::Rect;
