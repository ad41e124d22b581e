//! Petal-based cross-view localization: petal geometry and LUTs, feature
//! aggregation, circular orientation matching, multi-scale search,
//! synthetic scenes and evaluation metrics.

pub mod angle;
pub mod error;
pub mod features;
pub mod geometry;
pub mod matchmaker;
pub mod metrics;
pub mod search;
pub mod synthworld;

pub use error::{Error, Result};
