//! Self-paced curriculum training for text-row detection when training
//! annotations are incomplete.
//!
//! Pages are ordered by how many labeled rows they carry, consumed in `k`
//! batches, and each batch not yet trained on is enriched with the current
//! model's predictions (merged by NMS that never removes ground truth).
//!
//! Box arithmetic, metrics and the logistic model math are generic over
//! [`Scalar`] (`f32` or `f64`); the pipeline itself runs on the `f64`
//! aliases below.

pub mod curriculum;
pub mod dataset;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod geometry;
pub mod orchestrator;
pub mod pgm;
pub mod scalar;
pub mod seeding;
pub mod synthgen;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;

/// Boxes used throughout the pipeline.
pub type BBox = geometry::BBox<f64>;
/// Single-precision boxes.
pub type BBox32 = geometry::BBox<f32>;
/// Per-page matching results in pipeline precision.
pub type PageMatch = evaluation::PageMatch<f64>;
/// Logistic parameters in pipeline precision.
pub type LogisticParams = detector::LogisticParams<f64>;
