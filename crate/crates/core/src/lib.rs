//! Uncertainty-aware mutation analysis for object detectors.
//!
//! Records of an original model and its stochastic mutants (Monte Carlo
//! dropout and DropBlock variants), each executed `n` times per image, are
//! matched against each other and scored with image-level, object-level,
//! IoU-based and uncertainty-aware mutation scores. The [`stats`] module holds
//! the rank tests used to compare test suites and to correlate scores with
//! mutation ratios, and [`simulator`] provides a seeded synthetic detector.

pub mod analysis;
pub mod error;
pub mod geometry;
pub mod io;
pub mod matching;
pub mod report;
pub mod scores;
pub mod simulator;
pub mod stats;
pub mod suite;
pub mod types;
pub mod uncertainty;

pub use error::{Error, Result};
pub use types::{
    AnalysisConfig, BBox, Detection, GroundTruth, GroundTruthObject, ModelId, MutationConfig,
    Operator, RunOutput,
};
