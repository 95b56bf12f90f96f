//! A memory-based learning toolkit for symbolic classification data.
//!
//! The crate stores training data as a deduplicated base of instance types
//! with token frequencies and builds everything else on top of that:
//!
//! * [`ib1`] — k-nearest-neighbor classification with the overlap metric,
//!   uniform or gain-ratio feature weights, and frequency-weighted voting;
//! * [`igtree`] — oblivious decision-trie induction with default classes and
//!   truncated paths, plus the classification-distance account of how much of
//!   a query each answer actually used;
//! * [`editing`] — typicality and class-prediction-strength scoring and
//!   percentage-level training-set editing experiments;
//! * [`analysis`] — friendly-neighbor clusters, support-set histograms,
//!   specificity-accuracy curves, condition tables, and k sweeps;
//! * [`stats`] — McNemar and paired-t significance tests;
//! * [`synth`] — a deterministic generator of datasets with rule regions,
//!   exception pockets, and label noise.

pub mod analysis;
pub mod dataset;
pub mod editing;
mod error;
pub mod ib1;
pub mod igtree;
pub mod metrics;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
