//! Preprocessing pipeline for SMART-based disk failure prediction.
//!
//! The crate turns daily SMART logs and failure tickets into a labeled
//! training set and evaluates tree-ensemble classifiers on it:
//!
//! - [`ingest`] / [`data`]: canonical per-disk daily series and tickets.
//! - [`analysis`]: failure rates, data-missing ratios, missing gaps.
//! - [`typefilter`]: rank attributes by Spearman correlation and keep only
//!   failure types whose SMART distributions differ from healthy disks.
//! - [`filling`]: fill missing days by local cubic spline (or ffill/linear).
//! - [`backtrack`]: locate the pre-failure period with Bayesian online
//!   change-point detection and label samples with backtracking and
//!   observation windows.
//! - [`features`]: basic, difference and windowed statistical features.
//! - [`model`]: gradient-boosted trees and random forests.
//! - [`eval`]: disk-level TPR at a fixed FPR budget, sliding runs.
//! - [`synth`]: seeded synthetic fleets with ground truth.
//! - [`pipeline`]: end-to-end orchestration with stage manifests.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default) and fall back to plain iterators otherwise. Results are
//! identical either way.

pub mod analysis;
pub mod backtrack;
pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod features;
pub mod filling;
pub mod hashing;
pub mod ingest;
pub mod model;
pub mod numstats;
pub mod pipeline;
pub mod synth;
pub mod typefilter;

pub use data::{Dataset, Day, DiskSeries, FailureType, SmartSample, TicketEvent};
pub use error::{Error, Result};
