//! Regression from interval targets.
//!
//! Training data gives only bounds `[l, u]` on each regression target. This
//! crate provides the interval-compatible losses ([`loss`]), a synthetic
//! interval generator ([`intervalgen`]), Lipschitz-based interval reduction
//! ([`denoise`]), a small MLP with optional spectral normalization
//! ([`model`]), the training objectives built on them ([`objectives`]) and an
//! experiment harness ([`harness`]).

pub mod denoise;
pub mod error;
pub mod harness;
pub mod interval;
pub mod intervalgen;
pub mod loss;
pub mod model;
pub mod objectives;
pub mod rng;

pub use error::{Error, Result};
pub use interval::{Interval, IntervalDataset, IntervalSample};
pub use loss::LossFamily;
pub use objectives::{ObjectiveKind, ObjectiveSpec, TrainConfig, TrainedModel};
