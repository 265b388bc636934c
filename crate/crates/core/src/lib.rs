//! Online classification for drifting, fault-prone chemical sensor arrays.
//!
//! * [`numerics`]: Fisher discriminant pre-selection and the per-sample
//!   three-criteria feature verdict.
//! * [`classifiers`]: k-NN, LDA and PLS-DA behind one fit/predict contract.
//! * [`uos`]: the online engine that selects features per sample, rebuilds
//!   the classifier on a template reservoir and adapts it with its own
//!   predictions.
//! * [`repair`]: replacement of failed sensors calibrated from the residual
//!   array's predictions.
//! * [`synth`], [`ingest`]: data sources.
//! * [`harness`]: fault injection and Monte Carlo experiments.

pub mod classifiers;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod numerics;
pub mod repair;
pub mod synth;
pub mod uos;

pub use dataset::{ClassId, Dataset, LabeledMatrix, Sample, SensorMap};
pub use error::{Error, Result};
