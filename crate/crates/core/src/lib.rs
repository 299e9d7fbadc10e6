//! Operator intention detection from multichannel robot-arm traces.
//!
//! The crate covers the whole pipeline:
//!
//! - [`numerics`]: dense-array layer primitives (1D convolution, max pooling,
//!   dense, ReLU, batch normalization, softmax, cross-entropy losses) with
//!   exact backward passes and a finite-difference gradient checker.
//! - [`dataset`]: CSV trace ingestion, filename labeling, zero padding,
//!   per-channel standardization, stratified splitting, binary relabeling,
//!   dataset fusion and a seeded synthetic trace generator.
//! - [`model`]: the stacked conv/pool/batchnorm/dense network, its training
//!   loop and the `INTC` binary parameter format.
//! - [`evaluation`]: confusion matrices, per-class and macro F1, and the
//!   experiment runner with text/CSV reports.
//! - [`online`]: sliding-window streaming classification.
//! - [`config`]: the flat `key = value` configuration format shared by all
//!   of the above.

pub mod config;
pub mod dataset;
mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod online;

pub use config::FlatConfig;
pub use dataset::{LabeledDataset, Sample, SplitSpec, StandardizationStats, SynthSpec, Trace};
pub use error::{Error, Result};
pub use evaluation::{ConfusionMatrix, EvaluationReport, ExperimentSpec};
pub use model::{NetworkConfig, NetworkParams, TrainConfig, TrainHistory};
pub use numerics::{FeatureMap, KernelBank, Real};
pub use online::{StreamClassifier, StreamPrediction, WindowConfig};
