//! Semi-supervised anomaly detection for intrapartum fetal heart rate (FHR)
//! recordings.
//!
//! The crate covers the whole experimental pipeline:
//!
//! * [`ingest`]: CSV recordings plus clinical metadata, labeled abnormal when
//!   umbilical pH < 7.20 and Apgar1 < 7.
//! * [`preprocess`]: physiological clipping, linear gap interpolation,
//!   median smoothing and fixed-length featurization.
//! * [`datasets`]: stratified train/validation/test splits and bootstrap
//!   resampling.
//! * [`nn`]: a small dense-network toolkit with exact backpropagation and Adam.
//! * Detectors: [`iforest`], [`ae`] (L1 autoencoder) and [`ganomaly`]
//!   (encoder-decoder-encoder with a cross-entropy discriminator).
//! * [`metrics`]: confusion-based scores for imbalanced data, PR/ROC curves and AUC.
//! * [`synth`]: a parametric FHR generator with ground-truth labels.
//! * [`experiment`]: config-driven end-to-end runs over several seeds.
//!
//! Every detector is trained on normal recordings only and flags a recording
//! whose anomaly score exceeds a threshold calibrated on training scores.
//!
//! ```no_run
//! use fetalguard::{synth, preprocess::{self, PreprocessConfig}};
//!
//! let data = synth::generate_dataset(20, 10, &synth::SynthParams::default(), 7).unwrap();
//! let cfg = PreprocessConfig::default();
//! let features: Vec<_> = data
//!     .iter()
//!     .map(|(rec, label)| preprocess::preprocess_pipeline(rec, *label, &cfg).unwrap())
//!     .collect();
//! assert_eq!(features[0].x.len(), cfg.feature_dim);
//! ```

pub mod ae;
pub mod config;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod ganomaly;
pub mod iforest;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod preprocess;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use ingest::{ClassLabel, ClinicalMetadata, SignalRecord};
pub use preprocess::FeatureVector;
