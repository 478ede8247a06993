//! MAUNet and MAUNet-Light for precipitation bias correction and
//! downscaling, with the statistical baselines and evaluation battery used to
//! compare them.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: masked rainfall fields, the GFB1 file layout, resampling and a
//!   seeded synthetic generator.
//! * [`nn`]: rank-4 tensors and hand-differentiated layers.
//! * [`models`]: MAU/USU units and the two network assemblies.
//! * [`training`]: Adam, early stopping and the teacher/student pipeline.
//! * [`baselines`]: quantile mapping and quantile delta mapping.
//! * [`evaluation`]: pooled and gridwise skill metrics and KL divergence.
//! * [`extremes`]: ETCCDI-style indices, threshold detection scores and
//!   skew-normal robustness probes.

pub mod baselines;
pub mod evaluation;
pub mod extremes;
pub mod error;
pub mod grid;
pub mod models;
pub mod nn;
pub mod training;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{Calendar, DayStamp, FieldSeries, GridField, GridSpec};
pub use models::{AnyModel, Architecture, MaunetLightModel, MaunetModel, Network};
pub use training::{predict_series, run_pipeline, train, PipelineResult, Predictor, TrainConfig, TrainedModel, Variant};
