//! Temporal pose estimation from pressure-sensor sequences.
//!
//! A sequence of pressure frames is cut into space-time cubes, encoded by a
//! plain transformer, and decoded into per-joint heatmaps and depth maps from
//! which 3D keypoints are read out by soft-argmax. The encoder can be
//! pre-trained as a masked auto-encoder before supervised training.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below name the common instantiations.

pub mod checkpoint;
pub mod config;
pub mod dataio;
pub mod encoder;
pub mod error;
pub mod head;
pub mod mae;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod scalar;
pub mod tokenizer;
pub mod trainer;

pub use config::{ModelConfig, RunConfig, SkeletonSpec, TrainConfig};
pub use error::{Error, Result};
pub use head::{HeatmapStack, Keypoints};
pub use metrics::{LossBreakdown, LossWeights, MetricRow};
pub use model::PoseModel;
pub use scalar::Scalar;

pub type PoseModel32 = PoseModel<f32>;
pub type PoseModel64 = PoseModel<f64>;
pub type PressureSequence32 = dataio::PressureSequence<f32>;
pub type PressureSequence64 = dataio::PressureSequence<f64>;
pub type PoseSequence32 = dataio::PoseSequence<f32>;
pub type PoseSequence64 = dataio::PoseSequence<f64>;
