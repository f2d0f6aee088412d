//! Array signal processing and neural models for segment-level overlapped
//! speech detection on circular differential microphone arrays.
//!
//! The crate is `no_std` (with `alloc`). Everything here is a pure function
//! of its inputs; file formats, parallelism and the command line live in the
//! `beamosd` crate.

#![cfg_attr(all(not(feature = "std"), not(test)), no_std)]

extern crate alloc;

pub mod array;
pub mod beamformer;
pub mod dsp;
pub mod error;
pub mod features;
pub mod fft;
mod linalg;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod simulator;
pub mod spatial;
pub mod train;

pub use error::{Error, Result};

pub type Complex = num_complex::Complex<f64>;

pub mod prelude {
    pub use crate::array::{AngleGrid, ArrayGeometry, FrequencyGrid};
    pub use crate::beamformer::{BeamformerBank, ConstraintSet};
    pub use crate::dsp::{MelBank, MultiChannel, StftConfig};
    pub use crate::features::{FeatureConfig, FeatureExtractor, FeatureKind, SegmentFeatures};
    pub use crate::metrics::{compute_metrics, Metrics};
    pub use crate::models::{Model, ModelConfig, ModelInput, ModelKind};
    pub use crate::nn::{ParamSet, Tensor};
    pub use crate::simulator::{DatasetConfig, SceneSpec, SourceSpec};
    pub use crate::spatial::SpatialAnalyzer;
    pub use crate::train::{Detector, Example, TrainConfig};
    pub use crate::Complex;
}
