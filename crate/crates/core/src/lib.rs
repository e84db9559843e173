//! Dynamic-image encoding of ordered slice stacks and a curriculum-trained
//! grouped-attention classifier.
//!
//! A volume of `T` slices is collapsed into one planar image by approximate
//! rank pooling ([`arp`]), then classified by a small convolutional network
//! ([`network`]) whose channel gates are unfrozen stage by stage as measured
//! feature complexity crosses calibrated thresholds ([`curriculum`]).

pub mod arp;
pub mod autodiff;
pub mod curriculum;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod metrics;
pub mod network;
pub mod synth;
pub mod train;
pub mod volume;

pub use arp::{
    arp_coefficients, encode, encode_arp, encode_baseline, encode_volume, CoefficientVector,
    DynamicImage, PoolingMethod, Sidecar,
};
pub use curriculum::{complexity, CurriculumState};
pub use error::{Category, Error, Result};
pub use metrics::MetricsReport;
pub use network::{build_model, Model, ModelSpec, StageSpec};
pub use synth::{gen_synthetic_volume, SynthSpec};
pub use train::{RunConfig, Task, TrainedModel};
pub use volume::{HistogramSpec, PlanarImage, Volume};
