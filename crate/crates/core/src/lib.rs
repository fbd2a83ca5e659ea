//! Faithfulness-evaluation toolkit: attribution methods, perturbation
//! baselines, Deletion/Insertion/SRG metrics with OOD and information-removal
//! tracking, a Fourier-phase feature-visualization baseline, and an exact
//! brute-force theory lab for linear models.

pub mod attribution;
pub mod autodiff;
pub mod baseline;
pub mod error;
pub mod featviz;
pub mod fft;
pub mod metrics;
pub mod model;
pub mod seeding;
pub mod stats;
pub mod tensor;
pub mod theory;

pub use attribution::{AttributionConfig, Explanation, Method};
pub use baseline::{BaselineContext, BaselineKind, DatasetStats};
pub use error::{Error, Result};
pub use fft::{Spectrum, SpectrumMagnitude};
pub use metrics::{FeatureIndex, MetricConfig, MetricKind, MetricTrace, ScoreMode};
pub use model::{Dataset, LinearModel, MlpModel, Model, TrainConfig};
pub use tensor::Tensor;
pub use theory::{BaselineRegime, OrderingVerdict, TheoryInstance};
