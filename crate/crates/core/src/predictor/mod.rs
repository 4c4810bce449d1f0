//! Future-box predictors.
//!
//! Two implementations share the [`Predictor`] trait: a least-squares
//! constant-velocity baseline and a small goal-conditioned bidirectional
//! CVAE decoder ([`BitrapLite`]) whose parameters come from a
//! [`WeightContainer`].

mod bitrap;
mod cv;
mod nn;
mod weights;

use thiserror::Error;

use crate::geom::BoundingBox;
use crate::ingest::WindowPair;

pub use bitrap::{BitrapLite, DecodeOutput, LatentParams};
pub use cv::ConstantVelocity;
pub use nn::{Dense, Gru};
pub use weights::{required_tensors, TensorSpec, WeightContainer, WeightError, WEIGHT_MAGIC, WEIGHT_VERSION};

/// Lower bound applied to predicted widths and heights, in pixels.
pub const EPS_BOX: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("predictor config: {0}")]
    Config(String),
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error("non-finite activation at decoder step {step}")]
    Numeric { step: usize },
}

/// Network and horizon sizes. Recorded in the weight manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PredictorConfig {
    pub tau: usize,
    pub delta: usize,
    #[serde(rename = "hidden")]
    pub hidden_size: usize,
    #[serde(rename = "latent")]
    pub latent_dim: usize,
    #[serde(skip, default = "one")]
    pub num_samples: usize,
}

fn one() -> usize {
    1
}

impl PredictorConfig {
    pub fn new(tau: usize, delta: usize) -> Self {
        Self {
            tau,
            delta,
            hidden_size: 256,
            latent_dim: 32,
            num_samples: 1,
        }
    }

    pub fn with_dims(mut self, hidden_size: usize, latent_dim: usize) -> Self {
        self.hidden_size = hidden_size;
        self.latent_dim = latent_dim;
        self
    }

    pub fn validate(&self) -> Result<(), PredictError> {
        if self.tau == 0 || self.delta == 0 || self.hidden_size == 0 || self.latent_dim == 0 {
            return Err(PredictError::Config(format!("all sizes must be positive: {self:?}")));
        }
        if self.num_samples != 1 {
            return Err(PredictError::Config(
                "only deterministic K=1 inference is supported".into(),
            ));
        }
        Ok(())
    }
}

/// Predicted boxes for frames `t_last_observed + 1 ..= t_last_observed + delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub pedestrian_id: u64,
    pub t_last_observed: u64,
    pub boxes: Vec<BoundingBox>,
}

pub trait Predictor: Sync {
    fn name(&self) -> &'static str;

    /// Predicts `delta` boxes following `observed`. Output widths and heights
    /// are at least [`EPS_BOX`].
    fn predict(&self, observed: &[BoundingBox], delta: usize) -> Result<Vec<BoundingBox>, PredictError>;

    fn predict_window(&self, window: &WindowPair) -> Result<Prediction, PredictError> {
        Ok(Prediction {
            pedestrian_id: window.pedestrian_id,
            t_last_observed: window.t_last_observed,
            boxes: self.predict(&window.observed, window.delta())?,
        })
    }
}
