//! Classical sequence predictors and the external-predictor protocol.
//!
//! Every predictor maps the `N` input frames of a [`GridSequence`] to `P`
//! future frames. They are deterministic, and the motion-aware ones reduce
//! exactly to persistence when no motion is estimated.

mod advect;
mod external;
mod warp;

pub use advect::{estimate_flow, predict_advect, AdvectParams, Flow, MotionScale};
pub use external::{run_external, run_external_sequence, ExternalOutcome};
pub use warp::{extrapolate_poses, predict_ego_warp, warp_image};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::image::GridImage;
use crate::sequence::GridSequence;
use crate::{Error, Result};

/// Predicted future frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub frames: Vec<GridImage>,
    pub predictor_id: String,
    /// Seconds spent producing the frames.
    pub wall_time: f64,
    /// Notes such as fallbacks taken.
    pub flags: Vec<String>,
}

impl Prediction {
    pub fn horizon(&self) -> usize {
        self.frames.len()
    }

    /// Checks frame count, dimensions and value ranges against a request.
    pub fn validate(&self, horizon: usize, dims: (usize, usize)) -> Result<()> {
        if self.frames.len() != horizon {
            return Err(Error::Data(format!(
                "{}: expected {horizon} frames, got {}",
                self.predictor_id,
                self.frames.len()
            )));
        }
        for (k, f) in self.frames.iter().enumerate() {
            if f.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    actual: f.dims(),
                });
            }
            if !f.is_valid() {
                return Err(Error::Data(format!(
                    "{}: frame {k} has channel values outside [0, 1] or sums above 1",
                    self.predictor_id
                )));
            }
        }
        Ok(())
    }
}

/// Repeats the last input `p` times.
pub fn predict_persistence(inputs: &[GridImage], p: usize) -> Result<Prediction> {
    let start = Instant::now();
    let last = inputs
        .last()
        .ok_or_else(|| Error::InvalidArgument("persistence needs at least one input frame".into()))?;
    Ok(Prediction {
        frames: (1..=p).map(|k| GridImage { t: last.t + k, ..last.clone() }).collect(),
        predictor_id: Predictor::Persistence.id().into(),
        wall_time: start.elapsed().as_secs_f64(),
        flags: Vec::new(),
    })
}

/// Built-in predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Predictor {
    Persistence,
    Advect,
    EgoWarp,
}

impl Predictor {
    pub const ALL: [Predictor; 3] = [Predictor::Persistence, Predictor::Advect, Predictor::EgoWarp];

    pub fn id(self) -> &'static str {
        match self {
            Predictor::Persistence => "persistence",
            Predictor::Advect => "advect",
            Predictor::EgoWarp => "ego-warp",
        }
    }

    /// Whether the predictor applies to sequences of `variant`.
    pub fn supports(self, variant: crate::sequence::Variant) -> bool {
        self != Predictor::EgoWarp || variant == crate::sequence::Variant::Ego
    }

    /// Predicts `p` frames after the inputs of `seq`.
    pub fn predict(self, seq: &GridSequence, p: usize, params: &AdvectParams) -> Result<Prediction> {
        match self {
            Predictor::Persistence => predict_persistence(&seq.inputs, p),
            Predictor::Advect => predict_advect(&seq.inputs, p, params, MotionScale::of(seq)),
            Predictor::EgoWarp => predict_ego_warp(seq, p, params),
        }
    }
}

impl std::fmt::Display for Predictor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for Predictor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Predictor::ALL
            .into_iter()
            .find(|p| p.id() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown predictor '{s}' (persistence|advect|ego-warp)")))
    }
}
