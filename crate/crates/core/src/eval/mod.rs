//! Prediction scoring: weighted channel loss, per-channel MSE and SSIM,
//! aggregated per 0.5 s horizon bucket, plus curve and strip rendering.

mod plot;
mod report;
mod ssim;

pub use plot::{render_comparison_strip, render_curve_plot, StripLayout, ZoomBox, DEFAULT_INSTANTS};
pub use report::{
    evaluate_prediction, horizon_curves, read_metrics_csv, write_curves, write_metrics_csv, CurveRow, EvalConfig,
    EvalReport, Metric, MetricRow, CURVES_HEADER, METRICS_HEADER,
};
pub use ssim::{ssim, ssim_detailed, SsimOutput, C1, C2, SSIM_SIGMA, SSIM_WINDOW};

use serde::{Deserialize, Serialize};

use crate::image::{Channel, GridImage};
use crate::{Error, Result};

/// Channels scored by default: dynamic and static.
pub const DEFAULT_CHANNELS: [Channel; 2] = [Channel::G, Channel::B];

/// Weights of the unknown channel (`alpha`) and of the occupied channels
/// (`beta`) in the combined loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 0.2, beta: 0.8 }
    }
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let w = Self { alpha, beta };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "loss weights must be non-negative, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if self.alpha >= self.beta {
            return Err(Error::InvalidArgument(format!(
                "alpha ({}) must be smaller than beta ({})",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// `alpha * L_R + beta * (L_G + L_B)`.
    pub fn combine(&self, channel_losses: [f64; 3]) -> f64 {
        self.alpha * channel_losses[0] + self.beta * (channel_losses[1] + channel_losses[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseLoss {
    L1,
    #[default]
    L2,
}

impl std::str::FromStr for BaseLoss {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(BaseLoss::L1),
            "l2" => Ok(BaseLoss::L2),
            _ => Err(Error::InvalidArgument(format!("unknown base loss '{s}' (l1|l2)"))),
        }
    }
}

fn check_mask(img: &GridImage, mask: Option<&[bool]>) -> Result<usize> {
    match mask {
        None => Ok(img.len()),
        Some(m) => {
            if m.len() != img.len() {
                return Err(Error::DimensionMismatch {
                    expected: img.dims(),
                    actual: (m.len(), 1),
                });
            }
            match m.iter().filter(|&&b| b).count() {
                0 => Err(Error::EmptyMask),
                n => Ok(n),
            }
        }
    }
}

/// Mean per-pixel base loss of each channel, within `mask`.
pub fn channel_losses(pred: &GridImage, target: &GridImage, base: BaseLoss, mask: Option<&[bool]>) -> Result<[f64; 3]> {
    pred.check_same_dims(target)?;
    let n = check_mask(pred, mask)?;
    let mut sums = [0.0f64; 3];
    for (i, (p, t)) in pred.data.iter().zip(&target.data).enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        for c in 0..3 {
            let d = p[c] as f64 - t[c] as f64;
            sums[c] += match base {
                BaseLoss::L1 => d.abs(),
                BaseLoss::L2 => d * d,
            };
        }
    }
    Ok(sums.map(|s| s / n as f64))
}

/// Weighted channel loss of a prediction against its target.
pub fn weighted_loss(pred: &GridImage, target: &GridImage, weights: &LossWeights, base: BaseLoss) -> Result<f64> {
    weighted_loss_masked(pred, target, weights, base, None)
}

pub fn weighted_loss_masked(
    pred: &GridImage,
    target: &GridImage,
    weights: &LossWeights,
    base: BaseLoss,
    mask: Option<&[bool]>,
) -> Result<f64> {
    Ok(weights.combine(channel_losses(pred, target, base, mask)?))
}

/// Mean squared difference over `channels` and the pixels inside `mask`.
pub fn channel_mse(pred: &GridImage, target: &GridImage, channels: &[Channel], mask: Option<&[bool]>) -> Result<f64> {
    pred.check_same_dims(target)?;
    if channels.is_empty() {
        return Err(Error::InvalidArgument("no channels selected".into()));
    }
    let n = check_mask(pred, mask)?;
    let mut sum = 0.0f64;
    for (i, (p, t)) in pred.data.iter().zip(&target.data).enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        for c in channels {
            let d = p[c.index()] as f64 - t[c.index()] as f64;
            sum += d * d;
        }
    }
    Ok(sum / (n * channels.len()) as f64)
}
