//! Structural similarity with an 11×11 Gaussian window (σ = 1.5).
//!
//! Near the border the window is clipped to the image and renormalized, so
//! every pixel gets a value even when the image is smaller than the window.
//! Clipped windows stay separable, which keeps the computation at two 1-D
//! passes per statistic.

use crate::image::{Channel, GridImage};
use crate::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
/// Stability constants for a dynamic range of 1.
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimOutput {
    pub value: f64,
    /// Set when the image is smaller than the window in some dimension.
    pub window_clipped: bool,
}

fn gaussian() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    std::array::from_fn(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
}

/// Weighted mean of `plane` around every pixel along one axis.
fn blur_axis(plane: &[f64], w: usize, h: usize, horizontal: bool, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as i64;
    let (len, lines) = if horizontal { (w, h) } else { (h, w) };
    let mut out = vec![0.0; w * h];
    for line in 0..lines {
        for i in 0..len as i64 {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (k, &wt) in g.iter().enumerate() {
                let j = i + k as i64 - r;
                if j < 0 || j >= len as i64 {
                    continue;
                }
                let idx = if horizontal { line * w + j as usize } else { j as usize * w + line };
                acc += wt * plane[idx];
                norm += wt;
            }
            let idx = if horizontal { line * w + i as usize } else { i as usize * w + line };
            out[idx] = acc / norm;
        }
    }
    out
}

fn blur(plane: &[f64], w: usize, h: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    blur_axis(&blur_axis(plane, w, h, true, g), w, h, false, g)
}

/// Per-pixel SSIM map of one channel.
fn ssim_map(x: &[f64], y: &[f64], w: usize, h: usize) -> Vec<f64> {
    let g = gaussian();
    let mx = blur(x, w, h, &g);
    let my = blur(y, w, h, &g);
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let exx = blur(&sq(x, x), w, h, &g);
    let eyy = blur(&sq(y, y), w, h, &g);
    let exy = blur(&sq(x, y), w, h, &g);
    (0..w * h)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = exx[i] - ux * ux;
            let vy = eyy[i] - uy * uy;
            let cxy = exy[i] - ux * uy;
            ((2.0 * ux * uy + C1) * (2.0 * cxy + C2)) / ((ux * ux + uy * uy + C1) * (vx + vy + C2))
        })
        .collect()
}

/// Mean SSIM over `channels` and the window centers inside `mask`.
pub fn ssim_detailed(pred: &GridImage, target: &GridImage, channels: &[Channel], mask: Option<&[bool]>) -> Result<SsimOutput> {
    pred.check_same_dims(target)?;
    if channels.is_empty() {
        return Err(Error::InvalidArgument("no channels selected".into()));
    }
    let n = super::check_mask(pred, mask)?;
    let (w, h) = pred.dims();
    let maps: Vec<Vec<f64>> = crate::par::map(channels, |c| {
        let x: Vec<f64> = pred.data.iter().map(|p| p[c.index()] as f64).collect();
        let y: Vec<f64> = target.data.iter().map(|p| p[c.index()] as f64).collect();
        ssim_map(&x, &y, w, h)
    });
    let mut total = 0.0;
    for map in &maps {
        let mut s = 0.0;
        for (i, v) in map.iter().enumerate() {
            if mask.is_none_or(|m| m[i]) {
                s += v;
            }
        }
        total += s / n as f64;
    }
    Ok(SsimOutput {
        value: total / channels.len() as f64,
        window_clipped: w < SSIM_WINDOW || h < SSIM_WINDOW,
    })
}

pub fn ssim(pred: &GridImage, target: &GridImage, channels: &[Channel], mask: Option<&[bool]>) -> Result<f64> {
    Ok(ssim_detailed(pred, target, channels, mask)?.value)
}
