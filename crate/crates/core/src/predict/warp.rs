//! Ego-motion compensation for ego-centric sequences.

use std::time::Instant;

use super::advect::{advect_frame, estimate_flow, AdvectParams, MotionScale};
use super::{predict_persistence, Predictor, Prediction};
use crate::geometry::Pose2D;
use crate::image::GridImage;
use crate::sequence::{GridSequence, PixelFrame, Variant};
use crate::{Error, Result};

const UNKNOWN: [f32; 3] = [1.0, 0.0, 0.0];
/// Per-frame ego displacement beyond which the pose history is rejected.
const MAX_STEP: f64 = 10.0;

/// Future poses at constant speed and yaw rate, from the motion between the
/// last two poses. `None` if the history is degenerate.
pub fn extrapolate_poses(prev: Pose2D, last: Pose2D, p: usize) -> Option<Vec<Pose2D>> {
    let finite = |q: &Pose2D| q.x.is_finite() && q.y.is_finite() && q.theta.is_finite();
    if !finite(&prev) || !finite(&last) || prev.distance(&last) > MAX_STEP {
        return None;
    }
    if prev.distance(&last) < 1e-9 && crate::geometry::normalize_angle(last.theta - prev.theta).abs() < 1e-12 {
        return Some(vec![last; p]);
    }
    let step = prev.between(&last);
    let mut out = Vec::with_capacity(p);
    let mut pose = last;
    for _ in 0..p {
        pose = pose.compose(&step);
        out.push(pose);
    }
    Some(out)
}

/// Resamples `img` (placed by `src`) into the pixel grid `dst`, bilinearly;
/// regions outside the source read as unknown.
pub fn warp_image(img: &GridImage, src: &PixelFrame, dst: &PixelFrame) -> GridImage {
    if src == dst {
        return img.clone();
    }
    let mut out = GridImage::filled(dst.width, dst.height, UNKNOWN, img.t);
    let (w, h) = (img.width as i64, img.height as i64);
    crate::par::for_each_row(&mut out.data, dst.width, |y, row| {
        for (x, px) in row.iter_mut().enumerate() {
            let c = src.pixel_coords(dst.pixel_center(x, y));
            let (u, v) = (c[0] - 0.5, c[1] - 0.5);
            let (u0, v0) = (u.floor(), v.floor());
            let (fu, fv) = ((u - u0) as f32, (v - v0) as f32);
            let mut acc = [0.0f32; 3];
            for (dx, dy, wt) in [
                (0, 0, (1.0 - fu) * (1.0 - fv)),
                (1, 0, fu * (1.0 - fv)),
                (0, 1, (1.0 - fu) * fv),
                (1, 1, fu * fv),
            ] {
                if wt == 0.0 {
                    continue;
                }
                let (sx, sy) = (u0 as i64 + dx, v0 as i64 + dy);
                let s = if sx >= 0 && sy >= 0 && sx < w && sy < h {
                    img.data[(sy * w + sx) as usize]
                } else {
                    UNKNOWN
                };
                for ch in 0..3 {
                    acc[ch] += wt * s[ch];
                }
            }
            *px = acc.map(|v| v.clamp(0.0, 1.0));
        }
    });
    out
}

/// Warps the last input along the extrapolated ego motion, with the dynamic
/// channel advected in the compensated frame.
pub fn predict_ego_warp(seq: &GridSequence, p: usize, params: &AdvectParams) -> Result<Prediction> {
    let start = Instant::now();
    if seq.variant != Variant::Ego {
        return Err(Error::InvalidArgument("ego-warp applies to ego-centric sequences only".into()));
    }
    let n = seq.n_inputs();
    let id = Predictor::EgoWarp.id().to_string();
    let fallback = |flag: &str| -> Result<Prediction> {
        Ok(Prediction {
            predictor_id: id.clone(),
            flags: vec![flag.to_string()],
            ..predict_persistence(&seq.inputs, p)?
        })
    };
    if n < 2 {
        return fallback("degenerate-pose-history");
    }
    let Some(future) = extrapolate_poses(seq.ego_poses[n - 2], seq.ego_poses[n - 1], p) else {
        return fallback("degenerate-pose-history");
    };
    let (w, h) = seq.dims();
    let frame_at = |pose: Pose2D| PixelFrame::new(seq.frame_plan.ego_geometry(pose), w, h);
    let last_frame = seq.pixel_frame(n - 1);

    // Inputs re-expressed in the last input's frame, so that only true
    // object motion remains for the flow estimate.
    let compensated: Vec<GridImage> = (0..n)
        .map(|k| warp_image(&seq.inputs[k], &seq.pixel_frame(k), &last_frame))
        .collect();
    let last = compensated.last().expect("n >= 2");
    let flow = if n > params.corr_lag {
        Some(estimate_flow(&compensated, params, MotionScale::of(seq))?).filter(|f| !f.is_still())
    } else {
        None
    };
    let frames = future
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let k = i + 1;
            let local = match &flow {
                Some(f) => advect_frame(last, f, k),
                None => GridImage { t: last.t + k, ..last.clone() },
            };
            warp_image(&local, &last_frame, &frame_at(*pose))
        })
        .collect();
    Ok(Prediction {
        frames,
        predictor_id: id,
        wall_time: start.elapsed().as_secs_f64(),
        flags: Vec::new(),
    })
}
