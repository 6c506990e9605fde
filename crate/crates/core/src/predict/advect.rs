//! Constant-velocity advection of the dynamic channel.
//!
//! Velocities are estimated per connected blob of dynamic mass in the last
//! input frame. A coarse correlation search at a short lag yields a guess,
//! which is refined at the longest lag the input window allows and then to
//! sub-pixel precision with a parabolic fit of the score peak.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{predict_persistence, Predictor, Prediction};
use crate::filter::motion::{prefer, select, Match, Plane};
use crate::filter::FilterParams;
use crate::image::{Channel, GridImage};
use crate::sequence::GridSequence;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdvectParams {
    /// Margin (pixels) around a blob's bounding box in the correlation patch.
    pub corr_window: usize,
    /// Lag of the coarse search (frames).
    pub corr_lag: usize,
    /// Coarse search radius (pixels).
    pub search_radius: usize,
    pub min_peak: f64,
    pub tie_tolerance: f64,
    /// Blobs slower than this (m/s) are held still.
    pub v_min: f64,
    /// Blurred dynamic probability above which a pixel belongs to a blob.
    pub g_threshold: f32,
    /// Dynamic probability a pixel needs to take part in correlation.
    pub core_threshold: f32,
    /// Blob pixels up to this many pixels apart (Chebyshev) join one blob,
    /// bridging the gaps between sparse returns on one object.
    pub blob_gap: usize,
    /// Radius (pixels) of the box blur applied to the dynamic channel before
    /// correlation, so sparse returns on an object form a coherent pattern.
    pub corr_blur: usize,
}

impl Default for AdvectParams {
    fn default() -> Self {
        Self::from_filter(&FilterParams::default())
    }
}

impl AdvectParams {
    /// Shares the correlation constants of the filter.
    pub fn from_filter(p: &FilterParams) -> Self {
        Self {
            corr_window: p.corr_window,
            corr_lag: p.corr_lag,
            search_radius: p.search_radius,
            min_peak: p.min_peak,
            tie_tolerance: p.tie_tolerance,
            v_min: p.v_min,
            g_threshold: 0.005,
            core_threshold: 0.1,
            blob_gap: 3,
            corr_blur: 2,
        }
    }
}

/// Converts pixel shifts to physical speeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionScale {
    /// Meters per pixel.
    pub pixel_size: f64,
    /// Seconds per frame.
    pub dt: f64,
}

impl MotionScale {
    pub fn of(seq: &GridSequence) -> Self {
        Self {
            pixel_size: seq.pixel_frame(0).pixel_size(),
            dt: seq.dt,
        }
    }
}

/// Per-pixel shift in pixels per frame (`+x` right, `+y` down).
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub width: usize,
    pub height: usize,
    pub shift: Vec<[f64; 2]>,
    /// Number of blobs that received a nonzero shift.
    pub moving_blobs: usize,
}

impl Flow {
    pub fn is_still(&self) -> bool {
        self.moving_blobs == 0
    }
}

/// Components of `mask` where pixels within `gap` (Chebyshev) are connected;
/// `gap = 1` is 8-connectivity. Returns labels (0 = background) and the
/// bounding box `(x0, y0, x1, y1)` (inclusive) of each component.
fn components(mask: &[bool], w: usize, h: usize, gap: usize) -> (Vec<u32>, Vec<(usize, usize, usize, usize)>) {
    let gap = gap.max(1);
    let mut labels = vec![0u32; w * h];
    let mut boxes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        let id = boxes.len() as u32 + 1;
        let mut bb = (start % w, start / w, start % w, start / w);
        labels[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            bb = (bb.0.min(x), bb.1.min(y), bb.2.max(x), bb.3.max(y));
            for ny in y.saturating_sub(gap)..=(y + gap).min(h - 1) {
                for nx in x.saturating_sub(gap)..=(x + gap).min(w - 1) {
                    let j = ny * w + nx;
                    if mask[j] && labels[j] == 0 {
                        labels[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        boxes.push(bb);
    }
    (labels, boxes)
}

/// Normalized cross-correlation of the `current` patch over `rect` against
/// the `past` patch shifted back by each displacement within `radius` of
/// `guess`. `None` if the current patch is flat.
fn rect_scores(
    current: Plane<'_>,
    past: Plane<'_>,
    rect: (i64, i64, i64, i64),
    guess: (i64, i64),
    radius: i64,
) -> Option<Vec<Match>> {
    let (x0, y0, x1, y1) = rect;
    let mut template = Vec::with_capacity(((x1 - x0 + 1) * (y1 - y0 + 1)) as usize);
    for y in y0..=y1 {
        for x in x0..=x1 {
            template.push(current.get(x, y) as f64);
        }
    }
    let n = template.len() as f64;
    let mean = template.iter().sum::<f64>() / n;
    template.iter_mut().for_each(|v| *v -= mean);
    let t_norm = template.iter().map(|v| v * v).sum::<f64>();
    if t_norm <= 1e-12 {
        return None;
    }
    let mut out = Vec::with_capacity(((2 * radius + 1) * (2 * radius + 1)) as usize);
    let mut patch = Vec::with_capacity(template.len());
    for dy in guess.1 - radius..=guess.1 + radius {
        for dx in guess.0 - radius..=guess.0 + radius {
            patch.clear();
            for y in y0..=y1 {
                for x in x0..=x1 {
                    patch.push(past.get(x - dx, y - dy) as f64);
                }
            }
            let pm = patch.iter().sum::<f64>() / n;
            let (mut cross, mut p_norm) = (0.0, 0.0);
            for (t, p) in template.iter().zip(&patch) {
                let q = p - pm;
                cross += t * q;
                p_norm += q * q;
            }
            let score = if p_norm <= 1e-12 { 0.0 } else { cross / (t_norm * p_norm).sqrt() };
            out.push(Match { dx, dy, score });
        }
    }
    Some(out)
}

const MAX_WINDOW_MOVES: usize = 4;

/// Vertex offset of the parabola through three equally spaced samples.
fn parabolic_offset(minus: f64, center: f64, plus: f64) -> f64 {
    let denom = minus - 2.0 * center + plus;
    if denom >= -1e-12 {
        0.0
    } else {
        (0.5 * (minus - plus) / denom).clamp(-0.5, 0.5)
    }
}

/// Shift (pixels/frame) of the blob in `rect`, or `None` if it is not
/// confidently moving.
fn blob_shift(inputs: &[GridImage], planes: &[Vec<f32>], rect: (i64, i64, i64, i64), params: &AdvectParams, scale: MotionScale) -> Option<[f64; 2]> {
    let n = inputs.len();
    let (w, h) = inputs[0].dims();
    let cur = Plane::new(&planes[n - 1], w, h);
    let lag1 = params.corr_lag.min(n - 1);
    let coarse = select(
        &rect_scores(cur, Plane::new(&planes[n - 1 - lag1], w, h), rect, (0, 0), params.search_radius as i64)?,
        params.tie_tolerance,
    )?;
    if coarse.score <= params.min_peak {
        return None;
    }
    let mut shift = [coarse.dx as f64 / lag1 as f64, coarse.dy as f64 / lag1 as f64];
    let lag2 = n - 1;
    if lag2 > lag1 {
        let ratio = lag2 as f64 / lag1 as f64;
        let mut guess = ((shift[0] * lag2 as f64).round() as i64, (shift[1] * lag2 as f64).round() as i64);
        let radius = (1.5 * ratio).ceil() as i64;
        // Exact peak here: the tolerance already steered the coarse guess,
        // and the sub-pixel fit needs the true maximum. A peak on the window
        // edge means the coarse guess was off (broad, tolerance-tied peaks);
        // the window follows it a few times.
        let mut scores;
        let mut fine;
        let mut moves = 0;
        loop {
            scores = rect_scores(cur, Plane::new(&planes[0], w, h), rect, guess, radius)?;
            fine = scores.iter().copied().reduce(|b, m| if prefer(&m, &b) { m } else { b })?;
            let on_edge = (fine.dx - guess.0).abs() == radius || (fine.dy - guess.1).abs() == radius;
            if !on_edge || moves == MAX_WINDOW_MOVES {
                break;
            }
            guess = (fine.dx, fine.dy);
            moves += 1;
        }
        if fine.score > params.min_peak {
            let at = |dx: i64, dy: i64| scores.iter().find(|m| m.dx == dx && m.dy == dy).map(|m| m.score);
            let sub = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) => parabolic_offset(a, fine.score, b),
                _ => 0.0,
            };
            let ox = sub(at(fine.dx - 1, fine.dy), at(fine.dx + 1, fine.dy));
            let oy = sub(at(fine.dx, fine.dy - 1), at(fine.dx, fine.dy + 1));
            shift = [(fine.dx as f64 + ox) / lag2 as f64, (fine.dy as f64 + oy) / lag2 as f64];
        }
    }
    let speed = shift[0].hypot(shift[1]) * scale.pixel_size / scale.dt;
    (speed > params.v_min).then_some(shift)
}

/// Separable box blur with edge clamping; `r = 0` copies.
fn box_blur(plane: &[f32], w: usize, h: usize, r: usize) -> Vec<f32> {
    if r == 0 {
        return plane.to_vec();
    }
    let pass = |src: &[f32], horizontal: bool| -> Vec<f32> {
        let (len, lines) = if horizontal { (w, h) } else { (h, w) };
        let idx = |line: usize, i: usize| if horizontal { line * w + i } else { i * w + line };
        let mut out = vec![0.0f32; w * h];
        for line in 0..lines {
            for i in 0..len {
                let (a, b) = (i.saturating_sub(r), (i + r).min(len - 1));
                let s: f32 = (a..=b).map(|j| src[idx(line, j)]).sum();
                out[idx(line, i)] = s / (b - a + 1) as f32;
            }
        }
        out
    };
    pass(&pass(plane, true), false)
}

/// Estimates the dynamic-channel flow of the last input frame.
pub fn estimate_flow(inputs: &[GridImage], params: &AdvectParams, scale: MotionScale) -> Result<Flow> {
    if inputs.len() < params.corr_lag + 1 {
        return Err(Error::InvalidArgument(format!(
            "advection needs at least {} input frames, got {}",
            params.corr_lag + 1,
            inputs.len()
        )));
    }
    let (w, h) = inputs[0].dims();
    for f in inputs {
        inputs[0].check_same_dims(f)?;
    }
    let raw: Vec<Vec<f32>> = inputs.iter().map(|f| f.channel(Channel::G)).collect();
    let last = &raw[inputs.len() - 1];
    // Correlation sees only confident dynamic evidence; faint trails change
    // shape from frame to frame and bias the match toward zero.
    let planes: Vec<Vec<f32>> = crate::par::map(&raw, |p| {
        let core: Vec<f32> = p.iter().map(|&g| if g > params.core_threshold { g } else { 0.0 }).collect();
        box_blur(&core, w, h, params.corr_blur)
    });
    // Blobs are grown on the blurred plane so the sparse returns of one
    // object and the faint dynamic mass around them move together.
    let smooth = box_blur(last, w, h, params.corr_blur);
    let mask: Vec<bool> = last
        .iter()
        .zip(&smooth)
        .map(|(&g, &b)| g > 0.0 && b > params.g_threshold)
        .collect();
    let (labels, boxes) = components(&mask, w, h, params.blob_gap);
    let m = params.corr_window;
    let shifts: Vec<Option<[f64; 2]>> = crate::par::map(&boxes, |&(x0, y0, x1, y1)| {
        let rect = (
            x0.saturating_sub(m) as i64,
            y0.saturating_sub(m) as i64,
            (x1 + m).min(w - 1) as i64,
            (y1 + m).min(h - 1) as i64,
        );
        blob_shift(inputs, &planes, rect, params, scale)
    });
    let shift = labels
        .iter()
        .map(|&l| if l == 0 { [0.0; 2] } else { shifts[l as usize - 1].unwrap_or([0.0; 2]) })
        .collect();
    Ok(Flow {
        width: w,
        height: h,
        shift,
        moving_blobs: shifts.iter().filter(|s| s.is_some()).count(),
    })
}

/// Forward-splats the dynamic channel of `last` by `k` flow steps and
/// recombines it with the held static channel; unknown gives way where
/// the moved mass needs room.
pub(crate) fn advect_frame(last: &GridImage, flow: &Flow, k: usize) -> GridImage {
    let (w, h) = last.dims();
    let mut mass = vec![0.0f64; w * h];
    for (i, (p, s)) in last.data.iter().zip(&flow.shift).enumerate() {
        let g = p[1] as f64;
        if g <= 0.0 {
            continue;
        }
        if *s == [0.0, 0.0] {
            mass[i] += g;
            continue;
        }
        let x = (i % w) as f64 + s[0] * k as f64;
        let y = (i / w) as f64 + s[1] * k as f64;
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        for (cx, cy, wt) in [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x0 + 1.0, y0, fx * (1.0 - fy)),
            (x0, y0 + 1.0, (1.0 - fx) * fy),
            (x0 + 1.0, y0 + 1.0, fx * fy),
        ] {
            if wt > 0.0 && cx >= 0.0 && cy >= 0.0 && cx < w as f64 && cy < h as f64 {
                mass[cy as usize * w + cx as usize] += wt * g;
            }
        }
    }
    let mut out = last.clone();
    out.t = last.t + k;
    for (p, m) in out.data.iter_mut().zip(&mass) {
        let moved = *m as f32;
        if moved == p[1] {
            continue;
        }
        // Arriving mass displaces unknown (an occluded cell the agent moves
        // into is now predicted occupied) but never static.
        p[1] = moved.min((1.0 - p[2]).max(0.0)).clamp(0.0, 1.0);
        p[0] = p[0].min((1.0 - p[1] - p[2]).max(0.0));
    }
    out
}

/// Holds R and B, advects G along the estimated flow.
pub fn predict_advect(inputs: &[GridImage], p: usize, params: &AdvectParams, scale: MotionScale) -> Result<Prediction> {
    let start = Instant::now();
    let flow = estimate_flow(inputs, params, scale)?;
    if flow.is_still() {
        return Ok(Prediction {
            predictor_id: Predictor::Advect.id().into(),
            ..predict_persistence(inputs, p)?
        });
    }
    let last = inputs.last().expect("checked by estimate_flow");
    Ok(Prediction {
        frames: (1..=p).map(|k| advect_frame(last, &flow, k)).collect(),
        predictor_id: Predictor::Advect.id().into(),
        wall_time: start.elapsed().as_secs_f64(),
        flags: Vec::new(),
    })
}
