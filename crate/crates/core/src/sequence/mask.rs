use super::{GridSequence, PixelFrame};
use crate::filter::GridGeometry;
use crate::geometry::Pose2D;
use crate::image::GridImage;
use crate::{par, Error, Result};

/// A cell counts as observed once its unknown probability drops below this.
pub const OBSERVED_THRESHOLD: f32 = 0.5;

/// Per-frame binary masks in one variant's pixel coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityMask {
    pub width: usize,
    pub height: usize,
    /// Row-major, `true` = evaluated.
    pub frames: Vec<Vec<bool>>,
}

impl VisibilityMask {
    pub fn full(width: usize, height: usize, n_frames: usize) -> Self {
        Self {
            width,
            height,
            frames: vec![vec![true; width * height]; n_frames],
        }
    }

    pub fn area(&self, k: usize) -> usize {
        self.frames[k].iter().filter(|&&b| b).count()
    }
}

/// World raster aligned with the allo frame, large enough to hold every
/// frame of both variants.
struct Canvas {
    geometry: GridGeometry,
}

impl Canvas {
    fn new(allo: &GridSequence, ego: &GridSequence) -> Result<Self> {
        let base = allo.pixel_frame(0);
        let px = base.geometry.resolution * base.geometry.width as f64 / base.width as f64;
        let py = base.geometry.resolution * base.geometry.height as f64 / base.height as f64;
        if (px - py).abs() > 1e-12 {
            return Err(Error::InvalidArgument("allo pixels must be square".into()));
        }
        let origin = base.geometry.origin;
        let mut lo = [0.0f64, 0.0];
        let mut hi = [base.geometry.width as f64 * base.geometry.resolution, base.geometry.height as f64 * base.geometry.resolution];
        for k in 0..ego.len() {
            for c in ego.frame_geometry(k).corners() {
                let l = origin.inverse_transform_point(c);
                for a in 0..2 {
                    lo[a] = lo[a].min(l[a]);
                    hi[a] = hi[a].max(l[a]);
                }
            }
        }
        // Offsets are whole pixels so allo pixel centers are canvas centers.
        let c0 = (lo[0] / px).floor();
        let r0 = (lo[1] / px).floor();
        let width = ((hi[0] / px).ceil() - c0) as usize;
        let height = ((hi[1] / px).ceil() - r0) as usize;
        let corner = origin.transform_point([c0 * px, r0 * px]);
        Ok(Self {
            geometry: GridGeometry::new(width, height, px, Pose2D::new(corner[0], corner[1], origin.theta))?,
        })
    }

    /// Marks canvas cells whose center falls on an observed pixel of `img`.
    fn accumulate(&self, observed: &mut [bool], img: &GridImage, frame: &PixelFrame) {
        let corners: Vec<[f64; 2]> = frame.geometry.corners().iter().map(|c| self.geometry.world_to_grid(*c)).collect();
        let c_lo = corners.iter().map(|g| g[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let c_hi = (corners.iter().map(|g| g[0]).fold(f64::NEG_INFINITY, f64::max).ceil().max(0.0) as usize).min(self.geometry.width);
        let r_lo = corners.iter().map(|g| g[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let r_hi = (corners.iter().map(|g| g[1]).fold(f64::NEG_INFINITY, f64::max).ceil().max(0.0) as usize).min(self.geometry.height);
        let w = self.geometry.width;
        par::for_each_row(&mut observed[r_lo * w..r_hi * w], w, |i, row| {
            let r = r_lo + i;
            for c in c_lo..c_hi {
                if row[c] {
                    continue;
                }
                if let Some((x, y)) = frame.pixel_of(self.geometry.cell_center(c, r)) {
                    if img.get(x, y)[0] < OBSERVED_THRESHOLD {
                        row[c] = true;
                    }
                }
            }
        });
    }

    fn lookup(&self, set: &[bool], p: [f64; 2]) -> bool {
        self.geometry.cell_of(p).is_some_and(|(c, r)| set[self.geometry.index(c, r)])
    }

    fn materialize(&self, set: &[bool], frame: &PixelFrame) -> Vec<bool> {
        let mut out = vec![false; frame.width * frame.height];
        par::for_each_row(&mut out, frame.width, |y, row| {
            for (x, v) in row.iter_mut().enumerate() {
                *v = self.lookup(set, frame.pixel_center(x, y));
            }
        });
        out
    }
}

fn check_pair(allo: &GridSequence, ego: &GridSequence) -> Result<()> {
    if allo.len() != ego.len() || allo.ego_poses.len() != ego.ego_poses.len() {
        return Err(Error::InvalidArgument(format!(
            "sequence lengths differ: allo {} vs ego {}",
            allo.len(),
            ego.len()
        )));
    }
    for (k, (a, b)) in allo.ego_poses.iter().zip(&ego.ego_poses).enumerate() {
        if a.distance(b) > 1e-6 || crate::geometry::normalize_angle(a.theta - b.theta).abs() > 1e-6 {
            return Err(Error::Data(format!("ego pose mismatch between variants at frame {k}")));
        }
    }
    if allo.frame_plan != ego.frame_plan {
        return Err(Error::Data("variants were built with different frame plans".into()));
    }
    Ok(())
}

/// Runs the cumulative observation over both variants and calls `f` with the
/// common-observed set after each frame.
fn sweep(allo: &GridSequence, ego: &GridSequence, mut f: impl FnMut(usize, &Canvas, &[bool])) -> Result<()> {
    check_pair(allo, ego)?;
    let canvas = Canvas::new(allo, ego)?;
    let n = canvas.geometry.len();
    let mut seen_allo = vec![false; n];
    let mut seen_ego = vec![false; n];
    let mut both = vec![false; n];
    for k in 0..allo.len() {
        canvas.accumulate(&mut seen_allo, allo.frame(k), &allo.pixel_frame(k));
        canvas.accumulate(&mut seen_ego, ego.frame(k), &ego.pixel_frame(k));
        for ((b, a), e) in both.iter_mut().zip(&seen_allo).zip(&seen_ego) {
            *b = *a && *e;
        }
        f(k, &canvas, &both);
    }
    Ok(())
}

/// Common-visibility masks for a pair of sequences of the same run.
///
/// A world point is observed by a variant at frame `t` if its pixel had
/// `R < 0.5` in any frame up to `t`; the mask keeps points observed by both
/// variants and is expressed in each variant's own pixel grid.
pub fn visibility_mask(allo: &GridSequence, ego: &GridSequence) -> Result<(VisibilityMask, VisibilityMask)> {
    let (aw, ah) = allo.dims();
    let (ew, eh) = ego.dims();
    let mut ma = VisibilityMask {
        width: aw,
        height: ah,
        frames: Vec::with_capacity(allo.len()),
    };
    let mut me = VisibilityMask {
        width: ew,
        height: eh,
        frames: Vec::with_capacity(ego.len()),
    };
    sweep(allo, ego, |k, canvas, both| {
        ma.frames.push(canvas.materialize(both, &allo.pixel_frame(k)));
        me.frames.push(canvas.materialize(both, &ego.pixel_frame(k)));
    })?;
    Ok((ma, me))
}

/// The commonly observed world set after each frame, as canvas cell centers.
pub fn observed_canvas(allo: &GridSequence, ego: &GridSequence) -> Result<Vec<Vec<[f64; 2]>>> {
    let mut out = Vec::new();
    sweep(allo, ego, |_, canvas, both| {
        let g = &canvas.geometry;
        out.push(
            both.iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| g.cell_center(i % g.width, i / g.width))
                .collect(),
        );
    })?;
    Ok(out)
}

/// Blacks out every pixel outside the mask, in inputs and targets.
pub fn apply_mask(seq: &GridSequence, mask: &VisibilityMask) -> Result<GridSequence> {
    if seq.dims() != (mask.width, mask.height) {
        return Err(Error::DimensionMismatch {
            expected: seq.dims(),
            actual: (mask.width, mask.height),
        });
    }
    if mask.frames.len() != seq.len() {
        return Err(Error::OutOfRange {
            what: "mask frame count",
            value: mask.frames.len(),
            limit: seq.len(),
        });
    }
    let mut out = seq.clone();
    for (img, m) in out.frames_mut().zip(&mask.frames) {
        for (p, &keep) in img.data.iter_mut().zip(m) {
            if !keep {
                *p = [0.0; 3];
            }
        }
    }
    out.mask = Some(mask.clone());
    Ok(out)
}
