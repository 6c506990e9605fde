//! Input/target sequences, common-visibility masks and the on-disk dataset.

mod dataset;
mod mask;

pub use dataset::{
    entry_dir, frame_name, read_dataset, read_sequence_dir, write_dataset, write_sequence_dir, DatasetEntry, SequenceMeta, Split,
};
pub use mask::{apply_mask, observed_canvas, visibility_mask, VisibilityMask};

use serde::{Deserialize, Serialize};

use crate::filter::GridGeometry;
use crate::frame::FramePlan;
use crate::geometry::Pose2D;
use crate::image::GridImage;
use crate::{Error, Result};

pub const DEFAULT_INPUTS: usize = 10;
pub const DEFAULT_HORIZON: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Allo,
    Ego,
}

impl Variant {
    pub const BOTH: [Variant; 2] = [Variant::Allo, Variant::Ego];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Allo => "allo",
            Variant::Ego => "ego",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "allo" => Ok(Variant::Allo),
            "ego" => Ok(Variant::Ego),
            other => Err(Error::InvalidArgument(format!("unknown variant '{other}' (allo|ego)"))),
        }
    }
}

/// `N` input frames followed by `P` target frames of one variant.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSequence {
    pub seq_id: String,
    pub variant: Variant,
    pub inputs: Vec<GridImage>,
    pub targets: Vec<GridImage>,
    pub dt: f64,
    /// One pose per frame, inputs then targets.
    pub ego_poses: Vec<Pose2D>,
    pub frame_plan: FramePlan,
    /// Index of the first input frame in the source run.
    pub start_frame: usize,
    /// Common-visibility mask, once computed.
    pub mask: Option<VisibilityMask>,
}

impl GridSequence {
    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn horizon(&self) -> usize {
        self.targets.len()
    }

    pub fn len(&self) -> usize {
        self.inputs.len() + self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.inputs
            .first()
            .or(self.targets.first())
            .map_or((0, 0), |f| f.dims())
    }

    /// Frame `k` counting inputs then targets.
    pub fn frame(&self, k: usize) -> &GridImage {
        if k < self.inputs.len() {
            &self.inputs[k]
        } else {
            &self.targets[k - self.inputs.len()]
        }
    }

    pub fn frames(&self) -> impl Iterator<Item = &GridImage> {
        self.inputs.iter().chain(&self.targets)
    }

    pub fn frames_mut(&mut self) -> impl Iterator<Item = &mut GridImage> {
        self.inputs.iter_mut().chain(self.targets.iter_mut())
    }

    /// World placement of frame `k` at full grid resolution.
    pub fn frame_geometry(&self, k: usize) -> GridGeometry {
        match self.variant {
            Variant::Allo => self.frame_plan.allo_geometry(),
            Variant::Ego => self.frame_plan.ego_geometry(self.ego_poses[k]),
        }
    }

    /// Mapping between world points and pixels of frame `k`, whatever the
    /// image size.
    pub fn pixel_frame(&self, k: usize) -> PixelFrame {
        let (w, h) = self.dims();
        PixelFrame::new(self.frame_geometry(k), w, h)
    }

    /// All frames resized; masks follow with nearest-neighbor sampling.
    pub fn resized(&self, w: usize, h: usize) -> GridSequence {
        let (w0, h0) = self.dims();
        GridSequence {
            inputs: self.inputs.iter().map(|f| crate::image::resize(f, w, h)).collect(),
            targets: self.targets.iter().map(|f| crate::image::resize(f, w, h)).collect(),
            mask: self.mask.as_ref().map(|m| VisibilityMask {
                width: w,
                height: h,
                frames: m
                    .frames
                    .iter()
                    .map(|f| crate::image::resize_mask(f, w0, h0, w, h))
                    .collect(),
            }),
            ..self.clone()
        }
    }
}

/// Pixel ↔ world mapping for an image of a grid (row 0 = far edge).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelFrame {
    pub geometry: GridGeometry,
    pub width: usize,
    pub height: usize,
    sx: f64,
    sy: f64,
}

impl PixelFrame {
    pub fn new(geometry: GridGeometry, width: usize, height: usize) -> Self {
        Self {
            geometry,
            width,
            height,
            sx: geometry.width as f64 / width as f64,
            sy: geometry.height as f64 / height as f64,
        }
    }

    pub fn pixel_center(&self, x: usize, y: usize) -> [f64; 2] {
        let gx = (x as f64 + 0.5) * self.sx;
        let gy = self.geometry.height as f64 - (y as f64 + 0.5) * self.sy;
        self.geometry.grid_to_world([gx, gy])
    }

    /// Continuous pixel coordinates of world point `p`; pixel `(x, y)` spans
    /// `[x, x + 1) × [y, y + 1)`.
    pub fn pixel_coords(&self, p: [f64; 2]) -> [f64; 2] {
        let g = self.geometry.world_to_grid(p);
        [g[0] / self.sx, (self.geometry.height as f64 - g[1]) / self.sy]
    }

    /// Size of one pixel in meters along x.
    pub fn pixel_size(&self) -> f64 {
        self.geometry.resolution * self.sx
    }

    /// Pixel containing world point `p`, if inside the image.
    pub fn pixel_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let [x, y] = self.pixel_coords(p);
        let (x, y) = (x.floor(), y.floor());
        (x >= 0.0 && y >= 0.0 && (x as usize) < self.width && (y as usize) < self.height)
            .then_some((x as usize, y as usize))
    }
}

/// Sliding windows of `n + p` frames at `stride`. `poses[k]` belongs to
/// `frames[k]`.
#[allow(clippy::too_many_arguments)]
pub fn build_sequences(
    frames: &[GridImage],
    poses: &[Pose2D],
    plan: &FramePlan,
    variant: Variant,
    n: usize,
    p: usize,
    stride: usize,
    dt: f64,
    seq_prefix: &str,
) -> Result<Vec<GridSequence>> {
    if frames.len() != poses.len() {
        return Err(Error::InvalidArgument(format!(
            "{} frames but {} poses",
            frames.len(),
            poses.len()
        )));
    }
    if n == 0 || stride == 0 {
        return Err(Error::InvalidArgument("inputs and stride must be positive".into()));
    }
    if frames.len() < n + p {
        return Err(Error::OutOfRange {
            what: "sequence length",
            value: n + p,
            limit: frames.len(),
        });
    }
    if let Some(f) = frames.iter().find(|f| f.dims() != frames[0].dims()) {
        return Err(Error::DimensionMismatch {
            expected: frames[0].dims(),
            actual: f.dims(),
        });
    }
    let count = (frames.len() - (n + p)) / stride + 1;
    Ok((0..count)
        .map(|i| {
            let s = i * stride;
            GridSequence {
                seq_id: if count == 1 {
                    seq_prefix.to_string()
                } else {
                    format!("{seq_prefix}_w{i:03}")
                },
                variant,
                inputs: frames[s..s + n].to_vec(),
                targets: frames[s + n..s + n + p].to_vec(),
                dt,
                ego_poses: poses[s..s + n + p].to_vec(),
                frame_plan: *plan,
                start_frame: s,
                mask: None,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests;
