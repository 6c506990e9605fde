//! Probabilistic RGB grid images: R = unknown, G = dynamic, B = static.
//!
//! Free mass is the implicit remainder, so known free space is black. Image
//! row 0 is the far edge of the grid along its +y axis (heading up).

mod io;
mod resize;

pub use io::{from_rgb8, read_float, read_png, to_rgb8, write_float, write_png, load_float, save_float};
pub use resize::{resize, resize_mask};

use serde::{Deserialize, Serialize};

use crate::filter::{CellState, GridGeometry, OccGrid};
use crate::{Error, Result};

/// Allowed excess of `R + G + B` over one (three 8-bit rounding steps).
pub const SUM_TOLERANCE: f32 = 3.0 / 255.0;
/// Sums above this are rejected by [`decode`].
pub const GROSS_SUM: f32 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    R,
    G,
    B,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::R, Channel::G, Channel::B];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::R => "R",
            Channel::G => "G",
            Channel::B => "B",
        }
    }
}

/// A three-channel probability image.
#[derive(Debug, Clone, PartialEq)]
pub struct GridImage {
    pub width: usize,
    pub height: usize,
    /// Row-major `[R, G, B]` pixels, row 0 at the top.
    pub data: Vec<[f32; 3]>,
    /// Frame index.
    pub t: usize,
}

impl GridImage {
    pub fn filled(width: usize, height: usize, value: [f32; 3], t: usize) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
            t,
        }
    }

    pub fn black(width: usize, height: usize, t: usize) -> Self {
        Self::filled(width, height, [0.0; 3], t)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: [f32; 3]) {
        self.data[y * self.width + x] = v;
    }

    /// One channel as a row-major plane.
    pub fn channel(&self, c: Channel) -> Vec<f32> {
        self.data.iter().map(|p| p[c.index()]).collect()
    }

    pub fn set_channel(&mut self, c: Channel, plane: &[f32]) {
        for (p, &v) in self.data.iter_mut().zip(plane) {
            p[c.index()] = v;
        }
    }

    pub fn check_same_dims(&self, other: &GridImage) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }

    /// Whether every value is in [0, 1] and every pixel sum within tolerance.
    pub fn is_valid(&self) -> bool {
        self.data.iter().all(|p| {
            p.iter().all(|v| (0.0..=1.0).contains(v)) && p[0] + p[1] + p[2] <= 1.0 + SUM_TOLERANCE
        })
    }

    /// The image as it would read back from 8-bit storage.
    pub fn quantized(&self) -> GridImage {
        GridImage {
            data: self.data.iter().map(|p| p.map(|v| quantize(v) as f32 / 255.0)).collect(),
            ..self.clone()
        }
    }
}

/// 8-bit code of a probability: `round(p * 255)` with halves away from zero.
pub fn quantize(p: f32) -> u8 {
    (p.clamp(0.0, 1.0) as f64 * 255.0).round() as u8
}

/// Maps a grid to its image. Grid row `r` becomes image row `H - 1 - r`.
pub fn encode(grid: &OccGrid, t: usize) -> GridImage {
    let (w, h) = (grid.width(), grid.height());
    let mut img = GridImage::black(w, h, t);
    for y in 0..h {
        let row = h - 1 - y;
        for x in 0..w {
            let c = grid.cell(x, row);
            img.data[y * w + x] = [c.p_unknown, c.p_dynamic, c.p_static];
        }
    }
    img
}

/// Bookkeeping from [`decode`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeStats {
    /// Pixels whose channel sum exceeded one and were rescaled.
    pub renormalized: usize,
    /// Pixels with a channel outside [0, 1] that was clamped.
    pub clamped: usize,
}

/// Converts a pixel back to a cell: `free = max(0, 1 - R - G - B)`, with
/// proportional rescaling when the channel sum slightly exceeds one.
pub fn decode_pixel(p: [f32; 3], stats: &mut DecodeStats) -> Result<CellState> {
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite pixel value".into()));
    }
    let mut q = p;
    if q.iter().any(|v| !(0.0..=1.0).contains(v)) {
        stats.clamped += 1;
        q = q.map(|v| v.clamp(0.0, 1.0));
    }
    let s = q[0] as f64 + q[1] as f64 + q[2] as f64;
    if s > GROSS_SUM as f64 {
        return Err(Error::Data(format!("pixel channel sum {s:.4} exceeds {GROSS_SUM}")));
    }
    if s > 1.0 {
        stats.renormalized += 1;
        let k = 1.0 / s;
        return Ok(CellState::new(
            (q[2] as f64 * k) as f32,
            (q[1] as f64 * k) as f32,
            0.0,
            (q[0] as f64 * k) as f32,
        ));
    }
    Ok(CellState::new(q[2], q[1], (1.0 - s) as f32, q[0]))
}

/// Inverse of [`encode`] into the given grid placement.
pub fn decode(image: &GridImage, geometry: GridGeometry) -> Result<(OccGrid, DecodeStats)> {
    if (geometry.width, geometry.height) != image.dims() {
        return Err(Error::DimensionMismatch {
            expected: (geometry.width, geometry.height),
            actual: image.dims(),
        });
    }
    let mut grid = OccGrid::unknown(geometry);
    let mut stats = DecodeStats::default();
    let (w, h) = image.dims();
    for y in 0..h {
        let row = h - 1 - y;
        for x in 0..w {
            grid.cells[row * w + x] = decode_pixel(image.data[y * w + x], &mut stats)?;
        }
    }
    Ok((grid, stats))
}
