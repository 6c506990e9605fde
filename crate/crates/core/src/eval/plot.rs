//! Raster outputs: horizon-curve plots and comparison strips.

use image::{Rgb, RgbImage};

use crate::image::to_rgb8;
use crate::predict::Prediction;
use crate::sequence::{GridSequence, Variant};
use crate::{Error, Result};

/// Instants (s) shown in comparison strips by default.
pub const DEFAULT_INSTANTS: [f64; 3] = [0.5, 1.5, 2.5];

const PLOT_W: u32 = 480;
const PLOT_H: u32 = 320;
const MARGIN: i64 = 30;
const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const GAP_COLOR: Rgb<u8> = Rgb([128, 128, 128]);
const ZOOM_COLOR: Rgb<u8> = Rgb([255, 220, 0]);

fn variant_color(v: Variant) -> Rgb<u8> {
    match v {
        Variant::Allo => Rgb([20, 90, 230]),
        Variant::Ego => Rgb([220, 40, 40]),
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, a: (i64, i64), b: (i64, i64), c: Rgb<u8>, thick: i64) {
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).max(1);
    for s in 0..=steps {
        let x = a.0 + (b.0 - a.0) * s / steps;
        let y = a.1 + (b.1 - a.1) * s / steps;
        for dy in 0..thick {
            for dx in 0..thick {
                put(img, x + dx - thick / 2, y + dy - thick / 2, c);
            }
        }
    }
}

/// Line plot of metric means over horizon, one colored series per variant
/// (allo blue, ego red). Axes are unlabeled; the values live in `curves.csv`.
pub fn render_curve_plot(series: &[(Variant, Vec<[f64; 2]>)]) -> Result<RgbImage> {
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in pts {
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(Error::Data("non-finite value in curve".into()));
        }
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let mut img = RgbImage::from_pixel(PLOT_W, PLOT_H, WHITE);
    if !x0.is_finite() {
        return Ok(img);
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let pad = ((y1 - y0) * 0.05).max(1e-9);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let (w, h) = (PLOT_W as i64, PLOT_H as i64);
    let to_px = |p: [f64; 2]| {
        (
            MARGIN + ((p[0] - x0) / (x1 - x0) * (w - 2 * MARGIN) as f64).round() as i64,
            h - MARGIN - ((p[1] - y0) / (y1 - y0) * (h - 2 * MARGIN) as f64).round() as i64,
        )
    };
    for (_, p) in series {
        for q in p {
            let (x, _) = to_px(*q);
            line(&mut img, (x, MARGIN), (x, h - MARGIN), GRID, 1);
        }
    }
    line(&mut img, (MARGIN, h - MARGIN), (w - MARGIN, h - MARGIN), BLACK, 1);
    line(&mut img, (MARGIN, MARGIN), (MARGIN, h - MARGIN), BLACK, 1);
    for (v, p) in series {
        let c = variant_color(*v);
        let mut sorted = p.clone();
        sorted.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for pair in sorted.windows(2) {
            line(&mut img, to_px(pair[0]), to_px(pair[1]), c, 2);
        }
        for q in &sorted {
            let (x, y) = to_px(*q);
            for dy in -3..=3 {
                for dx in -3..=3 {
                    put(&mut img, x + dx, y + dy, c);
                }
            }
        }
    }
    Ok(img)
}

/// Rectangle (tile pixel coordinates) outlined on every tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZoomBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

/// Tile placement of a comparison strip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StripLayout {
    pub rows: u32,
    pub cols: u32,
    pub tile_width: u32,
    pub tile_height: u32,
    pub gap: u32,
}

impl StripLayout {
    pub const GAP: u32 = 2;

    pub fn size(&self) -> (u32, u32) {
        (
            self.cols * self.tile_width + (self.cols.saturating_sub(1)) * self.gap,
            self.rows * self.tile_height + (self.rows.saturating_sub(1)) * self.gap,
        )
    }

    /// Top-left pixel of tile `(row, col)`.
    pub fn origin(&self, row: u32, col: u32) -> (u32, u32) {
        (col * (self.tile_width + self.gap), row * (self.tile_height + self.gap))
    }
}

/// Tiles the target (first row) and each prediction (one row each) at the
/// requested instants (columns). Tiles are copied at native resolution.
pub fn render_comparison_strip(
    seq: &GridSequence,
    predictions: &[&Prediction],
    instants: &[f64],
    zoom: Option<ZoomBox>,
) -> Result<(RgbImage, StripLayout)> {
    if predictions.is_empty() || instants.is_empty() {
        return Err(Error::InvalidArgument("need at least one prediction and one instant".into()));
    }
    let frames: Vec<usize> = instants
        .iter()
        .map(|&s| {
            let k = (s / seq.dt).round();
            if k < 1.0 || k as usize > seq.horizon() || predictions.iter().any(|p| k as usize > p.horizon()) {
                Err(Error::InvalidArgument(format!(
                    "instant {s} s is outside the {} s horizon",
                    seq.horizon() as f64 * seq.dt
                )))
            } else {
                Ok(k as usize)
            }
        })
        .collect::<Result<_>>()?;
    let (w, h) = seq.dims();
    let layout = StripLayout {
        rows: 1 + predictions.len() as u32,
        cols: frames.len() as u32,
        tile_width: w as u32,
        tile_height: h as u32,
        gap: StripLayout::GAP,
    };
    let (sw, sh) = layout.size();
    let mut out = RgbImage::from_pixel(sw, sh, GAP_COLOR);
    let rows = std::iter::once(&seq.targets).chain(predictions.iter().map(|p| &p.frames));
    for (r, frames_of_row) in rows.enumerate() {
        for (c, &k) in frames.iter().enumerate() {
            let tile = to_rgb8(&frames_of_row[k - 1]);
            let (ox, oy) = layout.origin(r as u32, c as u32);
            image::imageops::replace(&mut out, &tile, ox as i64, oy as i64);
            if let Some(z) = zoom {
                let (x0, y0) = ((ox + z.x) as i64, (oy + z.y) as i64);
                let (x1, y1) = (x0 + z.width as i64 - 1, y0 + z.height as i64 - 1);
                for (a, b) in [((x0, y0), (x1, y0)), ((x1, y0), (x1, y1)), ((x0, y1), (x1, y1)), ((x0, y0), (x0, y1))] {
                    line(&mut out, a, b, ZOOM_COLOR, 1);
                }
            }
        }
    }
    Ok((out, layout))
}
