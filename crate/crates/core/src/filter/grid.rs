use serde::{Deserialize, Serialize};

use super::CellState;
use crate::geometry::Pose2D;
use crate::{par, Error, Result};

/// Placement of a regular grid in the world.
///
/// `origin` is the world pose of the outer corner of cell `(0, 0)`. Columns
/// run along the origin's local +x axis and rows along its local +y axis;
/// cells are stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: Pose2D,
}

impl GridGeometry {
    pub fn new(width: usize, height: usize, resolution: f64, origin: Pose2D) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "grid resolution must be positive, got {resolution}"
            )));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
        })
    }

    /// Geometry whose local frame has +y along `pose.theta` and which puts
    /// `pose` at local point `anchor` (meters).
    pub fn anchored(width: usize, height: usize, resolution: f64, pose: Pose2D, anchor: [f64; 2]) -> Self {
        let theta = pose.theta - std::f64::consts::FRAC_PI_2;
        let frame = Pose2D::new(0.0, 0.0, theta);
        let off = frame.rotate(anchor);
        Self {
            width,
            height,
            resolution,
            origin: Pose2D::new(pose.x - off[0], pose.y - off[1], theta),
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical size (m).
    pub fn extent(&self) -> [f64; 2] {
        [
            self.width as f64 * self.resolution,
            self.height as f64 * self.resolution,
        ]
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    /// Continuous cell coordinates of a world point; cell `(c, r)` covers
    /// `[c, c + 1) × [r, r + 1)`.
    pub fn world_to_grid(&self, p: [f64; 2]) -> [f64; 2] {
        let l = self.origin.inverse_transform_point(p);
        [l[0] / self.resolution, l[1] / self.resolution]
    }

    pub fn grid_to_world(&self, g: [f64; 2]) -> [f64; 2] {
        self.origin
            .transform_point([g[0] * self.resolution, g[1] * self.resolution])
    }

    pub fn cell_center(&self, col: usize, row: usize) -> [f64; 2] {
        self.grid_to_world([col as f64 + 0.5, row as f64 + 0.5])
    }

    pub fn cell_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let g = self.world_to_grid(p);
        let (c, r) = (g[0].floor(), g[1].floor());
        (c >= 0.0 && r >= 0.0 && (c as usize) < self.width && (r as usize) < self.height)
            .then_some((c as usize, r as usize))
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let g = self.world_to_grid(p);
        g[0] >= 0.0 && g[1] >= 0.0 && g[0] <= self.width as f64 && g[1] <= self.height as f64
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        let [w, h] = [self.width as f64, self.height as f64];
        [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]].map(|g| self.grid_to_world(g))
    }
}

/// Interpolation used whenever grid content moves between frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Bilinear,
    Nearest,
}

/// A four-state occupancy grid with per-cell world-frame velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct OccGrid {
    pub geometry: GridGeometry,
    pub cells: Vec<CellState>,
    /// World-frame velocity (m/s); meaningful where dynamic mass dominates.
    pub velocities: Vec<[f32; 2]>,
}

/// A fresh, fully unknown grid.
pub fn init_grid(width: usize, height: usize, resolution: f64, origin: Pose2D) -> Result<OccGrid> {
    Ok(OccGrid::unknown(GridGeometry::new(width, height, resolution, origin)?))
}

impl OccGrid {
    pub fn unknown(geometry: GridGeometry) -> Self {
        let n = geometry.len();
        Self {
            geometry,
            cells: vec![CellState::UNKNOWN; n],
            velocities: vec![[0.0; 2]; n],
        }
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn cell(&self, col: usize, row: usize) -> &CellState {
        &self.cells[self.geometry.index(col, row)]
    }

    pub fn cell_mut(&mut self, col: usize, row: usize) -> &mut CellState {
        let i = self.geometry.index(col, row);
        &mut self.cells[i]
    }

    /// Combined occupancy (static + dynamic) of every cell.
    pub fn occupancy(&self) -> Vec<f32> {
        self.cells.iter().map(CellState::occupied).collect()
    }

    /// Largest `|Σ states − 1|` over all cells.
    pub fn max_normalization_error(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| (c.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_normalized(&self, tol: f64) -> bool {
        self.cells.iter().all(|c| c.is_normalized(tol))
    }

    /// Samples state and velocity at continuous grid coordinates. Outside the
    /// grid reads as unknown with zero velocity.
    pub fn sample(&self, g: [f64; 2], interp: Interpolation) -> (CellState, [f32; 2]) {
        let fetch = |c: i64, r: i64| -> (CellState, [f32; 2]) {
            if c < 0 || r < 0 || c >= self.width() as i64 || r >= self.height() as i64 {
                (CellState::UNKNOWN, [0.0; 2])
            } else {
                let i = self.geometry.index(c as usize, r as usize);
                (self.cells[i], self.velocities[i])
            }
        };
        match bilinear_taps(g, interp) {
            Taps::One(c, r) => fetch(c, r),
            Taps::Four(taps) => {
                let fetched = taps.map(|(c, r, w)| (fetch(c, r), w));
                // Never-observed neighbourhoods dominate large grids.
                if fetched.iter().all(|((s, v), _)| *s == CellState::UNKNOWN && *v == [0.0; 2]) {
                    return (CellState::UNKNOWN, [0.0; 2]);
                }
                let mut acc = [0.0f64; 4];
                let mut vel = [0.0f64; 2];
                let mut dyn_w = 0.0f64;
                for ((s, v), w) in fetched {
                    if w == 0.0 {
                        continue;
                    }
                    for (a, p) in acc.iter_mut().zip(s.to_array()) {
                        *a += w * p as f64;
                    }
                    let dw = w * s.p_dynamic as f64;
                    vel[0] += dw * v[0] as f64;
                    vel[1] += dw * v[1] as f64;
                    dyn_w += dw;
                }
                let state = CellState::from_array(acc.map(|v| v as f32)).normalized();
                let v = if dyn_w > 1e-9 {
                    [(vel[0] / dyn_w) as f32, (vel[1] / dyn_w) as f32]
                } else {
                    [0.0; 2]
                };
                (state, v)
            }
        }
    }

    /// Samples at the world point `p`.
    pub fn sample_world(&self, p: [f64; 2], interp: Interpolation) -> (CellState, [f32; 2]) {
        self.sample(self.geometry.world_to_grid(p), interp)
    }

    /// The grid re-expressed in `target` geometry: rigid transform, state
    /// interpolation and renormalization. Area not covered by `self` is unknown.
    pub fn resample(&self, target: GridGeometry, interp: Interpolation) -> OccGrid {
        if target == self.geometry {
            return self.clone();
        }
        let map = CellMap::new(&self.geometry, &target);
        let mut out = OccGrid::unknown(target);
        let spans = RowSpans::new(self.width(), self.height(), |i| {
            self.cells[i] != CellState::UNKNOWN || self.velocities[i] != [0.0; 2]
        });
        if spans.is_empty() {
            return out;
        }
        let w = target.width;
        let OccGrid { cells, velocities, .. } = &mut out;
        par::for_each_row2(cells, velocities, w, |row, cell_row, vel_row| {
            for (col, (c, v)) in cell_row.iter_mut().zip(vel_row.iter_mut()).enumerate() {
                let g = map.source(col, row);
                if !spans.touches(g) {
                    continue;
                }
                (*c, *v) = self.sample(g, interp);
            }
        });
        out
    }
}

/// Per-row column ranges of "interesting" cells, used to skip resampling
/// work whose taps would all read the background value.
struct RowSpans {
    width: usize,
    spans: Vec<Option<(usize, usize)>>,
}

impl RowSpans {
    fn new(width: usize, height: usize, interesting: impl Fn(usize) -> bool) -> Self {
        let spans = (0..height)
            .map(|row| {
                let base = row * width;
                let first = (0..width).find(|&c| interesting(base + c))?;
                let last = (first..width).rev().find(|&c| interesting(base + c))?;
                Some((first, last))
            })
            .collect();
        Self { width, spans }
    }

    fn is_empty(&self) -> bool {
        self.spans.iter().all(Option::is_none)
    }

    /// Whether any bilinear tap around grid coordinates `g` may be interesting.
    fn touches(&self, g: [f64; 2]) -> bool {
        let x = (g[0] - 0.5).floor();
        let y = (g[1] - 0.5).floor();
        if x < -1.0 || y < -1.0 || x >= self.width as f64 || y >= self.spans.len() as f64 {
            return false;
        }
        let (x, y) = (x as i64, y as i64);
        (y..=y + 1).any(|r| {
            r >= 0
                && (r as usize) < self.spans.len()
                && self.spans[r as usize].is_some_and(|(a, b)| x + 1 >= a as i64 && x <= b as i64)
        })
    }
}

pub(crate) enum Taps {
    One(i64, i64),
    Four([(i64, i64, f64); 4]),
}

/// Interpolation taps around continuous grid coordinates, with weights that
/// snap to an exact single tap when the point sits on a cell center.
pub(crate) fn bilinear_taps(g: [f64; 2], interp: Interpolation) -> Taps {
    const SNAP: f64 = 1e-9;
    let x = g[0] - 0.5;
    let y = g[1] - 0.5;
    if interp == Interpolation::Nearest {
        return Taps::One(x.round() as i64, y.round() as i64);
    }
    let (mut x0, mut y0) = (x.floor(), y.floor());
    let (mut fx, mut fy) = (x - x0, y - y0);
    if fx > 1.0 - SNAP {
        x0 += 1.0;
        fx = 0.0;
    } else if fx < SNAP {
        fx = 0.0;
    }
    if fy > 1.0 - SNAP {
        y0 += 1.0;
        fy = 0.0;
    } else if fy < SNAP {
        fy = 0.0;
    }
    let (c, r) = (x0 as i64, y0 as i64);
    if fx == 0.0 && fy == 0.0 {
        return Taps::One(c, r);
    }
    Taps::Four([
        (c, r, (1.0 - fx) * (1.0 - fy)),
        (c + 1, r, fx * (1.0 - fy)),
        (c, r + 1, (1.0 - fx) * fy),
        (c + 1, r + 1, fx * fy),
    ])
}

/// Samples a scalar plane (row-major, `geometry` sized) at grid coordinates.
pub(crate) fn sample_plane(plane: &[f32], geometry: &GridGeometry, g: [f64; 2], interp: Interpolation, fill: f32) -> f32 {
    let fetch = |c: i64, r: i64| {
        if c < 0 || r < 0 || c >= geometry.width as i64 || r >= geometry.height as i64 {
            fill
        } else {
            plane[geometry.index(c as usize, r as usize)]
        }
    };
    match bilinear_taps(g, interp) {
        Taps::One(c, r) => fetch(c, r),
        Taps::Four(taps) => taps
            .iter()
            .filter(|t| t.2 != 0.0)
            .map(|&(c, r, w)| w * fetch(c, r) as f64)
            .sum::<f64>() as f32,
    }
}

/// Resamples a scalar plane from `src` to `dst` geometry.
pub fn resample_plane(plane: &[f32], src: &GridGeometry, dst: &GridGeometry, interp: Interpolation, fill: f32) -> Vec<f32> {
    if src == dst {
        return plane.to_vec();
    }
    let map = CellMap::new(src, dst);
    let mut out = vec![fill; dst.len()];
    let spans = RowSpans::new(src.width, src.height, |i| plane[i] != fill);
    if spans.is_empty() {
        return out;
    }
    par::for_each_row(&mut out, dst.width, |row, out_row| {
        for (col, v) in out_row.iter_mut().enumerate() {
            let g = map.source(col, row);
            if !spans.touches(g) {
                continue;
            }
            *v = sample_plane(plane, src, g, interp, fill);
        }
    });
    out
}

/// Affine map from destination cell centers to source grid coordinates.
pub(crate) struct CellMap {
    base: [f64; 2],
    dcol: [f64; 2],
    drow: [f64; 2],
}

impl CellMap {
    pub(crate) fn new(src: &GridGeometry, dst: &GridGeometry) -> Self {
        let at = |c: f64, r: f64| src.world_to_grid(dst.grid_to_world([c, r]));
        let base = at(0.5, 0.5);
        let a = at(1.5, 0.5);
        let b = at(0.5, 1.5);
        Self {
            base,
            dcol: [a[0] - base[0], a[1] - base[1]],
            drow: [b[0] - base[0], b[1] - base[1]],
        }
    }

    pub(crate) fn source(&self, col: usize, row: usize) -> [f64; 2] {
        let (c, r) = (col as f64, row as f64);
        [
            self.base[0] + c * self.dcol[0] + r * self.drow[0],
            self.base[1] + c * self.dcol[1] + r * self.drow[1],
        ]
    }
}
