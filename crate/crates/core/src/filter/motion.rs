//! Particle-free motion classification by patch cross-correlation.

use std::collections::VecDeque;

use super::grid::{resample_plane, GridGeometry, Interpolation};
use super::FilterParams;

/// A row-major scalar image borrowed for correlation.
#[derive(Debug, Clone, Copy)]
pub struct Plane<'a> {
    pub data: &'a [f32],
    pub width: usize,
    pub height: usize,
}

impl<'a> Plane<'a> {
    pub fn new(data: &'a [f32], width: usize, height: usize) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { data, width, height }
    }

    #[inline]
    pub fn get(&self, x: i64, y: i64) -> f32 {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            0.0
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }
}

/// Result of a displacement search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    /// Displacement (cells) from the past patch to the current one.
    pub dx: i64,
    pub dy: i64,
    /// Zero-mean normalized cross-correlation at the peak.
    pub score: f64,
}

const TIE_EPS: f64 = 1e-9;
/// Per-cell variance below which a past patch counts as textureless.
const PATCH_FLAT: f64 = 1e-12;

/// Whether candidate `a` beats `b`: higher score, then smaller displacement
/// magnitude, then lexicographically smaller `(dx, dy)`.
pub fn prefer(a: &Match, b: &Match) -> bool {
    if a.score > b.score + TIE_EPS {
        return true;
    }
    if a.score < b.score - TIE_EPS {
        return false;
    }
    let ma = a.dx * a.dx + a.dy * a.dy;
    let mb = b.dx * b.dx + b.dy * b.dy;
    (ma, a.dx, a.dy) < (mb, b.dx, b.dy)
}

/// Searches displacements `d` with `|d - guess|∞ ≤ radius` for the best zero-mean
/// normalized correlation between the current patch centered at `center` and
/// the past patch centered at `center - d`.
///
/// Candidates scoring within `tie_tolerance` of the peak count as tied and the
/// tie is broken by [`prefer`]'s displacement order, which biases the search
/// toward zero motion when the peak is flat (e.g. along a wall). Returns
/// `None` for a textureless current patch.
pub fn best_displacement(
    current: Plane<'_>,
    past: Plane<'_>,
    center: (i64, i64),
    half_window: usize,
    guess: (i64, i64),
    radius: i64,
    tie_tolerance: f64,
) -> Option<Match> {
    let hw = half_window as i64;
    let side = (2 * hw + 1) as usize;
    let n = (side * side) as f64;
    let mut template = Vec::with_capacity(side * side);
    for y in -hw..=hw {
        for x in -hw..=hw {
            template.push(current.get(center.0 + x, center.1 + y) as f64);
        }
    }
    let mean = template.iter().sum::<f64>() / n;
    template.iter_mut().for_each(|v| *v -= mean);
    let t_norm = template.iter().map(|v| v * v).sum::<f64>();
    if t_norm <= PATCH_FLAT * n {
        return None;
    }

    // Past values over the whole search region, zero-padded, plus a summed-area
    // table of values and squares for O(1) patch means and norms.
    let span = 2 * (radius + hw) + 1;
    let (ox, oy) = (center.0 - guess.0 - radius - hw, center.1 - guess.1 - radius - hw);
    let s = span as usize;
    let mut region = vec![0.0f64; s * s];
    for y in 0..span {
        for x in 0..span {
            region[(y * span + x) as usize] = past.get(ox + x, oy + y) as f64;
        }
    }
    let mut sat = vec![[0.0f64; 2]; (s + 1) * (s + 1)];
    for y in 0..s {
        let mut row = [0.0f64; 2];
        for x in 0..s {
            let v = region[y * s + x];
            row[0] += v;
            row[1] += v * v;
            let above = sat[y * (s + 1) + x + 1];
            sat[(y + 1) * (s + 1) + x + 1] = [above[0] + row[0], above[1] + row[1]];
        }
    }
    let box_sum = |x0: usize, y0: usize, k: usize| {
        let at = |x: usize, y: usize| sat[y * (s + 1) + x][k];
        at(x0 + side, y0 + side) - at(x0, y0 + side) - at(x0 + side, y0) + at(x0, y0)
    };

    let mut candidates = Vec::with_capacity(((2 * radius + 1) * (2 * radius + 1)) as usize);
    for dy in guess.1 - radius..=guess.1 + radius {
        for dx in guess.0 - radius..=guess.0 + radius {
            // Top-left of the past patch centered at `center - d`, in region coordinates.
            let x0 = (center.0 - dx - hw - ox) as usize;
            let y0 = (center.1 - dy - hw - oy) as usize;
            let sum = box_sum(x0, y0, 0);
            let p_norm = box_sum(x0, y0, 1) - sum * sum / n;
            // The template is zero-mean, so correlating it with the raw patch
            // equals correlating it with the centered patch.
            let mut cross = 0.0;
            for (ty, trow) in template.chunks_exact(side).enumerate() {
                let prow = &region[(y0 + ty) * s + x0..][..side];
                for (t, p) in trow.iter().zip(prow) {
                    cross += t * p;
                }
            }
            let score = if p_norm <= PATCH_FLAT * n {
                0.0
            } else {
                cross / (t_norm * p_norm).sqrt()
            };
            candidates.push(Match { dx, dy, score });
        }
    }
    select(&candidates, tie_tolerance)
}

/// Picks the preferred candidate among those within `tie_tolerance` of the
/// top score.
pub fn select(candidates: &[Match], tie_tolerance: f64) -> Option<Match> {
    let top = candidates.iter().map(|m| m.score).fold(f64::NEG_INFINITY, f64::max);
    let floor = top - tie_tolerance.max(0.0);
    candidates
        .iter()
        .filter(|m| m.score >= floor - TIE_EPS)
        .map(|m| Match { score: top, ..*m })
        .reduce(|best, m| if prefer(&m, &best) { m } else { best })
        .map(|m| candidates.iter().find(|c| c.dx == m.dx && c.dy == m.dy).copied().unwrap_or(m))
}

/// Combined-occupancy snapshots of the last `lag` frames, oldest first.
#[derive(Debug, Clone)]
pub struct OccupancyHistory {
    lag: usize,
    snapshots: VecDeque<Vec<f32>>,
}

impl OccupancyHistory {
    pub fn new(lag: usize) -> Self {
        Self {
            lag,
            snapshots: VecDeque::with_capacity(lag + 1),
        }
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn push(&mut self, snapshot: Vec<f32>) {
        self.snapshots.push_back(snapshot);
        while self.snapshots.len() > self.lag {
            self.snapshots.pop_front();
        }
    }

    /// The snapshot taken `lag` frames before the current one, once available.
    pub fn lagged(&self) -> Option<&[f32]> {
        (self.lag > 0 && self.snapshots.len() == self.lag).then(|| self.snapshots[0].as_slice())
    }

    /// Re-expresses every snapshot in a new grid placement.
    pub fn resample(&mut self, src: &GridGeometry, dst: &GridGeometry, interp: Interpolation) {
        for s in self.snapshots.iter_mut() {
            *s = resample_plane(s, src, dst, interp, 0.0);
        }
    }
}

/// Motion estimate for one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Motion {
    pub is_dynamic: bool,
    /// World-frame velocity (m/s); zero when static.
    pub velocity: [f64; 2],
    /// Cell displacement over the lag, in grid axes.
    pub displacement: (i64, i64),
    pub score: f64,
}

impl Motion {
    pub const STATIC: Motion = Motion {
        is_dynamic: false,
        velocity: [0.0, 0.0],
        displacement: (0, 0),
        score: 0.0,
    };
}

/// Classifies a cell as static or dynamic by correlating the occupancy patch
/// around it now against the snapshot `corr_lag` frames earlier.
///
/// Without enough history the cell is reported static with zero velocity.
pub fn classify_motion(
    history: &OccupancyHistory,
    current: &[f32],
    geometry: &GridGeometry,
    cell: (usize, usize),
    params: &FilterParams,
    dt: f64,
) -> Motion {
    let Some(past) = history.lagged() else {
        return Motion::STATIC;
    };
    let cur = Plane::new(current, geometry.width, geometry.height);
    let past = Plane::new(past, geometry.width, geometry.height);
    let Some(m) = best_displacement(
        cur,
        past,
        (cell.0 as i64, cell.1 as i64),
        params.corr_window,
        (0, 0),
        params.search_radius as i64,
        params.tie_tolerance,
    ) else {
        return Motion::STATIC;
    };
    let scale = geometry.resolution / (history.lag() as f64 * dt);
    let local = [m.dx as f64 * scale, m.dy as f64 * scale];
    let speed = local[0].hypot(local[1]);
    if m.score > params.min_peak && speed > params.v_min {
        Motion {
            is_dynamic: true,
            velocity: geometry.origin.rotate(local),
            displacement: (m.dx, m.dy),
            score: m.score,
        }
    } else {
        Motion {
            score: m.score,
            ..Motion::STATIC
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2D;

    fn rect_plane(w: usize, h: usize, x0: usize, y0: usize, rw: usize, rh: usize) -> Vec<f32> {
        let mut p = vec![0.0; w * h];
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                p[y * w + x] = 1.0;
            }
        }
        p
    }

    /// Exhaustive NCC argmax written independently of `best_displacement`.
    fn oracle(cur: &[f32], past: &[f32], w: usize, h: usize, c: (i64, i64), hw: i64, r: i64) -> (i64, i64) {
        let at = |p: &[f32], x: i64, y: i64| {
            if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                0.0
            } else {
                p[y as usize * w + x as usize] as f64
            }
        };
        let mut all = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                let a: Vec<f64> = (-hw..=hw)
                    .flat_map(|y| (-hw..=hw).map(move |x| (x, y)))
                    .map(|(x, y)| at(cur, c.0 + x, c.1 + y))
                    .collect();
                let b: Vec<f64> = (-hw..=hw)
                    .flat_map(|y| (-hw..=hw).map(move |x| (x, y)))
                    .map(|(x, y)| at(past, c.0 - dx + x, c.1 - dy + y))
                    .collect();
                let ma = a.iter().sum::<f64>() / a.len() as f64;
                let mb = b.iter().sum::<f64>() / b.len() as f64;
                let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
                let da: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
                let db: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
                let s = if da * db > 0.0 { num / (da * db).sqrt() } else { 0.0 };
                all.push((s, dx, dy));
            }
        }
        let top = all.iter().map(|a| a.0).fold(f64::MIN, f64::max);
        let mut ties: Vec<_> = all.into_iter().filter(|a| a.0 > top - 1e-9).collect();
        ties.sort_by_key(|&(_, dx, dy)| (dx * dx + dy * dy, dx, dy));
        (ties[0].1, ties[0].2)
    }

    fn params(lag: usize) -> FilterParams {
        FilterParams {
            corr_lag: lag,
            search_radius: 8,
            ..FilterParams::default()
        }
    }

    #[test]
    fn translating_rectangle_two_cells_per_frame() {
        let (w, h) = (40, 30);
        let mut hist = OccupancyHistory::new(2);
        hist.push(rect_plane(w, h, 10, 12, 5, 4));
        hist.push(rect_plane(w, h, 12, 12, 5, 4));
        let now = rect_plane(w, h, 14, 12, 5, 4);
        let geo = GridGeometry::new(w, h, 0.1, Pose2D::default()).unwrap();
        let m = classify_motion(&hist, &now, &geo, (16, 13), &params(2), 0.1);
        assert_eq!(m.displacement, (4, 0));
        assert_eq!(oracle(&now, hist.lagged().unwrap(), w, h, (16, 13), 5, 8), (4, 0));
        assert!(m.is_dynamic);
        assert!((m.velocity[0] - 2.0).abs() < 1e-9 && m.velocity[1].abs() < 1e-9);
    }

    #[test]
    fn static_wall_is_static() {
        let (w, h) = (40, 40);
        let wall = rect_plane(w, h, 5, 20, 30, 1);
        let mut hist = OccupancyHistory::new(3);
        for _ in 0..3 {
            hist.push(wall.clone());
        }
        let geo = GridGeometry::new(w, h, 0.1, Pose2D::default()).unwrap();
        let m = classify_motion(&hist, &wall, &geo, (20, 20), &params(3), 0.1);
        assert_eq!(m.displacement, (0, 0));
        assert!(!m.is_dynamic);
    }

    #[test]
    fn uniform_region_is_static() {
        let (w, h) = (30, 30);
        let empty = vec![0.0; w * h];
        let mut hist = OccupancyHistory::new(1);
        hist.push(empty.clone());
        let geo = GridGeometry::new(w, h, 0.1, Pose2D::default()).unwrap();
        let m = classify_motion(&hist, &empty, &geo, (15, 15), &params(1), 0.1);
        assert_eq!(m, Motion::STATIC);
    }

    #[test]
    fn insufficient_history_is_static() {
        let (w, h) = (30, 30);
        let mut hist = OccupancyHistory::new(3);
        hist.push(rect_plane(w, h, 1, 1, 3, 3));
        let geo = GridGeometry::new(w, h, 0.1, Pose2D::default()).unwrap();
        let m = classify_motion(&hist, &rect_plane(w, h, 5, 1, 3, 3), &geo, (6, 2), &params(3), 0.1);
        assert_eq!(m, Motion::STATIC);
    }

    #[test]
    fn velocity_is_rotated_into_world_frame() {
        let (w, h) = (40, 40);
        let mut hist = OccupancyHistory::new(1);
        hist.push(rect_plane(w, h, 10, 10, 4, 3));
        let now = rect_plane(w, h, 10, 13, 4, 3);
        let geo = GridGeometry::new(w, h, 0.1, Pose2D::new(0.0, 0.0, std::f64::consts::FRAC_PI_2)).unwrap();
        let m = classify_motion(&hist, &now, &geo, (11, 14), &params(1), 0.1);
        assert_eq!(m.displacement, (0, 3));
        // Grid +y is world -x for this origin.
        assert!((m.velocity[0] + 3.0).abs() < 1e-9 && m.velocity[1].abs() < 1e-9);
    }

    #[test]
    fn near_ties_within_tolerance_prefer_zero_motion() {
        let c = [
            Match { dx: 3, dy: 0, score: 0.99 },
            Match { dx: 0, dy: 0, score: 0.97 },
            Match { dx: 1, dy: 0, score: 0.5 },
        ];
        assert_eq!(select(&c, 0.05).unwrap(), c[1]);
        assert_eq!(select(&c, 0.0).unwrap(), c[0]);
        assert_eq!(select(&[], 0.05), None);
    }

    #[test]
    fn ties_prefer_smallest_displacement() {
        let a = Match { dx: 2, dy: 0, score: 1.0 };
        let b = Match { dx: 0, dy: 1, score: 1.0 };
        let c = Match { dx: -1, dy: 0, score: 1.0 };
        assert!(prefer(&b, &a));
        assert!(prefer(&c, &b));
        assert!(!prefer(&a, &Match { dx: 5, dy: 5, score: 1.1 }));
    }
}
