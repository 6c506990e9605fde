use super::motion::{classify_motion, Motion, OccupancyHistory};
use super::{CellState, FilterParams, OccGrid};
use crate::geometry::OrientedRect;
use crate::scene::SensorFrame;
use crate::{par, Error, Result};

/// How the ego vehicle's own footprint enters a scan update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EgoMode {
    /// Footprint cells receive free evidence (self-returns excluded).
    MaskFree,
    /// The footprint appears the way a scan shows any other vehicle: its
    /// outline cells receive occupied evidence (dynamic when the ego moves
    /// faster than `v_min`) and the never-observed interior is cleared to free.
    Occupied { velocity: [f64; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoFootprint {
    pub half_extents: [f64; 2],
    pub mode: EgoMode,
}

/// Counts from one scan update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScanStats {
    pub free_cells: usize,
    pub hit_cells: usize,
    pub ego_cells: usize,
    pub dynamic_hits: usize,
}

const LABEL_NONE: u8 = 0;
const LABEL_FREE: u8 = 1;
const LABEL_HIT: u8 = 2;
const LABEL_EGO: u8 = 3;

/// Inter-frame transition: leak toward unknown, then advect dynamic mass.
pub fn predict_step(grid: &OccGrid, params: &FilterParams, dt: f64) -> OccGrid {
    let mut g = grid.clone();
    predict_in_place(&mut g, params, dt);
    g
}

pub fn predict_in_place(grid: &mut OccGrid, params: &FilterParams, dt: f64) {
    let gamma = params.gamma_decay as f32;
    if gamma > 0.0 {
        let w = grid.width();
        par::for_each_row(&mut grid.cells, w, |_, row| {
            for c in row.iter_mut() {
                *c = c.blend(CellState::UNKNOWN, gamma).normalized();
            }
        });
    }
    advect_dynamic(grid, dt);
}

/// Moves each cell's dynamic mass by `velocity * dt` with bilinear splatting.
/// Incoming dynamic mass displaces the cell's other states proportionally;
/// vacated mass returns to the remaining states (unknown if none remain).
fn advect_dynamic(grid: &mut OccGrid, dt: f64) {
    let geo = grid.geometry;
    let moving = grid
        .cells
        .iter()
        .zip(&grid.velocities)
        .any(|(c, v)| c.p_dynamic > 1e-6 && (v[0] != 0.0 || v[1] != 0.0));
    if !moving {
        return;
    }
    let n = geo.len();
    let mut mass = vec![0.0f64; n];
    let mut momentum = vec![[0.0f64; 2]; n];
    let scale = dt / geo.resolution;
    for row in 0..geo.height {
        for col in 0..geo.width {
            let i = geo.index(col, row);
            let d = grid.cells[i].p_dynamic as f64;
            if d <= 0.0 {
                continue;
            }
            let v = grid.velocities[i];
            let vw = [v[0] as f64, v[1] as f64];
            if vw == [0.0, 0.0] {
                mass[i] += d;
                continue;
            }
            let local = geo.origin.inverse_rotate(vw);
            let x = col as f64 + local[0] * scale;
            let y = row as f64 + local[1] * scale;
            let (x0, y0) = (x.floor(), y.floor());
            let (fx, fy) = (x - x0, y - y0);
            for (cx, cy, w) in [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x0 + 1.0, y0, fx * (1.0 - fy)),
                (x0, y0 + 1.0, (1.0 - fx) * fy),
                (x0 + 1.0, y0 + 1.0, fx * fy),
            ] {
                if w <= 0.0 || cx < 0.0 || cy < 0.0 || cx >= geo.width as f64 || cy >= geo.height as f64 {
                    continue;
                }
                let j = geo.index(cx as usize, cy as usize);
                mass[j] += w * d;
                momentum[j][0] += w * d * vw[0];
                momentum[j][1] += w * d * vw[1];
            }
        }
    }
    for i in 0..n {
        let old = grid.cells[i].p_dynamic;
        let new = mass[i].min(1.0) as f32;
        if new != old {
            grid.cells[i] = grid.cells[i].with_dynamic(new);
        }
        grid.velocities[i] = if mass[i] > 1e-9 {
            let mv = momentum[i];
            if mv == [0.0, 0.0] {
                [0.0; 2]
            } else {
                [(mv[0] / mass[i]) as f32, (mv[1] / mass[i]) as f32]
            }
        } else {
            [0.0; 2]
        };
    }
}

/// Visits the cells crossed by the segment between two points given in
/// continuous grid coordinates, in order. Stops when the segment leaves the
/// grid. The callback receives `(index, is_last_cell_of_segment)`.
pub(crate) fn traverse(
    width: usize,
    height: usize,
    start: [f64; 2],
    end: [f64; 2],
    mut visit: impl FnMut(usize, bool),
) {
    let mut cx = start[0].floor() as i64;
    let mut cy = start[1].floor() as i64;
    let ex = end[0].floor() as i64;
    let ey = end[1].floor() as i64;
    let dx = end[0] - start[0];
    let dy = end[1] - start[1];
    let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
    let t_delta_x = if dx != 0.0 { (1.0 / dx).abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { (1.0 / dy).abs() } else { f64::INFINITY };
    let mut t_max_x = if dx > 0.0 {
        ((cx + 1) as f64 - start[0]) / dx
    } else if dx < 0.0 {
        (cx as f64 - start[0]) / dx
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy > 0.0 {
        ((cy + 1) as f64 - start[1]) / dy
    } else if dy < 0.0 {
        (cy as f64 - start[1]) / dy
    } else {
        f64::INFINITY
    };
    let steps = (ex - cx).abs() + (ey - cy).abs();
    for k in 0..=steps {
        if cx < 0 || cy < 0 || cx >= width as i64 || cy >= height as i64 {
            return;
        }
        visit(cy as usize * width + cx as usize, k == steps);
        if k == steps {
            return;
        }
        if t_max_x < t_max_y {
            cx += step_x;
            t_max_x += t_delta_x;
        } else {
            cy += step_y;
            t_max_y += t_delta_y;
        }
    }
}

/// Inverse sensor model update for one frame.
///
/// Cells strictly before a hit get free evidence, the hit cell gets occupied
/// evidence split by [`classify_motion`], misses free the whole ray. Each
/// cell is updated at most once per frame; a hit outranks free evidence.
/// The combined occupancy after the update is pushed onto `history`.
pub fn update_from_scan(
    grid: &mut OccGrid,
    frame: &SensorFrame,
    params: &FilterParams,
    history: &mut OccupancyHistory,
    ego: Option<&EgoFootprint>,
    dt: f64,
) -> Result<ScanStats> {
    let geo = grid.geometry;
    let origin = frame.ego_pose.position();
    if !geo.contains(origin) {
        return Err(Error::PoseOutsideGrid {
            x: origin[0],
            y: origin[1],
        });
    }
    let n = geo.len();
    let mut labels = vec![LABEL_NONE; n];
    let start = geo.world_to_grid(origin);
    const HIT_NUDGE: f64 = 1e-6;
    for ray in &frame.rays {
        let heading = frame.ego_pose.theta + ray.bearing;
        let reach = if ray.hit { ray.range + HIT_NUDGE } else { ray.range };
        let end = geo.world_to_grid([origin[0] + reach * heading.cos(), origin[1] + reach * heading.sin()]);
        traverse(geo.width, geo.height, start, end, |i, last| {
            if last && ray.hit {
                labels[i] = LABEL_HIT;
            } else if labels[i] == LABEL_NONE {
                labels[i] = LABEL_FREE;
            }
        });
    }
    if let Some(fp) = ego {
        let rect = OrientedRect::new(frame.ego_pose, fp.half_extents);
        for_cells_in_rect(&geo, &rect, |i| labels[i] = LABEL_FREE);
        if let EgoMode::Occupied { .. } = fp.mode {
            for_cells_on_outline(&geo, &rect, |i| labels[i] = LABEL_EGO);
        }
    }

    let lam_free = params.lambda_free as f32;
    let lam_occ = params.lambda_occ as f32;
    let mut stats = ScanStats::default();
    let mut hits = Vec::new();
    let mut ego_cells = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match l {
            LABEL_FREE => {
                grid.cells[i] = grid.cells[i].blend(CellState::FREE, lam_free).normalized();
                if grid.cells[i].p_dynamic < 1e-4 {
                    grid.velocities[i] = [0.0; 2];
                }
                stats.free_cells += 1;
            }
            LABEL_HIT => hits.push(i),
            LABEL_EGO => ego_cells.push(i),
            _ => {}
        }
    }

    // Occupancy after this frame's evidence; the static/dynamic split of the
    // occupied mass does not change it.
    let mut snapshot = grid.occupancy();
    for &i in hits.iter().chain(&ego_cells) {
        snapshot[i] = (1.0 - lam_occ) * snapshot[i] + lam_occ;
    }

    let ready = history.lagged().is_some();
    let motions: Vec<Option<Motion>> = if ready {
        par::map(&hits, |&i| {
            Some(classify_motion(history, &snapshot, &geo, (i % geo.width, i / geo.width), params, dt))
        })
    } else {
        vec![None; hits.len()]
    };
    let unknown_split = CellState::new(
        params.unclassified_static_share as f32,
        1.0 - params.unclassified_static_share as f32,
        0.0,
        0.0,
    );
    for (&i, motion) in hits.iter().zip(&motions) {
        let (target, vel) = match motion {
            None => (unknown_split, grid.velocities[i]),
            Some(m) if m.is_dynamic => {
                stats.dynamic_hits += 1;
                (CellState::DYNAMIC, [m.velocity[0] as f32, m.velocity[1] as f32])
            }
            Some(_) => (CellState::STATIC, [0.0; 2]),
        };
        grid.cells[i] = grid.cells[i].blend(target, lam_occ).normalized();
        grid.velocities[i] = vel;
    }
    stats.hit_cells = hits.len();

    if let Some(EgoFootprint {
        mode: EgoMode::Occupied { velocity },
        ..
    }) = ego
    {
        let moving = velocity[0].hypot(velocity[1]) > params.v_min;
        let (target, vel) = if moving {
            (CellState::DYNAMIC, [velocity[0] as f32, velocity[1] as f32])
        } else {
            (CellState::STATIC, [0.0; 2])
        };
        for &i in &ego_cells {
            grid.cells[i] = grid.cells[i].blend(target, lam_occ).normalized();
            grid.velocities[i] = vel;
        }
    }
    stats.ego_cells = ego_cells.len();

    history.push(snapshot);
    Ok(stats)
}

/// Calls `f` with the index of every cell whose center lies in `rect`.
pub(crate) fn for_cells_in_rect(geo: &super::GridGeometry, rect: &OrientedRect, mut f: impl FnMut(usize)) {
    let gs: Vec<[f64; 2]> = rect.corners().iter().map(|c| geo.world_to_grid(*c)).collect();
    let min_x = gs.iter().map(|g| g[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let min_y = gs.iter().map(|g| g[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let max_x = gs.iter().map(|g| g[0]).fold(f64::NEG_INFINITY, f64::max).ceil();
    let max_y = gs.iter().map(|g| g[1]).fold(f64::NEG_INFINITY, f64::max).ceil();
    if max_x < 0.0 || max_y < 0.0 {
        return;
    }
    let max_x = (max_x as usize).min(geo.width);
    let max_y = (max_y as usize).min(geo.height);
    for row in min_y..max_y {
        for col in min_x..max_x {
            if rect.contains(geo.cell_center(col, row)) {
                f(geo.index(col, row));
            }
        }
    }
}

/// Calls `f` with every cell of `rect` within one cell of its boundary: the
/// one-cell-thick outline a scan of the rectangle would show.
pub(crate) fn for_cells_on_outline(geo: &super::GridGeometry, rect: &OrientedRect, mut f: impl FnMut(usize)) {
    let inner = [rect.half_extents[0] - geo.resolution, rect.half_extents[1] - geo.resolution];
    let core = (inner[0] > 0.0 && inner[1] > 0.0).then(|| OrientedRect::new(rect.center, inner));
    for_cells_in_rect(geo, rect, |i| {
        let (col, row) = (i % geo.width, i / geo.width);
        if core.is_none_or(|c| !c.contains(geo.cell_center(col, row))) {
            f(i);
        }
    });
}
