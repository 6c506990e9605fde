//! Allo-centric and ego-centric grid frames.
//!
//! The allo grid is fixed in the world for a whole sequence: its +y axis
//! points along the ego's initial heading and the ego starts on the lateral
//! center line, 10 m from the rear edge. The ego grid is re-centered on the
//! ego (heading up) every frame. In fuse mode a much larger ego grid is
//! filtered and fused into the allo grid.

use serde::{Deserialize, Serialize};

use crate::filter::{
    for_cells_on_outline, CellState, DogmFilter, EgoFootprint, EgoMode, FilterParams, GridGeometry, Interpolation,
    OccGrid, CellMap,
};
use crate::geometry::{OrientedRect, Pose2D};
use crate::scene::presets::EGO_HALF_EXTENTS;
use crate::scene::{SensorFrame, DEFAULT_DT};
use crate::{par, Error, Result};

pub const GRID_CELLS: usize = 600;
pub const RESOLUTION: f64 = 0.1;
pub const MARGIN_BEHIND: f64 = 10.0;
pub const MARGIN_AHEAD: f64 = 50.0;
pub const BIG_EGO_EXTENT: f64 = 140.0;

/// Placement of the allo grid for one sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramePlan {
    /// World pose of the allo grid's cell (0, 0) corner; its +y axis is the
    /// ego's initial heading.
    pub allo_origin: Pose2D,
    pub ego_pose_0: Pose2D,
    pub width_cells: usize,
    pub height_cells: usize,
    pub resolution: f64,
    pub ego_margin_behind: f64,
    pub ego_margin_ahead: f64,
    pub big_ego_extent: f64,
}

/// Plans the allo frame from the ego's first pose with the default geometry.
pub fn plan_allo_frame(ego_pose_0: Pose2D) -> FramePlan {
    FramePlan::new(ego_pose_0, GRID_CELLS, RESOLUTION, MARGIN_BEHIND, BIG_EGO_EXTENT)
}

impl FramePlan {
    /// A square plan of `cells × cells`; the ahead margin is what remains of
    /// the along-heading extent after `behind`.
    pub fn new(ego_pose_0: Pose2D, cells: usize, resolution: f64, behind: f64, big_ego_extent: f64) -> Self {
        let extent = cells as f64 * resolution;
        let geo = GridGeometry::anchored(cells, cells, resolution, ego_pose_0, [extent / 2.0, behind]);
        Self {
            allo_origin: geo.origin,
            ego_pose_0,
            width_cells: cells,
            height_cells: cells,
            resolution,
            ego_margin_behind: behind,
            ego_margin_ahead: extent - behind,
            big_ego_extent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let along = self.height_cells as f64 * self.resolution;
        if ((self.ego_margin_behind + self.ego_margin_ahead) - along).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "margins {} + {} do not sum to the along-heading extent {along}",
                self.ego_margin_behind, self.ego_margin_ahead
            )));
        }
        let diag = (self.width_cells as f64).hypot(self.height_cells as f64) * self.resolution;
        if self.big_ego_extent < diag {
            return Err(Error::InvalidArgument(format!(
                "big ego extent {} m is smaller than the allo diagonal {diag:.1} m",
                self.big_ego_extent
            )));
        }
        Ok(())
    }

    pub fn allo_geometry(&self) -> GridGeometry {
        GridGeometry {
            width: self.width_cells,
            height: self.height_cells,
            resolution: self.resolution,
            origin: self.allo_origin,
        }
    }

    /// Ego-centric grid of the same size as the allo grid, ego at the center.
    pub fn ego_geometry(&self, pose: Pose2D) -> GridGeometry {
        let e = [
            self.width_cells as f64 * self.resolution,
            self.height_cells as f64 * self.resolution,
        ];
        GridGeometry::anchored(self.width_cells, self.height_cells, self.resolution, pose, [e[0] / 2.0, e[1] / 2.0])
    }

    /// The enlarged ego grid used in fuse mode.
    pub fn big_ego_geometry(&self, pose: Pose2D) -> GridGeometry {
        let n = (self.big_ego_extent / self.resolution).round() as usize;
        let half = n as f64 * self.resolution / 2.0;
        GridGeometry::anchored(n, n, self.resolution, pose, [half, half])
    }
}

/// How the allo grid receives evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlloMode {
    /// Filter a large ego grid and fuse it into the allo grid.
    #[default]
    Fuse,
    /// Update the allo grid directly from world-frame scans.
    Direct,
}

impl std::str::FromStr for AlloMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fuse" => Ok(AlloMode::Fuse),
            "direct" => Ok(AlloMode::Direct),
            other => Err(Error::InvalidArgument(format!("unknown mode '{other}' (fuse|direct)"))),
        }
    }
}

impl std::fmt::Display for AlloMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AlloMode::Fuse => "fuse",
            AlloMode::Direct => "direct",
        })
    }
}

/// Settings shared by both pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub params: FilterParams,
    pub dt: f64,
    pub interpolation: Interpolation,
    pub ego_half_extents: [f64; 2],
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            params: FilterParams::default(),
            dt: DEFAULT_DT,
            interpolation: Interpolation::Bilinear,
            ego_half_extents: EGO_HALF_EXTENTS,
        }
    }
}

/// Ego velocity at each frame by finite differences of the logged poses.
pub fn ego_velocities(log: &[SensorFrame], dt: f64) -> Vec<[f64; 2]> {
    let n = log.len();
    (0..n)
        .map(|i| {
            if n < 2 {
                return [0.0; 2];
            }
            let (a, b) = if i == 0 { (0, 1) } else { (i - 1, i) };
            let (p, q) = (log[a].ego_pose, log[b].ego_pose);
            [(q.x - p.x) / dt, (q.y - p.y) / dt]
        })
        .collect()
}

/// Ego-centric pipeline: each frame the posterior is moved into a grid
/// centered on the ego, then predicted and updated. The ego's own cells
/// receive free evidence.
pub fn run_ego_pipeline(log: &[SensorFrame], plan: &FramePlan, config: &PipelineConfig) -> Result<Vec<OccGrid>> {
    run_ego_pipeline_with(log, plan, config, |g, _| Ok(g.clone()))
}

/// [`run_ego_pipeline`], handing each frame's grid to `emit` instead of
/// keeping it.
pub fn run_ego_pipeline_with<T>(
    log: &[SensorFrame],
    plan: &FramePlan,
    config: &PipelineConfig,
    emit: impl FnMut(&OccGrid, usize) -> Result<T>,
) -> Result<Vec<T>> {
    run_ego_filter(log, config, |pose| plan.ego_geometry(pose), emit)
}

fn run_ego_filter<T>(
    log: &[SensorFrame],
    config: &PipelineConfig,
    geometry_at: impl Fn(Pose2D) -> GridGeometry,
    mut emit: impl FnMut(&OccGrid, usize) -> Result<T>,
) -> Result<Vec<T>> {
    let Some(first) = log.first() else {
        return Ok(Vec::new());
    };
    let mut filter =
        DogmFilter::new(geometry_at(first.ego_pose), config.params, config.dt)?.with_interpolation(config.interpolation);
    let footprint = EgoFootprint {
        half_extents: config.ego_half_extents,
        mode: EgoMode::MaskFree,
    };
    let mut out = Vec::with_capacity(log.len());
    for (k, frame) in log.iter().enumerate() {
        filter.recenter(geometry_at(frame.ego_pose));
        if k > 0 {
            filter.predict();
        }
        filter.update(frame, Some(&footprint))?;
        out.push(emit(&filter.grid, k)?);
    }
    Ok(out)
}

/// Fuses an ego grid into an allo grid. Each allo cell samples the ego grid
/// at its world position and blends toward the sample with weight
/// `w = 1 - p_unknown(sample)`. Zero-weight cells are left untouched.
pub fn fuse_ego_to_allo(ego: &OccGrid, allo: &OccGrid, interp: Interpolation) -> Result<OccGrid> {
    check_coverage(&ego.geometry, &allo.geometry)?;
    let geo = allo.geometry;
    let map = CellMap::new(&ego.geometry, &geo);
    let mut packed: Vec<(CellState, [f32; 2])> = allo.cells.iter().copied().zip(allo.velocities.iter().copied()).collect();
    par::for_each_row(&mut packed, geo.width, |row, out| {
        for (col, slot) in out.iter_mut().enumerate() {
            let (s, sv) = ego.sample(map.source(col, row), interp);
            let w = 1.0 - s.p_unknown;
            if w <= 0.0 {
                continue;
            }
            let (a, av) = *slot;
            let fused = a.blend(s, w).normalized();
            let md_old = (1.0 - w) * a.p_dynamic;
            let md_new = w * s.p_dynamic;
            let md = md_old + md_new;
            let v = if md > 1e-9 {
                [(md_old * av[0] + md_new * sv[0]) / md, (md_old * av[1] + md_new * sv[1]) / md]
            } else {
                [0.0; 2]
            };
            *slot = (fused, v);
        }
    });
    let mut out = allo.clone();
    for (i, (c, v)) in packed.into_iter().enumerate() {
        out.cells[i] = c;
        out.velocities[i] = v;
    }
    Ok(out)
}

/// Errors unless every corner of `inner` lies inside `outer`.
fn check_coverage(outer: &GridGeometry, inner: &GridGeometry) -> Result<()> {
    const TOL: f64 = 1e-6;
    let inside = |p: [f64; 2]| {
        let g = outer.world_to_grid(p);
        g[0] >= -TOL && g[1] >= -TOL && g[0] <= outer.width as f64 + TOL && g[1] <= outer.height as f64 + TOL
    };
    let outside: Vec<[f64; 2]> = inner.corners().into_iter().filter(|c| !inside(*c)).collect();
    if outside.is_empty() {
        return Ok(());
    }
    let fold = |f: fn(f64, f64) -> f64, init: f64, k: usize| outside.iter().map(|c| c[k]).fold(init, f);
    Err(Error::Coverage {
        min_x: fold(f64::min, f64::INFINITY, 0),
        max_x: fold(f64::max, f64::NEG_INFINITY, 0),
        min_y: fold(f64::min, f64::INFINITY, 1),
        max_y: fold(f64::max, f64::NEG_INFINITY, 1),
    })
}

/// Blends occupied evidence over the outline of the ego footprint: dynamic
/// with the ego velocity when moving faster than `v_min`, static otherwise.
pub fn render_ego(grid: &mut OccGrid, pose: Pose2D, half_extents: [f64; 2], velocity: [f64; 2], params: &FilterParams) {
    let moving = velocity[0].hypot(velocity[1]) > params.v_min;
    let (target, vel) = if moving {
        (CellState::DYNAMIC, [velocity[0] as f32, velocity[1] as f32])
    } else {
        (CellState::STATIC, [0.0; 2])
    };
    let geo = grid.geometry;
    let lam = params.lambda_occ as f32;
    for_cells_on_outline(&geo, &OrientedRect::new(pose, half_extents), |i| {
        grid.cells[i] = grid.cells[i].blend(target, lam).normalized();
        grid.velocities[i] = vel;
    });
}

/// Allo-centric pipeline, one grid per frame, all in `plan`'s fixed frame.
pub fn run_allo_pipeline(
    log: &[SensorFrame],
    plan: &FramePlan,
    mode: AlloMode,
    config: &PipelineConfig,
) -> Result<Vec<OccGrid>> {
    run_allo_pipeline_with(log, plan, mode, config, |g, _| Ok(g.clone()))
}

/// [`run_allo_pipeline`], handing each frame's grid to `emit` instead of
/// keeping it.
pub fn run_allo_pipeline_with<T>(
    log: &[SensorFrame],
    plan: &FramePlan,
    mode: AlloMode,
    config: &PipelineConfig,
    mut emit: impl FnMut(&OccGrid, usize) -> Result<T>,
) -> Result<Vec<T>> {
    let velocities = ego_velocities(log, config.dt);
    match mode {
        AlloMode::Direct => {
            let mut filter = DogmFilter::new(plan.allo_geometry(), config.params, config.dt)?
                .with_interpolation(config.interpolation);
            let mut out = Vec::with_capacity(log.len());
            for (k, frame) in log.iter().enumerate() {
                if k > 0 {
                    filter.predict();
                }
                let footprint = EgoFootprint {
                    half_extents: config.ego_half_extents,
                    mode: EgoMode::Occupied { velocity: velocities[k] },
                };
                filter.update(frame, Some(&footprint))?;
                out.push(emit(&filter.grid, k)?);
            }
            Ok(out)
        }
        AlloMode::Fuse => {
            let mut allo = OccGrid::unknown(plan.allo_geometry());
            run_ego_filter(
                log,
                config,
                |pose| plan.big_ego_geometry(pose),
                |big, k| {
                    allo = fuse_ego_to_allo(big, &allo, config.interpolation)?;
                    render_ego(
                        &mut allo,
                        log[k].ego_pose,
                        config.ego_half_extents,
                        velocities[k],
                        &config.params,
                    );
                    emit(&allo, k)
                },
            )
        }
    }
}

/// Mean absolute difference over all four states of two same-shaped grids.
pub fn mean_abs_state_diff(a: &OccGrid, b: &OccGrid) -> Result<f64> {
    if a.cells.len() != b.cells.len() {
        return Err(Error::DimensionMismatch {
            expected: (a.width(), a.height()),
            actual: (b.width(), b.height()),
        });
    }
    let total: f64 = a
        .cells
        .iter()
        .zip(&b.cells)
        .map(|(x, y)| {
            x.to_array()
                .iter()
                .zip(y.to_array())
                .map(|(p, q)| (p - q).abs() as f64)
                .sum::<f64>()
        })
        .sum();
    Ok(total / (4.0 * a.cells.len() as f64))
}
