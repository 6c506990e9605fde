//! Four-state dynamic occupancy grid filter.
//!
//! Each cell carries probabilities of being occupied-static, occupied-dynamic,
//! free or unknown. Scans add evidence by blending cells toward a target
//! state; a per-frame leak pulls everything back toward unknown; dynamic mass
//! is advected by per-cell velocities estimated with patch correlation.

mod cell;
mod grid;
pub mod motion;
pub mod snapshot;
mod update;

pub use cell::CellState;
pub use grid::{init_grid, resample_plane, GridGeometry, Interpolation, OccGrid};
pub(crate) use grid::CellMap;
pub use motion::{classify_motion, Motion, OccupancyHistory};
pub use update::{predict_in_place, predict_step, update_from_scan, EgoFootprint, EgoMode, ScanStats};
pub(crate) use update::for_cells_on_outline;

use serde::{Deserialize, Serialize};

use crate::scene::SensorFrame;
use crate::{Error, Result};

/// Tunable filter constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    /// Blend weight of occupied evidence at a hit cell.
    pub lambda_occ: f64,
    /// Blend weight of free evidence along a ray.
    pub lambda_free: f64,
    /// Per-frame leak toward unknown.
    pub gamma_decay: f64,
    /// Minimum speed (m/s) for a dynamic classification.
    pub v_min: f64,
    /// Correlation patch half-size (cells).
    pub corr_window: usize,
    /// Frames between correlated snapshots.
    pub corr_lag: usize,
    /// Correlation search radius (cells).
    pub search_radius: usize,
    /// Minimum correlation peak for a dynamic classification.
    pub min_peak: f64,
    /// Correlation scores this close to the peak count as ties, resolved
    /// toward the smallest displacement.
    pub tie_tolerance: f64,
    /// Static share of occupied evidence before motion can be classified.
    pub unclassified_static_share: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            lambda_occ: 0.7,
            lambda_free: 0.4,
            gamma_decay: 0.02,
            v_min: 0.5,
            corr_window: 5,
            corr_lag: 2,
            search_radius: 12,
            min_peak: 0.5,
            tie_tolerance: 0.05,
            unclassified_static_share: 0.7,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        let open = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        open("lambda_occ", self.lambda_occ)?;
        open("lambda_free", self.lambda_free)?;
        if !(0.0..1.0).contains(&self.gamma_decay) {
            return Err(Error::InvalidArgument(format!(
                "gamma_decay must lie in [0, 1), got {}",
                self.gamma_decay
            )));
        }
        if !(self.v_min >= 0.0) {
            return Err(Error::InvalidArgument(format!("v_min must be non-negative, got {}", self.v_min)));
        }
        if self.corr_window == 0 || self.corr_lag == 0 {
            return Err(Error::InvalidArgument("corr_window and corr_lag must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&self.min_peak) {
            return Err(Error::InvalidArgument(format!("min_peak must lie in [-1, 1], got {}", self.min_peak)));
        }
        if !(0.0..=1.0).contains(&self.tie_tolerance) {
            return Err(Error::InvalidArgument(format!(
                "tie_tolerance must lie in [0, 1], got {}",
                self.tie_tolerance
            )));
        }
        if !(0.0..=1.0).contains(&self.unclassified_static_share) {
            return Err(Error::InvalidArgument(format!(
                "unclassified_static_share must lie in [0, 1], got {}",
                self.unclassified_static_share
            )));
        }
        Ok(())
    }
}

/// A filter instance: posterior grid plus the occupancy history used for
/// motion classification.
#[derive(Debug, Clone)]
pub struct DogmFilter {
    pub grid: OccGrid,
    pub params: FilterParams,
    pub history: OccupancyHistory,
    pub dt: f64,
    pub interpolation: Interpolation,
}

impl DogmFilter {
    pub fn new(geometry: GridGeometry, params: FilterParams, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            grid: OccGrid::unknown(geometry),
            params,
            history: OccupancyHistory::new(params.corr_lag),
            dt,
            interpolation: Interpolation::Bilinear,
        })
    }

    pub fn with_interpolation(mut self, interp: Interpolation) -> Self {
        self.interpolation = interp;
        self
    }

    pub fn predict(&mut self) {
        predict_in_place(&mut self.grid, &self.params, self.dt);
    }

    pub fn update(&mut self, frame: &SensorFrame, ego: Option<&EgoFootprint>) -> Result<ScanStats> {
        update_from_scan(&mut self.grid, frame, &self.params, &mut self.history, ego, self.dt)
    }

    /// Moves the posterior and its history into a new grid placement.
    pub fn recenter(&mut self, geometry: GridGeometry) {
        if geometry == self.grid.geometry {
            return;
        }
        let src = self.grid.geometry;
        self.grid = self.grid.resample(geometry, self.interpolation);
        self.history.resample(&src, &geometry, self.interpolation);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_bad_values_do_not() {
        FilterParams::default().validate().unwrap();
        let bad = FilterParams {
            lambda_occ: 1.0,
            ..FilterParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = FilterParams {
            gamma_decay: 1.0,
            ..FilterParams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn params_roundtrip_through_json_with_partial_input() {
        let p: FilterParams = serde_json::from_str(r#"{"corr_lag": 3}"#).unwrap();
        assert_eq!(p.corr_lag, 3);
        assert_eq!(p.lambda_occ, 0.7);
    }
}
