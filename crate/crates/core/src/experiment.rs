//! The paired allo/ego experiment: identical scenarios run through both
//! pipelines, cut into sequences, masked to common visibility, predicted and
//! scored. Shared by the CLI and the end-to-end tests.
//!
//! Pairs are processed one at a time and dropped after scoring; a 35-frame
//! pair at full resolution holds a few hundred megabytes of float images.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eval::{evaluate_prediction, horizon_curves, write_curves, write_metrics_csv, CurveRow, EvalConfig, EvalReport};
use crate::frame::{plan_allo_frame, run_allo_pipeline_with, run_ego_pipeline_with, AlloMode, PipelineConfig};
use crate::image::{encode, GridImage};
use crate::predict::{AdvectParams, Predictor};
use crate::scene::{presets, run_scenario, Scenario};
use crate::sequence::{
    apply_mask, build_sequences, entry_dir, visibility_mask, write_sequence_dir, DatasetEntry, Split, Variant,
    DEFAULT_HORIZON, DEFAULT_INPUTS,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// A preset name or `"mix"` to cycle through all presets.
    pub preset: String,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub n_inputs: usize,
    pub horizon: usize,
    /// Window stride; 0 means non-overlapping windows (`n_inputs + horizon`).
    pub stride: usize,
    pub mode: AlloMode,
    pub pipeline: PipelineConfig,
    /// Square output image size in pixels; `None` keeps one pixel per cell.
    pub image_size: Option<usize>,
    pub predictors: Vec<Predictor>,
    pub advect: AdvectParams,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: "mix".into(),
            n_train: 0,
            n_test: 40,
            seed: 7,
            n_inputs: DEFAULT_INPUTS,
            horizon: DEFAULT_HORIZON,
            stride: 0,
            mode: AlloMode::Fuse,
            pipeline: PipelineConfig::default(),
            image_size: None,
            predictors: Predictor::ALL.to_vec(),
            advect: AdvectParams::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.pipeline.params.validate()?;
        self.eval.weights.validate()?;
        if self.n_inputs == 0 || self.horizon == 0 {
            return Err(Error::InvalidArgument("inputs and horizon must be positive".into()));
        }
        if self.preset != "mix" && !presets::PRESETS.contains(&self.preset.as_str()) {
            return Err(Error::InvalidArgument(format!(
                "unknown preset '{}' (expected one of {:?} or 'mix')",
                self.preset,
                presets::PRESETS
            )));
        }
        if self.image_size == Some(0) {
            return Err(Error::InvalidArgument("image size must be positive".into()));
        }
        Ok(())
    }

    fn stride(&self) -> usize {
        if self.stride == 0 {
            self.n_inputs + self.horizon
        } else {
            self.stride
        }
    }
}

/// Seed of scenario `index` under experiment seed `seed` (SplitMix64 mix).
pub fn scenario_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Scenario `index` of an experiment.
pub fn scenario_at(preset: &str, index: usize, seed: u64) -> Result<Scenario> {
    let s = scenario_seed(seed, index);
    if preset == "mix" {
        Ok(presets::mix(index, s))
    } else {
        presets::preset(preset, s)
    }
}

/// Runs one scenario through both pipelines and returns masked, 8-bit
/// quantized sequence pairs.
pub fn generate_entries(scenario: &Scenario, split: Split, seq_prefix: &str, cfg: &ExperimentConfig) -> Result<Vec<DatasetEntry>> {
    let log = run_scenario(scenario)?;
    let first = log.first().ok_or_else(|| Error::Data("empty sensor log".into()))?;
    let plan = plan_allo_frame(first.ego_pose);
    let pipeline = PipelineConfig {
        dt: scenario.dt,
        ..cfg.pipeline
    };
    let to_image = |g: &crate::filter::OccGrid, k: usize| -> Result<GridImage> { Ok(encode(g, k).quantized()) };
    let allo = run_allo_pipeline_with(&log, &plan, cfg.mode, &pipeline, to_image)?;
    let ego = run_ego_pipeline_with(&log, &plan, &pipeline, to_image)?;
    let poses: Vec<_> = log.iter().map(|f| f.ego_pose).collect();
    let (n, p, stride) = (cfg.n_inputs, cfg.horizon, cfg.stride());
    let allo = build_sequences(&allo, &poses, &plan, Variant::Allo, n, p, stride, scenario.dt, seq_prefix)?;
    let ego = build_sequences(&ego, &poses, &plan, Variant::Ego, n, p, stride, scenario.dt, seq_prefix)?;
    allo.into_iter()
        .zip(ego)
        .map(|(a, e)| {
            let (ma, me) = visibility_mask(&a, &e)?;
            let (mut a, mut e) = (apply_mask(&a, &ma)?, apply_mask(&e, &me)?);
            if let Some(size) = cfg.image_size {
                a = a.resized(size, size);
                e = e.resized(size, size);
            }
            Ok(DatasetEntry {
                split,
                preset: scenario.name.clone(),
                seed: scenario.rng_seed,
                allo: a,
                ego: e,
            })
        })
        .collect()
}

/// Scores every configured predictor on both variants of `entry`.
/// Per-sequence failures are returned alongside the rows.
pub fn evaluate_entry(
    entry: &DatasetEntry,
    cfg: &ExperimentConfig,
) -> Vec<(Predictor, Variant, std::result::Result<Vec<crate::eval::MetricRow>, String>)> {
    let mut out = Vec::new();
    for &predictor in &cfg.predictors {
        for v in Variant::BOTH {
            if !predictor.supports(v) {
                continue;
            }
            let seq = entry.variant(v);
            let result = predictor
                .predict(seq, cfg.horizon, &cfg.advect)
                .and_then(|pred| {
                    pred.validate(cfg.horizon, seq.dims())?;
                    evaluate_prediction(seq, &pred, &cfg.eval)
                })
                .map_err(|e| e.to_string());
            out.push((predictor, v, result));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    /// One report per predictor × variant, in configuration order.
    pub reports: Vec<EvalReport>,
    pub curves: Vec<CurveRow>,
    /// Whether the ego moved, per test sequence id.
    pub moving_ego: BTreeMap<String, bool>,
    /// Preset of each test sequence id.
    pub presets: BTreeMap<String, String>,
}

impl ExperimentOutput {
    pub fn report(&self, predictor: Predictor, variant: Variant) -> Option<&EvalReport> {
        self.reports
            .iter()
            .find(|r| r.predictor == predictor.id() && r.variant == variant)
    }
}

fn ego_moved(entry: &DatasetEntry) -> bool {
    let poses = &entry.allo.ego_poses;
    poses.windows(2).any(|w| w[0].distance(&w[1]) > 1e-3)
}

/// Runs the full experiment. With `out_dir`, the dataset, `metrics.csv`,
/// curves, plots and the effective configuration are written there.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentOutput> {
    run_experiment_with(cfg, out_dir, |_, _| {})
}

/// [`run_experiment`] with a progress callback `(done, total)`.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
    progress: impl FnMut(usize, usize),
) -> Result<ExperimentOutput> {
    run_experiment_inspect(cfg, out_dir, progress, |_| Ok(()))
}

/// [`run_experiment_with`], also handing every generated pair (train and
/// test) to `inspect` before it is scored and dropped.
pub fn run_experiment_inspect(
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
    mut progress: impl FnMut(usize, usize),
    mut inspect: impl FnMut(&DatasetEntry) -> Result<()>,
) -> Result<ExperimentOutput> {
    cfg.validate()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    }
    let mut reports: Vec<EvalReport> = Vec::new();
    for &p in &cfg.predictors {
        for v in Variant::BOTH {
            if p.supports(v) {
                reports.push(EvalReport::new(p.id(), v, &cfg.eval));
            }
        }
    }
    let mut moving_ego = BTreeMap::new();
    let mut preset_of = BTreeMap::new();
    let total = cfg.n_train + cfg.n_test;
    for index in 0..total {
        let split = if index < cfg.n_train { Split::Train } else { Split::Test };
        let scenario = scenario_at(&cfg.preset, index, cfg.seed)?;
        let prefix = format!("{}_{index:04}", scenario.name);
        let entries = generate_entries(&scenario, split, &prefix, cfg)?;
        for entry in &entries {
            inspect(entry)?;
            if let Some(dir) = out_dir {
                let d = entry_dir(&dir.join("dataset"), split, entry.seq_id());
                for v in Variant::BOTH {
                    write_sequence_dir(&d.join(v.as_str()), entry.variant(v), split, &entry.preset, entry.seed)?;
                }
            }
            if split == Split::Train {
                continue;
            }
            moving_ego.insert(entry.seq_id().to_string(), ego_moved(entry));
            preset_of.insert(entry.seq_id().to_string(), entry.preset.clone());
            for (p, v, result) in evaluate_entry(entry, cfg) {
                let report = reports
                    .iter_mut()
                    .find(|r| r.predictor == p.id() && r.variant == v)
                    .expect("report created for every supported pair");
                match result {
                    Ok(rows) => report.rows.extend(rows),
                    Err(e) => report.failures.push((entry.seq_id().to_string(), e)),
                }
            }
        }
        progress(index + 1, total);
    }
    let curves = if cfg.n_test > 0 { horizon_curves(&reports)? } else { Vec::new() };
    if let Some(dir) = out_dir {
        if cfg.n_test > 0 {
            write_metrics_csv(&dir.join("metrics.csv"), &reports)?;
            write_curves(&dir.join("curves"), &curves)?;
            let meta: Vec<serde_json::Value> = reports
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "predictor": r.predictor,
                        "variant": r.variant,
                        "channels": r.channels,
                        "masked": r.masked,
                        "sequences": r.rows.iter().map(|x| &x.seq_id).collect::<std::collections::BTreeSet<_>>().len(),
                        "failures": r.failures,
                    })
                })
                .collect();
            std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&meta)?)?;
        }
    }
    Ok(ExperimentOutput {
        reports,
        curves,
        moving_ego,
        presets: preset_of,
    })
}
