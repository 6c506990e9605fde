use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{channel_mse, ssim, weighted_loss_masked, BaseLoss, LossWeights, DEFAULT_CHANNELS};
use crate::image::Channel;
use crate::predict::Prediction;
use crate::sequence::{GridSequence, Variant};
use crate::{Error, Result};

pub const METRICS_HEADER: &str = "seq_id,predictor,variant,metric,horizon_s,value";
pub const CURVES_HEADER: &str = "predictor,variant,metric,horizon_s,mean,n_sequences";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mse,
    Ssim,
    WeightedLoss,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Mse, Metric::Ssim, Metric::WeightedLoss];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Ssim => "ssim",
            Metric::WeightedLoss => "weighted_loss",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric '{s}' (mse|ssim|weighted_loss)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub weights: LossWeights,
    pub base: BaseLoss,
    /// Channels for MSE and SSIM.
    pub channels: Vec<Channel>,
    /// Restrict scoring to the common-visibility mask when one is present.
    pub masked: bool,
    pub metrics: Vec<Metric>,
    /// 1-based target frames at which metrics are reported.
    pub bucket_frames: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            base: BaseLoss::default(),
            channels: DEFAULT_CHANNELS.to_vec(),
            masked: true,
            metrics: Metric::ALL.to_vec(),
            bucket_frames: vec![5, 10, 15, 20, 25],
        }
    }
}

/// One metric value of one sequence at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub seq_id: String,
    pub predictor: String,
    pub variant: Variant,
    pub metric: Metric,
    pub horizon_s: f64,
    pub value: f64,
}

fn horizon_seconds(k: usize, dt: f64) -> f64 {
    (k as f64 * dt * 1e6).round() / 1e6
}

/// Scores one prediction against the targets of `seq` at every bucket.
pub fn evaluate_prediction(seq: &GridSequence, pred: &Prediction, config: &EvalConfig) -> Result<Vec<MetricRow>> {
    config.weights.validate()?;
    let mut rows = Vec::new();
    for &k in &config.bucket_frames {
        if k == 0 || k > seq.horizon() || k > pred.horizon() {
            continue;
        }
        let target = &seq.targets[k - 1];
        let frame = &pred.frames[k - 1];
        let mask = if config.masked {
            seq.mask.as_ref().map(|m| m.frames[seq.n_inputs() + k - 1].as_slice())
        } else {
            None
        };
        for &metric in &config.metrics {
            let value = match metric {
                Metric::Mse => channel_mse(frame, target, &config.channels, mask)?,
                Metric::Ssim => ssim(frame, target, &config.channels, mask)?,
                Metric::WeightedLoss => weighted_loss_masked(frame, target, &config.weights, config.base, mask)?,
            };
            rows.push(MetricRow {
                seq_id: seq.seq_id.clone(),
                predictor: pred.predictor_id.clone(),
                variant: seq.variant,
                metric,
                horizon_s: horizon_seconds(k, seq.dt),
                value,
            });
        }
    }
    Ok(rows)
}

/// All scores of one predictor on one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub predictor: String,
    pub variant: Variant,
    /// Channels MSE and SSIM were computed on.
    pub channels: Vec<Channel>,
    pub masked: bool,
    pub rows: Vec<MetricRow>,
    /// `(seq_id, reason)` for sequences that could not be scored.
    pub failures: Vec<(String, String)>,
}

impl EvalReport {
    pub fn new(predictor: &str, variant: Variant, config: &EvalConfig) -> Self {
        Self {
            predictor: predictor.to_string(),
            variant,
            channels: config.channels.clone(),
            masked: config.masked,
            rows: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn values(&self, metric: Metric, horizon_s: f64) -> impl Iterator<Item = &MetricRow> {
        self.rows
            .iter()
            .filter(move |r| r.metric == metric && (r.horizon_s - horizon_s).abs() < 1e-9)
    }

    pub fn mean(&self, metric: Metric, horizon_s: f64) -> Option<f64> {
        let (s, n) = self.values(metric, horizon_s).fold((0.0, 0usize), |(s, n), r| (s + r.value, n + 1));
        (n > 0).then(|| s / n as f64)
    }

    /// Distinct horizons, ascending.
    pub fn horizons(&self) -> Vec<f64> {
        let mut h: Vec<f64> = self.rows.iter().map(|r| r.horizon_s).collect();
        h.sort_by(f64::total_cmp);
        h.dedup();
        h
    }

    /// Value of `metric` at `horizon_s` for each sequence.
    pub fn per_sequence(&self, metric: Metric, horizon_s: f64) -> BTreeMap<String, f64> {
        self.values(metric, horizon_s).map(|r| (r.seq_id.clone(), r.value)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub predictor: String,
    pub variant: Variant,
    pub metric: Metric,
    pub horizon_s: f64,
    pub mean: f64,
    pub n_sequences: usize,
}

/// Mean per bucket for every predictor × variant × metric.
pub fn horizon_curves(reports: &[EvalReport]) -> Result<Vec<CurveRow>> {
    if reports.iter().all(|r| r.rows.is_empty()) {
        return Err(Error::Data("no evaluated sequences".into()));
    }
    let mut acc: BTreeMap<(String, Variant, Metric, i64), (f64, usize)> = BTreeMap::new();
    for r in reports {
        for row in &r.rows {
            let key = (row.predictor.clone(), row.variant, row.metric, (row.horizon_s * 1e6).round() as i64);
            let e = acc.entry(key).or_insert((0.0, 0));
            e.0 += row.value;
            e.1 += 1;
        }
    }
    Ok(acc
        .into_iter()
        .map(|((predictor, variant, metric, h), (s, n))| CurveRow {
            predictor,
            variant,
            metric,
            horizon_s: h as f64 / 1e6,
            mean: s / n as f64,
            n_sequences: n,
        })
        .collect())
}

pub fn write_metrics_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for row in reports.iter().flat_map(|r| &r.rows) {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.seq_id,
            row.predictor,
            row.variant,
            row.metric.name(),
            row.horizon_s,
            row.value
        )
        .expect("writing to a String");
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Data(format!("{}: unexpected header", path.display())));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Data(format!("{}: malformed row {}", path.display(), i + 2));
            if f.len() != 6 {
                return Err(bad());
            }
            Ok(MetricRow {
                seq_id: f[0].to_string(),
                predictor: f[1].to_string(),
                variant: f[2].parse()?,
                metric: f[3].parse()?,
                horizon_s: f[4].parse().map_err(|_| bad())?,
                value: f[5].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Writes `curves.csv` and one plot per predictor × metric into `dir`.
/// Returns the plot paths.
pub fn write_curves(dir: &Path, curves: &[CurveRow]) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = String::from(CURVES_HEADER);
    out.push('\n');
    for c in curves {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            c.predictor,
            c.variant,
            c.metric.name(),
            c.horizon_s,
            c.mean,
            c.n_sequences
        )
        .expect("writing to a String");
    }
    std::fs::write(dir.join("curves.csv"), out)?;

    let mut groups: BTreeMap<(String, Metric), Vec<&CurveRow>> = BTreeMap::new();
    for c in curves {
        groups.entry((c.predictor.clone(), c.metric)).or_default().push(c);
    }
    let mut paths = Vec::new();
    for ((predictor, metric), rows) in groups {
        let series: Vec<(Variant, Vec<[f64; 2]>)> = Variant::BOTH
            .iter()
            .map(|&v| {
                (
                    v,
                    rows.iter()
                        .filter(|r| r.variant == v)
                        .map(|r| [r.horizon_s, r.mean])
                        .collect(),
                )
            })
            .filter(|(_, pts): &(Variant, Vec<[f64; 2]>)| !pts.is_empty())
            .collect();
        let path = dir.join(format!("plot_{predictor}_{}.png", metric.name()));
        super::render_curve_plot(&series)?.save_with_format(&path, image::ImageFormat::Png)?;
        paths.push(path);
    }
    Ok(paths)
}
