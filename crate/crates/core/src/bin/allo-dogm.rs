//! Command-line entry point: simulate scenes, run the filters, build paired
//! datasets, run predictors, evaluate and render comparisons.
//!
//! Settings come from flags, then an optional JSON config file (`--config`),
//! then built-in defaults. The effective configuration is written next to
//! every output as `config.json`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use allo_dogm::eval::{
    evaluate_prediction, horizon_curves, render_comparison_strip, write_curves, write_metrics_csv, BaseLoss, EvalReport,
    Metric, ZoomBox, DEFAULT_INSTANTS,
};
use allo_dogm::experiment::{run_experiment_with, scenario_at, generate_entries, ExperimentConfig};
use allo_dogm::filter::snapshot::save_grid;
use allo_dogm::frame::{
    mean_abs_state_diff, plan_allo_frame, run_allo_pipeline, run_allo_pipeline_with, run_ego_pipeline_with, AlloMode,
};
use allo_dogm::image::{encode, write_png};
use allo_dogm::predict::{run_external_sequence, Prediction, Predictor};
use allo_dogm::scene::{read_log_file, run_scenario, write_log_file, Scenario};
use allo_dogm::sequence::{entry_dir, frame_name, read_dataset, write_sequence_dir, DatasetEntry, Split, Variant};
use allo_dogm::{par, Error};

/// Allowed mean absolute state difference between the two allo modes on a
/// stationary-ego run.
const MODE_AGREEMENT: f64 = 0.05;

#[derive(Parser, Debug)]
#[command(name = "allo-dogm", version, about = "Allo-centric vs ego-centric occupancy grid prediction")]
struct Cli {
    /// Output root directory.
    #[arg(long, global = true, env = "ALLO_DOGM_OUT", default_value = "allo-dogm-out")]
    out: PathBuf,
    /// JSON file with (partial) experiment settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for data-parallel kernels; 1 runs sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a scenario and write its sensor log.
    Simulate(SimulateArgs),
    /// Run the occupancy filter on a sensor log or preset and write grid images.
    Filter(FilterArgs),
    /// Generate a paired allo/ego dataset.
    BuildDataset(DatasetArgs),
    /// Run a predictor on the test split of a dataset and write its frames.
    Predict(PredictArgs),
    /// Score a predictor on the test split of a dataset.
    Evaluate(PredictArgs),
    /// Full paired experiment: dataset, all predictors, metrics and curves.
    Compare(DatasetArgs),
    /// Render a comparison strip for one test sequence.
    Render(RenderArgs),
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Preset name, or "mix" to cycle through presets by index.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Scenario index within the experiment.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Scenario description file (JSON); overrides --preset.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Args, Debug)]
struct FilterArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Sensor log to filter instead of simulating.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Allo-grid mode: direct or fuse.
    #[arg(long)]
    mode: Option<AlloMode>,
    /// Which grid to produce.
    #[arg(long, default_value = "allo")]
    variant: Variant,
    /// Also write binary grid snapshots.
    #[arg(long)]
    snapshots: bool,
    /// Run both allo modes and check that they agree (stationary ego).
    #[arg(long)]
    check_modes: bool,
}

#[derive(Args, Debug)]
struct DatasetArgs {
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Input frames per sequence.
    #[arg(long)]
    inputs: Option<usize>,
    /// Predicted frames per sequence.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    mode: Option<AlloMode>,
    /// Resize images to a square of this many pixels.
    #[arg(long)]
    image_size: Option<usize>,
    /// Comma-separated predictors (compare only).
    #[arg(long, value_delimiter = ',')]
    predictors: Option<Vec<Predictor>>,
    #[command(flatten)]
    eval: EvalFlags,
}

#[derive(Args, Debug)]
struct EvalFlags {
    /// Weight of the unknown channel in the combined loss.
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the occupied channels in the combined loss.
    #[arg(long)]
    beta: Option<f64>,
    /// Base loss of the combined loss: l1 or l2.
    #[arg(long)]
    base_loss: Option<BaseLoss>,
    /// Comma-separated metrics.
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<Metric>>,
    /// Score whole frames instead of the common-visibility mask (diagnostics).
    #[arg(long)]
    unmasked: bool,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Dataset root (defaults to <out>/dataset).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// persistence, advect, ego-warp or external.
    #[arg(long)]
    predictor: String,
    #[arg(long)]
    variant: Variant,
    /// Command line of an external predictor (whitespace separated).
    #[arg(long)]
    cmd: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[command(flatten)]
    eval: EvalFlags,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Test sequence id.
    #[arg(long)]
    seq: String,
    #[arg(long)]
    variant: Variant,
    /// Comma-separated built-in predictors, one strip row each.
    #[arg(long, value_delimiter = ',', default_value = "persistence")]
    predictors: Vec<Predictor>,
    /// Comma-separated instants in seconds.
    #[arg(long, value_delimiter = ',')]
    instants: Option<Vec<f64>>,
    /// Zoom box outlined on every tile: x,y,width,height in pixels.
    #[arg(long, value_delimiter = ',')]
    zoom: Option<Vec<u32>>,
}

/// A failure annotated with the stage it happened in.
struct StageError {
    stage: &'static str,
    error: Error,
}

type StageResult<T> = Result<T, StageError>;

trait Stage<T> {
    fn stage(self, stage: &'static str) -> StageResult<T>;
}

impl<T, E: Into<Error>> Stage<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> StageResult<T> {
        self.map_err(|e| StageError { stage, error: e.into() })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    par::configure_workers(cli.jobs);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {}", e.stage, e.error);
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> StageResult<()> {
    let base = load_config(cli.config.as_deref()).stage("config")?;
    match &cli.command {
        Command::Simulate(a) => simulate(cli, &base, a),
        Command::Filter(a) => filter(cli, &base, a),
        Command::BuildDataset(a) => build_dataset(cli, &base, a),
        Command::Predict(a) => predict(cli, &base, a, false),
        Command::Evaluate(a) => predict(cli, &base, a, true),
        Command::Compare(a) => compare(cli, &base, a),
        Command::Render(a) => render(cli, &base, a),
    }
}

fn load_config(path: Option<&Path>) -> allo_dogm::Result<ExperimentConfig> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

/// Validates the effective configuration, writes it into `dir` and echoes it.
fn echo_config(dir: &Path, cfg: &ExperimentConfig) -> StageResult<()> {
    cfg.validate().stage("config")?;
    std::fs::create_dir_all(dir).stage("output")?;
    let json = serde_json::to_string_pretty(cfg).stage("config")?;
    std::fs::write(dir.join("config.json"), &json).stage("output")?;
    eprintln!("effective configuration:\n{json}");
    Ok(())
}

fn apply_eval_flags(cfg: &mut ExperimentConfig, f: &EvalFlags) {
    if let Some(a) = f.alpha {
        cfg.eval.weights.alpha = a;
    }
    if let Some(b) = f.beta {
        cfg.eval.weights.beta = b;
    }
    if let Some(b) = f.base_loss {
        cfg.eval.base = b;
    }
    if let Some(m) = &f.metrics {
        cfg.eval.metrics = m.clone();
    }
    if f.unmasked {
        cfg.eval.masked = false;
    }
}

fn apply_dataset_flags(cfg: &mut ExperimentConfig, a: &DatasetArgs) {
    if let Some(p) = &a.preset {
        cfg.preset = p.clone();
    }
    if let Some(n) = a.n_train {
        cfg.n_train = n;
    }
    if let Some(n) = a.n_test {
        cfg.n_test = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.inputs {
        cfg.n_inputs = n;
    }
    if let Some(p) = a.horizon {
        cfg.horizon = p;
    }
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    if a.image_size.is_some() {
        cfg.image_size = a.image_size;
    }
    if let Some(p) = &a.predictors {
        cfg.predictors = p.clone();
    }
    apply_eval_flags(cfg, &a.eval);
}

fn load_scenario(cfg: &mut ExperimentConfig, a: &ScenarioArgs) -> StageResult<Scenario> {
    if let Some(p) = &a.preset {
        cfg.preset = p.clone();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let scenario = match &a.scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path).stage("scenario")?;
            serde_json::from_str::<Scenario>(&text).stage("scenario")?
        }
        None => scenario_at(&cfg.preset, a.index, cfg.seed).stage("scenario")?,
    };
    scenario.validate().stage("scenario")?;
    Ok(scenario)
}

fn simulate(cli: &Cli, base: &ExperimentConfig, a: &SimulateArgs) -> StageResult<()> {
    let mut cfg = base.clone();
    let scenario = load_scenario(&mut cfg, &a.scenario)?;
    let dir = cli.out.join("simulate").join(format!("{}_{:04}", scenario.name, a.scenario.index));
    echo_config(&dir, &cfg)?;
    let log = run_scenario(&scenario).stage("simulate")?;
    std::fs::write(dir.join("scenario.json"), serde_json::to_string_pretty(&scenario).stage("output")?)
        .stage("output")?;
    write_log_file(&log, &dir.join("log.jsonl")).stage("output")?;
    println!("{} frames -> {}", log.len(), dir.display());
    Ok(())
}

fn filter(cli: &Cli, base: &ExperimentConfig, a: &FilterArgs) -> StageResult<()> {
    let mut cfg = base.clone();
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    let (name, log) = match &a.log {
        Some(path) => (
            path.file_stem().map_or("log".into(), |s| s.to_string_lossy().into_owned()),
            read_log_file(path).stage("read log")?,
        ),
        None => {
            let s = load_scenario(&mut cfg, &a.scenario)?;
            cfg.pipeline.dt = s.dt;
            let log = run_scenario(&s).stage("simulate")?;
            (format!("{}_{:04}", s.name, a.scenario.index), log)
        }
    };
    let first = log
        .first()
        .ok_or_else(|| Error::Data("empty sensor log".into()))
        .stage("read log")?;
    let plan = plan_allo_frame(first.ego_pose);
    let label = match a.variant {
        Variant::Allo => format!("allo-{}", cfg.mode),
        Variant::Ego => "ego".to_string(),
    };
    let dir = cli.out.join("filter").join(&name).join(&label);
    echo_config(&dir, &cfg)?;
    let write = |g: &allo_dogm::filter::OccGrid, k: usize| -> allo_dogm::Result<()> {
        write_png(dir.join(frame_name(k)), &encode(g, k))?;
        if a.snapshots {
            save_grid(dir.join(format!("frame_{k:03}.dogm")), g)?;
        }
        Ok(())
    };
    match a.variant {
        Variant::Allo => run_allo_pipeline_with(&log, &plan, cfg.mode, &cfg.pipeline, write),
        Variant::Ego => run_ego_pipeline_with(&log, &plan, &cfg.pipeline, write),
    }
    .stage("filter")?;
    println!("{} frames -> {}", log.len(), dir.display());

    if a.check_modes {
        let direct = run_allo_pipeline(&log, &plan, AlloMode::Direct, &cfg.pipeline).stage("filter direct")?;
        let fused = run_allo_pipeline(&log, &plan, AlloMode::Fuse, &cfg.pipeline).stage("filter fuse")?;
        let mut worst: f64 = 0.0;
        for (d, f) in direct.iter().zip(&fused) {
            worst = worst.max(mean_abs_state_diff(d, f).stage("mode check")?);
        }
        println!("direct vs fuse: max mean absolute state difference {worst:.5} (limit {MODE_AGREEMENT})");
        if worst > MODE_AGREEMENT {
            return Err(Error::Data(format!("allo modes disagree: {worst:.5} > {MODE_AGREEMENT}"))).stage("mode check");
        }
    }
    Ok(())
}

fn build_dataset(cli: &Cli, base: &ExperimentConfig, a: &DatasetArgs) -> StageResult<()> {
    let mut cfg = base.clone();
    apply_dataset_flags(&mut cfg, a);
    let root = cli.out.join("dataset");
    echo_config(&root, &cfg)?;
    let total = cfg.n_train + cfg.n_test;
    let mut count = 0;
    for index in 0..total {
        let split = if index < cfg.n_train { Split::Train } else { Split::Test };
        let scenario = scenario_at(&cfg.preset, index, cfg.seed).stage("scenario")?;
        let prefix = format!("{}_{index:04}", scenario.name);
        let entries = generate_entries(&scenario, split, &prefix, &cfg).stage("generate")?;
        for e in &entries {
            let d = entry_dir(&root, split, e.seq_id());
            for v in Variant::BOTH {
                write_sequence_dir(&d.join(v.as_str()), e.variant(v), split, &e.preset, e.seed).stage("write dataset")?;
            }
        }
        count += entries.len();
        eprintln!("[{}/{total}] {prefix}", index + 1);
    }
    println!("{count} sequence pairs -> {}", root.display());
    Ok(())
}

fn dataset_root(cli: &Cli, given: &Option<PathBuf>) -> PathBuf {
    given.clone().unwrap_or_else(|| cli.out.join("dataset"))
}

/// Runs a built-in or external predictor on one test entry.
fn run_predictor(
    entry: &DatasetEntry,
    root: &Path,
    name: &str,
    variant: Variant,
    cmd: &Option<String>,
    p: usize,
    cfg: &ExperimentConfig,
) -> allo_dogm::Result<Prediction> {
    let seq = entry.variant(variant);
    if name == "external" {
        let cmd: Vec<String> = cmd
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("--cmd is required for the external predictor".into()))?
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let dir = entry_dir(root, entry.split, entry.seq_id()).join(variant.as_str());
        return run_external_sequence(&cmd, "external", &dir, seq, p);
    }
    let predictor: Predictor = name.parse()?;
    let pred = predictor.predict(seq, p, &cfg.advect)?;
    pred.validate(p, seq.dims())?;
    Ok(pred)
}

fn predict(cli: &Cli, base: &ExperimentConfig, a: &PredictArgs, score: bool) -> StageResult<()> {
    let mut cfg = base.clone();
    apply_eval_flags(&mut cfg, &a.eval);
    if let Some(p) = a.horizon {
        cfg.horizon = p;
    }
    if a.predictor != "external" {
        a.predictor.parse::<Predictor>().stage("arguments")?;
    }
    let root = dataset_root(cli, &a.dataset);
    let entries = read_dataset(&root).stage("read dataset")?;
    let tests: Vec<&DatasetEntry> = entries.iter().filter(|e| e.split == Split::Test).collect();
    if tests.is_empty() {
        return Err(Error::Data(format!("no test sequences under {}", root.display()))).stage("read dataset");
    }
    let sub = if score { "evaluate" } else { "predict" };
    let dir = cli.out.join(sub).join(format!("{}_{}", a.predictor, a.variant));
    echo_config(&dir, &cfg)?;
    let mut report = EvalReport::new(&a.predictor, a.variant, &cfg.eval);
    for entry in tests {
        let p = cfg.horizon.min(entry.variant(a.variant).horizon());
        let outcome = run_predictor(entry, &root, &a.predictor, a.variant, &a.cmd, p, &cfg).and_then(|pred| {
            if score {
                evaluate_prediction(entry.variant(a.variant), &pred, &cfg.eval)
            } else {
                let d = dir.join(entry.seq_id());
                std::fs::create_dir_all(&d)?;
                for (k, f) in pred.frames.iter().enumerate() {
                    write_png(d.join(frame_name(k)), f)?;
                }
                if !pred.flags.is_empty() {
                    eprintln!("{}: {}", entry.seq_id(), pred.flags.join(", "));
                }
                Ok(Vec::new())
            }
        });
        match outcome {
            Ok(rows) => report.rows.extend(rows),
            Err(e) => {
                eprintln!("{}: {e}", entry.seq_id());
                report.failures.push((entry.seq_id().to_string(), e.to_string()));
            }
        }
    }
    if score {
        let reports = [report];
        write_metrics_csv(&dir.join("metrics.csv"), &reports).stage("write metrics")?;
        if reports[0].rows.is_empty() {
            return Err(Error::Data("every sequence failed".into())).stage("evaluate");
        }
        let curves = horizon_curves(&reports).stage("curves")?;
        write_curves(&dir.join("curves"), &curves).stage("write curves")?;
        for c in &curves {
            println!("{} {} {} {:.1}s {:.6} (n={})", c.predictor, c.variant, c.metric.name(), c.horizon_s, c.mean, c.n_sequences);
        }
        report_failures(&reports[0].failures)
    } else {
        println!("predictions -> {}", dir.display());
        report_failures(&report.failures)
    }
}

fn report_failures(failures: &[(String, String)]) -> StageResult<()> {
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::Data(format!("{} sequence(s) failed", failures.len()))).stage("predict")
    }
}

fn compare(cli: &Cli, base: &ExperimentConfig, a: &DatasetArgs) -> StageResult<()> {
    let mut cfg = base.clone();
    apply_dataset_flags(&mut cfg, a);
    let dir = cli.out.join("compare");
    echo_config(&dir, &cfg)?;
    let out = run_experiment_with(&cfg, Some(&dir), |done, total| eprintln!("[{done}/{total}]")).stage("experiment")?;
    for c in &out.curves {
        println!(
            "{:12} {:4} {:13} {:.1}s {:.6} (n={})",
            c.predictor,
            c.variant,
            c.metric.name(),
            c.horizon_s,
            c.mean,
            c.n_sequences
        );
    }
    let failures: usize = out.reports.iter().map(|r| r.failures.len()).sum();
    println!("results -> {}", dir.display());
    if failures > 0 {
        for r in &out.reports {
            for (id, why) in &r.failures {
                eprintln!("{} {} {id}: {why}", r.predictor, r.variant);
            }
        }
        return Err(Error::Data(format!("{failures} prediction(s) failed"))).stage("experiment");
    }
    Ok(())
}

fn render(cli: &Cli, base: &ExperimentConfig, a: &RenderArgs) -> StageResult<()> {
    let root = dataset_root(cli, &a.dataset);
    let entries = read_dataset(&root).stage("read dataset")?;
    let entry = entries
        .iter()
        .find(|e| e.split == Split::Test && e.seq_id() == a.seq)
        .ok_or_else(|| Error::InvalidArgument(format!("no test sequence '{}'", a.seq)))
        .stage("read dataset")?;
    let seq = entry.variant(a.variant);
    let preds: Vec<Prediction> = a
        .predictors
        .iter()
        .map(|p| p.predict(seq, seq.horizon(), &base.advect))
        .collect::<allo_dogm::Result<_>>()
        .stage("predict")?;
    let refs: Vec<&Prediction> = preds.iter().collect();
    let instants = a.instants.clone().unwrap_or_else(|| DEFAULT_INSTANTS.to_vec());
    let zoom = match a.zoom.as_deref() {
        None => None,
        Some(&[x, y, width, height]) => Some(ZoomBox { x, y, width, height }),
        Some(_) => {
            return Err(Error::InvalidArgument("--zoom takes x,y,width,height".into())).stage("arguments");
        }
    };
    let (img, layout) = render_comparison_strip(seq, &refs, &instants, zoom).stage("render")?;
    let dir = cli.out.join("render");
    std::fs::create_dir_all(&dir).stage("output")?;
    let path = dir.join(format!("{}_{}.png", a.seq, a.variant));
    img.save_with_format(&path, image::ImageFormat::Png).stage("output")?;
    let names: Vec<&str> = a.predictors.iter().map(|p| p.id()).collect();
    println!(
        "{}x{} tiles, rows: target, {} -> {}",
        layout.cols,
        layout.rows,
        names.join(", "),
        path.display()
    );
    Ok(())
}
