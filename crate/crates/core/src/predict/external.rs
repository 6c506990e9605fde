//! External predictor protocol.
//!
//! The program is run as `<cmd> --seq <variant dir> --variant {allo|ego}
//! --horizon P` and must write `<variant dir>/pred/frame_000.png …
//! frame_{P-1}.png` with the dimensions of the input frames.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use super::Prediction;
use crate::image::read_png;
use crate::sequence::{read_dataset, GridSequence, Split, Variant};
use crate::{Error, Result};

/// Result for one test sequence; failures do not stop the batch.
#[derive(Debug)]
pub struct ExternalOutcome {
    pub seq_id: String,
    pub result: Result<Prediction>,
}

/// Runs the program on one variant directory and validates its output.
pub fn run_external_sequence(
    cmd: &[String],
    predictor_id: &str,
    dir: &Path,
    seq: &GridSequence,
    p: usize,
) -> Result<Prediction> {
    let (program, args) = cmd
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("empty external command".into()))?;
    let pred_dir = dir.join("pred");
    if pred_dir.exists() {
        std::fs::remove_dir_all(&pred_dir)?;
    }
    let start = Instant::now();
    let output = Command::new(program)
        .args(args)
        .arg("--seq")
        .arg(dir)
        .arg("--variant")
        .arg(seq.variant.as_str())
        .arg("--horizon")
        .arg(p.to_string())
        .output()
        .map_err(|e| Error::External(format!("cannot start '{program}': {e}")))?;
    let wall_time = start.elapsed().as_secs_f64();
    if !output.status.success() {
        return Err(Error::External(format!(
            "'{program}' exited with {} on {}: {}",
            output.status,
            dir.display(),
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    let last_t = seq.inputs.last().map_or(0, |f| f.t);
    let mut frames = Vec::with_capacity(p);
    for k in 0..p {
        let path = pred_dir.join(crate::sequence::frame_name(k));
        if !path.is_file() {
            return Err(Error::External(format!(
                "{}: missing predicted frame {} ({k} of {p} present)",
                seq.seq_id,
                path.display()
            )));
        }
        frames.push(read_png(&path, last_t + k + 1)?);
    }
    let extra = pred_dir.join(crate::sequence::frame_name(p));
    if extra.exists() {
        return Err(Error::External(format!("{}: more than {p} predicted frames", seq.seq_id)));
    }
    let pred = Prediction {
        frames,
        predictor_id: predictor_id.to_string(),
        wall_time,
        flags: Vec::new(),
    };
    pred.validate(p, seq.dims())
        .map_err(|e| Error::External(format!("{}: invalid prediction: {e}", seq.seq_id)))?;
    Ok(pred)
}

/// Runs the program on every test sequence of the dataset at `root`.
pub fn run_external(root: &Path, cmd: &[String], predictor_id: &str, variant: Variant, p: usize) -> Result<Vec<ExternalOutcome>> {
    let entries = read_dataset(root)?;
    Ok(entries
        .iter()
        .filter(|e| e.split == Split::Test)
        .map(|e| {
            let dir = crate::sequence::entry_dir(root, e.split, e.seq_id()).join(variant.as_str());
            ExternalOutcome {
                seq_id: e.seq_id().to_string(),
                result: run_external_sequence(cmd, predictor_id, &dir, e.variant(variant), p),
            }
        })
        .collect())
}
