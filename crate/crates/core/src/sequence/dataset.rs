//! Dataset layout:
//!
//! ```text
//! <root>/{train,test}/<seq_id>/{allo,ego}/frame_000.png … frame_{N+P-1}.png
//!                                        /mask/frame_###.png   (8-bit gray, 255 = evaluated)
//!                                        /meta.json
//! ```
//!
//! Frames are stored after masking. The same layout is the contract for
//! external predictors, which write `<variant dir>/pred/frame_###.png`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GridSequence, Variant, VisibilityMask};
use crate::frame::FramePlan;
use crate::geometry::Pose2D;
use crate::image::{read_png, write_png};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Contents of `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub seq_id: String,
    pub variant: Variant,
    pub split: Split,
    pub n_inputs: usize,
    pub horizon: usize,
    pub dt: f64,
    pub start_frame: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub frame_plan: FramePlan,
    pub ego_poses: Vec<Pose2D>,
    pub preset: String,
    pub generator_seed: u64,
    pub mask_provenance: String,
    pub channels: [String; 3],
}

pub const MASK_PROVENANCE: &str =
    "cumulative union of p_unknown < 0.5 up to each frame, intersected across allo and ego, nearest-neighbor materialized";

/// A paired allo/ego sequence with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub split: Split,
    pub preset: String,
    pub seed: u64,
    pub allo: GridSequence,
    pub ego: GridSequence,
}

impl DatasetEntry {
    pub fn seq_id(&self) -> &str {
        &self.allo.seq_id
    }

    pub fn variant(&self, v: Variant) -> &GridSequence {
        match v {
            Variant::Allo => &self.allo,
            Variant::Ego => &self.ego,
        }
    }
}

pub fn frame_name(k: usize) -> String {
    format!("frame_{k:03}.png")
}

fn layout_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Layout {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Writes one variant directory.
pub fn write_sequence_dir(dir: &Path, seq: &GridSequence, split: Split, preset: &str, seed: u64) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir.join("mask"))?;
    for (k, img) in seq.frames().enumerate() {
        write_png(dir.join(frame_name(k)), img)?;
    }
    if let Some(mask) = &seq.mask {
        for (k, m) in mask.frames.iter().enumerate() {
            let raw: Vec<u8> = m.iter().map(|&b| if b { 255 } else { 0 }).collect();
            image::GrayImage::from_raw(mask.width as u32, mask.height as u32, raw)
                .expect("mask sized from image")
                .save_with_format(dir.join("mask").join(frame_name(k)), image::ImageFormat::Png)?;
        }
    }
    let (w, h) = seq.dims();
    let meta = SequenceMeta {
        seq_id: seq.seq_id.clone(),
        variant: seq.variant,
        split,
        n_inputs: seq.n_inputs(),
        horizon: seq.horizon(),
        dt: seq.dt,
        start_frame: seq.start_frame,
        image_width: w,
        image_height: h,
        frame_plan: seq.frame_plan,
        ego_poses: seq.ego_poses.clone(),
        preset: preset.to_string(),
        generator_seed: seed,
        mask_provenance: MASK_PROVENANCE.to_string(),
        channels: ["unknown".into(), "dynamic".into(), "static".into()],
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Reads one variant directory written by [`write_sequence_dir`].
pub fn read_sequence_dir(dir: &Path) -> Result<(GridSequence, SequenceMeta)> {
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path).map_err(|e| layout_err(&meta_path, format!("cannot read: {e}")))?;
    let meta: SequenceMeta =
        serde_json::from_str(&text).map_err(|e| layout_err(&meta_path, format!("invalid metadata: {e}")))?;
    let total = meta.n_inputs + meta.horizon;
    if meta.ego_poses.len() != total {
        return Err(layout_err(
            &meta_path,
            format!("{} poses for {total} frames", meta.ego_poses.len()),
        ));
    }
    let mut frames = Vec::with_capacity(total);
    for k in 0..total {
        let p = dir.join(frame_name(k));
        if !p.is_file() {
            return Err(layout_err(&p, "missing frame"));
        }
        let img = read_png(&p, meta.start_frame + k)?;
        if img.dims() != (meta.image_width, meta.image_height) {
            return Err(layout_err(
                &p,
                format!("frame is {}x{}, metadata says {}x{}", img.width, img.height, meta.image_width, meta.image_height),
            ));
        }
        frames.push(img);
    }
    let mask_dir = dir.join("mask");
    let mask = if mask_dir.join(frame_name(0)).is_file() {
        let mut m = VisibilityMask {
            width: meta.image_width,
            height: meta.image_height,
            frames: Vec::with_capacity(total),
        };
        for k in 0..total {
            let p = mask_dir.join(frame_name(k));
            let img = image::open(&p).map_err(|e| layout_err(&p, format!("missing or unreadable mask: {e}")))?.to_luma8();
            if (img.width() as usize, img.height() as usize) != (meta.image_width, meta.image_height) {
                return Err(layout_err(&p, "mask size differs from frames"));
            }
            m.frames.push(img.pixels().map(|p| p.0[0] >= 128).collect());
        }
        Some(m)
    } else {
        None
    };
    let targets = frames.split_off(meta.n_inputs);
    let seq = GridSequence {
        seq_id: meta.seq_id.clone(),
        variant: meta.variant,
        inputs: frames,
        targets,
        dt: meta.dt,
        ego_poses: meta.ego_poses.clone(),
        frame_plan: meta.frame_plan,
        start_frame: meta.start_frame,
        mask,
    };
    Ok((seq, meta))
}

pub fn entry_dir(root: &Path, split: Split, seq_id: &str) -> PathBuf {
    root.join(split.as_str()).join(seq_id)
}

pub fn write_dataset(root: &Path, entries: &[DatasetEntry]) -> Result<()> {
    for e in entries {
        let dir = entry_dir(root, e.split, e.seq_id());
        for v in Variant::BOTH {
            write_sequence_dir(&dir.join(v.as_str()), e.variant(v), e.split, &e.preset, e.seed)?;
        }
    }
    Ok(())
}

/// Reads every entry under `root`, ordered by split then sequence id.
pub fn read_dataset(root: &Path) -> Result<Vec<DatasetEntry>> {
    if !root.is_dir() {
        return Err(layout_err(root, "dataset root is not a directory"));
    }
    let mut entries = Vec::new();
    for split in [Split::Train, Split::Test] {
        let sdir = root.join(split.as_str());
        if !sdir.is_dir() {
            continue;
        }
        let mut ids: Vec<PathBuf> = fs::read_dir(&sdir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        ids.sort();
        for dir in ids {
            let (allo, am) = read_sequence_dir(&dir.join("allo"))?;
            let (ego, _) = read_sequence_dir(&dir.join("ego"))?;
            if allo.seq_id != ego.seq_id {
                return Err(layout_err(&dir, "allo and ego sequence ids differ"));
            }
            entries.push(DatasetEntry {
                split,
                preset: am.preset,
                seed: am.generator_seed,
                allo,
                ego,
            });
        }
    }
    if entries.is_empty() {
        return Err(layout_err(root, "no sequences found under train/ or test/"));
    }
    Ok(entries)
}
