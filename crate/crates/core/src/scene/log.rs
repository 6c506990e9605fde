//! Newline-delimited JSON sensor logs: one `{t, ego_pose, rays}` record per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{SensorFrame, SensorLog};
use crate::{Error, Result};

pub fn write_log<W: Write>(log: &[SensorFrame], mut out: W) -> Result<()> {
    for frame in log {
        serde_json::to_writer(&mut out, frame)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_log<R: Read>(input: R) -> Result<SensorLog> {
    let mut frames = Vec::new();
    for (lineno, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let frame: SensorFrame = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("sensor log line {}: {e}", lineno + 1)))?;
        frames.push(frame);
    }
    Ok(frames)
}

pub fn write_log_file(log: &[SensorFrame], path: &Path) -> Result<()> {
    write_log(log, BufWriter::new(File::create(path)?))
}

pub fn read_log_file(path: &Path) -> Result<SensorLog> {
    read_log(File::open(path)?)
}
