//! Binary snapshot files.
//!
//! All fields little-endian:
//!
//! | offset | type  | field                               |
//! |--------|-------|-------------------------------------|
//! | 0      | [u8;4]| magic `ADOG`                        |
//! | 4      | u16   | format version (1)                  |
//! | 6      | u16   | payload kind (1 grid, 2 float image)|
//! | 8      | u32   | width                               |
//! | 12     | u32   | height                              |
//! | 16     | f64   | resolution (m/cell)                 |
//! | 24     | f64×3 | origin x, y, theta                  |
//! | 48     | ...   | payload, row-major                  |
//!
//! A grid payload stores each cell as four u16 fixed-point probabilities
//! (static, dynamic, free, unknown; probability = value / 65535). Velocities
//! are not stored. The float-image payload is written by
//! [`crate::image::write_float`].

use std::io::{Read, Write};

use super::{CellState, GridGeometry, OccGrid};
use crate::geometry::Pose2D;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"ADOG";
pub const VERSION: u16 = 1;
pub const KIND_GRID: u16 = 1;
pub const KIND_FLOAT_IMAGE: u16 = 2;
pub const HEADER_LEN: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub kind: u16,
    pub geometry: GridGeometry,
}

pub fn write_header(w: &mut impl Write, header: &Header) -> Result<()> {
    let g = &header.geometry;
    let mut buf = Vec::with_capacity(HEADER_LEN);
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&header.kind.to_le_bytes());
    buf.extend_from_slice(&(g.width as u32).to_le_bytes());
    buf.extend_from_slice(&(g.height as u32).to_le_bytes());
    for v in [g.resolution, g.origin.x, g.origin.y, g.origin.theta] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_header(r: &mut impl Read) -> Result<Header> {
    let mut buf = [0u8; HEADER_LEN];
    r.read_exact(&mut buf)?;
    if buf[0..4] != MAGIC {
        return Err(Error::Data("not a snapshot file (bad magic)".into()));
    }
    let u16_at = |o: usize| u16::from_le_bytes([buf[o], buf[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
    let version = u16_at(4);
    if version != VERSION {
        return Err(Error::Data(format!("unsupported snapshot version {version}")));
    }
    let geometry = GridGeometry::new(
        u32_at(8) as usize,
        u32_at(12) as usize,
        f64_at(16),
        Pose2D {
            x: f64_at(24),
            y: f64_at(32),
            theta: f64_at(40),
        },
    )?;
    Ok(Header {
        kind: u16_at(6),
        geometry,
    })
}

fn to_fixed(p: f32) -> u16 {
    (p.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16
}

pub fn write_grid(w: &mut impl Write, grid: &OccGrid) -> Result<()> {
    write_header(
        w,
        &Header {
            kind: KIND_GRID,
            geometry: grid.geometry,
        },
    )?;
    let mut buf = Vec::with_capacity(grid.cells.len() * 8);
    for c in &grid.cells {
        for p in c.to_array() {
            buf.extend_from_slice(&to_fixed(p).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a grid snapshot. Cells are renormalized after dequantization.
pub fn read_grid(r: &mut impl Read) -> Result<OccGrid> {
    let header = read_header(r)?;
    if header.kind != KIND_GRID {
        return Err(Error::Data(format!("expected grid snapshot, found kind {}", header.kind)));
    }
    let mut grid = OccGrid::unknown(header.geometry);
    let mut buf = vec![0u8; grid.cells.len() * 8];
    r.read_exact(&mut buf)?;
    for (c, chunk) in grid.cells.iter_mut().zip(buf.chunks_exact(8)) {
        let v = |k: usize| u16::from_le_bytes([chunk[2 * k], chunk[2 * k + 1]]) as f32 / 65535.0;
        *c = CellState::new(v(0), v(1), v(2), v(3)).normalized();
    }
    Ok(grid)
}

pub fn save_grid(path: impl AsRef<std::path::Path>, grid: &OccGrid) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_grid(&mut f, grid)?;
    f.flush()?;
    Ok(())
}

pub fn load_grid(path: impl AsRef<std::path::Path>) -> Result<OccGrid> {
    read_grid(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}
