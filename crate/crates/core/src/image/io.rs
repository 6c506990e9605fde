use std::io::{Read, Write};
use std::path::Path;

use super::{quantize, GridImage};
use crate::filter::snapshot::{read_header, write_header, Header, KIND_FLOAT_IMAGE};
use crate::filter::GridGeometry;
use crate::geometry::Pose2D;
use crate::{Error, Result};

/// 8-bit RGB raster of an image.
pub fn to_rgb8(img: &GridImage) -> image::RgbImage {
    let raw: Vec<u8> = img.data.iter().flat_map(|p| p.map(quantize)).collect();
    image::RgbImage::from_raw(img.width as u32, img.height as u32, raw).expect("buffer sized from image")
}

pub fn from_rgb8(raster: &image::RgbImage, t: usize) -> GridImage {
    GridImage {
        width: raster.width() as usize,
        height: raster.height() as usize,
        data: raster.pixels().map(|p| p.0.map(|v| v as f32 / 255.0)).collect(),
        t,
    }
}

pub fn write_png(path: impl AsRef<Path>, img: &GridImage) -> Result<()> {
    to_rgb8(img).save_with_format(path.as_ref(), image::ImageFormat::Png)?;
    Ok(())
}

/// Reads an 8-bit PNG; any color type is converted to RGB.
pub fn read_png(path: impl AsRef<Path>, t: usize) -> Result<GridImage> {
    let raster = image::open(path.as_ref())?.to_rgb8();
    Ok(from_rgb8(&raster, t))
}

/// Lossless float storage in the snapshot container: header, frame index
/// (u32) and interleaved little-endian f32 RGB pixels.
pub fn write_float(w: &mut impl Write, img: &GridImage) -> Result<()> {
    let geometry = GridGeometry::new(img.width.max(1), img.height.max(1), 1.0, Pose2D::default())?;
    write_header(
        w,
        &Header {
            kind: KIND_FLOAT_IMAGE,
            geometry,
        },
    )?;
    let mut buf = Vec::with_capacity(4 + img.len() * 12);
    buf.extend_from_slice(&(img.t as u32).to_le_bytes());
    for p in &img.data {
        for v in p {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_float(r: &mut impl Read) -> Result<GridImage> {
    let header = read_header(r)?;
    if header.kind != KIND_FLOAT_IMAGE {
        return Err(Error::Data(format!("expected float image, found kind {}", header.kind)));
    }
    let (width, height) = (header.geometry.width, header.geometry.height);
    let mut t = [0u8; 4];
    r.read_exact(&mut t)?;
    let mut buf = vec![0u8; width * height * 12];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(12)
        .map(|c| std::array::from_fn(|k| f32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap())))
        .collect();
    Ok(GridImage {
        width,
        height,
        data,
        t: u32::from_le_bytes(t) as usize,
    })
}

pub fn save_float(path: impl AsRef<Path>, img: &GridImage) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_float(&mut f, img)?;
    f.flush()?;
    Ok(())
}

pub fn load_float(path: impl AsRef<Path>) -> Result<GridImage> {
    read_float(&mut std::io::BufReader::new(std::fs::File::open(path)?))
}
