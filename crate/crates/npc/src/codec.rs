//! Raster codecs: the NPCD float raster, PFM import and 8-bit PNG.

use std::fs;
use std::path::Path;

use npc_core::image::quantize_u8;
use npc_core::{DepthMap, DepthSource, Image, UncertaintyMap};

use crate::error::{Error, Result};

pub const NPCD_MAGIC: &[u8; 4] = b"NPCD";
pub const NPCD_HEADER: usize = 16;
/// On-disk marker for a missing depth.
pub const MISSING_DEPTH: f32 = -1.0;

pub fn encode_raster(width: u32, height: u32, values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(NPCD_HEADER + 4 * values.len());
    out.extend_from_slice(NPCD_MAGIC);
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raster(path: &Path, bytes: &[u8]) -> Result<(u32, u32, Vec<f32>)> {
    if bytes.len() < NPCD_HEADER || &bytes[..4] != NPCD_MAGIC {
        return Err(Error::format(path, "not an NPCD raster (bad magic)"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let (w, h) = (word(4), word(8));
    let count = w as usize * h as usize;
    if bytes.len() != NPCD_HEADER + 4 * count {
        return Err(Error::format(path, format!("expected {count} samples for {w}x{h}")));
    }
    let values = bytes[NPCD_HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((w, h, values))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let vals: Vec<f32> = depth
        .values
        .iter()
        .map(|v| if v.is_nan() { MISSING_DEPTH } else { *v })
        .collect();
    write_bytes(path, &encode_raster(depth.width, depth.height, &vals))
}

/// Negative (and other non-positive) values decode to missing.
pub fn read_depth(path: &Path, source: DepthSource) -> Result<DepthMap> {
    let (w, h, v) = decode_raster(path, &read_bytes(path)?)?;
    Ok(DepthMap::from_values(w, h, v, source)?)
}

pub fn write_uncertainty(path: &Path, u: &UncertaintyMap) -> Result<()> {
    write_bytes(path, &encode_raster(u.width, u.height, &u.values))
}

pub fn read_uncertainty(path: &Path) -> Result<UncertaintyMap> {
    let (w, h, v) = decode_raster(path, &read_bytes(path)?)?;
    Ok(UncertaintyMap::from_values(w, h, v)?)
}

/// Reads a PFM file (`Pf` grayscale or first channel of `PF`), top row first.
pub fn read_pfm(path: &Path) -> Result<(u32, u32, Vec<f32>)> {
    let bytes = read_bytes(path)?;
    // header: three whitespace-separated tokens after the type line
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "truncated PFM header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let channels = match tokens[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(Error::format(path, "not a PFM file")),
    };
    let parse = |s: &str| s.parse::<u32>().map_err(|_| Error::format(path, "bad PFM dimensions"));
    let (w, h) = (parse(&tokens[1])?, parse(&tokens[2])?);
    let scale: f32 = tokens[3].parse().map_err(|_| Error::format(path, "bad PFM scale"))?;
    let little = scale < 0.0;
    let count = w as usize * h as usize * channels;
    let data = bytes.get(pos..pos + 4 * count).ok_or_else(|| Error::format(path, "truncated PFM data"))?;
    let mut out = vec![0.0f32; w as usize * h as usize];
    for (i, c) in data.chunks_exact(4 * channels).enumerate() {
        let b: [u8; 4] = c[..4].try_into().expect("4 bytes");
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (x, y) = (i % w as usize, i / w as usize);
        // PFM stores the bottom row first
        out[(h as usize - 1 - y) * w as usize + x] = v;
    }
    Ok((w, h, out))
}

pub fn write_png(path: &Path, img: &Image) -> Result<()> {
    let raw: Vec<u8> = img.data.iter().flat_map(|p| p.map(quantize_u8)).collect();
    let buf = image::RgbImage::from_raw(img.width, img.height, raw).expect("buffer matches dimensions");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_png(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })?;
    let rgb = img.to_rgb8();
    let data = rgb
        .pixels()
        .map(|p| p.0.map(|c| c as f32 / 255.0))
        .collect();
    Ok(Image::from_data(rgb.width(), rgb.height(), data)?)
}
