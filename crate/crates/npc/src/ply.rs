//! Binary little-endian PLY with `float x, y, z` and `uchar red, green, blue`.

use std::fs;
use std::path::Path;

use npc_core::reconstruction::{CloudPoint, PointCloud};
use npc_core::Vec3;

use crate::error::{Error, Result};

pub fn header(count: usize) -> String {
    format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {count}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
    )
}

pub const VERTEX_BYTES: usize = 15;

pub fn encode(cloud: &PointCloud) -> Vec<u8> {
    let h = header(cloud.points.len());
    let mut out = Vec::with_capacity(h.len() + VERTEX_BYTES * cloud.points.len());
    out.extend_from_slice(h.as_bytes());
    for p in &cloud.points {
        for v in [p.position.x, p.position.y, p.position.z] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.extend_from_slice(&p.color);
    }
    out
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode(cloud)).map_err(|e| Error::io(path, e))
}

/// Reads files in exactly the layout written by [`write_ply`]. The source
/// view and pixel are not stored and come back as 0.
pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, &bytes)
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<PointCloud> {
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::format(path, "missing end_header"))?
        + END.len();
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::format(path, "non-text header"))?;
    let count = text
        .lines()
        .find_map(|l| l.strip_prefix("element vertex "))
        .and_then(|n| n.trim().parse::<usize>().ok())
        .ok_or_else(|| Error::format(path, "missing vertex count"))?;
    if text != header(count) {
        return Err(Error::format(path, "unsupported PLY layout"));
    }
    let body = &bytes[end..];
    if body.len() != count * VERTEX_BYTES {
        return Err(Error::format(path, "vertex data length mismatch"));
    }
    let f = |c: &[u8], i: usize| f32::from_le_bytes(c[4 * i..4 * i + 4].try_into().expect("4 bytes")) as f64;
    let points = body
        .chunks_exact(VERTEX_BYTES)
        .map(|c| CloudPoint {
            position: Vec3::new(f(c, 0), f(c, 1), f(c, 2)),
            color: [c[12], c[13], c[14]],
            source_view: 0,
            pixel: 0,
        })
        .collect();
    Ok(PointCloud { points })
}
