//! Content-addressed on-disk cache of descriptor grids.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use npc_core::descriptor::{DescriptorGrid, SampleOrigin};

use crate::dataset::{Dataset, MANIFEST};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"NPCG";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 over the manifest and every file it references.
pub fn dataset_hash(ds: &Dataset) -> Result<String> {
    let mut h = Sha256::new();
    let mut add = |p: &Path| -> Result<()> {
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
        Ok(())
    };
    add(&ds.root.join(MANIFEST))?;
    for v in &ds.manifest.views {
        add(&ds.root.join(&v.image))?;
        for p in v.depth.iter().chain(&v.uncertainty) {
            add(&ds.root.join(p))?;
        }
    }
    Ok(hex(&h.finalize()))
}

#[derive(Debug, Clone)]
pub struct DescriptorCache {
    pub dir: PathBuf,
    pub dataset: String,
}

impl DescriptorCache {
    pub fn new(dir: PathBuf, ds: &Dataset) -> Result<Self> {
        Ok(Self {
            dir,
            dataset: dataset_hash(ds)?,
        })
    }

    pub fn key(&self, target: usize, sources: &[usize], n: usize, d_scale: f64) -> String {
        let mut h = Sha256::new();
        h.update(self.dataset.as_bytes());
        h.update((target as u64).to_le_bytes());
        h.update((sources.len() as u64).to_le_bytes());
        for s in sources {
            h.update((*s as u64).to_le_bytes());
        }
        h.update((n as u64).to_le_bytes());
        h.update(d_scale.to_le_bytes());
        hex(&h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.npcg"))
    }

    pub fn get(&self, key: &str) -> Option<DescriptorGrid> {
        let p = self.path(key);
        let bytes = fs::read(&p).ok()?;
        decode(&bytes)
    }

    pub fn put(&self, key: &str, grid: &DescriptorGrid) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let p = self.path(key);
        // write-then-rename so a concurrent reader never sees a partial file
        let tmp = self.dir.join(format!("{key}.tmp{}", std::process::id()));
        fs::write(&tmp, encode(grid)).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &p).map_err(|e| Error::io(&p, e))
    }
}

pub fn encode(g: &DescriptorGrid) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    for v in [g.width, g.height, g.n as u32] {
        b.extend_from_slice(&v.to_le_bytes());
    }
    for v in &g.valid {
        b.extend_from_slice(&v.to_le_bytes());
    }
    for arr in [&g.colors, &g.depths, &g.uncertainties] {
        for v in arr.iter() {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    for o in &g.origins {
        for v in [o.view, o.x, o.y] {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    b
}

pub fn decode(b: &[u8]) -> Option<DescriptorGrid> {
    if b.get(..4)? != MAGIC {
        return None;
    }
    let u32_at = |i: usize| -> Option<u32> { Some(u32::from_le_bytes(b.get(i..i + 4)?.try_into().ok()?)) };
    let (w, h, n) = (u32_at(4)?, u32_at(8)?, u32_at(12)? as usize);
    let p = w as usize * h as usize;
    let expected = 16 + 4 * p + 8 * (5 * p * n) + 12 * p * n;
    if b.len() != expected {
        return None;
    }
    let mut g = DescriptorGrid::new(w, h, n);
    let mut pos = 16;
    for v in &mut g.valid {
        *v = u32_at(pos)?;
        pos += 4;
    }
    for arr in [&mut g.colors, &mut g.depths, &mut g.uncertainties] {
        for v in arr.iter_mut() {
            *v = f64::from_le_bytes(b[pos..pos + 8].try_into().ok()?);
            pos += 8;
        }
    }
    for o in &mut g.origins {
        *o = SampleOrigin {
            view: u32_at(pos)?,
            x: u32_at(pos + 4)?,
            y: u32_at(pos + 8)?,
        };
        pos += 12;
    }
    Some(g)
}
