//! On-disk dataset layout:
//!
//! ```text
//! root/manifest.json
//! root/images/<id>.png
//! root/depth/<id>.npcd
//! root/uncert/<id>.npcd
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use npc_core::image::depth_percentile;
use npc_core::{Camera, DepthSource, ViewRecord};

use crate::codec;
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;
/// Every k-th view is held out for testing.
pub const DEFAULT_HOLDOUT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraEntry {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: [f64; 3],
    pub translation: [f64; 3],
}

impl CameraEntry {
    pub fn from_camera(c: &Camera) -> Self {
        Self {
            width: c.width,
            height: c.height,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            rotation: c.rotation(),
            translation: c.translation(),
        }
    }

    pub fn to_camera(&self) -> npc_core::Result<Camera> {
        Camera::new(
            self.width,
            self.height,
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.rotation,
            self.translation,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthKind {
    GroundTruth,
    PlaneSweep,
    External,
}

impl From<DepthKind> for DepthSource {
    fn from(k: DepthKind) -> Self {
        match k {
            DepthKind::GroundTruth => DepthSource::GroundTruth,
            DepthKind::PlaneSweep => DepthSource::PlaneSweep,
            DepthKind::External => DepthSource::External,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewEntry {
    pub id: String,
    pub image: String,
    pub depth: Option<String>,
    pub uncertainty: Option<String>,
    pub depth_source: Option<DepthKind>,
    pub camera: CameraEntry,
    pub time: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// Frame count; 1 for static scenes.
    pub frames: usize,
    /// Scene translation normalizer for the spatial encoding.
    pub trans_norm: f64,
    /// Depth normalizer, filled in once depth is available.
    pub d_scale: Option<f64>,
    /// Depth-map resolution relative to the images.
    pub depth_scale_factor: f64,
    pub views: Vec<ViewEntry>,
}

impl Manifest {
    /// Canonical text form: fixed field order, two-space indent, trailing newline.
    pub fn to_canonical(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub views: Vec<ViewRecord>,
}

/// Max camera translation norm, or 1 for a degenerate rig.
pub fn translation_normalizer<'a>(cams: impl IntoIterator<Item = &'a Camera>) -> f64 {
    let m = cams
        .into_iter()
        .map(|c| {
            let t = c.translation();
            (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt()
        })
        .fold(0.0, f64::max);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

pub fn default_split(index: usize, holdout: usize) -> Split {
    if holdout > 0 && index % holdout == 0 {
        Split::Test
    } else {
        Split::Train
    }
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self> {
        let mpath = root.join(MANIFEST);
        let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::format(
                &mpath,
                format!("unsupported format version {}", manifest.format_version),
            ));
        }
        if manifest.frames == 0 {
            return Err(Error::format(&mpath, "frames must be at least 1"));
        }
        let mut ids = HashSet::new();
        let mut views = Vec::with_capacity(manifest.views.len());
        for v in &manifest.views {
            if !ids.insert(v.id.as_str()) {
                return Err(Error::format(&mpath, format!("duplicate view id {}", v.id)));
            }
            if v.time >= manifest.frames {
                return Err(Error::format(&mpath, format!("view {} time {} out of range", v.id, v.time)));
            }
            let cam = v
                .camera
                .to_camera()
                .map_err(|e| Error::format(&mpath, format!("view {}: {e}", v.id)))?;
            let image = codec::read_png(&root.join(&v.image))?;
            let mut rec = ViewRecord::new(image, cam, v.time)?;
            if let Some(d) = &v.depth {
                let source = v.depth_source.unwrap_or(DepthKind::External).into();
                let depth = codec::read_depth(&root.join(d), source)?;
                let unc = match &v.uncertainty {
                    Some(u) => codec::read_uncertainty(&root.join(u))?,
                    None => npc_core::UncertaintyMap::filled(depth.width, depth.height, 0.0),
                };
                rec = rec.with_geometry(depth, unc)?;
            } else if v.uncertainty.is_some() {
                return Err(Error::format(&mpath, format!("view {} has uncertainty without depth", v.id)));
            }
            views.push(rec);
        }
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            views,
        })
    }

    /// Writes the manifest and every referenced file.
    pub fn save(&self) -> Result<()> {
        fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        for (entry, rec) in self.manifest.views.iter().zip(&self.views) {
            codec::write_png(&self.root.join(&entry.image), &rec.image)?;
            if let (Some(p), Some(d)) = (&entry.depth, &rec.depth) {
                codec::write_depth(&self.root.join(p), d)?;
            }
            if let (Some(p), Some(u)) = (&entry.uncertainty, &rec.uncertainty) {
                codec::write_uncertainty(&self.root.join(p), u)?;
            }
        }
        self.save_manifest()
    }

    pub fn save_manifest(&self) -> Result<()> {
        let mpath = self.root.join(MANIFEST);
        fs::write(&mpath, self.manifest.to_canonical()).map_err(|e| Error::io(&mpath, e))
    }

    /// Builds a dataset from in-memory views with default paths and split.
    pub fn from_views(root: &Path, views: Vec<ViewRecord>, frames: usize, holdout: usize) -> Self {
        let entries = views
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let id = format!("{i:03}");
                ViewEntry {
                    image: format!("images/{id}.png"),
                    depth: v.depth.as_ref().map(|_| format!("depth/{id}.npcd")),
                    uncertainty: v.uncertainty.as_ref().map(|_| format!("uncert/{id}.npcd")),
                    depth_source: v.depth.as_ref().map(|d| match d.source {
                        DepthSource::GroundTruth => DepthKind::GroundTruth,
                        DepthSource::PlaneSweep => DepthKind::PlaneSweep,
                        _ => DepthKind::External,
                    }),
                    camera: CameraEntry::from_camera(&v.camera),
                    time: v.time,
                    split: default_split(i, holdout),
                    id,
                }
            })
            .collect::<Vec<_>>();
        let mut ds = Self {
            root: root.to_path_buf(),
            manifest: Manifest {
                format_version: FORMAT_VERSION,
                frames,
                trans_norm: translation_normalizer(views.iter().map(|v| &v.camera)),
                d_scale: None,
                depth_scale_factor: 1.0,
                views: entries,
            },
            views,
        };
        ds.manifest.d_scale = ds.compute_d_scale();
        ds
    }

    pub fn is_train(&self, i: usize) -> bool {
        self.manifest.views[i].split == Split::Train
    }

    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.views.len()).filter(|&i| self.is_train(i)).collect()
    }

    pub fn test_indices(&self) -> Vec<usize> {
        (0..self.views.len()).filter(|&i| !self.is_train(i)).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.manifest.views.iter().position(|v| v.id == id)
    }

    /// 99th-percentile valid depth over the training views.
    pub fn compute_d_scale(&self) -> Option<f64> {
        depth_percentile(
            self.views
                .iter()
                .enumerate()
                .filter(|(i, _)| self.is_train(*i))
                .filter_map(|(_, v)| v.depth.as_ref()),
            0.99,
        )
    }

    pub fn d_scale(&self) -> Result<f64> {
        self.manifest
            .d_scale
            .or_else(|| self.compute_d_scale())
            .ok_or_else(|| Error::Invalid("dataset has no training depth; run `stereo` or supply depth maps".into()))
    }

    /// Frame count fed to the temporal encoding; 0 for static data.
    pub fn temporal_frames(&self) -> usize {
        if self.manifest.frames > 1 {
            self.manifest.frames
        } else {
            0
        }
    }
}
