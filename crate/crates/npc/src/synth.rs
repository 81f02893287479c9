//! Synthetic scene generation onto disk.

use std::path::Path;

use rayon::prelude::*;

use npc_core::synth::{render_view, SceneSpec};
use npc_core::ViewRecord;

use crate::dataset::Dataset;
use crate::error::Result;

/// Renders every camera and frame of `spec` (in parallel per view), writes
/// the dataset under `root` and loads it back, so callers see exactly what
/// is stored on disk.
pub fn gen_synthetic(spec: &SceneSpec, seed: u64, root: &Path, holdout: usize) -> Result<Dataset> {
    spec.validate()?;
    let cams = spec.cameras()?;
    let jobs: Vec<(usize, usize)> = (0..spec.frames).flat_map(|f| (0..cams.len()).map(move |c| (f, c))).collect();
    let views: Vec<ViewRecord> = jobs
        .par_iter()
        .map(|&(f, c)| {
            let (img, d, u) = render_view(spec, &cams[c], f, seed);
            Ok(ViewRecord::new(img, cams[c].clone(), f)?.with_geometry(d, u)?)
        })
        .collect::<npc_core::Result<_>>()?;
    let ds = Dataset::from_views(root, views, spec.frames, holdout);
    ds.save()?;
    Dataset::load(root)
}
