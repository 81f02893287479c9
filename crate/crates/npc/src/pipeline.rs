//! Parallel drivers tying datasets, descriptors and models together.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use npc_core::camera::select_sources;
use npc_core::descriptor::{choose_sources, DescriptorGrid};
use npc_core::metrics::{psnr, ssim};
use npc_core::model::EVAL_CHUNK;
use npc_core::reconstruction::{self, PointCloud};
use npc_core::render::{self, build_grid, NaiveMode, RenderedImage};
use npc_core::stereo::{inverse_depth_candidates, plane_sweep_rows, SweepParams};
use npc_core::train::{ChunkExecutor, ChunkOutput, TrainConfig, Trainer, TrainingView};
use npc_core::{Camera, CompositionConfig, DepthMap, DepthSource, Image, MlpModel, UncertaintyMap};

use crate::cache::DescriptorCache;
use crate::checkpoint::round_to_storage;
use crate::dataset::{Dataset, DepthKind};
use crate::error::{Error, Result};

/// Runs training chunks on the rayon pool, keeping chunk order.
pub struct RayonExecutor;

impl ChunkExecutor for RayonExecutor {
    fn run(
        &self,
        chunks: usize,
        job: &(dyn Fn(usize) -> npc_core::Result<ChunkOutput> + Sync),
    ) -> Vec<npc_core::Result<ChunkOutput>> {
        (0..chunks).into_par_iter().map(job).collect()
    }
}

/// Network and descriptor settings chosen by the user; dataset-derived
/// normalizers are filled in by [`composition_config`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelOptions {
    pub k: usize,
    pub n: usize,
    pub freq_l: usize,
    pub sigma_t: f64,
    pub hidden: usize,
    pub layers: usize,
    pub flags: npc_core::AblationFlags,
}

impl Default for ModelOptions {
    fn default() -> Self {
        let c = CompositionConfig::default();
        Self {
            k: c.k,
            n: c.n,
            freq_l: c.freq_l,
            sigma_t: c.sigma_t,
            hidden: c.hidden,
            layers: c.layers,
            flags: c.flags,
        }
    }
}

/// K saturates at the number of other training views.
pub fn composition_config(ds: &Dataset, o: &ModelOptions) -> Result<CompositionConfig> {
    let train = ds.train_indices().len();
    let cfg = CompositionConfig {
        n: o.n,
        k: o.k.min(train.saturating_sub(1)).max(1),
        freq_l: o.freq_l,
        frames: ds.temporal_frames(),
        sigma_t: o.sigma_t,
        d_scale: ds.d_scale()?,
        trans_norm: ds.manifest.trans_norm,
        hidden: o.hidden,
        layers: o.layers,
        flags: o.flags,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Training-split sources for a target camera at frame `time`.
pub fn sources_for(ds: &Dataset, cam: &Camera, k: usize, exclude: Option<usize>, time: usize) -> Vec<usize> {
    choose_sources(cam, &ds.views, k, exclude, Some(time), |j| ds.is_train(j))
}

/// Descriptor grid for a target, through the cache when one is given.
pub fn target_grid(
    ds: &Dataset,
    cfg: &CompositionConfig,
    cam: &Camera,
    exclude: Option<usize>,
    time: usize,
    cache: Option<&DescriptorCache>,
) -> Result<DescriptorGrid> {
    let sources = sources_for(ds, cam, cfg.k, exclude, time);
    let key = match (cache, exclude) {
        (Some(c), Some(t)) => Some(c.key(t, &sources, cfg.n, cfg.d_scale)),
        _ => None,
    };
    if let (Some(c), Some(k)) = (cache, &key) {
        if let Some(g) = c.get(k) {
            if g.width == cam.width && g.height == cam.height && g.n == cfg.n {
                return Ok(g);
            }
        }
    }
    let g = build_grid(cam, &ds.views, &sources, cfg.n, cfg.d_scale)?;
    if let (Some(c), Some(k)) = (cache, &key) {
        c.put(k, &g)?;
    }
    Ok(g)
}

pub fn training_views(ds: &Dataset, cfg: &CompositionConfig, cache: Option<&DescriptorCache>) -> Result<Vec<TrainingView>> {
    ds.train_indices()
        .into_par_iter()
        .map(|i| {
            let v = &ds.views[i];
            let grid = target_grid(ds, cfg, &v.camera, Some(i), v.time, cache)?;
            let usable = grid.valid.iter().any(|&c| c > 0);
            Ok(TrainingView {
                id: i,
                camera: v.camera.clone(),
                image: v.image.clone(),
                time: v.time,
                grid: usable.then_some(grid),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub loss: f64,
    pub seconds: f64,
}

impl EpochReport {
    pub fn line(&self) -> String {
        format!("epoch={} loss={:.6} seconds={:.3}", self.epoch, self.loss, self.seconds)
    }
}

/// Trains a model; `on_epoch` sees each finished epoch with the current
/// weights rounded to checkpoint precision.
pub fn train<F>(
    ds: &Dataset,
    cfg: CompositionConfig,
    tcfg: TrainConfig,
    cache: Option<&DescriptorCache>,
    mut on_epoch: F,
) -> Result<(MlpModel, Vec<EpochReport>, u64)>
where
    F: FnMut(&EpochReport, &MlpModel) -> Result<()>,
{
    tcfg.validate()?;
    let views = training_views(ds, &cfg, cache)?;
    let model = MlpModel::new(cfg, tcfg.seed)?;
    let mut trainer = Trainer::new(model, &views, tcfg)?;
    let mut history = Vec::with_capacity(tcfg.epochs);
    while !trainer.finished() {
        let t0 = Instant::now();
        let loss = trainer.run_epoch(&views, &RayonExecutor)?;
        let report = EpochReport {
            epoch: trainer.epoch,
            loss,
            seconds: t0.elapsed().as_secs_f64(),
        };
        let mut snapshot = trainer.model.clone();
        round_to_storage(&mut snapshot);
        on_epoch(&report, &snapshot)?;
        history.push(report);
    }
    let mut model = trainer.model;
    round_to_storage(&mut model);
    Ok((model, history, trainer.step))
}

/// Pixels per parallel work item; a multiple of the evaluation chunk so the
/// batching does not depend on the worker count.
const BAND: usize = 4 * EVAL_CHUNK;

pub fn render_grid(model: &MlpModel, grid: &DescriptorGrid, cam: &Camera, tau: Option<usize>) -> Result<RenderedImage> {
    model.check_time(tau)?;
    let count = cam.pixel_count();
    let mut image = Image::new(cam.width, cam.height);
    let mut valid = vec![false; count];
    image
        .data
        .par_chunks_mut(BAND)
        .zip(valid.par_chunks_mut(BAND))
        .enumerate()
        .try_for_each(|(b, (colors, valid))| {
            let start = b * BAND;
            render::render_pixels(model, grid, cam, tau, start..start + colors.len(), colors, valid)
        })?;
    Ok(RenderedImage { image, valid })
}

/// Renders `cam` from the dataset's training views; `exclude` drops a view
/// (normally the target itself) from the sources.
pub fn render_view(
    model: &MlpModel,
    ds: &Dataset,
    cam: &Camera,
    exclude: Option<usize>,
    tau: Option<usize>,
) -> Result<RenderedImage> {
    let tau = Some(model.check_time(tau)?);
    let time = if ds.manifest.frames > 1 { tau.unwrap_or(0) } else { 0 };
    let grid = target_grid(ds, &model.config, cam, exclude, time, None)?;
    render_grid(model, &grid, cam, tau)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub view: usize,
    pub id: String,
    pub psnr: f64,
    pub ssim: f64,
}

impl EvalRow {
    pub fn line(&self) -> String {
        format!("view={} psnr={:.4} ssim={:.6}", self.id, self.psnr, self.ssim)
    }
}

/// Scores on 8-bit quantized values, the precision images are stored at.
pub fn score(ds: &Dataset, view: usize, rendered: &Image) -> Result<EvalRow> {
    let q = rendered.quantized();
    let gt = &ds.views[view].image;
    Ok(EvalRow {
        view,
        id: ds.manifest.views[view].id.clone(),
        psnr: psnr(&q, gt)?,
        ssim: ssim(&q, gt)?,
    })
}

/// Renders and scores each of `views` (held-out views by default).
pub fn evaluate(model: &MlpModel, ds: &Dataset, views: &[usize]) -> Result<Vec<(EvalRow, RenderedImage)>> {
    views
        .iter()
        .map(|&i| {
            let v = &ds.views[i];
            let r = render_view(model, ds, &v.camera, Some(i), Some(v.time))?;
            Ok((score(ds, i, &r.image)?, r))
        })
        .collect()
}

pub fn naive_render(ds: &Dataset, cfg: &CompositionConfig, view: usize, mode: NaiveMode, background: [f64; 3]) -> Result<Image> {
    let v = &ds.views[view];
    let grid = target_grid(ds, cfg, &v.camera, Some(view), v.time, None)?;
    Ok(render::render_naive(&grid, mode, background))
}

pub fn extract_depth(model: &MlpModel, ds: &Dataset, view: usize) -> Result<DepthMap> {
    let v = &ds.views[view];
    let tau = Some(model.check_time(Some(v.time))?);
    let grid = target_grid(ds, &model.config, &v.camera, Some(view), v.time, None)?;
    Ok(reconstruction::extract_depth(model, &grid, &v.camera, tau)?)
}

/// Fuses every view of the dataset, in view order.
pub fn fuse(model: &MlpModel, ds: &Dataset, delta: f64) -> Result<PointCloud> {
    let parts: Vec<Vec<_>> = (0..ds.views.len())
        .into_par_iter()
        .map(|i| {
            let v = &ds.views[i];
            let tau = Some(model.check_time(Some(v.time))?);
            let grid = target_grid(ds, &model.config, &v.camera, Some(i), v.time, None)?;
            Ok(reconstruction::fuse_pixels(
                model,
                &grid,
                &v.camera,
                tau,
                &ds.views,
                &v.image,
                i as u32,
                delta,
                0..v.camera.pixel_count(),
            )?)
        })
        .collect::<Result<_>>()?;
    Ok(PointCloud {
        points: parts.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoOptions {
    pub near: f64,
    pub far: f64,
    pub candidates: usize,
    pub params: SweepParams,
}

/// Replaces every view's depth and uncertainty with a plane sweep against
/// its nearest neighbour (same frame), then refreshes `d_scale`.
pub fn stereo(ds: &mut Dataset, opts: &StereoOptions) -> Result<()> {
    let cands = inverse_depth_candidates(opts.near, opts.far, opts.candidates)?;
    let results: Vec<(DepthMap, UncertaintyMap)> = (0..ds.views.len())
        .map(|i| {
            let v = &ds.views[i];
            let others = ds.views.iter().enumerate().filter(|(j, o)| *j != i && o.time == v.time);
            let partner = select_sources(&v.camera, others.map(|(j, o)| (j, &o.camera)), 1);
            let Some(&j) = partner.first() else {
                return Err(Error::Invalid(format!("view {} has no partner view", ds.manifest.views[i].id)));
            };
            let (w, h) = (v.image.width, v.image.height);
            let rows: Vec<u32> = (0..h).collect();
            let bands: Vec<(Vec<f32>, Vec<f32>)> = rows
                .par_chunks(8)
                .map(|r| plane_sweep_rows(v, &ds.views[j], &cands, opts.params, r[0]..r[r.len() - 1] + 1))
                .collect::<npc_core::Result<_>>()?;
            let (mut d, mut u) = (Vec::with_capacity((w * h) as usize), Vec::with_capacity((w * h) as usize));
            for (bd, bu) in bands {
                d.extend(bd);
                u.extend(bu);
            }
            Ok((
                DepthMap::from_values(w, h, d, DepthSource::PlaneSweep)?,
                UncertaintyMap::from_values(w, h, u)?,
            ))
        })
        .collect::<Result<_>>()?;
    for (i, (d, u)) in results.into_iter().enumerate() {
        let e = &mut ds.manifest.views[i];
        e.depth = Some(format!("depth/{}.npcd", e.id));
        e.uncertainty = Some(format!("uncert/{}.npcd", e.id));
        e.depth_source = Some(DepthKind::PlaneSweep);
        ds.views[i].depth = Some(d);
        ds.views[i].uncertainty = Some(u);
    }
    ds.manifest.d_scale = ds.compute_d_scale();
    Ok(())
}

/// Default cache location inside the dataset.
pub fn default_cache_dir(ds: &Dataset) -> PathBuf {
    ds.root.join("cache")
}
