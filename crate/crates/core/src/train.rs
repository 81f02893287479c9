//! Self-supervised training: pixel sampling, L1 loss, learning-rate schedule
//! and the optimization loop.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{Camera, PixelCoord};
use crate::descriptor::{DescriptorGrid, DescriptorRef};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::mlp::{adam_step, AdamState, BatchWorkspace, Gradients};
use crate::model::MlpModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub images_per_step: usize,
    pub pixels_per_image: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            base_lr: 2e-4,
            images_per_step: 4,
            pixels_per_image: 256,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn batch_size(&self) -> usize {
        self.images_per_step * self.pixels_per_image
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.images_per_step == 0 || self.pixels_per_image == 0 {
            return Err(Error::InvalidArgument("epochs and batch counts must be at least 1"));
        }
        if !(self.base_lr >= 0.0) || !self.base_lr.is_finite() {
            return Err(Error::InvalidArgument("learning rate must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Constant for the first half of training, then linear decay to zero.
pub fn lr_schedule(progress: f64, base_lr: f64, epochs: usize) -> f64 {
    let half = epochs as f64 * 0.5;
    if progress < half {
        base_lr
    } else {
        let r = 1.0 - (progress - half) / half;
        base_lr * r.clamp(0.0, 1.0)
    }
}

/// Per-pixel L1 loss and its subgradient (0 at ties).
pub fn l1_loss(pred: [f64; 3], gt: [f64; 3]) -> (f64, [f64; 3]) {
    let mut loss = 0.0;
    let mut grad = [0.0; 3];
    for c in 0..3 {
        let r = pred[c] - gt[c];
        loss += r.abs();
        grad[c] = if r > 0.0 {
            1.0
        } else if r < 0.0 {
            -1.0
        } else {
            0.0
        };
    }
    (loss, grad)
}

/// A training target: its image and the descriptors built against it.
#[derive(Debug, Clone)]
pub struct TrainingView {
    pub id: usize,
    pub camera: Camera,
    pub image: Image,
    pub time: usize,
    /// `None` when no source could be splatted into this view.
    pub grid: Option<DescriptorGrid>,
}

impl TrainingView {
    pub fn trainable(&self) -> bool {
        self.grid.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchItem {
    /// Index into the training-view slice.
    pub view: usize,
    pub pixel: usize,
}

const MAX_RESAMPLES: usize = 64;

/// Draws `images_per_step` views (without replacement when enough exist)
/// and `pixels_per_image` uniform pixels from each.
pub fn sample_batch(views: &[TrainingView], cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Vec<BatchItem>> {
    if !views.iter().any(TrainingView::trainable) {
        return Err(Error::NoTrainableView("no training view has buildable descriptors"));
    }
    let mut chosen: Vec<usize> = if views.len() >= cfg.images_per_step {
        index::sample(rng, views.len(), cfg.images_per_step).into_vec()
    } else {
        (0..cfg.images_per_step).map(|_| rng.gen_range(0..views.len())).collect()
    };
    for v in &mut chosen {
        let mut tries = 0;
        while !views[*v].trainable() {
            tries += 1;
            if tries > MAX_RESAMPLES {
                return Err(Error::NoTrainableView("resampling budget exhausted"));
            }
            *v = rng.gen_range(0..views.len());
        }
    }
    let mut items = Vec::with_capacity(cfg.batch_size());
    for v in chosen {
        let count = views[v].image.data.len();
        for _ in 0..cfg.pixels_per_image {
            items.push(BatchItem {
                view: v,
                pixel: rng.gen_range(0..count),
            });
        }
    }
    Ok(items)
}

/// L1 loss of one pixel and its gradient, through the per-sample network
/// path. Reference for the batched path.
pub fn pixel_gradient(
    model: &MlpModel,
    desc: DescriptorRef<'_>,
    px: PixelCoord,
    cam: &Camera,
    tau: Option<usize>,
    gt: [f64; 3],
) -> Result<(f64, Gradients)> {
    let tau = model.check_time(tau)?;
    let n = model.config.n;
    let mut input = vec![0.0; model.input_dim()];
    model.write_input(desc, px, cam, tau, &mut input)?;
    let out = model.params.forward(&input)?;
    let mut raw = out.w.clone();
    raw.extend_from_slice(&out.gamma);
    let mut h = vec![0.0; n];
    let mut alpha = vec![0.0; n];
    let (_, color) = model.compose_raw(desc, &raw, &mut h, &mut alpha);
    let (loss, gc) = l1_loss(color, gt);
    let mut grad_raw = vec![0.0; n + 3];
    model.compose_backward(desc, &raw, gc, &mut h, &mut alpha, &mut grad_raw);
    let grads = model.params.backward(&out.cache, &grad_raw[..n], [grad_raw[n], grad_raw[n + 1], grad_raw[n + 2]])?;
    Ok((loss, grads))
}

/// Summed gradient and loss of one chunk of a batch.
#[derive(Debug, Clone)]
pub struct ChunkOutput {
    pub grads: Gradients,
    pub loss: f64,
}

/// Runs the per-chunk work of a step. Results must come back in chunk order.
pub trait ChunkExecutor {
    fn run(&self, chunks: usize, job: &(dyn Fn(usize) -> Result<ChunkOutput> + Sync)) -> Vec<Result<ChunkOutput>>;
}

pub struct SerialExecutor;

impl ChunkExecutor for SerialExecutor {
    fn run(&self, chunks: usize, job: &(dyn Fn(usize) -> Result<ChunkOutput> + Sync)) -> Vec<Result<ChunkOutput>> {
        (0..chunks).map(job).collect()
    }
}

/// Samples per chunk. Fixed so the reduction order never depends on the
/// number of workers.
pub const TRAIN_CHUNK: usize = 256;

/// Mean loss and gradient over `items`, reduced chunk by chunk in order.
pub fn batch_gradient<E: ChunkExecutor + ?Sized>(
    model: &MlpModel,
    views: &[TrainingView],
    items: &[BatchItem],
    exec: &E,
) -> Result<(f64, Gradients)> {
    if items.is_empty() {
        return Err(Error::InvalidArgument("empty batch"));
    }
    let scale = 1.0 / items.len() as f64;
    let chunks = items.len().div_ceil(TRAIN_CHUNK);
    let job = |ci: usize| -> Result<ChunkOutput> {
        let part = &items[ci * TRAIN_CHUNK..((ci + 1) * TRAIN_CHUNK).min(items.len())];
        chunk_gradient(model, views, part, scale)
    };
    let mut total: Option<ChunkOutput> = None;
    for r in exec.run(chunks, &job) {
        let r = r?;
        match &mut total {
            None => total = Some(r),
            Some(t) => {
                t.grads.add_assign(&r.grads);
                t.loss += r.loss;
            }
        }
    }
    let t = total.expect("at least one chunk");
    Ok((t.loss, t.grads))
}

fn chunk_gradient(model: &MlpModel, views: &[TrainingView], part: &[BatchItem], scale: f64) -> Result<ChunkOutput> {
    let n = model.config.n;
    let dim = model.input_dim();
    let out_dim = n + 3;
    let mut inputs = vec![0.0; part.len() * dim];
    for (i, it) in part.iter().enumerate() {
        let v = &views[it.view];
        let grid = v.grid.as_ref().ok_or(Error::NoTrainableView("sampled view lacks descriptors"))?;
        let w = v.camera.width as usize;
        let px = PixelCoord::new((it.pixel % w) as f64, (it.pixel / w) as f64);
        let tau = model.check_time(Some(v.time))?;
        model.write_input(grid.get(it.pixel), px, &v.camera, tau, &mut inputs[i * dim..(i + 1) * dim])?;
    }
    let mut ws = BatchWorkspace::default();
    let raw = model.params.forward_batch(&inputs, part.len(), &mut ws)?.to_vec();
    let mut grad_out = vec![0.0; part.len() * out_dim];
    let mut h = vec![0.0; n];
    let mut alpha = vec![0.0; n];
    let mut loss = 0.0;
    for (i, it) in part.iter().enumerate() {
        let v = &views[it.view];
        let desc = v.grid.as_ref().expect("checked above").get(it.pixel);
        let r = &raw[i * out_dim..(i + 1) * out_dim];
        let (_, color) = model.compose_raw(desc, r, &mut h, &mut alpha);
        let g = v.image.data[it.pixel];
        let (l, gc) = l1_loss(color, [g[0] as f64, g[1] as f64, g[2] as f64]);
        loss += l * scale;
        let gc = [gc[0] * scale, gc[1] * scale, gc[2] * scale];
        model.compose_backward(desc, r, gc, &mut h, &mut alpha, &mut grad_out[i * out_dim..(i + 1) * out_dim]);
    }
    let mut grads = Gradients::zeros_like(&model.params);
    model.params.backward_batch(&mut ws, &grad_out, &mut grads)?;
    Ok(ChunkOutput { grads, loss })
}

/// Optimization state across steps and epochs.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: MlpModel,
    pub adam: AdamState,
    pub cfg: TrainConfig,
    pub steps_per_epoch: u64,
    pub step: u64,
    pub epoch: usize,
    rng: ChaCha8Rng,
}

/// Stream separation between parameter init and batch sampling.
const SAMPLER_STREAM: u64 = 0x5eed_0f_ba7c4;

impl Trainer {
    pub fn new(model: MlpModel, views: &[TrainingView], cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let pixels: usize = views.iter().filter(|v| v.trainable()).map(|v| v.image.data.len()).sum();
        if pixels == 0 {
            return Err(Error::NoTrainableView("no training view has buildable descriptors"));
        }
        let steps_per_epoch = pixels.div_ceil(cfg.batch_size()) as u64;
        Ok(Self {
            adam: AdamState::new(&model.params),
            model,
            cfg,
            steps_per_epoch,
            step: 0,
            epoch: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ SAMPLER_STREAM),
        })
    }

    /// One optimizer step at the given epoch progress; returns the batch loss.
    pub fn step<E: ChunkExecutor + ?Sized>(&mut self, views: &[TrainingView], progress: f64, exec: &E) -> Result<f64> {
        let items = sample_batch(views, &self.cfg, &mut self.rng)?;
        let (loss, grads) = batch_gradient(&self.model, views, &items, exec)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.step });
        }
        let lr = lr_schedule(progress, self.cfg.base_lr, self.cfg.epochs);
        adam_step(&mut self.model.params, &grads, &mut self.adam, lr)?;
        self.step += 1;
        Ok(loss)
    }

    /// Runs one epoch and returns its mean batch loss.
    pub fn run_epoch<E: ChunkExecutor + ?Sized>(&mut self, views: &[TrainingView], exec: &E) -> Result<f64> {
        let mut sum = 0.0;
        for s in 0..self.steps_per_epoch {
            let progress = self.epoch as f64 + s as f64 / self.steps_per_epoch as f64;
            sum += self.step(views, progress, exec)?;
        }
        self.epoch += 1;
        Ok(sum / self.steps_per_epoch as f64)
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.cfg.epochs
    }
}
