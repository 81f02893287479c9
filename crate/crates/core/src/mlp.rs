//! Fully connected ReLU network with analytic gradients and Adam.
//!
//! Parameters live in one flat buffer, layer by layer, each layer being an
//! `out×in` row-major weight block followed by its bias. Gradients and the
//! Adam moments use the same layout, so the optimizer is a single sweep.
//!
//! Two evaluation paths exist: a per-sample one that keeps every
//! pre-activation (used for inspection and gradient checks), and a batched
//! one built on GEMM that training and rendering use.

use alloc::vec;
use alloc::vec::Vec;

use matrixmultiply::dgemm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math;

/// Shape of the network. The last layer emits `n_samples` raw weights
/// followed by a 3-channel correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub n_samples: usize,
}

impl Architecture {
    pub fn output_dim(&self) -> usize {
        self.n_samples + 3
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.n_samples == 0 {
            return Err(Error::InvalidArgument("input and output sizes must be nonzero"));
        }
        if self.layers == 0 {
            return Err(Error::InvalidArgument("at least one layer is required"));
        }
        if self.layers > 1 && self.hidden == 0 {
            return Err(Error::InvalidArgument("hidden width must be nonzero"));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` per layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        (0..self.layers)
            .map(|l| {
                let fan_in = if l == 0 { self.input_dim } else { self.hidden };
                let fan_out = if l + 1 == self.layers { self.output_dim() } else { self.hidden };
                (fan_in, fan_out)
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    arch: Architecture,
    dims: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    pub data: Vec<f64>,
}

/// Parameter-shaped buffer of partial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub data: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(p: &MlpParams) -> Self {
        Self {
            data: vec![0.0; p.data.len()],
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|g| *g *= s);
    }
}

impl MlpParams {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let dims = arch.layer_dims();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total = 0;
        for &(i, o) in &dims {
            offsets.push(total);
            total += i * o + o;
        }
        Ok(Self {
            arch,
            dims,
            offsets,
            data: vec![0.0; total],
        })
    }

    /// Rebuilds parameters from a flat buffer in the canonical layout.
    pub fn from_flat(arch: Architecture, data: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        if data.len() != p.data.len() {
            return Err(Error::DimensionMismatch {
                context: "parameter buffer",
                expected: p.data.len(),
                actual: data.len(),
            });
        }
        p.data = data;
        Ok(p)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layer_count(&self) -> usize {
        self.dims.len()
    }

    pub fn weight(&self, l: usize) -> &[f64] {
        let (i, o) = self.dims[l];
        &self.data[self.offsets[l]..self.offsets[l] + i * o]
    }

    pub fn weight_mut(&mut self, l: usize) -> &mut [f64] {
        let (i, o) = self.dims[l];
        &mut self.data[self.offsets[l]..self.offsets[l] + i * o]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        let (i, o) = self.dims[l];
        let s = self.offsets[l] + i * o;
        &self.data[s..s + o]
    }

    pub fn bias_mut(&mut self, l: usize) -> &mut [f64] {
        let (i, o) = self.dims[l];
        let s = self.offsets[l] + i * o;
        &mut self.data[s..s + o]
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.arch.input_dim {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.arch.input_dim,
                actual: len,
            });
        }
        Ok(())
    }

    /// Single-sample forward pass. Returns the raw weights `w`, the
    /// correction `γ`, and the cache needed by [`MlpParams::backward`].
    pub fn forward(&self, input: &[f64]) -> Result<ForwardOutput> {
        self.check_input(input.len())?;
        let mut inputs = Vec::with_capacity(self.layer_count());
        let mut pre = Vec::with_capacity(self.layer_count());
        let mut x = input.to_vec();
        for l in 0..self.layer_count() {
            let (fi, fo) = self.dims[l];
            let w = self.weight(l);
            let b = self.bias(l);
            let z: Vec<f64> = (0..fo)
                .map(|o| b[o] + w[o * fi..(o + 1) * fi].iter().zip(&x).map(|(a, v)| a * v).sum::<f64>())
                .collect();
            let last = l + 1 == self.layer_count();
            let next = if last { z.clone() } else { z.iter().map(|&v| v.max(0.0)).collect() };
            inputs.push(x);
            pre.push(z);
            x = next;
        }
        let n = self.arch.n_samples;
        Ok(ForwardOutput {
            w: x[..n].to_vec(),
            gamma: [x[n], x[n + 1], x[n + 2]],
            cache: ForwardCache { inputs, pre },
        })
    }

    /// Gradients of `⟨grad_w, w⟩ + ⟨grad_γ, γ⟩` with respect to every
    /// parameter, for the sample recorded in `cache`.
    pub fn backward(&self, cache: &ForwardCache, grad_w: &[f64], grad_gamma: [f64; 3]) -> Result<Gradients> {
        if cache.pre.len() != self.layer_count() {
            return Err(Error::DimensionMismatch {
                context: "forward cache layers",
                expected: self.layer_count(),
                actual: cache.pre.len(),
            });
        }
        for (l, z) in cache.pre.iter().enumerate() {
            if z.len() != self.dims[l].1 || cache.inputs[l].len() != self.dims[l].0 {
                return Err(Error::DimensionMismatch {
                    context: "forward cache width",
                    expected: self.dims[l].1,
                    actual: z.len(),
                });
            }
        }
        if grad_w.len() != self.arch.n_samples {
            return Err(Error::DimensionMismatch {
                context: "weight cotangent",
                expected: self.arch.n_samples,
                actual: grad_w.len(),
            });
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta: Vec<f64> = grad_w.iter().copied().chain(grad_gamma).collect();
        for l in (0..self.layer_count()).rev() {
            let (fi, fo) = self.dims[l];
            let x = &cache.inputs[l];
            let off = self.offsets[l];
            for o in 0..fo {
                let d = delta[o];
                for i in 0..fi {
                    grads.data[off + o * fi + i] += d * x[i];
                }
                grads.data[off + fi * fo + o] += d;
            }
            if l > 0 {
                let w = self.weight(l);
                let below = &cache.pre[l - 1];
                delta = (0..fi)
                    .map(|i| {
                        if below[i] > 0.0 {
                            (0..fo).map(|o| w[o * fi + i] * delta[o]).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
        Ok(grads)
    }

    /// Batched forward pass over `batch` row-major inputs; returns the
    /// `batch × output_dim` outputs held in `ws`.
    pub fn forward_batch<'w>(&self, input: &[f64], batch: usize, ws: &'w mut BatchWorkspace) -> Result<&'w [f64]> {
        if input.len() != batch * self.arch.input_dim {
            return Err(Error::DimensionMismatch {
                context: "batched network input",
                expected: batch * self.arch.input_dim,
                actual: input.len(),
            });
        }
        ws.resize(&self.dims, batch);
        ws.acts[0].copy_from_slice(input);
        let layers = self.layer_count();
        for l in 0..layers {
            let (fi, fo) = self.dims[l];
            let (lo, hi) = ws.acts.split_at_mut(l + 1);
            let x = &lo[l];
            let y = &mut hi[0];
            let b = self.bias(l);
            for row in y.chunks_exact_mut(fo) {
                row.copy_from_slice(b);
            }
            let w = self.weight(l);
            // Y (B×fo) += X (B×fi) · Wᵀ (fi×fo)
            unsafe {
                dgemm(
                    batch,
                    fi,
                    fo,
                    1.0,
                    x.as_ptr(),
                    fi as isize,
                    1,
                    w.as_ptr(),
                    1,
                    fi as isize,
                    1.0,
                    y.as_mut_ptr(),
                    fo as isize,
                    1,
                );
            }
            if l + 1 < layers {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(&ws.acts[layers])
    }

    /// Accumulates into `grads` the gradient for output cotangents
    /// `grad_out` (`batch × output_dim`) of the last [`forward_batch`] call.
    ///
    /// [`forward_batch`]: MlpParams::forward_batch
    pub fn backward_batch(&self, ws: &mut BatchWorkspace, grad_out: &[f64], grads: &mut Gradients) -> Result<()> {
        let batch = ws.batch;
        let out_dim = self.arch.output_dim();
        if grad_out.len() != batch * out_dim || ws.acts.len() != self.layer_count() + 1 {
            return Err(Error::DimensionMismatch {
                context: "batched cotangent",
                expected: batch * out_dim,
                actual: grad_out.len(),
            });
        }
        ws.delta.clear();
        ws.delta.extend_from_slice(grad_out);
        for l in (0..self.layer_count()).rev() {
            let (fi, fo) = self.dims[l];
            let off = self.offsets[l];
            let x = &ws.acts[l];
            let (gw, gb) = grads.data[off..off + fi * fo + fo].split_at_mut(fi * fo);
            // dW (fo×fi) += δᵀ (fo×B) · X (B×fi)
            unsafe {
                dgemm(
                    fo,
                    batch,
                    fi,
                    1.0,
                    ws.delta.as_ptr(),
                    1,
                    fo as isize,
                    x.as_ptr(),
                    fi as isize,
                    1,
                    1.0,
                    gw.as_mut_ptr(),
                    fi as isize,
                    1,
                );
            }
            for row in ws.delta.chunks_exact(fo) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 0 {
                ws.delta_below.clear();
                ws.delta_below.resize(batch * fi, 0.0);
                let w = self.weight(l);
                // δ_below (B×fi) = δ (B×fo) · W (fo×fi)
                unsafe {
                    dgemm(
                        batch,
                        fo,
                        fi,
                        1.0,
                        ws.delta.as_ptr(),
                        fo as isize,
                        1,
                        w.as_ptr(),
                        fi as isize,
                        1,
                        0.0,
                        ws.delta_below.as_mut_ptr(),
                        fi as isize,
                        1,
                    );
                }
                // ReLU mask from the post-activations feeding layer l
                for (d, a) in ws.delta_below.iter_mut().zip(x.iter()) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
                core::mem::swap(&mut ws.delta, &mut ws.delta_below);
            }
        }
        Ok(())
    }
}

/// Per-layer inputs and pre-activations from a single-sample forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub inputs: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub w: Vec<f64>,
    pub gamma: [f64; 3],
    pub cache: ForwardCache,
}

/// Reusable activation buffers for the batched path.
#[derive(Debug, Clone, Default)]
pub struct BatchWorkspace {
    batch: usize,
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_below: Vec<f64>,
}

impl BatchWorkspace {
    fn resize(&mut self, dims: &[(usize, usize)], batch: usize) {
        self.batch = batch;
        self.acts.resize_with(dims.len() + 1, Vec::new);
        self.acts[0].resize(batch * dims[0].0, 0.0);
        for (l, &(_, fo)) in dims.iter().enumerate() {
            self.acts[l + 1].resize(batch * fo, 0.0);
        }
    }
}

/// Scale on the He bound for the linear output layer. A small output layer
/// starts the model near a uniform blend of the confident samples with no
/// color correction.
pub const OUTPUT_INIT_SCALE: f64 = 0.01;

/// He-uniform weights (`|w| ≤ √(6 / fan_in)`, narrowed by
/// [`OUTPUT_INIT_SCALE`] on the output layer) and zero biases.
pub fn init_params(arch: Architecture, seed: u64) -> Result<MlpParams> {
    let mut p = MlpParams::zeros(arch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let last = p.layer_count() - 1;
    for l in 0..p.layer_count() {
        let (fi, _) = p.dims[l];
        let mut bound = math::sqrt(6.0 / fi as f64);
        if l == last {
            bound *= OUTPUT_INIT_SCALE;
        }
        for w in p.weight_mut(l) {
            *w = rng.gen_range(-bound..bound);
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        Self {
            m: vec![0.0; params.data.len()],
            v: vec![0.0; params.data.len()],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. Non-finite gradients abort without
/// touching parameters or state.
pub fn adam_step(params: &mut MlpParams, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    if grads.data.len() != params.data.len() || state.m.len() != params.data.len() {
        return Err(Error::DimensionMismatch {
            context: "adam step",
            expected: params.data.len(),
            actual: grads.data.len(),
        });
    }
    if grads.data.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradients"));
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - libm::pow(b1, state.t as f64);
    let c2 = 1.0 - libm::pow(b2, state.t as f64);
    for (((p, g), m), v) in params
        .data
        .iter_mut()
        .zip(&grads.data)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (math::sqrt(v_hat) + state.eps);
    }
    Ok(())
}
