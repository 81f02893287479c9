//! A trained composition network together with the configuration that
//! fixes its input layout.

use alloc::vec;
use alloc::vec::Vec;

use crate::camera::{Camera, PixelCoord};
use crate::composition::{
    alpha_direct_into, alpha_weights_into, compose, composition_backward_into, direct_backward_into,
    CompositionOutput,
};
use crate::descriptor::{
    encode_scalars_into, encode_temporal_into, spatial_len, spatial_scalars, DescriptorGrid, DescriptorRef,
};
use crate::error::{Error, Result};
use crate::mlp::{init_params, Architecture, BatchWorkspace, MlpParams};

/// Switches for the ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AblationFlags {
    /// Force the color correction to zero.
    pub no_gamma: bool,
    /// Drop the positional encoding of pixel and camera.
    pub no_spatial: bool,
    /// Replace uncertainties by the 0/1 padding mask.
    pub no_entropy: bool,
    /// Masked softmax of the raw outputs instead of the depth-aware weights.
    pub direct_mlp: bool,
    /// Ignore the frame index even on temporal data.
    pub no_time: bool,
}

impl AblationFlags {
    pub fn to_bits(self) -> u8 {
        (self.no_gamma as u8)
            | (self.no_spatial as u8) << 1
            | (self.no_entropy as u8) << 2
            | (self.direct_mlp as u8) << 3
            | (self.no_time as u8) << 4
    }

    pub fn from_bits(bits: u8) -> Self {
        Self {
            no_gamma: bits & 1 != 0,
            no_spatial: bits & 2 != 0,
            no_entropy: bits & 4 != 0,
            direct_mlp: bits & 8 != 0,
            no_time: bits & 16 != 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositionConfig {
    /// Samples per pixel.
    pub n: usize,
    /// Source views per target.
    pub k: usize,
    /// Positional-encoding frequencies.
    pub freq_l: usize,
    /// Length of the temporal encoding; 0 when time is not an input.
    pub frames: usize,
    pub sigma_t: f64,
    /// Depth normalizer: samples enter the network as `z / d_scale`.
    pub d_scale: f64,
    /// Translation normalizer for the spatial encoding.
    pub trans_norm: f64,
    pub hidden: usize,
    pub layers: usize,
    pub flags: AblationFlags,
}

impl Default for CompositionConfig {
    fn default() -> Self {
        Self {
            n: 50,
            k: 50,
            freq_l: 6,
            frames: 0,
            sigma_t: 1.0,
            d_scale: 1.0,
            trans_norm: 1.0,
            hidden: 256,
            layers: 5,
            flags: AblationFlags::default(),
        }
    }
}

impl CompositionConfig {
    pub fn spatial_dim(&self) -> usize {
        if self.flags.no_spatial {
            0
        } else {
            spatial_len(self.freq_l)
        }
    }

    pub fn temporal_dim(&self) -> usize {
        if self.flags.no_time {
            0
        } else {
            self.frames
        }
    }

    /// `5N + spatial + temporal`.
    pub fn input_dim(&self) -> usize {
        5 * self.n + self.spatial_dim() + self.temporal_dim()
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.input_dim(),
            hidden: self.hidden,
            layers: self.layers,
            n_samples: self.n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 {
            return Err(Error::InvalidArgument("N and K must be at least 1"));
        }
        if self.freq_l == 0 && !self.flags.no_spatial {
            return Err(Error::InvalidArgument("need at least one encoding frequency"));
        }
        if !(self.sigma_t > 0.0) {
            return Err(Error::InvalidArgument("sigma_t must be positive"));
        }
        if !(self.d_scale > 0.0) || !(self.trans_norm > 0.0) {
            return Err(Error::InvalidArgument("normalizers must be positive"));
        }
        self.architecture().validate()
    }
}

/// Composition result for one pixel of a batch.
#[derive(Debug, Clone, Copy)]
pub struct PixelResult<'a> {
    pub alpha: &'a [f64],
    pub gamma: [f64; 3],
    pub color: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub config: CompositionConfig,
    pub params: MlpParams,
}

/// Pixels evaluated per batched forward pass.
pub const EVAL_CHUNK: usize = 256;

impl MlpModel {
    pub fn new(config: CompositionConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            params: init_params(config.architecture(), seed)?,
        })
    }

    pub fn from_params(config: CompositionConfig, params: MlpParams) -> Result<Self> {
        config.validate()?;
        if *params.arch() != config.architecture() {
            return Err(Error::ConfigMismatch("parameters do not match the configured architecture"));
        }
        Ok(Self { config, params })
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim()
    }

    /// Checks that a frame index is acceptable for this model.
    pub fn check_time(&self, tau: Option<usize>) -> Result<usize> {
        let frames = self.config.temporal_dim();
        if frames == 0 {
            return Ok(tau.unwrap_or(0));
        }
        match tau {
            Some(t) if t < frames => Ok(t),
            Some(t) => Err(Error::TimeOutOfRange { tau: t, frames }),
            None => Err(Error::ConfigMismatch("model takes a frame index but none was given")),
        }
    }

    /// Uncertainties as seen by the network and the blending weights.
    pub fn effective_uncertainty(&self, desc: DescriptorRef<'_>, out: &mut [f64]) {
        if self.config.flags.no_entropy {
            for (i, o) in out.iter_mut().enumerate() {
                *o = if i < desc.valid_count { 0.0 } else { 1.0 };
            }
        } else {
            out.copy_from_slice(desc.uncertainties);
        }
    }

    /// Writes the network input for pixel `px` of `cam` at frame `tau`.
    pub fn write_input(&self, desc: DescriptorRef<'_>, px: PixelCoord, cam: &Camera, tau: usize, out: &mut [f64]) -> Result<()> {
        let n = self.config.n;
        if desc.n() != n {
            return Err(Error::ConfigMismatch("descriptor length differs from model N"));
        }
        if out.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "input buffer",
                expected: self.input_dim(),
                actual: out.len(),
            });
        }
        out[..3 * n].copy_from_slice(desc.colors);
        out[3 * n..4 * n].copy_from_slice(desc.depths);
        self.effective_uncertainty(desc, &mut out[4 * n..5 * n]);
        let s = self.config.spatial_dim();
        if s > 0 {
            encode_scalars_into(
                &spatial_scalars(px, cam, self.config.trans_norm),
                self.config.freq_l,
                &mut out[5 * n..5 * n + s],
            );
        }
        let t = self.config.temporal_dim();
        if t > 0 {
            encode_temporal_into(tau, t, self.config.sigma_t, &mut out[5 * n + s..])?;
        }
        Ok(())
    }

    /// Blending weights and color from raw network outputs `raw` (`N + 3`).
    /// `h` is scratch of length N; `alpha` receives the weights.
    pub fn compose_raw(&self, desc: DescriptorRef<'_>, raw: &[f64], h: &mut [f64], alpha: &mut [f64]) -> ([f64; 3], [f64; 3]) {
        let n = self.config.n;
        self.effective_uncertainty(desc, h);
        let w = &raw[..n];
        if self.config.flags.direct_mlp {
            alpha_direct_into(w, h, alpha);
        } else {
            alpha_weights_into(w, desc.depths, h, alpha);
        }
        let gamma = if self.config.flags.no_gamma {
            [0.0; 3]
        } else {
            [raw[n], raw[n + 1], raw[n + 2]]
        };
        (gamma, compose(alpha, desc.colors, gamma))
    }

    /// Cotangent of the raw outputs given `∂L/∂c̄`.
    pub fn compose_backward(&self, desc: DescriptorRef<'_>, raw: &[f64], grad_color: [f64; 3], h: &mut [f64], alpha: &mut [f64], grad_raw: &mut [f64]) {
        let n = self.config.n;
        self.effective_uncertainty(desc, h);
        let (gw, gg) = grad_raw.split_at_mut(n);
        let g = if self.config.flags.direct_mlp {
            direct_backward_into(&raw[..n], h, desc.colors, grad_color, alpha, gw)
        } else {
            composition_backward_into(&raw[..n], desc.depths, h, desc.colors, grad_color, alpha, gw)
        };
        if self.config.flags.no_gamma {
            gg.fill(0.0);
        } else {
            gg.copy_from_slice(&g);
        }
    }

    /// Full single-pixel evaluation through the per-sample network path.
    pub fn predict(&self, desc: DescriptorRef<'_>, px: PixelCoord, cam: &Camera, tau: Option<usize>) -> Result<CompositionOutput> {
        let tau = self.check_time(tau)?;
        let mut input = vec![0.0; self.input_dim()];
        self.write_input(desc, px, cam, tau, &mut input)?;
        let out = self.params.forward(&input)?;
        let n = self.config.n;
        let mut raw = out.w.clone();
        raw.extend_from_slice(&out.gamma);
        let mut h = vec![0.0; n];
        let mut alpha = vec![0.0; n];
        let (gamma, color) = self.compose_raw(desc, &raw, &mut h, &mut alpha);
        let mu = out.w.iter().zip(desc.depths).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        Ok(CompositionOutput {
            w: out.w,
            alpha,
            gamma,
            color,
            mu,
        })
    }

    /// Evaluates the pixels `pixels` (row-major indices into `grid`) in
    /// batches, calling `visit` with each pixel index and its result in order.
    pub fn evaluate_pixels<F>(
        &self,
        grid: &DescriptorGrid,
        cam: &Camera,
        tau: Option<usize>,
        pixels: core::ops::Range<usize>,
        mut visit: F,
    ) -> Result<()>
    where
        F: FnMut(usize, PixelResult<'_>),
    {
        if grid.n != self.config.n {
            return Err(Error::ConfigMismatch("descriptor grid N differs from model N"));
        }
        if grid.width != cam.width || grid.height != cam.height {
            return Err(Error::ConfigMismatch("descriptor grid size differs from camera"));
        }
        let tau = self.check_time(tau)?;
        let dim = self.input_dim();
        let out_dim = self.config.n + 3;
        let mut inputs = vec![0.0; EVAL_CHUNK * dim];
        let mut ws = BatchWorkspace::default();
        let mut h = vec![0.0; self.config.n];
        let mut alpha = vec![0.0; self.config.n];
        let w = cam.width as usize;
        let mut start = pixels.start;
        while start < pixels.end {
            let end = (start + EVAL_CHUNK).min(pixels.end);
            let count = end - start;
            for (i, p) in (start..end).enumerate() {
                let px = PixelCoord::new((p % w) as f64, (p / w) as f64);
                self.write_input(grid.get(p), px, cam, tau, &mut inputs[i * dim..(i + 1) * dim])?;
            }
            let raw = self.params.forward_batch(&inputs[..count * dim], count, &mut ws)?;
            for (i, p) in (start..end).enumerate() {
                let r = &raw[i * out_dim..(i + 1) * out_dim];
                let (gamma, color) = self.compose_raw(grid.get(p), r, &mut h, &mut alpha);
                visit(p, PixelResult {
                    alpha: &alpha,
                    gamma,
                    color,
                });
            }
            start = end;
        }
        Ok(())
    }
}

/// Gathered per-pixel network inputs for a set of samples, row-major.
pub fn gather_inputs(model: &MlpModel, items: &[(DescriptorRef<'_>, PixelCoord, &Camera, usize)]) -> Result<Vec<f64>> {
    let dim = model.input_dim();
    let mut out = vec![0.0; items.len() * dim];
    for (i, (d, px, cam, tau)) in items.iter().enumerate() {
        model.write_input(*d, *px, cam, *tau, &mut out[i * dim..(i + 1) * dim])?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_bits_round_trip() {
        for bits in 0..32u8 {
            assert_eq!(AblationFlags::from_bits(bits).to_bits(), bits);
        }
    }

    #[test]
    fn input_dims() {
        let mut c = CompositionConfig {
            n: 2,
            freq_l: 1,
            ..Default::default()
        };
        assert_eq!(c.input_dim(), 26);
        c.flags.no_spatial = true;
        assert_eq!(c.input_dim(), 10);
        c.frames = 7;
        assert_eq!(c.input_dim(), 17);
        c.flags.no_time = true;
        assert_eq!(c.input_dim(), 10);
    }
}
