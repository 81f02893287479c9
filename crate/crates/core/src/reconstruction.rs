//! Depth maps and point clouds read off the learned blending weights.

use alloc::vec;
use alloc::vec::Vec;

use crate::camera::{Camera, PixelCoord, Vec3};
use crate::descriptor::DescriptorGrid;
use crate::error::{Error, Result};
use crate::image::{quantize_u8, DepthMap, DepthSource, Image, ViewRecord};
use crate::model::MlpModel;

/// Index of the largest positive weight (lowest index on ties).
pub fn argmax_alpha(alpha: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &a) in alpha.iter().enumerate() {
        if a > 0.0 && best.map_or(true, |b| a > alpha[b]) {
            best = Some(i);
        }
    }
    best
}

/// World-unit depth of the max-weight sample.
pub fn depth_from_alpha(alpha: &[f64], depths: &[f64], d_scale: f64) -> Option<f64> {
    argmax_alpha(alpha).map(|i| depths[i] * d_scale)
}

/// Applies the top-3 vicinity rule to the first `valid` entries. Returns the
/// index of the max-weight sample when the world-unit spread of the top
/// (up to) three normalized depths is at most `delta`.
pub fn vicinity_pick(alpha: &[f64], depths: &[f64], valid: usize, d_scale: f64, delta: f64) -> Option<usize> {
    let mut top: [Option<usize>; 3] = [None; 3];
    for i in 0..valid.min(alpha.len()) {
        let mut cand = Some(i);
        for slot in top.iter_mut() {
            match (*slot, cand) {
                (None, c) => {
                    *slot = c;
                    cand = None;
                }
                (Some(s), Some(c)) if alpha[c] > alpha[s] => {
                    *slot = Some(c);
                    cand = Some(s);
                }
                _ => {}
            }
        }
    }
    let first = top[0]?;
    if !(alpha[first] > 0.0) {
        return None;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in top.iter().flatten() {
        lo = lo.min(depths[*i]);
        hi = hi.max(depths[*i]);
    }
    if (hi - lo) * d_scale <= delta {
        Some(first)
    } else {
        None
    }
}

pub fn extract_depth(model: &MlpModel, grid: &DescriptorGrid, cam: &Camera, tau: Option<usize>) -> Result<DepthMap> {
    let mut values = vec![f32::NAN; cam.pixel_count()];
    let d_scale = model.config.d_scale;
    model.evaluate_pixels(grid, cam, tau, 0..cam.pixel_count(), |p, r| {
        if let Some(z) = depth_from_alpha(r.alpha, grid.get(p).depths, d_scale) {
            values[p] = z as f32;
        }
    })?;
    Ok(DepthMap {
        width: cam.width,
        height: cam.height,
        values,
        source: DepthSource::Extracted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub position: Vec3,
    pub color: [u8; 3],
    /// View whose pixel emitted the point.
    pub source_view: u32,
    /// Row-major index of that pixel.
    pub pixel: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
}

/// Vicinity threshold used when none is given: 1% of the depth normalizer.
pub fn default_delta(d_scale: f64) -> f64 {
    0.01 * d_scale
}

/// Fuses the pixels `range` of one target view. Points are unprojected
/// from the source pixel that contributed the max-weight sample and take
/// the target's observed color.
#[allow(clippy::too_many_arguments)]
pub fn fuse_pixels(
    model: &MlpModel,
    grid: &DescriptorGrid,
    cam: &Camera,
    tau: Option<usize>,
    views: &[ViewRecord],
    target_image: &Image,
    target_id: u32,
    delta: f64,
    range: core::ops::Range<usize>,
) -> Result<Vec<CloudPoint>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument("vicinity threshold must be positive"));
    }
    if target_image.width != cam.width || target_image.height != cam.height {
        return Err(Error::ConfigMismatch("target image size differs from camera"));
    }
    let d_scale = model.config.d_scale;
    let mut out = Vec::new();
    let mut failure = None;
    model.evaluate_pixels(grid, cam, tau, range, |p, r| {
        let d = grid.get(p);
        let Some(i) = vicinity_pick(r.alpha, d.depths, d.valid_count, d_scale, delta) else { return };
        let o = grid.origins(p)[i];
        let Some(src) = views.get(o.view as usize) else {
            failure = Some(Error::InvalidScene("sample origin refers to an unknown view"));
            return;
        };
        let Some(z) = src.depth.as_ref().and_then(|dm| dm.get(o.x, o.y)) else {
            failure = Some(Error::InvalidScene("sample origin has no depth"));
            return;
        };
        let position = src.camera.unproject_unchecked(PixelCoord::new(o.x as f64, o.y as f64), z as f64);
        let c = target_image.data[p];
        out.push(CloudPoint {
            position,
            color: [quantize_u8(c[0]), quantize_u8(c[1]), quantize_u8(c[2])],
            source_view: target_id,
            pixel: p as u32,
        });
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}
