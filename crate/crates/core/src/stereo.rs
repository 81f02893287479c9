//! Plane-sweep stereo: depth and an entropy-style uncertainty for a
//! reference view from one posed source view.
//!
//! For each reference pixel and each candidate depth the window around the
//! pixel is placed on the fronto-parallel plane at that depth, warped into
//! the source, and compared with normalized cross-correlation. The winning
//! candidate gives the depth; the normalized entropy of the softmin over the
//! cost curve gives the uncertainty.

use alloc::vec;
use alloc::vec::Vec;

use crate::camera::{Camera, PixelCoord};
use crate::error::{Error, Result};
use crate::image::{DepthMap, DepthSource, UncertaintyMap, ViewRecord};
use crate::math;

/// Cost assigned when any warped window sample leaves the source image.
pub const OUT_OF_BOUNDS_COST: f64 = 2.0;

/// Windows whose intensity variance is below this are textureless.
const MIN_VARIANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepParams {
    /// Odd window side length in pixels.
    pub window: usize,
    /// Softmin temperature for the uncertainty.
    pub temperature: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            window: 7,
            temperature: 0.1,
        }
    }
}

/// Normalized entropy of `softmin(costs / temperature)`, in `[0, 1]`.
pub fn cost_to_uncertainty(costs: &[f64], temperature: f64) -> Result<f64> {
    if costs.len() < 2 {
        return Err(Error::InvalidArgument("need at least two costs"));
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidArgument("temperature must be positive"));
    }
    if costs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("costs"));
    }
    let lo = costs.iter().copied().fold(f64::INFINITY, f64::min);
    if costs.iter().all(|&c| c == lo) {
        return Ok(1.0);
    }
    let weights: Vec<f64> = costs.iter().map(|&c| math::exp(-(c - lo) / temperature)).collect();
    let total: f64 = weights.iter().sum();
    let entropy: f64 = weights
        .iter()
        .map(|&w| w / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * math::ln(p))
        .sum();
    Ok((entropy / math::ln(costs.len() as f64)).clamp(0.0, 1.0))
}

struct Gray<'a> {
    w: usize,
    h: usize,
    data: &'a [f64],
}

impl Gray<'_> {
    #[inline]
    fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.w + x]
    }

    /// Bilinear sample; `None` outside the half-pixel border.
    #[inline]
    fn sample(&self, u: f64, v: f64) -> Option<f64> {
        let (w, h) = (self.w as f64, self.h as f64);
        if !(u >= -0.5 && v >= -0.5 && u <= w - 0.5 && v <= h - 0.5) {
            return None;
        }
        let u = u.clamp(0.0, w - 1.0);
        let v = v.clamp(0.0, h - 1.0);
        let x0 = math::floor(u) as usize;
        let y0 = math::floor(v) as usize;
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let fx = u - x0 as f64;
        let fy = v - y0 as f64;
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x1, y0) * fx;
        let bottom = self.at(x0, y1) * (1.0 - fx) + self.at(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }
}

fn variance(a: &[f64]) -> f64 {
    let n = a.len() as f64;
    let m = a.iter().sum::<f64>() / n;
    a.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
}

/// Matching cost of two equally sized windows: `1 − NCC`, or a scaled mean
/// absolute difference when either window is flat (this covers 1×1 windows).
fn window_cost(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        saa += dx * dx;
        sbb += dy * dy;
        sab += dx * dy;
    }
    if saa / n <= MIN_VARIANCE || sbb / n <= MIN_VARIANCE {
        let mad = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n;
        return (2.0 * mad).min(OUT_OF_BOUNDS_COST);
    }
    1.0 - (sab / math::sqrt(saa * sbb)).clamp(-1.0, 1.0)
}

fn warp_costs(
    ref_cam: &Camera,
    src_cam: &Camera,
    ref_gray: &Gray<'_>,
    src_gray: &Gray<'_>,
    x: usize,
    y: usize,
    candidates: &[f64],
    half: isize,
    costs: &mut [f64],
    a: &mut Vec<f64>,
    b: &mut Vec<f64>,
) {
    a.clear();
    let mut coords = Vec::with_capacity(((2 * half + 1) * (2 * half + 1)) as usize);
    for dy in -half..=half {
        for dx in -half..=half {
            let xx = (x as isize + dx).clamp(0, ref_gray.w as isize - 1) as usize;
            let yy = (y as isize + dy).clamp(0, ref_gray.h as isize - 1) as usize;
            a.push(ref_gray.at(xx, yy));
            coords.push(PixelCoord::new(xx as f64, yy as f64));
        }
    }
    for (cost, &z) in costs.iter_mut().zip(candidates) {
        b.clear();
        let mut inside = true;
        for &px in &coords {
            let p = ref_cam.unproject_unchecked(px, z);
            match src_cam.project(p).visible().and_then(|(q, _)| src_gray.sample(q.u, q.v)) {
                Some(s) => b.push(s),
                None => {
                    inside = false;
                    break;
                }
            }
        }
        *cost = if inside {
            window_cost(a, b)
        } else {
            OUT_OF_BOUNDS_COST
        };
    }
}

/// Depth and uncertainty for the rows `rows` of the reference view.
///
/// Pixels whose best cost shows no positive match evidence (cost ≥ 1), or
/// whose reference window is flat, are marked missing with uncertainty 1.
pub fn plane_sweep_rows(
    reference: &ViewRecord,
    source: &ViewRecord,
    candidates: &[f64],
    params: SweepParams,
    rows: core::ops::Range<u32>,
) -> Result<(Vec<f32>, Vec<f32>)> {
    validate(reference, source, candidates, params)?;
    let ref_luma = reference.image.luma();
    let src_luma = source.image.luma();
    let ref_gray = Gray {
        w: reference.image.width as usize,
        h: reference.image.height as usize,
        data: &ref_luma,
    };
    let src_gray = Gray {
        w: source.image.width as usize,
        h: source.image.height as usize,
        data: &src_luma,
    };
    let half = (params.window / 2) as isize;
    let width = reference.image.width as usize;
    let n_rows = rows.len();
    let mut depth = vec![f32::NAN; n_rows * width];
    let mut unc = vec![1.0f32; n_rows * width];
    let mut costs = vec![0.0; candidates.len()];
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (ri, y) in rows.enumerate() {
        for x in 0..width {
            warp_costs(
                &reference.camera,
                &source.camera,
                &ref_gray,
                &src_gray,
                x,
                y as usize,
                candidates,
                half,
                &mut costs,
                &mut a,
                &mut b,
            );
            // a flat reference window carries no match evidence
            if half > 0 && variance(&a) <= MIN_VARIANCE {
                continue;
            }
            let mut best = 0;
            for (i, &c) in costs.iter().enumerate() {
                if c < costs[best] {
                    best = i;
                }
            }
            if costs[best] < 1.0 {
                depth[ri * width + x] = candidates[best] as f32;
                unc[ri * width + x] = cost_to_uncertainty(&costs, params.temperature)? as f32;
            }
        }
    }
    Ok((depth, unc))
}

fn validate(reference: &ViewRecord, source: &ViewRecord, candidates: &[f64], params: SweepParams) -> Result<()> {
    if candidates.len() < 2 {
        return Err(Error::InvalidArgument("need at least two depth candidates"));
    }
    if candidates.iter().any(|&z| !(z > 0.0) || !z.is_finite()) {
        return Err(Error::InvalidArgument("depth candidates must be positive"));
    }
    if candidates.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("depth candidates must be strictly ascending"));
    }
    if params.window % 2 == 0 {
        return Err(Error::InvalidArgument("window must be odd"));
    }
    if !(params.temperature > 0.0) {
        return Err(Error::InvalidArgument("temperature must be positive"));
    }
    if (reference.camera.center() - source.camera.center()).norm() <= 1e-12 {
        return Err(Error::DegenerateBaseline);
    }
    Ok(())
}

/// Full-image plane sweep of `reference` against `source`.
pub fn plane_sweep_pair(
    reference: &ViewRecord,
    source: &ViewRecord,
    candidates: &[f64],
    params: SweepParams,
) -> Result<(DepthMap, UncertaintyMap)> {
    let (w, h) = (reference.image.width, reference.image.height);
    let (depth, unc) = plane_sweep_rows(reference, source, candidates, params, 0..h)?;
    Ok((
        DepthMap::from_values(w, h, depth, DepthSource::PlaneSweep)?,
        UncertaintyMap::from_values(w, h, unc)?,
    ))
}

/// `count` candidates evenly spaced in inverse depth between `near` and `far`,
/// returned in ascending depth order.
pub fn inverse_depth_candidates(near: f64, far: f64, count: usize) -> Result<Vec<f64>> {
    if !(near > 0.0 && far > near) || count < 2 {
        return Err(Error::InvalidArgument("need 0 < near < far and at least two candidates"));
    }
    let (a, b) = (1.0 / far, 1.0 / near);
    let mut out: Vec<f64> = (0..count)
        .map(|i| 1.0 / (a + (b - a) * i as f64 / (count - 1) as f64))
        .collect();
    out.reverse();
    Ok(out)
}
