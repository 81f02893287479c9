//! Per-pixel sample arrays.
//!
//! Source pixels with depth are lifted to 3D, projected into the target and
//! bucketed at the nearest target pixel. Each bucket is then sorted by depth,
//! clipped to the closest `N` samples and padded, giving the color, depth and
//! uncertainty arrays that the composition network consumes.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::camera::{select_sources, Camera, PixelCoord};
use crate::error::{Error, Result};
use crate::image::ViewRecord;
use crate::math;

/// Where a sample came from: source view index and source pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleOrigin {
    pub view: u32,
    pub x: u32,
    pub y: u32,
}

impl SampleOrigin {
    pub const NONE: SampleOrigin = SampleOrigin {
        view: u32::MAX,
        x: 0,
        y: 0,
    };

    pub fn is_none(&self) -> bool {
        self.view == u32::MAX
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    /// Target-camera z-depth, world units.
    pub z: f64,
    pub color: [f64; 3],
    pub uncertainty: f64,
    pub origin: SampleOrigin,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleBucket {
    pub samples: Vec<Sample>,
}

impl SampleBucket {
    pub fn push(&mut self, s: Sample) {
        debug_assert!(s.z > 0.0);
        self.samples.push(s);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One bucket per target pixel, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketGrid {
    pub width: u32,
    pub height: u32,
    pub buckets: Vec<SampleBucket>,
}

impl BucketGrid {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            buckets: vec![SampleBucket::default(); width as usize * height as usize],
        }
    }

    pub fn bucket(&self, x: u32, y: u32) -> &SampleBucket {
        &self.buckets[y as usize * self.width as usize + x as usize]
    }
}

/// Views allowed to act as sources for `target`: those with depth, at frame
/// `time` when given, other than `exclude`; nearest `k` by camera center.
pub fn choose_sources(
    target: &Camera,
    views: &[ViewRecord],
    k: usize,
    exclude: Option<usize>,
    time: Option<usize>,
    allowed: impl Fn(usize) -> bool,
) -> Vec<usize> {
    let candidates = views.iter().enumerate().filter(|(i, v)| {
        v.has_geometry() && Some(*i) != exclude && time.map_or(true, |t| v.time == t) && allowed(*i)
    });
    select_sources(target, candidates.map(|(i, v)| (i, &v.camera)), k)
}

/// Forward-splats the given source views into `target`.
///
/// Sources without a depth map are skipped; a missing uncertainty map counts
/// as full confidence. Fails when none of `sources` has depth.
pub fn splat_sources(target: &Camera, views: &[ViewRecord], sources: &[usize]) -> Result<BucketGrid> {
    let mut grid = BucketGrid::empty(target.width, target.height);
    let mut any = false;
    for &si in sources {
        let view = &views[si];
        let Some(depth) = &view.depth else { continue };
        any = true;
        let cam = &view.camera;
        for y in 0..cam.height {
            for x in 0..cam.width {
                let Some(z_src) = depth.get(x, y) else { continue };
                let p = cam.unproject_unchecked(PixelCoord::new(x as f64, y as f64), z_src as f64);
                let Some((px, z)) = target.project(p).visible() else { continue };
                let (tx, ty) = (math::round(px.u), math::round(px.v));
                if tx < 0.0 || ty < 0.0 || tx >= target.width as f64 || ty >= target.height as f64 {
                    continue;
                }
                let c = view.image.get(x, y);
                let h = view.uncertainty.as_ref().map_or(0.0, |u| u.get(x, y) as f64);
                let idx = ty as usize * target.width as usize + tx as usize;
                grid.buckets[idx].push(Sample {
                    z,
                    color: [c[0] as f64, c[1] as f64, c[2] as f64],
                    uncertainty: h,
                    origin: SampleOrigin {
                        view: si as u32,
                        x,
                        y,
                    },
                });
            }
        }
    }
    if !any {
        return Err(Error::NoGeometry);
    }
    Ok(grid)
}

/// Splats the `k` views nearest to `target` (all views with depth are candidates).
pub fn splat_nearest(target: &Camera, views: &[ViewRecord], k: usize) -> Result<BucketGrid> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1"));
    }
    let sources = choose_sources(target, views, k, None, None, |_| true);
    splat_sources(target, views, &sources)
}

/// The finalized sample arrays of one pixel plus its encodings.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelDescriptor {
    pub colors: Vec<[f64; 3]>,
    /// `z / d_scale`; 0 for padding.
    pub depths: Vec<f64>,
    pub uncertainties: Vec<f64>,
    pub valid_count: usize,
    /// Provenance of the first `valid_count` entries.
    pub origins: Vec<SampleOrigin>,
    pub spatial_enc: Vec<f64>,
    pub temporal_enc: Vec<f64>,
}

impl PixelDescriptor {
    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    pub fn arrays(&self) -> DescriptorRef<'_> {
        DescriptorRef {
            colors: self.colors.as_flattened(),
            depths: &self.depths,
            uncertainties: &self.uncertainties,
            valid_count: self.valid_count,
        }
    }
}

/// Borrowed sample arrays: colors are `N×3` row-major.
#[derive(Debug, Clone, Copy)]
pub struct DescriptorRef<'a> {
    pub colors: &'a [f64],
    pub depths: &'a [f64],
    pub uncertainties: &'a [f64],
    pub valid_count: usize,
}

impl DescriptorRef<'_> {
    pub fn n(&self) -> usize {
        self.depths.len()
    }

    pub fn color(&self, i: usize) -> [f64; 3] {
        [self.colors[3 * i], self.colors[3 * i + 1], self.colors[3 * i + 2]]
    }
}

/// Sorts `bucket` by depth and writes the closest `n` samples into the output
/// slices, padding the rest with depth 0, black, and uncertainty 1. Returns
/// the valid count.
pub fn finalize_into(
    bucket: &SampleBucket,
    d_scale: f64,
    colors: &mut [f64],
    depths: &mut [f64],
    uncertainties: &mut [f64],
    origins: &mut [SampleOrigin],
) -> usize {
    let n = depths.len();
    let mut order: Vec<&Sample> = bucket.samples.iter().collect();
    // stable: equal depths keep splat order
    order.sort_by(|a, b| a.z.total_cmp(&b.z));
    let valid = order.len().min(n);
    for i in 0..n {
        if let Some(s) = order.get(i).filter(|_| i < valid) {
            colors[3 * i..3 * i + 3].copy_from_slice(&s.color);
            depths[i] = s.z / d_scale;
            uncertainties[i] = s.uncertainty;
            origins[i] = s.origin;
        } else {
            colors[3 * i..3 * i + 3].fill(0.0);
            depths[i] = 0.0;
            uncertainties[i] = 1.0;
            origins[i] = SampleOrigin::NONE;
        }
    }
    valid
}

/// Sort, clip to the closest `n`, normalize depths and pad.
pub fn finalize_descriptor(bucket: &SampleBucket, n: usize, d_scale: f64) -> Result<PixelDescriptor> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1"));
    }
    if !(d_scale > 0.0) {
        return Err(Error::InvalidArgument("d_scale must be positive"));
    }
    let mut colors = vec![[0.0; 3]; n];
    let mut depths = vec![0.0; n];
    let mut uncertainties = vec![1.0; n];
    let mut origins = vec![SampleOrigin::NONE; n];
    let valid = finalize_into(
        bucket,
        d_scale,
        colors.as_flattened_mut(),
        &mut depths,
        &mut uncertainties,
        &mut origins,
    );
    origins.truncate(valid);
    Ok(PixelDescriptor {
        colors,
        depths,
        uncertainties,
        valid_count: valid,
        origins,
        spatial_enc: Vec::new(),
        temporal_enc: Vec::new(),
    })
}

/// Finalized arrays for every pixel of a target view, struct-of-arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorGrid {
    pub width: u32,
    pub height: u32,
    pub n: usize,
    pub colors: Vec<f64>,
    pub depths: Vec<f64>,
    pub uncertainties: Vec<f64>,
    pub valid: Vec<u32>,
    pub origins: Vec<SampleOrigin>,
}

impl DescriptorGrid {
    pub fn new(width: u32, height: u32, n: usize) -> Self {
        let p = width as usize * height as usize;
        Self {
            width,
            height,
            n,
            colors: vec![0.0; p * n * 3],
            depths: vec![0.0; p * n],
            uncertainties: vec![1.0; p * n],
            valid: vec![0; p],
            origins: vec![SampleOrigin::NONE; p * n],
        }
    }

    pub fn from_buckets(grid: &BucketGrid, n: usize, d_scale: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("N must be at least 1"));
        }
        if !(d_scale > 0.0) {
            return Err(Error::InvalidArgument("d_scale must be positive"));
        }
        let mut out = Self::new(grid.width, grid.height, n);
        out.fill_rows(grid, d_scale, 0..grid.height);
        Ok(out)
    }

    /// Finalizes the buckets of rows `rows` into this grid.
    pub fn fill_rows(&mut self, grid: &BucketGrid, d_scale: f64, rows: core::ops::Range<u32>) {
        let w = self.width as usize;
        let n = self.n;
        for y in rows {
            for x in 0..w {
                let p = y as usize * w + x;
                self.valid[p] = finalize_into(
                    &grid.buckets[p],
                    d_scale,
                    &mut self.colors[p * n * 3..(p + 1) * n * 3],
                    &mut self.depths[p * n..(p + 1) * n],
                    &mut self.uncertainties[p * n..(p + 1) * n],
                    &mut self.origins[p * n..(p + 1) * n],
                ) as u32;
            }
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.valid.len()
    }

    #[inline]
    pub fn get(&self, p: usize) -> DescriptorRef<'_> {
        let n = self.n;
        DescriptorRef {
            colors: &self.colors[p * n * 3..(p + 1) * n * 3],
            depths: &self.depths[p * n..(p + 1) * n],
            uncertainties: &self.uncertainties[p * n..(p + 1) * n],
            valid_count: self.valid[p] as usize,
        }
    }

    pub fn origins(&self, p: usize) -> &[SampleOrigin] {
        &self.origins[p * self.n..p * self.n + self.valid[p] as usize]
    }

    pub fn to_pixel_descriptor(&self, p: usize) -> PixelDescriptor {
        let r = self.get(p);
        PixelDescriptor {
            colors: (0..self.n).map(|i| r.color(i)).collect(),
            depths: r.depths.to_vec(),
            uncertainties: r.uncertainties.to_vec(),
            valid_count: r.valid_count,
            origins: self.origins(p).to_vec(),
            spatial_enc: Vec::new(),
            temporal_enc: Vec::new(),
        }
    }
}

/// Number of scalars fed through the positional encoding: pixel x, y and the
/// six pose parameters.
pub const SPATIAL_SCALARS: usize = 8;

pub fn spatial_len(freq_l: usize) -> usize {
    2 * freq_l * SPATIAL_SCALARS
}

/// Normalized spatial scalars: pixel coordinates in `[-1, 1]`, rotation over
/// π, translation over `trans_norm`.
pub fn spatial_scalars(px: PixelCoord, cam: &Camera, trans_norm: f64) -> [f64; SPATIAL_SCALARS] {
    let nx = |u: f64, size: u32| {
        if size > 1 {
            2.0 * u / (size as f64 - 1.0) - 1.0
        } else {
            0.0
        }
    };
    let r = cam.rotation();
    let t = cam.translation();
    [
        nx(px.u, cam.width),
        nx(px.v, cam.height),
        r[0] / PI,
        r[1] / PI,
        r[2] / PI,
        t[0] / trans_norm,
        t[1] / trans_norm,
        t[2] / trans_norm,
    ]
}

/// Writes `(sin(2ˡπv), cos(2ˡπv))` for `l = 0..L` for each scalar in turn.
pub fn encode_scalars_into(values: &[f64], freq_l: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), 2 * freq_l * values.len());
    let mut k = 0;
    for &v in values {
        let mut f = PI;
        for _ in 0..freq_l {
            out[k] = math::sin(f * v);
            out[k + 1] = math::cos(f * v);
            k += 2;
            f *= 2.0;
        }
    }
}

pub fn encode_spatial(px: PixelCoord, cam: &Camera, freq_l: usize, trans_norm: f64) -> Vec<f64> {
    let mut out = vec![0.0; spatial_len(freq_l)];
    encode_scalars_into(&spatial_scalars(px, cam, trans_norm), freq_l, &mut out);
    out
}

/// Gaussian bump over the `frames` time steps peaking (value 1) at `tau`.
pub fn encode_temporal(tau: usize, frames: usize, sigma_t: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; frames];
    encode_temporal_into(tau, frames, sigma_t, &mut out)?;
    Ok(out)
}

pub fn encode_temporal_into(tau: usize, frames: usize, sigma_t: f64, out: &mut [f64]) -> Result<()> {
    if tau >= frames {
        return Err(Error::TimeOutOfRange { tau, frames });
    }
    if !(sigma_t > 0.0) {
        return Err(Error::InvalidArgument("sigma_t must be positive"));
    }
    let denom = 2.0 * sigma_t * sigma_t;
    for (t, o) in out.iter_mut().enumerate() {
        let d = t as f64 - tau as f64;
        *o = math::exp(-d * d / denom);
    }
    Ok(())
}

/// Flat input layout `[colors | depths | uncertainties | spatial | temporal]`.
pub fn assemble_input(desc: &PixelDescriptor) -> Vec<f64> {
    let n = desc.len();
    let mut out = Vec::with_capacity(5 * n + desc.spatial_enc.len() + desc.temporal_enc.len());
    for c in &desc.colors {
        out.extend_from_slice(c);
    }
    out.extend_from_slice(&desc.depths);
    out.extend_from_slice(&desc.uncertainties);
    out.extend_from_slice(&desc.spatial_enc);
    out.extend_from_slice(&desc.temporal_enc);
    out
}
