//! Whole-image rendering with a trained model or a naive baseline.

use alloc::vec;
use alloc::vec::Vec;

use crate::camera::Camera;
use crate::composition::{naive_avg3, naive_closest};
use crate::descriptor::{splat_sources, DescriptorGrid};
use crate::error::{Error, Result};
use crate::image::{Image, ViewRecord};
use crate::model::MlpModel;

/// Descriptors of every pixel of `target` from `sources`. With no usable
/// source the grid is all padding.
pub fn build_grid(target: &Camera, views: &[ViewRecord], sources: &[usize], n: usize, d_scale: f64) -> Result<DescriptorGrid> {
    match splat_sources(target, views, sources) {
        Ok(b) => DescriptorGrid::from_buckets(&b, n, d_scale),
        Err(Error::NoGeometry) => Ok(DescriptorGrid::new(target.width, target.height, n)),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedImage {
    /// Clamped to `[0, 1]`.
    pub image: Image,
    /// False where every weight collapsed to zero and no correction term
    /// was available.
    pub valid: Vec<bool>,
}

fn clamp01(v: f64) -> f32 {
    v.clamp(0.0, 1.0) as f32
}

/// Renders pixels `range` of the grid into `colors`/`valid` (both indexed
/// from `range.start`).
pub fn render_pixels(
    model: &MlpModel,
    grid: &DescriptorGrid,
    cam: &Camera,
    tau: Option<usize>,
    range: core::ops::Range<usize>,
    colors: &mut [[f32; 3]],
    valid: &mut [bool],
) -> Result<()> {
    let start = range.start;
    let no_gamma = model.config.flags.no_gamma;
    model.evaluate_pixels(grid, cam, tau, range, |p, r| {
        let c = r.color;
        colors[p - start] = [clamp01(c[0]), clamp01(c[1]), clamp01(c[2])];
        valid[p - start] = !(no_gamma && r.alpha.iter().all(|&a| a == 0.0));
    })
}

pub fn render_grid(model: &MlpModel, grid: &DescriptorGrid, cam: &Camera, tau: Option<usize>) -> Result<RenderedImage> {
    let count = cam.pixel_count();
    let mut image = Image::new(cam.width, cam.height);
    let mut valid = vec![false; count];
    render_pixels(model, grid, cam, tau, 0..count, &mut image.data, &mut valid)?;
    Ok(RenderedImage { image, valid })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaiveMode {
    /// Color of the closest sample.
    Closest,
    /// Mean color of the three closest samples.
    Avg3,
}

pub fn render_naive(grid: &DescriptorGrid, mode: NaiveMode, background: [f64; 3]) -> Image {
    let mut image = Image::new(grid.width, grid.height);
    for (p, out) in image.data.iter_mut().enumerate() {
        let d = grid.get(p);
        let c = match mode {
            NaiveMode::Closest => naive_closest(d, background),
            NaiveMode::Avg3 => naive_avg3(d, background),
        };
        *out = [clamp01(c[0]), clamp01(c[1]), clamp01(c[2])];
    }
    image
}
