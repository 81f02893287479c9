//! In-memory rasters: RGB images, depth maps and uncertainty maps.

use alloc::vec;
use alloc::vec::Vec;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::math;

/// Linear RGB raster, row-major, values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub data: Vec<[f32; 3]>,
}

impl Image {
    pub fn new(width: u32, height: u32) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: u32, height: u32, color: [f32; 3]) -> Self {
        Self {
            width,
            height,
            data: vec![color; width as usize * height as usize],
        }
    }

    pub fn from_data(width: u32, height: u32, data: Vec<[f32; 3]>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "image data",
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [f32; 3] {
        self.data[self.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, c: [f32; 3]) {
        let i = self.index(x, y);
        self.data[i] = c;
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Rounds every channel to the nearest 8-bit level, as a PNG round trip would.
    pub fn quantized(&self) -> Image {
        let data = self
            .data
            .iter()
            .map(|c| c.map(|v| quantize_u8(v) as f32 / 255.0))
            .collect();
        Image {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Rec. 601 luma per pixel.
    pub fn luma(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|c| 0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64)
            .collect()
    }
}

/// Clamps to `[0, 1]` and rounds to the nearest 8-bit level.
pub fn quantize_u8(v: f32) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    math::round(v as f64 * 255.0) as u8
}

/// Where a depth map came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DepthSource {
    #[default]
    GroundTruth,
    PlaneSweep,
    External,
    /// Read off a trained model's blending weights.
    Extracted,
}

/// Per-pixel camera z-depth. Missing pixels hold NaN.
#[derive(Debug, Clone)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
    pub source: DepthSource,
}

/// Missing pixels compare equal to each other.
impl PartialEq for DepthMap {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.source == other.source
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a == b || (a.is_nan() && b.is_nan()))
    }
}

impl DepthMap {
    pub fn missing(width: u32, height: u32, source: DepthSource) -> Self {
        Self {
            width,
            height,
            values: vec![f32::NAN; width as usize * height as usize],
            source,
        }
    }

    /// Builds a map, turning non-positive or non-finite entries into missing.
    pub fn from_values(width: u32, height: u32, values: Vec<f32>, source: DepthSource) -> Result<Self> {
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "depth map",
                expected,
                actual: values.len(),
            });
        }
        let values = values
            .into_iter()
            .map(|v| if v.is_finite() && v > 0.0 { v } else { f32::NAN })
            .collect();
        Ok(Self {
            width,
            height,
            values,
            source,
        })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Option<f32> {
        let v = self.values[y as usize * self.width as usize + x as usize];
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    pub fn set(&mut self, x: u32, y: u32, v: Option<f32>) {
        let i = y as usize * self.width as usize + x as usize;
        self.values[i] = match v {
            Some(v) if v > 0.0 && v.is_finite() => v,
            _ => f32::NAN,
        };
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f32> + '_ {
        self.values.iter().copied().filter(|v| !v.is_nan())
    }
}

/// Per-pixel uncertainty in `[0, 1]`; 1 means no confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
}

impl UncertaintyMap {
    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self {
            width,
            height,
            values: vec![value.clamp(0.0, 1.0); width as usize * height as usize],
        }
    }

    /// Builds a map, clamping into `[0, 1]`; non-finite entries become 1.
    pub fn from_values(width: u32, height: u32, values: Vec<f32>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "uncertainty map",
                expected,
                actual: values.len(),
            });
        }
        let values = values
            .into_iter()
            .map(|v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 1.0 })
            .collect();
        Ok(Self { width, height, values })
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.width as usize + x as usize]
    }
}

/// One captured view: image, optional geometry, camera and frame index.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewRecord {
    pub image: Image,
    pub depth: Option<DepthMap>,
    pub uncertainty: Option<UncertaintyMap>,
    pub camera: Camera,
    pub time: usize,
}

impl ViewRecord {
    pub fn new(image: Image, camera: Camera, time: usize) -> Result<Self> {
        if image.width != camera.width || image.height != camera.height {
            return Err(Error::DimensionMismatch {
                context: "image vs camera width",
                expected: camera.width as usize,
                actual: image.width as usize,
            });
        }
        Ok(Self {
            image,
            depth: None,
            uncertainty: None,
            camera,
            time,
        })
    }

    pub fn with_geometry(mut self, depth: DepthMap, uncertainty: UncertaintyMap) -> Result<Self> {
        if depth.width != self.camera.width
            || depth.height != self.camera.height
            || uncertainty.width != self.camera.width
            || uncertainty.height != self.camera.height
        {
            return Err(Error::DimensionMismatch {
                context: "geometry vs camera",
                expected: self.camera.pixel_count(),
                actual: depth.values.len(),
            });
        }
        self.depth = Some(depth);
        self.uncertainty = Some(uncertainty);
        Ok(self)
    }

    pub fn has_geometry(&self) -> bool {
        self.depth.is_some()
    }
}

/// Nearest-rank percentile (`p` in `(0, 1]`) of all valid depths, or `None`
/// when no depth is available.
pub fn depth_percentile<'a, I>(maps: I, p: f64) -> Option<f64>
where
    I: IntoIterator<Item = &'a DepthMap>,
{
    let mut all: Vec<f32> = maps.into_iter().flat_map(|m| m.valid_values()).collect();
    if all.is_empty() {
        return None;
    }
    all.sort_by(|a, b| a.total_cmp(b));
    let rank = math::ceil(p * all.len() as f64) as usize;
    let idx = rank.clamp(1, all.len()) - 1;
    Some(all[idx] as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_rounds_and_clamps() {
        assert_eq!(quantize_u8(-1.0), 0);
        assert_eq!(quantize_u8(2.0), 255);
        assert_eq!(quantize_u8(0.5), 128);
        assert_eq!(quantize_u8(f32::NAN), 0);
        let img = Image::filled(2, 1, [0.3, 0.6, 0.9]).quantized();
        assert_eq!(img.get(1, 0)[0], 77.0 / 255.0);
    }

    #[test]
    fn missing_depths_compare_equal() {
        let mut a = DepthMap::missing(2, 2, DepthSource::PlaneSweep);
        assert_eq!(a, a.clone());
        a.set(0, 1, Some(3.0));
        let mut b = DepthMap::missing(2, 2, DepthSource::PlaneSweep);
        assert_ne!(a, b);
        b.set(0, 1, Some(3.0));
        assert_eq!(a, b);
    }

    #[test]
    fn depth_missing_sentinel() {
        let d = DepthMap::from_values(2, 1, alloc::vec![-1.0, 2.5], DepthSource::External).unwrap();
        assert_eq!(d.get(0, 0), None);
        assert_eq!(d.get(1, 0), Some(2.5));
    }

    #[test]
    fn percentile_nearest_rank() {
        let vals: Vec<f32> = (1..=100).map(|v| v as f32).collect();
        let d = DepthMap::from_values(100, 1, vals, DepthSource::GroundTruth).unwrap();
        assert_eq!(depth_percentile([&d], 0.99), Some(99.0));
        assert_eq!(depth_percentile([&d], 1.0), Some(100.0));
        let empty = DepthMap::missing(3, 3, DepthSource::GroundTruth);
        assert_eq!(depth_percentile([&empty], 0.99), None);
    }
}
