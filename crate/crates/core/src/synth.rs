//! Procedural scenes with exact ground-truth depth, rendered by analytic
//! ray-primitive intersection.

use alloc::vec;
use alloc::vec::Vec;

use crate::camera::{Camera, PixelCoord, Vec3};
use crate::error::{Error, Result};
use crate::image::{DepthMap, DepthSource, Image, UncertaintyMap, ViewRecord};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Rectangle (or unbounded plane with infinite half extents) spanned by
    /// unit axes `u`, `v` around `origin`; the normal is `u × v`.
    Plane { origin: Vec3, u: Vec3, v: Vec3, half: [f64; 2] },
    Sphere { center: Vec3, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    Checker,
    Noise,
    Stripes,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Texture {
    pub pattern: Pattern,
    pub a: [f64; 3],
    pub b: [f64; 3],
    /// Feature size in world units.
    pub scale: f64,
    pub seed: u64,
}

impl Texture {
    pub fn sample(&self, s: f64, t: f64, seed: u64) -> [f64; 3] {
        let (s, t) = (s / self.scale, t / self.scale);
        let k = match self.pattern {
            Pattern::Checker => ((math::floor(s) + math::floor(t)) as i64 & 1) as f64,
            Pattern::Stripes => 0.5 + 0.5 * math::sin(core::f64::consts::PI * s),
            Pattern::Noise => {
                let sd = self.seed ^ seed;
                (0.65 * value_noise(s, t, sd) + 0.35 * value_noise(2.0 * s + 17.0, 2.0 * t - 5.0, sd.wrapping_add(1))).clamp(0.0, 1.0)
            }
        };
        [0, 1, 2].map(|c| self.a[c] + (self.b[c] - self.a[c]) * k)
    }
}

fn lattice(ix: i64, iy: i64, seed: u64) -> f64 {
    let mut h = seed ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 30;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(s: f64, t: f64, seed: u64) -> f64 {
    let (fs, ft) = (math::floor(s), math::floor(t));
    let (ix, iy) = (fs as i64, ft as i64);
    let smooth = |x: f64| x * x * (3.0 - 2.0 * x);
    let (a, b) = (smooth(s - fs), smooth(t - ft));
    let v00 = lattice(ix, iy, seed);
    let v10 = lattice(ix + 1, iy, seed);
    let v01 = lattice(ix, iy + 1, seed);
    let v11 = lattice(ix + 1, iy + 1, seed);
    let top = v00 + (v10 - v00) * a;
    let bot = v01 + (v11 - v01) * a;
    top + (bot - top) * b
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub texture: Texture,
    /// World displacement per frame, for temporal scenes.
    pub motion: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rig {
    /// `count` cameras on a horizontal arc of angular `span` around `target`.
    Arc { count: usize, radius: f64, span: f64, elevation: f64, target: Vec3 },
    /// `count` cameras evenly spaced on a full circle around `target`.
    Ring { count: usize, radius: f64, elevation: f64, target: Vec3 },
}

impl Rig {
    pub fn count(&self) -> usize {
        match *self {
            Rig::Arc { count, .. } | Rig::Ring { count, .. } => count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub primitives: Vec<Primitive>,
    pub rig: Rig,
    /// Direction toward the light.
    pub light: Vec3,
    pub ambient: f64,
    pub diffuse: f64,
    pub background: [f64; 3],
    /// Frames per camera; 1 for a static scene.
    pub frames: usize,
}

/// World "up" for rigs: the scene uses y pointing down.
pub const WORLD_UP: Vec3 = Vec3::new(0.0, -1.0, 0.0);

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::InvalidScene("scene needs at least one primitive"));
        }
        if self.rig.count() < 2 {
            return Err(Error::InvalidScene("rig needs at least two cameras"));
        }
        if self.frames == 0 || self.width == 0 || self.height == 0 || !(self.focal > 0.0) {
            return Err(Error::InvalidScene("frames, image size and focal must be positive"));
        }
        let (radius, span) = match self.rig {
            Rig::Arc { radius, span, .. } => (radius, span),
            Rig::Ring { radius, .. } => (radius, 1.0),
        };
        if !(radius > 0.0) || !(span > 0.0) {
            return Err(Error::InvalidScene("rig radius and span must be positive"));
        }
        Ok(())
    }

    pub fn cameras(&self) -> Result<Vec<Camera>> {
        let (count, radius, elevation, target, angle): (usize, f64, f64, Vec3, &dyn Fn(usize) -> f64) = match &self.rig {
            Rig::Arc { count, radius, span, elevation, target } => {
                let (c, s) = (*count, *span);
                (c, *radius, *elevation, *target, &move |i| -0.5 * s + s * i as f64 / (c - 1) as f64)
            }
            Rig::Ring { count, radius, elevation, target } => {
                let c = *count;
                (c, *radius, *elevation, *target, &move |i| core::f64::consts::TAU * i as f64 / c as f64)
            }
        };
        (0..count)
            .map(|i| {
                let a = angle(i);
                let eye = target + Vec3::new(radius * math::sin(a), elevation, -radius * math::cos(a));
                Camera::look_at(self.width, self.height, self.focal, eye, target, WORLD_UP)
            })
            .collect()
    }
}

/// Nearest hit along `origin + t·dir`, `t > 0`: (t, primitive index, normal, texture coords).
fn intersect(prims: &[Primitive], frame: usize, origin: Vec3, dir: Vec3) -> Option<(f64, usize, Vec3, [f64; 2])> {
    let mut best: Option<(f64, usize, Vec3, [f64; 2])> = None;
    for (pi, p) in prims.iter().enumerate() {
        let shift = p.motion * frame as f64;
        let hit = match p.shape {
            Shape::Plane { origin: o, u, v, half } => {
                let o = o + shift;
                let n = u.cross(v);
                let den = dir.dot(n);
                if den.abs() < 1e-12 {
                    None
                } else {
                    let t = (o - origin).dot(n) / den;
                    let q = origin + dir * t - o;
                    let (s, r) = (q.dot(u), q.dot(v));
                    (s.abs() <= half[0] && r.abs() <= half[1]).then_some((t, n, [s, r]))
                }
            }
            Shape::Sphere { center, radius } => {
                let c = center + shift;
                let oc = origin - c;
                let a = dir.dot(dir);
                let b = 2.0 * oc.dot(dir);
                let cc = oc.dot(oc) - radius * radius;
                let disc = b * b - 4.0 * a * cc;
                if disc < 0.0 {
                    None
                } else {
                    let sq = math::sqrt(disc);
                    let t0 = (-b - sq) / (2.0 * a);
                    let t = if t0 > 1e-9 { t0 } else { (-b + sq) / (2.0 * a) };
                    let n = (origin + dir * t - c) * (1.0 / radius);
                    let tex = [
                        math::atan2(n.z, n.x) * radius,
                        math::acos(n.y.clamp(-1.0, 1.0)) * radius,
                    ];
                    Some((t, n, tex))
                }
            }
        };
        if let Some((t, n, tex)) = hit {
            if t > 1e-9 && best.map_or(true, |b| t < b.0) {
                best = Some((t, pi, n, tex));
            }
        }
    }
    best
}

/// Renders one view: image, exact z-depth and its 0/1 uncertainty.
pub fn render_view(spec: &SceneSpec, cam: &Camera, frame: usize, seed: u64) -> (Image, DepthMap, UncertaintyMap) {
    let (w, h) = (cam.width, cam.height);
    let mut img = Image::new(w, h);
    let mut depth = vec![f32::NAN; cam.pixel_count()];
    let mut unc = vec![1.0f32; cam.pixel_count()];
    let light = spec.light.normalized();
    let origin = cam.center();
    let bg = spec.background.map(|v| v as f32);
    for y in 0..h {
        for x in 0..w {
            // z-component 1 in camera space, so the ray parameter is the z-depth
            let dir = cam.unproject_unchecked(PixelCoord::new(x as f64, y as f64), 1.0) - origin;
            let i = (y * w + x) as usize;
            match intersect(&spec.primitives, frame, origin, dir) {
                Some((t, pi, mut n, tex)) => {
                    if n.dot(dir) > 0.0 {
                        n = -n;
                    }
                    let base = spec.primitives[pi].texture.sample(tex[0], tex[1], seed);
                    let shade = spec.ambient + spec.diffuse * n.dot(light).max(0.0);
                    img.data[i] = base.map(|c| (c * shade).clamp(0.0, 1.0) as f32);
                    depth[i] = t as f32;
                    unc[i] = 0.0;
                }
                None => img.data[i] = bg,
            }
        }
    }
    (
        img,
        DepthMap {
            width: w,
            height: h,
            values: depth,
            source: DepthSource::GroundTruth,
        },
        UncertaintyMap { width: w, height: h, values: unc },
    )
}

/// Renders every camera at every frame, frame-major.
pub fn generate(spec: &SceneSpec, seed: u64) -> Result<Vec<ViewRecord>> {
    spec.validate()?;
    let cams = spec.cameras()?;
    let mut out = Vec::with_capacity(cams.len() * spec.frames);
    for f in 0..spec.frames {
        for cam in &cams {
            let (img, d, u) = render_view(spec, cam, f, seed);
            out.push(ViewRecord::new(img, cam.clone(), f)?.with_geometry(d, u)?);
        }
    }
    Ok(out)
}

fn tex(pattern: Pattern, a: [f64; 3], b: [f64; 3], scale: f64, seed: u64) -> Texture {
    Texture { pattern, a, b, scale, seed }
}

fn still(shape: Shape, texture: Texture) -> Primitive {
    Primitive { shape, texture, motion: Vec3::ZERO }
}

/// Back wall, floor, a sphere and a tilted card, seen from a frontal arc.
pub fn box_scene(views: usize, width: u32, height: u32) -> SceneSpec {
    let inf = f64::INFINITY;
    let x = Vec3::new(1.0, 0.0, 0.0);
    let y = Vec3::new(0.0, 1.0, 0.0);
    let z = Vec3::new(0.0, 0.0, 1.0);
    let (ca, sa) = (math::cos(0.5), math::sin(0.5));
    let primitives = vec![
        still(
            Shape::Plane { origin: Vec3::new(0.0, 0.0, 5.0), u: x, v: y, half: [inf, inf] },
            tex(Pattern::Noise, [0.15, 0.25, 0.55], [0.85, 0.8, 0.6], 0.25, 11),
        ),
        still(
            Shape::Plane { origin: Vec3::new(0.0, 1.0, 0.0), u: x, v: z, half: [inf, inf] },
            tex(Pattern::Checker, [0.2, 0.2, 0.2], [0.9, 0.9, 0.85], 0.5, 12),
        ),
        still(
            Shape::Sphere { center: Vec3::new(-0.6, 0.3, 3.3), radius: 0.7 },
            tex(Pattern::Noise, [0.7, 0.1, 0.1], [1.0, 0.8, 0.3], 0.12, 13),
        ),
        still(
            Shape::Plane { origin: Vec3::new(0.8, 0.1, 2.5), u: Vec3::new(ca, 0.0, sa), v: y, half: [0.4, 0.55] },
            tex(Pattern::Stripes, [0.1, 0.5, 0.2], [0.8, 1.0, 0.7], 0.09, 14),
        ),
    ];
    SceneSpec {
        width,
        height,
        focal: 1.0 * width as f64,
        primitives,
        rig: Rig::Arc {
            count: views,
            radius: 4.0,
            span: 0.7,
            elevation: -0.5,
            target: Vec3::new(0.0, 0.3, 3.3),
        },
        light: Vec3::new(-0.4, -1.0, -0.6),
        ambient: 0.35,
        diffuse: 0.65,
        background: [0.0; 3],
        frames: 1,
    }
}

/// A single sphere in front of a textured plane, for temporal data the
/// sphere drifts sideways each frame.
pub fn orbit_scene(views: usize, width: u32, height: u32, frames: usize) -> SceneSpec {
    let inf = f64::INFINITY;
    let primitives = vec![
        still(
            Shape::Plane {
                origin: Vec3::new(0.0, 0.0, 4.0),
                u: Vec3::new(1.0, 0.0, 0.0),
                v: Vec3::new(0.0, 1.0, 0.0),
                half: [inf, inf],
            },
            tex(Pattern::Noise, [0.1, 0.3, 0.3], [0.9, 0.9, 0.7], 0.2, 21),
        ),
        Primitive {
            shape: Shape::Sphere { center: Vec3::new(-0.3, 0.0, 2.5), radius: 0.6 },
            texture: tex(Pattern::Checker, [0.8, 0.2, 0.1], [1.0, 0.9, 0.4], 0.2, 22),
            motion: Vec3::new(0.15, 0.0, 0.0),
        },
    ];
    SceneSpec {
        width,
        height,
        focal: width as f64,
        primitives,
        rig: Rig::Arc {
            count: views,
            radius: 3.0,
            span: 0.6,
            elevation: 0.0,
            target: Vec3::new(0.0, 0.0, 2.5),
        },
        light: Vec3::new(-0.3, -0.8, -1.0),
        ambient: 0.35,
        diffuse: 0.65,
        background: [0.0; 3],
        frames,
    }
}
