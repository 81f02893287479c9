//! Pinhole cameras with axis-angle world-to-camera poses.
//!
//! Depth is always camera-space z (not ray length), so depths splatted from
//! different sources compare directly at a target pixel.

use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::math;

/// Points closer to the image plane than this are treated as behind the camera.
pub const EPS_Z: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        math::sqrt(self.dot(self))
    }

    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            self
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn from_rows(r0: Vec3, r1: Vec3, r2: Vec3) -> Self {
        Mat3([r0.to_array(), r1.to_array(), r2.to_array()])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// `selfᵀ · v`
    pub fn tr_mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[1][0] * v.y + m[2][0] * v.z,
            m[0][1] * v.x + m[1][1] * v.y + m[2][1] * v.z,
            m[0][2] * v.x + m[1][2] * v.y + m[2][2] * v.z,
        )
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(out)
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

/// Rodrigues formula: axis-angle triple to rotation matrix.
///
/// Written as `I + a·K + b·K²` with `K` the skew matrix of the unnormalized
/// triple, `a = sin θ / θ`, `b = (1 − cos θ) / θ²`. Both coefficients switch
/// to their Taylor series for tiny angles; the zero vector gives the identity.
pub fn pose_to_matrix(rotation: [f64; 3]) -> Mat3 {
    let [rx, ry, rz] = rotation;
    let theta2 = rx * rx + ry * ry + rz * rz;
    if theta2 == 0.0 {
        return Mat3::IDENTITY;
    }
    let (a, b) = if theta2 < 1e-8 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = math::sqrt(theta2);
        (math::sin(theta) / theta, (1.0 - math::cos(theta)) / theta2)
    };
    let k = [[0.0, -rz, ry], [rz, 0.0, -rx], [-ry, rx, 0.0]];
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let kk: f64 = (0..3).map(|l| k[i][l] * k[l][j]).sum();
            m[i][j] = if i == j { 1.0 } else { 0.0 } + a * k[i][j] + b * kk;
        }
    }
    Mat3(m)
}

/// Inverse of [`pose_to_matrix`] for proper rotations (angle in `[0, π]`).
pub fn matrix_to_pose(r: &Mat3) -> [f64; 3] {
    let m = &r.0;
    let trace = m[0][0] + m[1][1] + m[2][2];
    let cos_theta = ((trace - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = math::acos(cos_theta);
    let w = Vec3::new(m[2][1] - m[1][2], m[0][2] - m[2][0], m[1][0] - m[0][1]);
    if theta < 1e-6 {
        // sin θ ≈ θ: w ≈ 2θ·axis
        return (w * 0.5).to_array();
    }
    if core::f64::consts::PI - theta > 1e-6 {
        let s = 2.0 * math::sin(theta);
        return (w * (theta / s)).to_array();
    }
    // θ ≈ π: axis from the largest diagonal entry of (R + I) / 2.
    let d = [(m[0][0] + 1.0) * 0.5, (m[1][1] + 1.0) * 0.5, (m[2][2] + 1.0) * 0.5];
    let i = if d[0] >= d[1] && d[0] >= d[2] {
        0
    } else if d[1] >= d[2] {
        1
    } else {
        2
    };
    let mut axis = [0.0; 3];
    axis[i] = math::sqrt(d[i].max(0.0));
    for j in 0..3 {
        if j != i {
            axis[j] = (m[i][j] + m[j][i]) * 0.25 / axis[i];
        }
    }
    let axis = Vec3::from_array(axis).normalized();
    // keep the sign consistent with the (tiny) antisymmetric part
    let axis = if axis.dot(w) < 0.0 { -axis } else { axis };
    (axis * theta).to_array()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

impl PixelCoord {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Pinhole camera. The pose maps world points into camera space,
/// `q = R·p + t`, and the camera looks down `+z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    rotation: [f64; 3],
    translation: [f64; 3],
    r: Mat3,
}

/// Result of projecting a world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Visible { px: PixelCoord, z: f64 },
    BehindCamera,
}

impl Projection {
    pub fn visible(self) -> Option<(PixelCoord, f64)> {
        match self {
            Projection::Visible { px, z } => Some((px, z)),
            Projection::BehindCamera => None,
        }
    }
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        width: u32,
        height: u32,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: [f64; 3],
        translation: [f64; 3],
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera("width and height must be at least 1"));
        }
        if !(fx > 0.0 && fy > 0.0) || !fx.is_finite() || !fy.is_finite() {
            return Err(Error::InvalidCamera("focal lengths must be positive and finite"));
        }
        if !cx.is_finite() || !cy.is_finite() {
            return Err(Error::InvalidCamera("principal point must be finite"));
        }
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidCamera("pose must be finite"));
        }
        Ok(Self {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            r: pose_to_matrix(rotation),
        })
    }

    /// Camera at `eye` looking at `target`, with `up` roughly the world
    /// direction that should appear toward the top of the image.
    pub fn look_at(
        width: u32,
        height: u32,
        focal: f64,
        eye: Vec3,
        target: Vec3,
        up: Vec3,
    ) -> Result<Self> {
        let forward = (target - eye).normalized();
        let right = forward.cross(up).normalized();
        if right.norm() < 0.5 {
            return Err(Error::InvalidCamera("up vector parallel to viewing direction"));
        }
        // image y grows downward
        let down = forward.cross(right);
        let r = Mat3::from_rows(right, down, forward);
        let rotation = matrix_to_pose(&r);
        let rr = pose_to_matrix(rotation);
        let t = -rr.mul_vec(eye);
        Camera::new(
            width,
            height,
            focal,
            focal,
            (width as f64 - 1.0) * 0.5,
            (height as f64 - 1.0) * 0.5,
            rotation,
            t.to_array(),
        )
    }

    /// Same pose, different intrinsics/size.
    pub fn with_pose(&self, rotation: [f64; 3], translation: [f64; 3]) -> Result<Self> {
        Camera::new(
            self.width,
            self.height,
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            rotation,
            translation,
        )
    }

    pub fn rotation(&self) -> [f64; 3] {
        self.rotation
    }

    pub fn translation(&self) -> [f64; 3] {
        self.translation
    }

    pub fn rotation_matrix(&self) -> &Mat3 {
        &self.r
    }

    /// Camera center in world space, `−Rᵀt`.
    pub fn center(&self) -> Vec3 {
        -self.r.tr_mul_vec(Vec3::from_array(self.translation))
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        self.r.mul_vec(p) + Vec3::from_array(self.translation)
    }

    pub fn project(&self, p: Vec3) -> Projection {
        let q = self.world_to_camera(p);
        if q.z <= EPS_Z {
            return Projection::BehindCamera;
        }
        Projection::Visible {
            px: PixelCoord::new(self.fx * q.x / q.z + self.cx, self.fy * q.y / q.z + self.cy),
            z: q.z,
        }
    }

    pub fn unproject(&self, px: PixelCoord, z: f64) -> Result<Vec3> {
        if !(z > 0.0) {
            return Err(Error::NonPositiveDepth(z));
        }
        Ok(self.unproject_unchecked(px, z))
    }

    #[inline]
    pub(crate) fn unproject_unchecked(&self, px: PixelCoord, z: f64) -> Vec3 {
        let q = Vec3::new((px.u - self.cx) / self.fx * z, (px.v - self.cy) / self.fy * z, z);
        self.r.tr_mul_vec(q - Vec3::from_array(self.translation))
    }

    /// World-space direction of the ray through `px` (not normalized; z = 1 in camera space).
    pub fn ray_direction(&self, px: PixelCoord) -> Vec3 {
        let q = Vec3::new((px.u - self.cx) / self.fx, (px.v - self.cy) / self.fy, 1.0);
        self.r.tr_mul_vec(q)
    }

    pub fn contains(&self, px: PixelCoord) -> bool {
        px.u >= 0.0 && px.v >= 0.0 && px.u <= self.width as f64 - 1.0 && px.v <= self.height as f64 - 1.0
    }
}

/// The `min(k, n)` candidates whose camera centers are nearest to the
/// target's, nearest first. Equal distances keep ascending id order.
pub fn select_sources<'a, I>(target: &Camera, candidates: I, k: usize) -> Vec<usize>
where
    I: IntoIterator<Item = (usize, &'a Camera)>,
{
    let c = target.center();
    let mut ranked: Vec<(f64, usize)> = candidates
        .into_iter()
        .map(|(id, cam)| ((cam.center() - c).norm(), id))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.dedup_by_key(|r| r.1);
    ranked.truncate(k);
    ranked.into_iter().map(|(_, id)| id).collect()
}
