//! Rigid-body transforms on SE(3) and the pinhole camera model.
//!
//! Twists are ordered translation first: `xi = [t; omega]`. The exponential
//! map is the closed form of the 4x4 matrix exponential of
//! `[[omega^, t], [0, 0]]`.

use std::ops::Mul;

use nalgebra::{Matrix3, Vector2, Vector3, Vector6};

use crate::error::{Error, Result};

/// Below this rotation angle exp/log switch to their Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-8;
/// Points closer than this (in camera z) cannot be projected.
pub const DEFAULT_Z_MIN: f64 = 1e-4;

/// Element of se(3), `[t; omega]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub translation: Vector3<f64>,
    pub rotation: Vector3<f64>,
}

impl Twist {
    pub fn new(translation: Vector3<f64>, rotation: Vector3<f64>) -> Self {
        Self { translation, rotation }
    }

    pub fn zero() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]))
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let (t, w) = (&self.translation, &self.rotation);
        Vector6::new(t.x, t.y, t.z, w.x, w.y, w.z)
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.translation * s, self.rotation * s)
    }

    fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Rigid transform `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Se3Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Se3Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Se3Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), t)
    }

    pub fn compose(&self, other: &Se3Pose) -> Se3Pose {
        Se3Pose::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    /// Nearest proper rotation (polar decomposition) with the same
    /// translation. Long chains of compositions and transposed inverses
    /// otherwise let rounding errors grow.
    pub fn orthonormalized(&self) -> Se3Pose {
        let svd = self.rotation.svd(true, true);
        let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
        let mut d = Matrix3::identity();
        if (u * v_t).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        Se3Pose::new(u * d * v_t, self.translation)
    }

    pub fn inverse(&self) -> Se3Pose {
        let rt = self.rotation.transpose();
        Se3Pose::new(rt, -(rt * self.translation))
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        let r = &self.rotation;
        let s = 0.5 * vee(&(r - r.transpose())).norm();
        let c = 0.5 * (r.trace() - 1.0);
        s.atan2(c)
    }

    pub fn is_finite(&self) -> bool {
        self.rotation
            .iter()
            .chain(self.translation.iter())
            .all(|v| v.is_finite())
    }

    /// `max |R^T R - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }
}

impl Mul for Se3Pose {
    type Output = Se3Pose;

    fn mul(self, rhs: Se3Pose) -> Se3Pose {
        self.compose(&rhs)
    }
}

impl Mul<&Se3Pose> for &Se3Pose {
    type Output = Se3Pose;

    fn mul(self, rhs: &Se3Pose) -> Se3Pose {
        self.compose(rhs)
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

pub fn se3_exp(xi: &Twist) -> Result<Se3Pose> {
    if !xi.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite twist {:?}", xi.to_vector())));
    }
    let w = skew(&xi.rotation);
    let w2 = w * w;
    let theta = xi.rotation.norm();
    let (a, b, c) = if theta < SMALL_ANGLE {
        (1.0, 0.5, 1.0 / 6.0)
    } else {
        let t2 = theta * theta;
        (
            theta.sin() / theta,
            (1.0 - theta.cos()) / t2,
            (theta - theta.sin()) / (t2 * theta),
        )
    };
    let eye = Matrix3::identity();
    let rotation = eye + w * a + w2 * b;
    let v = eye + w * b + w2 * c;
    Ok(Se3Pose::new(rotation, v * xi.translation))
}

/// Inverse of [`se3_exp`] for rotation angles below `pi - 1e-6`.
pub fn se3_log(pose: &Se3Pose) -> Result<Twist> {
    let theta = pose.rotation_angle();
    if !theta.is_finite() {
        return Err(Error::InvalidArgument("non-finite pose".into()));
    }
    if theta >= std::f64::consts::PI - 1e-6 {
        return Err(Error::NearSingular(theta));
    }
    let r = &pose.rotation;
    let omega = if theta < SMALL_ANGLE {
        0.5 * vee(&(r - r.transpose()))
    } else {
        (theta / (2.0 * theta.sin())) * vee(&(r - r.transpose()))
    };
    let w = skew(&omega);
    let w2 = w * w;
    let k = if theta < SMALL_ANGLE {
        1.0 / 12.0
    } else {
        (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / (theta * theta)
    };
    let v_inv = Matrix3::identity() - w * 0.5 + w2 * k;
    Ok(Twist::new(v_inv * pose.translation, omega))
}

/// Pinhole intrinsics for an undistorted image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx.is_finite()
            && self.fy.is_finite()
            && self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cy >= 0.0
            && self.cx < self.width as f64
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid intrinsics {self:?}")))
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Intrinsics of pyramid level `level` built by 2x2 mean pooling, with
    /// pixel centres at integer coordinates.
    pub fn at_level(&self, level: usize) -> Intrinsics {
        let s = 1.0 / (1u64 << level) as f64;
        let mut w = self.width;
        let mut h = self.height;
        for _ in 0..level {
            w = w.div_ceil(2);
            h = h.div_ceil(2);
        }
        Intrinsics {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: (self.cx + 0.5) * s - 0.5,
            cy: (self.cy + 0.5) * s - 0.5,
            width: w,
            height: h,
        }
    }

    #[inline]
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= (self.width - 1) as f64 && p.y <= (self.height - 1) as f64
    }
}

/// `depth * K^-1 [u, v, 1]`.
pub fn backproject(k: &Intrinsics, p: &Vector2<f64>, depth: f64) -> Result<Vector3<f64>> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(Error::InvalidDepth(depth));
    }
    Ok(Vector3::new(
        (p.x - k.cx) / k.fx * depth,
        (p.y - k.cy) / k.fy * depth,
        depth,
    ))
}

/// Projects a camera-frame point; returns pixel and depth. Out-of-image
/// results are returned as-is.
pub fn project(k: &Intrinsics, point: &Vector3<f64>) -> Result<(Vector2<f64>, f64)> {
    project_with_min(k, point, DEFAULT_Z_MIN)
}

pub fn project_with_min(k: &Intrinsics, point: &Vector3<f64>, z_min: f64) -> Result<(Vector2<f64>, f64)> {
    let z = point.z;
    if !(z > z_min) {
        return Err(Error::BehindCamera(z));
    }
    Ok((Vector2::new(k.fx * point.x / z + k.cx, k.fy * point.y / z + k.cy), z))
}

/// Moves pixel `p` with depth `depth` through `t_rel` and reprojects it.
pub fn warp_point(t_rel: &Se3Pose, k: &Intrinsics, p: &Vector2<f64>, depth: f64) -> Result<(Vector2<f64>, f64)> {
    let point = backproject(k, p, depth)?;
    project(k, &t_rel.transform_point(&point))
}
