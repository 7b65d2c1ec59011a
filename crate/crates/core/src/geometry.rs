//! Rigid transforms, pinhole projection and the projection validity test.
//!
//! Frame conventions: LiDAR/ego frames are x-forward, y-left, z-up. Camera
//! frames are x-right, y-down, z-forward (optical axis). A [`CameraModel`]
//! extrinsic maps LiDAR coordinates into its camera frame.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Rigid transform `p -> R p + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SE3Pose {
    rotation: Mat3,
    translation: Vec3,
}

impl SE3Pose {
    /// Validates that `rotation` is orthonormal with determinant +1.
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("pose has non-finite entries".into()));
        }
        let err = (rotation.transpose() * rotation - Mat3::identity()).abs().max();
        let det = rotation.determinant();
        if err > ORTHONORMAL_TOL || (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::Invariant(format!(
                "rotation is not a proper orthonormal matrix (|RᵀR−I|={err:.3e}, det={det})"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    /// Rotation about +z by `yaw` radians followed by a translation.
    pub fn from_yaw(yaw: f64, translation: Vec3) -> Self {
        Self {
            rotation: rot_z(yaw),
            translation,
        }
    }

    /// Builds a pose from roll/pitch/yaw (applied as Rz·Ry·Rx).
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64, translation: Vec3) -> Self {
        let rotation = rot_z(yaw) * rot_y(pitch) * rot_x(roll);
        Self {
            rotation,
            translation,
        }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &SE3Pose) -> SE3Pose {
        SE3Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> SE3Pose {
        let rt = self.rotation.transpose();
        SE3Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn transform(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Homogeneous 4×4 matrix, row-major.
    pub fn to_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn from_row_major(m: &[f64]) -> Result<Self> {
        if m.len() != 16 {
            return Err(Error::Format(format!(
                "pose needs 16 row-major floats, got {}",
                m.len()
            )));
        }
        let last = [m[12], m[13], m[14], m[15]];
        if last != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::Format(format!(
                "pose bottom row must be [0,0,0,1], got {last:?}"
            )));
        }
        let rotation = Mat3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vec3::new(m[3], m[7], m[11]);
        SE3Pose::new(rotation, translation)
    }
}

impl TryFrom<Vec<f64>> for SE3Pose {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SE3Pose::from_row_major(&v)
    }
}

impl From<SE3Pose> for Vec<f64> {
    fn from(p: SE3Pose) -> Self {
        p.to_row_major().to_vec()
    }
}

pub fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `a ∘ b` (b applied first).
pub fn se3_compose(a: &SE3Pose, b: &SE3Pose) -> SE3Pose {
    a.compose(b)
}

/// Carries `p` from the sensor frame whose global pose is `src` into the
/// sensor frame whose global pose is `dst`: `(dst⁻¹ ∘ src)·p`.
pub fn transform_across_frames(p: &Vec3, src: &SE3Pose, dst: &SE3Pose) -> Vec3 {
    dst.inverse().compose(src).transform(p)
}

/// Pinhole camera with its LiDAR→camera extrinsic and the projection
/// validity parameters (minimum depth and boundary margin).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRecord", into = "CameraRecord")]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub d_min: f64,
    pub boundary_margin: f64,
    pub extrinsic: SE3Pose,
}

pub const DEFAULT_D_MIN: f64 = 1.0;
pub const DEFAULT_BOUNDARY_MARGIN: f64 = 2.0;

impl CameraModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        d_min: f64,
        boundary_margin: f64,
        extrinsic: SE3Pose,
    ) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            d_min,
            boundary_margin,
            extrinsic,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.d_min, self.boundary_margin]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("camera has non-finite parameters".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Config("camera focal lengths must be positive".into()));
        }
        if self.d_min <= 0.0 {
            return Err(Error::Config("camera d_min must be positive".into()));
        }
        let half = self.width.min(self.height) as f64 / 2.0;
        if self.boundary_margin < 0.0 || self.boundary_margin >= half {
            return Err(Error::Config(format!(
                "boundary margin {} outside [0, {half})",
                self.boundary_margin
            )));
        }
        Ok(())
    }

    /// Same camera at a different image resolution: intrinsics and image
    /// size scale together, the boundary margin stays in pixels.
    pub fn scaled(&self, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Config(format!("invalid resolution scale {scale}")));
        }
        let cam = Self {
            fx: self.fx * scale,
            fy: self.fy * scale,
            cx: self.cx * scale,
            cy: self.cy * scale,
            width: (self.width as f64 * scale).round() as u32,
            height: (self.height as f64 * scale).round() as u32,
            ..self.clone()
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera centre expressed in the LiDAR frame.
    pub fn center_in_lidar(&self) -> Vec3 {
        self.extrinsic.inverse().translation
    }
}

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    d_min: f64,
    boundary_margin: f64,
    extrinsic: Vec<f64>,
}

impl TryFrom<CameraRecord> for CameraModel {
    type Error = Error;
    fn try_from(r: CameraRecord) -> Result<Self> {
        let extrinsic = SE3Pose::from_row_major(&r.extrinsic)?;
        CameraModel::new(
            r.fx,
            r.fy,
            r.cx,
            r.cy,
            r.width,
            r.height,
            r.d_min,
            r.boundary_margin,
            extrinsic,
        )
    }
}

impl From<CameraModel> for CameraRecord {
    fn from(c: CameraModel) -> Self {
        CameraRecord {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            d_min: c.d_min,
            boundary_margin: c.boundary_margin,
            extrinsic: c.extrinsic.to_row_major().to_vec(),
        }
    }
}

/// Pixel position plus camera-frame depth. Depth is kept even when the
/// point fails the validity constraints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImagePoint {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Projects a point already expressed in the camera frame.
#[inline]
pub fn project_camera_point(pc: &Vec3, cam: &CameraModel) -> Result<ImagePoint> {
    if pc.z == 0.0 {
        return Err(Error::NonFinite("point lies in the camera's principal plane".into()));
    }
    let u = cam.fx * pc.x / pc.z + cam.cx;
    let v = cam.fy * pc.y / pc.z + cam.cy;
    if !(u.is_finite() && v.is_finite()) {
        return Err(Error::NonFinite("projection overflowed".into()));
    }
    Ok(ImagePoint { u, v, depth: pc.z })
}

/// Projects a LiDAR-frame point through the camera extrinsic and intrinsics.
/// Points behind the camera project to finite pixels with negative depth.
#[inline]
pub fn project_point(p: &Vec3, cam: &CameraModel) -> Result<ImagePoint> {
    project_camera_point(&cam.extrinsic.transform(p), cam)
}

/// `depth > d_min`, `b ≤ u < W − b`, `b ≤ v < H − b`.
#[inline]
pub fn check_constraints(ip: &ImagePoint, cam: &CameraModel) -> bool {
    let b = cam.boundary_margin;
    ip.depth > cam.d_min
        && ip.u >= b
        && ip.u < cam.width as f64 - b
        && ip.v >= b
        && ip.v < cam.height as f64 - b
}

/// Projection that also passes the validity constraints.
#[inline]
pub fn project_valid(p: &Vec3, cam: &CameraModel) -> Option<ImagePoint> {
    project_point(p, cam)
        .ok()
        .filter(|ip| check_constraints(ip, cam))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn cam100() -> CameraModel {
        CameraModel::new(100.0, 100.0, 50.0, 50.0, 100, 100, 1.0, 2.0, SE3Pose::identity())
            .unwrap()
    }

    fn max_abs_diff(a: &SE3Pose, b: &SE3Pose) -> f64 {
        a.to_row_major()
            .iter()
            .zip(b.to_row_major())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn compose_identity_and_inverse() {
        let g = SE3Pose::from_rpy(0.1, -0.2, 0.7, Vec3::new(3.0, -1.0, 2.0));
        assert_eq!(se3_compose(&SE3Pose::identity(), &g), g);
        let i = se3_compose(&g.inverse(), &g);
        assert!(max_abs_diff(&i, &SE3Pose::identity()) < 1e-9);
    }

    #[test]
    fn quarter_turns_compose_to_half_turn() {
        let q = SE3Pose::from_yaw(FRAC_PI_2, Vec3::zeros());
        let h = SE3Pose::from_yaw(2.0 * FRAC_PI_2, Vec3::zeros());
        assert!(max_abs_diff(&q.compose(&q), &h) < 1e-12);
    }

    #[test]
    fn rejects_non_rotation() {
        let m = Mat3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(SE3Pose::new(m, Vec3::zeros()).is_err());
        let s = Mat3::identity() * 1.01;
        assert!(SE3Pose::new(s, Vec3::zeros()).is_err());
    }

    #[test]
    fn row_major_round_trip() {
        let g = SE3Pose::from_rpy(0.3, 0.2, -1.1, Vec3::new(1.0, 2.0, 3.0));
        let back = SE3Pose::from_row_major(&g.to_row_major()).unwrap();
        assert_eq!(back, g);
        let json = serde_json::to_string(&g).unwrap();
        let parsed: SE3Pose = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, g);
        assert!(SE3Pose::from_row_major(&[0.0; 15]).is_err());
    }

    #[test]
    fn principal_point_projection() {
        let cam = cam100();
        let ip = project_point(&Vec3::new(0.0, 0.0, 5.0), &cam).unwrap();
        assert_eq!((ip.u, ip.v, ip.depth), (50.0, 50.0, 5.0));
    }

    #[test]
    fn hand_pinhole_arithmetic() {
        // u = 100·1/2 + 50 = 100, v = 100·0/2 + 50 = 50
        let ip = project_point(&Vec3::new(1.0, 0.0, 2.0), &cam100()).unwrap();
        assert_eq!((ip.u, ip.v, ip.depth), (100.0, 50.0, 2.0));
    }

    #[test]
    fn behind_camera_is_finite_but_rejected() {
        let cam = cam100();
        let ip = project_point(&Vec3::new(0.5, 0.2, -3.0), &cam).unwrap();
        assert!(ip.u.is_finite() && ip.v.is_finite());
        assert!(ip.depth < 0.0);
        assert!(!check_constraints(&ip, &cam));
    }

    #[test]
    fn zero_depth_signals_non_finite() {
        assert!(matches!(
            project_point(&Vec3::new(1.0, 1.0, 0.0), &cam100()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn constraint_boundaries() {
        let cam = cam100();
        let w = cam.width as f64;
        let b = cam.boundary_margin;
        let ok = ImagePoint { u: 50.0, v: 50.0, depth: 10.0 };
        assert!(check_constraints(&ok, &cam));
        assert!(!check_constraints(&ImagePoint { u: w - b, ..ok }, &cam));
        assert!(check_constraints(&ImagePoint { u: b, ..ok }, &cam));
        assert!(!check_constraints(&ImagePoint { u: b - 1e-9, ..ok }, &cam));
        assert!(!check_constraints(&ImagePoint { depth: cam.d_min, ..ok }, &cam));
        assert!(!check_constraints(&ImagePoint { v: 98.0, ..ok }, &cam));
    }

    #[test]
    fn camera_validation() {
        let e = SE3Pose::identity();
        assert!(CameraModel::new(0.0, 1.0, 0.0, 0.0, 10, 10, 1.0, 1.0, e).is_err());
        assert!(CameraModel::new(1.0, 1.0, 0.0, 0.0, 10, 10, 0.0, 1.0, e).is_err());
        assert!(CameraModel::new(1.0, 1.0, 0.0, 0.0, 10, 10, 1.0, 5.0, e).is_err());
        assert!(CameraModel::new(1.0, 1.0, 0.0, 0.0, 10, 10, 1.0, 4.9, e).is_ok());
    }

    #[test]
    fn camera_json_record() {
        let cam = cam100();
        let v: serde_json::Value = serde_json::to_value(&cam).unwrap();
        for key in ["fx", "fy", "cx", "cy", "width", "height", "d_min", "boundary_margin"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["extrinsic"].as_array().unwrap().len(), 16);
        let back: CameraModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, cam);
    }

    #[test]
    fn pure_translation_across_frames() {
        let p = Vec3::new(10.0, 2.0, -1.0);
        let d = Vec3::new(1.5, -0.5, 0.25);
        let q = transform_across_frames(&p, &SE3Pose::identity(), &SE3Pose::from_translation(d));
        assert_abs_diff_eq!(q, p - d, epsilon = 1e-12);
        let g = SE3Pose::from_rpy(0.2, 0.1, 2.0, Vec3::new(5.0, 6.0, 7.0));
        assert_abs_diff_eq!(transform_across_frames(&p, &g, &g), p, epsilon = 1e-12);
    }

    #[test]
    fn resolution_scaling() {
        let cam = cam100().scaled(0.5).unwrap();
        assert_eq!((cam.width, cam.height), (50, 50));
        assert_eq!((cam.fx, cam.cx), (50.0, 25.0));
        let a = project_point(&Vec3::new(1.0, 0.5, 4.0), &cam100()).unwrap();
        let b = project_point(&Vec3::new(1.0, 0.5, 4.0), &cam).unwrap();
        assert_abs_diff_eq!(b.u, a.u * 0.5, epsilon = 1e-12);
    }
}
