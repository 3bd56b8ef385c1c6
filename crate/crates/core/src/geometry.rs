//! Camera and Gaussian projection math.
//!
//! Everything needed to take a 3D Gaussian into image space: rigid
//! world-to-camera transforms, pinhole projection, covariance construction
//! and projection through the perspective Jacobian, and the per-pixel
//! Mahalanobis weight. All operations are pure functions over immutable
//! inputs and use f64 throughout.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// Depth below which a camera-space point counts as degenerate (world units).
pub const DEFAULT_EPSILON_Z: f64 = 1e-6;

/// Regularizer added to both diagonal entries of the projected 2D covariance
/// (pixels squared). Keeps edge-on splats invertible.
pub const DEFAULT_EPSILON_COV: f64 = 0.3;

/// Tolerance for rotation orthonormality and unit-determinant checks.
const ROTATION_TOL: f64 = 1e-6;

/// Zeroth spherical-harmonic basis constant: rgb = 0.5 + SH_C0 * f_dc.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    /// The point sits at or behind the camera plane. Signals a cullable
    /// Gaussian, not a fault.
    #[error("degenerate depth {depth} (epsilon_z {epsilon_z})")]
    DegenerateDepth { depth: f64, epsilon_z: f64 },
    /// A 2x2 covariance could not be inverted. Unreachable after
    /// regularization; indicates a pipeline bug upstream.
    #[error("singular 2x2 covariance (det {det})")]
    SingularCovariance { det: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid extrinsics: {0}")]
    InvalidExtrinsics(String),
    #[error("invalid splat: {0}")]
    InvalidSplat(String),
}

/// Pinhole intrinsics: focal lengths and principal point in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) || !fx.is_finite() || !fy.is_finite() {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive and finite, got fx={fx} fy={fy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "image size must be at least 1x1, got {width}x{height}"
            )));
        }
        if !(0.0..=width as f64).contains(&cx) || !(0.0..=height as f64).contains(&cy) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside image {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Intrinsics with the principal point at the image center, for sources
    /// that do not supply one.
    pub fn with_center(fx: f64, fy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        Self::new(fx, fy, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }
}

/// Camera pose under the canonical world-to-camera convention
/// `X_cam = R * X_world + t`.
///
/// Sources that store the pose as a camera center C with `X_cam = R * (X - C)`
/// convert on ingest via [`CameraExtrinsics::from_camera_center`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraExtrinsics {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraExtrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let gram = rotation.transpose() * rotation;
        let dev = (gram - Matrix3::identity()).abs().max();
        if dev > ROTATION_TOL {
            return Err(GeometryError::InvalidExtrinsics(format!(
                "rotation is not orthonormal (max |R^T R - I| = {dev:.3e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(GeometryError::InvalidExtrinsics(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidExtrinsics(
                "translation has non-finite components".into(),
            ));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Builds extrinsics from a rotation and a camera center C, converting
    /// the camera-center form `X_cam = R (X - C)` to the canonical one via
    /// `t = -R C`.
    pub fn from_camera_center(
        rotation: Matrix3<f64>,
        center: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let translation = -rotation * center;
        Self::new(rotation, translation)
    }

    /// Camera center in world coordinates: `C = -R^T t`.
    pub fn camera_center(&self) -> Vector3<f64> {
        -self.rotation.transpose() * self.translation
    }

    /// Inverse of [`world_to_camera`]: `X = R^T (X_cam - t)`.
    pub fn camera_to_world(&self, point_cam: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (point_cam - self.translation)
    }
}

/// One 3D Gaussian in its activated form.
///
/// `log_scale` and `opacity_logit` stay in their stored (pre-activation)
/// parameterizations; [`GaussianSplat::scale`] and [`GaussianSplat::alpha`]
/// apply exp and sigmoid on demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSplat {
    pub position: Vector3<f64>,
    pub log_scale: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    pub opacity_logit: f64,
    /// Base color in [0, 1], converted from the zeroth spherical-harmonic band.
    pub color: Vector3<f64>,
}

impl GaussianSplat {
    /// Builds a splat from raw stored fields, normalizing the quaternion
    /// (given as w, x, y, z).
    pub fn new(
        position: Vector3<f64>,
        log_scale: Vector3<f64>,
        rotation_wxyz: [f64; 4],
        opacity_logit: f64,
        color: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let [w, x, y, z] = rotation_wxyz;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(GeometryError::InvalidSplat(format!(
                "quaternion has norm {norm}, cannot normalize"
            )));
        }
        if !log_scale.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidSplat("log-scale not finite".into()));
        }
        if !position.iter().all(|v| v.is_finite()) || !opacity_logit.is_finite() {
            return Err(GeometryError::InvalidSplat(
                "position or opacity not finite".into(),
            ));
        }
        Ok(Self {
            position,
            log_scale,
            rotation: UnitQuaternion::from_quaternion(q),
            opacity_logit,
            color,
        })
    }

    /// Activated opacity, `sigmoid(opacity_logit)`, always in (0, 1).
    pub fn alpha(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    /// Activated per-axis scale, `exp(log_scale)`.
    pub fn scale(&self) -> Vector3<f64> {
        self.log_scale.map(f64::exp)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }
}

/// Numerically stable logistic sigmoid.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`]. Input clamped away from {0, 1}.
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Symmetric 2x2 covariance `[[a, b], [b, c]]` in pixel space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cov2D {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Cov2D {
    pub fn det(&self) -> f64 {
        self.a * self.c - self.b * self.b
    }

    pub fn as_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.a, self.b, self.b, self.c)
    }

    /// Eigenvalues, larger first. Closed form for the symmetric 2x2 case.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mid = 0.5 * (self.a + self.c);
        let half_gap = (0.25 * (self.a - self.c).powi(2) + self.b * self.b).sqrt();
        (mid + half_gap, mid - half_gap)
    }

    /// Squared Mahalanobis distance of `delta` under this covariance.
    pub fn mahalanobis_sq(&self, delta: &Vector2<f64>) -> Result<f64, GeometryError> {
        let det = self.det();
        if det <= 1e-12 {
            return Err(GeometryError::SingularCovariance { det });
        }
        let inv_a = self.c / det;
        let inv_b = -self.b / det;
        let inv_c = self.a / det;
        Ok(delta.x * delta.x * inv_a + 2.0 * delta.x * delta.y * inv_b + delta.y * delta.y * inv_c)
    }
}

/// Result of projecting a camera-space point to the image plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelProjection {
    pub pixel: Vector2<f64>,
    pub depth: f64,
}

/// World point into the camera frame: `X_cam = R * X + t`.
pub fn world_to_camera(point: &Vector3<f64>, extrinsics: &CameraExtrinsics) -> Vector3<f64> {
    extrinsics.rotation * point + extrinsics.translation
}

/// Camera-space point onto the image plane:
/// `x = fx * Xc/Zc + cx`, `y = fy * Yc/Zc + cy`, depth `Zc`.
pub fn camera_to_pixel(
    point_cam: &Vector3<f64>,
    intrinsics: &CameraIntrinsics,
    epsilon_z: f64,
) -> Result<PixelProjection, GeometryError> {
    let z = point_cam.z;
    if z <= epsilon_z {
        return Err(GeometryError::DegenerateDepth {
            depth: z,
            epsilon_z,
        });
    }
    Ok(PixelProjection {
        pixel: Vector2::new(
            intrinsics.fx * point_cam.x / z + intrinsics.cx,
            intrinsics.fy * point_cam.y / z + intrinsics.cy,
        ),
        depth: z,
    })
}

/// World-space 3x3 covariance of a splat: `R_g S^2 R_g^T` with
/// `S = diag(exp(log_scale))`.
pub fn covariance_world(splat: &GaussianSplat) -> Matrix3<f64> {
    let r = splat.rotation_matrix();
    let s2 = splat.scale().map(|s| s * s);
    // R * diag(s^2) * R^T without materializing the diagonal matrix.
    let mut out = Matrix3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let mut acc = 0.0;
            for k in 0..3 {
                acc += r[(i, k)] * s2[k] * r[(j, k)];
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    out
}

/// Rotates a world covariance into the camera frame: `R Sigma R^T`.
pub fn covariance_camera(cov_world: &Matrix3<f64>, extrinsics: &CameraExtrinsics) -> Matrix3<f64> {
    extrinsics.rotation * cov_world * extrinsics.rotation.transpose()
}

/// Jacobian of the perspective projection at a camera-space point:
/// `[[fx/z, 0, -fx x/z^2], [0, fy/z, -fy y/z^2]]`.
pub fn projection_jacobian(
    point_cam: &Vector3<f64>,
    intrinsics: &CameraIntrinsics,
    epsilon_z: f64,
) -> Result<Matrix2x3<f64>, GeometryError> {
    let z = point_cam.z;
    if z <= epsilon_z {
        return Err(GeometryError::DegenerateDepth {
            depth: z,
            epsilon_z,
        });
    }
    let inv_z = 1.0 / z;
    let inv_z2 = inv_z * inv_z;
    Ok(Matrix2x3::new(
        intrinsics.fx * inv_z,
        0.0,
        -intrinsics.fx * point_cam.x * inv_z2,
        0.0,
        intrinsics.fy * inv_z,
        -intrinsics.fy * point_cam.y * inv_z2,
    ))
}

/// Projects a camera-frame covariance to image space, `J Sigma J^T`, adding
/// `epsilon_cov` to both diagonal entries so the result stays invertible.
pub fn covariance_image(cov_cam: &Matrix3<f64>, jacobian: &Matrix2x3<f64>, epsilon_cov: f64) -> Cov2D {
    let m = jacobian * cov_cam * jacobian.transpose();
    Cov2D {
        a: m[(0, 0)] + epsilon_cov,
        b: 0.5 * (m[(0, 1)] + m[(1, 0)]),
        c: m[(1, 1)] + epsilon_cov,
    }
}

/// Per-pixel contribution of a projected Gaussian:
/// `w = alpha * exp(-0.5 * D^2)` with `D^2` the Mahalanobis distance of the
/// pixel from the projected mean.
pub fn gaussian_weight(
    pixel: &Vector2<f64>,
    mean: &Vector2<f64>,
    cov: &Cov2D,
    alpha: f64,
) -> Result<f64, GeometryError> {
    let d2 = cov.mahalanobis_sq(&(pixel - mean))?;
    Ok(alpha * (-0.5 * d2).exp())
}
