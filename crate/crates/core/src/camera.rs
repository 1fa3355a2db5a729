//! Pinhole camera model and the coordinate transforms between pixel, camera,
//! and world frames, including pose depth estimation from a real-world height.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::Pose3D;
use crate::skeleton::{self, PoseCategory, JOINT_COUNT};

/// Tolerance for the rotation orthonormality check at construction.
const ORTHONORMAL_EPS: f64 = 1e-9;
/// Below this absolute denominator the depth-from-height formula degenerates.
const DEGENERATE_DENOM_EPS: f64 = 1e-9;

/// Focal length and principal point, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub f: f64,
    pub ox: f64,
    pub oy: f64,
}

impl CameraIntrinsics {
    pub fn new(f: f64, ox: f64, oy: f64) -> Result<Self> {
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::invalid(format!("focal length must be > 0, got {f}")));
        }
        Ok(Self { f, ox, oy })
    }
}

/// Camera-to-world rigid transform: `world = r * camera + t`.
///
/// `gravity_row` names the row of `r` (and entry of `t`) whose output is the
/// world height coordinate. Its first two entries drive the depth-from-height
/// formula in [`estimate_pose_depth`].
#[derive(Debug, Clone, PartialEq)]
pub struct CameraExtrinsics {
    r: Matrix3<f64>,
    t: Vector3<f64>,
    gravity_row: usize,
}

impl CameraExtrinsics {
    /// Builds from a camera-to-world rotation and translation.
    pub fn from_camera_to_world(
        r: Matrix3<f64>,
        t: Vector3<f64>,
        gravity_row: usize,
    ) -> Result<Self> {
        if gravity_row > 2 {
            return Err(Error::invalid(format!(
                "gravity_row must be 0, 1 or 2, got {gravity_row}"
            )));
        }
        let gram = r.transpose() * r;
        let mut deviation: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                deviation = deviation.max((gram[(i, j)] - target).abs());
            }
        }
        deviation = deviation.max((r.determinant() - 1.0).abs());
        if deviation > ORTHONORMAL_EPS {
            return Err(Error::NonOrthonormalRotation { deviation });
        }
        Ok(Self { r, t, gravity_row })
    }

    /// Builds from a world-to-camera transform (`camera = r_wc * world + t_wc`)
    /// by inverting it.
    pub fn from_world_to_camera(
        r_wc: Matrix3<f64>,
        t_wc: Vector3<f64>,
        gravity_row: usize,
    ) -> Result<Self> {
        let r = r_wc.transpose();
        let t = -(r * t_wc);
        Self::from_camera_to_world(r, t, gravity_row)
    }

    pub fn identity() -> Self {
        Self {
            r: Matrix3::identity(),
            t: Vector3::zeros(),
            gravity_row: 2,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.r
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.t
    }

    pub fn gravity_row(&self) -> usize {
        self.gravity_row
    }

    /// First two rotation entries of the gravity row.
    pub fn gravity_entries(&self) -> (f64, f64) {
        (
            self.r[(self.gravity_row, 0)],
            self.r[(self.gravity_row, 1)],
        )
    }

    /// The 12 entries of the 3x4 camera-to-world matrix, row major.
    pub fn row_major(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for row in 0..3 {
            for col in 0..3 {
                out[row * 4 + col] = self.r[(row, col)];
            }
            out[row * 4 + 3] = self.t[row];
        }
        out
    }
}

/// A continuous pixel coordinate with optional depth along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
    pub d: Option<f64>,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v, d: None }
    }

    pub fn with_depth(u: f64, v: f64, d: f64) -> Self {
        Self { u, v, d: Some(d) }
    }
}

/// Back-projects a pixel with depth into the camera frame:
/// `x_c = (u - ox) d / f`, `y_c = (v - oy) d / f`, `z_c = d`.
pub fn pixel_to_camera(p: &PixelPoint, k: &CameraIntrinsics) -> Result<Vector3<f64>> {
    let d = p.d.ok_or(Error::MissingDepth)?;
    if !(d > 0.0) {
        return Err(Error::NonPositiveDepth {
            depth: d,
            joint: None,
        });
    }
    Ok(Vector3::new(
        (p.u - k.ox) * d / k.f,
        (p.v - k.oy) * d / k.f,
        d,
    ))
}

/// Applies the camera-to-world transform.
pub fn camera_to_world(c: &Vector3<f64>, e: &CameraExtrinsics) -> Vector3<f64> {
    e.r * c + e.t
}

/// Inverse of [`camera_to_world`].
pub fn world_to_camera(w: &Vector3<f64>, e: &CameraExtrinsics) -> Vector3<f64> {
    e.r.transpose() * (w - e.t)
}

/// Projects a world point to a pixel with depth. Fails when the point lies
/// on or behind the image plane.
pub fn world_to_pixel(
    w: &Vector3<f64>,
    e: &CameraExtrinsics,
    k: &CameraIntrinsics,
) -> Result<PixelPoint> {
    let c = world_to_camera(w, e);
    if !(c.z > 0.0) {
        return Err(Error::BehindCamera { z_c: c.z });
    }
    Ok(PixelPoint::with_depth(
        k.f * c.x / c.z + k.ox,
        k.f * c.y / c.z + k.oy,
        c.z,
    ))
}

/// Picks the highest/lowest joints used by the depth formula: the head joint
/// and the ankle with the larger image-down coordinate (ties favor the right
/// ankle).
fn extreme_joints(joints2d: &[PixelPoint; JOINT_COUNT]) -> (usize, usize) {
    let low = if joints2d[skeleton::L_ANKLE].v > joints2d[skeleton::R_ANKLE].v {
        skeleton::L_ANKLE
    } else {
        skeleton::R_ANKLE
    };
    (skeleton::HEAD, low)
}

/// Estimates the pose depth from a sampled real-world height `H`:
///
/// `d = H * f / (g1 * (u_h - u_l) + g2 * (v_h - v_l))`
///
/// where `(g1, g2)` are the first two rotation entries of the extrinsics
/// gravity row and `(u_h, v_h)`, `(u_l, v_l)` are the highest and lowest
/// joints of the 2D pose. Both extreme joints are assumed to share one depth,
/// which is exact when the optical axis is orthogonal to the world up axis.
pub fn estimate_pose_depth(
    joints2d: &[PixelPoint; JOINT_COUNT],
    height_m: f64,
    e: &CameraExtrinsics,
    k: &CameraIntrinsics,
) -> Result<f64> {
    if !(height_m > 0.0) {
        return Err(Error::invalid(format!(
            "height must be > 0, got {height_m}"
        )));
    }
    let (hi, lo) = extreme_joints(joints2d);
    let du = joints2d[hi].u - joints2d[lo].u;
    let dv = joints2d[hi].v - joints2d[lo].v;
    let (g1, g2) = e.gravity_entries();
    let denom = g1 * du + g2 * dv;
    if denom.abs() < DEGENERATE_DENOM_EPS {
        return Err(Error::DegenerateView {
            eps: DEGENERATE_DENOM_EPS,
        });
    }
    let d = height_m * k.f / denom;
    if !(d > 0.0) {
        return Err(Error::NonPositiveDepth {
            depth: d,
            joint: None,
        });
    }
    Ok(d)
}

/// Lifts a 2D pose into the world given per-joint depth offsets relative to
/// the pelvis and the estimated pelvis depth.
pub fn lift_pose(
    joints2d: &[PixelPoint; JOINT_COUNT],
    depth_offsets: &[f64; JOINT_COUNT],
    d_pelvis: f64,
    e: &CameraExtrinsics,
    k: &CameraIntrinsics,
    category: PoseCategory,
) -> Result<Pose3D> {
    let mut world = [Vector3::zeros(); JOINT_COUNT];
    for j in 0..JOINT_COUNT {
        let d = d_pelvis + depth_offsets[j];
        if !(d > 0.0) {
            return Err(Error::NonPositiveDepth {
                depth: d,
                joint: Some(j),
            });
        }
        let px = PixelPoint::with_depth(joints2d[j].u, joints2d[j].v, d);
        world[j] = camera_to_world(&pixel_to_camera(&px, k)?, e);
    }
    Pose3D::new(world, category)
}

/// On-disk camera description.
///
/// ```json
/// { "f": 300.0, "ox": 160.0, "oy": 120.0,
///   "extrinsics_row_major": [ ...12 numbers... ],
///   "convention": "camera_to_world", "gravity_row": 2 }
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraFile {
    pub f: f64,
    pub ox: f64,
    pub oy: f64,
    pub extrinsics_row_major: Vec<f64>,
    pub convention: ExtrinsicsConvention,
    pub gravity_row: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtrinsicsConvention {
    CameraToWorld,
    WorldToCamera,
}

impl CameraFile {
    pub fn parse(&self) -> Result<(CameraIntrinsics, CameraExtrinsics)> {
        let k = CameraIntrinsics::new(self.f, self.ox, self.oy)?;
        if self.extrinsics_row_major.len() != 12 {
            return Err(Error::invalid(format!(
                "extrinsics_row_major must hold 12 numbers, got {}",
                self.extrinsics_row_major.len()
            )));
        }
        let m = &self.extrinsics_row_major;
        let r = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let t = Vector3::new(m[3], m[7], m[11]);
        let e = match self.convention {
            ExtrinsicsConvention::CameraToWorld => {
                CameraExtrinsics::from_camera_to_world(r, t, self.gravity_row)?
            }
            ExtrinsicsConvention::WorldToCamera => {
                CameraExtrinsics::from_world_to_camera(r, t, self.gravity_row)?
            }
        };
        Ok((k, e))
    }

    pub fn from_parts(k: &CameraIntrinsics, e: &CameraExtrinsics) -> Self {
        Self {
            f: k.f,
            ox: k.ox,
            oy: k.oy,
            extrinsics_row_major: e.row_major().to_vec(),
            convention: ExtrinsicsConvention::CameraToWorld,
            gravity_row: e.gravity_row(),
        }
    }
}

/// Reads and validates a camera JSON file.
pub fn load_camera(path: &std::path::Path) -> Result<(CameraIntrinsics, CameraExtrinsics)> {
    let text = std::fs::read_to_string(path)?;
    let file: CameraFile = serde_json::from_str(&text)?;
    file.parse()
}
