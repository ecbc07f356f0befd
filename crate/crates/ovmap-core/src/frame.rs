//! Per-observation data: camera intrinsics, rigid poses, depth images and
//! segment masks, assembled into a [`FrameRecord`].

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::semantics::PatchFeatureGrid;

/// Pinhole camera intrinsics. `width` is the number of image columns,
/// `height` the number of rows; pixel `(u, v)` is `(column, row)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f32,
    pub fy: f32,
    pub cx: f32,
    pub cy: f32,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation("image dimensions must be positive".into()));
        }
        if !(self.fx.is_finite() && self.fy.is_finite() && self.fx != 0.0 && self.fy != 0.0) {
            return Err(Error::Validation("focal lengths must be finite and nonzero".into()));
        }
        Ok(())
    }

    /// Back-project pixel `(u, v)` at z-depth `d` into the camera frame.
    #[inline]
    pub fn backproject(&self, u: f32, v: f32, d: f32) -> Vector3<f32> {
        Vector3::new(d * (u - self.cx) / self.fx, d * (v - self.cy) / self.fy, d)
    }

    pub fn pixel_count(&self) -> u64 {
        self.width as u64 * self.height as u64
    }
}

/// A rigid camera-to-world transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f32>,
    translation: Vector3<f32>,
}

/// Maximum deviation of `R^T R` from identity accepted as orthonormal.
pub const POSE_ORTHONORMAL_TOL: f64 = 1e-5;

impl Pose {
    /// Build from rotation and translation, validating rigidity
    /// (orthonormal rotation, determinant +1).
    pub fn new(rotation: Matrix3<f32>, translation: Vector3<f32>) -> Result<Self> {
        let r64 = rotation.cast::<f64>();
        let gram = r64.transpose() * r64;
        let mut dev: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((gram[(i, j)] - target).abs());
            }
        }
        if dev > POSE_ORTHONORMAL_TOL {
            return Err(Error::Validation(format!(
                "pose rotation not orthonormal (deviation {dev:.2e})"
            )));
        }
        let det = r64.determinant();
        if (det - 1.0).abs() > 1e-4 {
            return Err(Error::Validation(format!(
                "pose rotation determinant {det:.6} != +1 (reflection or scale)"
            )));
        }
        if !translation.iter().all(|t| t.is_finite()) {
            return Err(Error::Validation("pose translation not finite".into()));
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Parse a 4x4 homogeneous camera-to-world matrix (row-major `[R|t]`).
    pub fn from_matrix(m: &Matrix4<f32>) -> Result<Self> {
        let bottom = (m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]);
        if bottom != (0.0, 0.0, 0.0, 1.0) {
            return Err(Error::Validation(
                "pose matrix bottom row must be [0 0 0 1]".into(),
            ));
        }
        Pose::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn to_matrix(&self) -> Matrix4<f32> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    #[inline]
    pub fn transform(&self, p_cam: &Vector3<f32>) -> Vector3<f32> {
        self.rotation * p_cam + self.translation
    }

    pub fn rotation(&self) -> &Matrix3<f32> {
        &self.rotation
    }

    /// Camera center in world coordinates.
    pub fn position(&self) -> Vector3<f32> {
        self.translation
    }
}

/// Accepted z-depth window; values outside `(min, max)` are treated as
/// invalid measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthRange {
    pub min: f32,
    pub max: f32,
}

impl Default for DepthRange {
    fn default() -> Self {
        // Indoor RGB-D sensor range.
        DepthRange { min: 0.1, max: 10.0 }
    }
}

impl DepthRange {
    #[inline]
    pub fn contains(&self, d: f32) -> bool {
        d.is_finite() && d > self.min && d < self.max
    }
}

/// Row-major depth image, z-depth in meters, 0 = no return.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self> {
        if data.len() != (width as usize) * (height as usize) {
            return Err(Error::Dimension(format!(
                "depth buffer has {} values, expected {}x{}",
                data.len(),
                height,
                width
            )));
        }
        Ok(DepthImage {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> f32 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// One binary segment mask at image resolution, with the detector's
/// confidence for the segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
    pub confidence: f32,
}

impl SegmentMask {
    pub fn new(width: u32, height: u32, data: Vec<u8>, confidence: f32) -> Result<Self> {
        if data.len() != (width as usize) * (height as usize) {
            return Err(Error::Dimension(format!(
                "mask buffer has {} values, expected {}x{}",
                data.len(),
                height,
                width
            )));
        }
        if let Some(bad) = data.iter().find(|&&b| b > 1) {
            return Err(Error::Corruption(format!(
                "mask values must be 0 or 1, found {bad}"
            )));
        }
        Ok(SegmentMask {
            width,
            height,
            data,
            confidence,
        })
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> bool {
        self.data[v as usize * self.width as usize + u as usize] != 0
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Number of set pixels.
    pub fn area(&self) -> u64 {
        self.data.iter().filter(|&&b| b != 0).count() as u64
    }

    /// Tight pixel bounding box `(u_min, v_min, u_max, v_max)` (inclusive),
    /// or `None` for an empty mask.
    pub fn bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let (mut u0, mut v0, mut u1, mut v1) = (u32::MAX, u32::MAX, 0u32, 0u32);
        let mut any = false;
        for v in 0..self.height {
            let row = &self.data[v as usize * self.width as usize..][..self.width as usize];
            for (u, &b) in row.iter().enumerate() {
                if b != 0 {
                    any = true;
                    let u = u as u32;
                    u0 = u0.min(u);
                    u1 = u1.max(u);
                    v0 = v0.min(v);
                    v1 = v1.max(v);
                }
            }
        }
        any.then_some((u0, v0, u1, v1))
    }

    /// Long side over short side of the bounding box.
    pub fn aspect_ratio(&self) -> Option<f32> {
        let (u0, v0, u1, v1) = self.bbox()?;
        let w = (u1 - u0 + 1) as f32;
        let h = (v1 - v0 + 1) as f32;
        Some(w.max(h) / w.min(h))
    }
}

/// One fully materialized observation: pose, depth, segmentation and the
/// dense feature grids extracted for the frame.
#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub pose: Pose,
    pub intrinsics: Intrinsics,
    pub depth: DepthImage,
    pub masks: Vec<SegmentMask>,
    pub patch_grid: PatchFeatureGrid,
    pub tracking_grid: PatchFeatureGrid,
    pub global_embedding: Vec<f32>,
}

impl FrameRecord {
    /// Cross-checks that all buffers agree with the intrinsics' image size.
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        if self.depth.width() != w || self.depth.height() != h {
            return Err(Error::Dimension(format!(
                "depth is {}x{}, intrinsics say {}x{}",
                self.depth.height(),
                self.depth.width(),
                h,
                w
            )));
        }
        for (i, m) in self.masks.iter().enumerate() {
            if m.width() != w || m.height() != h {
                return Err(Error::Dimension(format!("mask {i} does not match image size")));
            }
        }
        self.patch_grid.check_covers_image(w, h)?;
        self.tracking_grid.check_covers_image(w, h)?;
        if self.global_embedding.len() != self.patch_grid.dim() {
            return Err(Error::Dimension(format!(
                "global embedding dim {} != patch feature dim {}",
                self.global_embedding.len(),
                self.patch_grid.dim()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_rejects_scaled_rotation() {
        let m = Matrix3::identity() * 1.01;
        assert!(Pose::new(m, Vector3::zeros()).is_err());
    }

    #[test]
    fn pose_rejects_reflection() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = -1.0;
        let err = Pose::new(m, Vector3::zeros()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn pose_roundtrip_matrix() {
        let yaw = 0.7f32;
        let r = Matrix3::new(
            yaw.cos(),
            -yaw.sin(),
            0.0,
            yaw.sin(),
            yaw.cos(),
            0.0,
            0.0,
            0.0,
            1.0,
        );
        let p = Pose::new(r, Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let q = Pose::from_matrix(&p.to_matrix()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn mask_bbox_and_aspect() {
        let mut data = vec![0u8; 100];
        // 2x300-like sliver scaled to a 10x10 canvas: one row segment
        data[34] = 1;
        data[35] = 1;
        data[36] = 1;
        let m = SegmentMask::new(10, 10, data, 0.9).unwrap();
        assert_eq!(m.bbox(), Some((4, 3, 6, 3)));
        assert_eq!(m.area(), 3);
        assert_eq!(m.aspect_ratio(), Some(3.0));
    }

    #[test]
    fn mask_rejects_non_binary() {
        assert!(SegmentMask::new(2, 2, vec![0, 1, 2, 0], 1.0).is_err());
    }
}
