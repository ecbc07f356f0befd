use std::collections::HashMap;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame::{DepthImage, DepthRange, Intrinsics, Pose, SegmentMask};

/// World-frame point cloud with optional per-point unit normals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f32; 3]>,
    pub normals: Option<Vec<[f32; 3]>>,
}

impl PointCloud {
    pub fn from_points(points: Vec<[f32; 3]>) -> Self {
        PointCloud {
            points,
            normals: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Project the masked pixels of a depth image into a world-frame cloud:
/// `p_w = R (d K^-1 [u v 1]^T) + t` for every masked pixel whose depth lies
/// inside the validity window. Zero valid pixels is an empty cloud, not an
/// error.
pub fn project_depth(
    mask: &SegmentMask,
    depth: &DepthImage,
    intrinsics: &Intrinsics,
    pose: &Pose,
    range: &DepthRange,
) -> Result<PointCloud> {
    if mask.width() != depth.width() || mask.height() != depth.height() {
        return Err(Error::Dimension(format!(
            "mask {}x{} vs depth {}x{}",
            mask.height(),
            mask.width(),
            depth.height(),
            depth.width()
        )));
    }
    intrinsics.validate()?;
    if depth.width() != intrinsics.width || depth.height() != intrinsics.height {
        return Err(Error::Dimension("depth does not match intrinsics".into()));
    }
    let mut points = Vec::new();
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            if !mask.get(u, v) {
                continue;
            }
            let d = depth.get(u, v);
            if !range.contains(d) {
                continue;
            }
            let p = pose.transform(&intrinsics.backproject(u as f32, v as f32, d));
            points.push([p.x, p.y, p.z]);
        }
    }
    Ok(PointCloud::from_points(points))
}

/// Per-point unit normals from the covariance of the `k` nearest neighbors
/// (the point itself included), flipped to face the camera position:
/// `n · (camera - p) >= 0`. Degenerate neighborhoods (rank < 2) fall back to
/// the camera-facing view ray.
///
/// `k` is clamped to the cloud size; fewer than three points always take the
/// fallback.
pub fn estimate_normals(cloud: &PointCloud, k: usize, camera: [f32; 3]) -> Result<PointCloud> {
    if k < 3 {
        return Err(Error::Validation(format!("normal neighborhood k={k} < 3")));
    }
    let n = cloud.points.len();
    if n == 0 {
        return Ok(PointCloud {
            points: Vec::new(),
            normals: Some(Vec::new()),
        });
    }
    let k_eff = k.min(n);
    let index = NeighborGrid::build(&cloud.points);
    let normals: Vec<[f32; 3]> = cloud
        .points
        .par_iter()
        .map(|&p| {
            let neighbors = index.k_nearest(&cloud.points, p, k_eff);
            normal_from_neighborhood(&cloud.points, &neighbors, p, camera)
        })
        .collect();
    Ok(PointCloud {
        points: cloud.points.clone(),
        normals: Some(normals),
    })
}

fn normal_from_neighborhood(
    points: &[[f32; 3]],
    neighbors: &[usize],
    p: [f32; 3],
    camera: [f32; 3],
) -> [f32; 3] {
    let view = Vector3::new(
        (camera[0] - p[0]) as f64,
        (camera[1] - p[1]) as f64,
        (camera[2] - p[2]) as f64,
    );
    let fallback = {
        let n = view.norm();
        if n > 0.0 {
            view / n
        } else {
            Vector3::new(0.0, 0.0, 1.0)
        }
    };

    if neighbors.len() < 3 {
        return to_f32(&fallback);
    }
    let mut centroid = Vector3::zeros();
    for &i in neighbors {
        centroid += Vector3::new(points[i][0] as f64, points[i][1] as f64, points[i][2] as f64);
    }
    centroid /= neighbors.len() as f64;
    let mut cov = Matrix3::zeros();
    for &i in neighbors {
        let d = Vector3::new(points[i][0] as f64, points[i][1] as f64, points[i][2] as f64)
            - centroid;
        cov += d * d.transpose();
    }
    cov /= neighbors.len() as f64;

    let eig = SymmetricEigen::new(cov);
    // Index of smallest / middle eigenvalue.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let (lambda1, lambda2) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    // Rank < 2: points collinear or coincident.
    if lambda2 <= 0.0 || lambda1 / lambda2 <= 1e-9 {
        return to_f32(&fallback);
    }
    let mut normal = eig.eigenvectors.column(order[0]).into_owned();
    let norm = normal.norm();
    if norm == 0.0 {
        return to_f32(&fallback);
    }
    normal /= norm;
    if normal.dot(&view) < 0.0 {
        normal = -normal;
    }
    to_f32(&normal)
}

fn to_f32(v: &Vector3<f64>) -> [f32; 3] {
    [v.x as f32, v.y as f32, v.z as f32]
}

/// Hash-grid nearest-neighbor index. Cell size is derived from the cloud's
/// extent so that expanding-ring searches touch few cells.
pub(super) struct NeighborGrid {
    cell: f32,
    cells: HashMap<(i32, i32, i32), Vec<u32>>,
}

impl NeighborGrid {
    pub(super) fn build(points: &[[f32; 3]]) -> Self {
        let n = points.len().max(1);
        let mut min = points.first().copied().unwrap_or([0.0; 3]);
        let mut max = min;
        for p in points {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        let vol = (0..3)
            .map(|a| (max[a] - min[a]).max(1e-4) as f64)
            .product::<f64>();
        // Aim for ~1 point per cell.
        let cell = (vol / n as f64).cbrt().max(1e-4) as f32;
        let mut cells: HashMap<(i32, i32, i32), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells
                .entry(Self::key(p, cell))
                .or_default()
                .push(i as u32);
        }
        NeighborGrid { cell, cells }
    }

    fn key(p: &[f32; 3], cell: f32) -> (i32, i32, i32) {
        (
            (p[0] / cell).floor() as i32,
            (p[1] / cell).floor() as i32,
            (p[2] / cell).floor() as i32,
        )
    }

    /// Indices of the `k` nearest points to `p` (ties broken by index).
    pub(super) fn k_nearest(&self, points: &[[f32; 3]], p: [f32; 3], k: usize) -> Vec<usize> {
        let center = Self::key(&p, self.cell);
        let mut radius: i32 = 1;
        loop {
            let mut cand: Vec<(f64, usize)> = Vec::new();
            for dx in -radius..=radius {
                for dy in -radius..=radius {
                    for dz in -radius..=radius {
                        if let Some(ids) =
                            self.cells.get(&(center.0 + dx, center.1 + dy, center.2 + dz))
                        {
                            for &i in ids {
                                cand.push((dist2(&points[i as usize], &p), i as usize));
                            }
                        }
                    }
                }
            }
            if cand.len() >= k {
                cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                let dk = cand[k - 1].0.sqrt();
                // All true k-nearest are guaranteed inside the scanned
                // radius once dk fits within it.
                let needed = (dk / self.cell as f64).floor() as i32 + 1;
                if needed <= radius {
                    cand.truncate(k);
                    return cand.into_iter().map(|(_, i)| i).collect();
                }
                radius = needed;
            } else {
                radius *= 2;
            }
            if radius > 1_000_000 {
                // Entire cloud scanned; cannot happen unless k > n.
                let mut all: Vec<(f64, usize)> = points
                    .iter()
                    .enumerate()
                    .map(|(i, q)| (dist2(q, &p), i))
                    .collect();
                all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                all.truncate(k);
                return all.into_iter().map(|(_, i)| i).collect();
            }
        }
    }
}

#[inline]
fn dist2(a: &[f32; 3], b: &[f32; 3]) -> f64 {
    let dx = a[0] as f64 - b[0] as f64;
    let dy = a[1] as f64 - b[1] as f64;
    let dz = a[2] as f64 - b[2] as f64;
    dx * dx + dy * dy + dz * dz
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;

    fn identity_intrinsics() -> Intrinsics {
        Intrinsics {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
            width: 2,
            height: 2,
        }
    }

    fn one_pixel_frame(d: f32) -> (SegmentMask, DepthImage) {
        let mask = SegmentMask::new(2, 2, vec![1, 0, 0, 0], 1.0).unwrap();
        let depth = DepthImage::new(2, 2, vec![d, 0.0, 0.0, 0.0]).unwrap();
        (mask, depth)
    }

    #[test]
    fn project_identity_pose() {
        let (mask, depth) = one_pixel_frame(2.0);
        let cloud = project_depth(
            &mask,
            &depth,
            &identity_intrinsics(),
            &Pose::identity(),
            &DepthRange::default(),
        )
        .unwrap();
        assert_eq!(cloud.points, vec![[0.0, 0.0, 2.0]]);
    }

    #[test]
    fn project_pure_translation() {
        let (mask, depth) = one_pixel_frame(2.0);
        let pose = Pose::new(
            nalgebra::Matrix3::identity(),
            Vector3::new(1.0, 0.0, 0.0),
        )
        .unwrap();
        let cloud = project_depth(
            &mask,
            &depth,
            &identity_intrinsics(),
            &pose,
            &DepthRange::default(),
        )
        .unwrap();
        assert_eq!(cloud.points, vec![[1.0, 0.0, 2.0]]);
    }

    #[test]
    fn project_yaw_rotation_matches_matrix_oracle() {
        // 90 degree yaw about +y plus a translation, checked against an
        // independently hand-multiplied homogeneous matrix.
        let (s, c) = (std::f32::consts::FRAC_PI_2.sin(), std::f32::consts::FRAC_PI_2.cos());
        let r = nalgebra::Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c);
        let t = Vector3::new(0.5, -1.0, 2.0);
        let pose = Pose::new(r, t).unwrap();

        let (mask, depth) = one_pixel_frame(2.0);
        let cloud = project_depth(
            &mask,
            &depth,
            &identity_intrinsics(),
            &pose,
            &DepthRange::default(),
        )
        .unwrap();

        // Oracle: full 4x4 multiply of [0,0,2,1].
        let m = Matrix4::new(
            c, 0.0, s, 0.5, //
            0.0, 1.0, 0.0, -1.0, //
            -s, 0.0, c, 2.0, //
            0.0, 0.0, 0.0, 1.0,
        );
        let h = m * nalgebra::Vector4::new(0.0, 0.0, 2.0, 1.0);
        let got = cloud.points[0];
        assert!((got[0] - h.x).abs() < 1e-6);
        assert!((got[1] - h.y).abs() < 1e-6);
        assert!((got[2] - h.z).abs() < 1e-6);
    }

    #[test]
    fn project_skips_out_of_range_depth() {
        let (mask, depth) = one_pixel_frame(99.0);
        let cloud = project_depth(
            &mask,
            &depth,
            &identity_intrinsics(),
            &Pose::identity(),
            &DepthRange::default(),
        )
        .unwrap();
        assert!(cloud.is_empty());
    }

    #[test]
    fn normals_on_plane_face_camera() {
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                pts.push([i as f32 * 0.1, j as f32 * 0.1, 0.0]);
            }
        }
        let cloud = PointCloud::from_points(pts);
        let above = estimate_normals(&cloud, 8, [0.0, 0.0, 1.0]).unwrap();
        for n in above.normals.as_ref().unwrap() {
            assert!((n[2] - 1.0).abs() < 1e-3, "normal {:?}", n);
        }
        let below = estimate_normals(&cloud, 8, [0.0, 0.0, -1.0]).unwrap();
        for n in below.normals.as_ref().unwrap() {
            assert!((n[2] + 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn normals_on_sphere_are_radial() {
        // Regular sampling of a sphere patch around +z.
        let mut pts = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                let theta = 0.02 + 0.5 * (i as f32) / 20.0;
                let phi = 2.0 * std::f32::consts::PI * (j as f32) / 20.0;
                pts.push([
                    theta.sin() * phi.cos(),
                    theta.sin() * phi.sin(),
                    theta.cos(),
                ]);
            }
        }
        let cloud = PointCloud::from_points(pts.clone());
        let with_normals = estimate_normals(&cloud, 9, [0.0, 0.0, 3.0]).unwrap();
        let max_deg = 5.0f64.to_radians().cos();
        for (p, n) in pts.iter().zip(with_normals.normals.as_ref().unwrap()) {
            let dot = (p[0] * n[0] + p[1] * n[1] + p[2] * n[2]) as f64;
            assert!(dot > max_deg, "normal deviates more than 5 degrees");
        }
    }

    #[test]
    fn normals_degenerate_line_uses_view_ray() {
        let pts: Vec<[f32; 3]> = (0..10).map(|i| [i as f32 * 0.1, 0.0, 0.0]).collect();
        let cloud = PointCloud::from_points(pts);
        let out = estimate_normals(&cloud, 5, [0.0, 0.0, 2.0]).unwrap();
        for (p, n) in cloud.points.iter().zip(out.normals.as_ref().unwrap()) {
            let view = [0.0 - p[0], 0.0, 2.0];
            let norm = (view[0] * view[0] + view[2] * view[2]).sqrt();
            assert!((n[0] - view[0] / norm).abs() < 1e-5);
            assert!((n[2] - view[2] / norm).abs() < 1e-5);
        }
    }
}
