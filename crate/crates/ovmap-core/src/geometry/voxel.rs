use crate::error::{Error, Result};

use super::Aabb;

/// Integer grid index of a voxel: `floor(p / resolution)` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelKey {
    pub ix: i32,
    pub iy: i32,
    pub iz: i32,
}

impl VoxelKey {
    pub fn from_point(p: [f32; 3], resolution: f32) -> Self {
        VoxelKey {
            ix: (p[0] / resolution).floor() as i32,
            iy: (p[1] / resolution).floor() as i32,
            iz: (p[2] / resolution).floor() as i32,
        }
    }

    /// Center of the voxel cell in world coordinates.
    pub fn center(&self, resolution: f32) -> [f32; 3] {
        [
            (self.ix as f32 + 0.5) * resolution,
            (self.iy as f32 + 0.5) * resolution,
            (self.iz as f32 + 0.5) * resolution,
        ]
    }
}

/// Strictly sorted, duplicate-free voxel keys at a fixed resolution.
///
/// Keeping the keys sorted makes intersection a linear merge: deterministic,
/// cache-friendly and trivially parallelizable across pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelSet {
    keys: Vec<VoxelKey>,
    resolution: f32,
}

impl VoxelSet {
    /// Build from arbitrary keys; sorts and deduplicates.
    pub fn from_keys(mut keys: Vec<VoxelKey>, resolution: f32) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Validation(format!(
                "voxel resolution must be positive, got {resolution}"
            )));
        }
        keys.sort_unstable();
        keys.dedup();
        Ok(VoxelSet { keys, resolution })
    }

    pub fn empty(resolution: f32) -> Self {
        VoxelSet {
            keys: Vec::new(),
            resolution,
        }
    }

    pub fn keys(&self) -> &[VoxelKey] {
        &self.keys
    }

    pub fn resolution(&self) -> f32 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, key: &VoxelKey) -> bool {
        self.keys.binary_search(key).is_ok()
    }

    /// World-space centers of all voxels, in key order.
    pub fn centers(&self) -> impl Iterator<Item = [f32; 3]> + '_ {
        let r = self.resolution;
        self.keys.iter().map(move |k| k.center(r))
    }

    /// Tight axis-aligned bounds of the voxel cells (not their centers).
    pub fn aabb(&self) -> Option<Aabb> {
        if self.keys.is_empty() {
            return None;
        }
        let r = self.resolution;
        let mut min = [i32::MAX; 3];
        let mut max = [i32::MIN; 3];
        for k in &self.keys {
            let idx = [k.ix, k.iy, k.iz];
            for a in 0..3 {
                min[a] = min[a].min(idx[a]);
                max[a] = max[a].max(idx[a]);
            }
        }
        Some(Aabb {
            min: [min[0] as f32 * r, min[1] as f32 * r, min[2] as f32 * r],
            max: [
                (max[0] + 1) as f32 * r,
                (max[1] + 1) as f32 * r,
                (max[2] + 1) as f32 * r,
            ],
        })
    }

    /// Sorted-merge union with another set at the same resolution.
    pub fn union(&self, other: &VoxelSet) -> Result<VoxelSet> {
        check_resolution(self, other)?;
        let mut out = Vec::with_capacity(self.keys.len() + other.keys.len());
        let (mut i, mut j) = (0, 0);
        while i < self.keys.len() && j < other.keys.len() {
            match self.keys[i].cmp(&other.keys[j]) {
                std::cmp::Ordering::Less => {
                    out.push(self.keys[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(other.keys[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(self.keys[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.keys[i..]);
        out.extend_from_slice(&other.keys[j..]);
        Ok(VoxelSet {
            keys: out,
            resolution: self.resolution,
        })
    }
}

/// Overlap measures between two voxel sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapStats {
    pub intersection: usize,
    pub iou: f64,
    /// Intersection over the smaller set: a fragment fully contained in a
    /// large object scores 1 even when IoU is low.
    pub overlap_min: f64,
}

/// Exact voxel intersection by linear merge over the sorted key arrays,
/// O(|a| + |b|), no hashing.
pub fn voxel_overlap(a: &VoxelSet, b: &VoxelSet) -> Result<OverlapStats> {
    check_resolution(a, b)?;
    let (ka, kb) = (a.keys(), b.keys());
    let mut inter = 0usize;
    let (mut i, mut j) = (0, 0);
    while i < ka.len() && j < kb.len() {
        match ka[i].cmp(&kb[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = ka.len() + kb.len() - inter;
    let smaller = ka.len().min(kb.len());
    Ok(OverlapStats {
        intersection: inter,
        iou: if union == 0 { 0.0 } else { inter as f64 / union as f64 },
        overlap_min: if smaller == 0 {
            0.0
        } else {
            inter as f64 / smaller as f64
        },
    })
}

/// Quantize points to `floor(p / r)` keys, sorted and deduplicated.
pub fn voxelize(points: &[[f32; 3]], resolution: f32) -> Result<VoxelSet> {
    let keys = points
        .iter()
        .map(|&p| VoxelKey::from_point(p, resolution))
        .collect();
    VoxelSet::from_keys(keys, resolution)
}

fn check_resolution(a: &VoxelSet, b: &VoxelSet) -> Result<()> {
    if a.resolution.to_bits() != b.resolution.to_bits() {
        return Err(Error::Validation(format!(
            "voxel resolution mismatch: {} vs {}",
            a.resolution, b.resolution
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(keys: &[(i32, i32, i32)], r: f32) -> VoxelSet {
        VoxelSet::from_keys(
            keys.iter()
                .map(|&(ix, iy, iz)| VoxelKey { ix, iy, iz })
                .collect(),
            r,
        )
        .unwrap()
    }

    #[test]
    fn voxelize_merges_nearby_points() {
        let v = voxelize(&[[0.01, 0.01, 0.01], [0.02, 0.02, 0.02]], 0.05).unwrap();
        assert_eq!(v.keys(), &[VoxelKey { ix: 0, iy: 0, iz: 0 }]);
    }

    #[test]
    fn voxelize_floors_negatives() {
        let v = voxelize(&[[-0.01, 0.0, 0.0]], 0.05).unwrap();
        assert_eq!(v.keys()[0], VoxelKey { ix: -1, iy: 0, iz: 0 });
    }

    #[test]
    fn voxelize_is_idempotent_on_centers() {
        let pts: Vec<[f32; 3]> = (0..50)
            .map(|i| {
                let f = i as f32;
                [f * 0.031, (f * 0.017).sin(), -f * 0.009]
            })
            .collect();
        let v = voxelize(&pts, 0.1).unwrap();
        let centers: Vec<[f32; 3]> = v.centers().collect();
        let v2 = voxelize(&centers, 0.1).unwrap();
        assert_eq!(v, v2);
    }

    #[test]
    fn overlap_identical_and_disjoint() {
        let a = set(&[(0, 0, 0), (1, 0, 0)], 0.05);
        let s = voxel_overlap(&a, &a).unwrap();
        assert_eq!(s.intersection, 2);
        assert_eq!(s.iou, 1.0);
        assert_eq!(s.overlap_min, 1.0);

        let b = set(&[(5, 5, 5)], 0.05);
        let s = voxel_overlap(&a, &b).unwrap();
        assert_eq!(s.intersection, 0);
        assert_eq!(s.iou, 0.0);
        assert_eq!(s.overlap_min, 0.0);
    }

    #[test]
    fn overlap_hand_case() {
        let a = set(&[(0, 0, 0), (1, 0, 0)], 0.05);
        let b = set(&[(1, 0, 0), (2, 0, 0)], 0.05);
        let s = voxel_overlap(&a, &b).unwrap();
        assert_eq!(s.intersection, 1);
        assert!((s.iou - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.overlap_min - 0.5).abs() < 1e-12);
    }

    #[test]
    fn overlap_rejects_resolution_mismatch() {
        let a = set(&[(0, 0, 0)], 0.05);
        let b = set(&[(0, 0, 0)], 0.1);
        assert!(voxel_overlap(&a, &b).is_err());
    }

    #[test]
    fn union_preserves_sorted_unique() {
        let a = set(&[(0, 0, 0), (2, 0, 0)], 0.05);
        let b = set(&[(1, 0, 0), (2, 0, 0), (3, 0, 0)], 0.05);
        let u = a.union(&b).unwrap();
        assert_eq!(u.len(), 4);
        let mut sorted = u.keys().to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted, u.keys());
    }
}
