//! Dense patch-feature machinery: the distinctiveness map, mask-weighted
//! feature aggregation, the multiplicative observation-quality score and the
//! quality-gated fusion rule.
//!
//! All operations are pure; per-segment computations of one frame can run
//! concurrently.

use crate::error::{Error, Result};
use crate::frame::SegmentMask;

/// Regularizer in the distinctiveness denominator.
pub const DISTINCTIVENESS_EPSILON: f32 = 1e-6;

/// Plateau factor of the size score: segments filling more than `1/λ` of the
/// image saturate at 1.0.
pub const SIZE_LAMBDA: f32 = 3.3;

/// Minimum fraction of a patch's pixels that must fall inside a mask before
/// the patch contributes to the weighted aggregate.
pub const DEFAULT_COVER_MIN: f32 = 0.25;

/// Dense per-patch feature grid (`rows x cols x dim`, row-major) with its
/// spatial mean cached.
#[derive(Debug, Clone)]
pub struct PatchFeatureGrid {
    rows: u32,
    cols: u32,
    dim: u32,
    patch_size: u32,
    data: Vec<f32>,
    mean: Vec<f32>,
}

impl PatchFeatureGrid {
    pub fn new(rows: u32, cols: u32, dim: u32, patch_size: u32, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 || dim == 0 || patch_size == 0 {
            return Err(Error::Validation(
                "patch grid dimensions must be positive".into(),
            ));
        }
        let expect = rows as usize * cols as usize * dim as usize;
        if data.len() != expect {
            return Err(Error::Dimension(format!(
                "patch grid has {} values, expected {}x{}x{}",
                data.len(),
                rows,
                cols,
                dim
            )));
        }
        let mut mean = vec![0.0f64; dim as usize];
        for patch in data.chunks_exact(dim as usize) {
            for (m, &x) in mean.iter_mut().zip(patch) {
                *m += x as f64;
            }
        }
        let n = (rows as f64) * (cols as f64);
        let mean = mean.iter().map(|m| (m / n) as f32).collect();
        Ok(PatchFeatureGrid {
            rows,
            cols,
            dim,
            patch_size,
            data,
            mean,
        })
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn patch_size(&self) -> u32 {
        self.patch_size
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Spatial mean feature over all patches.
    pub fn mean(&self) -> &[f32] {
        &self.mean
    }

    #[inline]
    pub fn patch(&self, row: u32, col: u32) -> &[f32] {
        let idx = (row as usize * self.cols as usize + col as usize) * self.dim as usize;
        &self.data[idx..idx + self.dim as usize]
    }

    /// The grid must tile the image exactly.
    pub fn check_covers_image(&self, img_width: u32, img_height: u32) -> Result<()> {
        if self.rows * self.patch_size != img_height || self.cols * self.patch_size != img_width {
            return Err(Error::Dimension(format!(
                "{}x{} grid of {}px patches does not tile a {}x{} image",
                self.rows, self.cols, self.patch_size, img_height, img_width
            )));
        }
        Ok(())
    }

    /// Fraction of each patch's pixels covered by `mask`, row-major.
    pub fn mask_coverage(&self, mask: &SegmentMask) -> Result<Vec<f32>> {
        self.check_covers_image(mask.width(), mask.height())?;
        let p = self.patch_size;
        let per_patch = (p * p) as f32;
        let mut cover = vec![0.0f32; self.rows as usize * self.cols as usize];
        for v in 0..mask.height() {
            let pr = v / p;
            for u in 0..mask.width() {
                if mask.get(u, v) {
                    cover[(pr * self.cols + u / p) as usize] += 1.0;
                }
            }
        }
        for c in cover.iter_mut() {
            *c /= per_patch;
        }
        Ok(cover)
    }
}

/// Per-patch normalized residual norms against the frame mean. Structurally
/// unique patches score above 1, homogeneous background below.
#[derive(Debug, Clone)]
pub struct DistinctivenessMap {
    rows: u32,
    cols: u32,
    values: Vec<f32>,
    pub epsilon: f32,
}

impl DistinctivenessMap {
    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> f32 {
        self.values[(row * self.cols + col) as usize]
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }
}

/// D[i,j] = ||f[i,j] - mean|| / (mean residual norm + epsilon).
///
/// A uniform grid yields all zeros (the epsilon absorbs the 0/0); otherwise
/// the map averages to 1 by construction.
pub fn compute_distinctiveness(grid: &PatchFeatureGrid) -> DistinctivenessMap {
    let dim = grid.dim();
    let mean = grid.mean();
    let n = grid.rows() as usize * grid.cols() as usize;
    let mut norms = Vec::with_capacity(n);
    let mut norm_sum = 0.0f64;
    for patch in grid.data().chunks_exact(dim) {
        let mut s = 0.0f64;
        for (x, m) in patch.iter().zip(mean) {
            let d = (*x - *m) as f64;
            s += d * d;
        }
        let r = s.sqrt();
        norms.push(r);
        norm_sum += r;
    }
    let denom = norm_sum / n as f64 + DISTINCTIVENESS_EPSILON as f64;
    DistinctivenessMap {
        rows: grid.rows(),
        cols: grid.cols(),
        values: norms.iter().map(|r| (r / denom) as f32).collect(),
        epsilon: DISTINCTIVENESS_EPSILON,
    }
}

/// A unit-norm semantic embedding together with the quality of the
/// observation that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticFeature {
    pub vector: Vec<f32>,
    pub quality: f32,
}

impl SemanticFeature {
    pub fn new(vector: Vec<f32>, quality: f32) -> Result<Self> {
        let norm = l2_norm(&vector);
        if (norm - 1.0).abs() > 1e-4 {
            return Err(Error::Validation(format!(
                "semantic feature norm {norm:.6} is not unit"
            )));
        }
        if !(quality.is_finite() && quality >= 0.0) {
            return Err(Error::Validation(format!("quality {quality} must be >= 0")));
        }
        Ok(SemanticFeature { vector, quality })
    }
}

/// The four quality factors and their product. `q` is always computed as
/// `((s_size * s_angle) * s_sem) * s_dist` so the product is reproducible
/// bit for bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityBreakdown {
    pub s_size: f32,
    pub s_angle: f32,
    pub s_geo: f32,
    pub s_sem: f32,
    pub s_dist: f32,
    pub q: f32,
    pub lambda: f32,
    pub mask_area: u64,
    pub mean_distinctiveness: f32,
}

/// Size factor: min(λ·|M|/(H·W), 1). Saturates once the segment fills a
/// third of the frame so a camera pressed against a wall gains nothing.
pub fn s_size(mask_area: u64, img_height: u32, img_width: u32) -> f32 {
    let hw = img_height as f64 * img_width as f64;
    if hw == 0.0 {
        return 0.0;
    }
    let v = SIZE_LAMBDA as f64 * mask_area as f64 / hw;
    v.min(1.0) as f32
}

/// Viewing-angle factor: mean over voxels of max(0, -r·n), where `r` points
/// from the camera toward the voxel and `n` is the voxel normal.
pub fn s_angle(normals: &[[f32; 3]], view_rays: &[[f32; 3]]) -> Result<f32> {
    if normals.is_empty() || normals.len() != view_rays.len() {
        return Err(Error::Dimension(format!(
            "{} normals vs {} view rays (need equal, nonzero)",
            normals.len(),
            view_rays.len()
        )));
    }
    let mut acc = 0.0f64;
    for (n, r) in normals.iter().zip(view_rays) {
        let dot = (r[0] as f64) * (n[0] as f64)
            + (r[1] as f64) * (n[1] as f64)
            + (r[2] as f64) * (n[2] as f64);
        acc += (-dot).max(0.0);
    }
    Ok((acc / normals.len() as f64) as f32)
}

/// Semantic gate: ReLU-clamped cosine between the segment feature and the
/// global image embedding. Both inputs are expected to be unit vectors.
pub fn s_sem(local: &[f32], global: &[f32]) -> Result<f32> {
    if local.len() != global.len() {
        return Err(Error::Dimension(format!(
            "feature dims differ: {} vs {}",
            local.len(),
            global.len()
        )));
    }
    let dot: f64 = local
        .iter()
        .zip(global)
        .map(|(a, b)| *a as f64 * *b as f64)
        .sum();
    Ok(dot.clamp(0.0, 1.0) as f32)
}

/// Distinctiveness confidence: 0.5 + 0.5 · mean distinctiveness over the
/// mask (coverage-weighted). Deliberately unclamped above 1.
pub fn s_dist(map: &DistinctivenessMap, cover: &[f32]) -> Result<f32> {
    if cover.len() != map.values().len() {
        return Err(Error::Dimension(format!(
            "coverage has {} patches, map has {}",
            cover.len(),
            map.values().len()
        )));
    }
    let d = mask_mean_distinctiveness(map, cover)?;
    Ok((0.5 + 0.5 * d as f64) as f32)
}

/// Coverage-weighted mean of D over patches the mask touches.
pub fn mask_mean_distinctiveness(map: &DistinctivenessMap, cover: &[f32]) -> Result<f32> {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (&d, &c) in map.values().iter().zip(cover) {
        if c > 0.0 {
            num += d as f64 * c as f64;
            den += c as f64;
        }
    }
    if den == 0.0 {
        return Err(Error::Validation("mask covers no patch".into()));
    }
    Ok((num / den) as f32)
}

/// Combine the four factors. `s_geo = s_size * s_angle`, `q` is the full
/// product.
pub fn quality(s_size: f32, s_angle: f32, s_sem: f32, s_dist: f32) -> QualityBreakdown {
    let s_geo = s_size * s_angle;
    let q = s_geo * s_sem * s_dist;
    QualityBreakdown {
        s_size,
        s_angle,
        s_geo,
        s_sem,
        s_dist,
        q,
        lambda: SIZE_LAMBDA,
        mask_area: 0,
        mean_distinctiveness: 2.0 * s_dist - 1.0,
    }
}

/// Aggregate patch features under a mask, weighted by distinctiveness times
/// patch coverage. Patches with coverage below `cover_min` are excluded; if
/// that zeroes every weight the aggregation falls back to the unweighted
/// mean over patches with any coverage at all.
pub fn aggregate_masked_feature(
    grid: &PatchFeatureGrid,
    map: &DistinctivenessMap,
    mask: &SegmentMask,
    cover_min: f32,
) -> Result<Vec<f32>> {
    let cover = grid.mask_coverage(mask)?;
    if map.values().len() != cover.len() {
        return Err(Error::Dimension(
            "distinctiveness map does not match grid".into(),
        ));
    }
    let weights: Vec<f32> = cover
        .iter()
        .zip(map.values())
        .map(|(&c, &d)| if c >= cover_min { d * c } else { 0.0 })
        .collect();
    match weighted_patch_mean(grid, &weights) {
        Some(v) => Ok(v),
        None => {
            // All weights vanished (tiny coverage everywhere, or a uniform
            // grid with D = 0): fall back to the plain mean over touched
            // patches.
            let fallback: Vec<f32> = cover.iter().map(|&c| if c > 0.0 { 1.0 } else { 0.0 }).collect();
            weighted_patch_mean(grid, &fallback)
                .ok_or_else(|| Error::Validation("empty mask".into()))
        }
    }
}

/// Weighted mean of tracking-grid patches under the mask (plain coverage
/// weights, no distinctiveness), L2-normalized.
pub fn aggregate_tracking_feature(grid: &PatchFeatureGrid, mask: &SegmentMask) -> Result<Vec<f32>> {
    let cover = grid.mask_coverage(mask)?;
    weighted_patch_mean(grid, &cover).ok_or_else(|| Error::Validation("empty mask".into()))
}

fn weighted_patch_mean(grid: &PatchFeatureGrid, weights: &[f32]) -> Option<Vec<f32>> {
    let dim = grid.dim();
    let mut acc = vec![0.0f64; dim];
    let mut wsum = 0.0f64;
    for (patch, &w) in grid.data().chunks_exact(dim).zip(weights) {
        if w > 0.0 {
            let w = w as f64;
            wsum += w;
            for (a, &x) in acc.iter_mut().zip(patch) {
                *a += w * x as f64;
            }
        }
    }
    if wsum == 0.0 {
        return None;
    }
    let norm = acc.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    Some(acc.iter().map(|a| (a / norm) as f32).collect())
}

/// Keep the higher-quality feature; ties keep the incumbent, so
/// re-observation is stable.
pub fn fuse_semantic(current: &SemanticFeature, observed: &SemanticFeature) -> SemanticFeature {
    if observed.quality > current.quality {
        observed.clone()
    } else {
        current.clone()
    }
}

pub(crate) fn l2_norm(v: &[f32]) -> f32 {
    v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt() as f32
}

pub(crate) fn normalize(v: &mut [f32]) -> bool {
    let n = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    if n == 0.0 {
        return false;
    }
    for x in v.iter_mut() {
        *x = (*x as f64 / n) as f32;
    }
    true
}

pub(crate) fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        dot += x as f64 * y as f64;
        na += x as f64 * x as f64;
        nb += y as f64 * y as f64;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}
