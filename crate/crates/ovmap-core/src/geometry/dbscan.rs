use std::collections::HashMap;

use crate::error::{Error, Result};

use super::PointCloud;

/// Classic sequential DBSCAN, accelerated with an eps-sized hash grid.
///
/// Returns one cluster label per point (`None` = noise). Labels are numbered
/// in discovery order with seeds scanned by point index, so results are
/// identical to the textbook O(n^2) formulation: cluster membership does not
/// depend on neighbor enumeration order, only on the seed scan.
pub fn dbscan_labels(points: &[[f32; 3]], eps: f32, min_pts: usize) -> Result<Vec<Option<u32>>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Validation(format!("dbscan eps must be > 0, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::Validation("dbscan min_pts must be >= 1".into()));
    }
    let n = points.len();
    let mut labels: Vec<Option<u32>> = vec![None; n];
    if n == 0 {
        return Ok(labels);
    }

    let grid = EpsGrid::build(points, eps);
    let eps2 = (eps as f64) * (eps as f64);
    let mut visited = vec![false; n];
    let mut is_noise = vec![false; n];
    let mut next_cluster: u32 = 0;
    let mut queue: Vec<u32> = Vec::new();

    for p in 0..n {
        if visited[p] {
            continue;
        }
        visited[p] = true;
        let neighbors = grid.neighbors(points, p, eps2);
        if neighbors.len() < min_pts {
            is_noise[p] = true;
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[p] = Some(cluster);
        queue.clear();
        queue.extend(neighbors);
        let mut head = 0;
        while head < queue.len() {
            let q = queue[head] as usize;
            head += 1;
            if is_noise[q] {
                // Border point previously dismissed as noise.
                is_noise[q] = false;
                labels[q] = Some(cluster);
            }
            if visited[q] {
                continue;
            }
            visited[q] = true;
            labels[q] = Some(cluster);
            let nq = grid.neighbors(points, q, eps2);
            if nq.len() >= min_pts {
                queue.extend(nq);
            }
        }
    }
    Ok(labels)
}

/// Keep only the largest cluster (ties: the earliest-discovered one). A 2D
/// mask corresponds to one object; minor clusters are depth bleed-through.
pub fn dbscan_filter(cloud: &PointCloud, eps: f32, min_pts: usize) -> Result<PointCloud> {
    let labels = dbscan_labels(&cloud.points, eps, min_pts)?;
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for l in labels.iter().flatten() {
        *counts.entry(*l).or_insert(0) += 1;
    }
    let Some(best) = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&l, _)| l)
    else {
        return Ok(PointCloud {
            points: Vec::new(),
            normals: cloud.normals.as_ref().map(|_| Vec::new()),
        });
    };
    let keep: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == Some(best))
        .map(|(i, _)| i)
        .collect();
    Ok(PointCloud {
        points: keep.iter().map(|&i| cloud.points[i]).collect(),
        normals: cloud
            .normals
            .as_ref()
            .map(|ns| keep.iter().map(|&i| ns[i]).collect()),
    })
}

struct EpsGrid {
    cell: f32,
    cells: HashMap<(i32, i32, i32), Vec<u32>>,
}

impl EpsGrid {
    fn build(points: &[[f32; 3]], eps: f32) -> Self {
        let mut cells: HashMap<(i32, i32, i32), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i as u32);
        }
        EpsGrid { cell: eps, cells }
    }

    #[inline]
    fn key(p: &[f32; 3], cell: f32) -> (i32, i32, i32) {
        (
            (p[0] / cell).floor() as i32,
            (p[1] / cell).floor() as i32,
            (p[2] / cell).floor() as i32,
        )
    }

    /// Eps-neighborhood of point `i`, itself included (<= eps, inclusive).
    fn neighbors(&self, points: &[[f32; 3]], i: usize, eps2: f64) -> Vec<u32> {
        let p = points[i];
        let center = Self::key(&p, self.cell);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self
                        .cells
                        .get(&(center.0 + dx, center.1 + dy, center.2 + dz))
                    {
                        for &j in ids {
                            let q = points[j as usize];
                            let d0 = p[0] as f64 - q[0] as f64;
                            let d1 = p[1] as f64 - q[1] as f64;
                            let d2 = p[2] as f64 - q[2] as f64;
                            if d0 * d0 + d1 * d1 + d2 * d2 <= eps2 {
                                out.push(j);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
