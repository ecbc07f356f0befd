use crate::error::{Error, Result};

/// Axis-aligned bounding box in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f32; 3],
    pub max: [f32; 3],
}

impl Aabb {
    pub fn new(min: [f32; 3], max: [f32; 3]) -> Result<Self> {
        for a in 0..3 {
            if !(min[a] <= max[a]) {
                return Err(Error::Validation(format!(
                    "aabb min {:?} exceeds max {:?}",
                    min, max
                )));
            }
        }
        Ok(Aabb { min, max })
    }

    pub fn from_points(points: &[[f32; 3]]) -> Option<Self> {
        let first = points.first()?;
        let mut min = *first;
        let mut max = *first;
        for p in points {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        Some(Aabb { min, max })
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut min = self.min;
        let mut max = self.max;
        for a in 0..3 {
            min[a] = min[a].min(other.min[a]);
            max[a] = max[a].max(other.max[a]);
        }
        Aabb { min, max }
    }

    pub fn inflate(&self, margin: f32) -> Aabb {
        Aabb {
            min: [self.min[0] - margin, self.min[1] - margin, self.min[2] - margin],
            max: [self.max[0] + margin, self.max[1] + margin, self.max[2] + margin],
        }
    }

    /// Closed-interval overlap test; touching boxes intersect.
    #[inline]
    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= other.max[a] && self.max[a] >= other.min[a])
    }

    pub fn center(&self) -> [f32; 3] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
            0.5 * (self.min[2] + self.max[2]),
        ]
    }

    /// Whether `self` fully contains `other`.
    pub fn contains(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= other.min[a] && self.max[a] >= other.max[a])
    }
}

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        aabb: Aabb,
        items: Vec<(u64, Aabb)>,
    },
    Inner {
        aabb: Aabb,
        left: usize,
        right: usize,
    },
}

/// Broad-phase bounding volume hierarchy over instance AABBs.
///
/// Built by median split on the longest axis and rebuilt whenever the map
/// changes; rebuild cost is negligible at desk scale and the tree stays
/// always-valid.
#[derive(Debug, Clone, Default)]
pub struct Bvh {
    nodes: Vec<Node>,
    root: Option<usize>,
}

/// Build over `(id, aabb)` leaves. Ordering of the input does not affect
/// query results.
pub fn bvh_build(items: &[(u64, Aabb)]) -> Bvh {
    let mut bvh = Bvh {
        nodes: Vec::new(),
        root: None,
    };
    if items.is_empty() {
        return bvh;
    }
    let mut sorted: Vec<(u64, Aabb)> = items.to_vec();
    // Deterministic regardless of caller ordering.
    sorted.sort_by_key(|(id, _)| *id);
    let root = build_node(&mut bvh.nodes, &mut sorted);
    bvh.root = Some(root);
    bvh
}

fn build_node(nodes: &mut Vec<Node>, items: &mut [(u64, Aabb)]) -> usize {
    let mut bounds = items[0].1;
    for (_, b) in items.iter().skip(1) {
        bounds = bounds.union(b);
    }
    if items.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            aabb: bounds,
            items: items.to_vec(),
        });
        return nodes.len() - 1;
    }
    let extent = [
        bounds.max[0] - bounds.min[0],
        bounds.max[1] - bounds.min[1],
        bounds.max[2] - bounds.min[2],
    ];
    let axis = (0..3)
        .max_by(|&a, &b| extent[a].partial_cmp(&extent[b]).unwrap())
        .unwrap();
    items.sort_by(|(ida, a), (idb, b)| {
        a.center()[axis]
            .partial_cmp(&b.center()[axis])
            .unwrap()
            .then(ida.cmp(idb))
    });
    let mid = items.len() / 2;
    let (lo, hi) = items.split_at_mut(mid);
    let left = build_node(nodes, lo);
    let right = build_node(nodes, hi);
    nodes.push(Node::Inner {
        aabb: bounds,
        left,
        right,
    });
    nodes.len() - 1
}

/// All leaf ids whose AABB intersects `query` inflated by `margin`,
/// ascending. Never misses a true intersection.
pub fn bvh_query(bvh: &Bvh, query: &Aabb, margin: f32) -> Vec<u64> {
    let q = query.inflate(margin);
    let mut out = Vec::new();
    if let Some(root) = bvh.root {
        let mut stack = vec![root];
        while let Some(idx) = stack.pop() {
            match &bvh.nodes[idx] {
                Node::Leaf { aabb, items } => {
                    if aabb.intersects(&q) {
                        out.extend(items.iter().filter(|(_, b)| b.intersects(&q)).map(|(id, _)| *id));
                    }
                }
                Node::Inner { aabb, left, right } => {
                    if aabb.intersects(&q) {
                        stack.push(*right);
                        stack.push(*left);
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube(center: [f32; 3], half: f32) -> Aabb {
        Aabb {
            min: [center[0] - half, center[1] - half, center[2] - half],
            max: [center[0] + half, center[1] + half, center[2] + half],
        }
    }

    #[test]
    fn single_item_queries_itself() {
        let a = cube([1.0, 2.0, 3.0], 0.5);
        let bvh = bvh_build(&[(7, a)]);
        assert_eq!(bvh_query(&bvh, &a, 0.0), vec![7]);
    }

    #[test]
    fn distant_items_do_not_match() {
        let a = cube([0.0; 3], 0.5);
        let b = cube([10.0, 0.0, 0.0], 0.5);
        let bvh = bvh_build(&[(1, a), (2, b)]);
        assert_eq!(bvh_query(&bvh, &a, 0.0), vec![1]);
        assert_eq!(bvh_query(&bvh, &b, 0.0), vec![2]);
    }

    #[test]
    fn empty_bvh_returns_nothing() {
        let bvh = bvh_build(&[]);
        assert!(bvh_query(&bvh, &cube([0.0; 3], 1.0), 5.0).is_empty());
    }

    #[test]
    fn query_equals_bruteforce_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let items: Vec<(u64, Aabb)> = (0..200)
            .map(|i| {
                let c = [
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                ];
                (i, cube(c, rng.gen_range(0.05..0.8)))
            })
            .collect();
        let bvh = bvh_build(&items);
        for _ in 0..50 {
            let q = cube(
                [
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                ],
                rng.gen_range(0.1..2.0),
            );
            let margin = rng.gen_range(0.0..0.5);
            let got = bvh_query(&bvh, &q, margin);
            let inflated = q.inflate(margin);
            let want: Vec<u64> = items
                .iter()
                .filter(|(_, b)| b.intersects(&inflated))
                .map(|(id, _)| *id)
                .collect();
            assert_eq!(got, want);
        }
    }
}
