//! Random hierarchical decompositions (FRT) of a finite metric.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{CkmError, Result};
use crate::instance::{Metric, PointId};
use crate::rng::stream_rng;

/// A node of a rooted tree with weighted parent edges.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingNode {
    pub parent: Option<usize>,
    /// Length of the edge to the parent (0 for the root).
    pub edge_len: f64,
    pub children: Vec<usize>,
    /// Decomposition level; leaves sit below level 0.
    pub level: i32,
}

/// A dominating tree metric over the points of a metric, with one leaf per point.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEmbedding {
    nodes: Vec<EmbeddingNode>,
    /// Leaf node of every point.
    leaf_of: Vec<usize>,
    seed: u64,
    /// Distance from the root, per node.
    depth: Vec<f64>,
}

impl TreeEmbedding {
    pub fn nodes(&self) -> &[EmbeddingNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn leaf_of(&self, point: usize) -> usize {
        self.leaf_of[point]
    }

    pub fn points(&self) -> usize {
        self.leaf_of.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Tree distance between two embedded points.
    pub fn tree_distance(&self, a: usize, b: usize) -> f64 {
        let (mut u, mut v) = (self.leaf_of[a], self.leaf_of[b]);
        while u != v {
            if self.nodes[u].level <= self.nodes[v].level {
                u = self.nodes[u].parent.expect("below the root");
            } else {
                v = self.nodes[v].parent.expect("below the root");
            }
        }
        self.depth[self.leaf_of[a]] + self.depth[self.leaf_of[b]] - 2.0 * self.depth[u]
    }

    /// The tree metric restricted to the embedded points.
    pub fn tree_metric(&self) -> Metric {
        Metric::from_fn(self.points(), |a, b| self.tree_distance(a, b))
    }
}

/// Samples one FRT tree for `metric`.
///
/// Distances are rescaled so the smallest nonzero one is 1; with `δ` the
/// least level such that `2^δ` covers the diameter, a random permutation
/// and a random `β ∈ [1, 2)` carve every level-`(i+1)` cluster into balls
/// of radius `β·2^{i-1}` around the points in permutation order. Edges into
/// level `i` have length `2^{i+1}`, so lengths halve per level. Every point
/// hangs off its level-0 cluster by a zero-length leaf edge. Tree distances
/// dominate the input distances on every sample.
pub fn sample_frt(metric: &Metric, seed: u64) -> Result<TreeEmbedding> {
    let n = metric.size();
    if n == 0 {
        return Err(CkmError::Structural("cannot embed an empty point set".into()));
    }
    let all: Vec<PointId> = (0..n).map(PointId).collect();
    let min_positive = all
        .iter()
        .flat_map(|&u| all.iter().map(move |&v| (u, v)))
        .map(|(u, v)| metric.get(u, v))
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min);

    let mut nodes = vec![EmbeddingNode { parent: None, edge_len: 0.0, children: Vec::new(), level: i32::MAX }];
    let mut leaf_of = vec![0; n];

    let push = |nodes: &mut Vec<EmbeddingNode>, parent: usize, edge_len: f64, level: i32| {
        let id = nodes.len();
        nodes.push(EmbeddingNode { parent: Some(parent), edge_len, children: Vec::new(), level });
        nodes[parent].children.push(id);
        id
    };

    if min_positive.is_infinite() {
        // All points coincide.
        nodes[0].level = 0;
        for leaf in leaf_of.iter_mut() {
            *leaf = push(&mut nodes, 0, 0.0, -1);
        }
        return Ok(finish(nodes, leaf_of, seed));
    }

    let scale = min_positive;
    let dist = |u: usize, v: usize| metric.get(PointId(u), PointId(v)) / scale;
    let diameter = (0..n).flat_map(|u| (0..n).map(move |v| (u, v))).map(|(u, v)| dist(u, v)).fold(0.0, f64::max);
    let top = (diameter.log2().ceil() as i32).max(1);

    let mut rng = stream_rng(seed, 0);
    let beta: f64 = 1.0 + rng.gen::<f64>();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    nodes[0].level = top;
    // (node, members) at the current level
    let mut frontier: Vec<(usize, Vec<usize>)> = vec![(0, (0..n).collect())];
    for level in (0..top).rev() {
        let radius = beta * 2f64.powi(level - 1);
        let edge = 2f64.powi(level + 1) * scale;
        let mut next = Vec::new();
        for (node, members) in frontier {
            let mut assigned = vec![false; members.len()];
            for &center in &order {
                let mut ball = Vec::new();
                for (j, &v) in members.iter().enumerate() {
                    if !assigned[j] && dist(center, v) <= radius {
                        assigned[j] = true;
                        ball.push(v);
                    }
                }
                if !ball.is_empty() {
                    let child = push(&mut nodes, node, edge, level);
                    next.push((child, ball));
                }
            }
        }
        frontier = next;
    }
    for (node, members) in frontier {
        for v in members {
            leaf_of[v] = push(&mut nodes, node, 0.0, -1);
        }
    }
    Ok(finish(nodes, leaf_of, seed))
}

fn finish(nodes: Vec<EmbeddingNode>, leaf_of: Vec<usize>, seed: u64) -> TreeEmbedding {
    let mut depth = vec![0.0; nodes.len()];
    // Children are always created after their parent.
    for i in 1..nodes.len() {
        let parent = nodes[i].parent.expect("non-root");
        depth[i] = depth[parent] + nodes[i].edge_len;
    }
    TreeEmbedding { nodes, leaf_of, seed, depth }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_tree() {
        let m = Metric::from_matrix(1, vec![0.0]).unwrap();
        let t = sample_frt(&m, 3).unwrap();
        assert_eq!(t.points(), 1);
        assert_eq!(t.tree_distance(0, 0), 0.0);
    }

    #[test]
    fn two_points_dominated_every_seed() {
        let m = Metric::from_matrix(2, vec![0.0, 0.37, 0.37, 0.0]).unwrap();
        for seed in 0..100 {
            let t = sample_frt(&m, seed).unwrap();
            assert!(t.tree_distance(0, 1) >= 0.37);
        }
    }

    #[test]
    fn coincident_points_share_distance_zero() {
        let m = Metric::from_matrix(3, vec![0.0, 0.0, 2.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0]).unwrap();
        for seed in 0..20 {
            let t = sample_frt(&m, seed).unwrap();
            assert_eq!(t.tree_distance(0, 1), 0.0);
            assert!(t.tree_distance(0, 2) >= 2.0);
        }
    }

    #[test]
    fn edge_lengths_halve_per_level() {
        let pos: [f64; 5] = [0.0, 1.0, 3.0, 7.0, 15.0];
        let m = Metric::from_fn(5, |i, j| (pos[i] - pos[j]).abs());
        let t = sample_frt(&m, 11).unwrap();
        for node in t.nodes().iter().skip(1) {
            if node.level >= 0 {
                assert_eq!(node.edge_len, 2f64.powi(node.level + 1));
            } else {
                assert_eq!(node.edge_len, 0.0);
            }
        }
    }

    #[test]
    fn same_seed_same_tree() {
        let pos: [f64; 4] = [0.0, 1.5, 3.0, 7.0];
        let m = Metric::from_fn(4, |i, j| (pos[i] - pos[j]).abs());
        assert_eq!(sample_frt(&m, 5).unwrap(), sample_frt(&m, 5).unwrap());
    }
}
