//! The `O(log k)` pipeline: embed the centers into a random dominating tree,
//! solve CKM exactly on the tree, and pull the result back.

mod dp;
mod frt;

pub use dp::{solve_tree_dp, DpTable, NodeTable, TreeSolution};
pub use frt::{sample_frt, EmbeddingNode, TreeEmbedding};

use rayon::prelude::*;

use crate::centered::{build_centered, CenteredInstance};
use crate::error::{CkmError, Result};
use crate::instance::{Assignment, Instance, Metric, PointId, TOLERANCE};
use crate::uncap::{default_max_iters, local_search_kmedian};

/// A node of a CKM tree instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub parent: Option<usize>,
    pub edge_len: f64,
    pub children: Vec<usize>,
    /// Client or facility hosted here; only leaves host points.
    pub point: Option<PointId>,
}

/// A CKM instance whose metric is the path metric of a rooted tree with
/// every client and facility at a leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeInstance {
    nodes: Vec<TreeNode>,
    /// Roles, capacities and budget; its metric is the tree metric.
    instance: Instance,
}

impl TreeInstance {
    /// Builds a tree instance from parent pointers (node 0 is the root).
    ///
    /// Points placed on internal nodes are moved to fresh zero-length leaf
    /// children, and nodes with more than two children are split with
    /// zero-length dummy nodes, so the result is binary with points only at
    /// leaves. `roles` supplies facilities, capacities, clients and `k`; its
    /// metric is replaced by the tree metric.
    pub fn new(parents: &[Option<usize>], edge_len: &[f64], points: &[Option<PointId>], roles: &Instance) -> Result<Self> {
        let n = parents.len();
        if n == 0 || edge_len.len() != n || points.len() != n {
            return Err(CkmError::Structural("tree arrays must be nonempty and of equal length".into()));
        }
        if parents[0].is_some() || parents[1..].iter().any(|p| p.is_none()) {
            return Err(CkmError::Structural("node 0 must be the only root".into()));
        }
        let mut nodes: Vec<TreeNode> = (0..n)
            .map(|i| TreeNode { parent: parents[i], edge_len: edge_len[i], children: Vec::new(), point: points[i] })
            .collect();
        for i in 1..n {
            let p = parents[i].unwrap();
            if p >= n {
                return Err(CkmError::Structural(format!("node {i} has parent {p} out of range")));
            }
            if !edge_len[i].is_finite() || edge_len[i] < 0.0 {
                return Err(CkmError::Structural(format!("node {i} has invalid edge length {}", edge_len[i])));
            }
            nodes[p].children.push(i);
        }
        // Reject cycles: every node must reach the root.
        for i in 0..n {
            let (mut v, mut steps) = (i, 0);
            while let Some(p) = nodes[v].parent {
                v = p;
                steps += 1;
                if steps > n {
                    return Err(CkmError::Structural("parent pointers contain a cycle".into()));
                }
            }
        }
        Self::from_nodes(nodes, roles)
    }

    fn from_nodes(mut nodes: Vec<TreeNode>, roles: &Instance) -> Result<Self> {
        let universe = roles.metric().size();
        let mut seen = vec![false; universe];
        for node in &nodes {
            if let Some(p) = node.point {
                if p.0 >= universe {
                    return Err(CkmError::Structural(format!("tree point {p} outside the instance universe")));
                }
                if std::mem::replace(&mut seen[p.0], true) {
                    return Err(CkmError::Structural(format!("point {p} appears twice in the tree")));
                }
            }
        }
        if let Some(p) = roles
            .facility_ids()
            .into_iter()
            .chain(roles.clients().iter().copied())
            .find(|p| !seen[p.0])
        {
            return Err(CkmError::Structural(format!("point {p} is missing from the tree")));
        }

        let add = |nodes: &mut Vec<TreeNode>, parent: usize, point: Option<PointId>| {
            let id = nodes.len();
            nodes.push(TreeNode { parent: Some(parent), edge_len: 0.0, children: Vec::new(), point });
            id
        };
        for i in 0..nodes.len() {
            if !nodes[i].children.is_empty() {
                if let Some(point) = nodes[i].point.take() {
                    let leaf = add(&mut nodes, i, Some(point));
                    nodes[i].children.push(leaf);
                }
            }
        }
        let mut i = 0;
        while i < nodes.len() {
            if nodes[i].children.len() > 2 {
                let rest: Vec<usize> = nodes[i].children.split_off(1);
                let dummy = add(&mut nodes, i, None);
                nodes[i].children.push(dummy);
                for &c in &rest {
                    nodes[c].parent = Some(dummy);
                }
                nodes[dummy].children = rest;
            }
            i += 1;
        }

        let metric = tree_path_metric(&nodes, universe);
        let instance = roles.with_metric(metric)?;
        Ok(Self { nodes, instance })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        0
    }

    /// The CKM instance under the tree metric.
    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn tree_metric(&self) -> &Metric {
        self.instance.metric()
    }
}

/// Path metric between tree-hosted points; points absent from the tree are
/// left at distance 0 from everything.
fn tree_path_metric(nodes: &[TreeNode], universe: usize) -> Metric {
    let mut node_of = vec![usize::MAX; universe];
    for (i, node) in nodes.iter().enumerate() {
        if let Some(p) = node.point {
            node_of[p.0] = i;
        }
    }
    let mut depth = vec![0usize; nodes.len()];
    let mut dist_root = vec![0.0; nodes.len()];
    let mut order = vec![0usize];
    let mut head = 0;
    while head < order.len() {
        let u = order[head];
        head += 1;
        for &c in &nodes[u].children {
            depth[c] = depth[u] + 1;
            dist_root[c] = dist_root[u] + nodes[c].edge_len;
            order.push(c);
        }
    }
    let lca = |mut a: usize, mut b: usize| {
        while depth[a] > depth[b] {
            a = nodes[a].parent.unwrap();
        }
        while depth[b] > depth[a] {
            b = nodes[b].parent.unwrap();
        }
        while a != b {
            a = nodes[a].parent.unwrap();
            b = nodes[b].parent.unwrap();
        }
        a
    };
    Metric::from_fn(universe, |u, v| {
        let (a, b) = (node_of[u], node_of[v]);
        if a == usize::MAX || b == usize::MAX {
            return 0.0;
        }
        dist_root[a] + dist_root[b] - 2.0 * dist_root[lca(a, b)]
    })
}

/// Replaces the center clique of `centered` with the tree `emb` (built over
/// the centers in center order) and hangs every client and facility off its
/// center's leaf by its pendant edge.
pub fn build_tree_instance(centered: &CenteredInstance, emb: &TreeEmbedding) -> Result<TreeInstance> {
    if emb.points() != centered.ell() {
        return Err(CkmError::Structural(format!(
            "embedding has {} leaves for {} centers",
            emb.points(),
            centered.ell()
        )));
    }
    let mut nodes: Vec<TreeNode> = emb
        .nodes()
        .iter()
        .map(|n| TreeNode { parent: n.parent, edge_len: n.edge_len, children: n.children.clone(), point: None })
        .collect();
    let base = centered.base();
    for v in base.facility_ids().into_iter().chain(base.clients().iter().copied()) {
        let anchor = emb.leaf_of(centered.center_of(v));
        let id = nodes.len();
        nodes.push(TreeNode { parent: Some(anchor), edge_len: centered.pendant(v), children: Vec::new(), point: Some(v) });
        nodes[anchor].children.push(id);
    }
    TreeInstance::from_nodes(nodes, base)
}

/// Result of the tree pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct LogkSolution {
    pub assignment: Assignment,
    /// Cost under the original metric.
    pub cost: f64,
    /// Cost of the same assignment under the winning tree metric and under `d_ℓ`.
    pub cost_tree: f64,
    pub cost_d_ell: f64,
    pub uncap_cost: f64,
    pub best_sample: usize,
    pub samples: usize,
}

/// The tree pipeline: local search seed with `k` centers, centered
/// reduction, `samples` independent FRT trees solved exactly, best
/// pulled-back cost wins (ties to the lower sample index).
pub fn solve_logk(inst: &Instance, k: usize, samples: usize, seed: u64) -> Result<LogkSolution> {
    let budgeted = inst.with_k(k)?;
    let shortfall = budgeted.capacity_shortfall();
    if shortfall > 0 {
        return Err(CkmError::Infeasible { shortfall });
    }
    if samples == 0 {
        return Err(CkmError::Structural("at least one tree sample is needed".into()));
    }
    let seed_solution = local_search_kmedian(&budgeted, k, default_max_iters(k, budgeted.facilities().len()))?;
    let centered = build_centered(&budgeted, &seed_solution)?;
    let center_metric = centered.center_metric();

    let results: Vec<Result<(f64, f64, f64, Assignment)>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let emb = sample_frt(&center_metric, crate::rng::derive_seed(seed, i as u64))?;
            let tree = build_tree_instance(&centered, &emb)?;
            let sol = solve_tree_dp(&tree, k)?;
            let cost = sol.assignment.cost(budgeted.metric())?;
            let cost_ell = sol.assignment.cost(centered.d_ell())?;
            if cost > cost_ell + TOLERANCE || cost_ell > sol.cost + TOLERANCE * (1.0 + sol.cost) {
                return Err(CkmError::Invariant(format!(
                    "pull-back chain broken: d {cost}, d_ell {cost_ell}, tree {}",
                    sol.cost
                )));
            }
            Ok((cost, sol.cost, cost_ell, sol.assignment))
        })
        .collect();

    let mut best: Option<(usize, (f64, f64, f64, Assignment))> = None;
    for (i, r) in results.into_iter().enumerate() {
        let r = r?;
        if best.as_ref().map_or(true, |(_, b)| r.0 < b.0) {
            best = Some((i, r));
        }
    }
    let (best_sample, (cost, cost_tree, cost_d_ell, assignment)) = best.expect("samples > 0");
    let problems = assignment.violations(&budgeted);
    if !problems.is_empty() {
        return Err(CkmError::Invariant(format!("tree pipeline output infeasible: {}", problems.join("; "))));
    }
    Ok(LogkSolution {
        assignment,
        cost,
        cost_tree,
        cost_d_ell,
        uncap_cost: seed_solution.cost,
        best_sample,
        samples,
    })
}
