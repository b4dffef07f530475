//! Exact CKM on binary trees by dynamic programming over flow balances.
//!
//! `D(t, k', b)` is the least cost of opening exactly `k'` facilities in the
//! subtree `t` while `b` clients cross the edge above `t` downwards (`b < 0`:
//! `-b` clients leave `t` upwards). The cost of that edge, `len·|b|`, is
//! charged to `t`.

use crate::error::{CkmError, Result};
use crate::instance::{Assignment, Facility, PointId};
use crate::transport::{optimal_mapping, TransportProblem};

use super::TreeInstance;

/// `D(t, ·, ·)` for one node, over its reachable `(k', b)` box.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    pub k_max: usize,
    pub b_lo: i64,
    pub b_hi: i64,
    values: Vec<f64>,
    /// For two-child nodes: the `(k'_1, b_1)` of the first child realizing each entry.
    choice: Vec<(usize, i64)>,
}

impl NodeTable {
    fn new(k_max: usize, b_lo: i64, b_hi: i64) -> Self {
        let cells = (k_max + 1) * (b_hi - b_lo + 1) as usize;
        Self { k_max, b_lo, b_hi, values: vec![f64::INFINITY; cells], choice: vec![(0, 0); cells] }
    }

    fn index(&self, k: usize, b: i64) -> Option<usize> {
        (k <= self.k_max && b >= self.b_lo && b <= self.b_hi)
            .then(|| k * (self.b_hi - self.b_lo + 1) as usize + (b - self.b_lo) as usize)
    }

    /// `D(t, k, b)`, infinite outside the reachable box.
    pub fn get(&self, k: usize, b: i64) -> f64 {
        self.index(k, b).map_or(f64::INFINITY, |i| self.values[i])
    }

    fn set(&mut self, k: usize, b: i64, value: f64, choice: (usize, i64)) {
        let i = self.index(k, b).expect("inside the box");
        if value < self.values[i] {
            self.values[i] = value;
            self.choice[i] = choice;
        }
    }
}

/// Tables for every node of a tree instance.
#[derive(Debug, Clone, PartialEq)]
pub struct DpTable {
    pub tables: Vec<NodeTable>,
}

impl DpTable {
    pub fn value(&self, node: usize, k: usize, b: i64) -> f64 {
        self.tables[node].get(k, b)
    }

    /// Fills the tables bottom-up for budget `k`.
    pub fn compute(tree: &TreeInstance, k: usize) -> Result<Self> {
        let inst = tree.instance();
        let n_clients = inst.clients().len() as i64;
        let nodes = tree.nodes();
        for (i, node) in nodes.iter().enumerate() {
            if node.children.len() > 2 {
                return Err(CkmError::Structural(format!("node {i} has more than two children")));
            }
        }

        let mut order = vec![tree.root()];
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            order.extend(nodes[u].children.iter().copied());
        }

        let placeholder = NodeTable::new(0, 0, 0);
        let mut tables = vec![placeholder; nodes.len()];
        // (clients, facilities, truncated capacity) per subtree
        let mut stats = vec![(0i64, 0usize, 0i64); nodes.len()];

        for &u in order.iter().rev() {
            let node = &nodes[u];
            let mut table = match node.children.as_slice() {
                [] => {
                    let (table, st) = leaf_table(tree, node.point, k, n_clients);
                    stats[u] = st;
                    table
                }
                [c] => {
                    stats[u] = stats[*c];
                    tables[*c].clone()
                }
                [a, b] => {
                    let (sa, sb) = (stats[*a], stats[*b]);
                    let st = (sa.0 + sb.0, sa.1 + sb.1, (sa.2 + sb.2).min(n_clients));
                    stats[u] = st;
                    merge(&tables[*a], &tables[*b], k.min(st.1), -st.0, st.2 - st.0)
                }
                _ => unreachable!("checked above"),
            };
            if node.edge_len > 0.0 {
                for kk in 0..=table.k_max {
                    for b in table.b_lo..=table.b_hi {
                        let i = table.index(kk, b).unwrap();
                        if table.values[i].is_finite() {
                            table.values[i] += node.edge_len * b.unsigned_abs() as f64;
                        }
                    }
                }
            }
            tables[u] = table;
        }
        Ok(Self { tables })
    }
}

fn leaf_table(tree: &TreeInstance, point: Option<PointId>, k: usize, n_clients: i64) -> (NodeTable, (i64, usize, i64)) {
    let inst = tree.instance();
    match point {
        Some(p) if inst.clients().contains(&p) => {
            let mut t = NodeTable::new(0, -1, -1);
            t.set(0, -1, 0.0, (0, 0));
            (t, (1, 0, 0))
        }
        Some(p) => match inst.capacity_of(p) {
            Some(cap) => {
                let cap = (cap as i64).min(n_clients);
                let mut t = NodeTable::new(k.min(1), 0, cap);
                t.set(0, 0, 0.0, (0, 0));
                if k >= 1 {
                    for b in 0..=cap {
                        t.set(1, b, 0.0, (0, 0));
                    }
                }
                (t, (0, 1, cap))
            }
            None => empty_leaf(),
        },
        None => empty_leaf(),
    }
}

fn empty_leaf() -> (NodeTable, (i64, usize, i64)) {
    let mut t = NodeTable::new(0, 0, 0);
    t.set(0, 0, 0.0, (0, 0));
    (t, (0, 0, 0))
}

/// Min-plus combination of two children over `k'_1 + k'_2 = k'`, `b_1 + b_2 = b`.
fn merge(left: &NodeTable, right: &NodeTable, k_max: usize, b_lo: i64, b_hi: i64) -> NodeTable {
    let mut out = NodeTable::new(k_max, b_lo, b_hi);
    for k1 in 0..=left.k_max {
        for b1 in left.b_lo..=left.b_hi {
            let v1 = left.get(k1, b1);
            if !v1.is_finite() {
                continue;
            }
            for k2 in 0..=right.k_max.min(k_max.saturating_sub(k1)) {
                if k1 + k2 > k_max {
                    break;
                }
                for b2 in right.b_lo..=right.b_hi {
                    let v2 = right.get(k2, b2);
                    let b = b1 + b2;
                    if v2.is_finite() && b >= b_lo && b <= b_hi {
                        out.set(k1 + k2, b, v1 + v2, (k1, b1));
                    }
                }
            }
        }
    }
    out
}

/// Optimal tree solution and the DP value it realizes.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSolution {
    pub assignment: Assignment,
    /// Cost under the tree metric.
    pub cost: f64,
    /// `min_{k'} D(root, k', 0)`.
    pub dp_value: f64,
    /// Facilities the DP opened.
    pub opened: usize,
}

/// Exact CKM on a tree: `min_{k' ≤ k} D(root, k', 0)`, with the open set
/// recovered by backtracking and the client map by one transportation solve
/// under the tree metric.
pub fn solve_tree_dp(tree: &TreeInstance, k: usize) -> Result<TreeSolution> {
    let inst = tree.instance();
    let dp = DpTable::compute(tree, k)?;
    let root = &dp.tables[tree.root()];
    let mut best: Option<(f64, usize)> = None;
    for kk in 0..=root.k_max {
        let v = root.get(kk, 0);
        if v.is_finite() && best.map_or(true, |(bv, _)| v < bv) {
            best = Some((v, kk));
        }
    }
    let Some((dp_value, opened)) = best else {
        let shortfall = inst.with_k(k.max(1))?.capacity_shortfall().max(1);
        return Err(CkmError::Infeasible { shortfall });
    };

    let mut open_ids = Vec::new();
    let mut stack = vec![(tree.root(), opened, 0i64)];
    while let Some((u, kk, b)) = stack.pop() {
        let node = &tree.nodes()[u];
        match node.children.as_slice() {
            [] => {
                if kk == 1 {
                    open_ids.push(node.point.expect("an opened leaf hosts a facility"));
                }
            }
            [c] => stack.push((*c, kk, b)),
            [a, c] => {
                let table = &dp.tables[u];
                let (k1, b1) = table.choice[table.index(kk, b).expect("backtracking stays in the box")];
                stack.push((*a, k1, b1));
                stack.push((*c, kk - k1, b - b1));
            }
            _ => unreachable!(),
        }
    }
    open_ids.sort_unstable();

    let open: Vec<Facility> = open_ids
        .iter()
        .map(|&id| Facility { id, capacity: inst.capacity_of(id).expect("facility") })
        .collect();
    let problem = TransportProblem::from_metric(tree.tree_metric(), inst.clients(), &open)?;
    let (assignment, cost) = optimal_mapping(&problem)?;
    if (cost - dp_value).abs() > 1e-9 * (1.0 + dp_value.abs()) {
        return Err(CkmError::Invariant(format!(
            "tree mapping cost {cost} differs from the DP optimum {dp_value}"
        )));
    }
    Ok(TreeSolution { assignment, cost, dp_value, opened })
}
