//! Instance generators: random graph metrics, small graph families and the
//! Dominating Set reduction.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{CkmError, Result};
use crate::instance::{Instance, Metric, PointId, TOLERANCE};
use crate::rng::stream_rng;

/// Attempts at drawing capacities before giving up.
pub const CAPACITY_RETRIES: usize = 1000;

/// Random instance on the shortest-path metric of a random connected graph.
///
/// The graph is a random spanning tree plus each remaining pair with
/// probability 0.3, with integer weights in `1..=20`. Capacities are drawn
/// uniformly from `cap_range` until the `k` largest cover `n_c`.
pub fn gen_random_instance(n_f: usize, n_c: usize, k: usize, cap_range: (u32, u32), seed: u64) -> Result<Instance> {
    if n_f == 0 || n_c == 0 || k == 0 {
        return Err(CkmError::Structural("n_f, n_c and k must be positive".into()));
    }
    if k > n_f {
        return Err(CkmError::Structural(format!("k = {k} exceeds the {n_f} facilities")));
    }
    let (lo, hi) = cap_range;
    if lo > hi {
        return Err(CkmError::Structural(format!("empty capacity range [{lo}, {hi}]")));
    }
    if (k as u64) * (hi as u64) < n_c as u64 {
        return Err(CkmError::Infeasible { shortfall: n_c - k * hi as usize });
    }

    let n = n_f + n_c;
    let mut rng = stream_rng(seed, 0);
    let mut edges = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for i in 1..n {
        let j = rng.gen_range(0..i);
        edges.push((PointId(order[i]), PointId(order[j]), rng.gen_range(1..=20) as f64));
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(0.3) {
                edges.push((PointId(u), PointId(v), rng.gen_range(1..=20) as f64));
            }
        }
    }
    let metric = Metric::from_weighted_graph(n, &edges)?;

    let mut cap_rng = stream_rng(seed, 1);
    for _ in 0..CAPACITY_RETRIES {
        let caps: Vec<u32> = (0..n_f).map(|_| cap_rng.gen_range(lo..=hi)).collect();
        let mut sorted = caps.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        if sorted[..k].iter().map(|&c| c as usize).sum::<usize>() >= n_c {
            return Instance::from_layout(metric, &caps, n_c, k);
        }
    }
    Err(CkmError::Infeasible { shortfall: 1 })
}

/// An unweighted undirected graph on vertices `0..vertices`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleGraph {
    pub vertices: usize,
    pub edges: Vec<(usize, usize)>,
}

impl SimpleGraph {
    pub fn path(n: usize) -> Self {
        Self { vertices: n, edges: (1..n).map(|i| (i - 1, i)).collect() }
    }

    pub fn cycle(n: usize) -> Self {
        let mut g = Self::path(n);
        if n >= 3 {
            g.edges.push((n - 1, 0));
        }
        g
    }

    /// `K_{1,m}` with center 0.
    pub fn star(m: usize) -> Self {
        Self { vertices: m + 1, edges: (1..=m).map(|i| (0, i)).collect() }
    }

    pub fn complete(n: usize) -> Self {
        Self { vertices: n, edges: (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect() }
    }

    /// Random spanning tree plus each other pair with probability `p`.
    pub fn random_connected(n: usize, p: f64, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 2);
        let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
        for u in 0..n {
            for v in u + 1..n {
                if !edges.contains(&(u, v)) && rng.gen_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        Self { vertices: n, edges }
    }

    pub fn is_connected(&self) -> bool {
        if self.vertices == 0 {
            return false;
        }
        let mut seen = vec![false; self.vertices];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(a, b) in &self.edges {
                let next = if a == u { b } else if b == u { a } else { continue };
                if !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Hop-distance metric.
    pub fn metric(&self) -> Result<Metric> {
        let edges: Vec<_> = self.edges.iter().map(|&(u, v)| (PointId(u), PointId(v), 1.0)).collect();
        Metric::from_weighted_graph(self.vertices, &edges)
    }
}

/// Named connected graphs on at most 7 vertices: paths, cycles, stars,
/// cliques and `random` seeded random graphs.
pub fn curated_graphs(random: usize, seed: u64) -> Vec<(String, SimpleGraph)> {
    let mut out = Vec::new();
    for n in 1..=7 {
        out.push((format!("path-{n}"), SimpleGraph::path(n)));
    }
    for n in 3..=7 {
        out.push((format!("cycle-{n}"), SimpleGraph::cycle(n)));
    }
    for m in 2..=6 {
        out.push((format!("star-{m}"), SimpleGraph::star(m)));
    }
    for n in 3..=5 {
        out.push((format!("complete-{n}"), SimpleGraph::complete(n)));
    }
    let mut rng = stream_rng(seed, 3);
    for i in 0..random {
        let n = rng.gen_range(4..=7);
        let p = rng.gen_range(0.1..0.5);
        out.push((format!("random-{i}"), SimpleGraph::random_connected(n, p, rng.gen())));
    }
    out
}

/// The k-median instance built from a graph, with the target optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct DominatingSetReduction {
    /// Facility `v` and client `|V| + v` both sit on vertex `v`.
    pub instance: Instance,
    /// `|V| − k`: the uncapacitated optimum exactly when a dominating set of size `≤ k` exists.
    pub target: f64,
}

impl DominatingSetReduction {
    /// Whether an uncapacitated optimum witnesses a dominating set of size `≤ k`.
    pub fn predicate(&self, optimum: f64) -> bool {
        (optimum - self.target).abs() <= TOLERANCE
    }
}

/// Every vertex becomes a facility of capacity `|V|` and a co-located client;
/// distances are hop counts.
pub fn gen_dominating_set_reduction(graph: &SimpleGraph, k: usize) -> Result<DominatingSetReduction> {
    if !graph.is_connected() {
        return Err(CkmError::Structural("the graph must be connected".into()));
    }
    let n = graph.vertices;
    if k == 0 || k > n {
        return Err(CkmError::Structural(format!("k must lie in 1..={n}")));
    }
    let hops = graph.metric()?;
    let metric = Metric::from_fn(2 * n, |u, v| hops.get(PointId(u % n), PointId(v % n)));
    let instance = Instance::from_layout(metric, &vec![n as u32; n], n, k)?;
    Ok(DominatingSetReduction { instance, target: (n - k) as f64 })
}
