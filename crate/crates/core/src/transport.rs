//! Optimal capacitated client→facility mapping for a fixed open set.
//!
//! The mapping integer program is a transportation problem, so an integral
//! optimum is found by min-cost flow: source → clients (one unit each) →
//! facilities (capacity `u_f`) → sink, solved with successive shortest
//! augmenting paths and Johnson potentials.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{CkmError, Result};
use crate::instance::{Assignment, Facility, Metric, PointId, TOLERANCE};

/// Clients to be mapped onto a fixed set of open facilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportProblem {
    open: Vec<Facility>,
    clients: Vec<PointId>,
    /// Row-major `clients × open`.
    cost: Vec<f64>,
}

impl TransportProblem {
    pub fn new(open: Vec<Facility>, clients: Vec<PointId>, cost: Vec<f64>) -> Result<Self> {
        if cost.len() != open.len() * clients.len() {
            return Err(CkmError::Structural(format!(
                "cost table has {} entries for {} clients × {} facilities",
                cost.len(),
                clients.len(),
                open.len()
            )));
        }
        if cost.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(CkmError::Structural("transport costs must be finite and nonnegative".into()));
        }
        Ok(Self { open, clients, cost })
    }

    /// Cost table read off a metric.
    pub fn from_metric(d: &Metric, clients: &[PointId], open: &[Facility]) -> Result<Self> {
        let mut cost = Vec::with_capacity(clients.len() * open.len());
        for &c in clients {
            for f in open {
                cost.push(d.try_get(c, f.id)?);
            }
        }
        Self::new(open.to_vec(), clients.to_vec(), cost)
    }

    pub fn open(&self) -> &[Facility] {
        &self.open
    }

    pub fn clients(&self) -> &[PointId] {
        &self.clients
    }

    #[inline]
    pub fn cost(&self, client: usize, facility: usize) -> f64 {
        self.cost[client * self.open.len() + facility]
    }

    /// Clients left over after every open facility is filled.
    pub fn shortfall(&self) -> usize {
        let total: u64 = self.open.iter().map(|f| f.capacity as u64).sum();
        (self.clients.len() as u64).saturating_sub(total) as usize
    }
}

/// Minimum-cost capacity-respecting mapping and its cost.
///
/// The returned assignment lists every facility of the problem as open.
pub fn optimal_mapping(p: &TransportProblem) -> Result<(Assignment, f64)> {
    let shortfall = p.shortfall();
    if shortfall > 0 {
        return Err(CkmError::Infeasible { shortfall });
    }
    let n = p.clients.len();
    let m = p.open.len();
    let open_ids: Vec<PointId> = p.open.iter().map(|f| f.id).collect();

    let slots = if p.open.iter().all(|f| f.capacity as usize >= n) {
        nearest_slots(p)
    } else {
        flow_slots(p)?
    };

    let phi: Vec<PointId> = slots.iter().map(|&j| open_ids[j]).collect();
    let cost = slots.iter().enumerate().map(|(i, &j)| p.cost[i * m + j]).sum();
    Ok((Assignment::new(p.clients.clone(), phi, &open_ids), cost))
}

/// Separable case: nearest facility, lowest index on ties.
fn nearest_slots(p: &TransportProblem) -> Vec<usize> {
    let m = p.open.len();
    (0..p.clients.len())
        .map(|i| {
            let row = &p.cost[i * m..(i + 1) * m];
            let mut best = 0;
            for j in 1..m {
                if row[j] < row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn flow_slots(p: &TransportProblem) -> Result<Vec<usize>> {
    let n = p.clients.len();
    let m = p.open.len();
    let source = 0;
    let client_node = |i: usize| 1 + i;
    let facility_node = |j: usize| 1 + n + j;
    let sink = 1 + n + m;

    let mut g = FlowGraph::new(n + m + 2);
    for i in 0..n {
        g.add_edge(source, client_node(i), 1, 0.0);
    }
    let mut assign_edges = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            assign_edges.push(g.add_edge(client_node(i), facility_node(j), 1, p.cost[i * m + j]));
        }
    }
    for (j, f) in p.open.iter().enumerate() {
        g.add_edge(facility_node(j), sink, (f.capacity as usize).min(n) as i64, 0.0);
    }

    let sent = g.min_cost_flow(source, sink, n as i64);
    if sent < n as i64 {
        return Err(CkmError::Infeasible { shortfall: n - sent as usize });
    }

    let mut slots = vec![usize::MAX; n];
    for i in 0..n {
        for j in 0..m {
            if g.flow(assign_edges[i * m + j]) > 0 {
                slots[i] = j;
            }
        }
    }
    debug_assert!(slots.iter().all(|&s| s != usize::MAX));
    Ok(slots)
}

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: i64,
    cost: f64,
}

/// Residual graph; edge `e` and `e ^ 1` are twins.
struct FlowGraph {
    adj: Vec<Vec<usize>>,
    edges: Vec<Edge>,
    original_cap: Vec<i64>,
}

#[derive(PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl FlowGraph {
    fn new(nodes: usize) -> Self {
        Self { adj: vec![Vec::new(); nodes], edges: Vec::new(), original_cap: Vec::new() }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.edges.push(Edge { to: from, cap: 0, cost: -cost });
        self.original_cap.extend([cap, 0]);
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    fn flow(&self, e: usize) -> i64 {
        self.original_cap[e] - self.edges[e].cap
    }

    /// Pushes up to `limit` units; returns the amount sent.
    fn min_cost_flow(&mut self, source: usize, sink: usize, limit: i64) -> i64 {
        let nodes = self.adj.len();
        // All initial costs are nonnegative, so zero potentials are valid.
        let mut potential = vec![0.0f64; nodes];
        let mut dist = vec![f64::INFINITY; nodes];
        let mut parent = vec![usize::MAX; nodes];
        let mut sent = 0;

        while sent < limit {
            dist.fill(f64::INFINITY);
            parent.fill(usize::MAX);
            dist[source] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(Reverse(Key(0.0, source)));
            while let Some(Reverse(Key(d, u))) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for &e in &self.adj[u] {
                    let edge = &self.edges[e];
                    if edge.cap <= 0 {
                        continue;
                    }
                    // Reduced costs are nonnegative up to rounding.
                    let reduced = edge.cost + potential[u] - potential[edge.to];
                    debug_assert!(reduced > -TOLERANCE * (1.0 + potential[u].abs()));
                    let reduced = reduced.max(0.0);
                    let nd = d + reduced;
                    if nd < dist[edge.to] {
                        dist[edge.to] = nd;
                        parent[edge.to] = e;
                        heap.push(Reverse(Key(nd, edge.to)));
                    }
                }
            }
            if dist[sink].is_infinite() {
                break;
            }
            // Capping at the sink distance keeps reduced costs nonnegative for
            // nodes the search did not reach.
            let cap = dist[sink];
            for v in 0..nodes {
                potential[v] += dist[v].min(cap);
            }

            let mut push = limit - sent;
            let mut v = sink;
            while v != source {
                let e = parent[v];
                push = push.min(self.edges[e].cap);
                v = self.edges[e ^ 1].to;
            }
            let mut v = sink;
            while v != source {
                let e = parent[v];
                self.edges[e].cap -= push;
                self.edges[e ^ 1].cap += push;
                v = self.edges[e ^ 1].to;
            }
            sent += push;
        }
        sent
    }
}
