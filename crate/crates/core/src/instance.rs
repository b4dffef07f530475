//! Problem instances, metrics, assignments and cost evaluation.
//!
//! All points live in one indexed universe. Facility and client roles are
//! attributes of an [`Instance`], so the same indices can be evaluated under
//! several metrics (the original one, a centered one, a rounded one).

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CkmError, Result};

/// Absolute tolerance used for every distance comparison.
pub const TOLERANCE: f64 = 1e-9;

/// Index of a point in the universe of a [`Metric`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointId(pub usize);

impl PointId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A dense, symmetric distance table.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    size: usize,
    dist: Vec<f64>,
}

impl Metric {
    /// Builds a metric from a row-major `size × size` table.
    ///
    /// Only shape and sign are checked here; symmetry and the triangle
    /// inequality are reported by [`validate_instance`].
    pub fn from_matrix(size: usize, dist: Vec<f64>) -> Result<Self> {
        if dist.len() != size * size {
            return Err(CkmError::Structural(format!(
                "distance table has {} entries, expected {}",
                dist.len(),
                size * size
            )));
        }
        if let Some(pos) = dist.iter().position(|d| !d.is_finite() || *d < 0.0) {
            return Err(CkmError::Structural(format!(
                "distance between {} and {} is {} (must be finite and nonnegative)",
                pos / size,
                pos % size,
                dist[pos]
            )));
        }
        Ok(Self { size, dist })
    }

    /// Builds a metric by evaluating `f` on every ordered pair.
    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut dist = Vec::with_capacity(size * size);
        for u in 0..size {
            for v in 0..size {
                dist.push(if u == v { 0.0 } else { f(u, v) });
            }
        }
        Self { size, dist }
    }

    /// Shortest-path metric of an undirected weighted graph.
    pub fn from_weighted_graph(size: usize, edges: &[(PointId, PointId, f64)]) -> Result<Self> {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); size];
        for &(u, v, w) in edges {
            if u.0 >= size || v.0 >= size {
                return Err(CkmError::Structural(format!(
                    "edge ({u}, {v}) references a point outside 0..{size}"
                )));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(CkmError::Structural(format!(
                    "edge ({u}, {v}) has invalid weight {w}"
                )));
            }
            adj[u.0].push((v.0, w));
            adj[v.0].push((u.0, w));
        }

        let mut dist = vec![f64::INFINITY; size * size];
        for src in 0..size {
            let row = &mut dist[src * size..(src + 1) * size];
            dijkstra(&adj, src, row);
            if let Some(to) = row.iter().position(|d| d.is_infinite()) {
                return Err(CkmError::Disconnected { from: src, to });
            }
        }
        // Dijkstra rows can differ from columns in the last ulp; keep the table exactly symmetric.
        for u in 0..size {
            for v in u + 1..size {
                let m = dist[u * size + v].min(dist[v * size + u]);
                dist[u * size + v] = m;
                dist[v * size + u] = m;
            }
        }
        Ok(Self { size, dist })
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, u: PointId, v: PointId) -> f64 {
        self.dist[u.0 * self.size + v.0]
    }

    /// Distance with a range check on both endpoints.
    pub fn try_get(&self, u: PointId, v: PointId) -> Result<f64> {
        if u.0 >= self.size || v.0 >= self.size {
            return Err(CkmError::Structural(format!(
                "point pair ({u}, {v}) out of range for metric of size {}",
                self.size
            )));
        }
        Ok(self.get(u, v))
    }

    /// Row-major copy of the whole table.
    pub fn as_slice(&self) -> &[f64] {
        &self.dist
    }

    /// Sub-metric induced by `points`, re-indexed `0..points.len()`.
    pub fn restrict(&self, points: &[PointId]) -> Metric {
        Metric::from_fn(points.len(), |i, j| self.get(points[i], points[j]))
    }

    /// The metric `alpha · d`.
    pub fn scaled(&self, alpha: f64) -> Metric {
        Metric {
            size: self.size,
            dist: self.dist.iter().map(|d| d * alpha).collect(),
        }
    }

    /// True when `self(u, v) ≥ other(u, v) − tol` for every pair of `points`.
    pub fn dominates_on(&self, other: &Metric, points: &[PointId], tol: f64) -> bool {
        points
            .iter()
            .all(|&u| points.iter().all(|&v| self.get(u, v) >= other.get(u, v) - tol))
    }

    /// Metric axiom violations (zero diagonal, symmetry, optional triangle).
    pub fn violations(&self, triangle: bool) -> Vec<Violation> {
        let n = self.size;
        let mut out = Vec::new();
        for u in 0..n {
            let duu = self.dist[u * n + u];
            if duu.abs() > TOLERANCE {
                out.push(Violation::NonzeroDiagonal { point: u, value: duu });
            }
            for v in u + 1..n {
                let (a, b) = (self.dist[u * n + v], self.dist[v * n + u]);
                if (a - b).abs() > TOLERANCE {
                    out.push(Violation::Asymmetric { u, v, uv: a, vu: b });
                }
            }
        }
        if triangle {
            for u in 0..n {
                for v in 0..n {
                    let duv = self.dist[u * n + v];
                    for w in 0..n {
                        let duw = self.dist[u * n + w];
                        if duw > duv + self.dist[v * n + w] + TOLERANCE {
                            out.push(Violation::Triangle { u, v, w });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry(f64, usize);

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], src: usize, dist: &mut [f64]) {
    dist[src] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse(HeapEntry(0.0, src)));
    while let Some(Reverse(HeapEntry(d, u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse(HeapEntry(nd, v)));
            }
        }
    }
}

/// An open-able facility location.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Facility {
    pub id: PointId,
    pub capacity: u32,
}

/// A capacitated k-median instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    metric: Metric,
    facilities: Vec<Facility>,
    clients: Vec<PointId>,
    k: usize,
}

impl Instance {
    /// Checks that every referenced point exists and that `k` is positive.
    pub fn new(metric: Metric, facilities: Vec<Facility>, clients: Vec<PointId>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(CkmError::Structural("k must be positive".into()));
        }
        let n = metric.size();
        if let Some(f) = facilities.iter().find(|f| f.id.0 >= n) {
            return Err(CkmError::Structural(format!("facility {} out of range 0..{n}", f.id)));
        }
        if let Some(c) = clients.iter().find(|c| c.0 >= n) {
            return Err(CkmError::Structural(format!("client {c} out of range 0..{n}")));
        }
        Ok(Self { metric, facilities, clients, k })
    }

    /// Conventional layout: facilities `0..n_f`, clients `n_f..n_f+n_c`.
    pub fn from_layout(metric: Metric, capacities: &[u32], n_clients: usize, k: usize) -> Result<Self> {
        let n_f = capacities.len();
        if metric.size() != n_f + n_clients {
            return Err(CkmError::Structural(format!(
                "metric has {} points but layout needs {} facilities + {} clients",
                metric.size(),
                n_f,
                n_clients
            )));
        }
        let facilities = capacities
            .iter()
            .enumerate()
            .map(|(i, &capacity)| Facility { id: PointId(i), capacity })
            .collect();
        let clients = (n_f..n_f + n_clients).map(PointId).collect();
        Self::new(metric, facilities, clients, k)
    }

    /// Same roles and budget, evaluated under another metric on the same indices.
    pub fn with_metric(&self, metric: Metric) -> Result<Self> {
        Self::new(metric, self.facilities.clone(), self.clients.clone(), self.k)
    }

    /// Same instance with another budget.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        Self::new(self.metric.clone(), self.facilities.clone(), self.clients.clone(), k)
    }

    /// Same instance with replaced capacities (one per facility, in order).
    pub fn with_capacities(&self, capacities: &[u32]) -> Result<Self> {
        if capacities.len() != self.facilities.len() {
            return Err(CkmError::Structural("capacity list length mismatch".into()));
        }
        let facilities = self
            .facilities
            .iter()
            .zip(capacities)
            .map(|(f, &capacity)| Facility { id: f.id, capacity })
            .collect();
        Self::new(self.metric.clone(), facilities, self.clients.clone(), self.k)
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn facilities(&self) -> &[Facility] {
        &self.facilities
    }

    pub fn facility_ids(&self) -> Vec<PointId> {
        self.facilities.iter().map(|f| f.id).collect()
    }

    pub fn clients(&self) -> &[PointId] {
        &self.clients
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn capacity_of(&self, id: PointId) -> Option<u32> {
        self.facilities.iter().find(|f| f.id == id).map(|f| f.capacity)
    }

    /// The common capacity when every facility has the same one.
    pub fn uniform_capacity(&self) -> Option<u32> {
        let first = self.facilities.first()?.capacity;
        self.facilities.iter().all(|f| f.capacity == first).then_some(first)
    }

    /// How many clients the `k` largest capacities fail to cover (0 when the
    /// necessary feasibility condition holds).
    pub fn capacity_shortfall(&self) -> usize {
        let mut caps: Vec<u64> = self.facilities.iter().map(|f| f.capacity as u64).collect();
        caps.sort_unstable_by(|a, b| b.cmp(a));
        let top: u64 = caps.iter().take(self.k).sum();
        (self.clients.len() as u64).saturating_sub(top) as usize
    }
}

/// An assignment of every client to an open facility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// Open facilities, sorted ascending.
    pub open: Vec<PointId>,
    /// Clients in instance order.
    pub clients: Vec<PointId>,
    /// `phi[i]` serves `clients[i]`.
    pub phi: Vec<PointId>,
}

impl Assignment {
    /// Builds an assignment; the open set is the sorted set of used facilities
    /// plus any extra facilities in `also_open`.
    pub fn new(clients: Vec<PointId>, phi: Vec<PointId>, also_open: &[PointId]) -> Self {
        let mut open: Vec<PointId> = phi.iter().chain(also_open).copied().collect();
        open.sort_unstable();
        open.dedup();
        Self { open, clients, phi }
    }

    /// `Σ_c d(c, phi(c))`.
    pub fn cost(&self, d: &Metric) -> Result<f64> {
        if self.clients.len() != self.phi.len() {
            return Err(CkmError::Structural("assignment has mismatched client and phi lengths".into()));
        }
        self.clients
            .iter()
            .zip(&self.phi)
            .try_fold(0.0, |acc, (&c, &f)| Ok(acc + d.try_get(c, f)?))
    }

    /// Clients served by each open facility, aligned with `open`.
    pub fn loads(&self) -> Vec<usize> {
        let mut loads = vec![0; self.open.len()];
        for f in &self.phi {
            if let Ok(i) = self.open.binary_search(f) {
                loads[i] += 1;
            }
        }
        loads
    }

    /// Feasibility problems of this assignment on `inst` (empty = feasible).
    pub fn violations(&self, inst: &Instance) -> Vec<String> {
        let mut out = Vec::new();
        if self.open.len() > inst.k() {
            out.push(format!("{} facilities open, budget is {}", self.open.len(), inst.k()));
        }
        if self.clients != inst.clients() {
            out.push("assignment clients differ from instance clients".into());
        }
        if self.phi.len() != self.clients.len() {
            out.push("phi does not cover every client".into());
        }
        for (f, load) in self.open.iter().zip(self.loads()) {
            match inst.capacity_of(*f) {
                None => out.push(format!("open point {f} is not a facility")),
                Some(cap) if load > cap as usize => {
                    out.push(format!("facility {f} serves {load} clients, capacity {cap}"))
                }
                Some(_) => {}
            }
        }
        for (c, f) in self.clients.iter().zip(&self.phi) {
            if self.open.binary_search(f).is_err() {
                out.push(format!("client {c} assigned to closed point {f}"));
            }
        }
        out
    }

    pub fn is_feasible(&self, inst: &Instance) -> bool {
        self.violations(inst).is_empty()
    }
}

/// One problem found by [`validate_instance`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonzeroDiagonal { point: usize, value: f64 },
    Asymmetric { u: usize, v: usize, uv: f64, vu: f64 },
    Triangle { u: usize, v: usize, w: usize },
    BudgetExceedsFacilities { k: usize, facilities: usize },
    CapacityShortfall { shortfall: usize },
    RolesNotPartition { detail: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonzeroDiagonal { point, value } => write!(f, "d({point},{point}) = {value} ≠ 0"),
            Violation::Asymmetric { u, v, uv, vu } => write!(f, "asymmetric pair ({u},{v}): {uv} vs {vu}"),
            Violation::Triangle { u, v, w } => write!(f, "triangle inequality fails: d({u},{w}) > d({u},{v}) + d({v},{w})"),
            Violation::BudgetExceedsFacilities { k, facilities } => {
                write!(f, "k = {k} exceeds the number of facilities ({facilities})")
            }
            Violation::CapacityShortfall { shortfall } => {
                write!(f, "infeasible: the k largest capacities leave {shortfall} clients unserved")
            }
            Violation::RolesNotPartition { detail } => write!(f, "facilities and clients do not partition the points: {detail}"),
        }
    }
}

/// Checks metric axioms, the budget bound and the capacity condition.
///
/// The O(n³) triangle check runs only when `check_triangle` is set.
pub fn validate_instance(inst: &Instance, check_triangle: bool) -> Vec<Violation> {
    let mut out = inst.metric.violations(check_triangle);
    if inst.k > inst.facilities.len() {
        out.push(Violation::BudgetExceedsFacilities { k: inst.k, facilities: inst.facilities.len() });
    }
    let shortfall = inst.capacity_shortfall();
    if shortfall > 0 {
        out.push(Violation::CapacityShortfall { shortfall });
    }
    let mut seen = vec![0u32; inst.metric.size()];
    for id in inst.facilities.iter().map(|f| f.id).chain(inst.clients.iter().copied()) {
        seen[id.0] += 1;
    }
    if let Some(p) = seen.iter().position(|&s| s > 1) {
        out.push(Violation::RolesNotPartition { detail: format!("point {p} has more than one role") });
    } else if let Some(p) = seen.iter().position(|&s| s == 0) {
        out.push(Violation::RolesNotPartition { detail: format!("point {p} has no role") });
    }
    out
}
