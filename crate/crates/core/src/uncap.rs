//! Uncapacitated k-median subroutines that seed the centered reduction.
//!
//! [`bicriteria_greedy`] trades extra facilities for cost: it may open up to
//! `ℓ = ⌈(1 + 1/ε)·k·(ln n + 1)⌉` facilities. [`local_search_kmedian`] opens
//! exactly `k` and is single-swap locally optimal.

use rayon::prelude::*;

use crate::error::{CkmError, Result};
use crate::instance::{Instance, PointId};

/// An uncapacitated solution with every client on a nearest open facility.
#[derive(Debug, Clone, PartialEq)]
pub struct UncapSolution {
    /// Sorted ascending.
    pub open: Vec<PointId>,
    /// `psi[i]` serves `inst.clients()[i]`.
    pub psi: Vec<PointId>,
    /// The facility budget the solver was run with.
    pub ell_budget: usize,
    /// `Σ_c d(c, psi(c))` under the solve metric.
    pub cost: f64,
}

impl UncapSolution {
    /// Nearest-facility assignment onto `open` (lowest id wins ties).
    pub fn nearest(inst: &Instance, mut open: Vec<PointId>, ell_budget: usize) -> Self {
        open.sort_unstable();
        open.dedup();
        let d = inst.metric();
        let mut cost = 0.0;
        let psi = inst
            .clients()
            .iter()
            .map(|&c| {
                let mut best = open[0];
                for &f in &open[1..] {
                    if d.get(c, f) < d.get(c, best) {
                        best = f;
                    }
                }
                cost += d.get(c, best);
                best
            })
            .collect();
        Self { open, psi, ell_budget, cost }
    }
}

/// `⌈(1 + 1/ε)·k·(ln n + 1)⌉`, at least 1.
pub fn ell_budget(k: usize, epsilon: f64, n_clients: usize) -> usize {
    let ln_n = (n_clients.max(1) as f64).ln();
    let raw = (1.0 + 1.0 / epsilon) * k as f64 * (ln_n + 1.0);
    (raw.ceil() as usize).max(1)
}

/// Greedy star cover with a bicriteria budget on the open count.
///
/// A star is a facility together with a prefix of the clients sorted by
/// distance to it; its price is the facility's opening charge (zero once
/// open) plus the connection distances of the clients it newly covers.
/// Rounds pick the star of least price per newly covered client. The
/// opening charge is found by bisection so that at most `ℓ` facilities
/// open; the cheapest cover within budget is returned after nearest
/// reassignment.
pub fn bicriteria_greedy(inst: &Instance, k: usize, epsilon: f64) -> Result<UncapSolution> {
    if inst.facilities().is_empty() {
        return Err(CkmError::Structural("instance has no facilities".into()));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(CkmError::Structural(format!("epsilon must be positive, got {epsilon}")));
    }
    if k == 0 {
        return Err(CkmError::Structural("k must be positive".into()));
    }
    let n = inst.clients().len();
    let budget = ell_budget(k, epsilon, n);
    let facility_ids = inst.facility_ids();
    if n == 0 {
        return Ok(UncapSolution::nearest(inst, vec![facility_ids[0]], budget));
    }
    if budget >= facility_ids.len() {
        // Every facility fits in the budget, which is the cheapest possible cover.
        return Ok(UncapSolution::nearest(inst, facility_ids, budget));
    }

    let star_lists = sorted_client_lists(inst);
    let max_d = inst
        .clients()
        .iter()
        .flat_map(|&c| facility_ids.iter().map(move |&f| (c, f)))
        .map(|(c, f)| inst.metric().get(c, f))
        .fold(0.0, f64::max);

    let mut best: Option<UncapSolution> = None;
    let mut consider = |open: Vec<PointId>| -> bool {
        if open.len() > budget {
            return false;
        }
        let sol = UncapSolution::nearest(inst, open, budget);
        if best.as_ref().map_or(true, |b| sol.cost < b.cost) {
            best = Some(sol);
        }
        true
    };

    if !consider(greedy_cover(inst, &star_lists, 0.0)) {
        let mut lo = 0.0;
        let mut hi = (n * n) as f64 * max_d + 1.0;
        let fits = consider(greedy_cover(inst, &star_lists, hi));
        debug_assert!(fits, "a prohibitive opening charge opens a single facility");
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if consider(greedy_cover(inst, &star_lists, mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-12 * hi.max(1.0) {
                break;
            }
        }
    }
    Ok(best.expect("the prohibitive charge always yields a feasible cover"))
}

/// For every facility, client positions sorted by (distance, position).
fn sorted_client_lists(inst: &Instance) -> Vec<Vec<(f64, usize)>> {
    let d = inst.metric();
    inst.facilities()
        .iter()
        .map(|f| {
            let mut list: Vec<(f64, usize)> =
                inst.clients().iter().enumerate().map(|(i, &c)| (d.get(c, f.id), i)).collect();
            list.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            list
        })
        .collect()
}

/// One run of the star-cover greedy with a uniform opening charge.
fn greedy_cover(inst: &Instance, star_lists: &[Vec<(f64, usize)>], charge: f64) -> Vec<PointId> {
    let n = inst.clients().len();
    let mut covered = vec![false; n];
    let mut opened = vec![false; star_lists.len()];
    let mut remaining = n;

    while remaining > 0 {
        // (ratio, facility, prefix length); longer prefixes win exact ties.
        let (_, fi, take) = star_lists
            .par_iter()
            .enumerate()
            .map(|(fi, list)| {
                let open_cost = if opened[fi] { 0.0 } else { charge };
                let mut sum = 0.0;
                let mut count = 0usize;
                let mut best = (f64::INFINITY, fi, 0usize);
                for &(dist, ci) in list {
                    if covered[ci] {
                        continue;
                    }
                    sum += dist;
                    count += 1;
                    let ratio = (open_cost + sum) / count as f64;
                    if ratio <= best.0 {
                        best = (ratio, fi, count);
                    }
                }
                best
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(b.2.cmp(&a.2)))
            .expect("at least one facility");

        opened[fi] = true;
        let mut taken = 0;
        for &(_, ci) in &star_lists[fi] {
            if taken == take {
                break;
            }
            if !covered[ci] {
                covered[ci] = true;
                taken += 1;
            }
        }
        remaining -= taken;
    }

    inst.facilities()
        .iter()
        .zip(&opened)
        .filter(|(_, &o)| o)
        .map(|(f, _)| f.id)
        .collect()
}

/// Default swap limit: `100·k·|F|`.
pub fn default_max_iters(k: usize, n_facilities: usize) -> usize {
    100 * k * n_facilities
}

/// Single-swap local search for uncapacitated k-median.
///
/// Starts from greedy addition, then applies the first strictly improving
/// swap in (open position, closed facility) index order until no swap
/// improves by a factor of at least `1 − 1e-9` or `max_iters` swaps ran.
pub fn local_search_kmedian(inst: &Instance, k: usize, max_iters: usize) -> Result<UncapSolution> {
    let ids = inst.facility_ids();
    if ids.is_empty() {
        return Err(CkmError::Structural("instance has no facilities".into()));
    }
    if k == 0 {
        return Err(CkmError::Structural("k must be positive".into()));
    }
    let k = k.min(ids.len());
    let d = inst.metric();
    let clients = inst.clients();

    let cost_of = |open: &[PointId]| -> f64 {
        clients
            .iter()
            .map(|&c| open.iter().map(|&f| d.get(c, f)).fold(f64::INFINITY, f64::min))
            .sum()
    };

    let mut open: Vec<PointId> = Vec::with_capacity(k);
    while open.len() < k {
        let mut best: Option<(f64, PointId)> = None;
        for &f in &ids {
            if open.contains(&f) {
                continue;
            }
            open.push(f);
            let c = cost_of(&open);
            open.pop();
            if best.map_or(true, |(bc, _)| c < bc) {
                best = Some((c, f));
            }
        }
        open.push(best.expect("k ≤ |F| leaves a candidate").1);
    }
    open.sort_unstable();

    let mut current = cost_of(&open);
    let mut iters = 0;
    'search: while iters < max_iters {
        for i in 0..open.len() {
            for &f in &ids {
                if open.contains(&f) {
                    continue;
                }
                let old = open[i];
                open[i] = f;
                let c = cost_of(&open);
                if c < current * (1.0 - 1e-9) {
                    current = c;
                    iters += 1;
                    open.sort_unstable();
                    continue 'search;
                }
                open[i] = old;
            }
        }
        break;
    }

    Ok(UncapSolution::nearest(inst, open, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Metric;

    fn line(caps_len: usize, fac: &[f64], cli: &[f64]) -> Instance {
        let pos: Vec<f64> = fac.iter().chain(cli).copied().collect();
        let m = Metric::from_fn(pos.len(), |i, j| (pos[i] - pos[j]).abs());
        Instance::from_layout(m, &vec![cli.len() as u32; caps_len], cli.len(), 1).unwrap()
    }

    #[test]
    fn budget_formula() {
        // (1 + 1/1)·2·(ln 10 + 1) = 13.21… → 14
        assert_eq!(ell_budget(2, 1.0, 10), 14);
        assert_eq!(ell_budget(1, 0.5, 1), 3);
    }

    #[test]
    fn greedy_opens_colocated_facilities() {
        let fac: Vec<f64> = (0..40).map(|i| i as f64 * 3.0).collect();
        let cli = [0.0, 0.0, 60.0, 60.0, 117.0];
        let inst = line(fac.len(), &fac, &cli);
        let sol = bicriteria_greedy(&inst, 3, 100.0).unwrap();
        assert!(sol.ell_budget < 40);
        assert!(sol.open.len() <= sol.ell_budget);
        assert_eq!(sol.cost, 0.0);
        assert_eq!(sol.open, vec![PointId(0), PointId(20), PointId(39)]);
    }

    #[test]
    fn greedy_single_facility_forced() {
        let inst = line(1, &[5.0], &[1.0, 2.0, 9.0]);
        let sol = bicriteria_greedy(&inst, 1, 0.5).unwrap();
        assert_eq!(sol.open, vec![PointId(0)]);
        assert!(sol.psi.iter().all(|&f| f == PointId(0)));
        assert_eq!(sol.cost, 4.0 + 3.0 + 4.0);
    }

    #[test]
    fn greedy_respects_tight_budget() {
        let fac: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let cli: Vec<f64> = (0..30).map(|i| i as f64 * 2.0 + 0.5).collect();
        let inst = line(fac.len(), &fac, &cli);
        let sol = bicriteria_greedy(&inst, 1, 100.0).unwrap();
        assert!(sol.open.len() <= sol.ell_budget, "{} > {}", sol.open.len(), sol.ell_budget);
    }

    #[test]
    fn local_search_all_open_when_k_is_f() {
        let inst = line(3, &[0.0, 5.0, 10.0], &[1.0, 6.0, 12.0]);
        let sol = local_search_kmedian(&inst, 3, 10).unwrap();
        assert_eq!(sol.open.len(), 3);
        assert_eq!(sol.cost, 1.0 + 1.0 + 2.0);
    }

    #[test]
    fn local_search_single_client() {
        let inst = line(4, &[0.0, 5.0, 10.0, 11.0], &[10.4]);
        for k in 1..=3 {
            let sol = local_search_kmedian(&inst, k, 100).unwrap();
            assert!((sol.cost - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn psi_is_nearest() {
        let inst = line(4, &[0.0, 5.0, 10.0, 11.0], &[1.0, 4.0, 9.0, 10.6]);
        let sol = local_search_kmedian(&inst, 2, 100).unwrap();
        let d = inst.metric();
        for (&c, &f) in inst.clients().iter().zip(&sol.psi) {
            for &g in &sol.open {
                assert!(d.get(c, f) <= d.get(c, g));
            }
        }
    }
}
