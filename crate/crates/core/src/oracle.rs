//! Exhaustive exact solvers used as ground truth.
//!
//! Everything here favours auditability over speed: plain subset and
//! assignment enumeration, guarded against accidental use at scale.

use rayon::prelude::*;

use crate::error::{CkmError, Result};
use crate::instance::{Assignment, Facility, Instance, PointId};
use crate::transport::{optimal_mapping, TransportProblem};
use crate::uncap::UncapSolution;

/// Largest facility count the oracles accept without [`ScaleGuard::Unchecked`].
pub const MAX_FACILITIES: usize = 12;
/// Largest budget the oracles accept without [`ScaleGuard::Unchecked`].
pub const MAX_K: usize = 4;
/// Largest client count for [`enumerate_mapping_cost`].
pub const MAX_ENUMERATED_CLIENTS: usize = 12;

/// Whether the combinatorial size guard is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaleGuard {
    #[default]
    Enforced,
    /// The caller accepts exponential running time.
    Unchecked,
}

fn check_scale(inst: &Instance, guard: ScaleGuard) -> Result<()> {
    let nf = inst.facilities().len();
    if guard == ScaleGuard::Enforced && (nf > MAX_FACILITIES || inst.k() > MAX_K) {
        return Err(CkmError::RefusedScale(format!(
            "oracle limited to {MAX_FACILITIES} facilities and k ≤ {MAX_K}, got {nf} facilities and k = {}",
            inst.k()
        )));
    }
    if nf > 63 {
        return Err(CkmError::RefusedScale(format!("{nf} facilities exceed the 63-bit subset mask")));
    }
    Ok(())
}

/// All nonempty subsets of `0..n` with at most `k` members, grouped by size
/// and in colex order within a size.
fn subsets_up_to(n: usize, k: usize) -> Vec<u64> {
    let mut out = Vec::new();
    for size in 1..=k.min(n) {
        let mut mask: u64 = (1u64 << size) - 1;
        let limit = 1u64 << n;
        while mask < limit {
            out.push(mask);
            // Gosper's hack: next mask with the same popcount.
            let c = mask & mask.wrapping_neg();
            let r = mask + c;
            mask = (((r ^ mask) >> 2) / c) | r;
        }
    }
    out
}

fn pick(facilities: &[Facility], mask: u64) -> Vec<Facility> {
    facilities
        .iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, f)| *f)
        .collect()
}

/// Exact CKM optimum: every subset of at most `k` facilities, each solved
/// by transportation.
pub fn exact_ckm(inst: &Instance) -> Result<(Assignment, f64)> {
    exact_ckm_with(inst, ScaleGuard::Enforced)
}

pub fn exact_ckm_with(inst: &Instance, guard: ScaleGuard) -> Result<(Assignment, f64)> {
    check_scale(inst, guard)?;
    let shortfall = inst.capacity_shortfall();
    if shortfall > 0 {
        return Err(CkmError::Infeasible { shortfall });
    }
    let n_clients = inst.clients().len() as u64;
    let facilities = inst.facilities();
    let masks = subsets_up_to(facilities.len(), inst.k());

    let best = masks
        .par_iter()
        .enumerate()
        .filter_map(|(rank, &mask)| {
            let open = pick(facilities, mask);
            let total: u64 = open.iter().map(|f| f.capacity as u64).sum();
            if total < n_clients {
                return None;
            }
            let problem = TransportProblem::from_metric(inst.metric(), inst.clients(), &open).ok()?;
            let (assignment, cost) = optimal_mapping(&problem).ok()?;
            Some((cost, rank, assignment))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    best.map(|(cost, _, a)| (a, cost))
        .ok_or(CkmError::Infeasible { shortfall: 0 })
}

/// Exact uncapacitated k-median optimum (capacities ignored).
pub fn exact_uncap_kmedian(inst: &Instance, k: usize) -> Result<(UncapSolution, f64)> {
    exact_uncap_kmedian_with(inst, k, ScaleGuard::Enforced)
}

pub fn exact_uncap_kmedian_with(inst: &Instance, k: usize, guard: ScaleGuard) -> Result<(UncapSolution, f64)> {
    check_scale(&inst.with_k(k.max(1))?, guard)?;
    let ids = inst.facility_ids();
    if ids.is_empty() {
        return Err(CkmError::Structural("instance has no facilities".into()));
    }
    let d = inst.metric();
    let masks = subsets_up_to(ids.len(), k);
    let (cost, _, mask) = masks
        .par_iter()
        .enumerate()
        .map(|(rank, &mask)| {
            let cost: f64 = inst
                .clients()
                .iter()
                .map(|&c| {
                    ids.iter()
                        .enumerate()
                        .filter(|(i, _)| mask >> i & 1 == 1)
                        .map(|(_, &f)| d.get(c, f))
                        .fold(f64::INFINITY, f64::min)
                })
                .sum();
            (cost, rank, mask)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .expect("at least one subset");
    let open: Vec<PointId> = ids.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &f)| f).collect();
    let sol = UncapSolution::nearest(inst, open, k);
    Ok((sol, cost))
}

/// Minimum mapping cost by enumerating every capacity-respecting assignment.
pub fn enumerate_mapping_cost(p: &TransportProblem) -> Result<f64> {
    let n = p.clients().len();
    if n > MAX_ENUMERATED_CLIENTS {
        return Err(CkmError::RefusedScale(format!("{n} clients exceed the enumeration limit")));
    }
    let mut remaining: Vec<u32> = p.open().iter().map(|f| f.capacity).collect();
    let mut best = f64::INFINITY;
    enumerate(p, 0, 0.0, &mut remaining, &mut best);
    if best.is_finite() {
        Ok(best)
    } else {
        Err(CkmError::Infeasible { shortfall: p.shortfall() })
    }
}

fn enumerate(p: &TransportProblem, client: usize, acc: f64, remaining: &mut [u32], best: &mut f64) {
    if client == p.clients().len() {
        if acc < *best {
            *best = acc;
        }
        return;
    }
    for j in 0..remaining.len() {
        if remaining[j] == 0 {
            continue;
        }
        remaining[j] -= 1;
        enumerate(p, client + 1, acc + p.cost(client, j), remaining, best);
        remaining[j] += 1;
    }
}

/// Size of a smallest dominating set of a simple graph, by exhaustive search.
pub fn min_dominating_set_size(vertices: usize, edges: &[(usize, usize)]) -> Result<usize> {
    if vertices > 24 {
        return Err(CkmError::RefusedScale(format!("{vertices} vertices exceed the dominating-set search limit")));
    }
    let mut closed: Vec<u32> = (0..vertices).map(|v| 1 << v).collect();
    for &(u, v) in edges {
        closed[u] |= 1 << v;
        closed[v] |= 1 << u;
    }
    let all: u32 = if vertices == 0 { 0 } else { (1u32 << vertices) - 1 };
    for size in 0..=vertices {
        let found = subsets_up_to(vertices, size).into_iter().filter(|m| m.count_ones() as usize == size).any(|mask| {
            let covered = (0..vertices).filter(|v| mask >> v & 1 == 1).fold(0u32, |acc, v| acc | closed[v]);
            covered == all
        });
        if found || (size == 0 && vertices == 0) {
            return Ok(size);
        }
    }
    Ok(vertices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Metric;

    fn line_instance(caps: &[u32], client_pos: &[f64], fac_pos: &[f64], k: usize) -> Instance {
        let pos: Vec<f64> = fac_pos.iter().chain(client_pos).copied().collect();
        let m = Metric::from_fn(pos.len(), |i, j| (pos[i] - pos[j]).abs());
        Instance::from_layout(m, caps, client_pos.len(), k).unwrap()
    }

    #[test]
    fn colex_subsets() {
        let s = subsets_up_to(4, 2);
        assert_eq!(s.len(), 4 + 6);
        assert_eq!(&s[4..], &[0b0011, 0b0101, 0b0110, 0b1001, 0b1010, 0b1100]);
    }

    #[test]
    fn slack_budget_is_nearest_assignment() {
        let inst = line_instance(&[5, 5, 5], &[0.0, 4.0, 9.0], &[1.0, 5.0, 10.0], 3);
        let (_, cost) = exact_ckm(&inst).unwrap();
        assert_eq!(cost, 3.0);
    }

    #[test]
    fn forced_subset() {
        // only facility 2 has enough capacity on its own
        let inst = line_instance(&[1, 1, 3], &[0.0, 1.0, 2.0], &[0.0, 1.0, 10.0], 1);
        let (a, cost) = exact_ckm(&inst).unwrap();
        assert_eq!(a.open, vec![PointId(2)]);
        assert_eq!(cost, 10.0 + 9.0 + 8.0);
    }

    #[test]
    fn one_median_by_scan() {
        let inst = line_instance(&[9, 9, 9], &[0.0, 2.0, 3.0], &[0.0, 2.0, 7.0], 1);
        let (sol, cost) = exact_uncap_kmedian(&inst, 1).unwrap();
        assert_eq!(sol.open, vec![PointId(1)]);
        assert_eq!(cost, 3.0);
    }

    #[test]
    fn colocated_clients_cost_zero() {
        let inst = line_instance(&[1, 1], &[3.0, 8.0], &[3.0, 8.0], 2);
        assert_eq!(exact_uncap_kmedian(&inst, 2).unwrap().1, 0.0);
        assert_eq!(exact_ckm(&inst).unwrap().1, 0.0);
    }

    #[test]
    fn uncapacitated_never_exceeds_capacitated() {
        let inst = line_instance(&[1, 2, 1], &[0.0, 0.5, 1.0, 6.0], &[0.0, 5.0, 6.0], 3);
        let unc = exact_uncap_kmedian(&inst, 2).unwrap().1;
        let cap = exact_ckm(&inst).unwrap().1;
        assert!(unc <= cap);
    }

    #[test]
    fn guard_refuses_large_instances() {
        let caps = vec![1; 13];
        let fac: Vec<f64> = (0..13).map(|i| i as f64).collect();
        let inst = line_instance(&caps, &[0.0], &fac, 1);
        assert!(matches!(exact_ckm(&inst), Err(CkmError::RefusedScale(_))));
        assert!(exact_ckm_with(&inst, ScaleGuard::Unchecked).is_ok());
    }

    #[test]
    fn dominating_sets() {
        let star: Vec<_> = (1..5).map(|v| (0, v)).collect();
        assert_eq!(min_dominating_set_size(5, &star).unwrap(), 1);
        let c6: Vec<_> = (0..6).map(|v| (v, (v + 1) % 6)).collect();
        assert_eq!(min_dominating_set_size(6, &c6).unwrap(), 2);
    }
}
