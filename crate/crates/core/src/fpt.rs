//! Parameterized solvers on centered instances and the end-to-end
//! `(7+ε)` pipeline.
//!
//! Both centered solvers guess how many facilities the optimum opens in each
//! pool (an f-cluster, or a (center, distance bucket) pair), pick the
//! facilities inside a pool greedily, and settle the assignment with an
//! exact transportation solve. Work items are independent; the reduction is
//! a minimum under a total order, so results do not depend on scheduling.

use rayon::prelude::*;

use crate::centered::{build_buckets, build_centered, candidate_d_values, CenteredInstance};
use crate::error::{CkmError, Result};
use crate::instance::{Assignment, Facility, Instance, PointId};
use crate::transport::{optimal_mapping, TransportProblem};
use crate::uncap::bicriteria_greedy;

/// How many facilities to open in each pool; `counts` sums to the budget.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub counts: Vec<usize>,
}

impl Configuration {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Streams every `counts` vector with `Σ counts = k` and `counts[i] ≤ pools[i]`,
/// in lexicographically decreasing order.
pub fn enumerate_configurations(pools: &[usize], k: usize) -> Configurations {
    let mut counts = vec![0; pools.len()];
    let ok = fill(&mut counts, pools, 0, k);
    Configurations { pools: pools.to_vec(), next: ok.then_some(counts) }
}

/// Number of bounded compositions, by dynamic programming over pools.
pub fn count_configurations(pools: &[usize], k: usize) -> u128 {
    let mut ways = vec![0u128; k + 1];
    ways[0] = 1;
    for &cap in pools {
        let mut next = vec![0u128; k + 1];
        for (total, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            for take in 0..=cap.min(k - total) {
                next[total + take] += w;
            }
        }
        ways = next;
    }
    ways[k]
}

/// Greedily places `remaining` units from position `from` on.
fn fill(counts: &mut [usize], pools: &[usize], from: usize, mut remaining: usize) -> bool {
    for j in from..counts.len() {
        let c = pools[j].min(remaining);
        counts[j] = c;
        remaining -= c;
    }
    remaining == 0
}

pub struct Configurations {
    pools: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for Configurations {
    type Item = Configuration;

    fn next(&mut self) -> Option<Configuration> {
        let current = self.next.take()?;
        let mut counts = current.clone();
        let len = counts.len();
        let mut suffix_count = counts.last().copied().unwrap_or(0);
        let mut suffix_room = self.pools.last().copied().unwrap_or(0);
        for i in (0..len.saturating_sub(1)).rev() {
            if counts[i] > 0 && suffix_count < suffix_room {
                counts[i] -= 1;
                fill(&mut counts, &self.pools, i + 1, suffix_count + 1);
                self.next = Some(counts);
                break;
            }
            suffix_count += counts[i];
            suffix_room += self.pools[i];
        }
        Some(Configuration { counts: current })
    }
}

/// A solution on a centered instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredSolution {
    pub assignment: Assignment,
    /// Cost under `d_ℓ`.
    pub cost: f64,
    /// Transportation problems solved.
    pub configurations: usize,
    /// For the bucketed solver: candidate values of `D` examined and pruned.
    pub d_candidates: usize,
    pub d_pruned: usize,
    /// For the bucketed solver: the winning `D` and cost under its rounded metric.
    pub chosen_d: Option<f64>,
    pub cost_rounded: Option<f64>,
}

/// Best of one work item: (cost, guess index, configuration rank, payload).
type Candidate = (f64, usize, usize, Assignment, f64);

fn better(a: Candidate, b: Candidate) -> Candidate {
    let ord = a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2));
    if ord.is_le() {
        a
    } else {
        b
    }
}

fn open_facilities(base: &Instance, ids: &[PointId]) -> Vec<Facility> {
    ids.iter()
        .map(|&id| Facility { id, capacity: base.capacity_of(id).expect("pool members are facilities") })
        .collect()
}

/// Exact uniform CKM on a centered instance.
///
/// For each configuration `(k_s)`, opens in every f-cluster the `k_s`
/// facilities closest to its center (ties by id) and solves the mapping
/// under `d_ℓ`. Returns the best configuration.
pub fn solve_uniform_centered(centered: &CenteredInstance, k: usize) -> Result<CenteredSolution> {
    let base = centered.base();
    let capacity = base
        .uniform_capacity()
        .ok_or_else(|| CkmError::Structural("uniform solver needs equal capacities".into()))?;
    let budget = k.min(base.facilities().len());
    let n_clients = base.clients().len();
    if (capacity as usize).saturating_mul(budget) < n_clients {
        return Err(CkmError::Infeasible { shortfall: n_clients - capacity as usize * budget });
    }

    let clusters: Vec<Vec<PointId>> = centered
        .f_clusters()
        .iter()
        .map(|cluster| {
            let mut sorted = cluster.clone();
            sorted.sort_by(|a, b| centered.pendant(*a).total_cmp(&centered.pendant(*b)).then(a.cmp(b)));
            sorted
        })
        .collect();
    let pool_sizes: Vec<usize> = clusters.iter().map(Vec::len).collect();
    let d_ell = centered.d_ell();

    let (best, tried) = enumerate_configurations(&pool_sizes, budget)
        .enumerate()
        .par_bridge()
        .map(|(rank, config)| {
            let ids: Vec<PointId> = clusters
                .iter()
                .zip(&config.counts)
                .flat_map(|(cluster, &take)| cluster[..take].iter().copied())
                .collect();
            let open = open_facilities(base, &ids);
            let best = TransportProblem::from_metric(d_ell, base.clients(), &open)
                .and_then(|p| optimal_mapping(&p))
                .ok()
                .map(|(a, cost)| (cost, 0, rank, a, cost));
            (best, 1usize)
        })
        .reduce(
            || (None, 0),
            |(a, na), (b, nb)| {
                let best = match (a, b) {
                    (Some(a), Some(b)) => Some(better(a, b)),
                    (a, b) => a.or(b),
                };
                (best, na + nb)
            },
        );

    let (cost, _, _, assignment, _) = best.ok_or(CkmError::Infeasible { shortfall: 0 })?;
    Ok(CenteredSolution {
        assignment,
        cost,
        configurations: tried,
        d_candidates: 0,
        d_pruned: 0,
        chosen_d: None,
        cost_rounded: None,
    })
}

/// `(1+ε)`-approximate non-uniform CKM on a centered instance.
///
/// Guesses the largest connection distance `D` among all client–facility
/// distances in `d_ℓ`, buckets the surviving facilities with `ε/3`, opens the
/// largest-capacity facilities of every (center, bucket) pool according to
/// each configuration, and solves the mapping under the rounded metric. The
/// winner is the candidate with least cost under `d_ℓ`.
pub fn solve_nonuniform_centered(centered: &CenteredInstance, k: usize, epsilon: f64) -> Result<CenteredSolution> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(CkmError::Structural(format!("epsilon must be positive, got {epsilon}")));
    }
    let base = centered.base();
    let n_clients = base.clients().len();
    let inner_eps = epsilon / 3.0;
    let candidates = candidate_d_values(centered);
    let d_ell = centered.d_ell();

    let per_guess: Vec<(Option<Candidate>, usize, bool)> = candidates
        .par_iter()
        .enumerate()
        .map(|(di, &largest)| {
            let Ok(bucketed) = build_buckets(centered, largest, inner_eps) else {
                return (None, 0, true);
            };
            let pools = bucketed.pools();
            let surviving: Vec<u32> = pools
                .iter()
                .flat_map(|p| p.facilities.iter().map(|&f| base.capacity_of(f).unwrap_or(0)))
                .collect();
            let budget = k.min(surviving.len());
            let mut caps = surviving;
            caps.sort_unstable_by(|a, b| b.cmp(a));
            let top: u64 = caps.iter().take(budget).map(|&c| c as u64).sum();
            if top < n_clients as u64 {
                return (None, 0, true);
            }

            let sizes: Vec<usize> = pools.iter().map(|p| p.facilities.len()).collect();
            let d_prime = bucketed.d_prime();
            let (best, tried) = enumerate_configurations(&sizes, budget)
                .enumerate()
                .par_bridge()
                .map(|(rank, config)| {
                    let ids: Vec<PointId> = pools
                        .iter()
                        .zip(&config.counts)
                        .flat_map(|(pool, &take)| pool.facilities[..take].iter().copied())
                        .collect();
                    let open = open_facilities(base, &ids);
                    let best = TransportProblem::from_metric(d_prime, base.clients(), &open)
                        .and_then(|p| optimal_mapping(&p))
                        .ok()
                        .and_then(|(a, rounded)| {
                            let cost = a.cost(d_ell).ok()?;
                            Some((cost, di, rank, a, rounded))
                        });
                    (best, 1usize)
                })
                .reduce(
                    || (None, 0),
                    |(a, na), (b, nb)| {
                        let best = match (a, b) {
                            (Some(a), Some(b)) => Some(better(a, b)),
                            (a, b) => a.or(b),
                        };
                        (best, na + nb)
                    },
                );
            (best, tried, false)
        })
        .collect();

    let configurations = per_guess.iter().map(|g| g.1).sum();
    let d_pruned = per_guess.iter().filter(|g| g.2).count();
    let best = per_guess.into_iter().filter_map(|g| g.0).reduce(better);
    let Some((cost, di, _, assignment, rounded)) = best else {
        return Err(CkmError::Infeasible { shortfall: base.with_k(k.max(1))?.capacity_shortfall() });
    };
    Ok(CenteredSolution {
        assignment,
        cost,
        configurations,
        d_candidates: candidates.len(),
        d_pruned,
        chosen_d: Some(candidates[di]),
        cost_rounded: Some(rounded),
    })
}

/// Stage-by-stage record of a pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineDiagnostics {
    /// Centers used (`ℓ`).
    pub ell: usize,
    pub ell_budget: usize,
    /// Cost of the uncapacitated seed under `d`.
    pub uncap_cost: f64,
    pub configurations: usize,
    pub d_candidates: usize,
    pub d_pruned: usize,
    /// The returned assignment under `d_ℓ` (and under the rounded metric, when bucketed).
    pub cost_d_ell: f64,
    pub cost_rounded: Option<f64>,
}

/// A capacity-feasible solution on the original instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CkmSolution {
    pub assignment: Assignment,
    /// Cost under the original metric.
    pub cost: f64,
    pub diagnostics: PipelineDiagnostics,
}

fn precheck(inst: &Instance, k: usize, epsilon: f64) -> Result<Instance> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(CkmError::Structural(format!("epsilon must be positive, got {epsilon}")));
    }
    let budgeted = inst.with_k(k)?;
    let shortfall = budgeted.capacity_shortfall();
    if shortfall > 0 {
        return Err(CkmError::Infeasible { shortfall });
    }
    Ok(budgeted)
}

/// Pulls a centered solution back to the original metric and re-checks
/// feasibility there.
fn pull_back(
    budgeted: &Instance,
    centered: &CenteredInstance,
    solution: CenteredSolution,
    uncap_cost: f64,
    ell_budget: usize,
) -> Result<CkmSolution> {
    let problems = solution.assignment.violations(budgeted);
    if !problems.is_empty() {
        return Err(CkmError::Invariant(format!("pipeline output infeasible: {}", problems.join("; "))));
    }
    let cost = solution.assignment.cost(budgeted.metric())?;
    Ok(CkmSolution {
        assignment: solution.assignment,
        cost,
        diagnostics: PipelineDiagnostics {
            ell: centered.ell(),
            ell_budget,
            uncap_cost,
            configurations: solution.configurations,
            d_candidates: solution.d_candidates,
            d_pruned: solution.d_pruned,
            cost_d_ell: solution.cost,
            cost_rounded: solution.cost_rounded,
        },
    })
}

/// The `(7+ε)` pipeline: bicriteria seed with `ε/3`, centered reduction,
/// bucketed centered solver with `ε` (split internally), pull-back to `d`.
pub fn solve_ckm(inst: &Instance, k: usize, epsilon: f64) -> Result<CkmSolution> {
    let budgeted = precheck(inst, k, epsilon)?;
    let seed = bicriteria_greedy(&budgeted, k, epsilon / 3.0)?;
    let centered = build_centered(&budgeted, &seed)?;
    let solution = solve_nonuniform_centered(&centered, k, epsilon)?;
    pull_back(&budgeted, &centered, solution, seed.cost, seed.ell_budget)
}

/// Uniform-capacity variant: same seed and reduction, exact centered solver.
pub fn solve_ckm_uniform(inst: &Instance, k: usize, epsilon: f64) -> Result<CkmSolution> {
    let budgeted = precheck(inst, k, epsilon)?;
    let seed = bicriteria_greedy(&budgeted, k, epsilon / 3.0)?;
    let centered = build_centered(&budgeted, &seed)?;
    let solution = solve_uniform_centered(&centered, k)?;
    pull_back(&budgeted, &centered, solution, seed.cost, seed.ell_budget)
}

/// Runs a centered solver on a caller-supplied centered instance and pulls
/// the result back to its base metric.
pub fn solve_on_centered(centered: &CenteredInstance, k: usize, epsilon: Option<f64>) -> Result<CkmSolution> {
    let budgeted = centered.base().with_k(k)?;
    let solution = match epsilon {
        Some(eps) => solve_nonuniform_centered(centered, k, eps)?,
        None => solve_uniform_centered(centered, k)?,
    };
    let uncap_cost = centered.center_assignment_cost();
    pull_back(&budgeted, centered, solution, uncap_cost, centered.ell())
}
