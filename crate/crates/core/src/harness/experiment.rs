//! Experiment grids: generators × seeds × algorithms × epsilons, compared
//! against the exact oracle where it fits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::read_instance;
use super::gen::{gen_dominating_set_reduction, gen_random_instance, SimpleGraph};
use crate::error::{CkmError, Result};
use crate::fpt::{solve_ckm, solve_ckm_uniform};
use crate::instance::{Assignment, Instance, TOLERANCE};
use crate::oracle::exact_ckm;
use crate::rng::derive_seed;
use crate::tree::solve_logk;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Fpt,
    FptUniform,
    Tree,
    Oracle,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fpt => "fpt",
            Algorithm::FptUniform => "fpt-uniform",
            Algorithm::Tree => "tree",
            Algorithm::Oracle => "oracle",
        }
    }

    fn uses_epsilon(self) -> bool {
        matches!(self, Algorithm::Fpt | Algorithm::FptUniform)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Random { n_facilities: usize, n_clients: usize, k: usize, cap_range: (u32, u32) },
    DominatingSet { graph: GraphFamily, n: usize, k: usize },
    /// A fixed instance file; the seed only reaches the solvers.
    File { path: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphFamily {
    Path,
    Cycle,
    Star,
    Complete,
    Random,
}

impl GeneratorSpec {
    pub fn generate(&self, seed: u64) -> Result<Instance> {
        match *self {
            GeneratorSpec::Random { n_facilities, n_clients, k, cap_range } => {
                gen_random_instance(n_facilities, n_clients, k, cap_range, seed)
            }
            GeneratorSpec::DominatingSet { graph, n, k } => {
                let g = match graph {
                    GraphFamily::Path => SimpleGraph::path(n),
                    GraphFamily::Cycle => SimpleGraph::cycle(n),
                    GraphFamily::Star => SimpleGraph::star(n),
                    GraphFamily::Complete => SimpleGraph::complete(n),
                    GraphFamily::Random => SimpleGraph::random_connected(n, 0.3, seed),
                };
                Ok(gen_dominating_set_reduction(&g, k)?.instance)
            }
            GeneratorSpec::File { ref path } => read_instance(Path::new(path)),
        }
    }
}

fn default_samples() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generators: Vec<GeneratorSpec>,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    /// Tree samples per run.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        if let Some(e) = config.epsilons.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
            return Err(CkmError::Parse(format!("field `epsilons`: {e} is not a positive number")));
        }
        if config.algorithms.iter().any(|a| a.uses_epsilon()) && config.epsilons.is_empty() {
            return Err(CkmError::Parse("field `epsilons`: required by fpt algorithms".into()));
        }
        Ok(config)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Infeasible,
    Refused,
    /// Output failed re-validation or the solver reported another error.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub instance_id: String,
    pub algorithm: Algorithm,
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub status: RunStatus,
    pub cost: Option<f64>,
    pub oracle_cost: Option<f64>,
    pub ratio: Option<f64>,
    pub diagnostics: BTreeMap<String, f64>,
    pub detail: Option<String>,
    pub wall_time_ms: f64,
}

impl ExperimentRecord {
    /// The record without its wall time, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self { wall_time_ms: 0.0, ..self.clone() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub records: Vec<ExperimentRecord>,
}

impl ExperimentReport {
    /// Largest ratio seen per algorithm.
    pub fn max_ratios(&self) -> BTreeMap<Algorithm, f64> {
        let mut out = BTreeMap::new();
        for r in &self.records {
            if let Some(ratio) = r.ratio {
                let e = out.entry(r.algorithm).or_insert(ratio);
                *e = f64::max(*e, ratio);
            }
        }
        out
    }

    pub fn to_json_lines(&self) -> String {
        self.records.iter().map(|r| serde_json::to_string(r).expect("plain data") + "\n").collect()
    }

    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        let mut out = format!(
            "{:<16} {:<12} {:>8} {:>12} {:>12} {:>8} {:<10}\n",
            "instance", "algorithm", "epsilon", "cost", "oracle", "ratio", "status"
        );
        for r in &self.records {
            let status = serde_json::to_string(&r.status).expect("plain data");
            let _ = writeln!(
                out,
                "{:<16} {:<12} {:>8} {:>12} {:>12} {:>8} {:<10}",
                r.instance_id,
                r.algorithm.name(),
                fmt(r.epsilon),
                fmt(r.cost),
                fmt(r.oracle_cost),
                fmt(r.ratio),
                status.trim_matches('"')
            );
        }
        for (alg, ratio) in self.max_ratios() {
            let _ = writeln!(out, "max ratio {}: {ratio:.6}", alg.name());
        }
        out
    }
}

struct Outcome {
    cost: f64,
    assignment: Assignment,
    diagnostics: BTreeMap<String, f64>,
}

fn run_one(inst: &Instance, algorithm: Algorithm, epsilon: Option<f64>, seed: u64, samples: usize) -> Result<Outcome> {
    let k = inst.k();
    let mut diagnostics = BTreeMap::new();
    let (assignment, cost) = match algorithm {
        Algorithm::Fpt | Algorithm::FptUniform => {
            let eps = epsilon.expect("fpt runs carry an epsilon");
            let sol = if algorithm == Algorithm::Fpt { solve_ckm(inst, k, eps)? } else { solve_ckm_uniform(inst, k, eps)? };
            let d = &sol.diagnostics;
            diagnostics.insert("ell".into(), d.ell as f64);
            diagnostics.insert("ell_budget".into(), d.ell_budget as f64);
            diagnostics.insert("uncap_cost".into(), d.uncap_cost);
            diagnostics.insert("configurations".into(), d.configurations as f64);
            diagnostics.insert("d_candidates".into(), d.d_candidates as f64);
            diagnostics.insert("d_pruned".into(), d.d_pruned as f64);
            diagnostics.insert("cost_d_ell".into(), d.cost_d_ell);
            if let Some(c) = d.cost_rounded {
                diagnostics.insert("cost_rounded".into(), c);
            }
            (sol.assignment, sol.cost)
        }
        Algorithm::Tree => {
            let sol = solve_logk(inst, k, samples, derive_seed(seed, 1))?;
            diagnostics.insert("uncap_cost".into(), sol.uncap_cost);
            diagnostics.insert("cost_tree".into(), sol.cost_tree);
            diagnostics.insert("cost_d_ell".into(), sol.cost_d_ell);
            diagnostics.insert("best_sample".into(), sol.best_sample as f64);
            (sol.assignment, sol.cost)
        }
        Algorithm::Oracle => exact_ckm(inst)?,
    };
    Ok(Outcome { cost, assignment, diagnostics })
}

/// Ratio of a cost to the oracle cost; both zero counts as 1.
pub fn ratio(cost: f64, oracle: f64) -> Option<f64> {
    if oracle > TOLERANCE {
        Some(cost / oracle)
    } else if cost <= TOLERANCE {
        Some(1.0)
    } else {
        None
    }
}

fn record_for(
    instance_id: &str,
    inst: &Instance,
    oracle: Option<f64>,
    algorithm: Algorithm,
    epsilon: Option<f64>,
    seed: u64,
    samples: usize,
) -> ExperimentRecord {
    let start = Instant::now();
    let result = run_one(inst, algorithm, epsilon, seed, samples);
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut record = ExperimentRecord {
        instance_id: instance_id.to_string(),
        algorithm,
        epsilon,
        seed,
        status: RunStatus::Ok,
        cost: None,
        oracle_cost: oracle,
        ratio: None,
        diagnostics: BTreeMap::new(),
        detail: None,
        wall_time_ms,
    };
    match result {
        Ok(out) => {
            let problems = out.assignment.violations(inst);
            let recomputed = out.assignment.cost(inst.metric());
            match recomputed {
                Ok(c) if problems.is_empty() && (c - out.cost).abs() <= TOLERANCE * (1.0 + c.abs()) => {
                    record.cost = Some(c);
                    record.ratio = oracle.and_then(|o| ratio(c, o));
                    record.diagnostics = out.diagnostics;
                }
                Ok(c) => {
                    record.status = RunStatus::Failed;
                    record.detail = Some(format!("re-validation failed (cost {c}): {}", problems.join("; ")));
                }
                Err(e) => {
                    record.status = RunStatus::Failed;
                    record.detail = Some(e.to_string());
                }
            }
        }
        Err(e) => {
            record.status = match e {
                CkmError::Infeasible { .. } => RunStatus::Infeasible,
                CkmError::RefusedScale(_) => RunStatus::Refused,
                _ => RunStatus::Failed,
            };
            record.detail = Some(e.to_string());
        }
    }
    record
}

/// Runs the full cross product. Instances run in parallel; records come out
/// sorted by instance, algorithm and epsilon. Solver failures are recorded,
/// not propagated; only generator errors abort the run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.algorithms.is_empty() {
        return Ok(ExperimentReport::default());
    }
    let jobs: Vec<(usize, usize)> =
        (0..config.generators.len()).flat_map(|g| (0..config.seeds.len()).map(move |s| (g, s))).collect();
    let per_instance: Vec<Result<Vec<ExperimentRecord>>> = jobs
        .par_iter()
        .map(|&(g, s)| {
            let seed = config.seeds[s];
            let inst = config.generators[g].generate(seed)?;
            let id = format!("g{g:03}-s{seed}");
            let oracle = exact_ckm(&inst).ok().map(|(_, c)| c);
            let mut records = Vec::new();
            let mut algorithms = config.algorithms.clone();
            algorithms.sort();
            algorithms.dedup();
            for alg in algorithms {
                if alg.uses_epsilon() {
                    for &eps in &config.epsilons {
                        records.push(record_for(&id, &inst, oracle, alg, Some(eps), seed, config.samples));
                    }
                } else {
                    records.push(record_for(&id, &inst, oracle, alg, None, seed, config.samples));
                }
            }
            Ok(records)
        })
        .collect();
    let mut records = Vec::new();
    for r in per_instance {
        records.extend(r?);
    }
    records.sort_by(|a, b| {
        a.instance_id
            .cmp(&b.instance_id)
            .then(a.algorithm.name().cmp(b.algorithm.name()))
            .then(a.epsilon.unwrap_or(0.0).total_cmp(&b.epsilon.unwrap_or(0.0)))
    });
    Ok(ExperimentReport { records })
}
