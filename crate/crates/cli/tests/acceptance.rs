//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ckm_core::centered::{build_buckets, build_centered, build_centered_from_sources, candidate_d_values, CenteredInstance};
use ckm_core::fpt::{solve_ckm, solve_nonuniform_centered, solve_uniform_centered};
use ckm_core::harness::gen::{curated_graphs, gen_dominating_set_reduction, gen_random_instance};
use ckm_core::oracle::{enumerate_mapping_cost, exact_ckm, exact_uncap_kmedian, min_dominating_set_size};
use ckm_core::transport::{optimal_mapping, TransportProblem};
use ckm_core::tree::{sample_frt, solve_tree_dp, TreeInstance};
use ckm_core::uncap::UncapSolution;
use ckm_core::{Assignment, Facility, Instance, Metric, PointId};

const TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed_0000 + tag)
}

/// Random instance with integer distances from the harness generator.
fn random_instance(rng: &mut ChaCha8Rng, max_f: usize, max_c: usize, max_k: usize, uniform: bool) -> Instance {
    let n_f = rng.gen_range(1..=max_f);
    let n_c = rng.gen_range(1..=max_c);
    let k = rng.gen_range(1..=max_k.min(n_f));
    let need = n_c.div_ceil(k) as u32;
    let range = if uniform {
        let u = rng.gen_range(need..=need + 2);
        (u, u)
    } else {
        let hi = rng.gen_range(need..=need + 3);
        (rng.gen_range(0..=hi), hi)
    };
    gen_random_instance(n_f, n_c, k, range, rng.gen()).expect("feasible by construction")
}

fn random_centered(rng: &mut ChaCha8Rng, uniform: bool) -> (CenteredInstance, usize) {
    let inst = random_instance(rng, 6, 8, 3, uniform);
    let mut ids = inst.facility_ids();
    ids.shuffle(rng);
    let ell = rng.gen_range(1..=3.min(ids.len()));
    let centered = build_centered_from_sources(&inst, &ids[..ell]).expect("sources are facilities");
    (centered, inst.k())
}

fn random_assignment(rng: &mut ChaCha8Rng, inst: &Instance, pool: &[PointId]) -> Assignment {
    let phi = inst.clients().iter().map(|_| *pool.choose(rng).unwrap()).collect();
    Assignment::new(inst.clients().to_vec(), phi, &[])
}

fn criterion_1() -> Outcome {
    let mut rng = rng(1);
    let mut checked = 0;
    let mut worst_real: f64 = 0.0;
    for trial in 0..1000 {
        let n_open = rng.gen_range(1..=6);
        let n_c = rng.gen_range(1..=8);
        let mut caps: Vec<u32> = (0..n_open).map(|_| rng.gen_range(0..=4)).collect();
        while caps.iter().sum::<u32>() < n_c as u32 {
            let j = rng.gen_range(0..n_open);
            caps[j] += 1;
        }
        let open: Vec<Facility> = caps.iter().enumerate().map(|(j, &c)| Facility { id: PointId(j), capacity: c }).collect();
        let clients: Vec<PointId> = (n_open..n_open + n_c).map(PointId).collect();
        let integral = trial % 2 == 0;
        let cost: Vec<f64> = (0..n_open * n_c)
            .map(|_| if integral { rng.gen_range(0..=100) as f64 } else { rng.gen_range(0.0..100.0) })
            .collect();
        let p = TransportProblem::new(open, clients, cost).unwrap();
        let (a, got) = optimal_mapping(&p).unwrap();
        let want = enumerate_mapping_cost(&p).unwrap();
        if integral && got != want {
            return outcome(false, format!("trial {trial}: flow {got} vs enumeration {want}"));
        }
        if !integral {
            worst_real = worst_real.max((got - want).abs());
            if (got - want).abs() > 1e-6 {
                return outcome(false, format!("trial {trial}: flow {got} vs enumeration {want}"));
            }
        }
        let loads = a.phi.iter().fold(vec![0u32; n_open], |mut l, f| {
            l[f.0] += 1;
            l
        });
        if loads.iter().zip(&caps).any(|(l, c)| l > c) {
            return outcome(false, format!("trial {trial}: capacity exceeded"));
        }
        checked += 1;
    }
    outcome(true, format!("{checked} problems, integral exact, worst real gap {worst_real:.2e}"))
}

fn criterion_2() -> Outcome {
    let mut rng = rng(2);
    for trial in 0..300 {
        let (centered, k) = random_centered(&mut rng, true);
        let got = solve_uniform_centered(&centered, k).unwrap().cost;
        let (_, want) = exact_ckm(&centered.ell_instance().with_k(k).unwrap()).unwrap();
        if got != want {
            return outcome(false, format!("trial {trial}: enumeration {got} vs oracle {want}"));
        }
    }
    outcome(true, "300 uniform centered instances match the oracle exactly")
}

fn criterion_3() -> Outcome {
    let mut rng = rng(3);
    let eps = 0.5;
    let mut worst: f64 = 1.0;
    for trial in 0..300 {
        let (centered, k) = random_centered(&mut rng, false);
        let got = solve_nonuniform_centered(&centered, k, eps).unwrap().cost;
        let (_, want) = exact_ckm(&centered.ell_instance().with_k(k).unwrap()).unwrap();
        if got < want - TOL || got > (1.0 + eps) * want + TOL {
            return outcome(false, format!("trial {trial}: bucketed {got} vs oracle {want}"));
        }
        if want > 0.0 {
            worst = worst.max(got / want);
        }
    }
    outcome(true, format!("300 non-uniform centered instances, max ratio {worst:.4} (bound 1.5)"))
}

/// `d_ℓ` recomputed as shortest paths in the explicit centered graph.
fn centered_graph_metric(c: &CenteredInstance) -> Metric {
    let base = c.base();
    let n = base.metric().size();
    let centers = c.centers();
    let mut edges = Vec::new();
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            edges.push((centers[i], centers[j], base.metric().get(c.sources()[i], c.sources()[j])));
        }
    }
    for v in 0..n {
        let s = c.center_of(PointId(v));
        edges.push((PointId(v), centers[s], base.metric().get(PointId(v), c.sources()[s])));
    }
    Metric::from_weighted_graph(n + centers.len(), &edges).unwrap()
}

fn criterion_4() -> Outcome {
    let mut rng = rng(4);
    for trial in 0..1000 {
        let inst = random_instance(&mut rng, 6, 8, 3, false);
        let mut ids = inst.facility_ids();
        ids.shuffle(&mut rng);
        let open = ids[..rng.gen_range(1..=ids.len())].to_vec();
        let psi = UncapSolution::nearest(&inst, open, ids.len());
        let centered = build_centered(&inst, &psi).unwrap();
        let graph = centered_graph_metric(&centered);
        let n = graph.size();
        for u in 0..n {
            for v in 0..n {
                if (graph.get(PointId(u), PointId(v)) - centered.d_ell().get(PointId(u), PointId(v))).abs() > TOL {
                    return outcome(false, format!("trial {trial}: closed form differs from graph distance at ({u}, {v})"));
                }
            }
        }
        let phi = random_assignment(&mut rng, &inst, &inst.facility_ids());
        let d = inst.metric();
        let lhs = phi.cost(d).unwrap();
        let mid = phi.cost(centered.d_ell()).unwrap();
        let psi_cost: f64 = inst.clients().iter().zip(&psi.psi).map(|(&c, &f)| d.get(c, f)).sum();
        let rhs = 3.0 * lhs + 4.0 * psi_cost;
        if lhs > mid + TOL || mid > rhs + TOL {
            return outcome(false, format!("trial {trial}: {lhs} <= {mid} <= {rhs} fails"));
        }
        for (&c, &f) in phi.clients.iter().zip(&phi.phi) {
            let sc = centered.sources()[centered.center_of(c)];
            let sf = centered.sources()[centered.center_of(f)];
            let (fc, csc) = (d.get(f, c), d.get(c, sc));
            if d.get(f, sf) > fc + csc + TOL || d.get(sc, sf) > 2.0 * (fc + csc) + TOL {
                return outcome(false, format!("trial {trial}: per-client fact fails for client {c}, facility {f}"));
            }
            if centered.check_client_facts(c, f).is_err() {
                return outcome(false, format!("trial {trial}: library fact check disagrees"));
            }
        }
    }
    outcome(true, "1000 triples; closed form equals graph distances; both per-client facts hold")
}

fn criterion_5() -> Outcome {
    let mut rng = rng(5);
    let mut tested = 0;
    for trial in 0..300 {
        let (centered, _) = random_centered(&mut rng, false);
        let eps = [0.1, 0.5, 1.0][trial % 3];
        let candidates = candidate_d_values(&centered);
        let big = *candidates.choose(&mut rng).unwrap();
        let b = build_buckets(&centered, big, eps).unwrap();
        let base = centered.base();
        let survivors: Vec<PointId> = base.facility_ids().into_iter().filter(|&f| !b.is_removed(f)).collect();
        if survivors.is_empty() {
            continue;
        }
        for _ in 0..5 {
            let phi = random_assignment(&mut rng, base, &survivors);
            let ell = phi.cost(centered.d_ell()).unwrap();
            let prime = phi.cost(b.d_prime()).unwrap();
            let rhs = (1.0 + eps) * ell + eps * big;
            if ell > prime + TOL || prime > rhs + TOL {
                return outcome(false, format!("trial {trial}: {ell} <= {prime} <= {rhs} fails (D = {big})"));
            }
            tested += 1;
        }
    }
    outcome(true, format!("{tested} assignments within the D bound"))
}

fn criterion_6() -> Outcome {
    let mut rng = rng(6);
    let mut worst: f64 = 1.0;
    for trial in 0..150 {
        let inst = random_instance(&mut rng, 5, 6, 2, false);
        let sol = match solve_ckm(&inst, inst.k(), 0.5) {
            Ok(s) => s,
            Err(e) => return outcome(false, format!("trial {trial}: {e}")),
        };
        let problems = sol.assignment.violations(&inst);
        if !problems.is_empty() {
            return outcome(false, format!("trial {trial}: infeasible output: {}", problems.join("; ")));
        }
        let (_, opt) = exact_ckm(&inst).unwrap();
        let ratio = if opt > 0.0 { sol.cost / opt } else if sol.cost <= TOL { 1.0 } else { f64::INFINITY };
        worst = worst.max(ratio);
        if ratio > 7.5 + TOL {
            return outcome(false, format!("trial {trial}: ratio {ratio}"));
        }
    }
    outcome(true, format!("150 instances feasible; empirical max ratio {worst:.4} (bound 7.5)"))
}

/// Random full binary tree with `leaves` leaves and integer edge lengths in `0..=10`.
fn random_binary_tree(rng: &mut ChaCha8Rng, leaves: usize) -> (Vec<Option<usize>>, Vec<f64>) {
    let mut parents = vec![None];
    let mut frontier = vec![0];
    while frontier.len() < leaves {
        let i = rng.gen_range(0..frontier.len());
        let node = frontier.swap_remove(i);
        for _ in 0..2 {
            frontier.push(parents.len());
            parents.push(Some(node));
        }
    }
    let lens = (0..parents.len()).map(|i| if i == 0 { 0.0 } else { rng.gen_range(0..=10) as f64 }).collect();
    (parents, lens)
}

fn criterion_7() -> Outcome {
    let mut rng = rng(7);
    for trial in 0..300 {
        let n_f = rng.gen_range(1..=6);
        let n_c = rng.gen_range(1..=(12 - n_f).min(6));
        let k = rng.gen_range(1..=3.min(n_f));
        let mut caps: Vec<u32> = (0..n_f).map(|_| rng.gen_range(0..=4)).collect();
        caps.sort_unstable_by(|a, b| b.cmp(a));
        while caps[..k].iter().sum::<u32>() < n_c as u32 {
            caps[rng.gen_range(0..k)] += 1;
        }
        caps.shuffle(&mut rng);
        let roles = Instance::from_layout(Metric::from_fn(n_f + n_c, |_, _| 0.0), &caps, n_c, k).unwrap();
        let (parents, lens) = random_binary_tree(&mut rng, n_f + n_c);
        let mut points: Vec<PointId> = (0..n_f + n_c).map(PointId).collect();
        points.shuffle(&mut rng);
        let mut slots = points.into_iter();
        let is_leaf: Vec<bool> = (0..parents.len()).map(|i| !parents.contains(&Some(i))).collect();
        let hosted: Vec<Option<PointId>> = is_leaf.iter().map(|&leaf| if leaf { slots.next() } else { None }).collect();
        let tree = TreeInstance::new(&parents, &lens, &hosted, &roles).unwrap();
        let got = solve_tree_dp(&tree, k).unwrap().cost;
        let (_, want) = exact_ckm(tree.instance()).unwrap();
        if got != want {
            return outcome(false, format!("trial {trial}: DP {got} vs oracle {want}"));
        }
    }
    outcome(true, "300 binary trees match the oracle exactly")
}

fn criterion_8() -> Outcome {
    let mut rng = rng(8);
    let pts: Vec<(f64, f64)> = (0..8).map(|_| (rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0))).collect();
    let metric = Metric::from_fn(8, |i, j| ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt());
    let mut sums = vec![0.0; 64];
    for seed in 0..200 {
        let t = sample_frt(&metric, seed).unwrap();
        for u in 0..8 {
            for v in 0..8 {
                let (tree, d) = (t.tree_distance(u, v), metric.get(PointId(u), PointId(v)));
                if tree < d - TOL {
                    return outcome(false, format!("seed {seed}: tree {tree} < d {d} for ({u}, {v})"));
                }
                sums[u * 8 + v] += tree;
            }
        }
    }
    let bound = 16.0 * 8f64.log2();
    let mut worst: f64 = 0.0;
    for u in 0..8 {
        for v in u + 1..8 {
            worst = worst.max(sums[u * 8 + v] / 200.0 / metric.get(PointId(u), PointId(v)));
        }
    }
    outcome(worst <= bound, format!("domination on all 200 samples; max mean distortion {worst:.3} (soft bound {bound})"))
}

fn criterion_9() -> Outcome {
    let mut checked = 0;
    for (name, g) in curated_graphs(20, 9) {
        for k in [1, 2] {
            if k > g.vertices {
                continue;
            }
            let red = gen_dominating_set_reduction(&g, k).unwrap();
            let (_, opt) = exact_uncap_kmedian(&red.instance, k).unwrap();
            let has_ds = min_dominating_set_size(g.vertices, &g.edges).unwrap() <= k;
            if has_ds != red.predicate(opt) {
                return outcome(false, format!("{name}, k = {k}: dominating set {has_ds}, optimum {opt}, target {}", red.target));
            }
            checked += 1;
        }
    }
    outcome(true, format!("{checked} (graph, k) pairs agree in both directions"))
}

fn run_ckm(args: &[&str], threads: &str) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ckm")).args(args).env("CKM_THREADS", threads).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap())
}

/// Output lines without wall-clock records or fields.
fn stable_lines(text: &str) -> Vec<String> {
    text.lines()
        .filter(|l| !l.contains("\"record\":\"timing\""))
        .map(|l| match serde_json::from_str::<serde_json::Value>(l) {
            Ok(serde_json::Value::Object(mut m)) => {
                m.remove("wall_time_ms");
                serde_json::Value::Object(m).to_string()
            }
            _ => l.to_string(),
        })
        .collect()
}

fn criterion_10(dir: &Path) -> Outcome {
    let general = dir.join("general.json");
    let uniform = dir.join("uniform.json");
    let config = dir.join("bench.json");
    let g = general.to_str().unwrap();
    let u = uniform.to_str().unwrap();
    assert_eq!(run_ckm(&["gen", "--n-facilities", "6", "--n-clients", "9", "--k", "3", "--cap-range", "1,5", "--seed", "17", "--out", g], "0").0, 0);
    assert_eq!(run_ckm(&["gen", "--n-facilities", "5", "--n-clients", "8", "--k", "2", "--cap-range", "4,4", "--seed", "3", "--out", u], "0").0, 0);
    std::fs::write(
        &config,
        r#"{"generators": [{"kind": "random", "n_facilities": 4, "n_clients": 6, "k": 2, "cap_range": [1, 4]}],
            "algorithms": ["fpt", "tree", "oracle"], "seeds": [1, 2, 3, 4], "epsilons": [0.5, 1.0], "samples": 4}"#,
    )
    .unwrap();
    let runs: Vec<Vec<&str>> = vec![
        vec!["solve", g, "--algorithm", "fpt", "--epsilon", "0.5", "--stats"],
        vec!["solve", u, "--algorithm", "fpt-uniform", "--stats"],
        vec!["solve", g, "--algorithm", "tree", "--seed", "11", "--samples", "6", "--stats"],
        vec!["solve", g, "--algorithm", "oracle", "--stats"],
        vec!["bench", config.to_str().unwrap(), "--format", "json"],
    ];
    for args in &runs {
        let (code, reference) = run_ckm(args, "1");
        if code != 0 {
            return outcome(false, format!("`{}` exited with {code}", args.join(" ")));
        }
        let reference = stable_lines(&reference);
        for threads in ["2", "4", "0", "1"] {
            let (code, out) = run_ckm(args, threads);
            if code != 0 || stable_lines(&out) != reference {
                return outcome(false, format!("`{}` differs with CKM_THREADS={threads}", args.join(" ")));
            }
        }
    }
    outcome(true, format!("{} commands identical across CKM_THREADS = 1, 2, 4, 0 and reruns", runs.len()))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let criteria: Vec<(&str, Duration, Box<dyn Fn() -> Outcome>)> = vec![
        ("transportation exactness", Duration::from_secs(10), Box::new(criterion_1)),
        ("uniform centered exactness", Duration::from_secs(30), Box::new(criterion_2)),
        ("non-uniform centered ratio", Duration::from_secs(60), Box::new(criterion_3)),
        ("centered embedding inequalities", Duration::from_secs(10), Box::new(criterion_4)),
        ("rounding sandwich", Duration::from_secs(60), Box::new(criterion_5)),
        ("end-to-end pipeline", Duration::from_secs(300), Box::new(criterion_6)),
        ("tree DP exactness", Duration::from_secs(60), Box::new(criterion_7)),
        ("FRT statistics", Duration::from_secs(10), Box::new(criterion_8)),
        ("Dominating Set reduction", Duration::from_secs(60), Box::new(criterion_9)),
        ("determinism", Duration::from_secs(300), Box::new(move || criterion_10(dir.path()))),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= *limit;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<32} {}  {} [{:.2}s, limit {}s]",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
