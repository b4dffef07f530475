use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use ckm_core::centered::build_centered;
use ckm_core::fpt::{solve_ckm, solve_ckm_uniform, solve_on_centered, CkmSolution};
use ckm_core::harness::experiment::{run_experiment, ExperimentConfig};
use ckm_core::harness::gen::{gen_dominating_set_reduction, gen_random_instance, SimpleGraph};
use ckm_core::harness::io::{read_assignment, read_instance_file, write_assignment, InstanceFile};
use ckm_core::instance::{validate_instance, Facility, Instance, PointId};
use ckm_core::oracle::exact_ckm;
use ckm_core::transport::{optimal_mapping, TransportProblem};
use ckm_core::tree::solve_logk;
use ckm_core::uncap::{bicriteria_greedy, default_max_iters, local_search_kmedian, UncapSolution};
use ckm_core::{Assignment, CkmError, Result};

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_INVALID: u8 = 3;
const EXIT_REFUSED: u8 = 4;
const EXIT_INTERNAL: u8 = 1;

#[derive(Parser)]
#[command(name = "ckm", version, about = "Capacitated k-median solvers and experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file.
    Gen(GenArgs),
    /// Check an instance (and optionally an assignment) for violations.
    Validate {
        instance: PathBuf,
        /// Also check the triangle inequality (cubic time).
        #[arg(long)]
        triangle: bool,
        #[arg(long)]
        assignment: Option<PathBuf>,
    },
    /// Build the centered instance from an uncapacitated seed.
    Center {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = UncapMode::Greedy)]
        mode: UncapMode,
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal client mapping for a fixed open set.
    Assign {
        instance: PathBuf,
        /// Comma-separated facility indices.
        #[arg(long, value_delimiter = ',', required = true)]
        open: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Uncapacitated k-median seed.
    Uncap {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = UncapMode::Greedy)]
        mode: UncapMode,
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Solve capacitated k-median.
    Solve(SolveArgs),
    /// Run an experiment grid from a config file.
    Bench {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = BenchFormat::Table)]
        format: BenchFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long, default_value_t = 4)]
    n_facilities: usize,
    #[arg(long, default_value_t = 8)]
    n_clients: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Capacity range as `LO,HI`.
    #[arg(long, value_parser = parse_range, default_value = "1,4")]
    cap_range: (u32, u32),
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit the Dominating Set reduction of a graph family instead.
    #[arg(long, value_enum)]
    dominating_set: Option<GraphKind>,
    /// Vertex count (leaf count for stars) of the reduction graph.
    #[arg(long, default_value_t = 6)]
    vertices: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = SolveAlgorithm::Fpt)]
    algorithm: SolveAlgorithm,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tree samples for `--algorithm tree`.
    #[arg(long, default_value_t = 8)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print machine-readable records, one JSON object per line.
    #[arg(long)]
    stats: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum UncapMode {
    Greedy,
    LocalSearch,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveAlgorithm {
    Fpt,
    FptUniform,
    Tree,
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchFormat {
    Table,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphKind {
    Path,
    Cycle,
    Star,
    Complete,
    Random,
}

fn parse_range(text: &str) -> std::result::Result<(u32, u32), String> {
    let (lo, hi) = text.split_once(',').ok_or("expected LO,HI")?;
    let parse = |s: &str| s.trim().parse::<u32>().map_err(|e| format!("{s:?}: {e}"));
    Ok((parse(lo)?, parse(hi)?))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => Ok(fs::write(path, text)?),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn load(path: &Path) -> Result<(InstanceFile, Instance)> {
    let file = read_instance_file(path)?;
    let inst = file.to_instance()?;
    Ok((file, inst))
}

fn gen(args: &GenArgs) -> Result<()> {
    let inst = match args.dominating_set {
        Some(kind) => {
            let n = args.vertices;
            let graph = match kind {
                GraphKind::Path => SimpleGraph::path(n),
                GraphKind::Cycle => SimpleGraph::cycle(n),
                GraphKind::Star => SimpleGraph::star(n),
                GraphKind::Complete => SimpleGraph::complete(n),
                GraphKind::Random => SimpleGraph::random_connected(n, 0.3, args.seed),
            };
            gen_dominating_set_reduction(&graph, args.k)?.instance
        }
        None => gen_random_instance(
            args.n_facilities,
            args.n_clients,
            args.k,
            args.cap_range,
            args.seed,
        )?,
    };
    emit(args.out.as_deref(), &InstanceFile::from_instance(&inst)?.to_json())
}

fn validate(instance: &Path, triangle: bool, assignment: Option<&Path>) -> Result<bool> {
    let (_, inst) = load(instance)?;
    let mut problems: Vec<String> = validate_instance(&inst, triangle).iter().map(|v| v.to_string()).collect();
    if let Some(path) = assignment {
        let a = read_assignment(path, &inst)?;
        problems.extend(a.violations(&inst));
        if problems.is_empty() {
            println!("cost {}", a.cost(inst.metric())?);
        }
    }
    for p in &problems {
        println!("violation: {p}");
    }
    if problems.is_empty() {
        println!("ok");
    }
    Ok(problems.is_empty())
}

fn seed_solution(inst: &Instance, mode: UncapMode, k: usize, epsilon: f64) -> Result<UncapSolution> {
    match mode {
        UncapMode::Greedy => bicriteria_greedy(inst, k, epsilon),
        UncapMode::LocalSearch => local_search_kmedian(inst, k, default_max_iters(k, inst.facilities().len())),
    }
}

fn assign(instance: &Path, open: &[usize], out: Option<&Path>) -> Result<()> {
    let (_, inst) = load(instance)?;
    let mut ids: Vec<usize> = open.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let facilities: Vec<Facility> = ids
        .iter()
        .map(|&i| {
            inst.capacity_of(PointId(i))
                .map(|capacity| Facility { id: PointId(i), capacity })
                .ok_or_else(|| CkmError::Structural(format!("{i} is not a facility")))
        })
        .collect::<Result<_>>()?;
    let problem = TransportProblem::from_metric(inst.metric(), inst.clients(), &facilities)?;
    let (a, cost) = optimal_mapping(&problem)?;
    if let Some(path) = out {
        write_assignment(path, &a)?;
    }
    println!("cost {cost}");
    Ok(())
}

fn solve(args: &SolveArgs) -> Result<()> {
    let (file, inst) = load(&args.instance)?;
    let k = args.k.unwrap_or(inst.k());
    let start = Instant::now();
    let (assignment, cost, stats): (Assignment, f64, serde_json::Value) = match args.algorithm {
        SolveAlgorithm::Fpt | SolveAlgorithm::FptUniform => {
            let uniform = matches!(args.algorithm, SolveAlgorithm::FptUniform);
            let sol: CkmSolution = match file.to_centered()? {
                Some(centered) => solve_on_centered(&centered, k, (!uniform).then_some(args.epsilon))?,
                None if uniform => solve_ckm_uniform(&inst, k, args.epsilon)?,
                None => solve_ckm(&inst, k, args.epsilon)?,
            };
            let d = &sol.diagnostics;
            let stats = json!({
                "ell": d.ell,
                "ell_budget": d.ell_budget,
                "uncap_cost": d.uncap_cost,
                "configurations": d.configurations,
                "d_candidates": d.d_candidates,
                "d_pruned": d.d_pruned,
                "cost_d_ell": d.cost_d_ell,
                "cost_rounded": d.cost_rounded,
            });
            (sol.assignment, sol.cost, stats)
        }
        SolveAlgorithm::Tree => {
            let sol = solve_logk(&inst, k, args.samples, args.seed)?;
            let stats = json!({
                "uncap_cost": sol.uncap_cost,
                "cost_tree": sol.cost_tree,
                "cost_d_ell": sol.cost_d_ell,
                "best_sample": sol.best_sample,
                "samples": sol.samples,
            });
            (sol.assignment, sol.cost, stats)
        }
        SolveAlgorithm::Oracle => {
            let (a, cost) = exact_ckm(&inst.with_k(k)?)?;
            (a, cost, json!({}))
        }
    };
    let elapsed = start.elapsed();
    let problems = assignment.violations(&inst.with_k(k)?);
    if !problems.is_empty() {
        return Err(CkmError::Invariant(format!("solver output failed validation: {}", problems.join("; "))));
    }
    if let Some(path) = &args.out {
        write_assignment(path, &assignment)?;
    }
    if args.stats {
        let algorithm = args.algorithm.to_possible_value().expect("named").get_name().to_string();
        let record = json!({
            "record": "result",
            "algorithm": algorithm,
            "k": k,
            "epsilon": args.epsilon,
            "seed": args.seed,
            "cost": cost,
            "open": assignment.open.iter().map(|f| f.0).collect::<Vec<_>>(),
            "stages": stats,
        });
        println!("{record}");
        println!("{}", json!({ "record": "timing", "wall_time_ms": elapsed.as_secs_f64() * 1e3 }));
    } else {
        println!("cost {cost}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen(args) => gen(&args)?,
        Command::Validate { instance, triangle, assignment } => {
            if !validate(&instance, triangle, assignment.as_deref())? {
                return Ok(ExitCode::from(EXIT_INVALID));
            }
        }
        Command::Center { instance, mode, epsilon, k, out } => {
            let (_, inst) = load(&instance)?;
            let k = k.unwrap_or(inst.k());
            let seed = seed_solution(&inst.with_k(k)?, mode, k, epsilon)?;
            let centered = build_centered(&inst, &seed)?;
            emit(out.as_deref(), &InstanceFile::from_centered(&centered)?.to_json())?;
        }
        Command::Assign { instance, open, out } => assign(&instance, &open, out.as_deref())?,
        Command::Uncap { instance, mode, epsilon, k } => {
            let (_, inst) = load(&instance)?;
            let k = k.unwrap_or(inst.k());
            let sol = seed_solution(&inst.with_k(k)?, mode, k, epsilon)?;
            let record = json!({
                "open": sol.open.iter().map(|f| f.0).collect::<Vec<_>>(),
                "psi": sol.psi.iter().map(|f| f.0).collect::<Vec<_>>(),
                "ell_budget": sol.ell_budget,
                "cost": sol.cost,
            });
            println!("{record}");
        }
        Command::Solve(args) => solve(&args)?,
        Command::Bench { config, format, out } => {
            let report = run_experiment(&ExperimentConfig::read(&config)?)?;
            let text = match format {
                BenchFormat::Table => report.to_table(),
                BenchFormat::Json => report.to_json_lines(),
            };
            emit(out.as_deref(), text.trim_end())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(e: &CkmError) -> u8 {
    match e {
        CkmError::Infeasible { .. } => EXIT_INFEASIBLE,
        CkmError::RefusedScale(_) => EXIT_REFUSED,
        CkmError::Structural(_) | CkmError::Disconnected { .. } | CkmError::Parse(_) | CkmError::Io(_) => EXIT_INVALID,
        CkmError::Invariant(_) => EXIT_INTERNAL,
    }
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var("CKM_THREADS") else { return Ok(()) };
    let n: usize = raw.trim().parse().map_err(|_| format!("CKM_THREADS must be a non-negative integer, got {raw:?}"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INVALID) } else { ExitCode::SUCCESS };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_INVALID);
    }
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
