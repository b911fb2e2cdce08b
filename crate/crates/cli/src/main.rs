use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use cardprune::bench::{run_experiment, ExperimentConfig};
use cardprune::classical_opt::brute_force_tracking;
use cardprune::convex_qp::{solve_full, solve_reduced};
use cardprune::pruner::{
    calibrate_lambda, run_variational, solve_1pa, solve_cardinality, solve_kpa, CalibrationOptions, ConstraintMode, OptimizerKind, PruneSchedule,
    SolverBackend, SolverKind, VariationalConfig,
};
use cardprune::qubo_encode::{pruning_objective, selection_objective, QuboProblem};
use cardprune::qvsim::AnsatzKind;
use cardprune::track_model::{align_index_csv, problem_from_prices, synthetic_problem, PriceTable, SyntheticConfig, TrackingProblem};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "cardprune", version, about = "Cardinality-constrained index tracking by QUBO pruning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a tracking problem from one day of a price CSV.
    BuildProblem {
        #[arg(long)]
        prices: PathBuf,
        /// Index column of the price CSV, or a `timestamp,index` CSV file.
        #[arg(long)]
        index: String,
        /// Date prefix selecting the window, e.g. 2019-06-17.
        #[arg(long)]
        window: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic factor-model problem.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one cardinality-constrained selection.
    Solve {
        #[arg(long, conflicts_with = "qubo", required_unless_present = "qubo")]
        problem: Option<PathBuf>,
        #[arg(long)]
        qubo: Option<PathBuf>,
        #[arg(long)]
        d: usize,
        /// Objective built from a tracking problem.
        #[arg(long, value_enum, default_value_t = Objective::Pruning)]
        objective: Objective,
        #[command(flatten)]
        backend: BackendArgs,
        /// Repetitions of the backend; the best feasible result is kept.
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optimizer trace CSV for variational methods.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Iterative pruning down to a target cardinality.
    Prune {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        d_target: usize,
        #[arg(long)]
        step: usize,
        #[arg(long, default_value_t = 1)]
        r0: usize,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find the chemical potential whose sampled mean cardinality hits the target.
    CalibrateLambda {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        d_target: usize,
        #[arg(long, value_enum, default_value_t = Method::Qaoa)]
        ansatz: Method,
        #[arg(long, value_enum, default_value_t = Optimizer::Dual)]
        optimizer: Optimizer,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 100)]
        shots: u64,
        #[arg(long, default_value_t = 10)]
        maxiter: usize,
        #[arg(long, default_value_t = 10)]
        grid: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Curve CSV of `lambda,mean_d`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment configuration and write trials.csv and summary.json.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Objective {
    Selection,
    Pruning,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Method {
    Brute,
    Sa,
    Vqe,
    Qaoa,
    Swap,
}

#[derive(Clone, Copy, ValueEnum)]
enum Optimizer {
    Local,
    Dual,
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, alias = "backend", value_enum, default_value_t = Method::Brute)]
    method: Method,
    /// `hard`, `hard:P` or `soft:LAMBDA`.
    #[arg(long, default_value = "hard")]
    constraint: String,
    #[arg(long, value_enum, default_value_t = Optimizer::Dual)]
    optimizer: Optimizer,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 100)]
    shots: u64,
    #[arg(long, default_value_t = 10)]
    maxiter: usize,
    #[arg(long, default_value_t = 100)]
    reads: usize,
    #[arg(long, default_value_t = 1000)]
    sweeps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl BackendArgs {
    fn variational(&self, ansatz: AnsatzKind) -> VariationalConfig {
        VariationalConfig {
            ansatz,
            layers: self.layers,
            optimizer: optimizer_kind(self.optimizer),
            n_meas: self.shots,
            maxiter: self.maxiter,
            ..VariationalConfig::default()
        }
    }

    fn backend(&self) -> SolverBackend {
        let kind = match self.method {
            Method::Brute => SolverKind::BruteForce,
            Method::Sa => SolverKind::SimulatedAnnealing { reads: self.reads, sweeps: self.sweeps },
            Method::Vqe => SolverKind::Variational(self.variational(AnsatzKind::VqeRy)),
            Method::Qaoa => SolverKind::Variational(self.variational(AnsatzKind::Qaoa)),
            Method::Swap => SolverKind::Variational(self.variational(AnsatzKind::SwapNetwork)),
        };
        SolverBackend { kind, seed: self.seed }
    }
}

fn optimizer_kind(o: Optimizer) -> OptimizerKind {
    match o {
        Optimizer::Local => OptimizerKind::Local,
        Optimizer::Dual => OptimizerKind::Dual,
    }
}

fn parse_constraint(text: &str) -> Result<ConstraintMode> {
    let bad = || cardprune::Error::Invalid(format!("constraint must be hard, hard:P or soft:LAMBDA, got {text:?}"));
    let (kind, value) = match text.split_once(':') {
        Some((k, v)) => (k, Some(v.parse::<f64>().map_err(|_| bad())?)),
        None => (text, None),
    };
    Ok(match (kind, value) {
        ("hard", p) => ConstraintMode::Hard { penalty: p },
        ("soft", Some(lambda)) => ConstraintMode::Soft { lambda },
        _ => return Err(bad().into()),
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn load_index(table: &mut PriceTable, index: &str) -> Result<Vec<f64>> {
    if let Some(col) = table.take_column(index) {
        return Ok(col);
    }
    let index_table = PriceTable::load(Path::new(index))?;
    Ok(align_index_csv(table, &index_table)?)
}

#[derive(Serialize)]
struct SolveReport {
    bitstring: String,
    selected: Vec<usize>,
    energy: f64,
    repaired: bool,
    evaluations: usize,
    penalty: Option<f64>,
    lambda: Option<f64>,
    sampled_mean_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_err: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_err_opt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<cardprune::qvsim::SampleSet>,
}

#[allow(clippy::too_many_arguments)]
fn solve(
    problem: Option<PathBuf>,
    qubo: Option<PathBuf>,
    d: usize,
    objective: Objective,
    backend_args: &BackendArgs,
    repetitions: usize,
    out: Option<PathBuf>,
    trace: Option<PathBuf>,
) -> Result<()> {
    let constraint = parse_constraint(&backend_args.constraint)?;
    let backend = backend_args.backend();
    let tracking = problem.as_deref().map(TrackingProblem::load).transpose()?;
    let base = match (&tracking, qubo) {
        (Some(p), _) => match objective {
            Objective::Selection => selection_objective(p),
            Objective::Pruning => pruning_objective(p, &solve_full(p).weights),
        },
        (None, Some(path)) => QuboProblem::from_json(&std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?)?,
        (None, None) => bail!(cardprune::Error::Invalid("either --problem or --qubo is required".into())),
    };
    let outcome = solve_cardinality(&base, d, constraint, &backend, repetitions)?;
    if let (Some(path), SolverKind::Variational(cfg)) = (trace, &backend.kind) {
        let run = run_variational(&base_for_trace(&base, d, constraint, cfg)?, Some(d), cfg, cardprune::seed::derive(backend.seed, 0))?;
        let result = cardprune::classical_opt::OptimizeResult {
            best_params: run.params,
            best_value: run.best_value,
            n_evaluations: run.evaluations,
            converged: true,
            trace: run.trace,
        };
        result.write_trace_csv(std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?)?;
    }
    let (weights, t_err, t_err_opt) = match &tracking {
        Some(p) => {
            let sol = solve_reduced(p, &outcome.mask)?;
            let opt = brute_force_tracking(p, d).ok().map(|o| o.tracking_error);
            (Some(sol.weights), Some(sol.objective), opt)
        }
        None => (None, None, None),
    };
    let report = SolveReport {
        bitstring: outcome.mask.to_bitstring(),
        selected: outcome.mask.indices(),
        energy: outcome.energy,
        repaired: outcome.repaired,
        evaluations: outcome.evaluations,
        penalty: outcome.penalty,
        lambda: outcome.lambda,
        sampled_mean_d: outcome.sampled_mean_d,
        weights,
        t_err,
        t_err_opt,
        samples: outcome.samples,
    };
    match out {
        Some(path) => write_json(&report, &path),
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

/// The QUBO the variational loop sees for the first repetition.
fn base_for_trace(base: &QuboProblem, d: usize, constraint: ConstraintMode, cfg: &VariationalConfig) -> Result<QuboProblem> {
    use cardprune::qubo_encode::{add_hard_cardinality, add_soft_cardinality, default_penalty};
    Ok(match constraint {
        ConstraintMode::Hard { .. } if cfg.ansatz == AnsatzKind::SwapNetwork => base.clone(),
        ConstraintMode::Hard { penalty } => add_hard_cardinality(base, d, penalty.unwrap_or_else(|| default_penalty(base)))?,
        ConstraintMode::Soft { lambda } => add_soft_cardinality(base, lambda),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildProblem { prices, index, window, out } => {
            let mut table = PriceTable::load(&prices).with_context(|| format!("reading {}", prices.display()))?;
            let index_prices = load_index(&mut table, &index)?;
            let keep: Vec<usize> = (0..table.timestamps.len()).filter(|&r| table.timestamps[r].starts_with(&window)).collect();
            if keep.is_empty() {
                bail!(cardprune::Error::Invalid(format!("no rows match window {window}")));
            }
            let idx: Vec<f64> = keep.iter().map(|&r| index_prices[r]).collect();
            let problem = problem_from_prices(&table.window(&window), &idx)?;
            std::fs::write(&out, problem.to_json()? + "\n").with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Synth { config, seed, out } => {
            let cfg = match config {
                Some(path) => SyntheticConfig::load(&path)?,
                None => SyntheticConfig::default(),
            };
            let problem = synthetic_problem(&cfg, seed)?;
            std::fs::write(&out, problem.to_json()? + "\n").with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Solve { problem, qubo, d, objective, backend, repetitions, out, trace } => {
            solve(problem, qubo, d, objective, &backend, repetitions, out, trace)?;
        }
        Command::Prune { problem, d_target, step, r0, alpha, backend, out } => {
            let p = TrackingProblem::load(&problem)?;
            let constraint = parse_constraint(&backend.constraint)?;
            let b = backend.backend();
            let result = if d_target == p.n() {
                solve_1pa(&p, d_target, constraint, &b, r0)?
            } else {
                let schedule = PruneSchedule { n_start: p.n(), d_target, step_size: step, r0, alpha, constraint };
                solve_kpa(&p, &schedule, &b)?
            };
            std::fs::write(&out, result.to_json()? + "\n").with_context(|| format!("writing {}", out.display()))?;
        }
        Command::CalibrateLambda { problem, d_target, ansatz, optimizer, layers, shots, maxiter, grid, seed, out } => {
            let p = TrackingProblem::load(&problem)?;
            let kind = match ansatz {
                Method::Vqe => AnsatzKind::VqeRy,
                Method::Qaoa => AnsatzKind::Qaoa,
                _ => bail!(cardprune::Error::Invalid("calibration needs --ansatz vqe or qaoa".into())),
            };
            let opts = CalibrationOptions {
                variational: VariationalConfig {
                    ansatz: kind,
                    layers,
                    optimizer: optimizer_kind(optimizer),
                    n_meas: shots,
                    maxiter,
                    ..VariationalConfig::default()
                },
                grid_points: grid,
                ..CalibrationOptions::default()
            };
            let weights = solve_full(&p).weights;
            let cal = calibrate_lambda(&p, &weights, d_target, &opts, seed)?;
            let mut csv = String::from("lambda,mean_d\n");
            for pt in &cal.curve {
                csv.push_str(&format!("{},{}\n", pt.lambda, pt.mean_d));
            }
            std::fs::write(&out, csv).with_context(|| format!("writing {}", out.display()))?;
            #[derive(Serialize)]
            struct Star {
                lambda_star: f64,
                mean_d: f64,
                reached: bool,
                non_monotone: bool,
            }
            let star = Star { lambda_star: cal.lambda_star, mean_d: cal.mean_d, reached: cal.reached, non_monotone: cal.non_monotone };
            println!("{}", serde_json::to_string_pretty(&star)?);
        }
        Command::Bench { config, out_dir } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let base_dir = config.parent().map(Path::to_path_buf).unwrap_or_default();
            let dir = out_dir
                .or_else(|| cfg.output_dir.as_ref().map(|d| base_dir.join(d)))
                .ok_or_else(|| anyhow!(cardprune::Error::Invalid("no output directory: pass --out-dir or set output_dir".into())))?;
            let output = run_experiment(&cfg, &base_dir)?;
            output.write(&dir)?;
            let failures = output.records.iter().filter(|r| r.error.is_some()).count();
            if failures > 0 {
                log::warn!("{failures} of {} trials failed; see the error column", output.records.len());
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<cardprune::Error>() {
            return if e.is_validation() { 2 } else { 3 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let mut parts: Vec<String> = Vec::new();
            for cause in err.chain() {
                let text = cause.to_string();
                if !parts.last().is_some_and(|prev| prev.contains(&text)) {
                    parts.push(text);
                }
            }
            eprintln!("error: {}", parts.join(": "));
            ExitCode::from(exit_code(&err))
        }
    }
}
