//! Single-step selection, single-step pruning and k-step pruning drivers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical_opt::{brute_force_qubo, dual_anneal, local_minimize_with, simulated_annealing_qubo, AnnealOptions, LocalOptions, TracePoint};
use crate::convex_qp::{solve_full, solve_reduced};
use crate::error::{Error, Result};
use crate::qubo_encode::{
    add_hard_cardinality, add_soft_cardinality, default_penalty, pruning_objective, selection_objective, to_ising, QuboProblem, SelectionMask,
};
use crate::qvsim::{sample, AnsatzKind, AnsatzSpec, SampleSet, VariationalObjective};
use crate::seed;
use crate::track_model::TrackingProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Local,
    Dual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariationalConfig {
    pub ansatz: AnsatzKind,
    pub layers: usize,
    pub optimizer: OptimizerKind,
    /// Shots drawn from the optimized state.
    pub n_meas: u64,
    /// Outer iterations of dual annealing.
    pub maxiter: usize,
    /// Final trust radius of the local optimizer.
    pub tol: f64,
    /// Final trust radius of the polish that ends dual annealing.
    pub polish_tol: f64,
    pub max_evaluations: usize,
    /// Optimize the shot-noise estimate instead of the exact expectation.
    pub sampled_objective: bool,
}

impl Default for VariationalConfig {
    fn default() -> Self {
        Self {
            ansatz: AnsatzKind::Qaoa,
            layers: 2,
            optimizer: OptimizerKind::Dual,
            n_meas: 100,
            maxiter: 10,
            tol: 0.01,
            polish_tol: 1e-4,
            max_evaluations: 2000,
            sampled_objective: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverKind {
    BruteForce,
    SimulatedAnnealing { reads: usize, sweeps: usize },
    Variational(VariationalConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverBackend {
    #[serde(flatten)]
    pub kind: SolverKind,
    pub seed: u64,
}

impl SolverBackend {
    pub fn brute_force() -> Self {
        Self { kind: SolverKind::BruteForce, seed: 0 }
    }

    pub fn annealing(reads: usize, sweeps: usize, seed: u64) -> Self {
        Self { kind: SolverKind::SimulatedAnnealing { reads, sweeps }, seed }
    }

    pub fn variational(cfg: VariationalConfig, seed: u64) -> Self {
        Self { kind: SolverKind::Variational(cfg), seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintMode {
    /// Quadratic penalty; the default weight is recomputed for every QUBO.
    Hard { penalty: Option<f64> },
    /// Chemical potential ending at `lambda` on the last pruning step.
    Soft { lambda: f64 },
}

impl Default for ConstraintMode {
    fn default() -> Self {
        ConstraintMode::Hard { penalty: None }
    }
}

/// Lowest-energy feasible sample, or a greedy repair of the closest one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSelection {
    pub mask: SelectionMask,
    pub energy: f64,
    pub repaired: bool,
}

/// Picks the lowest-energy sample with popcount `d` under `qubo`, ties by lowest
/// basis index. Without a feasible sample, the sample closest in cardinality is
/// driven to popcount `d` by cheapest single-bit flips and flagged as repaired.
pub fn select_best_feasible(samples: &SampleSet, qubo: &QuboProblem, d: usize) -> Result<FeasibleSelection> {
    if samples.records.is_empty() {
        return Err(Error::invalid("sample set is empty"));
    }
    if samples.n != qubo.n() {
        return Err(Error::invalid("sample width does not match the QUBO"));
    }
    let scored: Vec<(SelectionMask, f64)> = samples
        .records
        .iter()
        .map(|r| {
            let m = SelectionMask::from_index(r.index, samples.n);
            let e = qubo.energy(&m);
            (m, e)
        })
        .collect();
    let best_by = |items: &mut dyn Iterator<Item = &(SelectionMask, f64)>| {
        items.min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.to_index().cmp(&b.0.to_index()))).cloned()
    };
    if let Some((mask, energy)) = best_by(&mut scored.iter().filter(|(m, _)| m.popcount() == d)) {
        return Ok(FeasibleSelection { mask, energy, repaired: false });
    }
    let closest = scored.iter().map(|(m, _)| m.popcount().abs_diff(d)).min().expect("nonempty");
    let (start, _) = best_by(&mut scored.iter().filter(|(m, _)| m.popcount().abs_diff(d) == closest)).expect("nonempty");
    let mask = greedy_repair(qubo, start, d);
    let energy = qubo.energy(&mask);
    Ok(FeasibleSelection { mask, energy, repaired: true })
}

/// Adds or removes one bit at a time, always the cheapest, until popcount `d`.
pub fn greedy_repair(qubo: &QuboProblem, mut mask: SelectionMask, d: usize) -> SelectionMask {
    while mask.popcount() != d {
        let adding = mask.popcount() < d;
        let i = (0..mask.len())
            .filter(|&i| mask.get(i) != adding)
            .min_by(|&a, &b| qubo.flip_delta(&mask, a).total_cmp(&qubo.flip_delta(&mask, b)).then(a.cmp(&b)))
            .expect("a flippable bit exists");
        mask.set(i, adding);
    }
    mask
}

/// Result of the variational loop on one QUBO.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalRun {
    pub params: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    pub samples: SampleSet,
    pub trace: Vec<TracePoint>,
}

/// Spread of the diagonal used to bring QAOA phases to order one.
fn phase_scale(energies: &[f64]) -> f64 {
    let n = energies.len() as f64;
    let mean = energies.iter().sum::<f64>() / n;
    let sd = (energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd > 0.0 {
        sd
    } else {
        1.0
    }
}

/// Optimizes the ansatz parameters against the Ising form of `qubo`, then samples.
pub fn run_variational(qubo: &QuboProblem, d: Option<usize>, cfg: &VariationalConfig, seed: u64) -> Result<VariationalRun> {
    let spec = AnsatzSpec::new(cfg.ansatz, cfg.layers, qubo.n(), if cfg.ansatz == AnsatzKind::SwapNetwork { d } else { None })?;
    let ising = to_ising(qubo);
    let scale = phase_scale(&ising.energy_table());
    let objective = VariationalObjective::new(spec, &ising, scale)?.with_shots(cfg.sampled_objective.then_some(cfg.n_meas));
    let bounds = spec.bounds();
    let mut calls = 0u64;
    let noise_seed = seed::derive(seed, 1);
    let f = |theta: &[f64]| {
        calls += 1;
        objective.evaluate(theta, seed::derive(noise_seed, calls)).unwrap_or(f64::INFINITY)
    };
    let result = match cfg.optimizer {
        OptimizerKind::Local => {
            let mut rng = seed::child_rng(seed, 0);
            let x0: Vec<f64> = bounds.iter().map(|&(lo, hi)| rand::Rng::random_range(&mut rng, lo..hi)).collect();
            let opts = LocalOptions { tol: cfg.tol, max_evaluations: cfg.max_evaluations, bounds: Some(bounds.clone()), ..LocalOptions::default() };
            local_minimize_with(f, &x0, &opts)?
        }
        OptimizerKind::Dual => {
            let opts = AnnealOptions {
                maxiter: cfg.maxiter,
                seed: seed::derive(seed, 2),
                polish: Some(LocalOptions { tol: cfg.polish_tol, max_evaluations: cfg.max_evaluations, ..LocalOptions::default() }),
                ..AnnealOptions::default()
            };
            dual_anneal(f, &bounds, &opts)?
        }
    };
    let state = objective.state(&result.best_params)?;
    let mut samples = sample(&state, cfg.n_meas, seed::derive(seed, 3))?;
    samples.attach_energies(objective.energies());
    Ok(VariationalRun { params: result.best_params, best_value: result.best_value, evaluations: result.n_evaluations, samples, trace: result.trace })
}

/// Outcome of the combinatorial stage on one QUBO.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub mask: SelectionMask,
    /// Energy of `mask` under the unpenalized objective.
    pub energy: f64,
    pub repaired: bool,
    pub evaluations: usize,
    pub penalty: Option<f64>,
    pub lambda: Option<f64>,
    /// Mean popcount of the samples behind the chosen mask.
    pub sampled_mean_d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<SampleSet>,
}

/// Best of `repetitions` backend runs choosing `d` variables of `base`.
/// Runs are compared by the energy of their selected mask under `base`.
pub fn solve_cardinality(
    base: &QuboProblem,
    d: usize,
    constraint: ConstraintMode,
    backend: &SolverBackend,
    repetitions: usize,
) -> Result<StepOutcome> {
    let n = base.n();
    if d == 0 || d > n {
        return Err(Error::invalid(format!("cardinality {d} outside [1, {n}]")));
    }
    if repetitions == 0 {
        return Err(Error::invalid("at least one repetition is required"));
    }
    let swap = matches!(&backend.kind, SolverKind::Variational(c) if c.ansatz == AnsatzKind::SwapNetwork);
    let (qubo, penalty, lambda) = match constraint {
        ConstraintMode::Hard { .. } if swap => (base.clone(), None, None),
        ConstraintMode::Hard { penalty } => {
            let p = penalty.unwrap_or_else(|| default_penalty(base));
            (add_hard_cardinality(base, d, p)?, Some(p), None)
        }
        ConstraintMode::Soft { lambda } => (add_soft_cardinality(base, lambda), None, Some(lambda)),
    };

    if let SolverKind::BruteForce = backend.kind {
        let (mask, _) = brute_force_qubo(&qubo, Some(d))?;
        let energy = base.energy(&mask);
        let evaluations = crate::classical_opt::binomial(n, d) as usize;
        return Ok(StepOutcome { mask, energy, repaired: false, evaluations, penalty, lambda, sampled_mean_d: None, samples: None });
    }

    let runs: Vec<(FeasibleSelection, usize, SampleSet)> = (0..repetitions)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = seed::derive(backend.seed, rep as u64);
            let (samples, evaluations) = match &backend.kind {
                SolverKind::SimulatedAnnealing { reads, sweeps } => (simulated_annealing_qubo(&qubo, *reads, *sweeps, rep_seed)?, reads * sweeps * n),
                SolverKind::Variational(cfg) => {
                    let run = run_variational(&qubo, Some(d), cfg, rep_seed)?;
                    (run.samples, run.evaluations)
                }
                SolverKind::BruteForce => unreachable!(),
            };
            let pick = select_best_feasible(&samples, base, d)?;
            Ok((pick, evaluations, samples))
        })
        .collect::<Result<_>>()?;

    let evaluations = runs.iter().map(|r| r.1).sum();
    let (pick, _, samples) = runs
        .into_iter()
        .min_by(|a, b| a.0.repaired.cmp(&b.0.repaired).then(a.0.energy.total_cmp(&b.0.energy)).then(a.0.mask.to_index().cmp(&b.0.mask.to_index())))
        .expect("at least one repetition");
    Ok(StepOutcome {
        mask: pick.mask,
        energy: pick.energy,
        repaired: pick.repaired,
        evaluations,
        penalty,
        lambda,
        sampled_mean_d: Some(mean_popcount(&samples)),
        samples: Some(samples),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneSchedule {
    pub n_start: usize,
    pub d_target: usize,
    pub step_size: usize,
    pub r0: usize,
    /// Growth of the repetition count: `r ← r0 + alpha·r`.
    pub alpha: f64,
    #[serde(default)]
    pub constraint: ConstraintMode,
}

impl PruneSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.d_target < 1 || self.d_target >= self.n_start {
            return Err(Error::invalid(format!("target {} must lie in [1, {})", self.d_target, self.n_start)));
        }
        if self.step_size < 1 || self.r0 < 1 {
            return Err(Error::invalid("step size and base repetitions must be at least 1"));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid("repetition growth must be finite and non-negative"));
        }
        if let ConstraintMode::Soft { lambda } = self.constraint {
            if !lambda.is_finite() {
                return Err(Error::invalid("chemical potential must be finite"));
            }
        }
        if let ConstraintMode::Hard { penalty: Some(p) } = self.constraint {
            if !(p > 0.0) {
                return Err(Error::invalid("penalty must be positive"));
            }
        }
        Ok(())
    }

    /// `(cardinality, repetitions)` per step.
    pub fn plan(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let (mut d, mut r) = (self.n_start, 0.0);
        while d > self.d_target {
            r = self.r0 as f64 + self.alpha * r;
            d = self.d_target.max(d.saturating_sub(self.step_size));
            out.push((d, (r.round() as usize).max(1)));
        }
        out
    }

    pub fn total_repetitions(&self) -> usize {
        self.plan().iter().map(|s| s.1).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneStep {
    pub universe: Vec<usize>,
    pub d: usize,
    pub chosen: Vec<usize>,
    pub reduced_t_err: f64,
    pub repetitions: usize,
    pub evaluations: usize,
    pub repaired: bool,
    pub penalty: Option<f64>,
    pub lambda: Option<f64>,
    pub sampled_mean_d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneResult {
    pub method: String,
    pub mask: SelectionMask,
    pub weights: Vec<f64>,
    pub t_err: f64,
    /// Unconstrained optimum over the full universe.
    pub full_t_err: f64,
    pub steps: Vec<PruneStep>,
    pub total_repetitions: usize,
    pub total_evaluations: usize,
    pub backend: SolverBackend,
    pub step_rule: String,
}

impl PruneResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

const STEP_RULE: &str = "d_next = max(d_target, d - step_size)";

fn trivial_full(problem: &TrackingProblem, method: &str, backend: &SolverBackend) -> PruneResult {
    let full = solve_full(problem);
    PruneResult {
        method: method.into(),
        mask: SelectionMask::ones(problem.n()),
        weights: full.weights,
        t_err: full.objective,
        full_t_err: full.objective,
        steps: Vec::new(),
        total_repetitions: 0,
        total_evaluations: 0,
        backend: backend.clone(),
        step_rule: STEP_RULE.into(),
    }
}

/// Chooses `d` assets from the unweighted selection objective, then fits weights.
pub fn solve_1sa(
    problem: &TrackingProblem,
    d: usize,
    constraint: ConstraintMode,
    backend: &SolverBackend,
    repetitions: usize,
) -> Result<PruneResult> {
    let n = problem.n();
    if d == 0 || d > n {
        return Err(Error::invalid(format!("cardinality {d} outside [1, {n}]")));
    }
    if d == n {
        return Ok(trivial_full(problem, "1-SA", backend));
    }
    let full = solve_full(problem);
    let out = solve_cardinality(&selection_objective(problem), d, constraint, backend, repetitions)?;
    let sol = solve_reduced(problem, &out.mask)?;
    let chosen = out.mask.indices();
    Ok(PruneResult {
        method: "1-SA".into(),
        mask: out.mask,
        weights: sol.weights,
        t_err: sol.objective,
        full_t_err: full.objective,
        steps: vec![PruneStep {
            universe: (0..n).collect(),
            d,
            chosen,
            reduced_t_err: sol.objective,
            repetitions,
            evaluations: out.evaluations,
            repaired: out.repaired,
            penalty: out.penalty,
            lambda: out.lambda,
            sampled_mean_d: out.sampled_mean_d,
        }],
        total_repetitions: repetitions,
        total_evaluations: out.evaluations,
        backend: backend.clone(),
        step_rule: STEP_RULE.into(),
    })
}

/// One pruning step from the full universe straight to `d`.
pub fn solve_1pa(
    problem: &TrackingProblem,
    d: usize,
    constraint: ConstraintMode,
    backend: &SolverBackend,
    repetitions: usize,
) -> Result<PruneResult> {
    let n = problem.n();
    if d == 0 || d > n {
        return Err(Error::invalid(format!("cardinality {d} outside [1, {n}]")));
    }
    if d == n {
        return Ok(trivial_full(problem, "1-PA", backend));
    }
    let schedule = PruneSchedule { n_start: n, d_target: d, step_size: n - d, r0: repetitions, alpha: 0.0, constraint };
    let mut result = solve_kpa(problem, &schedule, backend)?;
    result.method = "1-PA".into();
    Ok(result)
}

/// Iterative pruning: each step re-weights the pruning objective with the
/// reduced convex optimum of the surviving universe.
pub fn solve_kpa(problem: &TrackingProblem, schedule: &PruneSchedule, backend: &SolverBackend) -> Result<PruneResult> {
    schedule.validate()?;
    let n = problem.n();
    if schedule.n_start != n {
        return Err(Error::invalid(format!("schedule starts from {} assets, problem has {n}", schedule.n_start)));
    }
    let plan = schedule.plan();
    let full = solve_full(problem);
    let mut universe: Vec<usize> = (0..n).collect();
    let mut weights = full.weights.clone();
    let mut t_err = full.objective;
    let mut steps = Vec::with_capacity(plan.len());
    let k = plan.len();

    for (step, &(d, repetitions)) in plan.iter().enumerate() {
        let sub = problem.restrict(&universe);
        let w_sub: Vec<f64> = universe.iter().map(|&i| weights[i]).collect();
        let constraint = match schedule.constraint {
            ConstraintMode::Soft { lambda } if k > 1 => {
                let frac = step as f64 / (k - 1) as f64;
                ConstraintMode::Soft { lambda: lambda * 2f64.powf(1.0 - frac) }
            }
            c => c,
        };
        let step_backend = SolverBackend { kind: backend.kind.clone(), seed: seed::derive(backend.seed, step as u64) };
        let out = solve_cardinality(&pruning_objective(&sub, &w_sub), d, constraint, &step_backend, repetitions).map_err(|e| match e {
            Error::Solver(m) => Error::Solver(format!("pruning step {} ({} → {d}): {m}", step + 1, universe.len())),
            other => other,
        })?;
        let next: Vec<usize> = out.mask.indices().iter().map(|&i| universe[i]).collect();
        let mask = SelectionMask::from_indices(n, &next);
        let sol = solve_reduced(problem, &mask)?;
        weights = sol.weights;
        t_err = sol.objective;
        steps.push(PruneStep {
            universe: universe.clone(),
            d,
            chosen: next.clone(),
            reduced_t_err: t_err,
            repetitions,
            evaluations: out.evaluations,
            repaired: out.repaired,
            penalty: out.penalty,
            lambda: out.lambda,
            sampled_mean_d: out.sampled_mean_d,
        });
        universe = next;
    }

    Ok(PruneResult {
        method: format!("{k}-PA"),
        mask: SelectionMask::from_indices(n, &universe),
        weights,
        t_err,
        full_t_err: full.objective,
        total_repetitions: steps.iter().map(|s| s.repetitions).sum(),
        total_evaluations: steps.iter().map(|s| s.evaluations).sum(),
        steps,
        backend: backend.clone(),
        step_rule: STEP_RULE.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    pub variational: VariationalConfig,
    pub grid_points: usize,
    /// Grid spans `[lo_factor·S, hi_factor·S]`, `S = max_i |q_ii| / D_ii²`.
    pub lo_factor: f64,
    pub hi_factor: f64,
    pub bisection_steps: usize,
    pub band: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            variational: VariationalConfig { ansatz: AnsatzKind::Qaoa, ..VariationalConfig::default() },
            grid_points: 10,
            lo_factor: 1e-3,
            hi_factor: 10.0,
            bisection_steps: 12,
            band: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub lambda: f64,
    pub mean_d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub lambda_star: f64,
    pub mean_d: f64,
    pub reached: bool,
    pub non_monotone: bool,
    /// Grid evaluations in increasing λ.
    pub curve: Vec<CurvePoint>,
    /// Every λ probed, grid and bisection, in probe order.
    pub probes: Vec<CurvePoint>,
}

/// Shot-weighted mean popcount.
pub fn mean_popcount(samples: &SampleSet) -> f64 {
    let total: u64 = samples.records.iter().map(|r| r.count * r.index.count_ones() as u64).sum();
    total as f64 / samples.total_shots as f64
}

/// Mean sampled popcount of the optimized variational state at chemical potential `lambda`.
pub fn mean_cardinality(base: &QuboProblem, lambda: f64, cfg: &VariationalConfig, seed: u64) -> Result<f64> {
    let run = run_variational(&add_soft_cardinality(base, lambda), None, cfg, seed)?;
    Ok(mean_popcount(&run.samples))
}

/// `max_i |q_ii| / D_ii²` over scaled variables, `max_i |q_ii|` for raw QUBOs.
pub fn diagonal_scale(base: &QuboProblem) -> f64 {
    let q = base.q();
    let s = (0..base.n())
        .filter_map(|i| match base.scaling() {
            Some(w) if w[i] * w[i] > 0.0 => Some(q[(i, i)].abs() / (w[i] * w[i])),
            Some(_) => None,
            None => Some(q[(i, i)].abs()),
        })
        .fold(0.0, f64::max);
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Finds λ whose sampled mean cardinality is within the band of `d_target`.
/// All probes share one seed.
pub fn calibrate_lambda(problem: &TrackingProblem, weights: &[f64], d_target: usize, opts: &CalibrationOptions, seed: u64) -> Result<Calibration> {
    let n = problem.n();
    if d_target == 0 || d_target > n {
        return Err(Error::invalid(format!("target {d_target} outside [1, {n}]")));
    }
    if weights.len() != n {
        return Err(Error::invalid("weight vector length must equal the asset count"));
    }
    if opts.grid_points < 2 || !(opts.lo_factor > 0.0) || !(opts.hi_factor > opts.lo_factor) {
        return Err(Error::invalid("calibration grid needs at least two points and 0 < lo < hi"));
    }
    let base = pruning_objective(problem, weights);
    let scale = diagonal_scale(&base);
    let (lo, hi) = ((opts.lo_factor * scale).ln(), (opts.hi_factor * scale).ln());
    let grid: Vec<f64> = (0..opts.grid_points).map(|i| (lo + (hi - lo) * i as f64 / (opts.grid_points - 1) as f64).exp()).collect();
    let target = d_target as f64;

    let curve: Vec<CurvePoint> = grid
        .par_iter()
        .map(|&lambda| Ok(CurvePoint { lambda, mean_d: mean_cardinality(&base, lambda, &opts.variational, seed)? }))
        .collect::<Result<_>>()?;
    let non_monotone = curve.windows(2).any(|w| w[1].mean_d > w[0].mean_d + opts.band);
    let mut probes = curve.clone();
    let closest = |pts: &[CurvePoint]| {
        *pts.iter()
            .min_by(|a, b| (a.mean_d - target).abs().total_cmp(&(b.mean_d - target).abs()).then(a.lambda.total_cmp(&b.lambda)))
            .expect("nonempty")
    };
    let mut best = closest(&probes);

    if (best.mean_d - target).abs() > opts.band && !non_monotone {
        if let Some(i) = curve.windows(2).position(|w| w[0].mean_d >= target && w[1].mean_d <= target) {
            let (mut a, mut b) = (curve[i].lambda.ln(), curve[i + 1].lambda.ln());
            for _ in 0..opts.bisection_steps {
                let mid = 0.5 * (a + b);
                let lambda = mid.exp();
                let p = CurvePoint { lambda, mean_d: mean_cardinality(&base, lambda, &opts.variational, seed)? };
                probes.push(p);
                if (p.mean_d - target).abs() <= opts.band {
                    break;
                }
                if p.mean_d > target {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            best = closest(&probes);
        }
    }
    Ok(Calibration { lambda_star: best.lambda, mean_d: best.mean_d, reached: (best.mean_d - target).abs() <= opts.band, non_monotone, curve, probes })
}
