//! Experiment harness: trial tables, summaries and the statistics behind them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::classical_opt::{brute_force_tracking, TrackingOptimum};
use crate::error::{Error, Result};
use crate::pruner::{solve_1pa, solve_1sa, solve_kpa, ConstraintMode, PruneResult, PruneSchedule, SolverBackend, SolverKind};
use crate::seed;
use crate::track_model::{align_index_csv, problem_from_prices, synthetic_problem, PriceTable, SyntheticConfig, TrackingProblem};

/// `(value − optimum)/optimum`.
pub fn relative_error(value: f64, optimum: f64) -> Result<f64> {
    if !(optimum > 0.0) {
        return Err(Error::invalid(format!("relative error needs a positive optimum, got {optimum}")));
    }
    Ok((value - optimum) / optimum)
}

/// `(value − optimum)/|optimum|`, for objectives whose optimum may be negative.
pub fn objective_gap(value: f64, optimum: f64) -> Result<f64> {
    if optimum == 0.0 || !optimum.is_finite() {
        return Err(Error::invalid(format!("objective gap needs a finite nonzero optimum, got {optimum}")));
    }
    Ok((value - optimum) / optimum.abs())
}

/// Sample correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("correlation needs two series of equal length ≥ 2"));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("correlation is undefined for a constant series"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSum {
    /// Mann-Whitney U of the first sample.
    pub statistic: f64,
    pub p_value: f64,
    pub exact: bool,
}

fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon rank-sum test: exact permutation distribution of the
/// midrank sum up to 12 pooled values, tie-corrected normal approximation above.
pub fn ranksum_test(a: &[f64], b: &[f64]) -> Result<RankSum> {
    if a.len() < 3 || b.len() < 3 {
        return Err(Error::invalid("rank-sum test needs at least three values per sample"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("rank-sum test needs finite values"));
    }
    let (m, n) = (a.len(), b.len());
    let total = m + n;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let w: f64 = ranks[..m].iter().sum();
    let u = w - (m * (m + 1)) as f64 / 2.0;
    let mean_w = m as f64 * (total + 1) as f64 / 2.0;

    if total <= 12 {
        let observed = (w - mean_w).abs();
        let (mut extreme, mut count) = (0u64, 0u64);
        for subset in 0u32..1 << total {
            if subset.count_ones() as usize != m {
                continue;
            }
            let s: f64 = (0..total).filter(|&i| subset >> i & 1 == 1).map(|i| ranks[i]).sum();
            count += 1;
            if (s - mean_w).abs() >= observed - 1e-9 {
                extreme += 1;
            }
        }
        return Ok(RankSum { statistic: u, p_value: extreme as f64 / count as f64, exact: true });
    }

    let (mf, nf, tf) = (m as f64, n as f64, total as f64);
    let mut ties = 0.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        ties += (j * j * j - j) as f64;
        i += j;
    }
    let var = mf * nf / 12.0 * ((tf + 1.0) - ties / (tf * (tf - 1.0)));
    if var <= 0.0 {
        return Ok(RankSum { statistic: u, p_value: 1.0, exact: false });
    }
    let z = ((u - mf * nf / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    let p = (2.0 * (1.0 - normal.cdf(z))).min(1.0);
    Ok(RankSum { statistic: u, p_value: p, exact: false })
}

/// The median of a non-empty sample.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn default_windows() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSource {
    /// Independent synthetic universes, one per window.
    Synthetic {
        #[serde(default)]
        config: SyntheticConfig,
        #[serde(default = "default_windows")]
        windows: usize,
    },
    /// Daily windows of a price CSV; `index` names a column of `prices` or a separate CSV.
    Csv {
        prices: PathBuf,
        index: String,
        #[serde(default)]
        dates: Option<Vec<String>>,
        #[serde(default = "default_windows")]
        windows: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Algorithm {
    /// Exhaustive search over supports; the baseline itself.
    Exact,
    #[serde(rename = "1sa")]
    SingleSelection {
        #[serde(default = "one")]
        repetitions: usize,
    },
    #[serde(rename = "1pa")]
    SinglePruning {
        #[serde(default = "one")]
        repetitions: usize,
    },
    #[serde(rename = "kpa")]
    Iterative { step_size: usize, r0: usize, alpha: f64 },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub id: String,
    pub algorithm: Algorithm,
    #[serde(default = "brute_backend")]
    pub backend: SolverKind,
    #[serde(default)]
    pub constraint: ConstraintMode,
}

fn brute_backend() -> SolverKind {
    SolverKind::BruteForce
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: ProblemSource,
    pub methods: Vec<MethodSpec>,
    pub d_values: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Overrides the shot count of every variational method.
    #[serde(default)]
    pub n_meas: Option<u64>,
    #[serde(default)]
    pub master_seed: u64,
    /// Wall time is nondeterministic and is left empty unless requested.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.seeds.is_empty() || self.d_values.is_empty() {
            return Err(Error::invalid("experiment needs at least one method, seed and cardinality"));
        }
        let mut ids = std::collections::HashSet::new();
        for m in &self.methods {
            if !ids.insert(m.id.as_str()) {
                return Err(Error::invalid(format!("duplicate method id {}", m.id)));
            }
        }
        if self.d_values.contains(&0) {
            return Err(Error::invalid("cardinalities must be at least 1"));
        }
        match &self.source {
            ProblemSource::Synthetic { config, windows } => {
                config.validate()?;
                if *windows == 0 {
                    return Err(Error::invalid("at least one window is required"));
                }
                if let Some(&d) = self.d_values.iter().find(|&&d| d > config.n_assets) {
                    return Err(Error::invalid(format!("cardinality {d} exceeds {} assets", config.n_assets)));
                }
            }
            ProblemSource::Csv { windows, .. } => {
                if *windows == 0 {
                    return Err(Error::invalid("at least one window is required"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: String,
    pub method: String,
    pub window: String,
    pub seed: u64,
    pub d: usize,
    pub t_err: Option<f64>,
    pub t_err_opt: Option<f64>,
    pub delta: Option<f64>,
    pub n_evaluations: Option<usize>,
    pub feasible: Option<bool>,
    pub optimal: Option<bool>,
    pub wall_time_s: Option<f64>,
    pub sampled_mean_d: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    /// `None` aggregates every cardinality.
    pub d: Option<usize>,
    pub trials: usize,
    pub failures: usize,
    pub median_delta: Option<f64>,
    pub mean_delta: Option<f64>,
    pub median_evaluations: Option<f64>,
    pub mean_evaluations: Option<f64>,
    pub optimum_probability: Option<f64>,
    pub feasible_fraction: Option<f64>,
    pub median_wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub a: String,
    pub b: String,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub methods: Vec<MethodSummary>,
    pub pairwise: Vec<PairwiseTest>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Summary,
}

impl ExperimentOutput {
    /// Writes `trials.csv` and `summary.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_trials_csv(&self.records, std::fs::File::create(dir.join("trials.csv"))?)?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&self.summary)? + "\n")?;
        Ok(())
    }
}

pub fn write_trials_csv<W: std::io::Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trials_csv<R: std::io::Read>(input: R) -> Result<Vec<TrialRecord>> {
    csv::Reader::from_reader(input).deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Aggregates per method overall and per `(method, d)`, plus rank-sum tests on Δ
/// between every pair of methods. Method order follows first appearance.
pub fn summarize(records: &[TrialRecord]) -> Summary {
    let mut order: Vec<String> = Vec::new();
    for r in records {
        if !order.contains(&r.method) {
            order.push(r.method.clone());
        }
    }
    let group = |method: &str, d: Option<usize>| {
        let rows: Vec<&TrialRecord> = records.iter().filter(|r| r.method == method && d.is_none_or(|d| r.d == d)).collect();
        let ok: Vec<&TrialRecord> = rows.iter().copied().filter(|r| r.error.is_none()).collect();
        let deltas: Vec<f64> = ok.iter().filter_map(|r| r.delta).collect();
        let evals: Vec<f64> = ok.iter().filter_map(|r| r.n_evaluations.map(|e| e as f64)).collect();
        let optimal: Vec<f64> = ok.iter().filter_map(|r| r.optimal.map(|o| f64::from(u8::from(o)))).collect();
        let feasible: Vec<f64> = ok.iter().filter_map(|r| r.feasible.map(|o| f64::from(u8::from(o)))).collect();
        let times: Vec<f64> = ok.iter().filter_map(|r| r.wall_time_s).collect();
        MethodSummary {
            method: method.to_string(),
            d,
            trials: rows.len(),
            failures: rows.len() - ok.len(),
            median_delta: median(&deltas),
            mean_delta: mean(&deltas),
            median_evaluations: median(&evals),
            mean_evaluations: mean(&evals),
            optimum_probability: mean(&optimal),
            feasible_fraction: mean(&feasible),
            median_wall_time_s: median(&times),
        }
    };
    let mut ds: Vec<usize> = records.iter().map(|r| r.d).collect();
    ds.sort_unstable();
    ds.dedup();
    let mut methods = Vec::new();
    for m in &order {
        methods.push(group(m, None));
        if ds.len() > 1 {
            for &d in &ds {
                methods.push(group(m, Some(d)));
            }
        }
    }
    let deltas = |m: &str| -> Vec<f64> { records.iter().filter(|r| r.method == m && r.error.is_none()).filter_map(|r| r.delta).collect() };
    let mut pairwise = Vec::new();
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            if let Ok(t) = ranksum_test(&deltas(&order[i]), &deltas(&order[j])) {
                pairwise.push(PairwiseTest { a: order[i].clone(), b: order[j].clone(), statistic: t.statistic, p_value: t.p_value });
            }
        }
    }
    Summary { methods, pairwise }
}

struct Window {
    id: String,
    problem: Result<TrackingProblem>,
}

fn load_windows(cfg: &ExperimentConfig, base_dir: &Path) -> Result<Vec<Window>> {
    match &cfg.source {
        ProblemSource::Synthetic { config, windows } => Ok((0..*windows)
            .map(|i| Window { id: format!("syn{i:04}"), problem: synthetic_problem(config, seed::derive(cfg.master_seed, i as u64)) })
            .collect()),
        ProblemSource::Csv { prices, index, dates, windows } => {
            let mut table = PriceTable::load(&base_dir.join(prices))?;
            let index_prices = match table.take_column(index) {
                Some(col) => col,
                None => align_index_csv(&table, &PriceTable::load(&base_dir.join(index))?)?,
            };
            let chosen: Vec<String> = match dates {
                Some(d) => d.clone(),
                None => table.dates().into_iter().take(*windows).collect(),
            };
            Ok(chosen
                .into_iter()
                .map(|date| {
                    let keep: Vec<usize> = (0..table.timestamps.len()).filter(|&r| table.timestamps[r].starts_with(&date)).collect();
                    let idx: Vec<f64> = keep.iter().map(|&r| index_prices[r]).collect();
                    Window { problem: problem_from_prices(&table.window(&date), &idx), id: date }
                })
                .collect())
        }
    }
}

fn run_method(problem: &TrackingProblem, method: &MethodSpec, d: usize, backend: &SolverBackend, baseline: &TrackingOptimum) -> Result<PruneResult> {
    match &method.algorithm {
        Algorithm::Exact => Ok(PruneResult {
            method: method.id.clone(),
            mask: baseline.mask.clone(),
            weights: baseline.weights.clone(),
            t_err: baseline.tracking_error,
            full_t_err: f64::NAN,
            steps: Vec::new(),
            total_repetitions: 0,
            total_evaluations: crate::classical_opt::binomial(problem.n(), d) as usize,
            backend: backend.clone(),
            step_rule: String::new(),
        }),
        Algorithm::SingleSelection { repetitions } => solve_1sa(problem, d, method.constraint, backend, *repetitions),
        Algorithm::SinglePruning { repetitions } => solve_1pa(problem, d, method.constraint, backend, *repetitions),
        Algorithm::Iterative { step_size, r0, alpha } => {
            if d == problem.n() {
                return solve_1pa(problem, d, method.constraint, backend, *r0);
            }
            let schedule =
                PruneSchedule { n_start: problem.n(), d_target: d, step_size: *step_size, r0: *r0, alpha: *alpha, constraint: method.constraint };
            solve_kpa(problem, &schedule, backend)
        }
    }
}

/// Runs every (window, d, seed, method) trial on the thread pool; failures
/// are recorded in the table and the run continues.
pub fn run_experiment(cfg: &ExperimentConfig, base_dir: &Path) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let windows = load_windows(cfg, base_dir)?;
    let baselines: BTreeMap<(usize, usize), std::result::Result<TrackingOptimum, String>> = windows
        .par_iter()
        .enumerate()
        .flat_map_iter(|(wi, w)| cfg.d_values.iter().map(move |&d| (wi, w, d)))
        .map(|(wi, w, d)| {
            let r = match &w.problem {
                Ok(p) => brute_force_tracking(p, d).map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            ((wi, d), r)
        })
        .collect();

    let mut jobs = Vec::new();
    for (wi, _) in windows.iter().enumerate() {
        for &d in &cfg.d_values {
            for (si, &s) in cfg.seeds.iter().enumerate() {
                for mi in 0..cfg.methods.len() {
                    jobs.push((wi, d, si, s, mi));
                }
            }
        }
    }

    let mut records: Vec<TrialRecord> = jobs
        .into_par_iter()
        .map(|(wi, d, si, s, mi)| {
            let window = &windows[wi];
            let method = &cfg.methods[mi];
            let mut rec = TrialRecord {
                trial_id: format!("{wi:04}-{d:03}-{si:04}-{mi:03}"),
                method: method.id.clone(),
                window: window.id.clone(),
                seed: s,
                d,
                t_err: None,
                t_err_opt: None,
                delta: None,
                n_evaluations: None,
                feasible: None,
                optimal: None,
                wall_time_s: None,
                sampled_mean_d: None,
                error: None,
            };
            let baseline = match &baselines[&(wi, d)] {
                Ok(b) => b,
                Err(e) => {
                    rec.error = Some(format!("baseline: {e}"));
                    return rec;
                }
            };
            let problem = window.problem.as_ref().expect("baseline implies a problem");
            rec.t_err_opt = Some(baseline.tracking_error);
            let mut kind = method.backend.clone();
            if let (SolverKind::Variational(v), Some(shots)) = (&mut kind, cfg.n_meas) {
                v.n_meas = shots;
            }
            let trial_seed = seed::derive(seed::derive(seed::derive(cfg.master_seed, wi as u64), d as u64), s);
            let backend = SolverBackend { kind, seed: trial_seed };
            let start = Instant::now();
            let outcome = run_method(problem, method, d, &backend, baseline);
            let elapsed = start.elapsed().as_secs_f64();
            match outcome {
                Ok(r) => {
                    rec.t_err = Some(r.t_err);
                    rec.n_evaluations = Some(r.total_evaluations.max(1));
                    rec.feasible = Some(r.steps.iter().all(|s| !s.repaired));
                    rec.optimal = Some(r.mask == baseline.mask);
                    rec.sampled_mean_d = r.steps.last().and_then(|s| s.sampled_mean_d);
                    rec.wall_time_s = cfg.record_timing.then_some(elapsed);
                    match relative_error(r.t_err, baseline.tracking_error) {
                        Ok(delta) => rec.delta = Some(delta),
                        Err(_) => rec.error = Some(format!("degenerate optimum; absolute error {}", r.t_err - baseline.tracking_error)),
                    }
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            rec
        })
        .collect();
    records.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));
    let summary = summarize(&records);
    Ok(ExperimentOutput { records, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn relative_error_examples() {
        assert!((relative_error(1.2, 1.0).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(relative_error(1.0, 1.0).unwrap(), 0.0);
        assert!(relative_error(0.3, 0.0).is_err());
        assert!((objective_gap(-0.8, -1.0).unwrap() - 0.2).abs() < 1e-15);
        assert!((objective_gap(1.5, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(objective_gap(1.0, 0.0).is_err());
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn ranksum_exact_examples() {
        let t = ranksum_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert!((t.p_value - 0.1).abs() < 1e-12);
        assert!(t.exact);
        let t = ranksum_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.p_value, 1.0);
        assert!(ranksum_test(&[1.0, 2.0], &[3.0, 4.0, 5.0]).is_err());
    }

    /// Independent oracle: enumerate permutations of the pooled midranks.
    fn permutation_oracle(a: &[f64], b: &[f64]) -> f64 {
        fn permute(items: &mut Vec<f64>, k: usize, out: &mut Vec<Vec<f64>>) {
            if k == items.len() {
                out.push(items.clone());
                return;
            }
            for i in k..items.len() {
                items.swap(k, i);
                permute(items, k + 1, out);
                items.swap(k, i);
            }
        }
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let ranks = midranks(&pooled);
        let m = a.len();
        let mean = m as f64 * (pooled.len() + 1) as f64 / 2.0;
        let obs = (ranks[..m].iter().sum::<f64>() - mean).abs();
        let mut perms = Vec::new();
        permute(&mut ranks.clone(), 0, &mut perms);
        let hits = perms.iter().filter(|p| (p[..m].iter().sum::<f64>() - mean).abs() >= obs - 1e-9).count();
        hits as f64 / perms.len() as f64
    }

    #[test]
    fn ranksum_exact_matches_permutation_oracle() {
        let mut rng = seed::rng(3);
        for _ in 0..20 {
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(0..5) as f64).collect();
            let b: Vec<f64> = (0..4).map(|_| rng.random_range(0..5) as f64).collect();
            let t = ranksum_test(&a, &b).unwrap();
            assert!((t.p_value - permutation_oracle(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn ranksum_normal_is_calibrated() {
        let mut rng = seed::rng(4);
        let mut p: Vec<f64> = (0..1000)
            .map(|_| {
                let a: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
                let b: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
                ranksum_test(&a, &b).unwrap().p_value
            })
            .collect();
        p.sort_by(f64::total_cmp);
        let n = p.len() as f64;
        let ks = p.iter().enumerate().map(|(i, &v)| (v - i as f64 / n).abs().max((v - (i + 1) as f64 / n).abs())).fold(0.0, f64::max);
        assert!(ks < 0.05, "KS distance {ks}");
    }

    #[test]
    fn ranksum_detects_shift() {
        let a: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..30).map(|i| i as f64 + 20.0).collect();
        assert!(ranksum_test(&a, &b).unwrap().p_value < 1e-4);
    }

    fn synthetic_config(methods: Vec<MethodSpec>) -> ExperimentConfig {
        ExperimentConfig {
            source: ProblemSource::Synthetic { config: SyntheticConfig { n_assets: 8, ..SyntheticConfig::default() }, windows: 4 },
            methods,
            d_values: vec![3, 4],
            seeds: vec![1, 2],
            n_meas: None,
            master_seed: 7,
            record_timing: false,
            output_dir: None,
        }
    }

    fn method(id: &str, algorithm: Algorithm, backend: SolverKind) -> MethodSpec {
        MethodSpec { id: id.into(), algorithm, backend, constraint: ConstraintMode::default() }
    }

    #[test]
    fn exact_method_has_zero_delta() {
        let cfg = synthetic_config(vec![method("exact", Algorithm::Exact, SolverKind::BruteForce)]);
        let out = run_experiment(&cfg, Path::new(".")).unwrap();
        assert_eq!(out.records.len(), 4 * 2 * 2);
        assert!(out.records.iter().all(|r| r.delta == Some(0.0) && r.optimal == Some(true)));
        assert_eq!(out.summary.methods[0].median_delta, Some(0.0));
    }

    #[test]
    fn experiment_is_deterministic_and_summary_recomputes() {
        let cfg = synthetic_config(vec![
            method("1pa", Algorithm::SinglePruning { repetitions: 2 }, SolverKind::SimulatedAnnealing { reads: 5, sweeps: 100 }),
            method("2pa", Algorithm::Iterative { step_size: 3, r0: 1, alpha: 1.0 }, SolverKind::SimulatedAnnealing { reads: 5, sweeps: 100 }),
            method("1sa", Algorithm::SingleSelection { repetitions: 1 }, SolverKind::BruteForce),
        ]);
        let a = run_experiment(&cfg, Path::new(".")).unwrap();
        let b = run_experiment(&cfg, Path::new(".")).unwrap();
        assert_eq!(a.records, b.records);
        assert!(a.records.iter().all(|r| r.delta.unwrap() >= -1e-9 && r.n_evaluations.unwrap() >= 1));
        assert!(a.records.windows(2).all(|w| w[0].trial_id < w[1].trial_id));

        let dir = tempfile::tempdir().unwrap();
        a.write(dir.path()).unwrap();
        let back = read_trials_csv(std::fs::File::open(dir.path().join("trials.csv")).unwrap()).unwrap();
        assert_eq!(back, a.records);
        let summary: Summary = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summarize(&back), summary);
        assert_eq!(summary.pairwise.len(), 3);
        assert!(summary.methods.iter().any(|m| m.d == Some(3)));
    }

    #[test]
    fn matched_budget_schedules_summarize_per_k() {
        let sa = SolverKind::SimulatedAnnealing { reads: 1, sweeps: 50 };
        let mut cfg = synthetic_config(vec![
            method("1-PA", Algorithm::Iterative { step_size: 10, r0: 120, alpha: 0.0 }, sa.clone()),
            method("2-PA", Algorithm::Iterative { step_size: 5, r0: 20, alpha: 4.0 }, sa.clone()),
            method("3-PA", Algorithm::Iterative { step_size: 4, r0: 20, alpha: 1.0 }, sa),
        ]);
        cfg.source = ProblemSource::Synthetic { config: SyntheticConfig { n_assets: 15, ..SyntheticConfig::default() }, windows: 2 };
        cfg.d_values = vec![5];
        cfg.seeds = vec![0];
        let out = run_experiment(&cfg, Path::new(".")).unwrap();
        let ids: Vec<&str> = out.summary.methods.iter().map(|m| m.method.as_str()).collect();
        assert_eq!(ids, vec!["1-PA", "2-PA", "3-PA"]);
        assert!(out.summary.methods.iter().all(|m| m.median_delta.is_some()));
        assert!(out.records.iter().all(|r| r.error.is_none()));
    }

    #[test]
    fn identical_methods_are_indistinguishable() {
        let sa = SolverKind::SimulatedAnnealing { reads: 3, sweeps: 50 };
        let mut cfg = synthetic_config(vec![
            method("a", Algorithm::SinglePruning { repetitions: 1 }, sa.clone()),
            method("b", Algorithm::SinglePruning { repetitions: 1 }, sa),
        ]);
        cfg.seeds = vec![1, 2, 3];
        let out = run_experiment(&cfg, Path::new(".")).unwrap();
        assert!(out.summary.pairwise[0].p_value > 0.05);
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let mut cfg = synthetic_config(vec![method(
            "1pa",
            Algorithm::SinglePruning { repetitions: 0 },
            SolverKind::SimulatedAnnealing { reads: 2, sweeps: 10 },
        )]);
        cfg.d_values = vec![3];
        let out = run_experiment(&cfg, Path::new(".")).unwrap();
        assert!(out.records.iter().all(|r| r.error.is_some()));
        assert_eq!(out.summary.methods[0].failures, out.records.len());
    }

    #[test]
    fn config_validation() {
        let mut cfg = synthetic_config(vec![]);
        assert!(cfg.validate().is_err());
        cfg.methods = vec![method("x", Algorithm::Exact, SolverKind::BruteForce), method("x", Algorithm::Exact, SolverKind::BruteForce)];
        assert!(cfg.validate().is_err());
        cfg.methods.pop();
        cfg.d_values = vec![9];
        assert!(cfg.validate().is_err());
        let json = r#"{"source":{"kind":"synthetic"},"methods":[{"id":"e","algorithm":{"kind":"exact"}}],"d_values":[3],"seeds":[0]}"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert!(cfg.validate().is_ok());
        assert!(matches!(cfg.source, ProblemSource::Synthetic { windows: 20, .. }));
    }

    #[test]
    fn csv_source_builds_daily_windows() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::from("timestamp,A,B,C,IDX\n");
        let mut rng = seed::rng(5);
        for day in ["2020-01-02", "2020-01-03"] {
            let mut p = [10.0, 20.0, 30.0];
            for minute in 0..12 {
                for v in &mut p {
                    *v *= 1.0 + 0.01 * (rng.random::<f64>() - 0.5);
                }
                let idx = 0.2 * p[0] + 0.3 * p[1] + 0.5 * p[2] + rng.random::<f64>() * 0.01;
                text.push_str(&format!("{day}T10:{minute:02},{},{},{},{idx}\n", p[0], p[1], p[2]));
            }
        }
        std::fs::write(dir.path().join("prices.csv"), text).unwrap();
        let cfg = ExperimentConfig {
            source: ProblemSource::Csv { prices: "prices.csv".into(), index: "IDX".into(), dates: None, windows: 20 },
            methods: vec![method("exact", Algorithm::Exact, SolverKind::BruteForce)],
            d_values: vec![2],
            seeds: vec![0],
            n_meas: None,
            master_seed: 0,
            record_timing: true,
            output_dir: None,
        };
        let out = run_experiment(&cfg, dir.path()).unwrap();
        let windows: Vec<&str> = out.records.iter().map(|r| r.window.as_str()).collect();
        assert_eq!(windows, vec!["2020-01-02", "2020-01-03"]);
        assert!(out.records.iter().all(|r| r.wall_time_s.is_some()));
    }
}
