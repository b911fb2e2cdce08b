//! Derivative-free parameter optimizers and classical QUBO baselines.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convex_qp::solve_reduced;
use crate::error::{Error, Result};
use crate::qubo_encode::{QuboProblem, SelectionMask};
use crate::qvsim::{SampleRecord, SampleSet};
use crate::seed;
use crate::track_model::TrackingProblem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub evaluation: usize,
    pub value: f64,
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub best_params: Vec<f64>,
    pub best_value: f64,
    pub n_evaluations: usize,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

impl OptimizeResult {
    /// Writes `evaluation,value,best` rows.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for p in &self.trace {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Counts calls and tracks the incumbent; non-finite values rank as `+∞`.
struct Counted<F> {
    f: F,
    calls: usize,
    best_x: Vec<f64>,
    best: f64,
    trace: Vec<TracePoint>,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn new(f: F) -> Self {
        Self { f, calls: 0, best_x: Vec::new(), best: f64::INFINITY, trace: Vec::new() }
    }

    fn call(&mut self, x: &[f64]) -> f64 {
        let raw = (self.f)(x);
        self.calls += 1;
        let v = if raw.is_finite() { raw } else { f64::INFINITY };
        if v < self.best || self.best_x.is_empty() {
            self.best = v;
            self.best_x = x.to_vec();
        }
        self.trace.push(TracePoint { evaluation: self.calls, value: raw, best: self.best });
        v
    }

    fn finish(self, converged: bool) -> OptimizeResult {
        OptimizeResult { best_params: self.best_x, best_value: self.best, n_evaluations: self.calls, converged, trace: self.trace }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalOptions {
    /// Final trust radius.
    pub tol: f64,
    /// Cap on objective calls.
    pub max_evaluations: usize,
    /// Initial trust radius and simplex spacing.
    pub rho_begin: f64,
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl Default for LocalOptions {
    fn default() -> Self {
        Self { tol: 0.01, max_evaluations: 2000, rho_begin: 0.5, bounds: None }
    }
}

/// Linear-model trust-region minimization with default spacing and no bounds.
pub fn local_minimize<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], tol: f64, max_evaluations: usize) -> Result<OptimizeResult> {
    local_minimize_with(f, x0, &LocalOptions { tol, max_evaluations, ..LocalOptions::default() })
}

pub fn local_minimize_with<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], opts: &LocalOptions) -> Result<OptimizeResult> {
    check_local(x0, opts)?;
    let mut ev = Counted::new(f);
    let converged = trust_region(&mut ev, x0, opts)?;
    Ok(ev.finish(converged))
}

fn check_local(x0: &[f64], opts: &LocalOptions) -> Result<()> {
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("starting point must be finite"));
    }
    if !(opts.tol > 0.0) || !(opts.rho_begin > 0.0) {
        return Err(Error::invalid("tolerance and initial radius must be positive"));
    }
    if opts.max_evaluations == 0 {
        return Err(Error::invalid("evaluation cap must be at least 1"));
    }
    if let Some(b) = &opts.bounds {
        check_bounds(b)?;
        if b.len() != x0.len() {
            return Err(Error::invalid("bounds and starting point differ in length"));
        }
    }
    Ok(())
}

fn check_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::invalid(format!("bound {i} is not a finite interval with lo < hi: [{lo}, {hi}]")));
        }
    }
    Ok(())
}

fn clamp_into(x: &mut [f64], bounds: Option<&Vec<(f64, f64)>>) {
    if let Some(b) = bounds {
        for (v, &(lo, hi)) in x.iter_mut().zip(b) {
            *v = v.clamp(lo, hi);
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Simplex of `n + 1` interpolation points; the linear model through them
/// supplies a descent direction, the step length is the trust radius.
fn trust_region<F: FnMut(&[f64]) -> f64>(ev: &mut Counted<F>, x0: &[f64], opts: &LocalOptions) -> Result<bool> {
    let n = x0.len();
    let bounds = opts.bounds.as_ref();
    let mut start = x0.to_vec();
    clamp_into(&mut start, bounds);
    let f0 = ev.call(&start);
    if !f0.is_finite() {
        return Err(Error::invalid("objective is not finite at the starting point"));
    }
    if n == 0 {
        return Ok(true);
    }
    let rho_max = match bounds {
        Some(b) => b.iter().map(|(lo, hi)| 0.5 * (hi - lo)).fold(opts.rho_begin, f64::min),
        None => opts.rho_begin,
    };
    let mut rho = rho_max;
    let mut pts = vec![start.clone()];
    let mut vals = vec![f0];
    let axis_point = |base: &[f64], i: usize, rho: f64| {
        let mut y = base.to_vec();
        let up = bounds.is_none_or(|b| y[i] + rho <= b[i].1);
        y[i] += if up { rho } else { -rho };
        y
    };
    for i in 0..n {
        if ev.calls >= opts.max_evaluations {
            return Ok(false);
        }
        let y = axis_point(&start, i, rho);
        vals.push(ev.call(&y));
        pts.push(y);
    }

    loop {
        if rho < opts.tol {
            return Ok(true);
        }
        if ev.calls >= opts.max_evaluations {
            return Ok(false);
        }
        let b = (0..=n).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap();
        let others: Vec<usize> = (0..=n).filter(|&i| i != b).collect();
        let d = DMatrix::from_fn(n, n, |r, c| pts[others[c]][r] - pts[b][r]);
        let df = DVector::from_iterator(n, others.iter().map(|&i| vals[i] - vals[b]));
        let lu = d.clone().lu();
        let grad = match d.transpose().lu().solve(&df) {
            Some(g) if g.iter().all(|v| v.is_finite()) && df.iter().all(|v| v.is_finite()) => g,
            _ => {
                // Degenerate or non-finite model: rebuild the simplex around the incumbent.
                let base = pts[b].clone();
                let fb = vals[b];
                pts = vec![base.clone()];
                vals = vec![fb];
                for i in 0..n {
                    if ev.calls >= opts.max_evaluations {
                        return Ok(false);
                    }
                    let y = axis_point(&base, i, rho);
                    vals.push(ev.call(&y));
                    pts.push(y);
                }
                continue;
            }
        };

        let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
        if let Some(bd) = bounds {
            for i in 0..n {
                let (lo, hi) = bd[i];
                if (pts[b][i] <= lo && dir[i] < 0.0) || (pts[b][i] >= hi && dir[i] > 0.0) {
                    dir[i] = 0.0;
                }
            }
        }
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let far = others.iter().map(|&i| dist(&pts[i], &pts[b])).fold(0.0, f64::max);

        if norm == 0.0 {
            rho *= 0.5;
            continue;
        }
        let mut trial: Vec<f64> = pts[b].iter().zip(&dir).map(|(x, v)| x + rho * v / norm).collect();
        clamp_into(&mut trial, bounds);
        let step = DVector::from_iterator(n, trial.iter().zip(&pts[b]).map(|(t, x)| t - x));
        let step_len = step.norm();
        if step_len == 0.0 {
            rho *= 0.5;
            continue;
        }
        let predicted = -grad.dot(&step);
        let ft = ev.call(&trial);
        let ratio = (vals[b] - ft) / predicted;

        // Volume factor of swapping each vertex for the trial point.
        let c = lu.solve(&step).unwrap_or_else(|| DVector::zeros(n));
        let mut factor = vec![0.0; n + 1];
        factor[b] = (1.0 - c.sum()).abs();
        for (k, &i) in others.iter().enumerate() {
            factor[i] = c[k].abs();
        }

        if ft < vals[b] {
            let j = (0..=n).max_by(|&i, &k| factor[i].total_cmp(&factor[k])).unwrap();
            pts[j] = trial;
            vals[j] = ft;
            if ratio > 0.75 && step_len >= 0.99 * rho {
                rho = (2.0 * rho).min(rho_max);
            }
            continue;
        }

        let worst = (0..=n).max_by(|&i, &k| vals[i].total_cmp(&vals[k])).unwrap();
        if ft < vals[worst] && factor[worst] > 0.1 {
            pts[worst] = trial;
            vals[worst] = ft;
        }
        if far > 2.0 * rho {
            // Pull the farthest vertex back in along the direction that best restores volume.
            let k = (0..n).max_by(|&p, &q| dist(&pts[others[p]], &pts[b]).total_cmp(&dist(&pts[others[q]], &pts[b]))).unwrap();
            let j = others[k];
            let d = DMatrix::from_fn(n, n, |r, c| pts[others[c]][r] - pts[b][r]);
            let Some(inv) = d.try_inverse() else {
                rho *= 0.5;
                continue;
            };
            let mut v: Vec<f64> = inv.row(k).iter().copied().collect();
            let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if vn == 0.0 || !vn.is_finite() {
                rho *= 0.5;
                continue;
            }
            let sign = if grad.iter().zip(&v).map(|(g, x)| g * x).sum::<f64>() > 0.0 { -1.0 } else { 1.0 };
            v.iter_mut().for_each(|x| *x *= sign * rho / vn);
            let mut y: Vec<f64> = pts[b].iter().zip(&v).map(|(x, s)| x + s).collect();
            clamp_into(&mut y, bounds);
            if ev.calls >= opts.max_evaluations {
                return Ok(false);
            }
            vals[j] = ev.call(&y);
            pts[j] = y;
        } else if ratio < 0.1 {
            rho *= 0.5;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealOptions {
    pub maxiter: usize,
    pub seed: u64,
    /// Starting point; drawn uniformly inside the bounds when absent.
    pub x0: Option<Vec<f64>>,
    pub visit: f64,
    pub accept: f64,
    pub initial_temp: f64,
    pub restart_temp_ratio: f64,
    /// Cap on annealing evaluations, excluding the final polish.
    pub max_evaluations: usize,
    pub polish: Option<LocalOptions>,
}

impl Default for AnnealOptions {
    fn default() -> Self {
        Self {
            maxiter: 1000,
            seed: 0,
            x0: None,
            visit: 2.62,
            accept: -5.0,
            initial_temp: 5230.0,
            restart_temp_ratio: 2e-5,
            max_evaluations: 10_000_000,
            polish: Some(LocalOptions { tol: 1e-4, ..LocalOptions::default() }),
        }
    }
}

/// Heavy-tailed visiting distribution of generalized simulated annealing.
struct Visiting {
    qv: f64,
    factor4_p: f64,
    factor6: f64,
}

const TAIL_LIMIT: f64 = 1e8;
const MIN_VISIT_BOUND: f64 = 1e-10;

impl Visiting {
    fn new(qv: f64) -> Self {
        let factor2 = ((4.0 - qv) * (qv - 1.0).ln()).exp();
        let factor3 = ((2.0 - qv) * 2f64.ln() / (qv - 1.0)).exp();
        let factor4_p = std::f64::consts::PI.sqrt() * factor2 / (factor3 * (3.0 - qv));
        let factor5 = 1.0 / (qv - 1.0) - 0.5;
        let d1 = 2.0 - factor5;
        let pi = std::f64::consts::PI;
        let factor6 = pi * (1.0 - factor5) / (pi * (1.0 - factor5)).sin() / statrs::function::gamma::ln_gamma(d1).exp();
        Self { qv, factor4_p, factor6 }
    }

    fn draw(&self, temperature: f64, rng: &mut ChaCha8Rng) -> f64 {
        let qv = self.qv;
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        let factor1 = (temperature.ln() / (qv - 1.0)).exp();
        let factor4 = self.factor4_p * factor1;
        let sigma = (-(qv - 1.0) * (self.factor6 / factor4).ln() / (3.0 - qv)).exp();
        let den = ((qv - 1.0) * y.abs().ln() / (3.0 - qv)).exp();
        let v = x * sigma / den;
        if v > TAIL_LIMIT {
            TAIL_LIMIT * rng.random::<f64>()
        } else if v < -TAIL_LIMIT {
            -TAIL_LIMIT * rng.random::<f64>()
        } else {
            v
        }
    }
}

fn wrap(v: f64, lo: f64, hi: f64) -> f64 {
    let range = hi - lo;
    let mut w = ((v - lo) % range + range) % range + lo;
    if (w - lo).abs() < MIN_VISIT_BOUND {
        w += MIN_VISIT_BOUND;
    }
    if !(w >= lo && w <= hi) {
        lo + 0.5 * range
    } else {
        w
    }
}

/// Generalized simulated annealing over a box, then one local polish from the incumbent.
pub fn dual_anneal<F: FnMut(&[f64]) -> f64>(f: F, bounds: &[(f64, f64)], opts: &AnnealOptions) -> Result<OptimizeResult> {
    check_bounds(bounds)?;
    if bounds.is_empty() {
        return Err(Error::invalid("at least one dimension is required"));
    }
    if let Some(x0) = &opts.x0 {
        if x0.len() != bounds.len() || x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("starting point must be finite and match the bounds"));
        }
    }
    let dim = bounds.len();
    let mut rng = seed::rng(opts.seed);
    let visiting = Visiting::new(opts.visit);
    let mut ev = Counted::new(f);
    let random_point = |rng: &mut ChaCha8Rng| bounds.iter().map(|&(lo, hi)| lo + rng.random::<f64>() * (hi - lo)).collect::<Vec<_>>();

    let mut current = match &opts.x0 {
        Some(x0) => x0.iter().zip(bounds).map(|(&v, &(lo, hi))| v.clamp(lo, hi)).collect(),
        None => random_point(&mut rng),
    };
    let mut current_e = ev.call(&current);
    let t2 = ((opts.visit - 1.0) * 2f64.ln()).exp() - 1.0;
    let restart_temp = opts.initial_temp * opts.restart_temp_ratio;

    let mut iteration = 0;
    'outer: while iteration < opts.maxiter {
        for i in 0..opts.maxiter {
            if iteration >= opts.maxiter {
                break 'outer;
            }
            let s = i as f64 + 2.0;
            let t1 = ((opts.visit - 1.0) * s.ln()).exp() - 1.0;
            let temperature = opts.initial_temp * t2 / t1;
            if temperature < restart_temp {
                current = random_point(&mut rng);
                current_e = ev.call(&current);
                continue 'outer;
            }
            let temperature_step = temperature / (i as f64 + 1.0);
            for j in 0..2 * dim {
                let mut visit = current.clone();
                if j < dim {
                    for (k, &(lo, hi)) in bounds.iter().enumerate() {
                        visit[k] = wrap(current[k] + visiting.draw(temperature, &mut rng), lo, hi);
                    }
                } else {
                    let k = j - dim;
                    let (lo, hi) = bounds[k];
                    visit[k] = wrap(current[k] + visiting.draw(temperature, &mut rng), lo, hi);
                }
                let e = ev.call(&visit);
                if e < current_e {
                    current = visit;
                    current_e = e;
                } else {
                    let r: f64 = rng.random();
                    let base = 1.0 - (1.0 - opts.accept) * (e - current_e) / temperature_step;
                    let p = if base <= 0.0 { 0.0 } else { (base.ln() / (1.0 - opts.accept)).exp() };
                    if r <= p {
                        current = visit;
                        current_e = e;
                    }
                }
                if ev.calls >= opts.max_evaluations {
                    break 'outer;
                }
            }
            iteration += 1;
        }
    }

    if let Some(polish) = &opts.polish {
        let start = ev.best_x.clone();
        let local = LocalOptions { bounds: Some(bounds.to_vec()), ..polish.clone() };
        trust_region(&mut ev, &start, &local)?;
    }
    Ok(ev.finish(true))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub t_hot: f64,
    pub t_cold: f64,
}

/// Temperatures accepting a typical uphill flip with probability ½ and the
/// smallest uphill flip with probability 10⁻³, estimated from a random walk.
pub fn estimate_schedule(qubo: &QuboProblem, rng: &mut ChaCha8Rng) -> AnnealSchedule {
    let n = qubo.n();
    let mut x = random_mask(n, rng);
    let mut uphill = Vec::new();
    for _ in 0..(20 * n).max(50) {
        let i = rng.random_range(0..n);
        let delta = qubo.flip_delta(&x, i);
        if delta > 0.0 {
            uphill.push(delta);
        }
        x.set(i, !x.get(i));
    }
    if uphill.is_empty() {
        return AnnealSchedule { t_hot: 1.0, t_cold: 1e-3 };
    }
    uphill.sort_by(f64::total_cmp);
    let median = uphill[uphill.len() / 2];
    let smallest = uphill[0];
    let t_hot = median / 2f64.ln();
    let t_cold = (smallest / 1000f64.ln()).min(t_hot);
    AnnealSchedule { t_hot, t_cold }
}

fn random_mask(n: usize, rng: &mut ChaCha8Rng) -> SelectionMask {
    SelectionMask::from_bits((0..n).map(|_| rng.random::<bool>()).collect())
}

/// One Metropolis read with incremental local fields.
fn anneal_read(qubo: &QuboProblem, schedule: AnnealSchedule, sweeps: usize, rng: &mut ChaCha8Rng) -> SelectionMask {
    let n = qubo.n();
    let q = qubo.q();
    let mut x = random_mask(n, rng);
    // field[i] = q_ii + 2 Σ_{j≠i} q_ij x_j
    let mut field: Vec<f64> = (0..n).map(|i| q[(i, i)] + 2.0 * (0..n).filter(|&j| j != i && x.get(j)).map(|j| q[(i, j)]).sum::<f64>()).collect();
    let ratio = schedule.t_cold / schedule.t_hot;
    for sweep in 0..sweeps {
        let frac = if sweeps > 1 { sweep as f64 / (sweeps - 1) as f64 } else { 1.0 };
        let t = schedule.t_hot * ratio.powf(frac);
        for i in 0..n {
            let on = x.get(i);
            let delta = if on { -field[i] } else { field[i] };
            if delta <= 0.0 || rng.random::<f64>() < (-delta / t).exp() {
                x.set(i, !on);
                let s = if on { -2.0 } else { 2.0 };
                for j in 0..n {
                    if j != i {
                        field[j] += s * q[(j, i)];
                    }
                }
            }
        }
    }
    x
}

/// Independent restarts of single-bit-flip annealing; endpoints are aggregated per bitstring.
pub fn simulated_annealing_qubo(qubo: &QuboProblem, reads: usize, sweeps: usize, seed: u64) -> Result<SampleSet> {
    let n = qubo.n();
    if reads == 0 {
        return Err(Error::invalid("reads must be at least 1"));
    }
    if n == 0 || n > 64 {
        return Err(Error::invalid(format!("annealer supports 1 to 64 variables, got {n}")));
    }
    let schedule = estimate_schedule(qubo, &mut seed::child_rng(seed, u64::MAX));
    let ends: Vec<SelectionMask> =
        (0..reads).into_par_iter().map(|r| anneal_read(qubo, schedule, sweeps, &mut seed::child_rng(seed, r as u64))).collect();
    let mut counts = BTreeMap::<u64, u64>::new();
    for m in &ends {
        *counts.entry(m.to_index()).or_default() += 1;
    }
    let records = counts
        .into_iter()
        .map(|(index, count)| SampleRecord {
            bitstring: SelectionMask::from_index(index, n).to_bitstring(),
            index,
            count,
            energy: Some(qubo.energy_of_index(index)),
        })
        .collect();
    Ok(SampleSet { n, total_shots: reads as u64, records })
}

pub const BRUTE_FORCE_MAX_VARIABLES: usize = 26;
pub const BRUTE_FORCE_MAX_SUPPORTS: u128 = 10_000_000;

/// Next larger integer with the same popcount.
fn next_combination(v: u64) -> u64 {
    let t = v | (v - 1);
    (t + 1) | (((!t & (!t).wrapping_neg()) - 1) >> (v.trailing_zeros() + 1))
}

fn combinations(n: usize, d: usize) -> Vec<u64> {
    if d == 0 {
        return vec![0];
    }
    let limit = 1u64 << n;
    let mut out = Vec::new();
    let mut v = (1u64 << d) - 1;
    while v < limit {
        out.push(v);
        v = next_combination(v);
    }
    out
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Exhaustive minimum, optionally over popcount `d` only; ties go to the lowest basis index.
pub fn brute_force_qubo(qubo: &QuboProblem, cardinality: Option<usize>) -> Result<(SelectionMask, f64)> {
    let n = qubo.n();
    if n > BRUTE_FORCE_MAX_VARIABLES {
        return Err(Error::invalid(format!(
            "exhaustive search over {n} variables exceeds the limit of {BRUTE_FORCE_MAX_VARIABLES}; use a heuristic solver"
        )));
    }
    if n == 0 {
        return Err(Error::invalid("QUBO has no variables"));
    }
    let candidates: Vec<u64> = match cardinality {
        Some(d) if d > n => return Err(Error::invalid(format!("cardinality {d} exceeds {n} variables"))),
        Some(d) => combinations(n, d),
        None => (0..1u64 << n).collect(),
    };
    let (e, k) = candidates
        .par_iter()
        .map(|&k| (qubo.energy_of_index(k), k))
        .reduce(|| (f64::INFINITY, u64::MAX), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    Ok((SelectionMask::from_index(k, n), e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingOptimum {
    pub mask: SelectionMask,
    pub weights: Vec<f64>,
    pub tracking_error: f64,
}

/// Best size-`d` support by solving every reduced problem.
pub fn brute_force_tracking(problem: &TrackingProblem, d: usize) -> Result<TrackingOptimum> {
    let n = problem.n();
    if d == 0 || d > n {
        return Err(Error::invalid(format!("cardinality {d} outside [1, {n}]")));
    }
    let count = binomial(n, d);
    if count > BRUTE_FORCE_MAX_SUPPORTS || n > 63 {
        return Err(Error::invalid(format!("{count} supports of size {d} exceed the exhaustive limit of {BRUTE_FORCE_MAX_SUPPORTS}")));
    }
    let solved: Vec<(f64, u64, Vec<f64>)> = combinations(n, d)
        .into_par_iter()
        .map(|k| {
            let mask = SelectionMask::from_index(k, n);
            let sol = solve_reduced(problem, &mask)?;
            Ok((sol.objective, k, sol.weights))
        })
        .collect::<Result<_>>()?;
    let (t, k, w) = solved.into_iter().min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))).expect("at least one support");
    Ok(TrackingOptimum { mask: SelectionMask::from_index(k, n), weights: w, tracking_error: t })
}
