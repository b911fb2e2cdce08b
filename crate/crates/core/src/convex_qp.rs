//! Simplex-constrained convex quadratic programs.
//!
//! Minimizes `wᵀΣw − 2wᵀg + ε₀` over `{w ≥ 0, Σw = 1}` by projected gradient
//! with Barzilai-Borwein steps (falling back to `1/L`), started from the uniform
//! portfolio. Once the projected-gradient norm is small, the equality-constrained
//! KKT system on the detected support is solved directly; the polished point is
//! kept only if it is feasible and no worse.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubo_encode::SelectionMask;
use crate::track_model::TrackingProblem;

const MAX_ITERATIONS: usize = 20_000;
const TOLERANCE: f64 = 1e-7;
const SUPPORT_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub weights: Vec<f64>,
    /// Tracking error at `weights`, including `ε₀`.
    pub objective: f64,
    pub iterations: usize,
    /// Norm of the projected-gradient mapping at `weights`, in problem units.
    pub kkt_residual: f64,
    pub converged: bool,
}

/// Euclidean projection onto the probability simplex `{w ≥ 0, Σw = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 && total != 1.0 {
        w.iter_mut().for_each(|x| *x /= total);
    }
    w
}

/// Optimal weights over the whole universe.
pub fn solve_full(problem: &TrackingProblem) -> QpSolution {
    let (weights, iterations, kkt_residual, converged) = minimize(problem.sigma(), problem.g());
    QpSolution { objective: problem.tracking_error(&weights), weights, iterations, kkt_residual, converged }
}

/// Optimal weights restricted to the variables selected by `mask`; the result
/// has length `N` with zeros off the mask.
pub fn solve_reduced(problem: &TrackingProblem, mask: &SelectionMask) -> Result<QpSolution> {
    if mask.len() != problem.n() {
        return Err(Error::invalid(format!("mask has {} bits for {} variables", mask.len(), problem.n())));
    }
    let support = mask.indices();
    if support.is_empty() {
        return Err(Error::invalid("cannot solve the reduced problem for an empty selection"));
    }
    let sub = problem.restrict(&support);
    let (local, iterations, kkt_residual, converged) = minimize(sub.sigma(), sub.g());
    let mut weights = vec![0.0; problem.n()];
    for (&i, w) in support.iter().zip(local) {
        weights[i] = w;
    }
    Ok(QpSolution { objective: problem.tracking_error(&weights), weights, iterations, kkt_residual, converged })
}

fn objective(sigma: &DMatrix<f64>, g: &DVector<f64>, w: &DVector<f64>) -> f64 {
    (sigma * w).dot(w) - 2.0 * g.dot(w)
}

fn projected_step(w: &DVector<f64>, grad: &DVector<f64>, step: f64) -> DVector<f64> {
    let trial: Vec<f64> = w.iter().zip(grad.iter()).map(|(x, d)| x - step * d).collect();
    DVector::from_vec(project_simplex(&trial))
}

fn gradient_mapping_norm(w: &DVector<f64>, grad: &DVector<f64>, lipschitz: f64) -> f64 {
    (w - projected_step(w, grad, 1.0 / lipschitz)).norm() * lipschitz
}

/// Returns `(weights, iterations, kkt_residual, converged)`.
fn minimize(sigma: &DMatrix<f64>, g: &DVector<f64>) -> (Vec<f64>, usize, f64, bool) {
    let n = g.len();
    if n == 1 {
        return (vec![1.0], 0, 0.0, true);
    }
    // The minimizer is invariant under positive rescaling of (Σ, g); working in
    // normalized units makes the stopping tolerance relative.
    let scale = sigma.amax().max(g.amax());
    if scale == 0.0 {
        return (vec![1.0 / n as f64; n], 0, 0.0, true);
    }
    let s = sigma / scale;
    let b = g / scale;
    let grad = |w: &DVector<f64>| (&s * w - &b) * 2.0;
    let lipschitz = {
        let bound = s.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max) * 2.0;
        if bound > 0.0 {
            bound
        } else {
            1.0
        }
    };
    let tol = TOLERANCE * (1.0 + b.norm());

    let mut w = DVector::from_element(n, 1.0 / n as f64);
    let mut gr = grad(&w);
    let mut f = objective(&s, &b, &w);
    let mut step = 1.0 / lipschitz;
    let mut iterations = 0;
    let mut residual = gradient_mapping_norm(&w, &gr, lipschitz);

    while residual > tol && iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut w_next = projected_step(&w, &gr, step);
        let mut f_next = objective(&s, &b, &w_next);
        if f_next > f {
            w_next = projected_step(&w, &gr, 1.0 / lipschitz);
            f_next = objective(&s, &b, &w_next);
        }
        let gr_next = grad(&w_next);
        let ds = &w_next - &w;
        let dy = &gr_next - &gr;
        let curvature = ds.dot(&dy);
        step = if curvature > 0.0 { (ds.norm_squared() / curvature).clamp(1e-3 / lipschitz, 1e6 / lipschitz) } else { 1.0 / lipschitz };
        w = w_next;
        gr = gr_next;
        f = f_next;
        residual = gradient_mapping_norm(&w, &gr, lipschitz);
    }

    if let Some(polished) = polish_on_support(&s, &b, &w) {
        let f_polished = objective(&s, &b, &polished);
        if f_polished <= f + 1e-15 * f.abs().max(1.0) {
            w = polished;
            gr = grad(&w);
            residual = gradient_mapping_norm(&w, &gr, lipschitz);
        }
    }

    let mut out: Vec<f64> = w.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    (out, iterations, residual * scale, residual <= tol)
}

/// Solves `2Σ_S w − 2g_S = μ1, 1ᵀw = 1` on the support of `w`. Returns `None`
/// when the system is singular or the solution leaves the simplex.
fn polish_on_support(s: &DMatrix<f64>, b: &DVector<f64>, w: &DVector<f64>) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] > SUPPORT_THRESHOLD).collect();
    let k = support.len();
    if k == 0 {
        return None;
    }
    let mut kkt = DMatrix::zeros(k + 1, k + 1);
    let mut rhs = DVector::zeros(k + 1);
    for (a, &i) in support.iter().enumerate() {
        for (c, &j) in support.iter().enumerate() {
            kkt[(a, c)] = 2.0 * s[(i, j)];
        }
        kkt[(a, k)] = -1.0;
        kkt[(k, a)] = 1.0;
        rhs[a] = 2.0 * b[i];
    }
    rhs[k] = 1.0;
    let solution = kkt.lu().solve(&rhs)?;
    if solution.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut polished = DVector::zeros(w.len());
    for (a, &i) in support.iter().enumerate() {
        if solution[a] < -1e-12 {
            return None;
        }
        polished[i] = solution[a].max(0.0);
    }
    Some(polished)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("S{i}")).collect()
    }

    /// Exhaustive active-set oracle: tries every support, solves the
    /// equality-constrained stationarity system by Gaussian elimination and
    /// keeps the best feasible candidate.
    pub(crate) fn support_enumeration_oracle(sigma: &DMatrix<f64>, g: &DVector<f64>, eps0: f64, allowed: &[usize]) -> (Vec<f64>, f64) {
        let n = g.len();
        let k_all = allowed.len();
        let mut best = (vec![], f64::INFINITY);
        for bits in 1u32..(1 << k_all) {
            let support: Vec<usize> = (0..k_all).filter(|&a| bits >> a & 1 == 1).map(|a| allowed[a]).collect();
            let k = support.len();
            let mut m = vec![vec![0.0; k + 2]; k + 1];
            for (a, &i) in support.iter().enumerate() {
                for (c, &j) in support.iter().enumerate() {
                    m[a][c] = 2.0 * sigma[(i, j)];
                }
                m[a][k] = -1.0;
                m[a][k + 1] = 2.0 * g[i];
                m[k][a] = 1.0;
            }
            m[k][k + 1] = 1.0;
            let Some(x) = gauss_solve(m) else { continue };
            if x[..k].iter().any(|&v| v < -1e-12) {
                continue;
            }
            let mut w = vec![0.0; n];
            for (a, &i) in support.iter().enumerate() {
                w[i] = x[a].max(0.0);
            }
            let wv = DVector::from_vec(w.clone());
            let obj = (sigma * &wv).dot(&wv) - 2.0 * g.dot(&wv) + eps0;
            if obj < best.1 {
                best = (w, obj);
            }
        }
        best
    }

    fn gauss_solve(mut m: Vec<Vec<f64>>) -> Option<Vec<f64>> {
        let n = m.len();
        for col in 0..n {
            let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
            if m[piv][col].abs() < 1e-13 {
                return None;
            }
            m.swap(col, piv);
            for r in 0..n {
                if r != col {
                    let f = m[r][col] / m[col][col];
                    for c in col..=n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
        Some((0..n).map(|r| m[r][n] / m[r][r]).collect())
    }

    pub(crate) fn random_problem(n: usize, seed: u64) -> TrackingProblem {
        let mut rng = seed::rng(seed);
        let m = n + 3;
        let a = DMatrix::from_fn(m, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let sigma = a.transpose() * &a;
        let g = DVector::from_fn(n, |_, _| rng.random::<f64>() * 2.0 - 0.5);
        let eps0 = g.norm_squared() + 1.0;
        TrackingProblem::new(ids(n), sigma, g, eps0).unwrap()
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex(&[0.6, 0.4]), vec![0.6, 0.4]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        for w in project_simplex(&[0.5, 0.5, 0.5]) {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_idempotent(v in prop::collection::vec(-10.0f64..10.0, 1..12)) {
            let p = project_simplex(&v);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let q = project_simplex(&p);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn projection_is_closest_point(v in prop::collection::vec(-3.0f64..3.0, 2..6), seed in 0u64..1000) {
            let p = project_simplex(&v);
            let d = |w: &[f64]| w.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let mut rng = seed::rng(seed);
            for _ in 0..50 {
                let raw: Vec<f64> = (0..v.len()).map(|_| rng.random::<f64>()).collect();
                let s: f64 = raw.iter().sum();
                let q: Vec<f64> = raw.iter().map(|x| x / s).collect();
                prop_assert!(d(&p) <= d(&q) + 1e-12);
            }
        }
    }

    #[test]
    fn identity_sigma_reduces_to_projection() {
        let p = TrackingProblem::new(ids(2), DMatrix::identity(2, 2), DVector::from_vec(vec![0.6, 0.4]), 0.52).unwrap();
        let sol = solve_full(&p);
        assert!((sol.weights[0] - 0.6).abs() < 1e-12 && (sol.weights[1] - 0.4).abs() < 1e-12);
        assert!(sol.objective.abs() < 1e-12);
        assert!(sol.converged);

        let p = TrackingProblem::new(ids(2), DMatrix::identity(2, 2), DVector::from_vec(vec![2.0, 0.0]), 4.0).unwrap();
        assert_eq!(solve_full(&p).weights, vec![1.0, 0.0]);
    }

    #[test]
    fn full_matches_oracle_on_random_instances() {
        for seed in 0..30 {
            let p = random_problem(6, seed);
            let sol = solve_full(&p);
            let all: Vec<usize> = (0..6).collect();
            let (_, best) = support_enumeration_oracle(p.sigma(), p.g(), p.epsilon0(), &all);
            assert!((sol.objective - best).abs() <= 1e-6, "seed {seed}: {} vs {best}", sol.objective);
            assert!(sol.converged);
            let uniform = p.tracking_error(&[1.0 / 6.0; 6]);
            assert!(sol.objective <= uniform + 1e-12);
        }
    }

    #[test]
    fn reduced_matches_oracle_on_every_triple() {
        let p = random_problem(6, 77);
        for bits in 0u32..64 {
            if bits.count_ones() != 3 {
                continue;
            }
            let mask = SelectionMask::from_bits((0..6).map(|i| bits >> i & 1 == 1).collect());
            let sol = solve_reduced(&p, &mask).unwrap();
            let (_, best) = support_enumeration_oracle(p.sigma(), p.g(), p.epsilon0(), &mask.indices());
            assert!((sol.objective - best).abs() <= 1e-6);
            for i in 0..6 {
                if !mask.get(i) {
                    assert_eq!(sol.weights[i], 0.0);
                }
            }
        }
    }

    #[test]
    fn reduced_with_full_mask_equals_full() {
        let p = random_problem(5, 3);
        let full = solve_full(&p);
        let red = solve_reduced(&p, &SelectionMask::ones(5)).unwrap();
        assert_eq!(full, red);
    }

    #[test]
    fn single_variable_mask() {
        let g = DVector::from_vec(vec![0.2, 0.7, 0.1]);
        let p = TrackingProblem::new(ids(3), DMatrix::identity(3, 3), g.clone(), 1.5).unwrap();
        for i in 0..3 {
            let mut bits = vec![false; 3];
            bits[i] = true;
            let sol = solve_reduced(&p, &SelectionMask::from_bits(bits)).unwrap();
            assert_eq!(sol.weights[i], 1.0);
            assert!((sol.objective - (1.0 - 2.0 * g[i] + 1.5)).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_mask_rejected() {
        let p = random_problem(3, 1);
        assert!(solve_reduced(&p, &SelectionMask::zeros(3)).is_err());
    }

    #[test]
    fn nested_masks_are_monotone() {
        let p = random_problem(7, 5);
        let mut rng = seed::rng(8);
        for _ in 0..40 {
            let b: Vec<bool> = (0..7).map(|_| rng.random::<bool>()).collect();
            let mut a = b.clone();
            for x in a.iter_mut() {
                if rng.random::<f64>() < 0.4 {
                    *x = false;
                }
            }
            if !a.iter().any(|&x| x) {
                continue;
            }
            let oa = solve_reduced(&p, &SelectionMask::from_bits(a)).unwrap().objective;
            let ob = solve_reduced(&p, &SelectionMask::from_bits(b)).unwrap().objective;
            assert!(ob <= oa + 1e-9, "{ob} > {oa}");
        }
    }

    #[test]
    fn kkt_certificate_holds() {
        for seed in 0..10 {
            let p = random_problem(8, 100 + seed);
            let sol = solve_full(&p);
            let w = DVector::from_vec(sol.weights.clone());
            let grad = (p.sigma() * &w - p.g()) * 2.0;
            let support: Vec<usize> = (0..8).filter(|&i| sol.weights[i] > 1e-8).collect();
            let mu = grad[support[0]];
            let scale = p.sigma().amax().max(p.g().amax());
            for &i in &support {
                assert!((grad[i] - mu).abs() <= 1e-7 * scale, "support gradient spread");
            }
            for i in 0..8 {
                assert!(grad[i] >= mu - 1e-7 * scale, "off-support gradient below multiplier");
            }
            assert!((sol.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_zero_rows_are_handled() {
        let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
        let p = TrackingProblem::new(ids(3), sigma, DVector::from_vec(vec![0.5, 0.0, 0.1]), 1.0).unwrap();
        let sol = solve_full(&p);
        let (_, best) = support_enumeration_oracle(p.sigma(), p.g(), p.epsilon0(), &[0, 1, 2]);
        assert!((sol.objective - best).abs() < 1e-9);
    }
}
