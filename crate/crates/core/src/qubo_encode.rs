//! Binary selection objectives, cardinality terms and the Ising mapping.
//!
//! A [`QuboProblem`] carries a symmetric matrix `q` with linear terms folded onto
//! the diagonal (`x_i² = x_i`), so `E(x) = xᵀqx + offset` for binary `x`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::track_model::TrackingProblem;

/// Binary decision vector; `true` means the variable is selected.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct SelectionMask {
    bits: Vec<bool>,
}

impl SelectionMask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(n: usize) -> Self {
        Self { bits: vec![false; n] }
    }

    pub fn ones(n: usize) -> Self {
        Self { bits: vec![true; n] }
    }

    /// Mask with exactly the given variables selected.
    pub fn from_indices(n: usize, indices: &[usize]) -> Self {
        let mut bits = vec![false; n];
        for &i in indices {
            bits[i] = true;
        }
        Self { bits }
    }

    /// Decodes a basis index; variable 0 is the most significant bit.
    pub fn from_index(index: u64, n: usize) -> Self {
        Self { bits: (0..n).map(|i| index >> (n - 1 - i) & 1 == 1).collect() }
    }

    /// Inverse of [`SelectionMask::from_index`].
    pub fn to_index(&self) -> u64 {
        self.bits.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.bits[i] = value;
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&i| self.bits[i]).collect()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// `"0110…"`, variable 0 first.
    pub fn to_bitstring(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

impl TryFrom<Vec<u8>> for SelectionMask {
    type Error = String;

    fn try_from(v: Vec<u8>) -> std::result::Result<Self, String> {
        v.into_iter()
            .map(|b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(format!("mask entries must be 0 or 1, got {other}")),
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(SelectionMask::from_bits)
    }
}

impl From<SelectionMask> for Vec<u8> {
    fn from(m: SelectionMask) -> Self {
        m.bits.into_iter().map(u8::from).collect()
    }
}

/// Which cardinality handling has been folded into a QUBO.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CardinalityMode {
    Unconstrained,
    Hard { penalty: f64, d: usize },
    Soft { lambda: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuboProblem {
    q: DMatrix<f64>,
    offset: f64,
    mode: CardinalityMode,
    /// Diagonal of `D` when the QUBO is a pruning objective.
    scaling: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixRepr {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

#[derive(Serialize, Deserialize)]
struct QuboFile {
    n: usize,
    mode: CardinalityMode,
    q: MatrixRepr,
    offset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaling: Option<Vec<f64>>,
}

impl QuboProblem {
    /// Builds a QUBO from a square matrix; the matrix is symmetrized.
    pub fn new(q: DMatrix<f64>, offset: f64) -> Result<Self> {
        if q.nrows() != q.ncols() {
            return Err(Error::invalid("QUBO matrix must be square"));
        }
        if q.iter().any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(Error::invalid("QUBO contains non-finite coefficients"));
        }
        let q = (&q + q.transpose()) * 0.5;
        Ok(Self { q, offset, mode: CardinalityMode::Unconstrained, scaling: None })
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn mode(&self) -> CardinalityMode {
        self.mode
    }

    pub fn scaling(&self) -> Option<&[f64]> {
        self.scaling.as_deref()
    }

    /// Target cardinality when a hard constraint is attached.
    pub fn cardinality(&self) -> Option<usize> {
        match self.mode {
            CardinalityMode::Hard { d, .. } => Some(d),
            _ => None,
        }
    }

    /// `xᵀqx + offset`.
    pub fn energy(&self, x: &SelectionMask) -> f64 {
        assert_eq!(x.len(), self.n(), "assignment length");
        let set = x.indices();
        self.energy_of_set(&set)
    }

    /// Energy of the basis state `index` (variable 0 is the most significant bit).
    pub fn energy_of_index(&self, index: u64) -> f64 {
        let n = self.n();
        assert!(n <= 64, "basis index addressing needs n ≤ 64");
        let mut set = [0usize; 64];
        let mut k = 0;
        for i in 0..n {
            if index >> (n - 1 - i) & 1 == 1 {
                set[k] = i;
                k += 1;
            }
        }
        self.energy_of_set(&set[..k])
    }

    fn energy_of_set(&self, set: &[usize]) -> f64 {
        let mut e = 0.0;
        for &i in set {
            let mut row = self.q[(i, i)];
            for &j in set {
                if j != i {
                    row += self.q[(i, j)];
                }
            }
            e += row;
        }
        e + self.offset
    }

    /// Checked evaluation of a 0/1 assignment.
    pub fn evaluate(&self, x: &[u8]) -> Result<f64> {
        if x.len() != self.n() {
            return Err(Error::invalid(format!("assignment has {} entries, QUBO has {}", x.len(), self.n())));
        }
        let mask = SelectionMask::try_from(x.to_vec()).map_err(Error::Invalid)?;
        Ok(self.energy(&mask))
    }

    /// Energies of all `2^n` basis states, indexed by basis index.
    pub fn energy_table(&self) -> Vec<f64> {
        let n = self.n();
        assert!(n <= 26, "energy table for {n} variables is too large");
        (0..1u64 << n).map(|k| self.energy_of_index(k)).collect()
    }

    /// Marginal energy change from flipping bit `i` of `x`.
    pub fn flip_delta(&self, x: &SelectionMask, i: usize) -> f64 {
        let mut field = self.q[(i, i)];
        for j in x.indices() {
            if j != i {
                field += 2.0 * self.q[(i, j)];
            }
        }
        if x.get(i) {
            -field
        } else {
            field
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = QuboFile {
            n: self.n(),
            mode: self.mode,
            q: MatrixRepr::Flat(self.q.transpose().iter().copied().collect()),
            offset: self.offset,
            scaling: self.scaling.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Accepts `q` either as a flat row-major array of `n²` numbers or as nested rows.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: QuboFile = serde_json::from_str(text)?;
        let n = file.n;
        let q = match file.q {
            MatrixRepr::Flat(v) if v.len() == n * n => DMatrix::from_row_slice(n, n, &v),
            MatrixRepr::Rows(r) if r.len() == n && r.iter().all(|row| row.len() == n) => DMatrix::from_fn(n, n, |i, j| r[i][j]),
            _ => return Err(Error::invalid(format!("QUBO matrix does not have {n}×{n} entries"))),
        };
        if (&q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0) {
            return Err(Error::invalid("QUBO matrix must be symmetric"));
        }
        if let Some(s) = &file.scaling {
            if s.len() != n {
                return Err(Error::invalid("scaling vector length must equal n"));
            }
        }
        let mut qubo = Self::new(q, file.offset)?;
        qubo.mode = file.mode;
        qubo.scaling = file.scaling;
        Ok(qubo)
    }
}

/// `xᵀΣx − 2xᵀg`: selection ignoring weights.
pub fn selection_objective(problem: &TrackingProblem) -> QuboProblem {
    let mut q = problem.sigma().clone();
    for i in 0..problem.n() {
        q[(i, i)] -= 2.0 * problem.g()[i];
    }
    QuboProblem { q, offset: 0.0, mode: CardinalityMode::Unconstrained, scaling: None }
}

/// `xᵀDΣDx − 2xᵀDg` with `D = diag(weights)`.
pub fn pruning_objective(problem: &TrackingProblem, weights: &[f64]) -> QuboProblem {
    assert_eq!(weights.len(), problem.n(), "weight vector length");
    let n = problem.n();
    let mut q = DMatrix::from_fn(n, n, |i, j| weights[i] * problem.sigma()[(i, j)] * weights[j]);
    for i in 0..n {
        q[(i, i)] -= 2.0 * weights[i] * problem.g()[i];
    }
    QuboProblem { q, offset: 0.0, mode: CardinalityMode::Unconstrained, scaling: Some(weights.to_vec()) }
}

/// Penalty large enough that every single-bit flip towards the target
/// cardinality strictly lowers the penalized energy: `2·max|q|·n + 1e-9`.
pub fn default_penalty(qubo: &QuboProblem) -> f64 {
    2.0 * qubo.q.amax() * qubo.n() as f64 + 1e-9
}

/// Adds `p·(1ᵀx − d)²`.
pub fn add_hard_cardinality(qubo: &QuboProblem, d: usize, p: f64) -> Result<QuboProblem> {
    let n = qubo.n();
    if d < 1 || d > n {
        return Err(Error::invalid(format!("cardinality {d} outside [1, {n}]")));
    }
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::invalid(format!("penalty must be positive, got {p}")));
    }
    let d_f = d as f64;
    let mut q = qubo.q.add_scalar(p);
    for i in 0..n {
        q[(i, i)] -= 2.0 * d_f * p;
    }
    Ok(QuboProblem { q, offset: qubo.offset + p * d_f * d_f, mode: CardinalityMode::Hard { penalty: p, d }, scaling: qubo.scaling.clone() })
}

/// Adds the chemical-potential term: `λ·Σ D_ii² x_i` for pruning objectives,
/// `λ·‖x‖₀` otherwise.
pub fn add_soft_cardinality(qubo: &QuboProblem, lambda: f64) -> QuboProblem {
    if lambda < 0.0 {
        warn!("negative chemical potential {lambda} favours larger selections");
    }
    let mut q = qubo.q.clone();
    for i in 0..qubo.n() {
        let d2 = qubo.scaling.as_ref().map_or(1.0, |s| s[i] * s[i]);
        q[(i, i)] += lambda * d2;
    }
    QuboProblem { q, offset: qubo.offset, mode: CardinalityMode::Soft { lambda }, scaling: qubo.scaling.clone() }
}

/// `H = Σ_ij J_ij s_i s_j + Σ_i h_i s_i + E₀` over ordered pairs, `J` zero on
/// the diagonal; spin `s_i = 1 − 2x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingHamiltonian {
    j: DMatrix<f64>,
    h: DVector<f64>,
    e0: f64,
}

impl IsingHamiltonian {
    pub fn new(j: DMatrix<f64>, h: DVector<f64>, e0: f64) -> Result<Self> {
        let n = h.len();
        if j.nrows() != n || j.ncols() != n {
            return Err(Error::invalid("coupling matrix must be n×n"));
        }
        if (0..n).any(|i| j[(i, i)] != 0.0) {
            return Err(Error::invalid("coupling matrix must have a zero diagonal"));
        }
        if (&j - j.transpose()).amax() > 1e-12 * j.amax().max(1.0) {
            return Err(Error::invalid("coupling matrix must be symmetric"));
        }
        Ok(Self { j, h, e0 })
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn j(&self) -> &DMatrix<f64> {
        &self.j
    }

    pub fn h(&self) -> &DVector<f64> {
        &self.h
    }

    pub fn e0(&self) -> f64 {
        self.e0
    }

    /// Energy of a ±1 spin configuration.
    pub fn energy(&self, spins: &[i8]) -> Result<f64> {
        if spins.len() != self.n() {
            return Err(Error::invalid(format!("spin vector has {} entries, expected {}", spins.len(), self.n())));
        }
        if spins.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::invalid("spins must be +1 or -1"));
        }
        Ok(self.energy_unchecked(spins))
    }

    fn energy_unchecked(&self, spins: &[i8]) -> f64 {
        let n = self.n();
        let mut e = self.e0;
        for i in 0..n {
            let si = f64::from(spins[i]);
            let mut coupling = 0.0;
            for k in 0..n {
                coupling += self.j[(i, k)] * f64::from(spins[k]);
            }
            e += si * (coupling + self.h[i]);
        }
        e
    }

    /// Energy of the computational basis state `index` (bit 0 ↔ spin +1).
    pub fn energy_of_index(&self, index: u64) -> f64 {
        let n = self.n();
        let spins: Vec<i8> = (0..n).map(|i| if index >> (n - 1 - i) & 1 == 1 { -1 } else { 1 }).collect();
        self.energy_unchecked(&spins)
    }

    /// Energies of all basis states, indexed by basis index.
    pub fn energy_table(&self) -> Vec<f64> {
        let n = self.n();
        assert!(n <= 26, "energy table for {n} spins is too large");
        (0..1u64 << n).map(|k| self.energy_of_index(k)).collect()
    }
}

/// Spin form of a QUBO via `x_i = (1 − s_i)/2`.
pub fn to_ising(qubo: &QuboProblem) -> IsingHamiltonian {
    let n = qubo.n();
    let q = &qubo.q;
    let mut j = DMatrix::zeros(n, n);
    let mut h = DVector::zeros(n);
    let mut e0 = qubo.offset;
    for i in 0..n {
        h[i] -= q[(i, i)] / 2.0;
        e0 += q[(i, i)] / 2.0;
        for k in 0..n {
            if k != i {
                j[(i, k)] = q[(i, k)] / 4.0;
                h[i] -= q[(i, k)] / 2.0;
                e0 += q[(i, k)] / 4.0;
            }
        }
    }
    IsingHamiltonian { j, h, e0 }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    pub(crate) fn random_qubo(n: usize, seed: u64) -> QuboProblem {
        let mut rng = seed::rng(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        QuboProblem::new(a, rng.random::<f64>() - 0.5).unwrap()
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("S{i}")).collect()
    }

    fn all_masks(n: usize) -> impl Iterator<Item = SelectionMask> {
        (0..1u64 << n).map(move |k| SelectionMask::from_index(k, n))
    }

    #[test]
    fn mask_index_round_trip_and_ordering() {
        let m = SelectionMask::from_index(0b100, 3);
        assert_eq!(m.bits(), &[true, false, false]);
        assert_eq!(m.to_index(), 4);
        assert_eq!(m.to_bitstring(), "100");
        for k in 0..32 {
            assert_eq!(SelectionMask::from_index(k, 5).to_index(), k);
        }
    }

    #[test]
    fn mask_json_rejects_non_binary() {
        assert!(serde_json::from_str::<SelectionMask>("[0,1,2]").is_err());
        let m: SelectionMask = serde_json::from_str("[0,1,1]").unwrap();
        assert_eq!(m.popcount(), 2);
    }

    #[test]
    fn selection_objective_energies() {
        let p = TrackingProblem::new(ids(2), DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, 0.0]), 0.0).unwrap();
        let q = selection_objective(&p);
        let e: Vec<f64> = [[0, 0], [1, 0], [0, 1], [1, 1]].iter().map(|x| q.evaluate(x).unwrap()).collect();
        assert_eq!(e, vec![0.0, -1.0, 1.0, 0.0]);
        assert_eq!(q.mode(), CardinalityMode::Unconstrained);
        assert_eq!(q.offset(), 0.0);
    }

    #[test]
    fn zero_problem_has_zero_energies() {
        let p = TrackingProblem::new(ids(3), DMatrix::zeros(3, 3), DVector::zeros(3), 0.0).unwrap();
        let q = selection_objective(&p);
        assert!(all_masks(3).all(|m| q.energy(&m) == 0.0));
    }

    #[test]
    fn unit_weights_reproduce_selection_objective() {
        let p = crate::convex_qp::tests::random_problem(5, 2);
        let a = selection_objective(&p);
        let b = pruning_objective(&p, &[1.0; 5]);
        assert_eq!(a.q(), b.q());
    }

    #[test]
    fn pruning_energy_at_support_equals_tracking_error_minus_offset() {
        let p = crate::convex_qp::tests::random_problem(6, 9);
        let sol = crate::convex_qp::solve_full(&p);
        let q = pruning_objective(&p, &sol.weights);
        let support = SelectionMask::from_bits(sol.weights.iter().map(|&w| w > 0.0).collect());
        let e = q.energy(&support);
        assert!((e - (sol.objective - p.epsilon0())).abs() < 1e-12 * p.epsilon0().max(1.0));
    }

    #[test]
    fn zero_weight_bits_do_not_matter() {
        let p = crate::convex_qp::tests::random_problem(8, 4);
        let mut w = vec![0.1, 0.2, 0.0, 0.15, 0.05, 0.3, 0.0, 0.2];
        w[2] = 0.0;
        let q = pruning_objective(&p, &w);
        for m in all_masks(8) {
            for &i in &[2usize, 6] {
                let mut f = m.clone();
                f.set(i, !m.get(i));
                assert_eq!(q.energy(&m), q.energy(&f));
            }
        }
    }

    #[test]
    fn hard_penalty_on_zero_base() {
        let base = QuboProblem::new(DMatrix::zeros(3, 3), 0.0).unwrap();
        let q = add_hard_cardinality(&base, 1, 1.0).unwrap();
        for m in all_masks(3) {
            let k = m.popcount() as f64;
            assert!((q.energy(&m) - (k - 1.0).powi(2)).abs() < 1e-15);
        }
        assert_eq!(q.cardinality(), Some(1));
    }

    #[test]
    fn hard_penalty_adds_exact_quadratic() {
        let base = random_qubo(6, 13);
        let q = add_hard_cardinality(&base, 2, 0.7).unwrap();
        for m in all_masks(6) {
            let expected = base.energy(&m) + 0.7 * (m.popcount() as f64 - 2.0).powi(2);
            assert!((q.energy(&m) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn hard_penalty_guards() {
        let base = random_qubo(3, 1);
        assert!(add_hard_cardinality(&base, 1, 0.0).is_err());
        assert!(add_hard_cardinality(&base, 0, 1.0).is_err());
        assert!(add_hard_cardinality(&base, 4, 1.0).is_err());
    }

    #[test]
    fn default_penalty_dominates() {
        for seed in 0..20 {
            let n = 4 + (seed as usize % 6);
            let base = random_qubo(n, 100 + seed);
            let d = 1 + seed as usize % (n - 1);
            let q = add_hard_cardinality(&base, d, default_penalty(&base)).unwrap();
            let best_feasible = all_masks(n).filter(|m| m.popcount() == d).map(|m| q.energy(&m)).fold(f64::INFINITY, f64::min);
            for m in all_masks(n).filter(|m| m.popcount() != d) {
                assert!(q.energy(&m) > best_feasible);
            }
        }
    }

    #[test]
    fn soft_term_identity_and_plain_form() {
        let base = random_qubo(3, 5);
        assert_eq!(add_soft_cardinality(&base, 0.0).q(), base.q());
        let soft = add_soft_cardinality(&base, 2.0);
        let x = SelectionMask::from_bits(vec![true, true, false]);
        assert!((soft.energy(&x) - base.energy(&x) - 4.0).abs() < 1e-14);
        assert_eq!(soft.mode(), CardinalityMode::Soft { lambda: 2.0 });
    }

    #[test]
    fn soft_term_on_pruning_objective_adds_squared_weights() {
        let p = crate::convex_qp::tests::random_problem(7, 21);
        let w = vec![0.3, 0.0, 0.1, 0.25, 0.05, 0.2, 0.1];
        let base = pruning_objective(&p, &w);
        let soft = add_soft_cardinality(&base, 1.0);
        for i in 0..7 {
            assert!((soft.q()[(i, i)] - base.q()[(i, i)] - w[i] * w[i]).abs() < 1e-15);
        }
        for m in all_masks(7) {
            let extra: f64 = m.indices().iter().map(|&i| w[i] * w[i]).sum();
            assert!((soft.energy(&m) - base.energy(&m) - extra).abs() < 1e-13);
        }
    }

    #[test]
    fn ising_single_variable() {
        let q = QuboProblem::new(DMatrix::from_element(1, 1, 2.0), 0.0).unwrap();
        let h = to_ising(&q);
        assert_eq!(h.h().as_slice(), &[-1.0]);
        assert_eq!(h.e0(), 1.0);
        assert_eq!(h.j()[(0, 0)], 0.0);
        assert_eq!(h.energy(&[1]).unwrap(), 0.0);
        assert_eq!(h.energy(&[-1]).unwrap(), 2.0);
    }

    #[test]
    fn ising_pure_offset() {
        let q = QuboProblem::new(DMatrix::zeros(3, 3), 4.5).unwrap();
        let h = to_ising(&q);
        assert_eq!(h.j().amax(), 0.0);
        assert_eq!(h.h().amax(), 0.0);
        assert_eq!(h.e0(), 4.5);
    }

    #[test]
    fn ising_matches_qubo_exhaustively() {
        for seed in 0..10 {
            let q = random_qubo(8, seed);
            let h = to_ising(&q);
            let scale = q.q().amax().max(1.0);
            for k in 0..256u64 {
                assert!((q.energy_of_index(k) - h.energy_of_index(k)).abs() <= 1e-13 * scale * 64.0);
            }
        }
    }

    #[test]
    fn ising_argmin_is_preserved() {
        let q = random_qubo(10, 42);
        let h = to_ising(&q);
        let eq = q.energy_table();
        let eh = h.energy_table();
        let argmin = |v: &[f64]| (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        assert_eq!(argmin(&eq), argmin(&eh));
    }

    #[test]
    fn evaluate_edge_cases() {
        let q = random_qubo(4, 3);
        assert_eq!(q.evaluate(&[0, 0, 0, 0]).unwrap(), q.offset());
        let ones = q.evaluate(&[1, 1, 1, 1]).unwrap();
        assert!((ones - (q.q().sum() + q.offset())).abs() < 1e-12);
        assert!(q.evaluate(&[1, 0]).is_err());
        assert!(q.evaluate(&[1, 0, 2, 0]).is_err());

        let h = to_ising(&q);
        let up = h.energy(&[1, 1, 1, 1]).unwrap();
        assert!((up - (h.e0() + h.h().sum() + h.j().sum())).abs() < 1e-12);
        assert!(h.energy(&[1, 0, 1, 1]).is_err());
    }

    #[test]
    fn json_round_trip_and_nested_rows() {
        let q = add_hard_cardinality(&random_qubo(3, 8), 2, 1.5).unwrap();
        let back = QuboProblem::from_json(&q.to_json().unwrap()).unwrap();
        assert_eq!(back.mode(), q.mode());
        assert!((back.q() - q.q()).amax() == 0.0);
        let nested = r#"{"n":2,"mode":{"kind":"unconstrained"},"q":[[1,0.5],[0.5,-2]],"offset":0.25}"#;
        let q = QuboProblem::from_json(nested).unwrap();
        assert_eq!(q.evaluate(&[1, 1]).unwrap(), 1.0 + 1.0 - 2.0 + 0.25);
        let bad = r#"{"n":2,"mode":{"kind":"unconstrained"},"q":[1,0.5,0.4,-2],"offset":0}"#;
        assert!(QuboProblem::from_json(bad).is_err());
    }

    #[test]
    fn flip_delta_matches_difference() {
        let q = random_qubo(6, 77);
        for k in 0..64u64 {
            let m = SelectionMask::from_index(k, 6);
            for i in 0..6 {
                let mut f = m.clone();
                f.set(i, !m.get(i));
                assert!((q.flip_delta(&m, i) - (q.energy(&f) - q.energy(&m))).abs() < 1e-12);
            }
        }
    }

    fn exhaustive_argmin(q: &QuboProblem) -> SelectionMask {
        let e = q.energy_table();
        let k = (0..e.len()).min_by(|&a, &b| e[a].total_cmp(&e[b]).then(a.cmp(&b))).unwrap();
        SelectionMask::from_index(k as u64, q.n())
    }

    #[test]
    fn soft_term_shrinks_selection_monotonically() {
        for seed in 0..10 {
            let base = random_qubo(8, 300 + seed);
            let mut last = usize::MAX;
            for step in 0..12 {
                let lambda = -2.0 + 0.5 * step as f64;
                let k = exhaustive_argmin(&add_soft_cardinality(&base, lambda)).popcount();
                assert!(k <= last, "popcount rose from {last} to {k} at lambda {lambda}");
                last = k;
            }
        }
    }

    #[test]
    fn soft_term_shrinks_weighted_size_on_pruning_objective() {
        for seed in 0..10 {
            let p = crate::convex_qp::tests::random_problem(8, 500 + seed);
            let sol = crate::convex_qp::solve_full(&p);
            let base = pruning_objective(&p, &sol.weights);
            let size = |m: &SelectionMask| m.indices().iter().map(|&i| sol.weights[i].powi(2)).sum::<f64>();
            let mut last = f64::INFINITY;
            for step in 0..12 {
                let lambda = 0.25 * step as f64;
                let s = size(&exhaustive_argmin(&add_soft_cardinality(&base, lambda)));
                assert!(s <= last + 1e-15);
                last = s;
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn hard_penalty_is_exact(seed in 0u64..1000, d in 1usize..6, p in 0.01f64..10.0) {
            let base = random_qubo(6, seed);
            let q = add_hard_cardinality(&base, d, p).unwrap();
            for k in 0..64u64 {
                let m = SelectionMask::from_index(k, 6);
                let expected = base.energy(&m) + p * (m.popcount() as f64 - d as f64).powi(2);
                proptest::prop_assert!((q.energy(&m) - expected).abs() < 1e-11 * (1.0 + p));
            }
        }

        #[test]
        fn ising_agrees_on_random_assignments(seed in 0u64..1000, bits in proptest::collection::vec(proptest::bool::ANY, 12)) {
            let q = random_qubo(12, seed);
            let m = SelectionMask::from_bits(bits);
            let h = to_ising(&q);
            proptest::prop_assert!((q.energy(&m) - h.energy_of_index(m.to_index())).abs() < 1e-12 * 144.0);
        }
    }
}
