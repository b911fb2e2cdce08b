//! Dense statevector simulation of the variational trial states.
//!
//! Qubit 0 is the most significant bit of the basis index, so basis index `k`
//! corresponds to `SelectionMask::from_index(k, n)`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubo_encode::IsingHamiltonian;
use crate::seed;

pub const MAX_QUBITS: usize = 24;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

type Gate = [[Complex64; 2]; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|k⟩` on `n` qubits.
    pub fn basis(n: usize, index: u64) -> Result<Self> {
        check_qubits(n)?;
        if index >> n != 0 {
            return Err(Error::invalid(format!("basis index {index} out of range for {n} qubits")));
        }
        let mut amplitudes = vec![ZERO; 1 << n];
        amplitudes[index as usize] = ONE;
        Ok(Self { n, amplitudes })
    }

    /// Equal superposition of all basis states.
    pub fn uniform(n: usize) -> Result<Self> {
        check_qubits(n)?;
        let a = Complex64::new((0.5f64).powf(n as f64 / 2.0), 0.0);
        Ok(Self { n, amplitudes: vec![a; 1 << n] })
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::invalid("amplitude count must be a power of two"));
        }
        let n = len.trailing_zeros() as usize;
        check_qubits(n)?;
        Ok(Self { n, amplitudes })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn mask(&self, qubit: usize) -> usize {
        1 << (self.n - 1 - qubit)
    }

    pub fn apply_single(&mut self, qubit: usize, gate: &Gate) {
        let bit = self.mask(qubit);
        let len = self.amplitudes.len();
        let mut base = 0;
        while base < len {
            for i in base..base + bit {
                let a0 = self.amplitudes[i];
                let a1 = self.amplitudes[i | bit];
                self.amplitudes[i] = gate[0][0] * a0 + gate[0][1] * a1;
                self.amplitudes[i | bit] = gate[1][0] * a0 + gate[1][1] * a1;
            }
            base += 2 * bit;
        }
    }

    pub fn apply_ry(&mut self, qubit: usize, theta: f64) {
        self.apply_single(qubit, &ry(theta));
    }

    pub fn apply_rz(&mut self, qubit: usize, theta: f64) {
        self.apply_single(qubit, &rz(theta));
    }

    pub fn apply_rx(&mut self, qubit: usize, theta: f64) {
        self.apply_single(qubit, &rx(theta));
    }

    pub fn apply_cz(&mut self, a: usize, b: usize) {
        let both = self.mask(a) | self.mask(b);
        for (i, amp) in self.amplitudes.iter_mut().enumerate() {
            if i & both == both {
                *amp = -*amp;
            }
        }
    }

    /// 50-50 beam splitter on the single-excitation subspace of qubits `a`, `b`.
    pub fn apply_sqrt_swap(&mut self, a: usize, b: usize) {
        let (ma, mb) = (self.mask(a), self.mask(b));
        let c = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let is = Complex64::new(0.0, FRAC_1_SQRT_2);
        for i in 0..self.amplitudes.len() {
            if i & ma == 0 && i & mb != 0 {
                let j = i ^ ma ^ mb;
                let (x, y) = (self.amplitudes[i], self.amplitudes[j]);
                self.amplitudes[i] = c * x + is * y;
                self.amplitudes[j] = is * x + c * y;
            }
        }
    }

    /// Multiplies each amplitude by `exp(−iγ·energies[k])`.
    pub fn apply_phase(&mut self, energies: &[f64], gamma: f64) {
        for (amp, &e) in self.amplitudes.iter_mut().zip(energies) {
            *amp *= Complex64::from_polar(1.0, -gamma * e);
        }
    }

    /// `Σ_k |a_k|²·energies[k]`.
    pub fn expectation_diag(&self, energies: &[f64]) -> f64 {
        self.amplitudes.iter().zip(energies).map(|(a, &e)| a.norm_sqr() * e).sum()
    }
}

fn check_qubits(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::invalid(format!("qubit count {n} outside [1, {MAX_QUBITS}]")));
    }
    Ok(())
}

/// `exp(−iθY/2)`.
pub fn ry(theta: f64) -> Gate {
    let (s, c) = (theta / 2.0).sin_cos();
    [[Complex64::new(c, 0.0), Complex64::new(-s, 0.0)], [Complex64::new(s, 0.0), Complex64::new(c, 0.0)]]
}

/// `exp(−iθZ/2)`.
pub fn rz(theta: f64) -> Gate {
    [[Complex64::from_polar(1.0, -theta / 2.0), ZERO], [ZERO, Complex64::from_polar(1.0, theta / 2.0)]]
}

/// `exp(−iθX/2)`.
pub fn rx(theta: f64) -> Gate {
    let (s, c) = (theta / 2.0).sin_cos();
    [[Complex64::new(c, 0.0), Complex64::new(0.0, -s)], [Complex64::new(0.0, -s), Complex64::new(c, 0.0)]]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnsatzKind {
    VqeRy,
    Qaoa,
    SwapNetwork,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub kind: AnsatzKind,
    pub layers: usize,
    pub n: usize,
    /// Excitation number, swap network only.
    pub d: Option<usize>,
}

impl AnsatzSpec {
    pub fn new(kind: AnsatzKind, layers: usize, n: usize, d: Option<usize>) -> Result<Self> {
        let spec = Self { kind, layers, n, d };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_qubits(self.n)?;
        if self.layers == 0 {
            return Err(Error::invalid("ansatz needs at least one layer"));
        }
        if self.kind == AnsatzKind::SwapNetwork {
            match self.d {
                Some(d) if (1..=self.n).contains(&d) => {}
                Some(d) => return Err(Error::invalid(format!("excitation number {d} outside [1, {}]", self.n))),
                None => return Err(Error::invalid("swap network needs an excitation number")),
            }
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        match self.kind {
            AnsatzKind::VqeRy | AnsatzKind::SwapNetwork => self.layers * self.n,
            AnsatzKind::Qaoa => 2 * self.layers,
        }
    }

    /// Box bounds per parameter: QAOA `γ ∈ [0, 2π]`, `β ∈ [0, π]`; angles elsewhere `[0, 2π]`.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        use std::f64::consts::{PI, TAU};
        match self.kind {
            AnsatzKind::Qaoa => {
                let mut b = vec![(0.0, TAU); self.layers];
                b.extend(vec![(0.0, PI); self.layers]);
                b
            }
            _ => vec![(0.0, TAU); self.parameter_count()],
        }
    }

    fn check_params(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.parameter_count() {
            return Err(Error::invalid(format!(
                "{:?} ansatz with {} layers on {} qubits takes {} parameters, got {}",
                self.kind,
                self.layers,
                self.n,
                self.parameter_count(),
                theta.len()
            )));
        }
        Ok(())
    }
}

/// Ry layer, then `layers − 1` rounds of (open CZ chain, Ry layer), on `|0…0⟩`.
/// Parameters are laid out layer by layer.
pub fn prepare_vqe_state(spec: &AnsatzSpec, theta: &[f64]) -> Result<StateVector> {
    require_kind(spec, AnsatzKind::VqeRy)?;
    spec.check_params(theta)?;
    let n = spec.n;
    let mut state = StateVector::basis(n, 0)?;
    for (layer, angles) in theta.chunks(n).enumerate() {
        if layer > 0 {
            for q in 0..n - 1 {
                state.apply_cz(q, q + 1);
            }
        }
        for (q, &t) in angles.iter().enumerate() {
            state.apply_ry(q, t);
        }
    }
    Ok(state)
}

/// Alternating cost phase and transverse mixer on the uniform state.
pub fn prepare_qaoa_state(ising: &IsingHamiltonian, gammas: &[f64], betas: &[f64]) -> Result<StateVector> {
    check_qubits(ising.n())?;
    prepare_qaoa_from_energies(ising.n(), &ising.energy_table(), gammas, betas)
}

/// Same as [`prepare_qaoa_state`] with the diagonal supplied directly.
pub fn prepare_qaoa_from_energies(n: usize, energies: &[f64], gammas: &[f64], betas: &[f64]) -> Result<StateVector> {
    if gammas.len() != betas.len() || gammas.is_empty() {
        return Err(Error::invalid(format!("{} phase angles but {} mixer angles", gammas.len(), betas.len())));
    }
    let mut state = StateVector::uniform(n)?;
    if energies.len() != state.amplitudes.len() {
        return Err(Error::invalid("energy table does not match qubit count"));
    }
    for (&gamma, &beta) in gammas.iter().zip(betas) {
        state.apply_phase(energies, gamma);
        let mixer = rx(2.0 * beta);
        for q in 0..n {
            state.apply_single(q, &mixer);
        }
    }
    Ok(state)
}

/// Positions of the initial excitations: `⌊k·n/d⌋`, shifted right past collisions.
pub fn excitation_positions(n: usize, d: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(d);
    for k in 0..d {
        let mut p = k * n / d;
        if let Some(&last) = out.last() {
            p = p.max(last + 1);
        }
        out.push(p.min(n - (d - k)));
    }
    out
}

/// Excitation-conserving network: a √SWAP round, then per layer Rz on every
/// qubit followed by another √SWAP round. A round acts on pairs
/// (0,1),(2,3),… and then (1,2),(3,4),….
pub fn prepare_swap_state(spec: &AnsatzSpec, theta: &[f64]) -> Result<StateVector> {
    require_kind(spec, AnsatzKind::SwapNetwork)?;
    spec.check_params(theta)?;
    let n = spec.n;
    let d = spec.d.expect("validated");
    let index = excitation_positions(n, d).iter().fold(0u64, |acc, &p| acc | 1 << (n - 1 - p));
    let mut state = StateVector::basis(n, index)?;
    swap_round(&mut state);
    for angles in theta.chunks(n) {
        for (q, &t) in angles.iter().enumerate() {
            state.apply_rz(q, t);
        }
        swap_round(&mut state);
    }
    Ok(state)
}

fn swap_round(state: &mut StateVector) {
    let n = state.n();
    for start in [0, 1] {
        for q in (start..n.saturating_sub(1)).step_by(2) {
            state.apply_sqrt_swap(q, q + 1);
        }
    }
}

fn require_kind(spec: &AnsatzSpec, kind: AnsatzKind) -> Result<()> {
    spec.validate()?;
    if spec.kind != kind {
        return Err(Error::invalid(format!("expected a {kind:?} ansatz, got {:?}", spec.kind)));
    }
    Ok(())
}

/// `⟨ψ|H|ψ⟩` for a diagonal Hamiltonian.
pub fn expectation(state: &StateVector, ising: &IsingHamiltonian) -> Result<f64> {
    if state.n != ising.n() {
        return Err(Error::invalid(format!("state has {} qubits, Hamiltonian {}", state.n, ising.n())));
    }
    Ok(state.expectation_diag(&ising.energy_table()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub bitstring: String,
    pub index: u64,
    pub count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub n: usize,
    pub total_shots: u64,
    /// Sorted by basis index.
    pub records: Vec<SampleRecord>,
}

impl SampleSet {
    /// Fills per-record energies from a table indexed by basis index.
    pub fn attach_energies(&mut self, energies: &[f64]) {
        for r in &mut self.records {
            r.energy = Some(energies[r.index as usize]);
        }
    }

    /// Shot-weighted mean energy.
    pub fn mean_energy(&self, energies: &[f64]) -> f64 {
        let total: f64 = self.records.iter().map(|r| r.count as f64 * energies[r.index as usize]).sum();
        total / self.total_shots as f64
    }

    pub fn contains(&self, index: u64) -> bool {
        self.records.iter().any(|r| r.index == index)
    }
}

/// Multinomial draw of `shots` basis states from `|a_k|²`.
pub fn sample(state: &StateVector, shots: u64, seed: u64) -> Result<SampleSet> {
    if shots == 0 {
        return Err(Error::invalid("shots must be at least 1"));
    }
    let probs = state.probabilities();
    let dist = WeightedIndex::new(&probs).map_err(|e| Error::invalid(format!("state cannot be sampled: {e}")))?;
    let mut rng = seed::rng(seed);
    let mut counts = std::collections::BTreeMap::<usize, u64>::new();
    for _ in 0..shots {
        *counts.entry(dist.sample(&mut rng)).or_default() += 1;
    }
    let n = state.n;
    let records =
        counts.into_iter().map(|(k, count)| SampleRecord { bitstring: format!("{k:0n$b}"), index: k as u64, count, energy: None }).collect();
    Ok(SampleSet { n, total_shots: shots, records })
}

/// Prepares the trial state of any ansatz; `energies` is the Ising diagonal used by the QAOA phase.
pub fn prepare_state(spec: &AnsatzSpec, energies: &[f64], theta: &[f64]) -> Result<StateVector> {
    match spec.kind {
        AnsatzKind::VqeRy => prepare_vqe_state(spec, theta),
        AnsatzKind::SwapNetwork => prepare_swap_state(spec, theta),
        AnsatzKind::Qaoa => {
            require_kind(spec, AnsatzKind::Qaoa)?;
            spec.check_params(theta)?;
            let (g, b) = theta.split_at(spec.layers);
            prepare_qaoa_from_energies(spec.n, energies, g, b)
        }
    }
}

/// Energy objective over ansatz parameters, exact or shot-sampled.
#[derive(Debug, Clone)]
pub struct VariationalObjective {
    spec: AnsatzSpec,
    energies: Vec<f64>,
    phase_energies: Vec<f64>,
    shots: Option<u64>,
}

impl VariationalObjective {
    /// The QAOA phase uses the diagonal divided by `phase_scale`; measured
    /// energies are always unscaled.
    pub fn new(spec: AnsatzSpec, ising: &IsingHamiltonian, phase_scale: f64) -> Result<Self> {
        spec.validate()?;
        if spec.n != ising.n() {
            return Err(Error::invalid("ansatz and Hamiltonian sizes differ"));
        }
        if !(phase_scale > 0.0) {
            return Err(Error::invalid("phase scale must be positive"));
        }
        let energies = ising.energy_table();
        let phase_energies = energies.iter().map(|e| e / phase_scale).collect();
        Ok(Self { spec, energies, phase_energies, shots: None })
    }

    /// Switches the objective to the mean of `shots` sampled energies.
    pub fn with_shots(mut self, shots: Option<u64>) -> Self {
        self.shots = shots;
        self
    }

    pub fn spec(&self) -> &AnsatzSpec {
        &self.spec
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn state(&self, theta: &[f64]) -> Result<StateVector> {
        prepare_state(&self.spec, &self.phase_energies, theta)
    }

    /// Exact expectation, or a sampled estimate seeded by `sample_seed` in shot mode.
    pub fn evaluate(&self, theta: &[f64], sample_seed: u64) -> Result<f64> {
        let state = self.state(theta)?;
        match self.shots {
            None => Ok(state.expectation_diag(&self.energies)),
            Some(shots) => Ok(sample(&state, shots, sample_seed)?.mean_energy(&self.energies)),
        }
    }
}
