//! Index-tracking instances: return series, the quadratic tracking-error model,
//! price CSV ingestion and a synthetic factor-model universe.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::convex_qp;
use crate::error::{Error, Result};
use crate::seed;

/// Per-period simple returns of `N` assets over `T` periods.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    asset_ids: Vec<String>,
    timestamps: Vec<String>,
    /// `T × N`, row `n` holds the returns of period `n`.
    returns: DMatrix<f64>,
}

impl ReturnSeries {
    pub fn new(asset_ids: Vec<String>, timestamps: Vec<String>, returns: DMatrix<f64>) -> Result<Self> {
        if returns.ncols() != asset_ids.len() {
            return Err(Error::invalid(format!("return matrix has {} columns but {} asset ids", returns.ncols(), asset_ids.len())));
        }
        if returns.nrows() != timestamps.len() {
            return Err(Error::invalid(format!("return matrix has {} rows but {} timestamps", returns.nrows(), timestamps.len())));
        }
        if returns.nrows() == 0 || returns.ncols() == 0 {
            return Err(Error::invalid("return series must have at least one period and one asset"));
        }
        if let Some((idx, _)) = returns.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (row, col) = (idx % returns.nrows(), idx / returns.nrows());
            return Err(Error::invalid(format!("non-finite return at period {row}, asset {}", asset_ids[col])));
        }
        Ok(Self { asset_ids, timestamps, returns })
    }

    /// Convenience constructor from row-major period data.
    pub fn from_rows(asset_ids: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = asset_ids.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("every period must have one return per asset"));
        }
        let timestamps = (0..rows.len()).map(|t| t.to_string()).collect();
        let returns = DMatrix::from_fn(rows.len(), n, |t, i| rows[t][i]);
        Self::new(asset_ids, timestamps, returns)
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn timestamps(&self) -> &[String] {
        &self.timestamps
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn n_periods(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    /// Column `i` as a vector of per-period returns.
    pub fn column(&self, i: usize) -> DVector<f64> {
        self.returns.column(i).into_owned()
    }
}

/// Turns `(T+1) × N` prices into `T × N` simple returns.
///
/// Prices must be strictly positive and finite; a NaN marks a missing
/// observation and is rejected (no imputation).
pub fn compute_returns(prices: &[Vec<f64>], assets: &[String]) -> Result<ReturnSeries> {
    let timestamps: Vec<String> = (0..prices.len()).map(|t| t.to_string()).collect();
    compute_returns_labeled(prices, assets, &timestamps)
}

/// Like [`compute_returns`], labelling each return with the timestamp of the
/// period's closing price.
pub fn compute_returns_labeled(prices: &[Vec<f64>], assets: &[String], timestamps: &[String]) -> Result<ReturnSeries> {
    if prices.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 price rows to form a return, got {}", prices.len())));
    }
    if timestamps.len() != prices.len() {
        return Err(Error::invalid("one timestamp per price row required"));
    }
    let n = assets.len();
    for (row, p) in prices.iter().enumerate() {
        if p.len() != n {
            return Err(Error::invalid(format!("price row {row} has {} entries, expected {n}", p.len())));
        }
        for (i, &v) in p.iter().enumerate() {
            if v.is_nan() {
                return Err(Error::invalid(format!("missing price at row {row}, asset {}", assets[i])));
            }
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("non-positive price {v} at row {row}, asset {}", assets[i])));
            }
        }
    }
    let t = prices.len() - 1;
    let returns = DMatrix::from_fn(t, n, |r, i| prices[r + 1][i] / prices[r][i] - 1.0);
    ReturnSeries::new(assets.to_vec(), timestamps[1..].to_vec(), returns)
}

/// Quadratic tracking-error model `T_err(w) = wᵀΣw − 2wᵀg + ε₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingProblem {
    asset_ids: Vec<String>,
    sigma: DMatrix<f64>,
    g: DVector<f64>,
    epsilon0: f64,
}

#[derive(Serialize, Deserialize)]
struct ProblemFile {
    assets: Vec<String>,
    sigma: Vec<Vec<f64>>,
    g: Vec<f64>,
    epsilon0: f64,
}

impl TrackingProblem {
    /// Validates shape, symmetry (1e-12 relative), positive semi-definiteness
    /// (smallest eigenvalue ≥ −1e-9·‖Σ‖) and `ε₀ ≥ 0`.
    pub fn new(asset_ids: Vec<String>, sigma: DMatrix<f64>, g: DVector<f64>, epsilon0: f64) -> Result<Self> {
        let n = asset_ids.len();
        if n == 0 {
            return Err(Error::invalid("tracking problem needs at least one asset"));
        }
        if sigma.nrows() != n || sigma.ncols() != n || g.len() != n {
            return Err(Error::invalid(format!("dimension mismatch: {n} assets, sigma {}x{}, g {}", sigma.nrows(), sigma.ncols(), g.len())));
        }
        if sigma.iter().chain(g.iter()).any(|v| !v.is_finite()) || !epsilon0.is_finite() {
            return Err(Error::invalid("tracking problem contains non-finite entries"));
        }
        if epsilon0 < 0.0 {
            return Err(Error::invalid(format!("epsilon0 must be non-negative, got {epsilon0}")));
        }
        let scale = sigma.amax();
        for i in 0..n {
            for j in (i + 1)..n {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::invalid(format!("sigma is not symmetric at ({i}, {j})")));
                }
            }
        }
        if scale > 0.0 {
            let min_eig = SymmetricEigen::new(sigma.clone()).eigenvalues.min();
            if min_eig < -1e-9 * sigma.norm() {
                return Err(Error::invalid(format!("sigma is not positive semi-definite (smallest eigenvalue {min_eig:e})")));
            }
        }
        Ok(Self { asset_ids, sigma, g, epsilon0 })
    }

    pub fn n(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn g(&self) -> &DVector<f64> {
        &self.g
    }

    pub fn epsilon0(&self) -> f64 {
        self.epsilon0
    }

    /// `wᵀΣw − 2wᵀg + ε₀`.
    pub fn tracking_error(&self, w: &[f64]) -> f64 {
        assert_eq!(w.len(), self.n(), "weight vector length");
        let w = DVector::from_column_slice(w);
        (&self.sigma * &w).dot(&w) - 2.0 * w.dot(&self.g) + self.epsilon0
    }

    /// Sub-problem over the given (sorted, distinct) asset indices. `ε₀` is kept.
    pub fn restrict(&self, indices: &[usize]) -> TrackingProblem {
        let sigma = self.sigma.select_rows(indices).select_columns(indices);
        let g = self.g.select_rows(indices);
        let asset_ids = indices.iter().map(|&i| self.asset_ids[i].clone()).collect();
        TrackingProblem { asset_ids, sigma, g, epsilon0: self.epsilon0 }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ProblemFile {
            assets: self.asset_ids.clone(),
            sigma: self.sigma.row_iter().map(|r| r.iter().copied().collect()).collect(),
            g: self.g.iter().copied().collect(),
            epsilon0: self.epsilon0,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(text)?;
        let n = file.assets.len();
        if file.sigma.len() != n || file.sigma.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("sigma must be an N×N array matching the asset list"));
        }
        let sigma = DMatrix::from_fn(n, n, |i, j| file.sigma[i][j]);
        Self::new(file.assets, sigma, DVector::from_vec(file.g), file.epsilon0)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Builds `Σ_ij = Σ_n r_i r_j`, `g_j = Σ_n r_j r_I`, `ε₀ = Σ_n r_I²`.
pub fn build_tracking_problem(asset_returns: &ReturnSeries, index_returns: &ReturnSeries) -> Result<TrackingProblem> {
    if index_returns.n_assets() != 1 {
        return Err(Error::invalid("index series must have exactly one column"));
    }
    if asset_returns.n_periods() != index_returns.n_periods() {
        return Err(Error::invalid(format!(
            "asset series has {} periods but index series has {}",
            asset_returns.n_periods(),
            index_returns.n_periods()
        )));
    }
    let r = asset_returns.returns();
    let r_index = index_returns.column(0);
    let n = r.ncols();
    // Only the upper triangle is summed and mirrored, so Σ is exactly symmetric.
    let mut sigma = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = r.column(i).dot(&r.column(j));
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }
    let g = r.transpose() * &r_index;
    let epsilon0 = r_index.dot(&r_index);
    TrackingProblem::new(asset_returns.asset_ids().to_vec(), sigma, g, epsilon0)
}

/// Tracking error as the sum of squared residuals between portfolio and index
/// returns, computed directly from the series.
pub fn tracking_error_from_series(asset_returns: &ReturnSeries, index_returns: &ReturnSeries, w: &[f64]) -> f64 {
    let w = DVector::from_column_slice(w);
    let residual = asset_returns.returns() * w - index_returns.column(0);
    residual.norm_squared()
}

/// Index weights implied by the data: the simplex-constrained minimizer of
/// `T_err` over the whole universe.
pub fn recover_index_weights(problem: &TrackingProblem) -> Result<Vec<f64>> {
    let sol = convex_qp::solve_full(problem);
    if !sol.converged {
        return Err(Error::solver(format!("index weight recovery did not converge (kkt residual {:e})", sol.kkt_residual)));
    }
    Ok(sol.weights)
}

/// Parameters of the synthetic factor-model universe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_assets: usize,
    pub n_periods: usize,
    pub n_factors: usize,
    pub factor_vol: f64,
    pub idio_vol: f64,
    pub index_weight_seed: u64,
    pub cluster_count: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { n_assets: 15, n_periods: 20, n_factors: 3, factor_vol: 0.01, idio_vol: 0.006, index_weight_seed: 0, cluster_count: 3 }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_assets == 0 || self.n_periods == 0 || self.n_factors == 0 || self.cluster_count == 0 {
            return Err(Error::invalid("synthetic config counts must all be at least 1"));
        }
        if !(self.factor_vol > 0.0) || !(self.idio_vol > 0.0) {
            return Err(Error::invalid("synthetic config volatilities must be positive"));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Draws an `(assets, index)` pair of return series from a linear factor model.
///
/// Factor 0 is a market factor every asset loads on. Assets are split into
/// contiguous clusters, each dominated by one sector factor (factors
/// `1..n_factors`, cycled), with weak cross-loadings on the remaining factors.
/// The index is a fixed simplex-weighted combination of all assets whose
/// weights depend only on `index_weight_seed`. Output is a pure function of
/// `(cfg, seed)`.
pub fn generate_synthetic_universe(cfg: &SyntheticConfig, seed: u64) -> Result<(ReturnSeries, ReturnSeries)> {
    cfg.validate()?;
    let n = cfg.n_assets;
    let t = cfg.n_periods;
    let k = cfg.n_factors;

    let mut rng = seed::child_rng(seed, 1);
    let strong = Uniform::new(0.5, 1.5).expect("valid range");
    let weak = Uniform::new(-0.2, 0.2).expect("valid range");
    let mut loadings = DMatrix::zeros(n, k);
    for i in 0..n {
        let cluster = i * cfg.cluster_count / n;
        let sector = if k > 1 { 1 + cluster % (k - 1) } else { 0 };
        for f in 0..k {
            loadings[(i, f)] = if f == 0 || f == sector { strong.sample(&mut rng) } else { weak.sample(&mut rng) };
        }
    }

    let mut rng = seed::child_rng(seed, 2);
    let factor_dist = Normal::new(0.0, cfg.factor_vol).expect("positive vol");
    let idio_dist = Normal::new(0.0, cfg.idio_vol).expect("positive vol");
    let factors = DMatrix::from_fn(t, k, |_, _| factor_dist.sample(&mut rng));
    let idio = DMatrix::from_fn(t, n, |_, _| idio_dist.sample(&mut rng));
    let returns = &factors * loadings.transpose() + idio;

    let weights = synthetic_index_weights(n, cfg.index_weight_seed);
    let index = &returns * DVector::from_vec(weights);

    let ids: Vec<String> = (0..n).map(|i| format!("A{:02}", i + 1)).collect();
    let stamps: Vec<String> = (0..t).map(|i| format!("t{i:04}")).collect();
    let assets = ReturnSeries::new(ids, stamps.clone(), returns)?;
    let index = ReturnSeries::new(vec!["INDEX".into()], stamps, DMatrix::from_column_slice(t, 1, index.as_slice()))?;
    Ok((assets, index))
}

/// Flat-Dirichlet weights used for the synthetic index.
pub fn synthetic_index_weights(n: usize, index_weight_seed: u64) -> Vec<f64> {
    let mut rng = seed::child_rng(index_weight_seed, 3);
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Convenience: synthetic universe straight to a tracking problem.
pub fn synthetic_problem(cfg: &SyntheticConfig, seed: u64) -> Result<TrackingProblem> {
    let (assets, index) = generate_synthetic_universe(cfg, seed)?;
    build_tracking_problem(&assets, &index)
}

/// A price table read from CSV: `timestamp,SYM1,SYM2,...`.
///
/// Empty cells and `NA`/`NaN` mark missing observations and are stored as NaN.
#[derive(Debug, Clone)]
pub struct PriceTable {
    pub timestamps: Vec<String>,
    pub symbols: Vec<String>,
    /// Row-major, one row per timestamp.
    pub prices: Vec<Vec<f64>>,
}

impl PriceTable {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 {
            return Err(Error::invalid("price CSV needs a timestamp column and at least one symbol"));
        }
        let symbols: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut seen = HashSet::new();
        if let Some(dup) = symbols.iter().find(|s| !seen.insert(s.as_str())) {
            return Err(Error::invalid(format!("duplicate symbol column {dup}")));
        }
        let mut timestamps = Vec::new();
        let mut prices = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != headers.len() {
                return Err(Error::invalid(format!("row {row} has {} fields, expected {}", record.len(), headers.len())));
            }
            timestamps.push(record[0].to_string());
            let mut values = Vec::with_capacity(symbols.len());
            for (i, cell) in record.iter().skip(1).enumerate() {
                let v = match cell {
                    "" | "NA" | "na" | "NaN" | "nan" | "null" => f64::NAN,
                    s => s.parse::<f64>().map_err(|_| Error::invalid(format!("unparseable price {s:?} at row {row}, asset {}", symbols[i])))?,
                };
                values.push(v);
            }
            prices.push(values);
        }
        Ok(Self { timestamps, symbols, prices })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    /// Rows whose timestamp starts with `date` (e.g. `2019-06-17`). Each day is
    /// treated as an isolated look-back window.
    pub fn window(&self, date: &str) -> PriceTable {
        let keep: Vec<usize> = (0..self.timestamps.len()).filter(|&r| self.timestamps[r].starts_with(date)).collect();
        PriceTable {
            timestamps: keep.iter().map(|&r| self.timestamps[r].clone()).collect(),
            symbols: self.symbols.clone(),
            prices: keep.iter().map(|&r| self.prices[r].clone()).collect(),
        }
    }

    /// Distinct calendar dates (first ten characters of each timestamp), in order of appearance.
    pub fn dates(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.timestamps.iter().map(|t| t.chars().take(10).collect::<String>()).filter(|d| seen.insert(d.clone())).collect()
    }

    pub fn column(&self, symbol: &str) -> Option<Vec<f64>> {
        let i = self.symbols.iter().position(|s| s == symbol)?;
        Some(self.prices.iter().map(|r| r[i]).collect())
    }

    /// Drops one column, returning it.
    pub fn take_column(&mut self, symbol: &str) -> Option<Vec<f64>> {
        let i = self.symbols.iter().position(|s| s == symbol)?;
        self.symbols.remove(i);
        Some(self.prices.iter_mut().map(|r| r.remove(i)).collect())
    }
}

/// Builds a tracking problem from aligned asset and index price columns.
///
/// Assets with any missing or non-positive price inside the window are
/// excluded with a warning. A gap in the index itself is an error.
pub fn problem_from_prices(table: &PriceTable, index_prices: &[f64]) -> Result<TrackingProblem> {
    if index_prices.len() != table.timestamps.len() {
        return Err(Error::invalid(format!("index has {} rows but price table has {}", index_prices.len(), table.timestamps.len())));
    }
    let keep: Vec<usize> = (0..table.symbols.len())
        .filter(|&i| {
            let ok = table.prices.iter().all(|r| r[i].is_finite() && r[i] > 0.0);
            if !ok {
                warn!("excluding asset {} with gaps or non-positive prices in window", table.symbols[i]);
            }
            ok
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::invalid("no asset has a complete price history in the window"));
    }
    let assets: Vec<String> = keep.iter().map(|&i| table.symbols[i].clone()).collect();
    let prices: Vec<Vec<f64>> = table.prices.iter().map(|r| keep.iter().map(|&i| r[i]).collect()).collect();
    let asset_returns = compute_returns_labeled(&prices, &assets, &table.timestamps)?;
    let index_rows: Vec<Vec<f64>> = index_prices.iter().map(|&p| vec![p]).collect();
    let index_returns = compute_returns_labeled(&index_rows, &["INDEX".to_string()], &table.timestamps)?;
    build_tracking_problem(&asset_returns, &index_returns)
}

/// Reads a `timestamp,index` CSV and aligns it to the price table's timestamps.
pub fn align_index_csv(table: &PriceTable, index: &PriceTable) -> Result<Vec<f64>> {
    if index.symbols.len() != 1 {
        return Err(Error::invalid("index CSV must have exactly the columns timestamp,index"));
    }
    table
        .timestamps
        .iter()
        .map(|ts| {
            index
                .timestamps
                .iter()
                .position(|t| t == ts)
                .map(|r| index.prices[r][0])
                .ok_or_else(|| Error::invalid(format!("index has no observation at {ts}")))
        })
        .collect()
}
