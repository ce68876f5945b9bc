//! Scenario sets and the return/risk estimates computed from them.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::market::PriceTable;
use crate::portfolio::check_simplex;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioSource {
    Gan,
    Historical,
}

/// `n` forward price paths (`A x wf` each) sharing one anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSet {
    /// Last observed real price per asset.
    pub anchor: Vec<f64>,
    pub paths: Vec<DMatrix<f64>>,
    /// Normalized variations the paths were built from, when available.
    pub variations: Option<Vec<DMatrix<f64>>>,
    pub source: ScenarioSource,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.anchor.len()
    }

    pub fn horizon(&self) -> usize {
        self.paths.first().map_or(0, |p| p.ncols())
    }
}

/// Terminal gross returns `e_i / s_i`, one row per scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnsSample {
    pub returns: DMatrix<f64>,
}

impl ReturnsSample {
    pub fn new(returns: DMatrix<f64>) -> Self {
        Self { returns }
    }

    pub fn n_scenarios(&self) -> usize {
        self.returns.nrows()
    }

    pub fn n_assets(&self) -> usize {
        self.returns.ncols()
    }

    /// Sample mean and unbiased variance of `x . r` without validating `x`.
    pub fn mean_variance(&self, x: &[f64]) -> (f64, f64) {
        let n = self.returns.nrows();
        let mut sum = 0.0;
        let mut values = Vec::with_capacity(n);
        for s in 0..n {
            let v: f64 = x.iter().enumerate().map(|(i, w)| w * self.returns[(s, i)]).sum();
            sum += v;
            values.push(v);
        }
        let mean = sum / n as f64;
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (mean, ss / (n as f64 - 1.0))
    }
}

pub fn scenario_returns(scenarios: &ScenarioSet) -> Result<ReturnsSample> {
    let a = scenarios.n_assets();
    if scenarios.horizon() == 0 {
        return Err(Error::Data("scenarios have an empty horizon".into()));
    }
    if scenarios.anchor.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Data("non-positive anchor price".into()));
    }
    let mut out = DMatrix::zeros(scenarios.len(), a);
    for (k, path) in scenarios.paths.iter().enumerate() {
        if path.nrows() != a {
            return Err(Error::Dimension(format!(
                "scenario {k} has {} assets, anchor has {a}",
                path.nrows()
            )));
        }
        for i in 0..a {
            let e = path[(i, path.ncols() - 1)];
            if !(e > 0.0) {
                return Err(Error::Data(format!(
                    "scenario {k}, asset {i}: non-positive terminal price {e}"
                )));
            }
            out[(k, i)] = e / scenarios.anchor[i];
        }
    }
    Ok(ReturnsSample::new(out))
}

pub fn portfolio_return(x: &[f64], r: &[f64]) -> Result<f64> {
    check_simplex(x)?;
    if x.len() != r.len() {
        return Err(Error::Dimension(format!(
            "{} weights for {} returns",
            x.len(),
            r.len()
        )));
    }
    Ok(x.iter().zip(r).map(|(a, b)| a * b).sum())
}

/// `(mean, unbiased variance)` of the portfolio return over the scenarios.
pub fn estimate_objectives(x: &[f64], sample: &ReturnsSample) -> Result<(f64, f64)> {
    check_simplex(x)?;
    if x.len() != sample.n_assets() {
        return Err(Error::Dimension(format!(
            "{} weights for {} assets",
            x.len(),
            sample.n_assets()
        )));
    }
    if sample.n_scenarios() < 2 {
        return Err(Error::Contract(format!(
            "variance needs at least 2 scenarios, got {}",
            sample.n_scenarios()
        )));
    }
    Ok(sample.mean_variance(x))
}

/// Daily log returns along every path, one row per (path, step), one column per asset.
pub fn scenario_log_returns(scenarios: &ScenarioSet) -> Result<DMatrix<f64>> {
    let a = scenarios.anchor.len();
    let steps: usize = scenarios.paths.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(steps, a);
    let mut row = 0;
    for path in &scenarios.paths {
        if path.nrows() != a {
            return Err(Error::Dimension(format!("path with {} assets, anchor has {a}", path.nrows())));
        }
        for t in 0..path.ncols() {
            for i in 0..a {
                let prev = if t == 0 { scenarios.anchor[i] } else { path[(i, t - 1)] };
                let cur = path[(i, t)];
                if !(prev > 0.0 && cur > 0.0) {
                    return Err(Error::Data(format!("non-positive scenario price {cur} for asset {i}")));
                }
                out[(row, i)] = (cur / prev).ln();
            }
            row += 1;
        }
    }
    Ok(out)
}

/// Daily log returns of a price table, one row per day after the first.
pub fn table_log_returns(table: &PriceTable) -> DMatrix<f64> {
    DMatrix::from_fn(table.n_days().saturating_sub(1), table.n_assets(), |t, i| {
        (table.price(i, t + 1) / table.price(i, t)).ln()
    })
}

/// Sample standard deviation of every column.
pub fn column_std(samples: &DMatrix<f64>) -> Vec<f64> {
    let n = samples.nrows() as f64;
    samples
        .column_iter()
        .map(|c| {
            let m = c.sum() / n;
            (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .collect()
}

/// Pearson correlation between columns. Constant columns get zero off-diagonals.
pub fn correlation_matrix(samples: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = samples.nrows();
    if n < 2 {
        return Err(Error::Contract(format!("correlation needs 2 samples, got {n}")));
    }
    let a = samples.ncols();
    let means: Vec<f64> = samples.column_iter().map(|c| c.sum() / n as f64).collect();
    let centered = DMatrix::from_fn(n, a, |t, i| samples[(t, i)] - means[i]);
    let cov = centered.transpose() * &centered;
    Ok(DMatrix::from_fn(a, a, |i, j| {
        if i == j {
            return 1.0;
        }
        let d = (cov[(i, i)] * cov[(j, j)]).sqrt();
        if d > 0.0 { cov[(i, j)] / d } else { 0.0 }
    }))
}
