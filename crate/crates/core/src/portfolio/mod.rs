//! Diversification search: NSGA-II over scenario objectives, the Markowitz
//! baseline, the random baseline and the risk grid used to pick one
//! portfolio per risk level.

mod markowitz;
mod nsga2;
mod risk;
mod simplex;

use std::io::Write;

use crate::error::{Error, Result};

pub use markowitz::{
    horizon_returns, markowitz_estimate, markowitz_frontier, max_horizon_return,
    min_variance_for_target, MarkowitzModel,
};
pub use nsga2::{crowding_distance, fast_non_dominated_sort, nsga2_optimize, Nsga2Params};
pub use risk::{default_random, risk_grid, select_by_risk, RiskGrid};
pub use simplex::project_simplex;

pub(crate) const SIMPLEX_TOL: f64 = 1e-9;

pub(crate) fn check_simplex(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Contract("empty weight vector".into()));
    }
    if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::Contract(format!("weight {i} is {v}, expected >= 0")));
    }
    let s: f64 = x.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Contract(format!("weights sum to {s}, expected 1")));
    }
    Ok(())
}

/// Long-only fully invested weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Diversification(Vec<f64>);

impl Diversification {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        check_simplex(&weights)?;
        Ok(Self(weights))
    }

    pub fn uniform(assets: usize) -> Self {
        Self(vec![1.0 / assets as f64; assets])
    }

    pub fn vertex(assets: usize, i: usize) -> Self {
        let mut w = vec![0.0; assets];
        w[i] = 1.0;
        Self(w)
    }

    /// Clip negatives to zero and renormalize; all-zero input becomes uniform.
    pub fn repair(raw: &[f64]) -> Self {
        let mut w: Vec<f64> = raw
            .iter()
            .map(|v| if v.is_finite() { v.max(0.0) } else { 0.0 })
            .collect();
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            w.iter_mut().for_each(|v| *v /= s);
            Self(w)
        } else {
            Self::uniform(raw.len())
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn n_assets(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.0.iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParetoPoint {
    pub x: Diversification,
    pub mean: f64,
    pub variance: f64,
}

/// Mutually non-dominated points under (maximize mean, minimize variance).
#[derive(Clone, Debug, PartialEq)]
pub struct ParetoSet {
    pub points: Vec<ParetoPoint>,
}

impl ParetoSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One frontier row per risk level: `zeta, target_return, w..., est_return, est_variance`.
pub fn write_frontier_csv<W: Write>(
    out: W,
    tickers: &[String],
    grid: &RiskGrid,
    weights: &[Diversification],
    estimates: &[(f64, f64)],
) -> Result<()> {
    if weights.len() != grid.len() || estimates.len() != grid.len() {
        return Err(Error::Dimension(format!(
            "{} levels, {} weight vectors, {} estimates",
            grid.len(),
            weights.len(),
            estimates.len()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["zeta".to_string(), "target_return".to_string()];
    header.extend(tickers.iter().cloned());
    header.push("est_return".into());
    header.push("est_variance".into());
    w.write_record(&header).map_err(csv_err)?;
    for (z, (x, (m, v))) in weights.iter().zip(estimates).enumerate() {
        let mut row = vec![(z + 1).to_string(), grid.targets[z].to_string()];
        row.extend(x.weights().iter().map(|v| v.to_string()));
        row.push(m.to_string());
        row.push(v.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("frontier csv", e))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv write failed: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(Diversification::new(vec![0.25, 0.75]).is_ok());
        assert!(Diversification::new(vec![0.5, 0.5 + 2e-9]).is_err());
        assert!(Diversification::new(vec![1.1, -0.1]).is_err());
        assert!(Diversification::new(vec![]).is_err());
    }

    #[test]
    fn repair_clips_and_renormalizes() {
        assert_eq!(Diversification::repair(&[-1.0, 1.0, 3.0]).weights(), &[0.0, 0.25, 0.75]);
        assert_eq!(Diversification::repair(&[-1.0, 0.0]).weights(), &[0.5, 0.5]);
    }

    #[test]
    fn frontier_csv_layout() {
        let grid = risk_grid(1.1, 2).unwrap();
        let ws = vec![Diversification::uniform(2), Diversification::vertex(2, 1)];
        let mut buf = Vec::new();
        write_frontier_csv(&mut buf, &["A".into(), "B".into()], &grid, &ws, &[(1.0, 0.0), (1.2, 0.1)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("zeta,target_return,A,B,est_return,est_variance"));
        assert_eq!(lines.next(), Some("1,1,0.5,0.5,1,0"));
        assert_eq!(lines.count(), 1);
    }
}
