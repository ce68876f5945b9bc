use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::{Diversification, MarkowitzModel, ParetoSet};
use crate::error::{Error, Result};

/// Target returns spread uniformly from 1 to `2 r_max - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskGrid {
    pub targets: Vec<f64>,
    pub r_max: f64,
}

impl RiskGrid {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Target for the 1-based level `zeta`.
    pub fn target(&self, zeta: usize) -> Option<f64> {
        zeta.checked_sub(1).and_then(|i| self.targets.get(i).copied())
    }
}

pub fn risk_grid(r_max: f64, levels: usize) -> Result<RiskGrid> {
    if levels < 2 {
        return Err(Error::Config(format!("risk grid needs at least 2 levels, got {levels}")));
    }
    if !(r_max >= 1.0) || !r_max.is_finite() {
        return Err(Error::Contract(format!("r_max must be finite and >= 1, got {r_max}")));
    }
    let top = 2.0 * r_max - 1.0;
    let step = (top - 1.0) / (levels - 1) as f64;
    let targets = (0..levels).map(|z| 1.0 + z as f64 * step).collect();
    Ok(RiskGrid { targets, r_max })
}

/// Distances this close count as equal.
const TIE_TOL: f64 = 1e-12;

/// Per level, the front point whose mean is nearest the target; the lower
/// variance wins a tie.
pub fn select_by_risk(pareto: &ParetoSet, grid: &RiskGrid) -> Result<Vec<Diversification>> {
    if pareto.is_empty() {
        return Err(Error::Contract("empty Pareto set".into()));
    }
    Ok(grid
        .targets
        .iter()
        .map(|&t| {
            let mut best = &pareto.points[0];
            for p in &pareto.points[1..] {
                let (d, db) = ((t - p.mean).abs(), (t - best.mean).abs());
                let tie = (d - db).abs() <= TIE_TOL;
                if (!tie && d < db) || (tie && p.variance < best.variance) {
                    best = p;
                }
            }
            best.x.clone()
        })
        .collect())
}

/// `levels` uniform draws from the simplex, ordered by expected return.
pub fn default_random(levels: usize, model: &MarkowitzModel, seed: u64) -> Result<Vec<Diversification>> {
    if levels == 0 {
        return Err(Error::Config("need at least one level".into()));
    }
    let a = model.n_assets();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws: Vec<(f64, Diversification)> = (0..levels)
        .map(|_| {
            let e: Vec<f64> = (0..a).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let x = Diversification::repair(&e);
            (model.expected_return(&x), x)
        })
        .collect();
    draws.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(draws.into_iter().map(|(_, x)| x).collect())
}
