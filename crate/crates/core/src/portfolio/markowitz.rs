use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{project_simplex, Diversification, RiskGrid};
use crate::error::{Error, Result};
use crate::market::PriceTable;

/// Mean and covariance of horizon-length gross returns.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkowitzModel {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub horizon: usize,
}

impl MarkowitzModel {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, horizon: usize) -> Result<Self> {
        let a = mu.len();
        if a == 0 || sigma.shape() != (a, a) {
            return Err(Error::Dimension(format!(
                "mu has {a} entries, sigma is {:?}",
                sigma.shape()
            )));
        }
        for i in 0..a {
            for j in 0..i {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-10 {
                    return Err(Error::Contract(format!("sigma not symmetric at ({i}, {j})")));
                }
            }
        }
        let min_eig = SymmetricEigen::new(sigma.clone()).eigenvalues.min();
        if min_eig < -1e-10 {
            return Err(Error::Contract(format!("sigma not PSD, eigenvalue {min_eig}")));
        }
        Ok(Self { mu, sigma, horizon })
    }

    pub fn n_assets(&self) -> usize {
        self.mu.len()
    }

    pub fn expected_return(&self, x: &Diversification) -> f64 {
        x.dot(self.mu.as_slice())
    }

    pub fn variance(&self, x: &Diversification) -> f64 {
        let v = DVector::from_column_slice(x.weights());
        (v.transpose() * &self.sigma * &v)[(0, 0)]
    }
}

/// Gross returns `e/s` over consecutive non-overlapping `horizon`-day blocks,
/// one row per block.
pub fn horizon_returns(table: &PriceTable, horizon: usize) -> Result<DMatrix<f64>> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be positive".into()));
    }
    let blocks = (table.n_days() - 1) / horizon;
    if blocks < 2 {
        return Err(Error::Data(format!(
            "{} days give {blocks} blocks of {horizon} days, need at least 2",
            table.n_days()
        )));
    }
    let a = table.n_assets();
    Ok(DMatrix::from_fn(blocks, a, |k, i| {
        table.price(i, (k + 1) * horizon) / table.price(i, k * horizon)
    }))
}

pub fn markowitz_estimate(table: &PriceTable, horizon: usize) -> Result<MarkowitzModel> {
    let r = horizon_returns(table, horizon)?;
    let n = r.nrows() as f64;
    let mu = DVector::from_fn(r.ncols(), |i, _| r.column(i).sum() / n);
    let centered = DMatrix::from_fn(r.nrows(), r.ncols(), |k, i| r[(k, i)] - mu[i]);
    let mut sigma = centered.transpose() * &centered / (n - 1.0);
    sigma = (&sigma + sigma.transpose()) * 0.5;
    MarkowitzModel::new(mu, sigma, horizon)
}

/// Largest block return over all assets: the `r_max` of the risk grid.
pub fn max_horizon_return(table: &PriceTable, horizon: usize) -> Result<f64> {
    Ok(horizon_returns(table, horizon)?.max())
}

const PG_MAX_ITERS: usize = 20_000;
const PG_TOL: f64 = 1e-10;

/// Projection onto `{x in simplex : mu . x >= r}` through the halfspace multiplier.
fn project_feasible(y: &[f64], mu: &[f64], r: f64) -> Vec<f64> {
    let ret = |x: &[f64]| x.iter().zip(mu).map(|(a, b)| a * b).sum::<f64>();
    let at = |lambda: f64| {
        let shifted: Vec<f64> = y.iter().zip(mu).map(|(v, m)| v + lambda * m).collect();
        project_simplex(&shifted)
    };
    let x0 = project_simplex(y);
    if ret(&x0) >= r {
        return x0;
    }
    let mut hi = 1.0;
    let mut x_hi = at(hi);
    for _ in 0..200 {
        if ret(&x_hi) >= r {
            break;
        }
        hi *= 2.0;
        x_hi = at(hi);
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let x = at(mid);
        if ret(&x) >= r {
            hi = mid;
            x_hi = x;
        } else {
            lo = mid;
        }
    }
    x_hi
}

/// Solve the equality-constrained KKT system on a support set.
/// Returns the full weight vector and the multipliers `(lambda, nu)`.
fn kkt_on_support(
    model: &MarkowitzModel,
    support: &[usize],
    return_active: bool,
    r: f64,
) -> Option<(Vec<f64>, f64, f64)> {
    let m = support.len();
    let extra = 1 + usize::from(return_active);
    let dim = m + extra;
    let mut k = DMatrix::zeros(dim, dim);
    let mut b = DVector::zeros(dim);
    for (p, &i) in support.iter().enumerate() {
        for (q, &j) in support.iter().enumerate() {
            k[(p, q)] = 2.0 * model.sigma[(i, j)];
        }
        k[(p, m)] = -1.0;
        k[(m, p)] = 1.0;
        if return_active {
            k[(p, m + 1)] = -model.mu[i];
            k[(m + 1, p)] = model.mu[i];
        }
    }
    b[m] = 1.0;
    if return_active {
        b[m + 1] = r;
    }
    let sol = k.clone().svd(true, true).solve(&b, 1e-13).ok()?;
    if (&k * &sol - &b).amax() > 1e-10 {
        return None;
    }
    let mut x = vec![0.0; model.n_assets()];
    for (p, &i) in support.iter().enumerate() {
        x[i] = sol[p];
    }
    let lambda = if return_active { sol[m + 1] } else { 0.0 };
    Some((x, lambda, sol[m]))
}

/// Active-set refinement of a projected-gradient iterate.
fn polish(model: &MarkowitzModel, start: &[f64], r: f64) -> Option<Vec<f64>> {
    let a = model.n_assets();
    let mut support: Vec<usize> = (0..a).filter(|&i| start[i] > 1e-9).collect();
    let start_ret: f64 = start.iter().zip(model.mu.iter()).map(|(x, m)| x * m).sum();
    let mut active = start_ret - r <= 1e-8;
    for _ in 0..(4 * a + 10) {
        if support.is_empty() {
            return None;
        }
        let (x, lambda, nu) = kkt_on_support(model, &support, active, r)?;
        if let Some(&worst) = support
            .iter()
            .filter(|&&i| x[i] < -1e-13)
            .min_by(|&&i, &&j| x[i].total_cmp(&x[j]))
        {
            support.retain(|&i| i != worst);
            continue;
        }
        if active && lambda < -1e-12 {
            active = false;
            continue;
        }
        let ret: f64 = x.iter().zip(model.mu.iter()).map(|(x, m)| x * m).sum();
        if !active && ret < r - 1e-13 {
            active = true;
            continue;
        }
        let xv = DVector::from_column_slice(&x);
        let grad = &model.sigma * &xv * 2.0;
        let slack = |i: usize| grad[i] - lambda * model.mu[i] - nu;
        if let Some(enter) = (0..a)
            .filter(|i| !support.contains(i) && slack(*i) < -1e-12)
            .min_by(|&i, &j| slack(i).total_cmp(&slack(j)))
        {
            support.push(enter);
            support.sort_unstable();
            continue;
        }
        return Some(x.iter().map(|&v| if v < 1e-12 { 0.0 } else { v }).collect());
    }
    None
}

/// Long-only minimum-variance portfolio with expected return at least `target`.
/// Targets above the best single asset are clamped to it.
pub fn min_variance_for_target(model: &MarkowitzModel, target: f64) -> Diversification {
    let a = model.n_assets();
    let mu = model.mu.as_slice();
    let r = target.min(model.mu.max());
    let lipschitz = 2.0 * SymmetricEigen::new(model.sigma.clone()).eigenvalues.max();

    let mut x = project_feasible(&vec![1.0 / a as f64; a], mu, r);
    if lipschitz > 0.0 {
        for _ in 0..PG_MAX_ITERS {
            let xv = DVector::from_column_slice(&x);
            let g = &model.sigma * &xv * 2.0;
            let y: Vec<f64> = (0..a).map(|i| x[i] - g[i] / lipschitz).collect();
            let next = project_feasible(&y, mu, r);
            let step = next.iter().zip(&x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            x = next;
            if step < PG_TOL {
                break;
            }
        }
    }
    match polish(model, &x, r) {
        Some(p) => Diversification::repair(&p),
        None => Diversification::repair(&x),
    }
}

pub fn markowitz_frontier(model: &MarkowitzModel, grid: &RiskGrid) -> Vec<Diversification> {
    grid.targets.iter().map(|&t| min_variance_for_target(model, t)).collect()
}
