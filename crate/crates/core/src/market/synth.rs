use chrono::{Datelike, Days, NaiveDate, Weekday};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::PriceTable;
use crate::error::{Error, Result};

/// Correlated geometric Brownian motion market.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub assets: usize,
    pub days: usize,
    /// Daily log-drift per asset.
    pub drift: Vec<f64>,
    /// Daily volatility per asset.
    pub vol: Vec<f64>,
    pub correlation: DMatrix<f64>,
    pub initial_price: f64,
    pub start: NaiveDate,
    pub seed: u64,
}

impl SynthConfig {
    /// Two assets with correlation `rho` and mild drifts.
    pub fn pair(rho: f64, days: usize, seed: u64) -> Self {
        Self {
            assets: 2,
            days,
            drift: vec![3e-4, 1e-4],
            vol: vec![0.015, 0.01],
            correlation: DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]),
            initial_price: 100.0,
            start: NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date"),
            seed,
        }
    }

    pub fn tickers(&self) -> Vec<String> {
        (0..self.assets).map(|i| format!("SYN{i}")).collect()
    }
}

/// Lower-triangular `L` with `L L^T = m` for positive semi-definite `m`.
/// Columns whose pivot vanishes (within `tol`) are zeroed, which handles
/// perfectly correlated assets.
pub(crate) fn psd_cholesky(m: &DMatrix<f64>, tol: f64) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return None;
        }
        if d <= tol {
            // Remaining entries of this column must vanish too.
            for i in j + 1..n {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                if s.abs() > tol.sqrt() {
                    return None;
                }
            }
            continue;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

pub fn synth_correlated_gbm(config: &SynthConfig) -> Result<PriceTable> {
    let a = config.assets;
    if a == 0 || config.days == 0 {
        return Err(Error::Config("synthetic market needs assets and days".into()));
    }
    if config.drift.len() != a || config.vol.len() != a {
        return Err(Error::Config(format!(
            "{a} assets but {} drifts and {} volatilities",
            config.drift.len(),
            config.vol.len()
        )));
    }
    if config.vol.iter().any(|v| *v < 0.0) || !(config.initial_price > 0.0) {
        return Err(Error::Config("volatility must be >= 0 and initial price > 0".into()));
    }
    let c = &config.correlation;
    if c.nrows() != a || c.ncols() != a {
        return Err(Error::Config(format!(
            "correlation matrix is {}x{} for {a} assets",
            c.nrows(),
            c.ncols()
        )));
    }
    for i in 0..a {
        if (c[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(Error::Config("correlation diagonal must be 1".into()));
        }
        for j in 0..i {
            if (c[(i, j)] - c[(j, i)]).abs() > 1e-12 {
                return Err(Error::Config("correlation matrix is not symmetric".into()));
            }
        }
    }
    let l = psd_cholesky(c, 1e-12)
        .ok_or_else(|| Error::Config("correlation matrix is not positive semi-definite".into()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut prices = DMatrix::zeros(a, config.days);
    let mut log_p = vec![config.initial_price.ln(); a];
    let mut z = vec![0.0; a];
    for t in 0..config.days {
        if t > 0 {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            for i in 0..a {
                let shock: f64 = (0..=i).map(|k| l[(i, k)] * z[k]).sum();
                let (mu, sigma) = (config.drift[i], config.vol[i]);
                log_p[i] += mu - 0.5 * sigma * sigma + sigma * shock;
            }
        }
        for i in 0..a {
            prices[(i, t)] = log_p[i].exp();
        }
    }
    PriceTable::new(config.tickers(), business_days(config.start, config.days), prices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_returns(t: &PriceTable, asset: usize) -> Vec<f64> {
        (1..t.n_days()).map(|d| (t.price(asset, d) / t.price(asset, d - 1)).ln()).collect()
    }

    fn correlation(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn zero_volatility_is_exponential_drift() {
        let mut cfg = SynthConfig::pair(0.3, 50, 1);
        cfg.vol = vec![0.0, 0.0];
        let t = synth_correlated_gbm(&cfg).unwrap();
        for d in 0..50 {
            let expected = 100.0 * (3e-4 * d as f64).exp();
            assert!((t.price(0, d) - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn perfectly_correlated_identical_assets_move_together() {
        let mut cfg = SynthConfig::pair(1.0, 300, 4);
        cfg.drift = vec![2e-4, 2e-4];
        cfg.vol = vec![0.02, 0.02];
        let t = synth_correlated_gbm(&cfg).unwrap();
        let (r0, r1) = (log_returns(&t, 0), log_returns(&t, 1));
        assert!(r0.iter().zip(&r1).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn sample_correlation_matches_target() {
        let t = synth_correlated_gbm(&SynthConfig::pair(0.8, 10_000, 42)).unwrap();
        let rho = correlation(&log_returns(&t, 0), &log_returns(&t, 1));
        assert!((0.75..=0.85).contains(&rho), "{rho}");
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig::pair(0.5, 100, 9);
        assert_eq!(synth_correlated_gbm(&cfg).unwrap(), synth_correlated_gbm(&cfg).unwrap());
        let other = SynthConfig { seed: 10, ..cfg.clone() };
        assert_ne!(synth_correlated_gbm(&cfg).unwrap(), synth_correlated_gbm(&other).unwrap());
    }

    #[test]
    fn non_psd_correlation_is_rejected() {
        let mut cfg = SynthConfig::pair(0.0, 10, 1);
        cfg.assets = 3;
        cfg.drift = vec![0.0; 3];
        cfg.vol = vec![0.01; 3];
        cfg.correlation = DMatrix::from_row_slice(3, 3, &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0]);
        assert!(matches!(synth_correlated_gbm(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn dates_skip_weekends() {
        let t = synth_correlated_gbm(&SynthConfig::pair(0.2, 10, 1)).unwrap();
        assert!(t.dates().iter().all(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)));
    }
}
