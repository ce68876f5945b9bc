//! Daily-rebalanced backtests, performance statistics and dominance counts.

use std::io::Write;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::gan::{generate_scenarios, ScenarioModel};
use crate::market::{conditioning_window, normalize_window, PriceTable};
use crate::portfolio::{
    default_random, markowitz_frontier, nsga2_optimize, select_by_risk, Diversification,
    MarkowitzModel, Nsga2Params, RiskGrid,
};
use crate::simulation::scenario_returns;

pub const TRADING_DAYS: f64 = 252.0;
pub const MONTH_DAYS: f64 = 21.0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StrategyKind {
    Scenario,
    Markowitz,
    Default,
    BuyAndHold(usize),
}

impl StrategyKind {
    pub fn label(&self) -> String {
        match self {
            Self::Scenario => "scenario".into(),
            Self::Markowitz => "markowitz".into(),
            Self::Default => "default".into(),
            Self::BuyAndHold(i) => format!("buy_and_hold_{i}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    /// 1-based risk level.
    pub zeta: usize,
    pub horizon: usize,
    /// Days between re-optimizations.
    pub cadence: usize,
}

impl StrategySpec {
    pub fn validate(&self, levels: usize) -> Result<()> {
        if self.zeta == 0 || self.zeta > levels {
            return Err(Error::Config(format!("risk level {} outside 1..={levels}", self.zeta)));
        }
        if self.cadence == 0 {
            return Err(Error::Config("cadence must be at least 1 day".into()));
        }
        Ok(())
    }
}

/// Source of target weights: one diversification per risk level, decided at
/// the close of `day` from prices up to and including `day`.
pub trait WeightPolicy {
    fn levels(&self) -> usize;
    fn decide(&mut self, table: &PriceTable, day: usize) -> Result<Vec<Diversification>>;
}

/// The same weights every day, at every level.
#[derive(Clone, Debug)]
pub struct FixedPolicy {
    pub weights: Diversification,
    pub levels: usize,
}

impl WeightPolicy for FixedPolicy {
    fn levels(&self) -> usize {
        self.levels
    }

    fn decide(&mut self, _: &PriceTable, _: usize) -> Result<Vec<Diversification>> {
        Ok(vec![self.weights.clone(); self.levels])
    }
}

/// Markowitz frontier computed once from the training model.
#[derive(Clone, Debug)]
pub struct MarkowitzPolicy {
    pub frontier: Vec<Diversification>,
}

impl MarkowitzPolicy {
    pub fn new(model: &MarkowitzModel, grid: &RiskGrid) -> Self {
        Self { frontier: markowitz_frontier(model, grid) }
    }
}

impl WeightPolicy for MarkowitzPolicy {
    fn levels(&self) -> usize {
        self.frontier.len()
    }

    fn decide(&mut self, _: &PriceTable, _: usize) -> Result<Vec<Diversification>> {
        Ok(self.frontier.clone())
    }
}

/// Uniformly random diversifications, drawn afresh every decision day.
#[derive(Clone, Debug)]
pub struct DefaultPolicy {
    pub model: MarkowitzModel,
    pub levels: usize,
    pub seed: u64,
}

impl WeightPolicy for DefaultPolicy {
    fn levels(&self) -> usize {
        self.levels
    }

    fn decide(&mut self, _: &PriceTable, day: usize) -> Result<Vec<Diversification>> {
        default_random(self.levels, &self.model, mix_seed(self.seed, day as u64))
    }
}

/// Scenario-based policy: generate scenarios from the latest window, evolve
/// a Pareto front on their mean and variance, then pick one point per level.
#[derive(Clone, Debug)]
pub struct ScenarioPolicy {
    pub model: ScenarioModel,
    pub grid: RiskGrid,
    pub nsga: Nsga2Params,
    pub n_scenarios: usize,
    pub seed: u64,
}

impl WeightPolicy for ScenarioPolicy {
    fn levels(&self) -> usize {
        self.grid.len()
    }

    fn decide(&mut self, table: &PriceTable, day: usize) -> Result<Vec<Diversification>> {
        let hp = &self.model.generator.hp;
        let raw = conditioning_window(table, day, hp.wb)?;
        let window = normalize_window(&raw)?;
        let day_seed = mix_seed(self.seed, day as u64);
        let set = generate_scenarios(&self.model, table.tickers(), &window, self.n_scenarios, day_seed)?;
        let sample = scenario_returns(&set)?;
        let front = nsga2_optimize(|x| sample.mean_variance(x), table.n_assets(), &self.nsga, day_seed)?;
        select_by_risk(&front, &self.grid)
    }
}

/// SplitMix64 finalizer over `seed + index`, for per-day sub-seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Portfolio value path. Step `t` holds `weights[t]` from `dates[t]` to
/// `dates[t + 1]` and `values[t + 1] = values[t] * gross[t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BacktestLedger {
    pub strategy: String,
    pub zeta: usize,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
    pub weights: Vec<Diversification>,
    /// `x(t) . p(t+1) / p(t)`.
    pub gross: Vec<f64>,
    /// Last date whose prices informed `weights[t]`.
    pub decision_dates: Vec<NaiveDate>,
}

impl BacktestLedger {
    pub fn steps(&self) -> usize {
        self.gross.len()
    }

    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("value(0) always present")
    }

    /// Daily net returns `gross - 1`.
    pub fn daily_returns(&self) -> Vec<f64> {
        self.gross.iter().map(|g| g - 1.0).collect()
    }

    /// Checks the recursion without the price table.
    pub fn recursion_holds(&self) -> bool {
        self.values[0] == 1.0
            && self.values.len() == self.gross.len() + 1
            && (0..self.steps()).all(|t| self.values[t + 1] == self.values[t] * self.gross[t])
    }

    /// Every decision used only prices dated strictly before the realization date.
    pub fn no_look_ahead(&self) -> bool {
        (0..self.steps()).all(|t| self.decision_dates[t] <= self.dates[t] && self.decision_dates[t] < self.dates[t + 1])
    }
}

fn gross_return(table: &PriceTable, x: &Diversification, t: usize) -> Result<f64> {
    let mut g = 0.0;
    for (i, w) in x.weights().iter().enumerate() {
        let (p0, p1) = (table.price(i, t), table.price(i, t + 1));
        if !(p0 > 0.0 && p0.is_finite() && p1 > 0.0 && p1.is_finite()) {
            return Err(Error::Data(format!(
                "missing price for {} around {}",
                table.tickers()[i],
                table.dates()[t]
            )));
        }
        g += w * (p1 / p0);
    }
    Ok(g)
}

/// Runs one ledger per requested level over days `start..end` of `table`,
/// sharing each decision across levels.
pub fn run_backtest_levels(
    table: &PriceTable,
    start: usize,
    end: usize,
    policy: &mut dyn WeightPolicy,
    levels: &[usize],
    cadence: usize,
    strategy: &str,
) -> Result<Vec<BacktestLedger>> {
    if cadence == 0 {
        return Err(Error::Config("cadence must be at least 1 day".into()));
    }
    if end > table.n_days() || start + 1 >= end {
        return Err(Error::Data(format!(
            "test period {start}..{end} needs at least two days inside a {}-day table",
            table.n_days()
        )));
    }
    if let Some(z) = levels.iter().find(|&&z| z == 0 || z > policy.levels()) {
        return Err(Error::Config(format!("risk level {z} outside 1..={}", policy.levels())));
    }
    let mut ledgers: Vec<BacktestLedger> = levels
        .iter()
        .map(|&zeta| BacktestLedger {
            strategy: strategy.to_string(),
            zeta,
            dates: vec![table.dates()[start]],
            values: vec![1.0],
            weights: Vec::new(),
            gross: Vec::new(),
            decision_dates: Vec::new(),
        })
        .collect();
    let mut current: Vec<Diversification> = Vec::new();
    let mut decided = start;
    for t in start..end - 1 {
        if (t - start).is_multiple_of(cadence) {
            current = policy.decide(table, t)?;
            if current.len() != policy.levels() {
                return Err(Error::Contract(format!(
                    "policy returned {} diversifications for {} levels",
                    current.len(),
                    policy.levels()
                )));
            }
            decided = t;
        }
        for ledger in &mut ledgers {
            let x = &current[ledger.zeta - 1];
            if x.n_assets() != table.n_assets() {
                return Err(Error::Dimension(format!(
                    "{} weights for {} assets",
                    x.n_assets(),
                    table.n_assets()
                )));
            }
            let g = gross_return(table, x, t)?;
            let v = ledger.values[ledger.values.len() - 1] * g;
            ledger.values.push(v);
            ledger.gross.push(g);
            ledger.weights.push(x.clone());
            ledger.dates.push(table.dates()[t + 1]);
            ledger.decision_dates.push(table.dates()[decided]);
        }
    }
    debug_assert!(ledgers.iter().all(BacktestLedger::no_look_ahead));
    Ok(ledgers)
}

pub fn run_backtest(
    table: &PriceTable,
    start: usize,
    end: usize,
    spec: &StrategySpec,
    policy: &mut dyn WeightPolicy,
) -> Result<BacktestLedger> {
    spec.validate(policy.levels())?;
    let mut out = run_backtest_levels(table, start, end, policy, &[spec.zeta], spec.cadence, &spec.kind.label())?;
    Ok(out.remove(0))
}

fn mean_std(r: &[f64]) -> Result<(f64, f64)> {
    if r.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "volatility needs at least 2 daily returns, got {}",
            r.len()
        )));
    }
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

/// Annualized mean daily return over annualized volatility, risk-free 0.
pub fn sharpe_ratio(ledger: &BacktestLedger) -> Result<f64> {
    let (mean, std) = mean_std(&ledger.daily_returns())?;
    // Rounding leaves tiny residuals for constant series.
    if std <= 1e-14 * mean.abs().max(1e-3) {
        return Err(Error::UndefinedMetric("zero volatility".into()));
    }
    Ok(mean * TRADING_DAYS / (std * TRADING_DAYS.sqrt()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerformanceReport {
    pub strategy: String,
    pub zeta: usize,
    pub final_value: f64,
    pub annualized_return: f64,
    pub annualized_volatility: f64,
    pub monthly_return: f64,
    pub monthly_volatility: f64,
    pub sharpe: Option<f64>,
}

impl PerformanceReport {
    pub fn from_ledger(ledger: &BacktestLedger) -> Result<Self> {
        let (mean, std) = mean_std(&ledger.daily_returns())?;
        Ok(Self {
            strategy: ledger.strategy.clone(),
            zeta: ledger.zeta,
            final_value: ledger.final_value(),
            annualized_return: mean * TRADING_DAYS,
            annualized_volatility: std * TRADING_DAYS.sqrt(),
            monthly_return: mean * MONTH_DAYS,
            monthly_volatility: std * MONTH_DAYS.sqrt(),
            sharpe: sharpe_ratio(ledger).ok(),
        })
    }
}

/// `(annualized return, annualized volatility)` per ledger, in order.
pub fn risk_profile(ledgers: &[BacktestLedger]) -> Result<Vec<(f64, f64)>> {
    ledgers
        .iter()
        .map(|l| PerformanceReport::from_ledger(l).map(|r| (r.annualized_return, r.annualized_volatility)))
        .collect()
}

/// `p` beats `q` when it is better in one of (return, volatility) and not worse in the other.
fn beats(p: (f64, f64), q: (f64, f64)) -> bool {
    (p.1 <= q.1 && p.0 > q.0) || (p.1 < q.1 && p.0 >= q.0)
}

/// Percentages of levels where the first side dominates the second, and vice versa.
/// Entries are `(return, volatility)`.
pub fn dominance_metrics(scenario: &[(f64, f64)], markowitz: &[(f64, f64)]) -> Result<(f64, f64)> {
    if scenario.len() != markowitz.len() || scenario.is_empty() {
        return Err(Error::Contract(format!(
            "dominance over {} and {} levels",
            scenario.len(),
            markowitz.len()
        )));
    }
    let z = scenario.len() as f64;
    let p2m = scenario.iter().zip(markowitz).filter(|(p, m)| beats(**p, **m)).count() as f64;
    let m2p = scenario.iter().zip(markowitz).filter(|(p, m)| beats(**m, **p)).count() as f64;
    Ok((100.0 * p2m / z, 100.0 * m2p / z))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv write failed: {e}"))
}

/// One row per trading step: realization date, value after the step, net
/// return, the weights that earned it and the decision date.
pub fn write_ledger_csv<W: Write>(out: W, ledger: &BacktestLedger, tickers: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string(), "value".into(), "realized_return".into()];
    header.extend(tickers.iter().cloned());
    header.push("decision_date".into());
    w.write_record(&header).map_err(csv_err)?;
    for t in 0..ledger.steps() {
        let mut row = vec![
            ledger.dates[t + 1].to_string(),
            ledger.values[t + 1].to_string(),
            (ledger.gross[t] - 1.0).to_string(),
        ];
        row.extend(ledger.weights[t].weights().iter().map(|v| v.to_string()));
        row.push(ledger.decision_dates[t].to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("ledger csv", e))
}

/// `strategy, setting, zeta, monthly_return, volatility, sharpe`; volatility is monthly.
pub fn write_report_csv<W: Write>(out: W, rows: &[(String, PerformanceReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["strategy", "setting", "zeta", "monthly_return", "volatility", "sharpe"])
        .map_err(csv_err)?;
    for (setting, r) in rows {
        let sharpe = r.sharpe.map_or_else(|| "undefined".to_string(), |s| s.to_string());
        w.write_record([
            r.strategy.clone(),
            setting.clone(),
            r.zeta.to_string(),
            r.monthly_return.to_string(),
            r.monthly_volatility.to_string(),
            sharpe,
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("report csv", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beats_truth_table() {
        assert!(beats((2.0, 1.0), (1.0, 1.0)));
        assert!(beats((1.0, 0.5), (1.0, 1.0)));
        assert!(!beats((1.0, 1.0), (1.0, 1.0)));
        assert!(!beats((2.0, 2.0), (1.0, 1.0)));
    }

    #[test]
    fn seeds_are_mixed() {
        assert_ne!(mix_seed(1, 0), mix_seed(1, 1));
        assert_ne!(mix_seed(1, 0), mix_seed(2, 0));
        assert_eq!(mix_seed(5, 9), mix_seed(5, 9));
    }
}
