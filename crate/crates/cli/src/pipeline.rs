//! Shared steps behind the commands.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use trendgan::backtest::{
    risk_profile, run_backtest_levels, BacktestLedger, DefaultPolicy, MarkowitzPolicy, ScenarioPolicy,
    WeightPolicy,
};
use trendgan::gan::{generate_scenarios, Checkpoint, GanTrainer, ScenarioModel, StepRecord, TrainingData};
use trendgan::market::{
    conditioning_window, load_csv, make_windows, normalize_window, synth_correlated_gbm, MarketWindow,
    PriceTable, SynthConfig,
};
use trendgan::portfolio::{markowitz_estimate, max_horizon_return, risk_grid, MarkowitzModel, RiskGrid};
use trendgan::simulation::ScenarioSet;
use trendgan::{Error, Result};

use crate::config::{DataSource, RunConfig, Split, SynthSettings};

pub fn synth_config(s: &SynthSettings) -> SynthConfig {
    let mut c = SynthConfig::pair(s.rho, s.days, s.seed);
    if s.assets != 2 {
        c.assets = s.assets;
        c.drift = (0..s.assets).map(|i| 1e-4 + 1e-4 * (i % 3) as f64).collect();
        c.vol = (0..s.assets).map(|i| 0.01 + 0.0025 * (i % 3) as f64).collect();
        c.correlation = DMatrix::from_fn(s.assets, s.assets, |i, j| if i == j { 1.0 } else { s.rho });
    }
    c
}

/// Price table with its split: training covers days `0..=start`, the test
/// backtest runs from the close of `start` to the last day.
pub struct Market {
    pub table: PriceTable,
    pub train: PriceTable,
    pub start: usize,
}

pub fn load_table(cfg: &RunConfig) -> Result<PriceTable> {
    match &cfg.data {
        DataSource::Csv(p) => load_csv(p),
        DataSource::Synth => synth_correlated_gbm(&synth_config(&cfg.synth)),
    }
}

pub fn load_market(cfg: &RunConfig) -> Result<Market> {
    let table = load_table(cfg)?;
    let start = match cfg.split {
        Split::Auto => table.n_days().checked_sub(cfg.test_days + 1).ok_or_else(|| {
            Error::Data(format!("{} days leave no room for {} test days", table.n_days(), cfg.test_days))
        })?,
        Split::Date(d) => table.split_at_date(d)?.1 - 1,
    };
    let train = table.slice_days(0, start + 1)?;
    Ok(Market { table, train, start })
}

pub fn training_windows(train: &PriceTable, cfg: &RunConfig) -> Result<Vec<MarketWindow>> {
    let hp = cfg.hyper_params(train.n_assets())?;
    make_windows(train, hp.wb, hp.wf, cfg.window_stride)?
        .iter()
        .map(normalize_window)
        .collect()
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

/// Trains for `steps` generator steps, writing one log row per step.
pub fn train_model(cfg: &RunConfig, market: &Market, seed: u64, steps: u64, log: impl Write) -> Result<Checkpoint> {
    let hp = cfg.hyper_params(market.table.n_assets())?;
    let data = TrainingData::from_windows(&training_windows(&market.train, cfg)?)?;
    if data.skipped() > 0 {
        log::warn!("skipped {} degenerate training windows", data.skipped());
    }
    let mut w = csv::Writer::from_writer(log);
    let csv_err = |e: csv::Error| Error::Data(format!("training log: {e}"));
    w.write_record(["step", "critic_loss", "wasserstein", "gp", "generator_loss", "diversity"])
        .map_err(csv_err)?;
    let mut trainer = GanTrainer::new(&hp, seed)?;
    trainer.train(&data, steps, 100, |_, r: &StepRecord| {
        if r.diversity.is_some() {
            log::info!("step {} wasserstein {:.5} gp {:.5}", r.step, r.wasserstein, r.gp);
        }
        w.write_record([
            r.step.to_string(),
            r.critic_loss.to_string(),
            r.wasserstein.to_string(),
            r.gp.to_string(),
            r.generator_loss.to_string(),
            r.diversity.map_or(String::new(), |d| d.to_string()),
        ])
        .map_err(csv_err)
    })?;
    w.flush().map_err(|e| Error::io("training log", e))?;
    Ok(trainer.checkpoint(market.table.tickers()))
}

pub fn markowitz_setup(cfg: &RunConfig, market: &Market, wf: usize) -> Result<(MarkowitzModel, RiskGrid)> {
    let horizon = cfg.markowitz_horizon.unwrap_or(wf);
    let model = markowitz_estimate(&market.train, horizon)?;
    let r_max = max_horizon_return(&market.train, horizon)?;
    if r_max < 1.0 {
        log::warn!("every asset lost over every training block; risk grid starts flat at 1");
    }
    let grid = risk_grid(r_max.max(1.0), cfg.levels)?;
    Ok((model, grid))
}

/// Scenarios conditioned on the window ending at table day `day`.
pub fn scenarios_at(model: &ScenarioModel, table: &PriceTable, day: usize, n: usize, seed: u64) -> Result<(MarketWindow, ScenarioSet)> {
    let raw = conditioning_window(table, day, model.generator.hp.wb)?;
    let window = normalize_window(&raw)?;
    let set = generate_scenarios(model, table.tickers(), &window, n, seed)?;
    Ok((window, set))
}

pub struct Backtests {
    pub grid: RiskGrid,
    /// Per strategy, one ledger per risk level in order.
    pub strategies: Vec<(String, Vec<BacktestLedger>)>,
}

impl Backtests {
    pub fn ledgers(&self, name: &str) -> &[BacktestLedger] {
        &self.strategies.iter().find(|(n, _)| n == name).expect("strategy present").1
    }

    pub fn dominance(&self) -> Result<(f64, f64)> {
        trendgan::backtest::dominance_metrics(
            &risk_profile(self.ledgers("scenario"))?,
            &risk_profile(self.ledgers("markowitz"))?,
        )
    }
}

pub fn run_backtests(cfg: &RunConfig, market: &Market, ckpt: &Checkpoint, seed: u64) -> Result<Backtests> {
    let model = ScenarioModel::from_checkpoint(ckpt);
    let (mk, grid) = markowitz_setup(cfg, market, ckpt.hp.wf)?;
    let levels: Vec<usize> = (1..=cfg.levels).collect();
    let end = market.table.n_days();
    let mut policies: Vec<(&str, Box<dyn WeightPolicy>)> = vec![
        (
            "scenario",
            Box::new(ScenarioPolicy {
                model,
                grid: grid.clone(),
                nsga: cfg.nsga.clone(),
                n_scenarios: cfg.scenarios,
                seed,
            }),
        ),
        ("markowitz", Box::new(MarkowitzPolicy::new(&mk, &grid))),
        ("default", Box::new(DefaultPolicy { model: mk.clone(), levels: cfg.levels, seed })),
    ];
    let mut strategies = Vec::new();
    for (name, policy) in &mut policies {
        log::info!("backtesting {name}");
        let ledgers = run_backtest_levels(&market.table, market.start, end, policy.as_mut(), &levels, cfg.cadence, name)?;
        strategies.push((name.to_string(), ledgers));
    }
    Ok(Backtests { grid, strategies })
}

pub fn setting_name(zeta: usize) -> String {
    match zeta {
        5 => "defensive".into(),
        13 => "balanced".into(),
        21 => "aggressive".into(),
        z => format!("level-{z}"),
    }
}

/// Median of a non-empty slice, averaging the middle pair for even lengths.
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) }
}

pub fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?))
}
