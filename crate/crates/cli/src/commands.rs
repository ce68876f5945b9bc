use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use sha2::{Digest, Sha256};
use trendgan::backtest::{write_ledger_csv, write_report_csv, PerformanceReport};
use trendgan::gan::{diversity_score, is_collapsed, Checkpoint, ScenarioModel};
use trendgan::market::{find_spikes, read_csv, synth_correlated_gbm, write_csv, PriceTable};
use trendgan::portfolio::{
    markowitz_frontier, nsga2_optimize, select_by_risk, write_frontier_csv,
};
use trendgan::simulation::scenario_returns;
use trendgan::{Error, Result};

use crate::config::{RunConfig, SynthSettings};
use crate::pipeline::{
    create_file, load_market, markowitz_setup, median, run_backtests, scenarios_at, seed_dir,
    setting_name, synth_config, train_model, Market,
};
use crate::svg::fan_chart;

pub const OUT_ENV: &str = "TRENDGAN_OUT";

/// `--out`, then the environment override, then the config value.
pub fn resolve_out(flag: Option<PathBuf>, config: Option<&Path>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| config.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("out"))
}

pub fn load_config(path: &Path, out: Option<PathBuf>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = RunConfig::parse(&text)?;
    cfg.out = resolve_out(out, Some(&cfg.out));
    Ok(cfg)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = create_file(path)?;
    f.write_all(bytes).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))
}

fn day_index(table: &PriceTable, date: Option<NaiveDate>, default: usize) -> Result<usize> {
    match date {
        None => Ok(default),
        Some(d) => table
            .index_on_or_before(d)
            .ok_or_else(|| Error::Data(format!("no trading day on or before {d}"))),
    }
}

pub enum IngestSource {
    Csv(PathBuf),
    Synth(SynthSettings),
}

/// Day-over-day ratio above which `--sanity` reports a price jump.
pub const SPIKE_RATIO: f64 = 5.0;

/// Validates or generates a dataset and writes it as the wide CSV format.
/// With `sanity`, suspicious price jumps are listed after the summary.
pub fn ingest(source: IngestSource, out: &Path, sanity: bool) -> Result<String> {
    let table = match &source {
        IngestSource::Csv(p) => {
            let f = std::fs::File::open(p).map_err(|e| Error::io(p, e))?;
            read_csv(f, &p.display().to_string())?
        }
        IngestSource::Synth(s) => synth_correlated_gbm(&synth_config(s))?,
    };
    let mut bytes = Vec::new();
    write_csv(&table, &mut bytes).map_err(|e| Error::io("dataset", e))?;
    let path = out.join("dataset.csv");
    write_bytes(&path, &bytes)?;
    let dates = table.dates();
    let mut msg = format!(
        "assets {} days {} from {} to {} sha256 {} -> {}",
        table.n_assets(),
        table.n_days(),
        dates[0],
        dates[dates.len() - 1],
        sha256_hex(&bytes),
        path.display()
    );
    if sanity {
        let spikes = find_spikes(&table, SPIKE_RATIO);
        msg.push_str(&format!("\nsanity: {} price jumps beyond {SPIKE_RATIO}x", spikes.len()));
        for s in spikes {
            msg.push_str(&format!("\n  {} {} ratio {}", s.ticker, s.date, s.ratio));
        }
    }
    Ok(msg)
}

pub fn checkpoint_path(cfg: &RunConfig, seed: u64) -> PathBuf {
    seed_dir(&cfg.out, seed).join("checkpoint.bin")
}

pub fn train(cfg: &RunConfig, seed: u64, steps: Option<u64>) -> Result<String> {
    let market = load_market(cfg)?;
    let steps = match steps {
        Some(s) => s,
        None => cfg.hyper_params(market.table.n_assets())?.training_steps,
    };
    let dir = seed_dir(&cfg.out, seed);
    let log_path = dir.join("train_log.csv");
    let ckpt = train_model(cfg, &market, seed, steps, create_file(&log_path)?)?;
    let bytes = ckpt.to_bytes()?;
    let path = checkpoint_path(cfg, seed);
    write_bytes(&path, &bytes)?;
    Ok(format!("trained {steps} steps, checkpoint sha256 {} -> {}", sha256_hex(&bytes), path.display()))
}

fn load_checkpoint(cfg: &RunConfig, market: &Market, path: &Path) -> Result<Checkpoint> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.tickers != market.table.tickers() {
        return Err(Error::Config(format!(
            "{} was trained on {:?}, data has {:?}",
            path.display(),
            ckpt.tickers,
            market.table.tickers()
        )));
    }
    let _ = cfg;
    Ok(ckpt)
}

pub fn simulate(cfg: &RunConfig, ckpt: &Path, date: Option<NaiveDate>, n: Option<usize>, seed: u64) -> Result<String> {
    let market = load_market(cfg)?;
    let ckpt = load_checkpoint(cfg, &market, ckpt)?;
    let model = ScenarioModel::from_checkpoint(&ckpt);
    let day = day_index(&market.table, date, market.start)?;
    let n = n.unwrap_or(cfg.scenarios);
    let (window, set) = scenarios_at(&model, &market.table, day, n, seed)?;
    let tickers = market.table.tickers();
    let path = cfg.out.join("scenarios.csv");
    let mut w = csv::Writer::from_writer(create_file(&path)?);
    let csv_err = |e: csv::Error| Error::Data(format!("scenario csv: {e}"));
    w.write_record(["draw", "ticker", "step", "price"]).map_err(csv_err)?;
    for (k, p) in set.paths.iter().enumerate() {
        for (i, ticker) in tickers.iter().enumerate() {
            for t in 0..p.ncols() {
                w.write_record([k.to_string(), ticker.clone(), (t + 1).to_string(), p[(i, t)].to_string()])
                    .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let history: Vec<Vec<f64>> = (0..tickers.len())
        .map(|i| (window.anchor + 1 - window.backward.ncols().max(1)..=window.anchor).map(|t| market.table.price(i, t)).collect())
        .collect();
    let chart = cfg.out.join("fan_chart.svg");
    write_bytes(&chart, fan_chart(tickers, &history, &set).as_bytes())?;
    let score = diversity_score(&set)?;
    let flag = if is_collapsed(score, cfg.collapse_threshold) { "collapsed" } else { "diverse" };
    Ok(format!(
        "{n} scenarios from {} diversity {score:.6e} ({flag}) -> {}, {}",
        market.table.dates()[day],
        path.display(),
        chart.display()
    ))
}

pub fn optimize(cfg: &RunConfig, ckpt: &Path, date: Option<NaiveDate>, seed: u64) -> Result<String> {
    let market = load_market(cfg)?;
    let ckpt = load_checkpoint(cfg, &market, ckpt)?;
    let model = ScenarioModel::from_checkpoint(&ckpt);
    let day = day_index(&market.table, date, market.start)?;
    let (mk, grid) = markowitz_setup(cfg, &market, ckpt.hp.wf)?;
    let (_, set) = scenarios_at(&model, &market.table, day, cfg.scenarios, seed)?;
    let sample = scenario_returns(&set)?;
    let front = nsga2_optimize(|x| sample.mean_variance(x), market.table.n_assets(), &cfg.nsga, seed)?;
    let scenario = select_by_risk(&front, &grid)?;
    let est: Vec<(f64, f64)> = scenario.iter().map(|x| sample.mean_variance(x.weights())).collect();
    let tickers = market.table.tickers();
    let p_path = cfg.out.join("frontier_scenario.csv");
    write_frontier_csv(create_file(&p_path)?, tickers, &grid, &scenario, &est)?;
    let mark = markowitz_frontier(&mk, &grid);
    let est: Vec<(f64, f64)> = mark.iter().map(|x| (mk.expected_return(x), mk.variance(x))).collect();
    let m_path = cfg.out.join("frontier_markowitz.csv");
    write_frontier_csv(create_file(&m_path)?, tickers, &grid, &mark, &est)?;
    Ok(format!(
        "front of {} points on {} -> {}, {}",
        front.len(),
        market.table.dates()[day],
        p_path.display(),
        m_path.display()
    ))
}

pub fn backtest(cfg: &RunConfig, seed: u64, ckpt: Option<&Path>) -> Result<String> {
    let market = load_market(cfg)?;
    let default_ckpt = checkpoint_path(cfg, seed);
    let ckpt_path = ckpt.unwrap_or(&default_ckpt);
    if !ckpt_path.exists() {
        return Err(Error::Config(format!(
            "no checkpoint at {}; run train --seed {seed} first",
            ckpt_path.display()
        )));
    }
    let ckpt = load_checkpoint(cfg, &market, ckpt_path)?;
    let result = run_backtests(cfg, &market, &ckpt, seed)?;
    let dir = seed_dir(&cfg.out, seed);
    let tickers = market.table.tickers();
    let mut rows = Vec::new();
    let levels_path = dir.join("levels.csv");
    let mut lv = csv::Writer::from_writer(create_file(&levels_path)?);
    let csv_err = |e: csv::Error| Error::Data(format!("levels csv: {e}"));
    lv.write_record(["strategy", "zeta", "annualized_return", "annualized_volatility", "final_value"])
        .map_err(csv_err)?;
    for (name, ledgers) in &result.strategies {
        for ledger in ledgers {
            let rep = PerformanceReport::from_ledger(ledger)?;
            lv.write_record([
                name.clone(),
                ledger.zeta.to_string(),
                rep.annualized_return.to_string(),
                rep.annualized_volatility.to_string(),
                rep.final_value.to_string(),
            ])
            .map_err(csv_err)?;
            if cfg.settings.contains(&ledger.zeta) {
                let path = dir.join(format!("ledger-{name}-z{}.csv", ledger.zeta));
                write_ledger_csv(create_file(&path)?, ledger, tickers)?;
                rows.push((setting_name(ledger.zeta), rep));
            }
        }
    }
    lv.flush().map_err(|e| Error::io(&levels_path, e))?;
    write_report_csv(create_file(&dir.join("report.csv"))?, &rows)?;
    let (p2m, m2p) = result.dominance()?;
    Ok(format!(
        "seed {seed}: {} test days, scenario2m {p2m}% m2scenario {m2p}% -> {}",
        market.table.n_days() - 1 - market.start,
        dir.display()
    ))
}

/// `(annualized return, annualized volatility)` per level for one strategy, read back from `levels.csv`.
fn read_levels(path: &Path, strategy: &str, levels: usize) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut out = vec![None; levels];
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if &rec[0] != strategy {
            continue;
        }
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Data(format!("{}: bad number {:?}", path.display(), &rec[i])))
        };
        let z: usize = rec[1].parse().map_err(|_| Error::Data(format!("{}: bad level {:?}", path.display(), &rec[1])))?;
        if z == 0 || z > levels {
            return Err(Error::Data(format!("{}: level {z} outside 1..={levels}", path.display())));
        }
        out[z - 1] = Some((num(2)?, num(3)?));
    }
    out.into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| Error::Data(format!("{}: {strategy} lacks level {}", path.display(), i + 1))))
        .collect()
}

/// Dominance per seed and its min / median / max, plus every seed's setting rows.
pub fn report(cfg: &RunConfig) -> Result<String> {
    let mut per_seed = Vec::new();
    let mut settings = String::new();
    for &seed in &cfg.seeds {
        let dir = seed_dir(&cfg.out, seed);
        let levels = dir.join("levels.csv");
        if !levels.exists() {
            return Err(Error::Config(format!("no backtest for seed {seed}; run backtest --seed {seed} first")));
        }
        let p = read_levels(&levels, "scenario", cfg.levels)?;
        let m = read_levels(&levels, "markowitz", cfg.levels)?;
        per_seed.push((seed, trendgan::backtest::dominance_metrics(&p, &m)?));
        let rep_path = dir.join("report.csv");
        let text = std::fs::read_to_string(&rep_path).map_err(|e| Error::io(&rep_path, e))?;
        for (k, line) in text.lines().enumerate() {
            if k == 0 {
                if settings.is_empty() {
                    settings.push_str(&format!("seed,{line}\n"));
                }
            } else {
                settings.push_str(&format!("{seed},{line}\n"));
            }
        }
    }
    write_bytes(&cfg.out.join("report.csv"), settings.as_bytes())?;
    let p2m: Vec<f64> = per_seed.iter().map(|(_, d)| d.0).collect();
    let m2p: Vec<f64> = per_seed.iter().map(|(_, d)| d.1).collect();
    let fold = |v: &[f64]| {
        (
            v.iter().copied().fold(f64::INFINITY, f64::min),
            median(v),
            v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    let (a, b) = (fold(&p2m), fold(&m2p));
    let mut s = String::from("row,scenario2m,m2scenario\n");
    for (seed, (x, y)) in &per_seed {
        s.push_str(&format!("seed-{seed},{x},{y}\n"));
    }
    s.push_str(&format!("min,{},{}\nmedian,{},{}\nmax,{},{}\n", a.0, b.0, a.1, b.1, a.2, b.2));
    let path = cfg.out.join("dominance.csv");
    write_bytes(&path, s.as_bytes())?;
    Ok(format!(
        "{} seeds: scenario2m min/median/max {}/{}/{} m2scenario {}/{}/{} -> {}",
        per_seed.len(),
        a.0,
        a.1,
        a.2,
        b.0,
        b.1,
        b.2,
        path.display()
    ))
}
