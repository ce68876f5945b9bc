//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default except `data`; unknown keys are errors. [`RunConfig::to_text`]
//! writes every key in a fixed order, and parsing that text returns an
//! equal config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use chrono::NaiveDate;
use trendgan::gan::{GanHyperParams, DEFAULT_COLLAPSE_THRESHOLD, DEFAULT_SCENARIOS};
use trendgan::portfolio::Nsga2Params;
use trendgan::{Error, Result};

/// Where prices come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Csv(PathBuf),
    Synth,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSettings {
    pub assets: usize,
    pub rho: f64,
    pub days: usize,
    pub seed: u64,
}

/// Boundary between the training and test periods.
#[derive(Clone, Debug, PartialEq)]
pub enum Split {
    /// The last `test_days` returns form the test period.
    Auto,
    /// Training ends on this date, inclusive.
    Date(NaiveDate),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub synth: SynthSettings,
    pub split: Split,
    pub test_days: usize,
    pub window_stride: usize,
    /// Hyperparameter overrides by key; the rest follow the asset count.
    pub gan: BTreeMap<String, String>,
    pub levels: usize,
    pub scenarios: usize,
    pub nsga: Nsga2Params,
    pub settings: Vec<usize>,
    pub cadence: usize,
    /// `None` uses the forward window length.
    pub markowitz_horizon: Option<usize>,
    pub seeds: Vec<u64>,
    pub collapse_threshold: f64,
    pub out: PathBuf,
}

/// Hyperparameter keys that may appear as `gan.<key>`; `assets` follows the data.
fn gan_keys() -> Vec<&'static str> {
    GanHyperParams::for_assets(2)
        .to_pairs()
        .into_iter()
        .map(|(k, _)| k)
        .filter(|k| *k != "assets")
        .collect()
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(|v| parse(key, v.trim()))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("{key} needs at least one value")));
    }
    Ok(items)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn with_data(data: DataSource) -> Self {
        Self {
            data,
            synth: SynthSettings { assets: 2, rho: 0.8, days: 1000, seed: 42 },
            split: Split::Auto,
            test_days: 60,
            window_stride: 1,
            gan: BTreeMap::new(),
            levels: 25,
            scenarios: DEFAULT_SCENARIOS,
            nsga: Nsga2Params::default(),
            settings: vec![5, 13, 21],
            cadence: 1,
            markowitz_horizon: None,
            seeds: vec![1],
            collapse_threshold: DEFAULT_COLLAPSE_THRESHOLD,
            out: PathBuf::from("out"),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: Vec<(usize, String, String)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected key = value, got {line:?}", n + 1)));
            };
            pairs.push((n + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let data = pairs
            .iter()
            .find(|(_, k, _)| k == "data")
            .map(|(_, _, v)| if v == "synth" { DataSource::Synth } else { DataSource::Csv(PathBuf::from(v)) })
            .ok_or_else(|| Error::Config("missing required key data".into()))?;
        let mut cfg = Self::with_data(data);
        let mut seen = BTreeMap::new();
        for (line, k, v) in &pairs {
            if let Some(prev) = seen.insert(k.clone(), *line) {
                return Err(Error::Config(format!("line {line}: {k} already set on line {prev}")));
            }
            cfg.set(k, v).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {line}: {m}")),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data" => {}
            "synth.assets" => self.synth.assets = parse(key, value)?,
            "synth.rho" => self.synth.rho = parse(key, value)?,
            "synth.days" => self.synth.days = parse(key, value)?,
            "synth.seed" => self.synth.seed = parse(key, value)?,
            "split" => {
                self.split = if value == "auto" {
                    Split::Auto
                } else {
                    Split::Date(
                        NaiveDate::parse_from_str(value, "%Y-%m-%d")
                            .map_err(|_| Error::Config(format!("bad split date {value:?}")))?,
                    )
                }
            }
            "test_days" => self.test_days = parse(key, value)?,
            "window_stride" => self.window_stride = parse(key, value)?,
            "levels" => self.levels = parse(key, value)?,
            "scenarios" => self.scenarios = parse(key, value)?,
            "nsga.population" => self.nsga.population = parse(key, value)?,
            "nsga.generations" => self.nsga.generations = parse(key, value)?,
            "nsga.crossover_prob" => self.nsga.crossover_prob = parse(key, value)?,
            "nsga.eta_crossover" => self.nsga.eta_crossover = parse(key, value)?,
            "nsga.eta_mutation" => self.nsga.eta_mutation = parse(key, value)?,
            "nsga.mutation_prob" => {
                self.nsga.mutation_prob = if value == "auto" { None } else { Some(parse(key, value)?) }
            }
            "settings" => self.settings = parse_list(key, value)?,
            "cadence" => self.cadence = parse(key, value)?,
            "markowitz_horizon" => {
                self.markowitz_horizon = if value == "auto" { None } else { Some(parse(key, value)?) }
            }
            "seeds" => self.seeds = parse_list(key, value)?,
            "collapse_threshold" => self.collapse_threshold = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => {
                let Some(hp_key) = key.strip_prefix("gan.").filter(|k| gan_keys().contains(k)) else {
                    return Err(Error::Config(format!("unknown key {key:?}")));
                };
                if value == "auto" {
                    self.gan.remove(hp_key);
                } else {
                    GanHyperParams::for_assets(2).set(hp_key, value)?;
                    self.gan.insert(hp_key.to_string(), value.to_string());
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.synth.assets < 2 || self.synth.days < 3 || !(-1.0..=1.0).contains(&self.synth.rho) {
            return fail("synthetic market needs at least 2 assets, 3 days and |rho| <= 1".into());
        }
        if self.test_days < 1 || self.window_stride < 1 || self.cadence < 1 || self.scenarios < 2 {
            return fail("test_days, window_stride and cadence must be positive and scenarios at least 2".into());
        }
        if self.levels < 2 {
            return fail(format!("levels must be at least 2, got {}", self.levels));
        }
        if let Some(z) = self.settings.iter().find(|z| **z == 0 || **z > self.levels) {
            return fail(format!("setting {z} outside 1..={}", self.levels));
        }
        if self.markowitz_horizon == Some(0) {
            return fail("markowitz_horizon must be positive".into());
        }
        if self.collapse_threshold.is_nan() || self.collapse_threshold < 0.0 {
            return fail("collapse_threshold must be non-negative".into());
        }
        self.nsga.validate()?;
        self.hyper_params(2)?;
        Ok(())
    }

    /// Defaults for `assets` with the configured overrides applied.
    pub fn hyper_params(&self, assets: usize) -> Result<GanHyperParams> {
        let mut hp = GanHyperParams::for_assets(assets);
        for (k, v) in &self.gan {
            hp.set(k, v)?;
        }
        hp.validate()?;
        Ok(hp)
    }

    /// Every key in a fixed order; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put(
            "data",
            match &self.data {
                DataSource::Synth => "synth".into(),
                DataSource::Csv(p) => p.display().to_string(),
            },
        );
        put("synth.assets", self.synth.assets.to_string());
        put("synth.rho", self.synth.rho.to_string());
        put("synth.days", self.synth.days.to_string());
        put("synth.seed", self.synth.seed.to_string());
        put(
            "split",
            match &self.split {
                Split::Auto => "auto".into(),
                Split::Date(d) => d.format("%Y-%m-%d").to_string(),
            },
        );
        put("test_days", self.test_days.to_string());
        put("window_stride", self.window_stride.to_string());
        for k in gan_keys() {
            put(&format!("gan.{k}"), self.gan.get(k).cloned().unwrap_or_else(|| "auto".into()));
        }
        put("levels", self.levels.to_string());
        put("scenarios", self.scenarios.to_string());
        put("nsga.population", self.nsga.population.to_string());
        put("nsga.generations", self.nsga.generations.to_string());
        put("nsga.crossover_prob", self.nsga.crossover_prob.to_string());
        put("nsga.eta_crossover", self.nsga.eta_crossover.to_string());
        put("nsga.eta_mutation", self.nsga.eta_mutation.to_string());
        put("nsga.mutation_prob", self.nsga.mutation_prob.map_or("auto".into(), |p| p.to_string()));
        put("settings", join(&self.settings));
        put("cadence", self.cadence.to_string());
        put("markowitz_horizon", self.markowitz_horizon.map_or("auto".into(), |h| h.to_string()));
        put("seeds", join(&self.seeds));
        put("collapse_threshold", self.collapse_threshold.to_string());
        put("out", self.out.display().to_string());
        s
    }
}
