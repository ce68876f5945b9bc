use trendgan_tensor::{AdamConfig, ConvGeometry};

use crate::error::{Error, Result};

/// Architecture and training settings for one asset universe.
#[derive(Clone, Debug, PartialEq)]
pub struct GanHyperParams {
    pub assets: usize,
    pub wb: usize,
    pub wf: usize,
    pub latent_size: usize,
    pub cond_layers: usize,
    pub cond_channels: usize,
    pub cond_dense_out: usize,
    pub sim_dense_out: usize,
    pub tconv_layers: usize,
    pub disc_layers: usize,
    pub kernel: usize,
    pub stride: usize,
    pub leaky_slope: f64,
    /// Power-iteration steps per critic update for each normalized weight.
    pub spectral_iterations: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub training_steps: u64,
    pub gp_weight: f64,
    pub n_critic: usize,
    pub batch_size: usize,
}

impl GanHyperParams {
    /// Reference architecture for `assets` series: 40 observed days, 20 simulated.
    pub fn for_assets(assets: usize) -> Self {
        Self {
            assets,
            wb: 40,
            wf: 20,
            latent_size: 2 * assets,
            cond_layers: 4,
            cond_channels: 2 * assets,
            cond_dense_out: assets,
            sim_dense_out: 20 * assets,
            tconv_layers: 2,
            disc_layers: 5,
            kernel: 5,
            stride: 2,
            leaky_slope: 0.2,
            spectral_iterations: 1,
            lr: 2e-5,
            beta1: 0.5,
            beta2: 0.999,
            adam_eps: 1e-8,
            training_steps: 15_000,
            gp_weight: 10.0,
            n_critic: 5,
            batch_size: 32,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.adam_eps }
    }

    pub fn window_len(&self) -> usize {
        self.wb + self.wf
    }

    /// Sequence lengths after each conditioning conv, starting with `wb`.
    pub fn cond_lengths(&self) -> Vec<usize> {
        self.chain_lengths(self.wb, self.cond_layers)
    }

    /// Sequence lengths after each critic conv, starting with `wb + wf`.
    pub fn disc_lengths(&self) -> Vec<usize> {
        self.chain_lengths(self.window_len(), self.disc_layers)
    }

    fn chain_lengths(&self, start: usize, layers: usize) -> Vec<usize> {
        let mut out = vec![start];
        for _ in 0..layers {
            let last = *out.last().expect("non-empty");
            out.push(ConvGeometry::same_ceil(last, self.kernel, self.stride).len_out);
        }
        out
    }

    /// Critic channels `A 2^i` for `i = 0..=disc_layers`.
    pub fn disc_channels(&self) -> Vec<usize> {
        (0..=self.disc_layers).map(|i| self.assets << i).collect()
    }

    /// Simulator channels, widest first, ending at `A`.
    pub fn tconv_channels(&self) -> Vec<usize> {
        (0..=self.tconv_layers).rev().map(|i| self.assets << i).collect()
    }

    /// Length of the sequence entering the first transpose conv.
    pub fn sim_seed_len(&self) -> usize {
        self.wf / self.stride.pow(self.tconv_layers as u32)
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("assets", self.assets),
            ("wb", self.wb),
            ("wf", self.wf),
            ("latent_size", self.latent_size),
            ("cond_layers", self.cond_layers),
            ("cond_channels", self.cond_channels),
            ("cond_dense_out", self.cond_dense_out),
            ("sim_dense_out", self.sim_dense_out),
            ("tconv_layers", self.tconv_layers),
            ("disc_layers", self.disc_layers),
            ("kernel", self.kernel),
            ("stride", self.stride),
            ("spectral_iterations", self.spectral_iterations),
            ("n_critic", self.n_critic),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.tconv_layers >= 16 || self.disc_layers >= 16 {
            return Err(Error::Config("layer counts above 15 are not supported".into()));
        }
        let up = self.stride.pow(self.tconv_layers as u32);
        if !self.wf.is_multiple_of(up) {
            return Err(Error::Config(format!(
                "wf = {} is not divisible by stride^tconv_layers = {up}",
                self.wf
            )));
        }
        let seed = self.tconv_channels()[0] * self.sim_seed_len();
        if self.sim_dense_out != seed {
            return Err(Error::Config(format!(
                "sim_dense_out = {} but the first transpose conv needs {} x {} = {seed}",
                self.sim_dense_out,
                self.tconv_channels()[0],
                self.sim_seed_len()
            )));
        }
        for (name, v) in [
            ("lr", self.lr),
            ("adam_eps", self.adam_eps),
            ("gp_weight", self.gp_weight),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 1)")));
            }
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::Config("leaky_slope must be finite".into()));
        }
        Ok(())
    }

    /// `key = value` pairs in a fixed order; floats use round-trip formatting.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("assets", self.assets.to_string()),
            ("wb", self.wb.to_string()),
            ("wf", self.wf.to_string()),
            ("latent_size", self.latent_size.to_string()),
            ("cond_layers", self.cond_layers.to_string()),
            ("cond_channels", self.cond_channels.to_string()),
            ("cond_dense_out", self.cond_dense_out.to_string()),
            ("sim_dense_out", self.sim_dense_out.to_string()),
            ("tconv_layers", self.tconv_layers.to_string()),
            ("disc_layers", self.disc_layers.to_string()),
            ("kernel", self.kernel.to_string()),
            ("stride", self.stride.to_string()),
            ("leaky_slope", self.leaky_slope.to_string()),
            ("spectral_iterations", self.spectral_iterations.to_string()),
            ("lr", self.lr.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("training_steps", self.training_steps.to_string()),
            ("gp_weight", self.gp_weight.to_string()),
            ("n_critic", self.n_critic.to_string()),
            ("batch_size", self.batch_size.to_string()),
        ]
    }

    /// Sets one field from its textual form. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
        }
        match key {
            "assets" => self.assets = parse(key, value)?,
            "wb" => self.wb = parse(key, value)?,
            "wf" => self.wf = parse(key, value)?,
            "latent_size" => self.latent_size = parse(key, value)?,
            "cond_layers" => self.cond_layers = parse(key, value)?,
            "cond_channels" => self.cond_channels = parse(key, value)?,
            "cond_dense_out" => self.cond_dense_out = parse(key, value)?,
            "sim_dense_out" => self.sim_dense_out = parse(key, value)?,
            "tconv_layers" => self.tconv_layers = parse(key, value)?,
            "disc_layers" => self.disc_layers = parse(key, value)?,
            "kernel" => self.kernel = parse(key, value)?,
            "stride" => self.stride = parse(key, value)?,
            "leaky_slope" => self.leaky_slope = parse(key, value)?,
            "spectral_iterations" => self.spectral_iterations = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "adam_eps" => self.adam_eps = parse(key, value)?,
            "training_steps" => self.training_steps = parse(key, value)?,
            "gp_weight" => self.gp_weight = parse(key, value)?,
            "n_critic" => self.n_critic = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown hyperparameter {key:?}"))),
        }
        Ok(())
    }
}
