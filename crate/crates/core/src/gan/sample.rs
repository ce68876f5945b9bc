use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use trendgan_tensor::Tensor;

use super::{Checkpoint, Generator};
use crate::error::{Error, Result};
use crate::market::{denormalize_path, MarketWindow};
use crate::simulation::{ScenarioSet, ScenarioSource};

pub const DEFAULT_SCENARIOS: usize = 250;
pub const DEFAULT_COLLAPSE_THRESHOLD: f64 = 1e-4;

/// A trained generator bound to the tickers it was trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioModel {
    pub generator: Generator,
    pub tickers: Vec<String>,
}

impl ScenarioModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Self {
        Self {
            generator: Generator { hp: ckpt.hp.clone(), params: ckpt.generator.clone() },
            tickers: ckpt.tickers.clone(),
        }
    }
}

/// Latent vector of draw `draw`, from its own counter-based stream.
pub fn latent_for_draw(seed: u64, draw: u64, size: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    (0..size).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

const CHUNK: usize = 64;

/// `n` price paths conditioned on `window`, one latent stream per draw.
pub fn generate_scenarios(
    model: &ScenarioModel,
    tickers: &[String],
    window: &MarketWindow,
    n: usize,
    seed: u64,
) -> Result<ScenarioSet> {
    let hp = &model.generator.hp;
    if tickers != model.tickers.as_slice() {
        return Err(Error::Config(format!(
            "model trained on {:?}, window has {tickers:?}",
            model.tickers
        )));
    }
    if window.n_assets() != hp.assets || window.backward.ncols() != hp.wb {
        return Err(Error::Config(format!(
            "window is {} x {}, model expects {} x {}",
            window.n_assets(),
            window.backward.ncols(),
            hp.assets,
            hp.wb
        )));
    }
    let (a, wb, wf) = (hp.assets, hp.wb, hp.wf);
    let mut back_row = Vec::with_capacity(a * wb);
    for i in 0..a {
        back_row.extend(window.backward.row(i).iter());
    }

    let mut variations = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let m = CHUNK.min(n - start);
        let backward = Tensor::new(vec![m, a, wb], back_row.repeat(m))?;
        let analysis = Tensor::new(vec![m, a], window.analysis.repeat(m))?;
        let mut z = Vec::with_capacity(m * hp.latent_size);
        for d in start..start + m {
            z.extend(latent_for_draw(seed, d as u64, hp.latent_size));
        }
        let latent = Tensor::new(vec![m, hp.latent_size], z)?;
        let out = model.generator.forward(&backward, &analysis, &latent)?;
        for chunk in out.data().chunks(a * wf) {
            variations.push(DMatrix::from_row_slice(a, wf, chunk));
        }
        start += m;
    }
    let paths = variations
        .iter()
        .map(|v| denormalize_path(v, window))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioSet {
        anchor: window.anchor_price.clone(),
        paths,
        variations: Some(variations),
        source: ScenarioSource::Gan,
    })
}

/// Mean pairwise Euclidean distance divided by the number of cells.
pub(crate) fn pairwise_diversity(samples: &[&[f64]]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::Contract(format!("diversity needs at least 2 scenarios, got {n}")));
    }
    let cells = samples[0].len();
    if samples.iter().any(|s| s.len() != cells) || cells == 0 {
        return Err(Error::Dimension("scenarios differ in size".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = samples[i].iter().zip(samples[j]).map(|(x, y)| (x - y) * (x - y)).sum();
            total += d.sqrt();
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(total / pairs / cells as f64)
}

/// Spread of the normalized variations; near zero means the generator
/// repeats one scenario.
pub fn diversity_score(scenarios: &ScenarioSet) -> Result<f64> {
    let vars = scenarios
        .variations
        .as_ref()
        .ok_or_else(|| Error::Contract("scenario set carries no normalized variations".into()))?;
    // Column-major storage is fine: distances do not depend on cell order.
    let samples: Vec<&[f64]> = vars.iter().map(|m| m.as_slice()).collect();
    pairwise_diversity(&samples)
}

pub fn is_collapsed(score: f64, threshold: f64) -> bool {
    score < threshold
}
