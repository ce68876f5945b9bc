//! Conditional scenario generator trained as a Wasserstein GAN with
//! gradient penalty.

mod checkpoint;
mod hyper;
mod nets;
mod sample;
mod train;

pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use hyper::GanHyperParams;
pub use nets::{build_networks, Discriminator, Generator, ParamList};
pub use sample::{
    diversity_score, generate_scenarios, is_collapsed, latent_for_draw, ScenarioModel,
    DEFAULT_COLLAPSE_THRESHOLD, DEFAULT_SCENARIOS,
};
pub use train::{concat_time, interpolate, Batch, CriticStats, GanTrainer, StepRecord, TrainingData};

use crate::error::Result;
use crate::market::MarketWindow;

/// Trains from scratch for `hp.training_steps` generator steps.
pub fn train(windows: &[MarketWindow], hp: &GanHyperParams, seed: u64, tickers: &[String]) -> Result<Checkpoint> {
    let data = TrainingData::from_windows(windows)?;
    let mut trainer = GanTrainer::new(hp, seed)?;
    trainer.train(&data, hp.training_steps, 0, |_, _| Ok(()))?;
    Ok(trainer.checkpoint(tickers))
}
