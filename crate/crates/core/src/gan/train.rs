use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use trendgan_tensor::{AdamState, Graph, Tensor};

use super::nets::{build_networks, Discriminator, Generator};
use super::sample::pairwise_diversity;
use super::GanHyperParams;
use crate::error::{Error, Result};
use crate::market::MarketWindow;

/// Non-degenerate windows packed as contiguous `[N, A, len]` buffers.
#[derive(Clone, Debug)]
pub struct TrainingData {
    assets: usize,
    wb: usize,
    wf: usize,
    backward: Vec<f64>,
    forward: Vec<f64>,
    analysis: Vec<f64>,
    skipped: usize,
}

/// One minibatch: `backward [B, A, wb]`, `forward [B, A, wf]`, `analysis [B, A]`.
#[derive(Clone, Debug)]
pub struct Batch {
    pub backward: Tensor,
    pub forward: Tensor,
    pub analysis: Tensor,
}

impl TrainingData {
    pub fn from_windows(windows: &[MarketWindow]) -> Result<Self> {
        let usable: Vec<&MarketWindow> = windows.iter().filter(|w| !w.is_degenerate()).collect();
        let first = usable
            .first()
            .ok_or_else(|| Error::Config("no usable (non-degenerate) training windows".into()))?;
        let (assets, wb, wf) = (first.n_assets(), first.backward.ncols(), first.forward.ncols());
        let mut data = Self {
            assets,
            wb,
            wf,
            backward: Vec::new(),
            forward: Vec::new(),
            analysis: Vec::new(),
            skipped: windows.len() - usable.len(),
        };
        for w in usable {
            if w.n_assets() != assets || w.backward.ncols() != wb || w.forward.ncols() != wf {
                return Err(Error::Dimension("training windows differ in shape".into()));
            }
            for i in 0..assets {
                data.backward.extend(w.backward.row(i).iter());
                data.forward.extend(w.forward.row(i).iter());
            }
            data.analysis.extend(&w.analysis);
        }
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.analysis.len() / self.assets
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Windows dropped because some asset had a flat backward window.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn batch(&self, idx: &[usize]) -> Batch {
        let (a, wb, wf) = (self.assets, self.wb, self.wf);
        let mut b = Vec::with_capacity(idx.len() * a * wb);
        let mut f = Vec::with_capacity(idx.len() * a * wf);
        let mut an = Vec::with_capacity(idx.len() * a);
        for &k in idx {
            b.extend_from_slice(&self.backward[k * a * wb..(k + 1) * a * wb]);
            f.extend_from_slice(&self.forward[k * a * wf..(k + 1) * a * wf]);
            an.extend_from_slice(&self.analysis[k * a..(k + 1) * a]);
        }
        let n = idx.len();
        Batch {
            backward: Tensor::new(vec![n, a, wb], b).expect("sizes match"),
            forward: Tensor::new(vec![n, a, wf], f).expect("sizes match"),
            analysis: Tensor::new(vec![n, a], an).expect("sizes match"),
        }
    }

    fn check(&self, hp: &GanHyperParams) -> Result<()> {
        if (self.assets, self.wb, self.wf) != (hp.assets, hp.wb, hp.wf) {
            return Err(Error::Config(format!(
                "data has A={}, wb={}, wf={}; networks expect A={}, wb={}, wf={}",
                self.assets, self.wb, self.wf, hp.assets, hp.wb, hp.wf
            )));
        }
        Ok(())
    }
}

/// Joins `[N, A, t1]` and `[N, A, t2]` along time.
pub fn concat_time(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 3 || sb.len() != 3 || sa[..2] != sb[..2] {
        return Err(Error::Dimension(format!("cannot join {sa:?} and {sb:?} along time")));
    }
    let (n, c, t1, t2) = (sa[0], sa[1], sa[2], sb[2]);
    let mut out = Vec::with_capacity(n * c * (t1 + t2));
    for r in 0..n * c {
        out.extend_from_slice(&a.data()[r * t1..(r + 1) * t1]);
        out.extend_from_slice(&b.data()[r * t2..(r + 1) * t2]);
    }
    Ok(Tensor::new(vec![n, c, t1 + t2], out)?)
}

/// `eps_k real_k + (1 - eps_k) fake_k` per sample.
pub fn interpolate(real: &Tensor, fake: &Tensor, eps: &[f64]) -> Result<Tensor> {
    if real.shape() != fake.shape() || real.shape().first() != Some(&eps.len()) {
        return Err(Error::Dimension(format!(
            "interpolating {:?} and {:?} with {} weights",
            real.shape(),
            fake.shape(),
            eps.len()
        )));
    }
    let per = real.len() / eps.len().max(1);
    let data = real
        .data()
        .iter()
        .zip(fake.data())
        .enumerate()
        .map(|(i, (r, f))| {
            let e = eps[i / per];
            e * r + (1.0 - e) * f
        })
        .collect();
    Ok(Tensor::new(real.shape().to_vec(), data)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticStats {
    pub loss: f64,
    /// `mean D(real) - mean D(fake)`.
    pub wasserstein: f64,
    /// Mean squared deviation of the interpolate gradient norm from 1.
    pub gp: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub critic_loss: f64,
    pub wasserstein: f64,
    pub gp: f64,
    pub generator_loss: f64,
    pub diversity: Option<f64>,
}

/// Networks, optimizer state and the step counter of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct GanTrainer {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub(crate) g_adam: AdamState,
    pub(crate) d_adam: AdamState,
    pub(crate) seed: u64,
    pub(crate) step: u64,
}

fn ensure_finite(what: &str, step: u64, values: &[(&str, f64)]) -> Result<()> {
    if values.iter().all(|(_, v)| v.is_finite()) {
        return Ok(());
    }
    let detail: Vec<String> = values.iter().map(|(k, v)| format!("{k}={v}")).collect();
    Err(Error::Training(format!("non-finite {what} at step {step}: {}", detail.join(", "))))
}

fn normal_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).expect("sizes match")
}

impl GanTrainer {
    pub fn new(hp: &GanHyperParams, seed: u64) -> Result<Self> {
        let (generator, discriminator) = build_networks(hp, seed)?;
        let g_adam = AdamState::new(hp.adam(), &generator.params.values);
        let d_adam = AdamState::new(hp.adam(), &discriminator.params.values);
        Ok(Self { generator, discriminator, g_adam, d_adam, seed, step: 0 })
    }

    pub fn hp(&self) -> &GanHyperParams {
        &self.generator.hp
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Completed generator updates.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn generator_adam(&self) -> &AdamState {
        &self.g_adam
    }

    pub fn discriminator_adam(&self) -> &AdamState {
        &self.d_adam
    }

    /// The random stream that drives generator step `step`.
    fn step_rng(&self, step: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(step + 1);
        rng
    }

    /// Critic loss terms on explicit inputs, recorded on `g`. Returns
    /// `(loss, wasserstein, gp)` nodes' values and the parameter gradients.
    fn critic_pass(
        &mut self,
        real: &Tensor,
        fake: &Tensor,
        analysis: &Tensor,
        eps: &[f64],
    ) -> Result<(CriticStats, Vec<Tensor>)> {
        let x_hat = interpolate(real, fake, eps)?;
        let lambda = self.hp().gp_weight;
        let d = &mut self.discriminator;
        let mut g = Graph::new();
        let p = d.params.leaves(&mut g);
        let pe = d.effective(&mut g, &p)?;
        let (r, f, a) = (g.leaf(real.clone()), g.leaf(fake.clone()), g.leaf(analysis.clone()));
        let xh = g.leaf(x_hat);
        let dr = d.build(&mut g, &pe, r, a)?;
        let df = d.build(&mut g, &pe, f, a)?;
        let dh = d.build(&mut g, &pe, xh, a)?;

        let total = g.sum(dh);
        let gx = g.input_gradient(total, xh)?;
        let sq = g.square(gx);
        let per_sample = g.sum_to_axis(sq, 0)?;
        let tiny = g.leaf(Tensor::full(&[eps.len()], 1e-12));
        let per_sample = g.add(per_sample, tiny)?;
        let norm = g.sqrt(per_sample);
        let one = g.leaf(Tensor::full(&[eps.len()], 1.0));
        let dev = g.sub(norm, one)?;
        let dev = g.square(dev);
        let gp = g.mean(dev);

        let mr = g.mean(dr);
        let mf = g.mean(df);
        let w = g.sub(mf, mr)?;
        let pen = g.scale(gp, lambda);
        let loss = g.add(w, pen)?;
        let stats = CriticStats {
            loss: g.value(loss).item()?,
            wasserstein: -g.value(w).item()?,
            gp: g.value(gp).item()?,
        };
        let grads = g.gradients(loss, &p)?;
        Ok((stats, grads))
    }

    /// One critic update on explicit real/fake batches and interpolation weights.
    pub fn critic_update(
        &mut self,
        real: &Tensor,
        fake: &Tensor,
        analysis: &Tensor,
        eps: &[f64],
    ) -> Result<CriticStats> {
        let (stats, grads) = self.critic_pass(real, fake, analysis, eps)?;
        ensure_finite(
            "critic loss",
            self.step,
            &[("loss", stats.loss), ("wasserstein", stats.wasserstein), ("gp", stats.gp)],
        )?;
        if let Some(i) = grads.iter().position(|t| !t.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite critic gradient for {} at step {}",
                self.discriminator.params.names[i], self.step
            )));
        }
        self.d_adam.step(&mut self.discriminator.params.values, &grads)?;
        Ok(stats)
    }

    /// Gradient penalty at `x_hat` with the current normalization, no update.
    pub fn gradient_penalty(&self, x_hat: &Tensor, analysis: &Tensor) -> Result<f64> {
        let d = &self.discriminator;
        let mut g = Graph::new();
        let p = d.params.leaves(&mut g);
        let pe = d.effective_frozen(&mut g, &p)?;
        let (xh, a) = (g.leaf(x_hat.clone()), g.leaf(analysis.clone()));
        let out = d.build(&mut g, &pe, xh, a)?;
        let total = g.sum(out);
        let gx = g.input_gradient(total, xh)?;
        let n = x_hat.shape()[0];
        let per = x_hat.len() / n;
        let gx = g.value(gx).data();
        let mut acc = 0.0;
        for k in 0..n {
            let s: f64 = gx[k * per..(k + 1) * per].iter().map(|v| v * v).sum();
            acc += ((s + 1e-12).sqrt() - 1.0).powi(2);
        }
        Ok(acc / n as f64)
    }

    fn generator_pass(&self, backward: &Tensor, analysis: &Tensor, latent: &Tensor, grads: bool) -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::first_order();
        let gp = self.generator.params.leaves(&mut g);
        let (b, a, z) = (g.leaf(backward.clone()), g.leaf(analysis.clone()), g.leaf(latent.clone()));
        let fwd = self.generator.build(&mut g, &gp, b, a, z)?;
        let x = g.concat(b, fwd, 2)?;
        let dp = self.discriminator.params.leaves(&mut g);
        let dpe = self.discriminator.effective_frozen(&mut g, &dp)?;
        let c = self.discriminator.build(&mut g, &dpe, x, a)?;
        let m = g.mean(c);
        let loss = g.neg(m);
        let value = g.value(loss).item()?;
        let gr = if grads { g.gradients(loss, &gp)? } else { Vec::new() };
        Ok((value, gr))
    }

    /// `-mean D(fake)` for the given conditioning and latents.
    pub fn generator_loss(&self, backward: &Tensor, analysis: &Tensor, latent: &Tensor) -> Result<f64> {
        Ok(self.generator_pass(backward, analysis, latent, false)?.0)
    }

    /// Parameter gradients of [`GanTrainer::generator_loss`].
    pub fn generator_gradients(&self, backward: &Tensor, analysis: &Tensor, latent: &Tensor) -> Result<Vec<Tensor>> {
        Ok(self.generator_pass(backward, analysis, latent, true)?.1)
    }

    /// One generator update; the critic is held fixed.
    pub fn generator_update(&mut self, backward: &Tensor, analysis: &Tensor, latent: &Tensor) -> Result<f64> {
        let (loss, grads) = self.generator_pass(backward, analysis, latent, true)?;
        ensure_finite("generator loss", self.step, &[("loss", loss)])?;
        if let Some(i) = grads.iter().position(|t| !t.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite generator gradient for {} at step {}",
                self.generator.params.names[i], self.step
            )));
        }
        self.g_adam.step(&mut self.generator.params.values, &grads)?;
        Ok(loss)
    }

    fn sample_batch(&self, data: &TrainingData, rng: &mut ChaCha8Rng) -> Batch {
        let idx: Vec<usize> = (0..self.hp().batch_size).map(|_| rng.random_range(0..data.len())).collect();
        data.batch(&idx)
    }

    /// Samples a batch, generates fakes and updates the critic once.
    pub fn critic_step(&mut self, data: &TrainingData, rng: &mut ChaCha8Rng) -> Result<CriticStats> {
        data.check(self.hp())?;
        let batch = self.sample_batch(data, rng);
        let n = self.hp().batch_size;
        let latent = normal_tensor(&[n, self.hp().latent_size], rng);
        let eps: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let fake_fwd = self.generator.forward(&batch.backward, &batch.analysis, &latent)?;
        let real = concat_time(&batch.backward, &batch.forward)?;
        let fake = concat_time(&batch.backward, &fake_fwd)?;
        self.critic_update(&real, &fake, &batch.analysis, &eps)
    }

    /// Samples conditioning and fresh latents and updates the generator once.
    pub fn generator_step(&mut self, data: &TrainingData, rng: &mut ChaCha8Rng) -> Result<f64> {
        data.check(self.hp())?;
        let batch = self.sample_batch(data, rng);
        let latent = normal_tensor(&[self.hp().batch_size, self.hp().latent_size], rng);
        self.generator_update(&batch.backward, &batch.analysis, &latent)
    }

    /// `n_critic` critic updates followed by one generator update.
    pub fn train_step(&mut self, data: &TrainingData) -> Result<StepRecord> {
        let mut rng = self.step_rng(self.step);
        let k = self.hp().n_critic;
        let (mut loss, mut w, mut gp) = (0.0, 0.0, 0.0);
        for _ in 0..k {
            let s = self.critic_step(data, &mut rng)?;
            loss += s.loss;
            w += s.wasserstein;
            gp += s.gp;
        }
        let generator_loss = self.generator_step(data, &mut rng)?;
        self.step += 1;
        let k = k as f64;
        Ok(StepRecord {
            step: self.step,
            critic_loss: loss / k,
            wasserstein: w / k,
            gp: gp / k,
            generator_loss,
            diversity: None,
        })
    }

    /// Spread of generated variations over `draws` latents for one window of `data`.
    pub fn probe_diversity(&self, data: &TrainingData, window: usize, draws: usize) -> Result<f64> {
        let batch = data.batch(&vec![window; draws]);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        let latent = normal_tensor(&[draws, self.hp().latent_size], &mut rng);
        let out = self.generator.forward(&batch.backward, &batch.analysis, &latent)?;
        let cells = out.len() / draws;
        let samples: Vec<&[f64]> = out.data().chunks(cells).collect();
        pairwise_diversity(&samples)
    }

    /// Runs until `until` generator steps are complete. The observer sees every
    /// record; every `log_every` steps the record carries a diversity probe.
    pub fn train<F>(&mut self, data: &TrainingData, until: u64, log_every: u64, mut observer: F) -> Result<()>
    where
        F: FnMut(&GanTrainer, &StepRecord) -> Result<()>,
    {
        data.check(self.hp())?;
        while self.step < until {
            let mut rec = self.train_step(data)?;
            if log_every > 0 && (rec.step % log_every == 0 || rec.step == until) {
                rec.diversity = Some(self.probe_diversity(data, data.len() - 1, 16)?);
            }
            observer(self, &rec)?;
        }
        Ok(())
    }
}
