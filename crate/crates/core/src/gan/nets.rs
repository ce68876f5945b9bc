use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trendgan_tensor::init::uniform_fan_in;
use trendgan_tensor::{Graph, NodeId, SpectralState, Tensor};

use super::GanHyperParams;
use crate::error::{Error, Result};

/// Named parameter list in declaration order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamList {
    pub names: Vec<String>,
    pub values: Vec<Tensor>,
}

impl ParamList {
    fn new() -> Self {
        Self { names: Vec::new(), values: Vec::new() }
    }

    fn push(&mut self, name: String, shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) {
        self.names.push(name);
        self.values.push(uniform_fan_in(shape, fan_in, rng));
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn leaves(&self, g: &mut Graph) -> Vec<NodeId> {
        self.values.iter().map(|t| g.leaf(t.clone())).collect()
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.values.iter().map(|t| t.shape().to_vec()).collect()
    }
}

/// Conditioning stack (strided convs and a dense layer) feeding a simulator
/// (dense layer and transpose convs) that emits `A x wf` variations.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub hp: GanHyperParams,
    pub params: ParamList,
}

/// Strided convs with spectrally normalized kernels and a dense critic head.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub hp: GanHyperParams,
    pub params: ParamList,
    /// One state per normalized weight, see [`Discriminator::normalized_indices`].
    pub spectral: Vec<SpectralState>,
}

pub fn build_networks(hp: &GanHyperParams, seed: u64) -> Result<(Generator, Discriminator)> {
    hp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, k) = (hp.assets, hp.kernel);

    let mut g = ParamList::new();
    let mut c_in = a;
    for l in 0..hp.cond_layers {
        let c = hp.cond_channels;
        g.push(format!("cond{l}.w"), &[c, c_in, k], c_in * k, &mut rng);
        g.push(format!("cond{l}.b"), &[c], c_in * k, &mut rng);
        c_in = c;
    }
    let flat = hp.cond_channels * hp.cond_lengths()[hp.cond_layers];
    g.push("cond_dense.w".into(), &[hp.cond_dense_out, flat], flat, &mut rng);
    g.push("cond_dense.b".into(), &[hp.cond_dense_out], flat, &mut rng);
    let sim_in = hp.cond_dense_out + a + hp.latent_size;
    g.push("sim_dense.w".into(), &[hp.sim_dense_out, sim_in], sim_in, &mut rng);
    g.push("sim_dense.b".into(), &[hp.sim_dense_out], sim_in, &mut rng);
    let ch = hp.tconv_channels();
    for l in 0..hp.tconv_layers {
        g.push(format!("tconv{l}.w"), &[ch[l], ch[l + 1], k], ch[l] * k, &mut rng);
        g.push(format!("tconv{l}.b"), &[ch[l + 1]], ch[l] * k, &mut rng);
    }

    let mut d = ParamList::new();
    let dc = hp.disc_channels();
    for i in 0..hp.disc_layers {
        d.push(format!("disc{i}.w"), &[dc[i + 1], dc[i], k], dc[i] * k, &mut rng);
        d.push(format!("disc{i}.b"), &[dc[i + 1]], dc[i] * k, &mut rng);
    }
    let head = dc[hp.disc_layers] * hp.disc_lengths()[hp.disc_layers] + a;
    d.push("head.w".into(), &[1, head], head, &mut rng);
    d.push("head.b".into(), &[1], head, &mut rng);

    let spectral = Discriminator::indices(hp)
        .into_iter()
        .map(|i| SpectralState::new(d.values[i].shape(), &mut rng))
        .collect();

    Ok((
        Generator { hp: hp.clone(), params: g },
        Discriminator { hp: hp.clone(), params: d, spectral },
    ))
}

fn check_input(g: &Graph, id: NodeId, want: &[usize], what: &str) -> Result<()> {
    if g.shape(id) != want {
        return Err(Error::Dimension(format!("{what} is {:?}, expected {want:?}", g.shape(id))));
    }
    Ok(())
}

impl Generator {
    /// Records the forward pass. Inputs: `backward [N, A, wb]`,
    /// `analysis [N, A]`, `latent [N, latent_size]`; output `[N, A, wf]`.
    pub fn build(
        &self,
        g: &mut Graph,
        p: &[NodeId],
        backward: NodeId,
        analysis: NodeId,
        latent: NodeId,
    ) -> Result<NodeId> {
        let hp = &self.hp;
        let n = g.shape(backward).first().copied().unwrap_or(0);
        check_input(g, backward, &[n, hp.assets, hp.wb], "backward window")?;
        check_input(g, analysis, &[n, hp.assets], "analysis vector")?;
        check_input(g, latent, &[n, hp.latent_size], "latent")?;

        let mut h = backward;
        let mut i = 0;
        for _ in 0..hp.cond_layers {
            h = g.conv1d(h, p[i], hp.stride)?;
            h = g.add_channel_bias(h, p[i + 1])?;
            h = g.relu(h);
            i += 2;
        }
        let flat = hp.cond_channels * hp.cond_lengths()[hp.cond_layers];
        h = g.reshape(h, &[n, flat])?;
        h = g.dense(h, p[i], p[i + 1])?;
        h = g.relu(h);
        i += 2;

        let z = g.concat(h, analysis, 1)?;
        let z = g.concat(z, latent, 1)?;
        h = g.dense(z, p[i], p[i + 1])?;
        h = g.relu(h);
        i += 2;
        let ch = hp.tconv_channels();
        h = g.reshape(h, &[n, ch[0], hp.sim_seed_len()])?;
        for l in 0..hp.tconv_layers {
            h = g.conv_transpose1d(h, p[i], hp.stride)?;
            h = g.add_channel_bias(h, p[i + 1])?;
            if l + 1 < hp.tconv_layers {
                h = g.relu(h);
            }
            i += 2;
        }
        Ok(h)
    }

    /// Forward values only.
    pub fn forward(&self, backward: &Tensor, analysis: &Tensor, latent: &Tensor) -> Result<Tensor> {
        let mut g = Graph::first_order();
        let p = self.params.leaves(&mut g);
        let (b, a, z) = (g.leaf(backward.clone()), g.leaf(analysis.clone()), g.leaf(latent.clone()));
        let out = self.build(&mut g, &p, b, a, z)?;
        Ok(g.value(out).clone())
    }
}

impl Discriminator {
    /// Parameter indices whose values are spectrally normalized: every conv
    /// kernel plus the head weight.
    pub fn normalized_indices(&self) -> Vec<usize> {
        Self::indices(&self.hp)
    }

    fn indices(hp: &GanHyperParams) -> Vec<usize> {
        (0..=hp.disc_layers).map(|i| 2 * i).collect()
    }

    /// Parameter nodes with normalized weights substituted, after
    /// `spectral_iterations` power-iteration steps per state on the current weights.
    pub fn effective(&mut self, g: &mut Graph, p: &[NodeId]) -> Result<Vec<NodeId>> {
        let mut out = p.to_vec();
        let k = self.hp.spectral_iterations;
        for (s, idx) in self.normalized_indices().into_iter().enumerate() {
            for _ in 0..k {
                self.spectral[s].power_iteration(g.value(p[idx]))?;
            }
            out[idx] = self.spectral[s].apply_in_graph(g, p[idx])?;
        }
        Ok(out)
    }

    /// Same as [`Discriminator::effective`] without the power-iteration step.
    pub fn effective_frozen(&self, g: &mut Graph, p: &[NodeId]) -> Result<Vec<NodeId>> {
        let mut out = p.to_vec();
        for (s, idx) in self.normalized_indices().into_iter().enumerate() {
            out[idx] = self.spectral[s].apply_in_graph(g, p[idx])?;
        }
        Ok(out)
    }

    /// Current normalized weight values, as the critic sees them.
    pub fn normalized_weights(&self) -> Result<Vec<Tensor>> {
        self.normalized_indices()
            .into_iter()
            .enumerate()
            .map(|(s, idx)| Ok(self.spectral[s].normalized(&self.params.values[idx])?))
            .collect()
    }

    /// Records the critic on `x [N, A, wb + wf]` and `analysis [N, A]`;
    /// output `[N, 1]`. `p` must already hold normalized weights.
    pub fn build(&self, g: &mut Graph, p: &[NodeId], x: NodeId, analysis: NodeId) -> Result<NodeId> {
        let hp = &self.hp;
        let n = g.shape(x).first().copied().unwrap_or(0);
        check_input(g, x, &[n, hp.assets, hp.window_len()], "critic input")?;
        check_input(g, analysis, &[n, hp.assets], "analysis vector")?;
        let mut h = x;
        for i in 0..hp.disc_layers {
            h = g.conv1d(h, p[2 * i], hp.stride)?;
            h = g.add_channel_bias(h, p[2 * i + 1])?;
            h = g.leaky_relu(h, hp.leaky_slope);
        }
        let flat = hp.disc_channels()[hp.disc_layers] * hp.disc_lengths()[hp.disc_layers];
        h = g.reshape(h, &[n, flat])?;
        h = g.concat(h, analysis, 1)?;
        let j = 2 * hp.disc_layers;
        Ok(g.dense(h, p[j], p[j + 1])?)
    }

    /// Critic values `[N, 1]` with the current normalization, no update.
    pub fn critic(&self, x: &Tensor, analysis: &Tensor) -> Result<Tensor> {
        let mut g = Graph::first_order();
        let p = self.params.leaves(&mut g);
        let p = self.effective_frozen(&mut g, &p)?;
        let (xi, ai) = (g.leaf(x.clone()), g.leaf(analysis.clone()));
        let out = self.build(&mut g, &p, xi, ai)?;
        Ok(g.value(out).clone())
    }
}
