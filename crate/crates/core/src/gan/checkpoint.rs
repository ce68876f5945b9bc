//! Text manifest followed by raw little-endian `f64` arrays.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use trendgan_tensor::{AdamState, SpectralState, Tensor};

use super::nets::{Discriminator, Generator, ParamList};
use super::train::GanTrainer;
use super::GanHyperParams;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "trendgan-checkpoint";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub hp: GanHyperParams,
    pub tickers: Vec<String>,
    pub seed: u64,
    pub step: u64,
    pub generator: ParamList,
    pub discriminator: ParamList,
    pub spectral: Vec<SpectralState>,
    pub g_adam: AdamState,
    pub d_adam: AdamState,
}

impl GanTrainer {
    pub fn checkpoint(&self, tickers: &[String]) -> Checkpoint {
        Checkpoint {
            version: FORMAT_VERSION,
            hp: self.hp().clone(),
            tickers: tickers.to_vec(),
            seed: self.seed,
            step: self.step,
            generator: self.generator.params.clone(),
            discriminator: self.discriminator.params.clone(),
            spectral: self.discriminator.spectral.clone(),
            g_adam: self.g_adam.clone(),
            d_adam: self.d_adam.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.hp.validate()?;
        let fresh = GanTrainer::new(&ckpt.hp, ckpt.seed)?;
        if fresh.generator.params.shapes() != ckpt.generator.shapes()
            || fresh.discriminator.params.shapes() != ckpt.discriminator.shapes()
            || fresh.discriminator.spectral.len() != ckpt.spectral.len()
        {
            return Err(Error::Config("checkpoint parameters do not match its hyperparameters".into()));
        }
        Ok(Self {
            generator: Generator { hp: ckpt.hp.clone(), params: ckpt.generator.clone() },
            discriminator: Discriminator {
                hp: ckpt.hp.clone(),
                params: ckpt.discriminator.clone(),
                spectral: ckpt.spectral.clone(),
            },
            g_adam: ckpt.g_adam.clone(),
            d_adam: ckpt.d_adam.clone(),
            seed: ckpt.seed,
            step: ckpt.step,
        })
    }
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Data(format!("checkpoint: {}", msg.into()))
}

impl Checkpoint {
    /// Arrays in storage order with their names.
    fn arrays(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (n, t) in self.generator.names.iter().zip(&self.generator.values) {
            out.push((format!("g.{n}"), t.clone()));
        }
        for (n, t) in self.discriminator.names.iter().zip(&self.discriminator.values) {
            out.push((format!("d.{n}"), t.clone()));
        }
        for (i, s) in self.spectral.iter().enumerate() {
            out.push((format!("s{i}.bu"), Tensor::vector(s.basis_u().to_vec())));
            out.push((format!("s{i}.bv"), Tensor::vector(s.basis_v().to_vec())));
            out.push((format!("s{i}.u"), Tensor::vector(s.u().to_vec())));
            out.push((format!("s{i}.v"), Tensor::vector(s.v().to_vec())));
        }
        for (tag, adam) in [("g", &self.g_adam), ("d", &self.d_adam)] {
            for (i, m) in adam.first_moments().iter().enumerate() {
                out.push((format!("adam_{tag}.m{i}"), m.clone()));
            }
            for (i, v) in adam.second_moments().iter().enumerate() {
                out.push((format!("adam_{tag}.v{i}"), v.clone()));
            }
        }
        out
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("checkpoint", e);
        if let Some(t) = self.tickers.iter().find(|t| t.contains('\n') || t.is_empty()) {
            return Err(Error::Config(format!("ticker {t:?} cannot be stored")));
        }
        let mut head = format!("{MAGIC} {}\n", self.version);
        for (k, v) in self.hp.to_pairs() {
            head.push_str(&format!("hp {k} {v}\n"));
        }
        for t in &self.tickers {
            head.push_str(&format!("ticker {t}\n"));
        }
        head.push_str(&format!("seed {}\nstep {}\n", self.seed, self.step));
        head.push_str(&format!("adam g {}\nadam d {}\n", self.g_adam.step_count(), self.d_adam.step_count()));
        for s in &self.spectral {
            head.push_str(&format!("spectral {} {}\n", s.iterations(), u8::from(s.is_degenerate())));
        }
        let arrays = self.arrays();
        for (name, t) in &arrays {
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            head.push_str(&format!("array {name} {}\n", dims.join(" ")));
        }
        head.push_str("end\n");
        w.write_all(head.as_bytes()).map_err(io)?;
        for (_, t) in &arrays {
            let mut buf = Vec::with_capacity(t.len() * 8);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        Ok(buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file)
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        let mut next = |r: &mut BufReader<R>| -> Result<String> {
            line.clear();
            let n = r.read_line(&mut line).map_err(|e| Error::io("checkpoint", e))?;
            if n == 0 {
                return Err(bad("truncated header"));
            }
            Ok(line.trim_end_matches('\n').to_string())
        };

        let first = next(&mut r)?;
        let version: u32 = first
            .strip_prefix(MAGIC)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad("not a checkpoint file"))?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let mut hp = GanHyperParams::for_assets(1);
        let mut tickers = Vec::new();
        let (mut seed, mut step) = (None, None);
        let mut adam_steps = [None, None];
        let mut spectral_meta = Vec::new();
        let mut decl: Vec<(String, Vec<usize>)> = Vec::new();
        loop {
            let l = next(&mut r)?;
            if l == "end" {
                break;
            }
            let (key, rest) = l.split_once(' ').ok_or_else(|| bad(format!("bad line {l:?}")))?;
            let num = |s: &str| s.parse::<u64>().map_err(|_| bad(format!("bad number in {l:?}")));
            match key {
                "hp" => {
                    let (k, v) = rest.split_once(' ').ok_or_else(|| bad(format!("bad line {l:?}")))?;
                    hp.set(k, v)?;
                }
                "ticker" => tickers.push(rest.to_string()),
                "seed" => seed = Some(num(rest)?),
                "step" => step = Some(num(rest)?),
                "adam" => {
                    let (which, n) = rest.split_once(' ').ok_or_else(|| bad(format!("bad line {l:?}")))?;
                    let slot = match which {
                        "g" => 0,
                        "d" => 1,
                        _ => return Err(bad(format!("bad line {l:?}"))),
                    };
                    adam_steps[slot] = Some(num(n)?);
                }
                "spectral" => {
                    let (it, deg) = rest.split_once(' ').ok_or_else(|| bad(format!("bad line {l:?}")))?;
                    spectral_meta.push((num(it)?, num(deg)? != 0));
                }
                "array" => {
                    let mut parts = rest.split(' ');
                    let name = parts.next().unwrap_or_default().to_string();
                    let dims = parts
                        .map(|d| d.parse::<usize>().map_err(|_| bad(format!("bad dims in {l:?}"))))
                        .collect::<Result<Vec<_>>>()?;
                    decl.push((name, dims));
                }
                _ => return Err(bad(format!("unknown header key {key:?}"))),
            }
        }

        let mut arrays = Vec::with_capacity(decl.len());
        for (name, dims) in decl {
            let n: usize = dims.iter().product();
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf).map_err(|_| bad(format!("array {name} is truncated")))?;
            let data = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            arrays.push((name, Tensor::new(dims, data)?));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest).map_err(|e| Error::io("checkpoint", e))?;
        if !rest.is_empty() {
            return Err(bad(format!("{} trailing bytes", rest.len())));
        }

        let mut it = arrays.into_iter().peekable();
        let mut take_prefix = |prefix: &str| {
            let mut list = ParamList { names: Vec::new(), values: Vec::new() };
            while let Some((name, _)) = it.peek() {
                let Some(short) = name.strip_prefix(prefix) else { break };
                list.names.push(short.to_string());
                list.values.push(it.next().expect("peeked").1);
            }
            list
        };
        let generator = take_prefix("g.");
        let discriminator = take_prefix("d.");
        let vectors = take_prefix("s");
        if vectors.len() != 4 * spectral_meta.len() {
            return Err(bad("spectral vectors do not match their metadata"));
        }
        let spectral = spectral_meta
            .iter()
            .enumerate()
            .map(|(i, &(iters, deg))| {
                let part = |j: usize| vectors.values[4 * i + j].data().to_vec();
                SpectralState::from_parts(part(0), part(1), part(2), part(3), iters, deg)
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let mut adam = |tag: &str, steps: Option<u64>, count: usize| -> Result<AdamState> {
            let m = take_prefix(&format!("adam_{tag}.m"));
            let v = take_prefix(&format!("adam_{tag}.v"));
            if m.len() != count || v.len() != count {
                return Err(bad(format!("adam state {tag} has wrong size")));
            }
            let steps = steps.ok_or_else(|| bad(format!("missing adam {tag} step")))?;
            Ok(AdamState::from_parts(hp.adam(), steps, m.values, v.values)?)
        };
        let g_adam = adam("g", adam_steps[0], generator.len())?;
        let d_adam = adam("d", adam_steps[1], discriminator.len())?;
        Ok(Self {
            version,
            hp,
            tickers,
            seed: seed.ok_or_else(|| bad("missing seed"))?,
            step: step.ok_or_else(|| bad("missing step"))?,
            generator,
            discriminator,
            spectral,
            g_adam,
            d_adam,
        })
    }
}
