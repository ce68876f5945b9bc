//! Spectral normalization by persistent block power iteration.
//!
//! A single vector tracks the top singular pair poorly when the leading
//! singular values are clustered, which is the common case for trained
//! kernels. The state therefore carries a small orthonormal block on each
//! side and extracts the leading pair by Rayleigh-Ritz on the projected matrix.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{dim_err, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;

/// Largest block tracked per kernel.
pub const MAX_BLOCK: usize = 16;

/// Singular-subspace estimates for one kernel, viewed as a matrix
/// `shape[0] x (product of remaining extents)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    /// Left block, `rows x block`, row-major.
    basis_u: Vec<f64>,
    /// Right block, `cols x block`, row-major.
    basis_v: Vec<f64>,
    block: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    iterations: u64,
    degenerate: bool,
}

fn matrix_dims(w: &Tensor) -> (usize, usize) {
    let rows = w.shape()[0];
    (rows, w.len() / rows.max(1))
}

fn orthonormal(m: DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.norm() == 0.0 {
        return None;
    }
    Some(m.qr().q())
}

impl SpectralState {
    pub fn new(kernel_shape: &[usize], rng: &mut impl Rng) -> Self {
        let rows = kernel_shape[0];
        let cols: usize = kernel_shape[1..].iter().product();
        let block = rows.min(cols).clamp(1, MAX_BLOCK);
        let raw = DMatrix::from_fn(rows, block, |_, _| rng.random_range(-1.0..1.0));
        let q = orthonormal(raw).unwrap_or_else(|| DMatrix::identity(rows, block));
        Self {
            basis_u: q.transpose().as_slice().to_vec(),
            basis_v: vec![0.0; cols * block],
            block,
            u: q.column(0).iter().copied().collect(),
            v: vec![0.0; cols],
            iterations: 0,
            degenerate: false,
        }
    }

    /// Restores a stored state exactly as saved.
    pub fn from_parts(
        basis_u: Vec<f64>,
        basis_v: Vec<f64>,
        u: Vec<f64>,
        v: Vec<f64>,
        iterations: u64,
        degenerate: bool,
    ) -> Result<Self> {
        let block = basis_u.len() / u.len().max(1);
        if block == 0 || basis_u.len() != u.len() * block || basis_v.len() != v.len() * block {
            return dim_err(format!(
                "spectral blocks {} and {} for vectors {} and {}",
                basis_u.len(),
                basis_v.len(),
                u.len(),
                v.len()
            ));
        }
        Ok(Self {
            basis_u,
            basis_v,
            block,
            u,
            v,
            iterations,
            degenerate,
        })
    }

    pub fn basis_u(&self) -> &[f64] {
        &self.basis_u
    }

    pub fn basis_v(&self) -> &[f64] {
        &self.basis_v
    }

    pub fn block(&self) -> usize {
        self.block
    }

    /// Leading left singular vector estimate.
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// Leading right singular vector estimate.
    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    /// True when the last update met an all-zero kernel.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    fn check(&self, w: &Tensor) -> Result<(usize, usize)> {
        let (rows, cols) = matrix_dims(w);
        if rows != self.u.len() || cols != self.v.len() {
            return dim_err(format!(
                "spectral state {}x{} for kernel {:?}",
                self.u.len(),
                self.v.len(),
                w.shape()
            ));
        }
        Ok((rows, cols))
    }

    /// One block power-iteration update; returns the estimate `u^T W v`.
    pub fn power_iteration(&mut self, w: &Tensor) -> Result<f64> {
        let (rows, cols) = self.check(w)?;
        let r = self.block;
        let wm = DMatrix::from_row_slice(rows, cols, w.data());
        let bu = DMatrix::from_row_slice(rows, r, &self.basis_u);
        let Some(bv) = orthonormal(wm.transpose() * &bu) else {
            self.degenerate = true;
            return Ok(0.0);
        };
        let Some(bu) = orthonormal(&wm * &bv) else {
            self.degenerate = true;
            return Ok(0.0);
        };
        let small = bu.transpose() * &wm * &bv;
        let svd = small.svd(true, true);
        let (k, sigma) = svd
            .singular_values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, s)| if s > best.1 { (i, s) } else { best });
        if !(sigma > 0.0) {
            self.degenerate = true;
            return Ok(0.0);
        }
        let a = svd.u.as_ref().expect("requested").column(k).clone_owned();
        let b = svd.v_t.as_ref().expect("requested").row(k).transpose();
        self.u = (&bu * a).iter().copied().collect();
        self.v = (&bv * b).iter().copied().collect();
        self.basis_u = bu.transpose().as_slice().to_vec();
        self.basis_v = bv.transpose().as_slice().to_vec();
        self.iterations += 1;
        self.degenerate = false;
        Ok(sigma)
    }

    /// `u^T W v` with the current vectors.
    pub fn sigma(&self, w: &Tensor) -> Result<f64> {
        let (_, cols) = self.check(w)?;
        let d = w.data();
        Ok(self
            .u
            .iter()
            .enumerate()
            .map(|(r, ur)| ur * d[r * cols..(r + 1) * cols].iter().zip(&self.v).map(|(a, b)| a * b).sum::<f64>())
            .sum())
    }

    /// Kernel divided by the current estimate, without updating the state.
    pub fn normalized(&self, w: &Tensor) -> Result<Tensor> {
        let sigma = self.sigma(w)?;
        if self.degenerate || sigma <= 0.0 || self.iterations == 0 {
            return Ok(w.clone());
        }
        Ok(w.map(|x| x / sigma))
    }

    /// Runs one power iteration on the kernel held by `w`, then applies
    /// [`SpectralState::apply_in_graph`].
    pub fn normalize_in_graph(&mut self, graph: &mut Graph, w: NodeId) -> Result<NodeId> {
        self.power_iteration(graph.value(w))?;
        self.apply_in_graph(graph, w)
    }

    /// Node `w / sigma(w)` where `sigma(w) = u^T w v` keeps its dependence on
    /// `w` and the singular vectors are constants.
    pub fn apply_in_graph(&self, graph: &mut Graph, w: NodeId) -> Result<NodeId> {
        self.check(graph.value(w))?;
        if self.degenerate || self.iterations == 0 {
            return Ok(w);
        }
        let outer: Vec<f64> = self
            .u
            .iter()
            .flat_map(|ur| self.v.iter().map(move |vc| ur * vc))
            .collect();
        let weighted = graph.mask_mul(w, outer)?;
        let s = graph.sum(weighted);
        if graph.value(s).data()[0] <= 0.0 {
            return Ok(w);
        }
        let inv = graph.recip(s);
        let shape = graph.shape(w).to_vec();
        let inv = graph.expand(inv, &shape)?;
        graph.mul(w, inv)
    }
}

/// One power-iteration update of `state`, then `kernel / sigma`.
/// An all-zero kernel is returned unchanged and the state is flagged degenerate.
pub fn spectral_normalize(kernel: &Tensor, state: &mut SpectralState) -> Result<Tensor> {
    let sigma = state.power_iteration(kernel)?;
    if state.is_degenerate() || sigma <= 0.0 {
        return Ok(kernel.clone());
    }
    Ok(kernel.map(|x| x / sigma))
}
