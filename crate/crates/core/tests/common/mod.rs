//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use trendgan::portfolio::{nsga2_optimize, MarkowitzModel, Nsga2Params};

/// Fronts by repeated peeling of points that nothing remaining dominates.
pub fn brute_force_fronts(points: &[(f64, f64)]) -> Vec<Vec<usize>> {
    let dom = |p: (f64, f64), q: (f64, f64)| p.0 >= q.0 && p.1 <= q.1 && (p.0 > q.0 || p.1 < q.1);
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| dom(points[j], points[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

pub fn random_points<R: Rng>(rng: &mut R) -> Vec<(f64, f64)> {
    let n = rng.random_range(1..=16);
    // Coarse values so ties and duplicates actually occur.
    (0..n)
        .map(|_| (rng.random_range(0..6) as f64, rng.random_range(0..6) as f64))
        .collect()
}

pub fn random_psd_model<R: Rng>(rng: &mut R, a: usize) -> MarkowitzModel {
    let rank = rng.random_range(1..=a + 2);
    let f = DMatrix::from_fn(a, rank, |_, _| rng.random_range(-0.2..0.2));
    let sigma = &f * f.transpose();
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let mu = DVector::from_fn(a, |_, _| rng.random_range(0.95..1.15));
    MarkowitzModel::new(mu, sigma, 20).unwrap()
}

/// KKT residual of `min x'Sx  s.t.  mu'x >= r, 1'x = 1, x >= 0`.
///
/// Stationarity with valid multipliers holds exactly when no feasible vertex
/// improves the linearized objective, so the residual is that first-order gap
/// plus any primal infeasibility. The feasible polytope's vertices are the simplex
/// corners with `mu_i >= r` and the points on edges `e_i -> e_j` where `mu'y = r`.
pub fn kkt_residual(model: &MarkowitzModel, x: &[f64], r: f64) -> f64 {
    let a = x.len();
    let xv = DVector::from_column_slice(x);
    let grad = &model.sigma * &xv * 2.0;
    let ret = model.mu.dot(&xv);
    let mut best = f64::INFINITY;
    for i in 0..a {
        if model.mu[i] >= r {
            best = best.min(grad[i]);
        }
        for j in 0..a {
            let (mi, mj) = (model.mu[i], model.mu[j]);
            if mi > r && r > mj {
                let t = (r - mj) / (mi - mj);
                best = best.min(t * grad[i] + (1.0 - t) * grad[j]);
            }
        }
    }
    let mut res = (grad.dot(&xv) - best).max(0.0);
    for v in x {
        res = res.max((-v).max(0.0));
    }
    res = res.max((x.iter().sum::<f64>() - 1.0).abs());
    res.max((r - ret).max(0.0))
}

/// Two-asset Gaussian problem with a known efficient frontier.
pub struct TwoAssetProblem {
    pub mu: [f64; 2],
    pub sigma: [[f64; 2]; 2],
}

impl TwoAssetProblem {
    pub fn standard() -> Self {
        Self { mu: [1.08, 1.02], sigma: [[0.04, 0.006], [0.006, 0.01]] }
    }

    pub fn objective(&self, x: &[f64]) -> (f64, f64) {
        let m = self.mu[0] * x[0] + self.mu[1] * x[1];
        let v = self.sigma[0][0] * x[0] * x[0]
            + 2.0 * self.sigma[0][1] * x[0] * x[1]
            + self.sigma[1][1] * x[1] * x[1];
        (m, v)
    }

    /// Weight on asset 0 at the global minimum variance, clipped to [0, 1].
    fn w_gmv(&self) -> f64 {
        let s = self.sigma;
        let w = (s[1][1] - s[0][1]) / (s[0][0] + s[1][1] - 2.0 * s[0][1]);
        w.clamp(0.0, 1.0)
    }

    /// Normalization box `(m_lo, m_hi, v_lo, v_hi)` spanned by the efficient arc.
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let (m_lo, v_lo) = self.objective(&[self.w_gmv(), 1.0 - self.w_gmv()]);
        let (m_hi, v_hi) = self.objective(&[1.0, 0.0]);
        (m_lo, m_hi, v_lo, v_hi)
    }

    /// Hypervolume of the exact frontier in the normalized box (Simpson's rule).
    pub fn exact_hypervolume(&self) -> f64 {
        let (m_lo, m_hi, v_lo, v_hi) = self.bounds();
        let w0 = self.w_gmv();
        let n = 20_000;
        let h = (1.0 - w0) / n as f64;
        let mut acc = 0.0;
        for k in 0..=n {
            let w = w0 + k as f64 * h;
            let (_, v) = self.objective(&[w, 1.0 - w]);
            let height = (v_hi - v) / (v_hi - v_lo);
            let c = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += c * height;
        }
        // d(m_norm)/dw is constant along the arc.
        let dm = (self.mu[0] - self.mu[1]) / (m_hi - m_lo);
        acc * h / 3.0 * dm
    }

    /// Hypervolume of a finite point set against the same reference.
    pub fn hypervolume(&self, points: &[(f64, f64)]) -> f64 {
        let (m_lo, m_hi, v_lo, v_hi) = self.bounds();
        let mut pts: Vec<(f64, f64)> = points
            .iter()
            .map(|&(m, v)| ((m - m_lo) / (m_hi - m_lo), (v_hi - v) / (v_hi - v_lo)))
            .filter(|&(m, h)| m > 0.0 && h > 0.0)
            .collect();
        pts.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut area = 0.0;
        let mut best_h: f64 = 0.0;
        for (k, &(m, h)) in pts.iter().enumerate() {
            best_h = best_h.max(h);
            let next_m = pts.get(k + 1).map_or(0.0, |p| p.0);
            area += (m - next_m) * best_h;
        }
        area
    }

    pub fn nsga_gap(&self, params: &Nsga2Params, seed: u64) -> f64 {
        let set = nsga2_optimize(|x| self.objective(x), 2, params, seed).unwrap();
        let pts: Vec<(f64, f64)> = set.points.iter().map(|p| (p.mean, p.variance)).collect();
        self.exact_hypervolume() - self.hypervolume(&pts)
    }
}
