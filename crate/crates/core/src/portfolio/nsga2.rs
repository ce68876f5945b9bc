use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::{Diversification, ParetoPoint, ParetoSet};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Nsga2Params {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub eta_crossover: f64,
    pub eta_mutation: f64,
    /// Per-variable mutation probability; `None` means `1/A`.
    pub mutation_prob: Option<f64>,
}

impl Default for Nsga2Params {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 200,
            crossover_prob: 0.9,
            eta_crossover: 15.0,
            eta_mutation: 20.0,
            mutation_prob: None,
        }
    }
}

impl Nsga2Params {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config(format!("population must be >= 2, got {}", self.population)));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return Err(Error::Config(format!("crossover_prob {} outside [0, 1]", self.crossover_prob)));
        }
        if !(self.eta_crossover >= 0.0 && self.eta_mutation >= 0.0) {
            return Err(Error::Config("distribution indices must be >= 0".into()));
        }
        if let Some(p) = self.mutation_prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("mutation_prob {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// `p` dominates `q` when it is no worse in both objectives and better in one.
/// The first objective is maximized, the second minimized.
fn dominates(p: (f64, f64), q: (f64, f64)) -> bool {
    p.0 >= q.0 && p.1 <= q.1 && (p.0 > q.0 || p.1 < q.1)
}

/// Non-dominated fronts as index lists, best front first.
pub fn fast_non_dominated_sort(points: &[(f64, f64)]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    let mut fronts = vec![Vec::new()];
    for p in 0..n {
        for q in 0..n {
            if dominates(points[p], points[q]) {
                dominated_by[p].push(q);
            } else if dominates(points[q], points[p]) {
                count[p] += 1;
            }
        }
        if count[p] == 0 {
            fronts[0].push(p);
        }
    }
    let mut i = 0;
    while !fronts[i].is_empty() {
        let mut next = Vec::new();
        for &p in &fronts[i] {
            for &q in &dominated_by[p] {
                count[q] -= 1;
                if count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(next);
        i += 1;
    }
    fronts.pop();
    fronts
}

pub fn crowding_distance(front: &[(f64, f64)]) -> Vec<f64> {
    let n = front.len();
    let mut d = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    for obj in 0..2 {
        let key = |i: usize| if obj == 0 { front[i].0 } else { front[i].1 };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
        d[order[0]] = f64::INFINITY;
        d[order[n - 1]] = f64::INFINITY;
        let span = key(order[n - 1]) - key(order[0]);
        if span <= 0.0 {
            continue;
        }
        for k in 1..n - 1 {
            d[order[k]] += (key(order[k + 1]) - key(order[k - 1])) / span;
        }
    }
    d
}

struct Individual {
    x: Vec<f64>,
    f: (f64, f64),
    rank: usize,
    crowd: f64,
}

fn evaluate<F: Fn(&[f64]) -> (f64, f64)>(objective: &F, x: Vec<f64>) -> Result<Individual> {
    let f = objective(&x);
    if !(f.0.is_finite() && f.1.is_finite()) {
        return Err(Error::Contract(format!("objective returned non-finite value {f:?}")));
    }
    Ok(Individual { x, f, rank: 0, crowd: 0.0 })
}

fn assign_rank_and_crowding(pop: &mut [Individual]) -> Vec<Vec<usize>> {
    let pts: Vec<(f64, f64)> = pop.iter().map(|i| i.f).collect();
    let fronts = fast_non_dominated_sort(&pts);
    for (r, front) in fronts.iter().enumerate() {
        let fp: Vec<(f64, f64)> = front.iter().map(|&i| pts[i]).collect();
        for (&i, c) in front.iter().zip(crowding_distance(&fp)) {
            pop[i].rank = r;
            pop[i].crowd = c;
        }
    }
    fronts
}

fn tournament(pop: &[Individual], rng: &mut ChaCha8Rng) -> usize {
    let a = rng.random_range(0..pop.len());
    let b = rng.random_range(0..pop.len());
    let (pa, pb) = (&pop[a], &pop[b]);
    if pb.rank < pa.rank || (pb.rank == pa.rank && pb.crowd > pa.crowd) {
        b
    } else {
        a
    }
}

fn sbx_bound(beta: f64, u: f64, eta: f64) -> f64 {
    let alpha = 2.0 - beta.powf(-(eta + 1.0));
    if u <= 1.0 / alpha {
        (u * alpha).powf(1.0 / (eta + 1.0))
    } else {
        (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
    }
}

/// Bounded simulated binary crossover on `[0, 1]`.
fn sbx(p1: &[f64], p2: &[f64], eta: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    for i in 0..p1.len() {
        if rng.random::<f64>() > 0.5 || (p1[i] - p2[i]).abs() <= 1e-14 {
            continue;
        }
        let (y1, y2) = if p1[i] < p2[i] { (p1[i], p2[i]) } else { (p2[i], p1[i]) };
        let u: f64 = rng.random();
        let bq1 = sbx_bound(1.0 + 2.0 * y1 / (y2 - y1), u, eta);
        let bq2 = sbx_bound(1.0 + 2.0 * (1.0 - y2) / (y2 - y1), u, eta);
        let a = (0.5 * ((y1 + y2) - bq1 * (y2 - y1))).clamp(0.0, 1.0);
        let b = (0.5 * ((y1 + y2) + bq2 * (y2 - y1))).clamp(0.0, 1.0);
        if rng.random::<f64>() < 0.5 {
            c1[i] = b;
            c2[i] = a;
        } else {
            c1[i] = a;
            c2[i] = b;
        }
    }
    (c1, c2)
}

/// Bounded polynomial mutation on `[0, 1]`.
fn mutate(x: &mut [f64], eta: f64, prob: f64, rng: &mut ChaCha8Rng) {
    let pow = 1.0 / (eta + 1.0);
    for y in x.iter_mut() {
        if rng.random::<f64>() >= prob {
            continue;
        }
        let u: f64 = rng.random();
        let dq = if u < 0.5 {
            let xy = 1.0 - *y;
            (2.0 * u + (1.0 - 2.0 * u) * xy.powf(eta + 1.0)).powf(pow) - 1.0
        } else {
            let xy = *y;
            1.0 - (2.0 * (1.0 - u) + 2.0 * (u - 0.5) * xy.powf(eta + 1.0)).powf(pow)
        };
        *y = (*y + dq).clamp(0.0, 1.0);
    }
}

fn random_simplex(assets: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let e: Vec<f64> = (0..assets).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    Diversification::repair(&e).weights().to_vec()
}

/// Evolve long-only portfolios under (maximize mean, minimize variance).
pub fn nsga2_optimize<F>(objective: F, assets: usize, params: &Nsga2Params, seed: u64) -> Result<ParetoSet>
where
    F: Fn(&[f64]) -> (f64, f64),
{
    if assets < 2 {
        return Err(Error::Config(format!("need at least 2 assets, got {assets}")));
    }
    params.validate()?;
    let n = params.population;
    let pm = params.mutation_prob.unwrap_or(1.0 / assets as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut pop = (0..n)
        .map(|_| evaluate(&objective, random_simplex(assets, &mut rng)))
        .collect::<Result<Vec<_>>>()?;
    assign_rank_and_crowding(&mut pop);

    for _ in 0..params.generations {
        let mut offspring = Vec::with_capacity(n);
        while offspring.len() < n {
            let p1 = &pop[tournament(&pop, &mut rng)].x;
            let p2 = &pop[tournament(&pop, &mut rng)].x;
            let (mut c1, mut c2) = if rng.random::<f64>() < params.crossover_prob {
                sbx(p1, p2, params.eta_crossover, &mut rng)
            } else {
                (p1.clone(), p2.clone())
            };
            for c in [&mut c1, &mut c2] {
                mutate(c, params.eta_mutation, pm, &mut rng);
            }
            for c in [c1, c2] {
                if offspring.len() < n {
                    let repaired = Diversification::repair(&c).weights().to_vec();
                    offspring.push(evaluate(&objective, repaired)?);
                }
            }
        }
        pop.extend(offspring);
        let fronts = assign_rank_and_crowding(&mut pop);
        let mut keep = Vec::with_capacity(n);
        for front in fronts {
            if keep.len() + front.len() <= n {
                keep.extend(front);
            } else {
                let mut rest = front;
                rest.sort_by(|&a, &b| pop[b].crowd.total_cmp(&pop[a].crowd).then(a.cmp(&b)));
                keep.extend(rest.into_iter().take(n - keep.len()));
            }
            if keep.len() == n {
                break;
            }
        }
        keep.sort_unstable();
        let mut slots: Vec<Option<Individual>> = pop.into_iter().map(Some).collect();
        pop = keep.into_iter().map(|i| slots[i].take().expect("index kept once")).collect();
        assign_rank_and_crowding(&mut pop);
    }

    let mut first: Vec<&Individual> = pop.iter().filter(|i| i.rank == 0).collect();
    first.sort_by(|a, b| a.f.0.total_cmp(&b.f.0).then(a.f.1.total_cmp(&b.f.1)));
    first.dedup_by(|a, b| a.f == b.f);
    let points = first
        .into_iter()
        .map(|i| {
            Ok(ParetoPoint {
                x: Diversification::new(i.x.clone())?,
                mean: i.f.0,
                variance: i.f.1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParetoSet { points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example_fronts() {
        let fronts = fast_non_dominated_sort(&[(2.0, 1.0), (1.0, 2.0), (3.0, 3.0)]);
        assert_eq!(fronts, vec![vec![0, 2], vec![1]]);
    }

    #[test]
    fn single_point() {
        assert_eq!(fast_non_dominated_sort(&[(1.0, 1.0)]), vec![vec![0]]);
    }

    #[test]
    fn crowding_cases() {
        assert!(crowding_distance(&[(0.0, 0.0), (1.0, 1.0)]).iter().all(|d| d.is_infinite()));
        let d = crowding_distance(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]);
        assert_eq!(d[1], 2.0);
        let d = crowding_distance(&[(1.0, 1.0); 4]);
        assert_eq!(d.iter().filter(|v| **v == 0.0).count(), 2);
    }

    #[test]
    fn one_asset_is_a_config_error() {
        let r = nsga2_optimize(|_| (0.0, 0.0), 1, &Nsga2Params::default(), 0);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn constant_objective_collapses() {
        let p = Nsga2Params { generations: 5, ..Default::default() };
        let set = nsga2_optimize(|_| (1.0, 0.5), 3, &p, 1).unwrap();
        assert_eq!(set.len(), 1);
    }
}
