//! Finite-difference harness shared with the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trendgan_tensor::{Graph, NodeId, SpectralState, Tensor};

const H: f64 = 1e-6;

type Build = dyn Fn(&mut Graph, &[NodeId]) -> NodeId;
type Inputs = dyn Fn(&mut ChaCha8Rng) -> Vec<Tensor>;

fn random_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero so ReLU kinks are not crossed by `H`.
fn away_from_zero(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let t = random_tensor(rng, shape, -1.0, 1.0);
    t.map(|v| if v.abs() < 0.05 { v.signum() * 0.05 + v } else { v })
}

fn eval(build: &dyn Fn(&mut Graph, &[NodeId]) -> NodeId, inputs: &[Tensor]) -> f64 {
    let mut g = Graph::first_order();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = build(&mut g, &ids);
    g.value(out).item().unwrap()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-8)
}

/// Composes `op` with a random linear read-out so the output is scalar and
/// every output entry contributes.
fn check(op: &Build, inputs: Vec<Tensor>, rng: &mut impl Rng) -> f64 {
    let out_len = {
        let mut g = Graph::first_order();
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let o = op(&mut g, &ids);
        g.value(o).len()
    };
    let readout: Vec<f64> = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let build = move |g: &mut Graph, ids: &[NodeId]| {
        let o = op(g, ids);
        let m = g.mask_mul(o, readout.clone()).unwrap();
        g.sum(m)
    };

    let mut g = Graph::first_order();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = build(&mut g, &ids);
    let analytic = g.gradients(out, &ids).unwrap();

    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; input.len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let mut plus = inputs.clone();
            plus[k].data_mut()[i] += H;
            let mut minus = inputs.clone();
            minus[k].data_mut()[i] -= H;
            *slot = (eval(&build, &plus) - eval(&build, &minus)) / (2.0 * H);
        }
        let e = rel_err(analytic[k].data(), &numeric);
        if e >= worst {
            worst = e;
        }
    }
    worst
}

pub struct Case {
    pub name: &'static str,
    op: Box<Build>,
    inputs: Box<Inputs>,
}

pub fn cases() -> Vec<Case> {
    fn case(
        name: &'static str,
        op: impl Fn(&mut Graph, &[NodeId]) -> NodeId + 'static,
        inputs: impl Fn(&mut ChaCha8Rng) -> Vec<Tensor> + 'static,
    ) -> Case {
        Case {
            name,
            op: Box::new(op),
            inputs: Box::new(inputs),
        }
    }
    let two = |r: &mut ChaCha8Rng| vec![away_from_zero(r, &[3, 4]), away_from_zero(r, &[3, 4])];
    vec![
        case("add", |g, x| g.add(x[0], x[1]).unwrap(), two),
        case("sub", |g, x| g.sub(x[0], x[1]).unwrap(), two),
        case("mul", |g, x| g.mul(x[0], x[1]).unwrap(), two),
        case("neg", |g, x| g.neg(x[0]), |r| vec![away_from_zero(r, &[5])]),
        case("scale", |g, x| g.scale(x[0], -2.5), |r| vec![away_from_zero(r, &[5])]),
        case("square", |g, x| g.square(x[0]), |r| vec![away_from_zero(r, &[6])]),
        case("relu", |g, x| g.relu(x[0]), |r| vec![away_from_zero(r, &[2, 7])]),
        case("leaky_relu", |g, x| g.leaky_relu(x[0], 0.2), |r| vec![away_from_zero(r, &[2, 7])]),
        case("sqrt", |g, x| g.sqrt(x[0]), |r| vec![random_tensor(r, &[6], 0.5, 2.0)]),
        case("recip", |g, x| g.recip(x[0]), |r| vec![random_tensor(r, &[6], 0.5, 2.0)]),
        case(
            "matmul",
            |g, x| g.matmul(x[0], x[1]).unwrap(),
            |r| vec![away_from_zero(r, &[3, 4]), away_from_zero(r, &[4, 2])],
        ),
        case("transpose", |g, x| g.transpose(x[0]).unwrap(), |r| vec![away_from_zero(r, &[3, 5])]),
        case(
            "dense",
            |g, x| g.dense(x[0], x[1], x[2]).unwrap(),
            |r| vec![away_from_zero(r, &[4, 3]), away_from_zero(r, &[2, 3]), away_from_zero(r, &[2])],
        ),
        case(
            "dense_flat",
            |g, x| g.dense(x[0], x[1], x[2]).unwrap(),
            |r| vec![away_from_zero(r, &[3]), away_from_zero(r, &[5, 3]), away_from_zero(r, &[5])],
        ),
        case(
            "expand_axis",
            |g, x| g.expand_axis(x[0], &[2, 3, 4], 1).unwrap(),
            |r| vec![away_from_zero(r, &[3])],
        ),
        case("expand", |g, x| g.expand(x[0], &[2, 5]).unwrap(), |r| vec![away_from_zero(r, &[1])]),
        case("sum_to_axis", |g, x| g.sum_to_axis(x[0], 1).unwrap(), |r| vec![away_from_zero(r, &[2, 3, 4])]),
        case("sum", |g, x| g.sum(x[0]), |r| vec![away_from_zero(r, &[2, 3])]),
        case("mean", |g, x| g.mean(x[0]), |r| vec![away_from_zero(r, &[2, 3])]),
        case("reshape", |g, x| g.reshape(x[0], &[6, 2]).unwrap(), |r| vec![away_from_zero(r, &[3, 4])]),
        case(
            "concat",
            |g, x| g.concat(x[0], x[1], 2).unwrap(),
            |r| vec![away_from_zero(r, &[2, 3, 4]), away_from_zero(r, &[2, 3, 2])],
        ),
        case("slice", |g, x| g.slice(x[0], 2, 1, 3).unwrap(), |r| vec![away_from_zero(r, &[2, 3, 5])]),
        case("pad", |g, x| g.pad(x[0], 1, 2, 6).unwrap(), |r| vec![away_from_zero(r, &[2, 3])]),
        case(
            "conv1d_stride1",
            |g, x| g.conv1d(x[0], x[1], 1).unwrap(),
            |r| vec![away_from_zero(r, &[2, 2, 7]), away_from_zero(r, &[3, 2, 5])],
        ),
        case(
            "conv1d_stride2",
            |g, x| g.conv1d(x[0], x[1], 2).unwrap(),
            |r| vec![away_from_zero(r, &[2, 3, 9]), away_from_zero(r, &[2, 3, 5])],
        ),
        case(
            "conv_transpose1d",
            |g, x| g.conv_transpose1d(x[0], x[1], 2).unwrap(),
            |r| vec![away_from_zero(r, &[2, 4, 3]), away_from_zero(r, &[4, 2, 5])],
        ),
        case(
            "channel_bias",
            |g, x| g.add_channel_bias(x[0], x[1]).unwrap(),
            |r| vec![away_from_zero(r, &[2, 3, 4]), away_from_zero(r, &[3])],
        ),
        case(
            "spectral_normalized_kernel",
            |g, x| {
                // Fixed singular vectors: derivative flows only through u^T W v.
                let mut rng = ChaCha8Rng::seed_from_u64(9);
                let mut state = SpectralState::new(g.shape(x[0]), &mut rng);
                let frozen = Tensor::new(vec![3, 2, 5], (0..30).map(|i| ((i * 7) % 11) as f64 - 5.0).collect())
                    .unwrap();
                for _ in 0..5 {
                    state.power_iteration(&frozen).unwrap();
                }
                state.apply_in_graph(g, x[0]).unwrap()
            },
            |r| vec![away_from_zero(r, &[3, 2, 5])],
        ),
    ]
}

/// Checks `per_case` random instances of every op; returns the instance
/// count and the worst `(name, relative error)`.
pub fn check_all_ops(seed: u64, per_case: usize) -> (usize, &'static str, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = 0;
    let mut worst = ("none", 0.0);
    for case in cases() {
        for _ in 0..per_case {
            let inputs = (case.inputs)(&mut rng);
            let e = check(case.op.as_ref(), inputs, &mut rng);
            if e >= worst.1 {
                worst = (case.name, e);
            }
            instances += 1;
        }
    }
    (instances, worst.0, worst.1)
}

fn toy_critic(g: &mut Graph, x: NodeId, params: &[NodeId], states: &[SpectralState]) -> NodeId {
    let k = states[0].apply_in_graph(g, params[0]).unwrap();
    let h = g.conv1d(x, k, 2).unwrap();
    let h = g.add_channel_bias(h, params[1]).unwrap();
    let h = g.leaky_relu(h, 0.2);
    let n = g.shape(h)[0];
    let flat_len = g.value(h).len() / n;
    let h = g.reshape(h, &[n, flat_len]).unwrap();
    let w = states[1].apply_in_graph(g, params[2]).unwrap();
    let y = g.dense(h, w, params[3]).unwrap();
    g.sum(y)
}

/// `(||grad_x D(x)|| - 1)^2` for a single sample.
fn penalty(g: &mut Graph, x: NodeId, params: &[NodeId], states: &[SpectralState]) -> NodeId {
    let d = toy_critic(g, x, params, states);
    let gx = g.input_gradient(d, x).unwrap();
    let sq = g.square(gx);
    let s = g.sum(sq);
    let norm = g.sqrt(s);
    let one = g.leaf(Tensor::scalar(1.0));
    let diff = g.sub(norm, one).unwrap();
    g.square(diff)
}

/// Relative error of the penalty's parameter gradient on a two-asset toy
/// critic, and the largest analytic entry.
pub fn penalty_gradient_check(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Two assets, twelve time steps.
    let x = away_from_zero(&mut rng, &[1, 2, 12]);
    let params = vec![
        away_from_zero(&mut rng, &[4, 2, 5]),
        away_from_zero(&mut rng, &[4]),
        away_from_zero(&mut rng, &[1, 24]),
        away_from_zero(&mut rng, &[1]),
    ];
    let mut states: Vec<SpectralState> =
        params.iter().step_by(2).map(|p| SpectralState::new(p.shape(), &mut rng)).collect();
    for (s, p) in states.iter_mut().zip(params.iter().step_by(2)) {
        for _ in 0..3 {
            s.power_iteration(p).unwrap();
        }
    }

    let value_of = |ps: &[Tensor]| {
        let mut g = Graph::new();
        let xi = g.leaf(x.clone());
        let ids: Vec<NodeId> = ps.iter().map(|p| g.leaf(p.clone())).collect();
        let p = penalty(&mut g, xi, &ids, &states);
        g.value(p).item().unwrap()
    };

    let mut g = Graph::new();
    let xi = g.leaf(x.clone());
    let ids: Vec<NodeId> = params.iter().map(|p| g.leaf(p.clone())).collect();
    let p = penalty(&mut g, xi, &ids, &states);
    let analytic = g.gradients(p, &ids).unwrap();

    let mut all_a = Vec::new();
    let mut all_n = Vec::new();
    for k in 0..params.len() {
        for i in 0..params[k].len() {
            let mut plus = params.clone();
            plus[k].data_mut()[i] += H;
            let mut minus = params.clone();
            minus[k].data_mut()[i] -= H;
            all_n.push((value_of(&plus) - value_of(&minus)) / (2.0 * H));
            all_a.push(analytic[k].data()[i]);
        }
    }
    let largest = all_a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (rel_err(&all_a, &all_n), largest)
}
