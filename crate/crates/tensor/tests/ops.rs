use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trendgan_tensor::{spectral_normalize, Graph, SpectralState, Tensor, TensorError};

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

fn random(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    t(shape, &(0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
}

#[test]
fn dense_identity_and_dot_product() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::vector(vec![3.0, 4.0]));
    let w = g.leaf(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let b = g.leaf(Tensor::vector(vec![0.0, 0.0]));
    let y = g.dense(x, w, b).unwrap();
    assert_eq!(g.value(y).data(), &[3.0, 4.0]);

    let w = g.leaf(t(&[1, 2], &[1.0, 2.0]));
    let b = g.leaf(Tensor::vector(vec![0.5]));
    let y = g.dense(x, w, b).unwrap();
    assert_eq!(g.value(y).data(), &[11.5]);
}

#[test]
fn dense_rejects_mismatched_input() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::zeros(&[4]));
    let w = g.leaf(Tensor::zeros(&[5, 3]));
    let b = g.leaf(Tensor::zeros(&[5]));
    assert!(matches!(g.dense(x, w, b), Err(TensorError::Dimension(_))));
}

#[test]
fn delta_kernel_is_identity() {
    let mut g = Graph::new();
    let x = g.leaf(t(&[1, 1, 5], &[0.0, 0.0, 1.0, 0.0, 0.0]));
    let k = g.leaf(t(&[1, 1, 5], &[0.0, 0.0, 1.0, 0.0, 0.0]));
    let y = g.conv1d(x, k, 1).unwrap();
    assert_eq!(g.value(y).data(), &[0.0, 0.0, 1.0, 0.0, 0.0]);
}

/// Direct sliding-window sum with explicit zero padding.
fn brute_conv(x: &[f64], k: &[f64], stride: usize) -> Vec<f64> {
    let len_out = x.len().div_ceil(stride);
    let total = ((len_out - 1) * stride + k.len()).saturating_sub(x.len());
    let left = total / 2;
    let mut padded = vec![0.0; left];
    padded.extend_from_slice(x);
    padded.resize(left + x.len() + (total - left), 0.0);
    (0..len_out)
        .map(|t| (0..k.len()).map(|j| k[j] * padded[t * stride + j]).sum())
        .collect()
}

#[test]
fn strided_box_filter_matches_brute_force() {
    let mut g = Graph::new();
    let x = g.leaf(t(&[1, 1, 4], &[1.0, 2.0, 3.0, 4.0]));
    let k = g.leaf(t(&[1, 1, 5], &[1.0; 5]));
    let y = g.conv1d(x, k, 2).unwrap();
    let expected = brute_conv(&[1.0, 2.0, 3.0, 4.0], &[1.0; 5], 2);
    assert_eq!(expected, vec![10.0, 9.0]);
    assert_eq!(g.value(y).data(), expected.as_slice());
}

#[test]
fn conv_matches_brute_force_on_random_signals() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for len in 1..15 {
        for stride in 1..4 {
            let x = random(&mut rng, &[1, 1, len]);
            let k = random(&mut rng, &[1, 1, 5]);
            let mut g = Graph::new();
            let (xi, ki) = (g.leaf(x.clone()), g.leaf(k.clone()));
            let y = g.conv1d(xi, ki, stride).unwrap();
            let expected = brute_conv(x.data(), k.data(), stride);
            for (a, b) in g.value(y).data().iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn conv_rejects_channel_mismatch() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::zeros(&[1, 3, 8]));
    let k = g.leaf(Tensor::zeros(&[2, 2, 5]));
    assert!(g.conv1d(x, k, 2).is_err());
    let tk = g.leaf(Tensor::zeros(&[2, 1, 5]));
    assert!(g.conv_transpose1d(x, tk, 2).is_err());
}

#[test]
fn transpose_conv_doubles_length_and_halves_channels() {
    // A = 3: 4A channels x 5 steps -> 2A channels x 10 steps.
    let a = 3;
    let mut g = Graph::new();
    let y = g.leaf(Tensor::zeros(&[1, 4 * a, 5]));
    let k = g.leaf(Tensor::zeros(&[4 * a, 2 * a, 5]));
    let out = g.conv_transpose1d(y, k, 2).unwrap();
    assert_eq!(g.shape(out), &[1, 2 * a, 10]);
}

#[test]
fn transpose_conv_places_kernel_copies_at_stride_offsets() {
    let kernel = [1.0, 2.0, 3.0, 4.0, 5.0];
    let mut g = Graph::new();
    let y = g.leaf(t(&[1, 1, 4], &[0.0, 1.0, 0.0, 0.0]));
    let k = g.leaf(t(&[1, 1, 5], &kernel));
    let out = g.conv_transpose1d(y, k, 2).unwrap();
    // Output length 8; conv geometry over 8 steps has left pad 1, so the
    // impulse at t = 1 scatters kernel tap j to position 2 + j - 1.
    let mut expected = vec![0.0; 8];
    for (j, kj) in kernel.iter().enumerate() {
        let pos = 2 + j - 1;
        if pos < 8 {
            expected[pos] = *kj;
        }
    }
    assert_eq!(g.value(out).data(), expected.as_slice());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transpose_conv_is_adjoint_of_conv(seed in any::<u64>(), len in 1usize..12, c_in in 1usize..4, c_out in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // conv maps [c_in, 2*len] to [c_out, len]; transpose conv goes back.
        let x = random(&mut rng, &[2, c_in, 2 * len]);
        let y = random(&mut rng, &[2, c_out, len]);
        let k = random(&mut rng, &[c_out, c_in, 5]);
        let mut g = Graph::new();
        let (xi, yi, ki) = (g.leaf(x.clone()), g.leaf(y.clone()), g.leaf(k));
        let cx = g.conv1d(xi, ki, 2).unwrap();
        let ty = g.conv_transpose1d(yi, ki, 2).unwrap();
        let lhs = g.value(cx).dot(&y).unwrap();
        let rhs = x.dot(g.value(ty)).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10, "{} vs {}", lhs, rhs);
    }
}

fn top_singular_value(w: &Tensor) -> f64 {
    let rows = w.shape()[0];
    let cols = w.len() / rows;
    let m = DMatrix::from_row_slice(rows, cols, w.data());
    m.singular_values().max()
}

#[test]
fn spectral_norm_of_diagonal_converges_to_one() {
    let w = t(&[2, 2], &[3.0, 0.0, 0.0, 1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut state = SpectralState::new(w.shape(), &mut rng);
    let mut out = w.clone();
    for _ in 0..30 {
        out = spectral_normalize(&w, &mut state).unwrap();
    }
    let s = top_singular_value(&out);
    assert!((s - 1.0).abs() < 1e-2, "{s}");
    assert!((state.u().iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn orthonormal_matrix_is_unchanged() {
    let (c, s) = (0.6f64, 0.8f64);
    let w = t(&[2, 2], &[c, -s, s, c]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut state = SpectralState::new(w.shape(), &mut rng);
    let out = spectral_normalize(&w, &mut state).unwrap();
    for (a, b) in out.data().iter().zip(w.data()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn random_kernels_converge_to_unit_spectral_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let w = random(&mut rng, &[8, 8]);
        let mut state = SpectralState::new(w.shape(), &mut rng);
        let mut sigma_hat = 0.0;
        let mut out = w.clone();
        for _ in 0..50 {
            sigma_hat = state.power_iteration(&w).unwrap();
            out = state.normalized(&w).unwrap();
        }
        let exact = top_singular_value(&w);
        let normalized = top_singular_value(&out);
        assert!((sigma_hat - exact).abs() / exact < 1e-2, "{sigma_hat} vs {exact}");
        assert!((0.99..=1.01).contains(&normalized), "{normalized}");
    }
}

#[test]
fn conv_kernel_reshaped_for_power_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let w = random(&mut rng, &[4, 2, 5]);
    let mut state = SpectralState::new(w.shape(), &mut rng);
    assert_eq!(state.u().len(), 4);
    for _ in 0..200 {
        state.power_iteration(&w).unwrap();
    }
    assert_eq!(state.v().len(), 10);
    let exact = top_singular_value(&w);
    assert!((state.sigma(&w).unwrap() - exact).abs() / exact < 1e-6);
}

#[test]
fn zero_kernel_is_flagged_and_returned_unchanged() {
    let w = Tensor::zeros(&[3, 4]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut state = SpectralState::new(w.shape(), &mut rng);
    let out = spectral_normalize(&w, &mut state).unwrap();
    assert_eq!(out, w);
    assert!(state.is_degenerate());
}

#[test]
fn ops_are_deterministic() {
    let build = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let x = random(&mut rng, &[2, 3, 10]);
        let k = random(&mut rng, &[4, 3, 5]);
        let mut g = Graph::new();
        let (xi, ki) = (g.leaf(x), g.leaf(k));
        let y = g.conv1d(xi, ki, 2).unwrap();
        let y = g.leaky_relu(y, 0.2);
        let s = g.sum(y);
        let grad = g.gradients(s, &[ki]).unwrap();
        (g.value(y).clone(), grad)
    };
    assert_eq!(build(), build());
}
