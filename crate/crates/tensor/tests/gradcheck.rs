//! Reverse-mode gradients against central finite differences.

mod support;

use trendgan_tensor::{Graph, Tensor};

#[test]
fn every_op_matches_finite_differences() {
    let (instances, name, worst) = support::check_all_ops(2024, 5);
    assert!(instances >= 100, "only {instances} instances");
    assert!(worst < 1e-4, "{name}: relative error {worst:e}");
}

#[test]
fn gradient_penalty_parameter_gradient_matches_finite_differences() {
    let (e, largest) = support::penalty_gradient_check(77);
    assert!(e < 1e-3, "penalty gradient relative error {e:e}");
    // The penalty really depends on the kernels.
    assert!(largest > 1e-6);
}

#[test]
fn square_function_second_order() {
    // D(x) = x^2 at 3: dD/dx = 6, d/dx (dD/dx)^2 = 8x = 24.
    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(3.0));
    let d = g.square(x);
    let dx = g.input_gradient(d, x).unwrap();
    assert_eq!(g.value(dx).item().unwrap(), 6.0);
    let sq = g.square(dx);
    let ddx = g.grad(sq, &[x]).unwrap()[0];
    assert_eq!(g.value(ddx).item().unwrap(), 24.0);
}

#[test]
fn linear_function_has_no_second_order_term() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::vector(vec![1.0, -2.0, 0.5]));
    let w = g.leaf(Tensor::vector(vec![0.3, 0.7, -1.1]));
    let p = g.mul(x, w).unwrap();
    let d = g.sum(p);
    let dx = g.input_gradient(d, x).unwrap();
    assert_eq!(g.value(dx).data(), &[0.3, 0.7, -1.1]);
    let s = g.sum(dx);
    let ddx = g.grad(s, &[x]).unwrap()[0];
    assert!(g.value(ddx).data().iter().all(|&v| v == 0.0));
}

#[test]
fn first_order_graph_refuses_input_gradient() {
    let mut g = Graph::first_order();
    let x = g.leaf(Tensor::scalar(2.0));
    let d = g.square(x);
    assert!(g.input_gradient(d, x).is_err());
    // plain gradients still work
    assert_eq!(g.gradients(d, &[x]).unwrap()[0].item().unwrap(), 4.0);
}

#[test]
fn unrelated_input_gets_zero_gradient() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::vector(vec![1.0, 2.0]));
    let y = g.leaf(Tensor::vector(vec![3.0, 4.0]));
    let s = g.sum(x);
    let grads = g.gradients(s, &[x, y]).unwrap();
    assert_eq!(grads[0].data(), &[1.0, 1.0]);
    assert_eq!(grads[1].data(), &[0.0, 0.0]);
}
