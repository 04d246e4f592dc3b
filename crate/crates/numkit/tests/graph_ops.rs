//! Gradient and contract tests for every graph operation.
//!
//! The gradient oracle is central finite differences (`numkit::gradcheck`),
//! which re-runs the forward pass from perturbed parameters and never looks
//! at the tape's backward implementation.

use numkit::gradcheck::{self, DEFAULT_STEP};
use numkit::{Graph, NodeRef, PadMode, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

const TOL: f64 = 1e-5;

fn rand_tensor(shape: &[usize], rng: &mut ChaCha12Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Asserts that backward's gradients for `build`'s loss match central
/// finite differences for every parameter.
fn assert_grads_match(
    params: &[Tensor<f64>],
    build: impl Fn(&mut Graph<f64>, &[NodeRef]) -> NodeRef,
) {
    // Analytic gradients via the tape.
    let mut g = Graph::new();
    let leaves: Vec<NodeRef> = params
        .iter()
        .map(|p| g.leaf(p.clone().with_grad()).unwrap())
        .collect();
    let loss = build(&mut g, &leaves);
    assert_eq!(g.shape(loss), &[1], "loss must be scalar");
    g.backward(loss).unwrap();
    let analytic: Vec<Tensor<f64>> = leaves.iter().map(|&l| g.grad_or_zeros(l)).collect();

    // Numeric gradients by re-running the forward pass.
    let numeric = gradcheck::central_diff(
        |ps: &[Tensor<f64>]| {
            let mut g = Graph::new();
            let leaves: Vec<NodeRef> = ps.iter().map(|p| g.leaf(p.clone()).unwrap()).collect();
            let loss = build(&mut g, &leaves);
            g.value(loss).scalar_value()
        },
        params,
        DEFAULT_STEP,
    );

    if let Some(m) = gradcheck::compare(&analytic, &numeric, TOL) {
        panic!(
            "gradient mismatch: param {} offset {}: analytic {} vs numeric {} (rel err {})",
            m.param, m.offset, m.analytic, m.numeric, m.rel_err
        );
    }
}

fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

// ----- per-op gradient checks ---------------------------------------------

#[test]
fn grad_add_and_scale() {
    let mut r = rng(1);
    let params = vec![rand_tensor(&[3, 4], &mut r), rand_tensor(&[3, 4], &mut r)];
    assert_grads_match(&params, |g, l| {
        let s = g.add(l[0], l[1]).unwrap();
        let s = g.scale(s, 0.37).unwrap();
        g.sum_all(s).unwrap()
    });
}

#[test]
fn grad_add_row() {
    let mut r = rng(2);
    let params = vec![rand_tensor(&[4, 3], &mut r), rand_tensor(&[3], &mut r)];
    assert_grads_match(&params, |g, l| {
        let s = g.add_row(l[0], l[1]).unwrap();
        g.sum_all(s).unwrap()
    });
}

#[test]
fn grad_linear_with_bias() {
    let mut r = rng(3);
    let params = vec![
        rand_tensor(&[3, 5], &mut r), // x
        rand_tensor(&[4, 5], &mut r), // w
        rand_tensor(&[4], &mut r),    // b
    ];
    assert_grads_match(&params, |g, l| {
        let y = g.linear(l[0], l[1], Some(l[2])).unwrap();
        // Gate the output by itself to make the loss nonlinear in it.
        let doubled = g.concat_cols(y, y).unwrap();
        let sq = g.glu(doubled).unwrap();
        g.sum_all(sq).unwrap()
    });
}

#[test]
fn grad_matmul_both_orientations() {
    let mut r = rng(4);
    let params = vec![
        rand_tensor(&[2, 3], &mut r),
        rand_tensor(&[3, 4], &mut r),
        rand_tensor(&[5, 3], &mut r),
    ];
    assert_grads_match(&params, |g, l| {
        let ab = g.matmul(l[0], l[1]).unwrap(); // [2×4]
        let ant = g.matmul_nt(l[0], l[2]).unwrap(); // [2×5]
        let s1 = g.sum_all(ab).unwrap();
        let s2 = g.sum_all(ant).unwrap();
        let s2 = g.scale(s2, 0.5).unwrap();
        g.add(s1, s2).unwrap()
    });
}

#[test]
fn grad_conv1d_same_and_causal() {
    let mut r = rng(5);
    let params = vec![
        rand_tensor(&[6, 2], &mut r),    // x
        rand_tensor(&[3, 2, 3], &mut r), // kernels (same, odd width)
        rand_tensor(&[3, 2, 4], &mut r), // kernels (causal, even width ok)
    ];
    assert_grads_match(&params, |g, l| {
        let a = g.conv1d(l[0], l[1], PadMode::Same).unwrap();
        let sa = g.sum_all(a).unwrap();
        let b = g.conv1d(l[0], l[2], PadMode::Causal).unwrap();
        let sb = g.sum_all(b).unwrap();
        g.add(sa, sb).unwrap()
    });
}

#[test]
fn grad_glu() {
    let mut r = rng(6);
    let params = vec![rand_tensor(&[5, 6], &mut r)];
    assert_grads_match(&params, |g, l| {
        let y = g.glu(l[0]).unwrap();
        g.sum_all(y).unwrap()
    });
}

#[test]
fn grad_gather_rows_accumulates_repeats() {
    let mut r = rng(7);
    let params = vec![rand_tensor(&[5, 3], &mut r)];
    assert_grads_match(&params, |g, l| {
        // Index 2 appears twice: its table row must receive both
        // contributions.
        let y = g.gather_rows(l[0], &[2, 0, 2, 4]).unwrap();
        let doubled = g.concat_cols(y, y).unwrap();
        let y = g.glu(doubled).unwrap();
        g.sum_all(y).unwrap()
    });
}

#[test]
fn grad_concat_cols() {
    let mut r = rng(8);
    let params = vec![rand_tensor(&[3, 2], &mut r), rand_tensor(&[3, 4], &mut r)];
    assert_grads_match(&params, |g, l| {
        let y = g.concat_cols(l[0], l[1]).unwrap();
        let y = g.glu(y).unwrap();
        g.sum_all(y).unwrap()
    });
}

#[test]
fn grad_masked_softmax() {
    let mut r = rng(9);
    let weights = rand_tensor(&[4, 1], &mut r);
    let params = vec![rand_tensor(&[3, 4], &mut r)];
    let mask = vec![true, false, true, true];
    assert_grads_match(&params, |g, l| {
        let p = g.masked_softmax_rows(l[0], Some(&mask)).unwrap();
        let w = g.constant(weights.clone()).unwrap();
        let y = g.matmul(p, w).unwrap();
        g.sum_all(y).unwrap()
    });
}

#[test]
fn grad_cross_entropy_sum() {
    let mut r = rng(10);
    let params = vec![rand_tensor(&[4, 6], &mut r)];
    assert_grads_match(&params, |g, l| {
        g.cross_entropy_sum(l[0], &[1, 0, 5, 3]).unwrap()
    });
}

#[test]
fn grad_dropout_with_fixed_mask() {
    let mut r = rng(11);
    let params = vec![rand_tensor(&[4, 4], &mut r)];
    // The mask must be identical across FD re-evaluations, so the builder
    // reseeds its own RNG on every call.
    assert_grads_match(&params, |g, l| {
        let mut mask_rng = ChaCha12Rng::seed_from_u64(99);
        let y = g.dropout(l[0], 0.4, &mut mask_rng).unwrap();
        g.sum_all(y).unwrap()
    });
}

#[test]
fn grad_two_layer_toy_network() {
    // gather → conv(causal) → glu → residual add → linear → cross-entropy:
    // a miniature of the real decoder stack.
    let mut r = rng(12);
    let params = vec![
        rand_tensor(&[7, 4], &mut r),    // embedding table
        rand_tensor(&[8, 4, 3], &mut r), // conv kernels → 8 channels
        rand_tensor(&[8], &mut r),       // conv bias
        rand_tensor(&[7, 4], &mut r),    // output projection
        rand_tensor(&[7], &mut r),       // output bias
    ];
    assert_grads_match(&params, |g, l| {
        let e = g.gather_rows(l[0], &[1, 4, 2, 2, 6]).unwrap();
        let c = g.conv1d(e, l[1], PadMode::Causal).unwrap();
        let c = g.add_row(c, l[2]).unwrap();
        let h = g.glu(c).unwrap();
        let h = g.add(h, e).unwrap();
        let logits = g.linear(h, l[3], Some(l[4])).unwrap();
        g.cross_entropy_sum(logits, &[4, 2, 2, 6, 0]).unwrap()
    });
}

// ----- analytic special cases ----------------------------------------------

#[test]
fn backward_of_plain_sum_is_all_ones() {
    let mut g = Graph::<f64>::new();
    let theta = g
        .leaf(Tensor::from_vec(&[2, 2], vec![1., 2., 3., 4.]).unwrap().with_grad())
        .unwrap();
    let loss = g.sum_all(theta).unwrap();
    g.backward(loss).unwrap();
    assert_eq!(g.grad(theta).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
}

#[test]
fn loss_constant_in_parameter_gives_no_gradient() {
    let mut g = Graph::<f64>::new();
    let theta = g.leaf(Tensor::zeros(&[3]).with_grad()).unwrap();
    let c = g.constant(Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap()).unwrap();
    let loss = g.sum_all(c).unwrap();
    g.backward(loss).unwrap();
    assert!(g.grad(theta).is_none());
    assert_eq!(g.grad_or_zeros(theta).data(), &[0.0, 0.0, 0.0]);
}

// ----- forward contracts ----------------------------------------------------

#[test]
fn conv1d_zero_kernels_give_zero_output() {
    let mut g = Graph::<f32>::new();
    let x = g.leaf(Tensor::from_vec(&[4, 2], vec![1.; 8]).unwrap()).unwrap();
    let w = g.leaf(Tensor::zeros(&[3, 2, 3])).unwrap();
    let y = g.conv1d(x, w, PadMode::Same).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn conv1d_width_one_identity_kernels_copy_input() {
    let mut g = Graph::<f32>::new();
    let x = g
        .leaf(Tensor::from_vec(&[3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap())
        .unwrap();
    let mut ident = Tensor::zeros(&[2, 2, 1]);
    ident.set(&[0, 0, 0], 1.0);
    ident.set(&[1, 1, 0], 1.0);
    let w = g.leaf(ident).unwrap();
    let y = g.conv1d(x, w, PadMode::Same).unwrap();
    assert_eq!(g.value(y).data(), g.value(x).data());
}

#[test]
fn conv1d_hand_example_same_padding() {
    // x=[1,2,3], w=[1,0,−1], zero-padded centered window →  [−2,−2,2]
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::from_vec(&[3, 1], vec![1., 2., 3.]).unwrap()).unwrap();
    let w = g.leaf(Tensor::from_vec(&[1, 1, 3], vec![1., 0., -1.]).unwrap()).unwrap();
    let y = g.conv1d(x, w, PadMode::Same).unwrap();
    assert_eq!(g.value(y).data(), &[-2.0, -2.0, 2.0]);
}

#[test]
fn conv1d_hand_example_causal_padding() {
    // Same input/kernel, left-padded only →  [−1,−2,−2]
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::from_vec(&[3, 1], vec![1., 2., 3.]).unwrap()).unwrap();
    let w = g.leaf(Tensor::from_vec(&[1, 1, 3], vec![1., 0., -1.]).unwrap()).unwrap();
    let y = g.conv1d(x, w, PadMode::Causal).unwrap();
    assert_eq!(g.value(y).data(), &[-1.0, -2.0, -2.0]);
}

#[test]
fn conv1d_matches_naive_triple_loop() {
    // Independent reference: direct index arithmetic, no shared helpers.
    fn naive(x: &Tensor<f64>, w: &Tensor<f64>, pad: isize) -> Vec<f64> {
        let (t_len, cin) = (x.shape()[0], x.shape()[1]);
        let (cout, width) = (w.shape()[0], w.shape()[2]);
        let mut out = vec![0.0; t_len * cout];
        for t in 0..t_len as isize {
            for co in 0..cout {
                let mut acc = 0.0;
                for ci in 0..cin {
                    for k in 0..width as isize {
                        let s = t + k - pad;
                        if s >= 0 && (s as usize) < t_len {
                            acc += x.at(&[s as usize, ci]) * w.at(&[co, ci, k as usize]);
                        }
                    }
                }
                out[t as usize * cout + co] = acc;
            }
        }
        out
    }

    let mut r = rng(20);
    let x = rand_tensor(&[5, 2], &mut r);
    let w = rand_tensor(&[3, 2, 3], &mut r);

    let mut g = Graph::<f64>::new();
    let xn = g.leaf(x.clone()).unwrap();
    let wn = g.leaf(w.clone()).unwrap();

    let same = g.conv1d(xn, wn, PadMode::Same).unwrap();
    for (got, want) in g.value(same).data().iter().zip(naive(&x, &w, 1)) {
        assert!((got - want).abs() < 1e-6, "same-mode: {} vs {}", got, want);
    }

    let causal = g.conv1d(xn, wn, PadMode::Causal).unwrap();
    for (got, want) in g.value(causal).data().iter().zip(naive(&x, &w, 2)) {
        assert!((got - want).abs() < 1e-6, "causal-mode: {} vs {}", got, want);
    }
}

#[test]
fn causal_conv_ignores_future_positions() {
    let mut r = rng(21);
    let w = rand_tensor(&[2, 2, 3], &mut r);
    let x1 = rand_tensor(&[6, 2], &mut r);
    let mut x2 = x1.clone();
    // Perturb positions 4 and 5; outputs at 0..=3 must not move at all.
    for t in 4..6 {
        for c in 0..2 {
            let v = x2.at(&[t, c]);
            x2.set(&[t, c], v + 10.0);
        }
    }
    let mut g = Graph::<f64>::new();
    let wn = g.leaf(w).unwrap();
    let a = g.leaf(x1).unwrap();
    let b = g.leaf(x2).unwrap();
    let ya = g.conv1d(a, wn, PadMode::Causal).unwrap();
    let yb = g.conv1d(b, wn, PadMode::Causal).unwrap();
    for t in 0..4 {
        assert_eq!(g.value(ya).row(t), g.value(yb).row(t), "position {}", t);
    }
}

// ----- error states ----------------------------------------------------------

#[test]
fn second_backward_is_an_error() {
    let mut g = Graph::<f32>::new();
    let x = g.leaf(Tensor::scalar(2.0).with_grad()).unwrap();
    let loss = g.sum_all(x).unwrap();
    g.backward(loss).unwrap();
    assert!(matches!(g.backward(loss), Err(numkit::NumError::GraphConsumed)));
    // Recording new ops on a consumed tape is also refused.
    assert!(g.sum_all(x).is_err());
}

#[test]
fn non_scalar_loss_is_an_error() {
    let mut g = Graph::<f32>::new();
    let x = g.leaf(Tensor::zeros(&[2, 2]).with_grad()).unwrap();
    assert!(matches!(
        g.backward(x),
        Err(numkit::NumError::NonScalarLoss(_))
    ));
}

#[test]
fn non_finite_values_abort_the_step() {
    let mut g = Graph::<f32>::new();
    // A leaf carrying Inf is rejected outright.
    assert!(g.leaf(Tensor::scalar(f32::INFINITY)).is_err());
    // An op that overflows f32 is rejected at the op.
    let x = g.leaf(Tensor::scalar(1.0e30)).unwrap();
    let y = g.scale(x, 1.0e8).unwrap(); // 1e38: still finite
    assert!(matches!(
        g.scale(y, 1.0e8),
        Err(numkit::NumError::NonFinite { .. })
    ));
}

#[test]
fn shape_and_mode_validation() {
    let mut g = Graph::<f32>::new();
    let x = g.leaf(Tensor::zeros(&[4, 2])).unwrap();
    let w_even = g.leaf(Tensor::zeros(&[2, 2, 4])).unwrap();
    assert!(g.conv1d(x, w_even, PadMode::Same).is_err());
    assert!(g.conv1d(x, w_even, PadMode::Causal).is_ok());

    let y = g.leaf(Tensor::zeros(&[3, 2])).unwrap();
    assert!(g.add(x, y).is_err());

    let table = g.leaf(Tensor::zeros(&[3, 2])).unwrap();
    assert!(g.gather_rows(table, &[3]).is_err());

    let z = g.leaf(Tensor::zeros(&[2, 3])).unwrap();
    assert!(g.masked_softmax_rows(z, Some(&[false, false, false])).is_err());
    assert!(g.masked_softmax_rows(z, Some(&[true, true])).is_err());
}
