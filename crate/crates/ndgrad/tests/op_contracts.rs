//! Forward-contract tests for the op set: identity cases, shape rules,
//! rejection of malformed calls, and the backward accumulation contract.

use ndgrad::{Graph, PadMode, ParamStore, PoolKind, Tensor};
use proptest::prelude::*;

#[test]
fn conv2d_identity_kernel_passes_input_through() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::new(
        vec![3, 3, 1],
        vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
    ));
    let w = g.constant(Tensor::new(vec![1, 1, 1, 1], vec![1.0]));
    let y = g.conv2d(x, w, 1, PadMode::SameZero);
    assert_eq!(g.value(y).data(), g.value(x).data());
}

#[test]
fn conv2d_zero_kernels_give_zero_output() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::new(vec![4, 4, 2], (0..32).map(|i| i as f64).collect()));
    let w = g.constant(Tensor::zeros(vec![3, 3, 2, 5]));
    let y = g.conv2d(x, w, 1, PadMode::SameZero);
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    assert_eq!(g.shape(y), &[4, 4, 5]);
}

#[test]
fn conv2d_output_extents_follow_size_formula() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::zeros(vec![2, 32, 48, 3]));
    let w = g.constant(Tensor::zeros(vec![3, 3, 3, 8]));
    let same = g.conv2d(x, w, 1, PadMode::SameZero);
    assert_eq!(g.shape(same), &[2, 32, 48, 8]);
    let strided = g.conv2d(x, w, 2, PadMode::SameZero);
    assert_eq!(g.shape(strided), &[2, 16, 24, 8]);
    let valid = g.conv2d(x, w, 1, PadMode::Valid);
    assert_eq!(g.shape(valid), &[2, 30, 46, 8]);
}

#[test]
#[should_panic(expected = "channel mismatch")]
fn conv2d_rejects_channel_mismatch() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::zeros(vec![4, 4, 2]));
    let w = g.constant(Tensor::zeros(vec![3, 3, 3, 5]));
    g.conv2d(x, w, 1, PadMode::SameZero);
}

#[test]
fn conv1d_centered_delta_kernel_is_identity() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::new(vec![7, 1], vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0]));
    // size-5 kernel, delta at the center tap
    let mut k = vec![0.0; 5];
    k[2] = 1.0;
    let w = g.constant(Tensor::new(vec![5, 1, 1], k));
    let y = g.conv1d(x, w);
    assert_eq!(g.value(y).data(), g.value(x).data());
}

#[test]
fn conv1d_averaging_kernel_constant_interior() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::full(vec![9, 1], 2.0));
    let w = g.constant(Tensor::full(vec![5, 1, 1], 0.2));
    let y = g.conv1d(x, w);
    // interior positions see the full kernel support
    for p in 2..7 {
        assert!((g.value(y).data()[p] - 2.0).abs() < 1e-12);
    }
}

#[test]
#[should_panic(expected = "odd")]
fn conv1d_rejects_even_kernel() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::zeros(vec![8, 2]));
    let w = g.constant(Tensor::zeros(vec![4, 2, 3]));
    g.conv1d(x, w);
}

#[test]
fn max_pool_takes_window_maximum() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::new(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]));
    let y = g.pool(x, PoolKind::Max2x2);
    assert_eq!(g.value(y).data(), &[4.0]);
    assert_eq!(g.shape(y), &[1, 1, 1]);
}

#[test]
fn max_pool_halves_both_extents() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::zeros(vec![3, 8, 12, 5]));
    let y = g.pool(x, PoolKind::Max2x2);
    assert_eq!(g.shape(y), &[3, 4, 6, 5]);
}

#[test]
#[should_panic(expected = "even extents")]
fn max_pool_rejects_odd_extent() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::zeros(vec![3, 4, 1]));
    g.pool(x, PoolKind::Max2x2);
}

#[test]
fn avg_over_height_of_constant_map_is_constant_row() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::full(vec![2, 5, 3], 0.7));
    let y = g.pool(x, PoolKind::AvgOverHeight);
    assert_eq!(g.shape(y), &[5, 3]);
    assert!(g.value(y).data().iter().all(|&v| (v - 0.7).abs() < 1e-12));
}

#[test]
fn layer_norm_gives_zero_mean_unit_variance_before_scale_shift() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::new(
        vec![3, 6],
        (0..18).map(|i| (i as f64 * 1.37).sin() * 3.0 + 0.5).collect(),
    ));
    let gamma = g.constant(Tensor::full(vec![6], 1.0));
    let beta = g.constant(Tensor::zeros(vec![6]));
    let y = g.layer_norm(x, gamma, beta);
    for row in 0..3 {
        let vals = &g.value(y).data()[row * 6..(row + 1) * 6];
        let mean: f64 = vals.iter().sum::<f64>() / 6.0;
        let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 6.0;
        assert!(mean.abs() < 1e-6, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-4, "var {var}");
    }
}

#[test]
fn batch_norm_train_identical_samples_normalize_to_zero() {
    let mut g = Graph::<f64>::new();
    // a batch where every sample is the same -> zero variance handled by eps
    let x = g.leaf(Tensor::full(vec![4, 3], 2.5));
    let gamma = g.constant(Tensor::full(vec![3], 1.0));
    let beta = g.constant(Tensor::zeros(vec![3]));
    let mut rm = Tensor::zeros(vec![3]);
    let mut rv = Tensor::full(vec![3], 1.0);
    let y = g.batch_norm(x, gamma, beta, &mut rm, &mut rv, 0.9, true);
    assert!(g.value(y).data().iter().all(|&v| v.abs() < 1e-9));
    // running moments moved toward the batch statistics
    assert!((rm.data()[0] - (0.9 * 0.0 + 0.1 * 2.5)).abs() < 1e-12);
}

#[test]
fn batch_norm_eval_uses_running_moments() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::new(vec![2, 1], vec![3.0, 5.0]));
    let gamma = g.constant(Tensor::full(vec![1], 1.0));
    let beta = g.constant(Tensor::zeros(vec![1]));
    let mut rm = Tensor::new(vec![1], vec![1.0]);
    let mut rv = Tensor::new(vec![1], vec![4.0]);
    let y = g.batch_norm(x, gamma, beta, &mut rm, &mut rv, 0.9, false);
    // (x - 1)/sqrt(4 + eps)
    let expect0 = 2.0 / (4.0f64 + 1e-5).sqrt();
    assert!((g.value(y).data()[0] - expect0).abs() < 1e-9);
}

#[test]
fn leaky_relu_matches_definition() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]));
    let y = g.leaky_relu(x, 0.2);
    assert_eq!(g.value(y).data(), &[-0.2, 0.0, 2.0]);
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::full(vec![28, 4], 3.7));
    let y = g.softmax(x, 0);
    for &v in g.value(y).data() {
        assert!((v - 1.0 / 28.0).abs() < 1e-12);
    }
}

#[test]
fn softmax_is_shift_invariant() {
    let logits: Vec<f64> = (0..12).map(|i| (i as f64 * 0.71).cos() * 4.0).collect();
    let mut g = Graph::<f64>::new();
    let a = g.leaf(Tensor::new(vec![4, 3], logits.clone()));
    let sa = g.softmax(a, 0);
    let shifted: Vec<f64> = logits.iter().map(|v| v + 123.456).collect();
    let b = g.leaf(Tensor::new(vec![4, 3], shifted));
    let sb = g.softmax(b, 0);
    assert!(g.value(sa).max_abs_diff(g.value(sb)) < 1e-9);
}

#[test]
fn linear_identity_weight_zero_bias_is_identity() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let mut eye = vec![0.0; 9];
    for i in 0..3 {
        eye[i * 3 + i] = 1.0;
    }
    let w = g.constant(Tensor::new(vec![3, 3], eye));
    let b = g.constant(Tensor::zeros(vec![3]));
    let y = g.linear(x, w, b);
    assert_eq!(g.value(y).data(), g.value(x).data());
}

#[test]
fn linear_zero_weight_broadcasts_bias() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::full(vec![4, 3], 9.0));
    let w = g.constant(Tensor::zeros(vec![3, 2]));
    let b = g.constant(Tensor::new(vec![2], vec![1.5, -2.5]));
    let y = g.linear(x, w, b);
    for row in 0..4 {
        assert_eq!(&g.value(y).data()[row * 2..row * 2 + 2], &[1.5, -2.5]);
    }
}

#[test]
#[should_panic(expected = "Din mismatch")]
fn linear_rejects_shape_mismatch() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::zeros(vec![2, 3]));
    let w = g.constant(Tensor::zeros(vec![4, 2]));
    let b = g.constant(Tensor::zeros(vec![2]));
    g.linear(x, w, b);
}

#[test]
fn lstm_zero_everything_outputs_zero() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::zeros(vec![5, 3]));
    let wih = g.constant(Tensor::zeros(vec![3, 16]));
    let whh = g.constant(Tensor::zeros(vec![4, 16]));
    let b = g.constant(Tensor::zeros(vec![16]));
    let y = g.lstm_seq(x, wih, whh, b);
    assert_eq!(g.shape(y), &[5, 4]);
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn lstm_output_is_causal() {
    // output at position t must not change when inputs at positions > t change
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
    let mut mk = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let wih_d = mk(3 * 20);
    let whh_d = mk(5 * 20);
    let b_d = mk(20);
    let x_d = mk(6 * 3);
    let mut perturbed = x_d.clone();
    for v in perturbed[4 * 3..].iter_mut() {
        *v += 10.0;
    }
    let run = |xd: &[f64]| -> Vec<f64> {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(vec![6, 3], xd.to_vec()));
        let wih = g.constant(Tensor::new(vec![3, 20], wih_d.clone()));
        let whh = g.constant(Tensor::new(vec![5, 20], whh_d.clone()));
        let b = g.constant(Tensor::new(vec![20], b_d.clone()));
        let y = g.lstm_seq(x, wih, whh, b);
        g.value(y).data().to_vec()
    };
    let base = run(&x_d);
    let pert = run(&perturbed);
    // positions 0..4 identical, position 4+ may differ
    assert_eq!(&base[..4 * 5], &pert[..4 * 5]);
    assert_ne!(&base[4 * 5..], &pert[4 * 5..]);
}

#[test]
fn embed_one_hot_selects_rows_uniform_averages_them() {
    let mut g = Graph::<f64>::new();
    let w_data: Vec<f64> = (0..12).map(|i| i as f64).collect(); // 3 symbols, d=4
    let w = g.leaf(Tensor::new(vec![3, 4], w_data));
    // column 0 = one-hot symbol 1, column 1 = uniform
    let y = g.leaf(Tensor::new(
        vec![3, 2],
        vec![0.0, 1.0 / 3.0, 1.0, 1.0 / 3.0, 0.0, 1.0 / 3.0],
    ));
    let e = g.embed(y, w);
    assert_eq!(g.shape(e), &[2, 4]);
    assert_eq!(&g.value(e).data()[..4], &[4.0, 5.0, 6.0, 7.0]);
    let mean_row = [4.0, 5.0, 6.0, 7.0]; // mean of rows 0,1,2
    for (a, b) in g.value(e).data()[4..].iter().zip(mean_row) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn backward_of_sum_gives_ones_and_accumulates() {
    let mut store = ParamStore::<f64>::new();
    let p = store.add("p", Tensor::new(vec![3], vec![0.5, -1.0, 2.0]));
    let mut g = Graph::<f64>::new();
    let pv = g.param(&store, p);
    let loss = g.sum_all(pv);
    g.backward(loss, &mut store);
    assert_eq!(store.grad(p), &[1.0, 1.0, 1.0]);
    // two consecutive backward calls double the accumulated grad
    g.backward(loss, &mut store);
    assert_eq!(store.grad(p), &[2.0, 2.0, 2.0]);
}

#[test]
fn backward_of_half_sum_squares_gives_param() {
    let mut store = ParamStore::<f64>::new();
    let p = store.add("p", Tensor::new(vec![4], vec![0.5, -1.0, 2.0, 3.5]));
    let mut g = Graph::<f64>::new();
    let pv = g.param(&store, p);
    let sq = g.square(pv);
    let s = g.sum_all(sq);
    let loss = g.mul_scalar(s, 0.5);
    g.backward(loss, &mut store);
    assert_eq!(store.grad(p), store.value(p).data());
}

#[test]
#[should_panic(expected = "scalar loss")]
fn backward_rejects_non_scalar() {
    let mut store = ParamStore::<f64>::new();
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::zeros(vec![2, 2]));
    g.backward(x, &mut store);
}

#[test]
fn forward_is_deterministic() {
    let run = || {
        let mut g = Graph::<f32>::new();
        let x = g.leaf(Tensor::from_f64_slice(
            vec![1, 4, 4, 2],
            &(0..32).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>(),
        ));
        let w = g.constant(Tensor::from_f64_slice(
            vec![3, 3, 2, 4],
            &(0..72).map(|i| (i as f64 * 0.11).cos()).collect::<Vec<_>>(),
        ));
        let c = g.conv2d(x, w, 1, PadMode::SameZero);
        let a = g.leaky_relu(c, 0.2);
        let p = g.pool(a, PoolKind::Max2x2);
        g.value(p).data().to_vec()
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // softmax outputs always lie on the simplex within 1e-6
    #[test]
    fn softmax_stays_on_simplex(vals in proptest::collection::vec(-50.0f64..50.0, 24)) {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(vec![6, 4], vals));
        let y = g.softmax(x, 0);
        let d = g.value(y).data();
        for col in 0..4 {
            let sum: f64 = (0..6).map(|r| d[r * 4 + col]).sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            prop_assert!((0..6).all(|r| d[r * 4 + col] >= 0.0));
        }
    }

    // uniform gradient of avg pooling: every input contributes 1/h
    #[test]
    fn avg_height_grad_uniform(vals in proptest::collection::vec(-5.0f64..5.0, 12)) {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::new(vec![3, 2, 2], vals));
        let y = g.pool(x, PoolKind::AvgOverHeight);
        let s = g.sum_all(y);
        let mut store = ParamStore::new();
        g.backward(s, &mut store);
        let gx = g.grad_of(x).unwrap();
        prop_assert!(gx.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-12));
    }
}
