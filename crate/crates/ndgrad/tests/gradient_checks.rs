//! Central finite-difference checks for every differentiable op, at f64.
//!
//! The oracle (`ndgrad::fdcheck`) only ever runs forward passes, so it is
//! independent of the recorded backward implementations it verifies. Losses
//! are random weighted sums of the op output to exercise every output
//! element with distinct sensitivities.

use ndgrad::fdcheck::{central_diff, rel_error};
use ndgrad::{Graph, PadMode, PoolKind, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

const SEEDS: u64 = 20;

fn sample(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Uniform values bounded away from zero (for kinked activations).
fn sample_off_zero(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(-1.0..1.0);
            v.signum() * (0.05 + v.abs())
        })
        .collect()
}

/// Check d(loss)/d(inputs[check]) for `loss = sum(w . op(inputs))`.
///
/// `build` assembles the op under test from leaf vars (one per input shape).
fn check<F>(name: &str, seed: u64, shapes: &[&[usize]], check: &[usize], tol: f64, build: F)
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    check_with(name, seed, shapes, check, tol, sample, build)
}

fn check_with<F, S>(
    name: &str,
    seed: u64,
    shapes: &[&[usize]],
    check: &[usize],
    tol: f64,
    sampler: S,
    build: F,
) where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
    S: Fn(&mut ChaCha12Rng, usize) -> Vec<f64>,
{
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let inputs: Vec<Vec<f64>> = shapes
        .iter()
        .map(|s| sampler(&mut rng, s.iter().product()))
        .collect();

    // forward pass returning the scalar loss, with input `which` replaced
    let run = |which: usize, replacement: &[f64], weights: &mut Option<Vec<f64>>| -> f64 {
        let mut g = Graph::<f64>::new();
        let vars: Vec<Var> = inputs
            .iter()
            .enumerate()
            .map(|(i, data)| {
                let data = if i == which { replacement } else { data.as_slice() };
                g.leaf(Tensor::new(shapes[i].to_vec(), data.to_vec()))
            })
            .collect();
        let y = build(&mut g, &vars);
        let w = weights
            .get_or_insert_with(|| {
                let mut wrng = ChaCha12Rng::seed_from_u64(seed ^ 0x5eed);
                sample(&mut wrng, g.value(y).numel())
            })
            .clone();
        let wv = g.constant(Tensor::new(g.shape(y).to_vec(), w));
        let prod = g.mul(y, wv);
        let loss = g.sum_all(prod);
        g.value(loss).item()
    };

    let mut weights: Option<Vec<f64>> = None;
    // analytic gradients
    let mut graph = Graph::<f64>::new();
    let vars: Vec<Var> = inputs
        .iter()
        .enumerate()
        .map(|(i, data)| graph.leaf(Tensor::new(shapes[i].to_vec(), data.clone())))
        .collect();
    let y = build(&mut graph, &vars);
    run(usize::MAX, &[], &mut weights); // freeze loss weights for this case
    let wv = graph.constant(Tensor::new(
        graph.shape(y).to_vec(),
        weights.clone().unwrap(),
    ));
    let prod = graph.mul(y, wv);
    let loss = graph.sum_all(prod);
    let mut store = ndgrad::ParamStore::new();
    graph.backward(loss, &mut store);

    for &which in check {
        let analytic = graph
            .grad_of(vars[which])
            .unwrap_or_else(|| panic!("{name}: no gradient for input {which}"))
            .to_vec();
        let numeric = central_diff(
            |x| run(which, x, &mut weights),
            &inputs[which],
            1e-5,
        );
        let err = rel_error(&analytic, &numeric);
        assert!(
            err < tol,
            "{name} seed {seed} input {which}: rel error {err:.3e} >= {tol:.0e}"
        );
    }
}

#[test]
fn conv2d_same_gradients() {
    for seed in 0..SEEDS {
        check(
            "conv2d-same",
            seed,
            &[&[8, 8, 2], &[3, 3, 2, 4]],
            &[0, 1],
            1e-5,
            |g, v| g.conv2d(v[0], v[1], 1, PadMode::SameZero),
        );
    }
}

#[test]
fn conv2d_valid_and_strided_gradients() {
    for seed in 0..SEEDS {
        check(
            "conv2d-valid",
            seed,
            &[&[7, 9, 2], &[3, 3, 2, 3]],
            &[0, 1],
            1e-5,
            |g, v| g.conv2d(v[0], v[1], 1, PadMode::Valid),
        );
        check(
            "conv2d-stride2",
            seed,
            &[&[2, 8, 6, 2], &[3, 3, 2, 3]],
            &[0, 1],
            1e-5,
            |g, v| g.conv2d(v[0], v[1], 2, PadMode::SameZero),
        );
    }
}

#[test]
fn conv1d_gradients() {
    for seed in 0..SEEDS {
        check(
            "conv1d",
            seed,
            &[&[2, 9, 3], &[5, 3, 4]],
            &[0, 1],
            1e-5,
            |g, v| g.conv1d(v[0], v[1]),
        );
    }
}

#[test]
fn max_pool_gradients_route_to_argmax() {
    for seed in 0..SEEDS {
        check(
            "max2x2",
            seed,
            &[&[2, 4, 6, 3]],
            &[0],
            1e-4,
            |g, v| g.pool(v[0], PoolKind::Max2x2),
        );
    }
}

#[test]
fn max_pool_grad_is_one_at_argmax_zero_elsewhere() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::new(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]));
    let y = g.pool(x, PoolKind::Max2x2);
    assert_eq!(g.value(y).data(), &[4.0]);
    let loss = g.sum_all(y);
    let mut store = ndgrad::ParamStore::new();
    g.backward(loss, &mut store);
    assert_eq!(g.grad_of(x).unwrap(), &[0.0, 0.0, 0.0, 1.0]);
    // and the finite-difference oracle agrees entry by entry
    let base = [1.0, 2.0, 3.0, 4.0];
    let fd = central_diff(
        |v| {
            let mut g = Graph::<f64>::new();
            let x = g.leaf(Tensor::new(vec![2, 2, 1], v.to_vec()));
            let y = g.pool(x, PoolKind::Max2x2);
            g.value(y).item()
        },
        &base,
        1e-5,
    );
    assert!(rel_error(g.grad_of(x).unwrap(), &fd) < 1e-9);
}

#[test]
fn avg_pool_gradients() {
    for seed in 0..SEEDS {
        check(
            "avg-over-height",
            seed,
            &[&[2, 4, 5, 3]],
            &[0],
            1e-6,
            |g, v| g.pool(v[0], PoolKind::AvgOverHeight),
        );
        check(
            "avg-over-length",
            seed,
            &[&[2, 6, 3]],
            &[0],
            1e-6,
            |g, v| g.pool(v[0], PoolKind::AvgOverLength),
        );
    }
}

#[test]
fn batch_norm_train_gradients() {
    for seed in 0..SEEDS {
        check(
            "batch-norm-train",
            seed,
            &[&[4, 3, 2, 3], &[3], &[3]],
            &[0, 1, 2],
            1e-4,
            |g, v| {
                let mut rm = Tensor::zeros(vec![3]);
                let mut rv = Tensor::full(vec![3], 1.0);
                g.batch_norm(v[0], v[1], v[2], &mut rm, &mut rv, 0.99, true)
            },
        );
    }
}

#[test]
fn batch_norm_eval_gradients() {
    for seed in 0..SEEDS {
        // fixed running stats, deterministic per seed
        let mut srng = ChaCha12Rng::seed_from_u64(seed.wrapping_mul(77).wrapping_add(5));
        let rm_data = sample(&mut srng, 3);
        let rv_data: Vec<f64> = (0..3).map(|_| srng.random_range(0.2..2.0)).collect();
        check(
            "batch-norm-eval",
            seed,
            &[&[4, 3, 2, 3], &[3], &[3]],
            &[0, 1, 2],
            1e-5,
            |g, v| {
                let mut rm = Tensor::new(vec![3], rm_data.clone());
                let mut rv = Tensor::new(vec![3], rv_data.clone());
                g.batch_norm(v[0], v[1], v[2], &mut rm, &mut rv, 0.99, false)
            },
        );
    }
}

#[test]
fn layer_norm_gradients() {
    for seed in 0..SEEDS {
        check(
            "layer-norm",
            seed,
            &[&[3, 4, 5], &[5], &[5]],
            &[0, 1, 2],
            1e-4,
            |g, v| g.layer_norm(v[0], v[1], v[2]),
        );
    }
}

#[test]
fn leaky_relu_gradients() {
    for seed in 0..SEEDS {
        check_with(
            "leaky-relu",
            seed,
            &[&[4, 7]],
            &[0],
            1e-6,
            sample_off_zero,
            |g, v| g.leaky_relu(v[0], 0.2),
        );
    }
}

#[test]
fn softmax_gradients() {
    for seed in 0..SEEDS {
        check("softmax-axis1", seed, &[&[2, 5, 3]], &[0], 1e-6, |g, v| {
            g.softmax(v[0], 1)
        });
        check("softmax-last", seed, &[&[4, 6]], &[0], 1e-6, |g, v| {
            g.softmax(v[0], 1)
        });
    }
}

#[test]
fn linear_gradients() {
    for seed in 0..SEEDS {
        check(
            "linear",
            seed,
            &[&[3, 4, 5], &[5, 6], &[6]],
            &[0, 1, 2],
            1e-6,
            |g, v| g.linear(v[0], v[1], v[2]),
        );
    }
}

#[test]
fn lstm_gradients() {
    for seed in 0..SEEDS {
        // length-4 sequence, Din=3, hidden=5 (batch of 2)
        check(
            "lstm",
            seed,
            &[&[2, 4, 3], &[3, 20], &[5, 20], &[20]],
            &[0, 1, 2, 3],
            1e-4,
            |g, v| g.lstm_seq(v[0], v[1], v[2], v[3]),
        );
    }
}

#[test]
fn embed_gradients() {
    for seed in 0..SEEDS {
        check(
            "embed",
            seed,
            &[&[2, 6, 4], &[6, 5]],
            &[0, 1],
            1e-6,
            |g, v| g.embed(v[0], v[1]),
        );
    }
}

#[test]
fn shape_and_elementwise_gradients() {
    for seed in 0..SEEDS {
        check("permute-last2", seed, &[&[2, 3, 4]], &[0], 1e-6, |g, v| {
            g.permute_last2(v[0])
        });
        check("reshape", seed, &[&[2, 6]], &[0], 1e-6, |g, v| {
            g.reshape(v[0], vec![3, 4])
        });
        check("add", seed, &[&[3, 4], &[3, 4]], &[0, 1], 1e-6, |g, v| {
            g.add(v[0], v[1])
        });
        check("mul", seed, &[&[3, 4], &[3, 4]], &[0, 1], 1e-6, |g, v| {
            g.mul(v[0], v[1])
        });
        check("sub-scalar", seed, &[&[5]], &[0], 1e-6, |g, v| {
            g.sub_scalar(v[0], 1.0)
        });
        check("mul-scalar", seed, &[&[5]], &[0], 1e-6, |g, v| {
            g.mul_scalar(v[0], 0.5)
        });
        check("square", seed, &[&[5]], &[0], 1e-6, |g, v| g.square(v[0]));
        check("mean-all", seed, &[&[3, 4]], &[0], 1e-6, |g, v| {
            g.mean_all(v[0])
        });
        check("sum-all", seed, &[&[7]], &[0], 1e-6, |g, v| g.sum_all(v[0]));
    }
}

#[test]
fn cross_entropy_gradients() {
    for seed in 0..SEEDS {
        let mut lrng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(991));
        let labels: Vec<usize> = (0..2 * 3).map(|_| lrng.random_range(0..5)).collect();
        let labels2 = labels.clone();
        check(
            "cross-entropy",
            seed,
            &[&[2, 5, 3]],
            &[0],
            1e-6,
            move |g, v| g.cross_entropy(v[0], labels2.clone()),
        );
        drop(labels);
    }
}

#[test]
fn composed_block_gradient() {
    // conv -> leaky -> pool -> linear chain, checking end-to-end backprop
    for seed in 0..SEEDS / 2 {
        check(
            "composed",
            seed,
            &[&[1, 4, 8, 2], &[3, 3, 2, 4], &[4, 3], &[3]],
            &[0, 1, 2, 3],
            1e-5,
            |g, v| {
                let c = g.conv2d(v[0], v[1], 1, PadMode::SameZero);
                let a = g.leaky_relu(c, 0.2);
                let p = g.pool(a, PoolKind::Max2x2);
                let h = g.pool(p, PoolKind::AvgOverHeight);
                g.linear(h, v[2], v[3])
            },
        );
    }
}
