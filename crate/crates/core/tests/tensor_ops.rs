use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use tsception::gradcheck::{check_function, TOLERANCE};
use tsception::tensor::{softmax_rows, Graph, Mode, RunningStats, Tensor};
use tsception::SeededRng;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

#[test]
fn conv2d_hand_example() {
    let mut g = Graph::new();
    let x = g.input(t(&[1, 1, 1, 3], &[1.0, 2.0, 3.0]));
    let w = g.input(t(&[1, 1, 1, 2], &[1.0, 1.0]));
    let b = g.input(t(&[1], &[0.0]));
    let y = g.conv2d(x, w, b, (1, 1)).unwrap();
    assert_eq!(g.shape(y), &[1, 1, 1, 2]);
    assert_eq!(g.value(y).data(), &[3.0, 5.0]);
}

#[test]
fn conv2d_delta_kernel_is_identity() {
    let mut rng = SeededRng::seed_from_u64(0);
    let data: Vec<f64> = (0..2 * 4 * 9).map(|_| rng.random()).collect();
    let mut g = Graph::new();
    let x = g.input(t(&[2, 1, 4, 9], &data));
    let w = g.input(t(&[1, 1, 1, 1], &[1.0]));
    let b = g.input(t(&[1], &[0.0]));
    let y = g.conv2d(x, w, b, (1, 1)).unwrap();
    assert_eq!(g.value(y).data(), &data[..]);
}

#[test]
fn conv2d_channel_mismatch_reports_both_shapes() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::zeros(&[1, 2, 3, 3]));
    let w = g.input(Tensor::zeros(&[1, 3, 1, 1]));
    let b = g.input(Tensor::zeros(&[1]));
    let err = g.conv2d(x, w, b, (1, 1)).unwrap_err().to_string();
    assert!(
        err.contains("[1, 2, 3, 3]") && err.contains("[1, 3, 1, 1]"),
        "{err}"
    );
}

#[test]
fn conv2d_gradients_match_finite_differences_over_seeds() {
    for seed in 0..10 {
        let mut rng = SeededRng::seed_from_u64(seed);
        let mut rand = |shape: &[usize]| Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0));
        let inputs = [
            rand(&[2, 3, 4, 8]),
            rand(&[2, 3, 2, 3]),
            rand(&[2]),
            rand(&[2, 2, 3, 6]),
        ];
        let (inputs, r) = (inputs[..3].to_vec(), inputs[3].clone());
        let rep = check_function("conv", &inputs, |g, v| {
            let y = g.conv2d(v[0], v[1], v[2], (1, 1))?;
            let r = g.input(r.clone());
            let p = g.mul(y, r)?;
            Ok(g.sum(p))
        })
        .unwrap();
        assert!(rep.max_rel_error < TOLERANCE, "seed {seed}: {rep:?}");
    }
}

#[test]
fn relu_examples() {
    let mut g = Graph::new();
    let x = g.input(t(&[3], &[-1.0, 0.0, 2.0]).with_grad());
    let y = g.relu(x);
    assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
    let s = g.sum(y);
    g.backward(s).unwrap();
    // gradient at exactly zero is defined as zero
    assert_eq!(g.grad(x).unwrap(), &[0.0, 0.0, 1.0]);

    let mut g = Graph::new();
    let x = g.input(t(&[4], &[-1.0, -2.0, -0.5, -3.0]).with_grad());
    let y = g.relu(x);
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    let s = g.sum(y);
    g.backward(s).unwrap();
    assert!(g.grad(x).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn avgpool_examples() {
    let mut g = Graph::new();
    let x = g.input(t(&[1, 1, 1, 4], &[1.0, 3.0, 5.0, 7.0]));
    let y = g.avg_pool2d(x, (1, 2)).unwrap();
    assert_eq!(g.value(y).data(), &[2.0, 6.0]);
    let id = g.avg_pool2d(x, (1, 1)).unwrap();
    assert_eq!(g.value(id).data(), g.value(x).data());

    let x = g.input(Tensor::zeros(&[1, 1, 1, 897]));
    let y = g.avg_pool2d(x, (1, 8)).unwrap();
    assert_eq!(g.shape(y), &[1, 1, 1, 112]);

    assert!(g.avg_pool2d(x, (1, 898)).is_err());
}

#[test]
fn batchnorm_train_standardizes() {
    let mut rng = SeededRng::seed_from_u64(5);
    let x = Tensor::from_fn(&[8, 3, 2, 10], |_| rng.random_range(-4.0..9.0));
    let mut g = Graph::new();
    let xv = g.input(x);
    let gamma = g.input(Tensor::full(&[3], 1.0));
    let beta = g.input(Tensor::zeros(&[3]));
    let mut stats = RunningStats::new(3);
    let y = g
        .batch_norm(xv, gamma, beta, &mut stats, Mode::Train)
        .unwrap();
    let (m, v) = channel_moments(g.value(y).data(), 8, 3, 20);
    for c in 0..3 {
        assert_abs_diff_eq!(m[c], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(v[c], 1.0, epsilon = 1e-4);
    }
    // running stats moved 10% of the way from (0, 1)
    assert!(stats.mean.iter().all(|&m| m != 0.0));

    let mut g = Graph::new();
    let xv = g.input(g_std(&mut rng));
    let gamma = g.input(Tensor::full(&[2], 2.0));
    let beta = g.input(Tensor::full(&[2], 3.0));
    let mut stats = RunningStats::new(2);
    let y = g
        .batch_norm(xv, gamma, beta, &mut stats, Mode::Train)
        .unwrap();
    let (m, v) = channel_moments(g.value(y).data(), 16, 2, 8);
    for c in 0..2 {
        assert_abs_diff_eq!(m[c], 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(v[c].sqrt(), 2.0, epsilon = 1e-4);
    }
}

fn g_std(rng: &mut SeededRng) -> Tensor<f64> {
    Tensor::from_fn(&[16, 2, 1, 8], |_| rng.random_range(-1.0..1.0))
}

fn channel_moments(d: &[f64], b: usize, c: usize, s: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let vals: Vec<f64> = (0..b)
            .flat_map(|bi| d[(bi * c + ch) * s..(bi * c + ch + 1) * s].iter().copied())
            .collect();
        let n = vals.len() as f64;
        mean[ch] = vals.iter().sum::<f64>() / n;
        var[ch] = vals.iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>() / n;
    }
    (mean, var)
}

#[test]
fn batchnorm_eval_uses_initial_stats_before_training() {
    let mut g = Graph::new();
    let x = g.input(t(&[1, 1, 1, 3], &[1.0, -2.0, 0.5]));
    let gamma = g.input(Tensor::full(&[1], 1.0));
    let beta = g.input(Tensor::zeros(&[1]));
    let mut stats = RunningStats::new(1);
    let y = g
        .batch_norm(x, gamma, beta, &mut stats, Mode::Eval)
        .unwrap();
    let s = 1.0 / (1.0f64 + 1e-5).sqrt();
    for (a, b) in g.value(y).data().iter().zip([1.0, -2.0, 0.5]) {
        assert_abs_diff_eq!(*a, b * s, epsilon = 1e-12);
    }
    assert_eq!(stats, RunningStats::new(1));
}

#[test]
fn batchnorm_train_needs_two_values() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::zeros(&[1, 1, 1, 1]));
    let gamma = g.input(Tensor::full(&[1], 1.0));
    let beta = g.input(Tensor::zeros(&[1]));
    let mut stats = RunningStats::new(1);
    assert!(g
        .batch_norm(x, gamma, beta, &mut stats, Mode::Train)
        .is_err());
}

#[test]
fn linear_identity_and_errors() {
    let mut g = Graph::new();
    let x = g.input(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let eye = g.input(Tensor::from_fn(
        &[3, 3],
        |i| if i % 4 == 0 { 1.0 } else { 0.0 },
    ));
    let b = g.input(Tensor::zeros(&[3]));
    let y = g.linear(x, eye, b).unwrap();
    assert_eq!(g.value(y).data(), g.value(x).data());

    let w = g.input(Tensor::zeros(&[4, 2]));
    let b = g.input(Tensor::zeros(&[2]));
    let err = g.linear(x, w, b).unwrap_err().to_string();
    assert!(err.contains("[2, 3]") && err.contains("[4, 2]"), "{err}");
}

#[test]
fn dropout_examples() {
    let mut rng = SeededRng::seed_from_u64(11);
    let mut g = Graph::new();
    let x = g.input(Tensor::from_fn(&[10], |i| i as f64));
    assert_eq!(g.dropout(x, 0.0, Mode::Train, &mut rng).unwrap(), x);
    assert_eq!(g.dropout(x, 0.9, Mode::Eval, &mut rng).unwrap(), x);
    assert!(g.dropout(x, 1.0, Mode::Train, &mut rng).is_err());

    let n = 1_000_000;
    let x = g.input(Tensor::full(&[n], 1.0f64));
    let y = g.dropout(x, 0.3, Mode::Train, &mut rng).unwrap();
    let d = g.value(y).data();
    let surviving = d.iter().filter(|&&v| v != 0.0).count() as f64 / n as f64;
    let mean = d.iter().sum::<f64>() / n as f64;
    assert!((surviving - 0.7).abs() < 0.01, "{surviving}");
    assert!((mean - 1.0).abs() < 0.01, "{mean}");
}

#[test]
fn cross_entropy_examples() {
    let mut g = Graph::new();
    let z = g.input(t(&[1, 2], &[0.0, 0.0]));
    let l = g.softmax_cross_entropy(z, &[0]).unwrap();
    assert_abs_diff_eq!(
        g.value(l).data()[0],
        std::f64::consts::LN_2,
        epsilon = 1e-12
    );

    let z = g.input(t(&[1, 2], &[1000.0, 0.0]));
    let l = g.softmax_cross_entropy(z, &[0]).unwrap();
    let v = g.value(l).data()[0];
    assert!(v.is_finite() && v.abs() < 1e-12);

    assert!(g.softmax_cross_entropy(z, &[2]).is_err());
}

#[test]
fn cross_entropy_gradient_is_softmax_minus_onehot() {
    let logits = [0.3, -1.2, 2.0, 0.5, 0.0, -0.7];
    let labels = [2, 0];
    let mut g = Graph::new();
    let z = g.input(t(&[2, 3], &logits).with_grad());
    let l = g.softmax_cross_entropy(z, &labels).unwrap();
    g.backward(l).unwrap();
    let p = softmax_rows(&logits, 3);
    let grad = g.grad(z).unwrap();
    for b in 0..2 {
        for k in 0..3 {
            let onehot = if labels[b] == k { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(
                grad[b * 3 + k],
                (p[b * 3 + k] - onehot) / 2.0,
                epsilon = 1e-12
            );
        }
    }
    let rep = check_function("ce", &[t(&[2, 3], &logits)], |g, v| {
        g.softmax_cross_entropy(v[0], &labels)
    })
    .unwrap();
    assert!(rep.passed(), "{rep:?}");
}

#[test]
fn l1_penalty_examples() {
    let mut g = Graph::new();
    let w = g.input(t(&[2], &[1.0, -2.0]));
    let l = g.l1_penalty(&[w], 0.1).unwrap();
    assert_abs_diff_eq!(g.value(l).data()[0], 0.3, epsilon = 1e-12);
    let l = g.l1_penalty(&[w], 0.0).unwrap();
    assert_eq!(g.value(l).data()[0], 0.0);

    let ones = g.input(Tensor::full(&[53_483], 1.0));
    let l = g.l1_penalty(&[ones], 1e-6).unwrap();
    assert_abs_diff_eq!(g.value(l).data()[0], 0.053483, epsilon = 1e-12);

    assert!(g.l1_penalty(&[w], -1.0).is_err());
}

#[test]
fn l1_subgradient_at_zero_is_zero() {
    let mut g = Graph::new();
    let w = g.input(t(&[3], &[0.0, 2.0, -1.0]).with_grad());
    let l = g.l1_penalty(&[w], 0.5).unwrap();
    g.backward(l).unwrap();
    assert_eq!(g.grad(w).unwrap(), &[0.0, 0.5, -0.5]);
}

#[test]
fn concat_examples() {
    let mut g = Graph::<f64>::new();
    let a = g.input(Tensor::zeros(&[2, 9, 4, 112]));
    let b = g.input(Tensor::zeros(&[2, 9, 4, 120]));
    let c = g.input(Tensor::zeros(&[2, 9, 4, 124]));
    let y = g.concat(&[a, b, c], 3).unwrap();
    assert_eq!(g.shape(y), &[2, 9, 4, 356]);
    assert_eq!(g.concat(&[a], 3).unwrap(), a);

    let s1 = g.input(Tensor::zeros(&[5, 6, 1, 22]));
    let s2 = g.input(Tensor::zeros(&[5, 6, 2, 22]));
    let y = g.concat(&[s1, s2], 2).unwrap();
    assert_eq!(g.shape(y), &[5, 6, 3, 22]);

    assert!(g.concat(&[a, s1], 3).is_err());
}

#[test]
fn concat_preserves_order_and_splits_gradient() {
    let mut g = Graph::new();
    let a = g.input(t(&[2, 1], &[1.0, 2.0]).with_grad());
    let b = g.input(t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]).with_grad());
    let y = g.concat(&[a, b], 1).unwrap();
    assert_eq!(g.value(y).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
    let w = g.input(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let p = g.mul(y, w).unwrap();
    let s = g.sum(p);
    g.backward(s).unwrap();
    assert_eq!(g.grad(a).unwrap(), &[1.0, 4.0]);
    assert_eq!(g.grad(b).unwrap(), &[2.0, 3.0, 5.0, 6.0]);
}

#[test]
fn backward_examples() {
    let mut g = Graph::new();
    let x = g.input(Tensor::from_fn(&[2, 3, 4], |i| i as f64 - 5.0).with_grad());
    let s = g.sum(x);
    g.backward(s).unwrap();
    assert!(g.grad(x).unwrap().iter().all(|&v| v == 1.0));

    let mut g = Graph::new();
    let data: Vec<f64> = (0..6).map(|i| i as f64 * 0.7 - 2.0).collect();
    let x = g.input(t(&[6], &data).with_grad());
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq);
    let half = g.scale(s, 0.5);
    g.backward(half).unwrap();
    assert_eq!(g.grad(x).unwrap(), &data[..]);

    assert!(g.backward(x).is_err());
}

#[test]
fn backward_twice_sums_and_zero_grad_resets() {
    let mut g = Graph::new();
    let x = g.input(t(&[3], &[1.0, 2.0, 3.0]).with_grad());
    let sq = g.mul(x, x).unwrap();
    let s = g.sum(sq);
    g.backward(s).unwrap();
    let first = g.grad(x).unwrap().to_vec();
    g.backward(s).unwrap();
    let twice: Vec<f64> = first.iter().map(|v| 2.0 * v).collect();
    assert_eq!(g.grad(x).unwrap(), &twice[..]);
    g.zero_grad();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &first[..]);
}

proptest! {
    #[test]
    fn conv_output_length_formula(w in 1usize..40, kw_frac in 0.0f64..1.0) {
        let kw = 1 + ((w - 1) as f64 * kw_frac) as usize;
        let mut g = Graph::<f32>::new();
        let x = g.input(Tensor::zeros(&[1, 1, 1, w]));
        let k = g.input(Tensor::zeros(&[1, 1, 1, kw]));
        let b = g.input(Tensor::zeros(&[1]));
        let y = g.conv2d(x, k, b, (1, 1)).unwrap();
        prop_assert_eq!(g.shape(y)[3], w - kw + 1);
    }

    #[test]
    fn avgpool_preserves_mean_when_window_divides(
        n in 1usize..12, p in 1usize..6, seed in 0u64..1000
    ) {
        let mut rng = SeededRng::seed_from_u64(seed);
        let len = n * p;
        let data: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut g = Graph::new();
        let x = g.input(t(&[1, 1, 1, len], &data));
        let y = g.avg_pool2d(x, (1, p)).unwrap();
        let before = data.iter().sum::<f64>() / len as f64;
        let after = g.value(y).data().iter().sum::<f64>() / n as f64;
        prop_assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_ce_nonnegative(
        logits in proptest::collection::vec(-50.0f64..50.0, 6), label in 0usize..3
    ) {
        let p = softmax_rows(&logits, 3);
        for row in p.chunks(3) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let mut g = Graph::new();
        let z = g.input(t(&[2, 3], &logits));
        let l = g.softmax_cross_entropy(z, &[label, (label + 1) % 3]).unwrap();
        prop_assert!(g.value(l).data()[0] >= 0.0);
    }
}
