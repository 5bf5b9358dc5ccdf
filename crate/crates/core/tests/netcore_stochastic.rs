//! Monte-Carlo checks of the dropout law and an independent scalar
//! re-computation of both losses.

mod common;

use adaptive_lrf::net::{loss_value, Activation, LayerSpec, LossKind, Network};
use adaptive_lrf::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn dropout_preserves_expected_preactivation() {
    // Inverted dropout: E[masked unit] = unmasked unit. Averaged over many
    // train-mode passes the masked pre-activation converges to the eval one.
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let mut net = Network::new(
        vec![4],
        vec![LayerSpec::dense(4, 8, Activation::None).with_dropout(0.3)],
        LossKind::Mse,
        &mut rng,
    )
    .unwrap();
    let x = Tensor::from_fn(&[1, 4], |i| 0.5 + i as f64).unwrap();
    let reference = net.forward_eval(&x).unwrap();

    let trials = 20_000;
    let mut sums = vec![0.0; 8];
    let mut drop_rng = ChaCha8Rng::seed_from_u64(401);
    for _ in 0..trials {
        let y = net.forward_train(&x, &mut drop_rng).unwrap();
        for (s, v) in sums.iter_mut().zip(y.data()) {
            *s += v;
        }
    }
    for (j, s) in sums.iter().enumerate() {
        let mean = s / trials as f64;
        let want = reference.data()[j];
        assert!(
            (mean - want).abs() <= 0.02 * want.abs().max(1.0),
            "unit {j}: mean {mean} vs eval {want}"
        );
    }
}

#[test]
fn losses_match_scalar_recomputation() {
    // Straightforward scalar re-implementations, kept deliberately naive.
    let mut rng = ChaCha8Rng::seed_from_u64(402);
    let b = 7;
    let k = 5;
    let pred_mse = Tensor::from_fn(&[b, k], |_| rng.gen::<f64>() * 2.0 - 1.0).unwrap();
    let target_mse = Tensor::from_fn(&[b, k], |_| rng.gen::<f64>() * 2.0 - 1.0).unwrap();
    let mut expect = 0.0;
    for i in 0..b {
        for j in 0..k {
            let d = pred_mse.at2(i, j) - target_mse.at2(i, j);
            expect += d * d;
        }
    }
    expect /= b as f64;
    let got = loss_value(&pred_mse, &target_mse, LossKind::Mse).unwrap();
    assert!((got - expect).abs() < 1e-12, "mse {got} vs {expect}");

    // Random rows through softmax so they are valid probabilities.
    let logits = Tensor::from_fn(&[b, k], |_| rng.gen::<f64>() * 4.0 - 2.0).unwrap();
    let pred_ce = Activation::Softmax.apply(&logits);
    let labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..k)).collect();
    let target_ce = adaptive_lrf::trainer::one_hot(&labels, k);
    let mut expect = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        expect -= pred_ce.at2(i, label).max(1e-12).ln();
    }
    expect /= b as f64;
    let got = loss_value(&pred_ce, &target_ce, LossKind::CrossEntropy).unwrap();
    assert!((got - expect).abs() < 1e-12, "ce {got} vs {expect}");
}

#[test]
fn train_mode_dropout_draws_do_not_disturb_eval() {
    let mut rng = ChaCha8Rng::seed_from_u64(403);
    let mut net = Network::new(
        vec![3],
        vec![
            LayerSpec::dense(3, 6, Activation::Tanh).with_dropout(0.5),
            LayerSpec::dense(6, 2, Activation::Softmax),
        ],
        LossKind::CrossEntropy,
        &mut rng,
    )
    .unwrap();
    let x = Tensor::from_fn(&[2, 3], |i| (i as f64).sin()).unwrap();
    let before = net.forward_eval(&x).unwrap();
    let mut drop_rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..10 {
        net.forward_train(&x, &mut drop_rng).unwrap();
    }
    let after = net.forward_eval(&x).unwrap();
    assert_eq!(before, after);
}
