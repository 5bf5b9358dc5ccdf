use adaptive_lrf::harness::{make_noisy_surface_dataset, split_dataset};
use adaptive_lrf::net::{Activation, LayerSpec, LossKind};
use adaptive_lrf::trainer::{fit, OptimConfig, TrainConfig};
use adaptive_lrf::Network;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let lr: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.02);
    let hidden: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(64);
    let batch: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(32);
    let act = match std::env::args().nth(4).as_deref() {
        Some("tanh") => Activation::Tanh,
        _ => Activation::Relu,
    };
    let epochs: usize = std::env::args().nth(5).and_then(|s| s.parse().ok()).unwrap_or(100);

    let ds = make_noisy_surface_dataset(600, 0.3, 1);
    let splits = split_dataset(&ds, 0.6, 0.2, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut net = Network::new(
        vec![2],
        vec![
            LayerSpec::dense(2, hidden, act),
            LayerSpec::dense(hidden, hidden / 2, act),
            LayerSpec::dense(hidden / 2, 2, Activation::Softmax),
        ],
        LossKind::CrossEntropy,
        &mut rng,
    )
    .unwrap();
    let mut cfg = TrainConfig::new(epochs, 1);
    cfg.optim = OptimConfig { learning_rate: lr, batch_size: batch, ..OptimConfig::default() };
    let hist = fit(&mut net, &splits, &cfg).unwrap();
    for r in hist.records.iter().step_by(10).chain(hist.records.last()) {
        println!(
            "epoch {:3}  train_loss {:.4} train_acc {:.3}  val_loss {:.4}  v {:.3}  sncn {:.3}  kappa {:?}",
            r.epoch, r.train.loss, r.train.accuracy, r.val.loss, r.v, r.sncn,
            hist.conditions[r.epoch - 1].kappa.iter().map(|k| (k * 10.0).round() / 10.0).collect::<Vec<_>>()
        );
    }
}
