use adaptive_lrf::adaptlrf::{SimplifyMode, Strategy};
use adaptive_lrf::harness::{
    run_experiment, DatasetSpec, NetworkConfig, RegularizerSpec, RunConfig, SplitSpec,
};
use adaptive_lrf::net::{Activation, LayerSpec, LossKind};
use adaptive_lrf::trainer::{OptimConfig, Regularizer};

fn main() {
    let lr: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.02);
    let tau: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1.4);
    let hidden: usize = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(32);

    let adaptive = |strategy: Strategy, label: &str| RegularizerSpec {
        label: Some(label.to_string()),
        regularizer: Regularizer::AdaptiveLrf {
            tau,
            patience: 3,
            strategy,
            mode: SimplifyMode::Tensor,
            reset_moments: true,
        },
    };

    let cfg = RunConfig {
        version: 1,
        dataset: DatasetSpec::SyntheticNoisySurface {
            n: 600,
            noise: 0.3,
            data_seed: None,
        },
        split: SplitSpec { train: 0.6, val: 0.2, test: 0.2 },
        network: NetworkConfig {
            input_shape: vec![2],
            loss: LossKind::CrossEntropy,
            layers: vec![
                LayerSpec::dense(2, hidden, Activation::Tanh),
                LayerSpec::dense(hidden, hidden / 2, Activation::Tanh),
                LayerSpec::dense(hidden / 2, 2, Activation::Softmax),
            ],
        },
        optimizer: OptimConfig { learning_rate: lr, batch_size: std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(32), ..OptimConfig::default() },
        epochs: 100,
        seeds: vec![1, 2, 3, 4, 5],
        regularizers: vec![
            RegularizerSpec { label: None, regularizer: Regularizer::None },
            adaptive(Strategy::AdaptiveRandom, "adaptive_random"),
            adaptive(Strategy::FirstK { k: 1 }, "first_k1"),
            adaptive(Strategy::LastD { d: 1 }, "last_d1"),
            adaptive(Strategy::FirstK { k: 2 }, "first_k2"),
            adaptive(Strategy::LastD { d: 2 }, "last_d2"),
        ],
        probe_size: 64,
        early_stop_patience: None,
        allow_combined: false,
    };

    let dir = tempfile::tempdir().unwrap();
    let start = std::time::Instant::now();
    let out = run_experiment(&cfg, dir.path()).unwrap();
    println!("lr={lr} tau={tau} hidden={hidden}  elapsed={:?}", start.elapsed());

    for row in &out.summary {
        println!(
            "{:<18} runs={} test_loss={:.4}+-{:.4} test_acc={:.3} train_loss={:.4} train_acc={:.3}",
            row.label, row.runs, row.test_loss.0, row.test_loss.1, row.test_acc.0,
            row.train_loss.0, row.train_acc.0
        );
    }

    for label in ["adaptive_random", "first_k1", "last_d1", "first_k2", "last_d2"] {
        let mut sncns = Vec::new();
        let mut triggers = Vec::new();
        for o in &out.outcomes {
            if o.label == label {
                let s = o.result.as_ref().unwrap();
                sncns.push(s.history.records.last().unwrap().sncn);
                triggers.push(s.history.records.iter().filter(|r| r.triggered).count());
            }
        }
        println!(
            "{label:<18} final sncn per seed: {:?}  triggers: {:?}",
            sncns.iter().map(|s| (s * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            triggers
        );
    }
}
