use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::net::{save_checkpoint, Network};
use crate::trainer::{evaluate, fit, EpochRecord, RunHistory, TrainConfig, TrainError};

use super::config::{DatasetSpec, RegularizerSpec, RunConfig};
use super::dataset::{load_csv, make_noisy_surface_dataset, split_dataset, DataSplits};
use super::HarnessError;

/// File names produced for one run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub history_csv: PathBuf,
    pub actions_jsonl: PathBuf,
    pub conditions_jsonl: PathBuf,
    pub checkpoint: PathBuf,
}

/// One cell of the run matrix. A failed run keeps its error message here
/// while the rest of the matrix proceeds.
#[derive(Debug)]
pub struct RunOutcome {
    pub label: String,
    pub seed: u64,
    pub result: Result<RunSuccess, String>,
}

#[derive(Debug)]
pub struct RunSuccess {
    pub history: RunHistory,
    /// Metrics backing the summary row: the last epoch record, or a fresh
    /// evaluation of the untrained network for zero-epoch runs.
    pub final_record: EpochRecord,
    pub artifacts: RunArtifacts,
}

/// Per-regularizer aggregate over seeds (successful runs only).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub runs: usize,
    pub train_acc: (f64, f64),
    pub train_loss: (f64, f64),
    pub train_f: (f64, f64),
    pub test_acc: (f64, f64),
    pub test_loss: (f64, f64),
    pub test_f: (f64, f64),
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub outcomes: Vec<RunOutcome>,
    pub summary: Vec<SummaryRow>,
    pub summary_path: PathBuf,
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn build_dataset(spec: &DatasetSpec, seed: u64) -> Result<super::Dataset, HarnessError> {
    match spec {
        DatasetSpec::SyntheticNoisySurface { n, noise, data_seed } => {
            Ok(make_noisy_surface_dataset(*n, *noise, data_seed.unwrap_or(seed)))
        }
        DatasetSpec::Csv {
            path,
            label_column,
            normalize,
        } => load_csv(Path::new(path), label_column, *normalize),
    }
}

/// Build the run's network from the config, baking the plan's dropout
/// probability into every trainable layer except the output layer.
pub(crate) fn build_network(
    config: &RunConfig,
    reg: &RegularizerSpec,
    seed: u64,
) -> Result<Network, HarnessError> {
    let plan = reg
        .regularizer
        .plan()
        .map_err(|e| HarnessError::Config {
            path: "regularizers".into(),
            msg: e,
        })?;
    let mut specs = config.network.layers.clone();
    if plan.dropout_p > 0.0 {
        let last_trainable = specs.iter().rposition(|s| s.is_trainable());
        for (i, spec) in specs.iter_mut().enumerate() {
            if spec.is_trainable() && Some(i) != last_trainable {
                spec.dropout_p = plan.dropout_p;
            }
        }
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Network::new(
        config.network.input_shape.clone(),
        specs,
        config.network.loss,
        &mut init_rng,
    )?)
}

fn float(v: f64) -> String {
    // Shortest round-trip formatting; deterministic for equal bit patterns.
    format!("{v}")
}

pub(crate) fn history_csv(history: &RunHistory) -> String {
    let mut out =
        String::from("epoch,train_loss,train_acc,val_loss,val_acc,test_loss,test_acc,v,sncn,triggered\n");
    for r in &history.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            float(r.train.loss),
            float(r.train.accuracy),
            float(r.val.loss),
            float(r.val.accuracy),
            float(r.test.loss),
            float(r.test.accuracy),
            float(r.v),
            float(r.sncn),
            r.triggered
        );
    }
    out
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> Result<String, HarnessError> {
    let mut out = String::new();
    for item in items {
        let line = serde_json::to_string(item)
            .map_err(|e| HarnessError::Io(format!("jsonl serialize: {e}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

/// Run one (regularizer, seed) cell and write its artifacts.
fn execute_run(
    config: &RunConfig,
    reg: &RegularizerSpec,
    seed: u64,
    out_dir: &Path,
) -> Result<RunSuccess, HarnessError> {
    let dataset = build_dataset(&config.dataset, seed)?;
    let splits: DataSplits = split_dataset(&dataset, config.split.train, config.split.val, seed);
    let mut net = build_network(config, reg, seed)?;

    let train_cfg = TrainConfig {
        epochs: config.epochs,
        optim: config.optimizer,
        regularizer: reg.regularizer.clone(),
        seed,
        probe_size: config.probe_size,
        early_stop_patience: config.early_stop_patience,
    };
    let history = fit(&mut net, &splits, &train_cfg)?;

    let final_record = match history.records.last() {
        Some(r) => r.clone(),
        None => {
            // Zero-epoch run: summarize the untrained network.
            let train = evaluate(&net, &splits.train)?;
            let val = evaluate(&net, &splits.val)?;
            let test = evaluate(&net, &splits.test)?;
            EpochRecord {
                epoch: 0,
                train,
                val,
                test,
                v: crate::adaptlrf::error_ratio(train.loss, val.loss),
                sncn: f64::NAN,
                triggered: false,
            }
        }
    };

    let stem = format!("{}_seed{}", sanitize(&reg.label()), seed);
    let artifacts = RunArtifacts {
        history_csv: out_dir.join(format!("{stem}_history.csv")),
        actions_jsonl: out_dir.join(format!("{stem}_actions.jsonl")),
        conditions_jsonl: out_dir.join(format!("{stem}_conditions.jsonl")),
        checkpoint: out_dir.join(format!("{stem}_checkpoint.json")),
    };
    write(&artifacts.history_csv, &history_csv(&history))?;
    write(&artifacts.actions_jsonl, &jsonl(&history.actions)?)?;
    write(&artifacts.conditions_jsonl, &jsonl(&history.conditions)?)?;
    save_checkpoint(&net, &artifacts.checkpoint)?;

    Ok(RunSuccess {
        history,
        final_record,
        artifacts,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

fn summarize(label: &str, records: &[&EpochRecord]) -> SummaryRow {
    let pick = |f: fn(&EpochRecord) -> f64| -> (f64, f64) {
        mean_std(&records.iter().map(|r| f(r)).collect::<Vec<_>>())
    };
    SummaryRow {
        label: label.to_string(),
        runs: records.len(),
        train_acc: pick(|r| r.train.accuracy),
        train_loss: pick(|r| r.train.loss),
        train_f: pick(|r| r.train.f_measure),
        test_acc: pick(|r| r.test.accuracy),
        test_loss: pick(|r| r.test.loss),
        test_f: pick(|r| r.test.f_measure),
    }
}

pub(crate) fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "regularizer,runs,train_acc_mean,train_acc_std,train_loss_mean,train_loss_std,\
         train_f_mean,train_f_std,test_acc_mean,test_acc_std,test_loss_mean,test_loss_std,\
         test_f_mean,test_f_std\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.label,
            r.runs,
            float(r.train_acc.0),
            float(r.train_acc.1),
            float(r.train_loss.0),
            float(r.train_loss.1),
            float(r.train_f.0),
            float(r.train_f.1),
            float(r.test_acc.0),
            float(r.test_acc.1),
            float(r.test_loss.0),
            float(r.test_loss.1),
            float(r.test_f.0),
            float(r.test_f.1),
        );
    }
    out
}

/// Execute the full `regularizers x seeds` matrix and write all artifacts.
///
/// Runs are independent (each derives every RNG stream from its own seed)
/// and execute in parallel; outputs are written per run plus one summary
/// CSV, all byte-reproducible from the same config.
pub fn run_experiment(config: &RunConfig, out_dir: &Path) -> Result<ExperimentOutput, HarnessError> {
    config.validate()?;
    fs::create_dir_all(out_dir)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", out_dir.display())))?;

    let cells: Vec<(usize, u64)> = (0..config.regularizers.len())
        .flat_map(|r| config.seeds.iter().map(move |&s| (r, s)))
        .collect();

    let outcomes: Vec<RunOutcome> = cells
        .par_iter()
        .map(|&(reg_idx, seed)| {
            let reg = &config.regularizers[reg_idx];
            let result = execute_run(config, reg, seed, out_dir)
                .map_err(|e| e.to_string());
            RunOutcome {
                label: reg.label(),
                seed,
                result,
            }
        })
        .collect();

    let mut summary = Vec::new();
    for reg in &config.regularizers {
        let label = reg.label();
        let records: Vec<&EpochRecord> = outcomes
            .iter()
            .filter(|o| o.label == label)
            .filter_map(|o| o.result.as_ref().ok())
            .map(|s| &s.final_record)
            .collect();
        if !records.is_empty() {
            summary.push(summarize(&label, &records));
        }
    }
    let summary_path = out_dir.join("summary.csv");
    write(&summary_path, &summary_csv(&summary))?;

    Ok(ExperimentOutput {
        outcomes,
        summary,
        summary_path,
    })
}
