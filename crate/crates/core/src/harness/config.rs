use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::net::{LayerSpec, LossKind};
use crate::trainer::{OptimConfig, Regularizer};

use super::HarnessError;

pub const CONFIG_VERSION: u32 = 1;

/// Where a run's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    /// Interleaved-blob 2-D data with label-flip noise. The generator seed
    /// defaults to the run seed, so each seeded run draws fresh noise;
    /// pin `data_seed` to share one dataset across seeds.
    SyntheticNoisySurface {
        n: usize,
        noise: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        data_seed: Option<u64>,
    },
    Csv {
        path: String,
        label_column: String,
        #[serde(default = "default_normalize")]
        normalize: bool,
    },
}

fn default_normalize() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_shape: Vec<usize>,
    pub loss: LossKind,
    pub layers: Vec<LayerSpec>,
}

/// A run-matrix entry: one regularizer choice plus an optional label
/// override for file names and the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub regularizer: Regularizer,
}

impl RegularizerSpec {
    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| self.regularizer.default_label())
    }
}

/// Versioned experiment configuration: the full run matrix is
/// `regularizers x seeds`, every run derives all of its randomness from its
/// own seed, and artifacts regenerate bit-identically from the same file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub version: u32,
    pub dataset: DatasetSpec,
    pub split: SplitSpec,
    pub network: NetworkConfig,
    #[serde(default)]
    pub optimizer: OptimConfig,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub regularizers: Vec<RegularizerSpec>,
    #[serde(default = "default_probe_size")]
    pub probe_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop_patience: Option<usize>,
    /// Must be set for `combined` regularizer entries to pass validation.
    #[serde(default)]
    pub allow_combined: bool,
}

fn default_probe_size() -> usize {
    64
}

fn config_err(path: &str, msg: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        path: path.to_string(),
        msg: msg.into(),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| config_err("<root>", format!("json parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.version != CONFIG_VERSION {
            return Err(config_err(
                "version",
                format!("unsupported version {}, expected {CONFIG_VERSION}", self.version),
            ));
        }
        match &self.dataset {
            DatasetSpec::SyntheticNoisySurface { n, noise, .. } => {
                if *n < 10 {
                    return Err(config_err("dataset.n", "need at least 10 samples"));
                }
                if !(0.0..0.5).contains(noise) {
                    return Err(config_err("dataset.noise", "must lie in [0, 0.5)"));
                }
            }
            DatasetSpec::Csv { path, .. } => {
                if path.is_empty() {
                    return Err(config_err("dataset.path", "empty path"));
                }
            }
        }
        let sum = self.split.train + self.split.val + self.split.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(config_err("split", format!("fractions sum to {sum}, expected 1")));
        }
        for (name, f) in [
            ("split.train", self.split.train),
            ("split.val", self.split.val),
            ("split.test", self.split.test),
        ] {
            if !(0.0..=1.0).contains(&f) || f <= 0.0 {
                return Err(config_err(name, format!("fraction {f} outside (0, 1]")));
            }
        }
        if self.network.layers.is_empty() {
            return Err(config_err("network.layers", "no layers"));
        }
        let trainable = self
            .network
            .layers
            .iter()
            .filter(|l| l.is_trainable())
            .count();
        if trainable == 0 {
            return Err(config_err("network.layers", "no trainable layers"));
        }
        if self.seeds.is_empty() {
            return Err(config_err("seeds", "at least one seed required"));
        }
        if self.regularizers.is_empty() {
            return Err(config_err("regularizers", "at least one entry required"));
        }
        let mut labels = std::collections::BTreeSet::new();
        for (i, spec) in self.regularizers.iter().enumerate() {
            let path = format!("regularizers[{i}]");
            if matches!(spec.regularizer, Regularizer::Combined { .. }) && !self.allow_combined {
                return Err(config_err(
                    &path,
                    "combined regularizers require allow_combined = true",
                ));
            }
            let plan = spec
                .regularizer
                .plan()
                .map_err(|e| config_err(&path, e))?;
            if let Some(adaptive) = plan.adaptive {
                adaptive
                    .strategy
                    .validate(trainable)
                    .map_err(|e| config_err(&format!("{path}.strategy"), e))?;
            }
            if !labels.insert(spec.label()) {
                return Err(config_err(&path, format!("duplicate label '{}'", spec.label())));
            }
        }
        if self.probe_size == 0 {
            return Err(config_err("probe_size", "must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Activation;

    fn base_config() -> RunConfig {
        RunConfig {
            version: 1,
            dataset: DatasetSpec::SyntheticNoisySurface {
                n: 100,
                noise: 0.2,
                data_seed: None,
            },
            split: SplitSpec {
                train: 0.6,
                val: 0.2,
                test: 0.2,
            },
            network: NetworkConfig {
                input_shape: vec![2],
                loss: LossKind::CrossEntropy,
                layers: vec![
                    LayerSpec::dense(2, 8, Activation::Tanh),
                    LayerSpec::dense(8, 2, Activation::Softmax),
                ],
            },
            optimizer: OptimConfig::default(),
            epochs: 5,
            seeds: vec![1, 2],
            regularizers: vec![RegularizerSpec {
                label: None,
                regularizer: Regularizer::None,
            }],
            probe_size: 64,
            early_stop_patience: None,
            allow_combined: false,
        }
    }

    #[test]
    fn valid_config_round_trips_through_json() {
        let cfg = base_config();
        cfg.validate().unwrap();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn split_fractions_must_sum_to_one() {
        let mut cfg = base_config();
        cfg.split.test = 0.5;
        match cfg.validate() {
            Err(HarnessError::Config { path, .. }) => assert_eq!(path, "split"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn combined_requires_flag() {
        let mut cfg = base_config();
        cfg.regularizers.push(RegularizerSpec {
            label: None,
            regularizer: Regularizer::Combined {
                parts: vec![
                    Regularizer::Dropout { p: 0.1 },
                    Regularizer::WeightDecay { lambda: 1e-4 },
                ],
            },
        });
        assert!(matches!(cfg.validate(), Err(HarnessError::Config { .. })));
        cfg.allow_combined = true;
        cfg.validate().unwrap();
    }

    #[test]
    fn strategy_bounds_checked_against_network() {
        let mut cfg = base_config();
        cfg.regularizers.push(RegularizerSpec {
            label: None,
            regularizer: Regularizer::AdaptiveLrf {
                tau: 1.4,
                patience: 3,
                strategy: crate::adaptlrf::Strategy::FirstK { k: 5 },
                mode: Default::default(),
                reset_moments: true,
            },
        });
        match cfg.validate() {
            Err(HarnessError::Config { path, .. }) => {
                assert_eq!(path, "regularizers[1].strategy");
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_labels_are_rejected() {
        let mut cfg = base_config();
        cfg.regularizers.push(RegularizerSpec {
            label: Some("none".into()),
            regularizer: Regularizer::Dropout { p: 0.1 },
        });
        assert!(matches!(cfg.validate(), Err(HarnessError::Config { .. })));
    }
}
