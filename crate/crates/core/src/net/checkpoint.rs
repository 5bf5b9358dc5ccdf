use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Tensor;

use super::{LayerSpec, LossKind, NetError, Network, ParamSet};

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk network container: architecture plus, per layer index, the shape
/// and row-major float64 values of each parameter tensor. The format is
/// versioned and stable; see the README for the schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub input_shape: Vec<usize>,
    pub loss: LossKind,
    pub layers: Vec<LayerCheckpoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerCheckpoint {
    pub index: usize,
    pub spec: LayerSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<Tensor>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias: Option<Tensor>,
}

impl Checkpoint {
    pub fn from_network(net: &Network) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            input_shape: net.input_shape().to_vec(),
            loss: net.loss_kind(),
            layers: net
                .layers()
                .iter()
                .enumerate()
                .map(|(index, layer)| LayerCheckpoint {
                    index,
                    spec: layer.spec.clone(),
                    weight: layer.state.weight.clone(),
                    bias: layer.state.bias.clone(),
                })
                .collect(),
        }
    }

    pub fn into_network(self) -> Result<Network, NetError> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(NetError::Domain(format!(
                "unsupported checkpoint version {}",
                self.format_version
            )));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.index != i {
                return Err(NetError::Domain(format!(
                    "checkpoint layer indices out of order at position {i}"
                )));
            }
        }
        let specs: Vec<LayerSpec> = self.layers.iter().map(|l| l.spec.clone()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Network::new(self.input_shape, specs, self.loss, &mut rng)?;
        let params = ParamSet {
            layers: self.layers.into_iter().map(|l| (l.weight, l.bias)).collect(),
        };
        net.set_params(&params)?;
        Ok(net)
    }
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<(), NetError> {
    let ck = Checkpoint::from_network(net);
    let json = serde_json::to_string_pretty(&ck)
        .map_err(|e| NetError::Domain(format!("checkpoint serialize: {e}")))?;
    fs::write(path, json).map_err(|e| NetError::Domain(format!("checkpoint write: {e}")))
}

pub fn load_checkpoint(path: &Path) -> Result<Network, NetError> {
    let json =
        fs::read_to_string(path).map_err(|e| NetError::Domain(format!("checkpoint read: {e}")))?;
    let ck: Checkpoint = serde_json::from_str(&json)
        .map_err(|e| NetError::Domain(format!("checkpoint parse: {e}")))?;
    ck.into_network()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Activation;

    #[test]
    fn checkpoint_round_trip_preserves_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let net = Network::new(
            vec![3],
            vec![
                LayerSpec::dense(3, 4, Activation::Relu),
                LayerSpec::dense(4, 2, Activation::Softmax),
            ],
            LossKind::CrossEntropy,
            &mut rng,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        save_checkpoint(&net, &path).unwrap();
        let restored = load_checkpoint(&path).unwrap();
        assert_eq!(net.params(), restored.params());
        assert_eq!(net.input_shape(), restored.input_shape());
    }

    #[test]
    fn corrupted_tensor_shape_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::new(
            vec![2],
            vec![LayerSpec::dense(2, 2, Activation::None)],
            LossKind::Mse,
            &mut rng,
        )
        .unwrap();
        let mut ck = Checkpoint::from_network(&net);
        ck.layers[0].weight = Some(Tensor::matrix(3, 3, vec![0.0; 9]).unwrap());
        assert!(ck.into_network().is_err());
    }
}
