//! Self-describing JSON checkpoint of a network.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::layers::{real, Real};
use super::model::{ModelParameters, Network};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "lasso-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    pub epoch: usize,
    pub seed: u64,
    pub corpus_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: NetworkConfig,
    pub tensors: BTreeMap<String, Tensor>,
    pub metadata: CheckpointMetadata,
}

impl Checkpoint {
    pub fn from_network<T: Real>(net: &Network<T>, metadata: CheckpointMetadata) -> Checkpoint {
        let mut tensors = BTreeMap::new();
        net.params.visit(|key, _, data, shape| {
            tensors.insert(
                key,
                Tensor {
                    shape: shape.to_vec(),
                    data: data.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
                },
            );
        });
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: net.config.clone(),
            tensors,
            metadata,
        }
    }

    /// Rebuild the network; every expected tensor must be present with the
    /// right shape and no extra tensors are allowed.
    pub fn to_network<T: Real>(&self) -> Result<Network<T>> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidConfig(format!(
                "unknown checkpoint format {:?}",
                self.format
            )));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion(self.version));
        }
        let mut params = ModelParameters::<T>::init(&self.config, 0)?;
        let mut problem = None;
        let mut seen = 0usize;
        params.visit_mut(|key, _, data, shape| match self.tensors.get(&key) {
            Some(t) if t.shape == shape && t.data.len() == data.len() => {
                for (d, &v) in data.iter_mut().zip(&t.data) {
                    *d = real(v);
                }
                seen += 1;
            }
            Some(t) => {
                problem.get_or_insert(format!("tensor {key} has shape {:?}, expected {shape:?}", t.shape));
            }
            None => {
                problem.get_or_insert(format!("missing tensor {key}"));
            }
        });
        if let Some(p) = problem {
            return Err(Error::ShapeMismatch(p));
        }
        if seen != self.tensors.len() {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint holds {} tensors, configuration expects {seen}",
                self.tensors.len()
            )));
        }
        if !params.all_finite() {
            return Err(Error::InvalidConfig("checkpoint contains non-finite values".into()));
        }
        Ok(Network {
            config: self.config.clone(),
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
