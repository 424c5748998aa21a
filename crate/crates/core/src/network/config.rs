use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of the hierarchical point-set network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Points per abstraction group (`size(g)`).
    pub group_size: usize,
    /// Hierarchy depth `k`.
    pub levels: usize,
    /// Shared-layer widths of each abstraction level, bottom-up.
    pub abstraction_widths: Vec<Vec<usize>>,
    /// Shared-layer widths of each propagation stage, top-down (the last
    /// entry produces the per-point features).
    pub propagation_widths: Vec<Vec<usize>>,
    /// Classifier widths; the final entry is the two-way output.
    pub classifier_widths: Vec<usize>,
    pub dropout_keep: f64,
    pub input_dim: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            group_size: 32,
            levels: 2,
            abstraction_widths: vec![vec![64, 64, 128], vec![128, 128, 256]],
            propagation_widths: vec![vec![256, 128], vec![128, 128, 64]],
            classifier_widths: vec![64, 2],
            dropout_keep: 0.7,
            input_dim: 4,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.group_size == 0 {
            return bad("group_size must be positive");
        }
        if self.levels == 0 {
            return bad("levels must be at least 1");
        }
        if self.abstraction_widths.len() != self.levels || self.propagation_widths.len() != self.levels {
            return bad("need one abstraction and one propagation width list per level");
        }
        let all = self
            .abstraction_widths
            .iter()
            .chain(&self.propagation_widths)
            .chain(std::iter::once(&self.classifier_widths));
        for widths in all {
            if widths.is_empty() || widths.contains(&0) {
                return bad("width lists must be non-empty and positive");
            }
        }
        if self.classifier_widths.last() != Some(&2) {
            return bad("classifier must end in width 2");
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return bad("dropout_keep must lie in (0, 1]");
        }
        if self.input_dim != 4 {
            return bad("input_dim must be 4 (x, y, z, w)");
        }
        Ok(())
    }

    /// Feature width at each abstraction level `0..=levels`.
    pub fn level_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        for w in &self.abstraction_widths {
            dims.push(*w.last().expect("validated"));
        }
        dims
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        NetworkConfig::default().validate().unwrap();
        assert_eq!(NetworkConfig::default().level_dims(), vec![4, 128, 256]);
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let bad = [
            NetworkConfig {
                classifier_widths: vec![64, 3],
                ..NetworkConfig::default()
            },
            NetworkConfig {
                levels: 3,
                ..NetworkConfig::default()
            },
            NetworkConfig {
                dropout_keep: 0.0,
                ..NetworkConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }
}
