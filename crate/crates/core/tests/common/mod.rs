#![allow(dead_code)]

use lasso_core::encoding::{EncodedPartition, EncodedPoint};
use lasso_core::geometry::Point3;
use lasso_core::network::{weighted_cross_entropy, ClassWeights, Network, NetworkConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn tiny_config() -> NetworkConfig {
    NetworkConfig {
        group_size: 4,
        levels: 1,
        abstraction_widths: vec![vec![8]],
        propagation_widths: vec![vec![8]],
        classifier_widths: vec![8, 2],
        dropout_keep: 0.7,
        input_dim: 4,
    }
}

/// Random camera-space partition with distinct positions.
pub fn random_partition(rng: &mut ChaCha8Rng, n: usize) -> EncodedPartition {
    let points = (0..n)
        .map(|i| EncodedPoint {
            cam: Point3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-6.0..-4.0),
            ),
            w: rng.gen_range(0..2u8),
            source_index: i,
        })
        .collect();
    EncodedPartition::new(points).unwrap()
}

pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Compare backpropagated parameter gradients with central differences of
/// the training-mode loss, one scalar parameter at a time.
pub fn gradient_check(config: NetworkConfig, seed: u64, n: usize, h: f64) -> GradCheck {
    gradient_check_batch(config, seed, &[n], h)
}

/// Gradient check of a batched training pass with pooled batch statistics;
/// the loss is the sum of the per-partition losses.
pub fn gradient_check_batch(config: NetworkConfig, seed: u64, sizes: &[usize], h: f64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = ClassWeights {
        selected: 4.0,
        unselected: 1.0,
    };
    let mut net = Network::<f64>::new(config, seed).unwrap();
    let mut prepared = Vec::new();
    for &n in sizes {
        let part = random_partition(&mut rng, n);
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        let (feats, hier) = net.prepare(&part);
        prepared.push((feats, hier, labels));
    }
    let inputs: Vec<_> = prepared.iter().map(|(f, h, _)| (f, h)).collect();
    let hs: Vec<_> = prepared.iter().map(|(_, h, _)| h).collect();
    let dropout_seed = seed ^ 0x5eed;

    let loss = |net: &Network<f64>| {
        let (logits, _) = net.forward_train_batch(&inputs, dropout_seed).unwrap();
        logits
            .iter()
            .zip(&prepared)
            .map(|(z, (_, _, labels))| weighted_cross_entropy(z, labels, weights).unwrap().0)
            .sum::<f64>()
    };
    let (logits, trace) = net.forward_train_batch(&inputs, dropout_seed).unwrap();
    let d_logits: Vec<_> = logits
        .iter()
        .zip(&prepared)
        .map(|(z, (_, _, labels))| weighted_cross_entropy(z, labels, weights).unwrap().1)
        .collect();
    let mut grads = net.params.zeros_like();
    net.backward_batch(&trace, &hs, &d_logits, &mut grads);
    let analytic: Vec<Vec<f64>> = grads.trainable().iter().map(|t| t.to_vec()).collect();

    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    for (t, tensor) in analytic.iter().enumerate() {
        for (i, &a) in tensor.iter().enumerate() {
            let orig = net.params.trainable()[t][i];
            net.params.trainable_mut()[t][i] = orig + h;
            let plus = loss(&net);
            net.params.trainable_mut()[t][i] = orig - h;
            let minus = loss(&net);
            net.params.trainable_mut()[t][i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }
    GradCheck {
        max_rel_error: max_rel,
        checked,
    }
}
