//! Adam training over cached partitions with step schedules and checkpoints.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{mix, split_by_cloud, Corpus, PointCloud, SelectionRecord, Split};
use crate::encoding::{encode_and_partition, DEFAULT_PARTITION_THRESHOLD};
use crate::error::{Error, Result};
use crate::network::{
    weighted_cross_entropy, Checkpoint, CheckpointMetadata, ClassWeights, Hierarchy, Network, NetworkConfig, Prediction,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    /// Epochs between learning-rate halvings; also the BN decay step.
    pub lr_halving_period: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub bn_decay_start: f64,
    pub bn_decay_max: f64,
    /// Overrides the network's dropout keep ratio while training.
    pub dropout_keep: f64,
    pub class_weights: ClassWeights,
    /// Partitions per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    pub partition_threshold: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            base_lr: 1e-3,
            lr_halving_period: 50,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            bn_decay_start: 0.5,
            bn_decay_max: 0.99,
            dropout_keep: 0.7,
            class_weights: ClassWeights::default(),
            batch_size: 8,
            seed: 0,
            partition_threshold: DEFAULT_PARTITION_THRESHOLD,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.epochs == 0 || self.lr_halving_period == 0 || self.batch_size == 0 || self.partition_threshold == 0 {
            return bad("epochs, lr_halving_period, batch_size and partition_threshold must be positive");
        }
        let positive = [
            self.base_lr,
            self.adam_eps,
            self.class_weights.selected,
            self.class_weights.unselected,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("base_lr, adam_eps and class weights must be positive");
        }
        for b in [self.adam_beta1, self.adam_beta2] {
            if !(0.0..1.0).contains(&b) {
                return bad("Adam betas must lie in [0, 1)");
            }
        }
        if !(self.bn_decay_start > 0.0 && self.bn_decay_start <= self.bn_decay_max && self.bn_decay_max < 1.0) {
            return bad("need 0 < bn_decay_start <= bn_decay_max < 1");
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return bad("dropout_keep must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `base_lr * 0.5^floor(epoch / period)`.
    pub fn lr_schedule(&self, epoch: usize) -> f64 {
        self.base_lr * 0.5f64.powi((epoch / self.lr_halving_period) as i32)
    }

    /// `min(max, 1 - (1 - start) * 0.5^floor(epoch / period))`.
    pub fn bn_decay_schedule(&self, epoch: usize) -> f64 {
        let steps = (epoch / self.lr_halving_period).min(1000) as i32;
        (1.0 - (1.0 - self.bn_decay_start) * 0.5f64.powi(steps)).min(self.bn_decay_max)
    }
}

/// Split records by cloud id; all records of a cloud land on one side.
pub fn split_dataset(
    records: &[SelectionRecord],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<&SelectionRecord>, Vec<&SelectionRecord>)> {
    let ids: Vec<String> = records.iter().map(|r| r.cloud_id.clone()).collect();
    let sides = split_by_cloud(&ids, ratio, seed)?;
    let (train, test) = records.iter().partition(|r| sides[&r.cloud_id] == Split::Train);
    Ok((train, test))
}

/// First and second moment estimates of Adam, one buffer per trainable tensor.
#[derive(Clone, Debug)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(net: &Network<f32>, cfg: &TrainConfig) -> Adam {
        let sizes: Vec<usize> = net.params.trainable().iter().map(|t| t.len()).collect();
        Adam {
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One bias-corrected update with gradients scaled by `scale`.
    pub fn update(
        &mut self,
        net: &mut Network<f32>,
        grads: &crate::network::ModelParameters<f32>,
        lr: f64,
        scale: f64,
    ) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let grads = grads.trainable();
        for (k, w) in net.params.trainable_mut().into_iter().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, (w, &g)) in w.iter_mut().zip(grads[k]).enumerate() {
                let g = g as f64 * scale;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let step = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
                *w = (*w as f64 - step) as f32;
            }
        }
    }
}

/// Per-epoch entry of the metric log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    #[serde(rename = "train_dJ")]
    pub train_d_j: f64,
    /// Absent when the test split is empty.
    #[serde(rename = "test_dJ")]
    pub test_d_j: Option<f64>,
}

struct CachedPartition {
    features: Array2<f32>,
    hierarchy: Hierarchy,
    labels: Vec<bool>,
    record: usize,
}

struct CachedRecord {
    target_count: usize,
}

struct Cache {
    partitions: Vec<CachedPartition>,
    records: Vec<CachedRecord>,
}

fn build_cache(
    net: &Network<f32>,
    records: &[&SelectionRecord],
    clouds: &HashMap<String, PointCloud>,
    thre: usize,
) -> Result<Cache> {
    let mut cache = Cache {
        partitions: Vec::new(),
        records: Vec::with_capacity(records.len()),
    };
    for (ri, rec) in records.iter().enumerate() {
        let cloud = clouds
            .get(&rec.cloud_id)
            .ok_or_else(|| Error::UnknownCloud(rec.cloud_id.clone()))?;
        let mask = rec.target_mask(cloud)?;
        cache.records.push(CachedRecord {
            target_count: mask.iter().filter(|&&m| m).count(),
        });
        let parts = match encode_and_partition(&cloud.points, &rec.camera, &rec.lasso, thre) {
            Ok((parts, _)) => parts,
            Err(Error::EmptyIntentionArea) => continue,
            Err(e) => return Err(e),
        };
        for part in parts {
            let (features, hierarchy) = net.prepare(&part);
            let labels = part.points.iter().map(|p| mask[p.source_index]).collect();
            cache.partitions.push(CachedPartition {
                features,
                hierarchy,
                labels,
                record: ri,
            });
        }
    }
    Ok(cache)
}

/// Mean per-record Jaccard distance of eval-mode predictions. Points removed
/// by the intention filter count as unselected.
fn cache_d_j(net: &Network<f32>, cache: &Cache) -> Result<f64> {
    if cache.records.is_empty() {
        return Ok(0.0);
    }
    let mut selected = vec![0usize; cache.records.len()];
    let mut hits = vec![0usize; cache.records.len()];
    for p in &cache.partitions {
        let logits = net.forward_eval(&p.features, &p.hierarchy)?;
        let pred = Prediction::from_logits(&logits);
        for (&s, &l) in pred.selected.iter().zip(&p.labels) {
            selected[p.record] += s as usize;
            hits[p.record] += (s && l) as usize;
        }
    }
    let total: f64 = cache
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let union = selected[i] + r.target_count - hits[i];
            if union == 0 {
                0.0
            } else {
                1.0 - hits[i] as f64 / union as f64
            }
        })
        .sum();
    Ok(total / cache.records.len() as f64)
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub last: Network<f32>,
    pub best: Network<f32>,
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
}

/// Train `net` in place on `train` records, tracking d_J on `test`.
///
/// Deterministic given the seed: partitions are visited in a per-epoch
/// shuffled order, and each batch shares one set of batch-norm statistics.
pub fn train(
    mut net: Network<f32>,
    train: &[&SelectionRecord],
    test: &[&SelectionRecord],
    clouds: &HashMap<String, PointCloud>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput);
    }
    net.config.dropout_keep = cfg.dropout_keep;
    let train_cache = build_cache(&net, train, clouds, cfg.partition_threshold)?;
    let test_cache = build_cache(&net, test, clouds, cfg.partition_threshold)?;
    if train_cache.partitions.is_empty() {
        return Err(Error::EmptyIntentionArea);
    }
    tracing::info!(
        train_records = train.len(),
        train_partitions = train_cache.partitions.len(),
        test_records = test.len(),
        "training cache ready"
    );

    let mut adam = Adam::new(&net, cfg);
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0usize, net.clone());
    let mut order: Vec<usize> = (0..train_cache.partitions.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_schedule(epoch);
        let decay = cfg.bn_decay_schedule(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, epoch as u64, 1));
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = net.params.zeros_like();
            let parts: Vec<&CachedPartition> = batch.iter().map(|&pi| &train_cache.partitions[pi]).collect();
            let inputs: Vec<(&Array2<f32>, &Hierarchy)> = parts.iter().map(|p| (&p.features, &p.hierarchy)).collect();
            let dropout_seed = mix(cfg.seed, epoch as u64, 2 + b as u64);
            let (logits, trace) = net.forward_train_batch(&inputs, dropout_seed).map_err(|e| match e {
                Error::NonFiniteActivation(_) => Error::NonFiniteLoss { epoch, batch: b },
                e => e,
            })?;
            let mut d_logits = Vec::with_capacity(parts.len());
            for (p, z) in parts.iter().zip(&logits) {
                let (loss, d) = weighted_cross_entropy(z, &p.labels, cfg.class_weights)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: b });
                }
                loss_sum += loss;
                d_logits.push(d);
            }
            let hs: Vec<&Hierarchy> = parts.iter().map(|p| &p.hierarchy).collect();
            net.backward_batch(&trace, &hs, &d_logits, &mut grads);
            net.update_running_stats(&trace, decay);
            adam.update(&mut net, &grads, lr, 1.0 / batch.len() as f64);
            if !net.params.all_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
        }
        let train_d_j = cache_d_j(&net, &train_cache)?;
        let test_d_j = if test.is_empty() {
            None
        } else {
            Some(cache_d_j(&net, &test_cache)?)
        };
        let m = EpochMetrics {
            epoch,
            lr,
            train_loss: loss_sum / order.len() as f64,
            train_d_j,
            test_d_j,
        };
        let score = test_d_j.unwrap_or(train_d_j);
        if score < best.0 {
            best = (score, epoch, net.clone());
        }
        tracing::info!(epoch, lr, train_loss = m.train_loss, train_d_j, test_d_j, "epoch done");
        on_epoch(&m);
        metrics.push(m);
    }
    Ok(TrainOutcome {
        last: net,
        best: best.2,
        best_epoch: best.1,
        metrics,
    })
}

/// Train on a loaded corpus using its manifest split and write
/// `metrics.jsonl`, `final.json` and `best.json` into `out`.
pub fn train_corpus(corpus: &Corpus, net_config: NetworkConfig, cfg: &TrainConfig, out: &Path) -> Result<TrainOutcome> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let log_path = out.join("metrics.jsonl");
    let mut log = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log_err = None;
    let net = Network::new(net_config, cfg.seed)?;
    let outcome = train(
        net,
        &corpus.records_in(Split::Train),
        &corpus.records_in(Split::Test),
        &corpus.clouds,
        cfg,
        |m| {
            let line = serde_json::to_string(m).expect("metrics serialize");
            if let Err(e) = writeln!(log, "{line}") {
                log_err.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = log_err {
        return Err(Error::io(&log_path, e));
    }
    let meta = |epoch| CheckpointMetadata {
        epoch,
        seed: cfg.seed,
        corpus_id: corpus.corpus_id().to_string(),
    };
    Checkpoint::from_network(&outcome.last, meta(cfg.epochs - 1)).save(&out.join("final.json"))?;
    Checkpoint::from_network(&outcome.best, meta(outcome.best_epoch)).save(&out.join("best.json"))?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        let c = TrainConfig::default();
        assert_eq!(c.lr_schedule(0), 1e-3);
        assert_eq!(c.lr_schedule(49), 1e-3);
        assert_eq!(c.lr_schedule(50), 5e-4);
        assert_eq!(c.lr_schedule(150), 1.25e-4);
        assert_eq!(c.bn_decay_schedule(0), 0.5);
        assert_eq!(c.bn_decay_schedule(50), 0.75);
        assert_eq!(c.bn_decay_schedule(300), 0.99);
        let mut prev = 0.0;
        for e in 0..1000 {
            let d = c.bn_decay_schedule(e);
            assert!(d >= prev && d <= 0.99);
            prev = d;
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let c = TrainConfig {
            dropout_keep: 0.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.class_weights.selected = 0.0;
        assert!(c.validate().is_err());
        let c =
            TrainConfig::from_toml("epochs = 3\nbatch_size = 2\n[class_weights]\nselected = 4.0\nunselected = 1.0\n")
                .unwrap();
        assert_eq!((c.epochs, c.batch_size, c.class_weights.selected), (3, 2, 4.0));
        assert!(TrainConfig::from_toml("epochs = 0").is_err());
    }

    #[test]
    fn metrics_use_log_field_names() {
        let m = EpochMetrics {
            epoch: 1,
            lr: 1e-3,
            train_loss: 0.5,
            train_d_j: 0.25,
            test_d_j: Some(0.3),
        };
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        for k in ["epoch", "lr", "train_loss", "train_dJ", "test_dJ"] {
            assert!(v.get(k).is_some(), "{k}");
        }
    }
}
