//! Forward and backward passes of the hierarchical point-set network.

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::NetworkConfig;
use super::hierarchy::{Hierarchy, Level};
use super::layers::{
    column_sums, max_pool_backward, max_pool_groups, real, rows, rows_mut, Dense, MlpStack, Real, StackCache,
};
use crate::encoding::EncodedPartition;
use crate::error::{Error, Result};

/// All weights of the network, keyed by (stage, level, layer).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters<T> {
    pub abstraction: Vec<MlpStack<T>>,
    pub propagation: Vec<MlpStack<T>>,
    pub classifier: MlpStack<T>,
    pub output: Dense<T>,
}

/// Whether a tensor is updated by the optimizer or tracked statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TensorKind {
    Trainable,
    RunningStat,
}

macro_rules! visit_stack {
    ($stack:expr, $prefix:expr, $f:expr, $($as_slice:ident)+) => {
        for (l, layer) in $stack.layers.$($as_slice)+().enumerate() {
            let p = format!("{}.{}", $prefix, l);
            let shape = [layer.dense.weight.nrows(), layer.dense.weight.ncols()];
            let w = layer.bn.gamma.len();
            $f(format!("{p}.weight"), TensorKind::Trainable, visit_stack!(@slice layer.dense.weight, $($as_slice)+), &shape[..]);
            $f(format!("{p}.gamma"), TensorKind::Trainable, visit_stack!(@slice layer.bn.gamma, $($as_slice)+), &[w][..]);
            $f(format!("{p}.beta"), TensorKind::Trainable, visit_stack!(@slice layer.bn.beta, $($as_slice)+), &[w][..]);
            $f(format!("{p}.running_mean"), TensorKind::RunningStat, visit_stack!(@slice layer.bn.running_mean, $($as_slice)+), &[w][..]);
            $f(format!("{p}.running_var"), TensorKind::RunningStat, visit_stack!(@slice layer.bn.running_var, $($as_slice)+), &[w][..]);
        }
    };
    (@slice $a:expr, iter) => { $a.as_slice().expect("standard layout") };
    (@slice $a:expr, iter_mut) => { $a.as_slice_mut().expect("standard layout") };
}

impl<T: Real> ModelParameters<T> {
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = config.level_dims();
        let k = config.levels;
        let abstraction = (0..k)
            .map(|j| MlpStack::init(&mut rng, 3 + dims[j], &config.abstraction_widths[j]))
            .collect();
        let mut propagation = Vec::with_capacity(k);
        let mut src = dims[k];
        for p in 0..k {
            let target_level = k - 1 - p;
            let stack = MlpStack::init(&mut rng, src + dims[target_level], &config.propagation_widths[p]);
            src = stack.outputs();
            propagation.push(stack);
        }
        let widths = &config.classifier_widths;
        let classifier = MlpStack::init(&mut rng, src, &widths[..widths.len() - 1]);
        let hidden = if classifier.layers.is_empty() {
            src
        } else {
            classifier.outputs()
        };
        let output = Dense::init(&mut rng, hidden, 2, true);
        Ok(ModelParameters {
            abstraction,
            propagation,
            classifier,
            output,
        })
    }

    pub fn zeros_like(&self) -> Self {
        ModelParameters {
            abstraction: self.abstraction.iter().map(MlpStack::zeros_like).collect(),
            propagation: self.propagation.iter().map(MlpStack::zeros_like).collect(),
            classifier: self.classifier.zeros_like(),
            output: self.output.zeros_like(),
        }
    }

    /// Visit every tensor with its stable key, kind and shape.
    pub fn visit(&self, mut f: impl FnMut(String, TensorKind, &[T], &[usize])) {
        for (j, stack) in self.abstraction.iter().enumerate() {
            visit_stack!(stack, format!("abstraction.{j}"), f, iter);
        }
        for (j, stack) in self.propagation.iter().enumerate() {
            visit_stack!(stack, format!("propagation.{j}"), f, iter);
        }
        visit_stack!(self.classifier, "classifier.0", f, iter);
        let shape = [self.output.weight.nrows(), self.output.weight.ncols()];
        f(
            "output.0.0.weight".into(),
            TensorKind::Trainable,
            self.output.weight.as_slice().expect("standard layout"),
            &shape,
        );
        if let Some(b) = &self.output.bias {
            f(
                "output.0.0.bias".into(),
                TensorKind::Trainable,
                b.as_slice().expect("standard layout"),
                &[b.len()],
            );
        }
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(String, TensorKind, &mut [T], &[usize])) {
        for (j, stack) in self.abstraction.iter_mut().enumerate() {
            visit_stack!(stack, format!("abstraction.{j}"), f, iter_mut);
        }
        for (j, stack) in self.propagation.iter_mut().enumerate() {
            visit_stack!(stack, format!("propagation.{j}"), f, iter_mut);
        }
        visit_stack!(self.classifier, "classifier.0", f, iter_mut);
        let shape = [self.output.weight.nrows(), self.output.weight.ncols()];
        f(
            "output.0.0.weight".into(),
            TensorKind::Trainable,
            self.output.weight.as_slice_mut().expect("standard layout"),
            &shape,
        );
        if let Some(b) = &mut self.output.bias {
            let len = b.len();
            f(
                "output.0.0.bias".into(),
                TensorKind::Trainable,
                b.as_slice_mut().expect("standard layout"),
                &[len],
            );
        }
    }

    fn stacks(&self) -> impl Iterator<Item = &MlpStack<T>> {
        self.abstraction
            .iter()
            .chain(&self.propagation)
            .chain(std::iter::once(&self.classifier))
    }

    /// Trainable tensors, in the same order as [`Self::visit`].
    pub fn trainable(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for stack in self.stacks() {
            for l in &stack.layers {
                out.push(l.dense.weight.as_slice().expect("standard layout"));
                out.push(l.bn.gamma.as_slice().expect("standard layout"));
                out.push(l.bn.beta.as_slice().expect("standard layout"));
            }
        }
        out.push(self.output.weight.as_slice().expect("standard layout"));
        if let Some(b) = &self.output.bias {
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        let stacks = self
            .abstraction
            .iter_mut()
            .chain(self.propagation.iter_mut())
            .chain(std::iter::once(&mut self.classifier));
        for stack in stacks {
            for l in stack.layers.iter_mut() {
                out.push(l.dense.weight.as_slice_mut().expect("standard layout"));
                out.push(l.bn.gamma.as_slice_mut().expect("standard layout"));
                out.push(l.bn.beta.as_slice_mut().expect("standard layout"));
            }
        }
        out.push(self.output.weight.as_slice_mut().expect("standard layout"));
        if let Some(b) = self.output.bias.as_mut() {
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(|_, _, data, _| ok &= data.iter().all(|v| v.is_finite()));
        ok
    }

    /// Convert every tensor to another float type.
    pub fn cast<U: Real>(&self) -> ModelParameters<U> {
        ModelParameters::<U> {
            abstraction: self.abstraction.iter().map(cast_stack).collect(),
            propagation: self.propagation.iter().map(cast_stack).collect(),
            classifier: cast_stack(&self.classifier),
            output: cast_dense(&self.output),
        }
    }
}

fn cast_dense<T: Real, U: Real>(d: &Dense<T>) -> Dense<U> {
    Dense {
        weight: d.weight.mapv(|v| real(v.to_f64().unwrap_or(f64::NAN))),
        bias: d
            .bias
            .as_ref()
            .map(|b| b.mapv(|v| real(v.to_f64().unwrap_or(f64::NAN)))),
    }
}

fn cast_stack<T: Real, U: Real>(s: &MlpStack<T>) -> MlpStack<U> {
    let c = |a: &ndarray::Array1<T>| a.mapv(|v| real::<U>(v.to_f64().unwrap_or(f64::NAN)));
    MlpStack {
        layers: s
            .layers
            .iter()
            .map(|l| super::layers::SharedLayer {
                dense: cast_dense(&l.dense),
                bn: super::layers::BatchNorm {
                    gamma: c(&l.bn.gamma),
                    beta: c(&l.bn.beta),
                    running_mean: c(&l.bn.running_mean),
                    running_var: c(&l.bn.running_var),
                },
            })
            .collect(),
    }
}

/// Per-point output of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Probability of "selected", aligned with the partition's point order.
    pub probabilities: Vec<f64>,
    pub selected: Vec<bool>,
}

impl Prediction {
    pub fn from_logits<T: Real>(logits: &Array2<T>) -> Prediction {
        let probabilities: Vec<f64> = logits
            .rows()
            .into_iter()
            .map(|r| selected_probability(r[0].to_f64().unwrap_or(f64::NAN), r[1].to_f64().unwrap_or(f64::NAN)))
            .collect();
        let selected = probabilities.iter().map(|&p| p > 0.5).collect();
        Prediction {
            probabilities,
            selected,
        }
    }
}

/// Two-way softmax probability of class 1.
#[inline]
pub fn selected_probability(z0: f64, z1: f64) -> f64 {
    1.0 / (1.0 + (z0 - z1).exp())
}

type LevelTrace<T> = (StackCache<T>, Vec<Vec<u32>>, Vec<usize>);

/// Everything a training-mode pass keeps for backpropagation. Batch-norm
/// statistics are shared by all partitions of the pass.
#[derive(Debug, Default)]
pub struct Trace<T> {
    /// Per level: stack cache, per-partition pooling winners and row offsets.
    abstraction: Vec<LevelTrace<T>>,
    propagation: Vec<StackCache<T>>,
    classifier: StackCache<T>,
    hidden: Array2<T>,
    dropout: Option<Array2<T>>,
}

impl<T> Trace<T> {
    /// Batch statistics of every batch-norm layer, for running-average updates.
    pub fn batch_stats(&self) -> Vec<(&StackCache<T>, BnSite)> {
        let mut out = Vec::new();
        for (j, (c, _, _)) in self.abstraction.iter().enumerate() {
            out.push((c, BnSite::Abstraction(j)));
        }
        for (p, c) in self.propagation.iter().enumerate() {
            out.push((c, BnSite::Propagation(p)));
        }
        out.push((&self.classifier, BnSite::Classifier));
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub enum BnSite {
    Abstraction(usize),
    Propagation(usize),
    Classifier,
}

/// Network configuration plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub config: NetworkConfig,
    pub params: ModelParameters<T>,
}

fn grouped_input<T: Real>(level: &Level, feats: &Array2<T>) -> Array2<T> {
    let d = feats.ncols();
    let width = 3 + d;
    let mut x = Array2::<T>::zeros((level.members.len(), width));
    let src = feats.as_slice().expect("standard layout");
    for (row, (&m, rel)) in rows_mut(&mut x, width).zip(level.members.iter().zip(&level.relative)) {
        row[0] = real(rel[0]);
        row[1] = real(rel[1]);
        row[2] = real(rel[2]);
        let m = m as usize;
        row[3..].copy_from_slice(&src[m * d..(m + 1) * d]);
    }
    x
}

fn interpolated_input<T: Real>(level: &Level, source: &Array2<T>, skip: &Array2<T>) -> Array2<T> {
    let ds = source.ncols();
    let dk = skip.ncols();
    let width = ds + dk;
    let mut x = Array2::<T>::zeros((skip.nrows(), width));
    let src = source.as_slice().expect("standard layout");
    for ((row, sk), (idx, w)) in rows_mut(&mut x, width)
        .zip(rows(skip, dk))
        .zip(level.interp_index.iter().zip(&level.interp_weight))
    {
        for s in 0..3 {
            if w[s] == 0.0 {
                continue;
            }
            let ws: T = real(w[s]);
            let i = idx[s] as usize;
            for (o, &v) in row[..ds].iter_mut().zip(&src[i * ds..(i + 1) * ds]) {
                *o += ws * v;
            }
        }
        row[ds..].copy_from_slice(sk);
    }
    x
}

fn offsets_of(sizes: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut out = vec![0];
    for n in sizes {
        out.push(out.last().copied().unwrap_or(0) + n);
    }
    out
}

fn row_offsets<T>(xs: &[Array2<T>]) -> Vec<usize> {
    offsets_of(xs.iter().map(|x| x.nrows()))
}

fn concat_rows<T: Real>(mut xs: Vec<Array2<T>>) -> Array2<T> {
    if xs.len() == 1 {
        return xs.pop().expect("one block");
    }
    let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
    ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths")
}

fn split_rows<T: Real>(x: &Array2<T>, offsets: &[usize]) -> Vec<Array2<T>> {
    offsets
        .windows(2)
        .map(|w| x.slice(s![w[0]..w[1], ..]).to_owned())
        .collect()
}

fn check_finite<T: Real>(x: &Array2<T>, site: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteActivation(site.to_string()))
    }
}

impl<T: Real> Network<T> {
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        let params = ModelParameters::init(&config, seed)?;
        Ok(Network { config, params })
    }

    /// Build the parameter-free grouping plan for a set of normalized positions.
    pub fn hierarchy(&self, positions: &[crate::geometry::Point3]) -> Hierarchy {
        Hierarchy::build(positions, self.config.group_size, self.config.levels)
    }

    fn check_input(&self, feats: &Array2<T>, h: &Hierarchy) -> Result<()> {
        if feats.ncols() != self.config.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "expected {} input features, got {}",
                self.config.input_dim,
                feats.ncols()
            )));
        }
        if feats.nrows() == 0 || h.positions[0].len() != feats.nrows() || h.levels.len() != self.config.levels {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows for a hierarchy over {} points",
                feats.nrows(),
                h.positions[0].len()
            )));
        }
        Ok(())
    }

    /// Deterministic inference pass; returns `n × 2` logits.
    pub fn forward_eval(&self, feats: &Array2<T>, h: &Hierarchy) -> Result<Array2<T>> {
        self.check_input(feats, h)?;
        let k = self.config.levels;
        let mut level_feats = vec![feats.clone()];
        for j in 0..k {
            let level = &h.levels[j];
            let x = grouped_input(level, &level_feats[j]);
            let y = self.params.abstraction[j].forward_eval(&x);
            level_feats.push(max_pool_groups(&y, level.group_size).0);
        }
        let mut g = level_feats[k].clone();
        for j in (1..=k).rev() {
            let x = interpolated_input(&h.levels[j - 1], &g, &level_feats[j - 1]);
            g = self.params.propagation[k - j].forward_eval(&x);
        }
        let hidden = self.params.classifier.forward_eval(&g);
        let logits = self.params.output.forward(&hidden);
        check_finite(&logits, "logits")?;
        Ok(logits)
    }

    /// Training pass with batch statistics and dropout drawn from `dropout_seed`.
    pub fn forward_train(&self, feats: &Array2<T>, h: &Hierarchy, dropout_seed: u64) -> Result<(Array2<T>, Trace<T>)> {
        let (mut logits, trace) = self.forward_train_batch(&[(feats, h)], dropout_seed)?;
        Ok((logits.pop().expect("one partition"), trace))
    }

    /// Training pass over several partitions whose batch-norm statistics are
    /// pooled over all their rows. Returns per-partition logits.
    pub fn forward_train_batch(
        &self,
        batch: &[(&Array2<T>, &Hierarchy)],
        dropout_seed: u64,
    ) -> Result<(Vec<Array2<T>>, Trace<T>)> {
        if batch.is_empty() {
            return Err(Error::EmptyInput);
        }
        for (feats, h) in batch {
            self.check_input(feats, h)?;
        }
        let k = self.config.levels;
        let mut trace = Trace::<T>::default();
        let mut level_feats: Vec<Vec<Array2<T>>> = batch.iter().map(|(f, _)| vec![(*f).clone()]).collect();
        for j in 0..k {
            let xs: Vec<Array2<T>> = batch
                .iter()
                .zip(&level_feats)
                .map(|((_, h), lf)| grouped_input(&h.levels[j], &lf[j]))
                .collect();
            let offsets = row_offsets(&xs);
            let mut cache = StackCache::default();
            let y = self.params.abstraction[j].forward_train(concat_rows(xs), &mut cache);
            let mut args = Vec::with_capacity(batch.len());
            for (i, (_, h)) in batch.iter().enumerate() {
                let part = y.slice(s![offsets[i]..offsets[i + 1], ..]).to_owned();
                let (pooled, arg) = max_pool_groups(&part, h.levels[j].group_size);
                level_feats[i].push(pooled);
                args.push(arg);
            }
            trace.abstraction.push((cache, args, offsets));
        }
        let mut g: Vec<Array2<T>> = level_feats.iter().map(|lf| lf[k].clone()).collect();
        let mut g_cat = Array2::zeros((0, 0));
        for j in (1..=k).rev() {
            let xs: Vec<Array2<T>> = batch
                .iter()
                .zip(&g)
                .zip(&level_feats)
                .map(|(((_, h), gi), lf)| interpolated_input(&h.levels[j - 1], gi, &lf[j - 1]))
                .collect();
            let offsets = row_offsets(&xs);
            let mut cache = StackCache::default();
            g_cat = self.params.propagation[k - j].forward_train(concat_rows(xs), &mut cache);
            trace.propagation.push(cache);
            if j > 1 {
                g = split_rows(&g_cat, &offsets);
            }
        }
        let mut hidden = self.params.classifier.forward_train(g_cat, &mut trace.classifier);
        let keep = self.config.dropout_keep;
        if keep < 1.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
            let scale: T = real(1.0 / keep);
            let mask = Array2::from_shape_fn(hidden.raw_dim(), |_| {
                if rng.gen::<f64>() < keep {
                    scale
                } else {
                    T::zero()
                }
            });
            hidden *= &mask;
            trace.dropout = Some(mask);
        }
        let logits = self.params.output.forward(&hidden);
        trace.hidden = hidden;
        check_finite(&logits, "logits")?;
        let point_offsets = offsets_of(batch.iter().map(|(f, _)| f.nrows()));
        Ok((split_rows(&logits, &point_offsets), trace))
    }

    /// Accumulate parameter gradients of a scalar loss with logit gradient
    /// `d_logits` into `grads`.
    pub fn backward(&self, trace: &Trace<T>, h: &Hierarchy, d_logits: &Array2<T>, grads: &mut ModelParameters<T>) {
        self.backward_batch(trace, &[h], std::slice::from_ref(d_logits), grads);
    }

    /// Backward pass of [`Self::forward_train_batch`].
    pub fn backward_batch(
        &self,
        trace: &Trace<T>,
        hs: &[&Hierarchy],
        d_logits: &[Array2<T>],
        grads: &mut ModelParameters<T>,
    ) {
        let k = self.config.levels;
        let p = &self.params;
        let d_logits = concat_rows(d_logits.to_vec());
        grads.output.weight += &trace.hidden.t().dot(&d_logits);
        if let Some(b) = grads.output.bias.as_mut() {
            *b += &column_sums(&d_logits);
        }
        let mut d_hidden = d_logits.dot(&p.output.weight.t());
        if let Some(mask) = &trace.dropout {
            d_hidden *= mask;
        }
        let mut d_g = if p.classifier.layers.is_empty() {
            d_hidden
        } else {
            p.classifier
                .backward(&trace.classifier, d_hidden, &mut grads.classifier, true)
                .expect("input gradient requested")
        };

        let dims = self.config.level_dims();
        let mut d_feats: Vec<Vec<Array2<T>>> = hs
            .iter()
            .map(|h| {
                (0..=k)
                    .map(|j| Array2::zeros((h.positions[j].len(), dims[j])))
                    .collect()
            })
            .collect();

        // Propagation stages run top-down in the forward pass (stage 0 feeds
        // level k-1); walk them bottom-up here.
        for j in 1..=k {
            let stage = k - j;
            let dx = p.propagation[stage]
                .backward(&trace.propagation[stage], d_g, &mut grads.propagation[stage], true)
                .expect("input gradient requested");
            let src_dim = if j == k {
                dims[k]
            } else {
                p.propagation[stage - 1].outputs()
            };
            let offsets = offsets_of(hs.iter().map(|h| h.positions[j - 1].len()));
            let mut d_srcs = Vec::with_capacity(hs.len());
            for (i, h) in hs.iter().enumerate() {
                let dxi = dx.slice(s![offsets[i]..offsets[i + 1], ..]);
                if j > 1 {
                    d_feats[i][j - 1] += &dxi.slice(s![.., src_dim..]);
                }
                let level = &h.levels[j - 1];
                let mut d_src = Array2::<T>::zeros((h.positions[j].len(), src_dim));
                let dst = d_src.as_slice_mut().expect("standard layout");
                for (row, (idx, w)) in dxi
                    .outer_iter()
                    .zip(level.interp_index.iter().zip(&level.interp_weight))
                {
                    let row = row.to_slice().expect("contiguous row");
                    for s in 0..3 {
                        if w[s] == 0.0 {
                            continue;
                        }
                        let ws: T = real(w[s]);
                        let i = idx[s] as usize;
                        for (o, &v) in dst[i * src_dim..(i + 1) * src_dim].iter_mut().zip(&row[..src_dim]) {
                            *o += ws * v;
                        }
                    }
                }
                if j == k {
                    d_feats[i][k] += &d_src;
                } else {
                    d_srcs.push(d_src);
                }
            }
            d_g = if j == k {
                Array2::zeros((0, 0))
            } else {
                concat_rows(d_srcs)
            };
        }

        for j in (0..k).rev() {
            let (cache, args, offsets) = &trace.abstraction[j];
            let d_ys: Vec<Array2<T>> = (0..hs.len())
                .map(|i| max_pool_backward(&d_feats[i][j + 1], &args[i], offsets[i + 1] - offsets[i]))
                .collect();
            let need = j >= 1;
            let dx = p.abstraction[j].backward(cache, concat_rows(d_ys), &mut grads.abstraction[j], need);
            if let Some(dx) = dx {
                let d = dims[j];
                for (i, h) in hs.iter().enumerate() {
                    let target = d_feats[i][j].as_slice_mut().expect("standard layout");
                    let dxi = dx.slice(s![offsets[i]..offsets[i + 1], ..]);
                    for (row, &m) in dxi.outer_iter().zip(&h.levels[j].members) {
                        let m = m as usize;
                        for (o, &v) in target[m * d..(m + 1) * d].iter_mut().zip(row.iter().skip(3)) {
                            *o += v;
                        }
                    }
                }
            }
        }
    }

    /// Fold the batch statistics of a training pass into the running averages:
    /// `running = decay * running + (1 - decay) * batch`.
    pub fn update_running_stats(&mut self, trace: &Trace<T>, decay: f64) {
        let a: T = real(decay);
        let b: T = real(1.0 - decay);
        for (cache, site) in trace.batch_stats() {
            let stack = match site {
                BnSite::Abstraction(j) => &mut self.params.abstraction[j],
                BnSite::Propagation(p) => &mut self.params.propagation[p],
                BnSite::Classifier => &mut self.params.classifier,
            };
            for (l, layer) in stack.layers.iter_mut().enumerate() {
                let bn = &mut layer.bn;
                bn.running_mean
                    .zip_mut_with(&cache.batch_mean[l], |r, &m| *r = a * *r + b * m);
                bn.running_var
                    .zip_mut_with(&cache.batch_var[l], |r, &v| *r = a * *r + b * v);
            }
        }
    }

    /// Eval-mode prediction for one partition.
    pub fn predict(&self, partition: &EncodedPartition) -> Result<Prediction> {
        let (feats, h) = self.prepare(partition);
        let logits = self.forward_eval(&feats, &h)?;
        Ok(Prediction::from_logits(&logits))
    }

    /// Network input matrix and grouping plan for a partition.
    pub fn prepare(&self, partition: &EncodedPartition) -> (Array2<T>, Hierarchy) {
        let rows = partition.features();
        let feats = Array2::from_shape_fn((rows.len(), 4), |(i, j)| real(rows[i][j]));
        let h = self.hierarchy(&partition.positions());
        (feats, h)
    }
}
