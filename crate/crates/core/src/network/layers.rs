//! Shared per-point layers (affine → batch-norm → ReLU) and their gradients.

use std::fmt::Debug;

use ndarray::{Array1, Array2, Axis, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating point type the network can run in.
pub trait Real:
    LinalgScalar
    + ScalarOperand
    + Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Default
    + Send
    + Sync
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("representable")
}

pub const BN_EPS: f64 = 1e-3;

/// Fully connected layer, `y = x · W (+ b)` with `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Option<Array1<T>>,
}

impl<T: Real> Dense<T> {
    pub fn init<R: Rng>(rng: &mut R, inputs: usize, outputs: usize, bias: bool) -> Self {
        let std = (2.0 / inputs as f64).sqrt();
        let weight = Array2::from_shape_fn((inputs, outputs), |_| {
            let z: f64 = StandardNormal.sample(rng);
            real(z * std)
        });
        Dense {
            weight,
            bias: bias.then(|| Array1::zeros(outputs)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Dense {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: self.bias.as_ref().map(|b| Array1::zeros(b.raw_dim())),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: &Array2<T>) -> Array2<T> {
        let mut y = x.dot(&self.weight);
        if let Some(b) = &self.bias {
            y += b;
        }
        y
    }
}

/// Batch normalization with learned scale/shift and running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(width: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }

    pub fn zeros_like(&self) -> Self {
        BatchNorm {
            gamma: Array1::zeros(self.gamma.raw_dim()),
            beta: Array1::zeros(self.beta.raw_dim()),
            running_mean: Array1::zeros(self.gamma.raw_dim()),
            running_var: Array1::zeros(self.gamma.raw_dim()),
        }
    }
}

/// One shared per-point layer: affine (no bias) → batch-norm → ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct SharedLayer<T> {
    pub dense: Dense<T>,
    pub bn: BatchNorm<T>,
}

/// A stack of [`SharedLayer`]s applied row-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpStack<T> {
    pub layers: Vec<SharedLayer<T>>,
}

/// Activations kept by a training-mode pass through an [`MlpStack`].
#[derive(Clone, Debug, Default)]
pub struct StackCache<T> {
    /// `acts[0]` is the stack input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Array2<T>>,
    xhat: Vec<Array2<T>>,
    inv_std: Vec<Array1<T>>,
    pub batch_mean: Vec<Array1<T>>,
    pub batch_var: Vec<Array1<T>>,
}

impl<T: Real> MlpStack<T> {
    pub fn init<R: Rng>(rng: &mut R, inputs: usize, widths: &[usize]) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut d = inputs;
        for &w in widths {
            layers.push(SharedLayer {
                dense: Dense::init(rng, d, w, false),
                bn: BatchNorm::new(w),
            });
            d = w;
        }
        MlpStack { layers }
    }

    pub fn zeros_like(&self) -> Self {
        MlpStack {
            layers: self
                .layers
                .iter()
                .map(|l| SharedLayer {
                    dense: l.dense.zeros_like(),
                    bn: l.bn.zeros_like(),
                })
                .collect(),
        }
    }

    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, |l| l.dense.inputs())
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.dense.outputs())
    }

    /// Inference pass using running statistics.
    pub fn forward_eval(&self, x: &Array2<T>) -> Array2<T> {
        let eps: T = real(BN_EPS);
        let mut cur: Option<Array2<T>> = None;
        for layer in &self.layers {
            let input = cur.as_ref().unwrap_or(x);
            let mut z = input.dot(&layer.dense.weight);
            let bn = &layer.bn;
            let scale: Vec<T> = bn
                .gamma
                .iter()
                .zip(bn.running_var.iter())
                .map(|(&g, &v)| g / (v + eps).sqrt())
                .collect();
            let shift: Vec<T> = bn
                .beta
                .iter()
                .zip(bn.running_mean.iter())
                .zip(scale.iter())
                .map(|((&b, &m), &s)| b - m * s)
                .collect();
            let d = scale.len();
            for row in rows_mut(&mut z, d) {
                for ((v, &s), &b) in row.iter_mut().zip(&scale).zip(&shift) {
                    let y = *v * s + b;
                    *v = if y > T::zero() { y } else { T::zero() };
                }
            }
            cur = Some(z);
        }
        cur.unwrap_or_else(|| x.clone())
    }

    /// Training pass with batch statistics; fills `cache` for [`Self::backward`].
    pub fn forward_train(&self, x: Array2<T>, cache: &mut StackCache<T>) -> Array2<T> {
        let eps: T = real(BN_EPS);
        *cache = StackCache::default();
        cache.acts.push(x);
        for layer in &self.layers {
            let input = cache.acts.last().expect("input present");
            let mut z = input.dot(&layer.dense.weight);
            let n = z.nrows();
            let d = z.ncols();
            let inv_n: T = real(1.0 / n.max(1) as f64);
            let mut mean = vec![T::zero(); d];
            for row in rows(&z, d) {
                for (m, &v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m *= inv_n);
            let mut var = vec![T::zero(); d];
            for row in rows(&z, d) {
                for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                    let c = v - m;
                    *s += c * c;
                }
            }
            var.iter_mut().for_each(|s| *s *= inv_n);
            let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
            let gamma = layer.bn.gamma.as_slice().expect("standard layout");
            let beta = layer.bn.beta.as_slice().expect("standard layout");
            let mut out = Array2::<T>::zeros((n, d));
            for (zr, or) in rows_mut(&mut z, d).zip(rows_mut(&mut out, d)) {
                for f in 0..d {
                    let xh = (zr[f] - mean[f]) * inv_std[f];
                    zr[f] = xh;
                    let y = gamma[f] * xh + beta[f];
                    or[f] = if y > T::zero() { y } else { T::zero() };
                }
            }
            cache.xhat.push(z);
            cache.inv_std.push(Array1::from(inv_std));
            cache.batch_mean.push(Array1::from(mean));
            cache.batch_var.push(Array1::from(var));
            cache.acts.push(out);
        }
        cache.acts.last().expect("output present").clone()
    }

    /// Backpropagate `d_out` through the cached pass, accumulating parameter
    /// gradients into `grads`. Returns the input gradient if requested.
    pub fn backward(
        &self,
        cache: &StackCache<T>,
        d_out: Array2<T>,
        grads: &mut MlpStack<T>,
        need_input_grad: bool,
    ) -> Option<Array2<T>> {
        let mut d = d_out.as_standard_layout().into_owned();
        let layers = self.layers.len();
        for l in (0..layers).rev() {
            let layer = &self.layers[l];
            let out = &cache.acts[l + 1];
            let xhat = &cache.xhat[l];
            let inv_std = cache.inv_std[l].as_slice().expect("standard layout");
            let gamma = layer.bn.gamma.as_slice().expect("standard layout");
            let n = d.nrows();
            let width = d.ncols();
            // ReLU gate, then dγ/dβ, then d(xhat).
            let mut sum_dxh = vec![T::zero(); width];
            let mut sum_dxh_xh = vec![T::zero(); width];
            {
                let g = &mut grads.layers[l].bn;
                let g_gamma = g.gamma.as_slice_mut().expect("standard layout");
                let mut g_beta = vec![T::zero(); width];
                for ((dr, or), xr) in rows_mut(&mut d, width).zip(rows(out, width)).zip(rows(xhat, width)) {
                    for f in 0..width {
                        let dy = if or[f] > T::zero() { dr[f] } else { T::zero() };
                        g_gamma[f] += dy * xr[f];
                        g_beta[f] += dy;
                        let dxh = dy * gamma[f];
                        dr[f] = dxh;
                        sum_dxh[f] += dxh;
                        sum_dxh_xh[f] += dxh * xr[f];
                    }
                }
                for (b, v) in g.beta.iter_mut().zip(g_beta) {
                    *b += v;
                }
            }
            let inv_n: T = real(1.0 / n.max(1) as f64);
            let nn: T = real(n as f64);
            let a: Vec<T> = inv_std.iter().map(|&s| s * inv_n).collect();
            for (dr, xr) in rows_mut(&mut d, width).zip(rows(xhat, width)) {
                for f in 0..width {
                    dr[f] = a[f] * (nn * dr[f] - sum_dxh[f] - xr[f] * sum_dxh_xh[f]);
                }
            }
            let input = &cache.acts[l];
            ndarray::linalg::general_mat_mul(T::one(), &input.t(), &d, T::one(), &mut grads.layers[l].dense.weight);
            if l > 0 || need_input_grad {
                d = d.dot(&layer.dense.weight.t());
            } else {
                return None;
            }
        }
        Some(d)
    }
}

/// Contiguous rows of a standard-layout matrix.
#[inline]
pub(crate) fn rows<T>(x: &Array2<T>, width: usize) -> std::slice::ChunksExact<'_, T> {
    x.as_slice().expect("standard layout").chunks_exact(width.max(1))
}

#[inline]
pub(crate) fn rows_mut<T>(x: &mut Array2<T>, width: usize) -> std::slice::ChunksExactMut<'_, T> {
    x.as_slice_mut()
        .expect("standard layout")
        .chunks_exact_mut(width.max(1))
}

/// Element-wise max over consecutive row groups of size `group`.
/// Returns pooled features and the winning row for every (group, feature).
pub fn max_pool_groups<T: Real>(x: &Array2<T>, group: usize) -> (Array2<T>, Vec<u32>) {
    let groups = x.nrows() / group;
    let d = x.ncols();
    let mut out = Array2::<T>::from_elem((groups, d), T::neg_infinity());
    let mut arg = vec![0u32; groups * d];
    let x = x.as_standard_layout();
    let src = x.as_slice().expect("standard layout");
    let dst = out.as_slice_mut().expect("standard layout");
    for (r, row) in src.chunks_exact(d.max(1)).enumerate() {
        let c = r / group;
        let o = &mut dst[c * d..(c + 1) * d];
        let a = &mut arg[c * d..(c + 1) * d];
        for f in 0..d {
            if row[f] > o[f] {
                o[f] = row[f];
                a[f] = r as u32;
            }
        }
    }
    (out, arg)
}

/// Scatter pooled gradients back onto the winning rows.
pub fn max_pool_backward<T: Real>(d_pooled: &Array2<T>, arg: &[u32], rows: usize) -> Array2<T> {
    let d = d_pooled.ncols();
    let mut dx = Array2::<T>::zeros((rows, d));
    let dst = dx.as_slice_mut().expect("standard layout");
    for ((i, &g), &r) in d_pooled.iter().enumerate().zip(arg) {
        dst[r as usize * d + i % d] += g;
    }
    dx
}

/// Sum of rows (bias gradient).
pub fn column_sums<T: Real>(x: &Array2<T>) -> Array1<T> {
    x.sum_axis(Axis(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn eval_matches_train_when_running_stats_equal_batch_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut stack = MlpStack::<f64>::init(&mut rng, 5, &[6, 4]);
        let x = Array2::from_shape_fn((9, 5), |(i, j)| ((i * 7 + j * 3) % 11) as f64 * 0.1 - 0.4);
        let mut cache = StackCache::default();
        let y_train = stack.forward_train(x.clone(), &mut cache);
        // Only the first layer's statistics are fixed by the input; copy all.
        for (l, layer) in stack.layers.iter_mut().enumerate() {
            layer.bn.running_mean = cache.batch_mean[l].clone();
            layer.bn.running_var = cache.batch_var[l].clone();
        }
        let y_eval = stack.forward_eval(&x);
        for (a, b) in y_train.iter().zip(y_eval.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn max_pool_picks_winners() {
        let x = Array2::from_shape_vec((4, 2), vec![1.0, 5.0, 3.0, 2.0, -1.0, -2.0, -3.0, 0.0]).unwrap();
        let (p, arg) = max_pool_groups(&x, 2);
        assert_eq!(p, Array2::from_shape_vec((2, 2), vec![3.0, 5.0, -1.0, 0.0]).unwrap());
        assert_eq!(arg, vec![1, 0, 2, 3]);
        let d = max_pool_backward::<f64>(&Array2::ones((2, 2)), &arg, 4);
        assert_eq!(d.sum(), 4.0);
        assert_eq!(d[[1, 0]], 1.0);
    }
}
