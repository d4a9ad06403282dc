//! Forward and backward passes of the two-stage CNN.
//!
//! Batches arrive as `[batch][mel][frame][channel]`. The convolutional stages
//! run per sample (in parallel across the batch); the fully connected stages
//! run as whole-batch matrix products. Per-sample gradient contributions are
//! summed in fixed-size chunks and the chunks are reduced in index order, so
//! results do not depend on the number of worker threads.

use ndarray::{Array1, Array2, ArrayView2, ArrayView4, Axis};
use rand::Rng;
use rayon::prelude::*;

use super::config::{CnnConfig, StageShapes};
use super::layers::{ConvGeom, PoolGeom};
use super::{CnnError, Real};
use crate::rng::{seeded, unit_f64};

const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, activations recorded for backpropagation.
    Train,
    /// Deterministic inference.
    Infer,
}

/// Every trainable tensor. Conv weights are `[filters][channels * kh * kw]`
/// (row-major `[filters][channels][kh][kw]`), dense weights are `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    pub conv1_w: Array2<T>,
    pub conv1_b: Array1<T>,
    pub conv2_w: Array2<T>,
    pub conv2_b: Array1<T>,
    pub fc1_w: Array2<T>,
    pub fc1_b: Array1<T>,
    pub fc2_w: Array2<T>,
    pub fc2_b: Array1<T>,
    pub out_w: Array2<T>,
    pub out_b: Array1<T>,
}

impl<T: Real> Parameters<T> {
    /// Tensor names in storage order.
    pub const NAMES: [&'static str; 10] = [
        "conv1.weight",
        "conv1.bias",
        "conv2.weight",
        "conv2.bias",
        "fc1.weight",
        "fc1.bias",
        "fc2.weight",
        "fc2.bias",
        "output.weight",
        "output.bias",
    ];
    /// Which tensors carry L2 decay.
    pub const IS_WEIGHT: [bool; 10] = [true, false, true, false, true, false, true, false, true, false];

    pub fn zeros(cfg: &CnnConfig) -> Result<Self, CnnError> {
        let s = cfg.shapes()?;
        let k1 = s.input[0] * cfg.conv1.kernel[0] * cfg.conv1.kernel[1];
        let k2 = s.pool1[0] * cfg.conv2.kernel[0] * cfg.conv2.kernel[1];
        let f1 = cfg.conv1.filters;
        let f2 = cfg.conv2.filters;
        Ok(Self {
            conv1_w: Array2::zeros((f1, k1)),
            conv1_b: Array1::zeros(f1),
            conv2_w: Array2::zeros((f2, k2)),
            conv2_b: Array1::zeros(f2),
            fc1_w: Array2::zeros((cfg.fc_width, s.flatten)),
            fc1_b: Array1::zeros(cfg.fc_width),
            fc2_w: Array2::zeros((cfg.fc_width, cfg.fc_width)),
            fc2_b: Array1::zeros(cfg.fc_width),
            out_w: Array2::zeros((cfg.num_classes, cfg.fc_width)),
            out_b: Array1::zeros(cfg.num_classes),
        })
    }

    /// He-uniform weights (`U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`), zero biases.
    pub fn he_uniform(cfg: &CnnConfig, seed: u64) -> Result<Self, CnnError> {
        let mut p = Self::zeros(cfg)?;
        let mut rng = seeded(seed);
        for w in [&mut p.conv1_w, &mut p.conv2_w, &mut p.fc1_w, &mut p.fc2_w, &mut p.out_w] {
            let limit = (6.0 / w.ncols() as f64).sqrt();
            w.iter_mut()
                .for_each(|v| *v = T::from((2.0 * unit_f64(&mut rng) - 1.0) * limit).unwrap());
        }
        Ok(p)
    }

    pub fn tensors(&self) -> [&[T]; 10] {
        fn s<T>(a: Option<&[T]>) -> &[T] {
            a.expect("parameters are contiguous")
        }
        [
            s(self.conv1_w.as_slice()),
            s(self.conv1_b.as_slice()),
            s(self.conv2_w.as_slice()),
            s(self.conv2_b.as_slice()),
            s(self.fc1_w.as_slice()),
            s(self.fc1_b.as_slice()),
            s(self.fc2_w.as_slice()),
            s(self.fc2_b.as_slice()),
            s(self.out_w.as_slice()),
            s(self.out_b.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 10] {
        let Self {
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            fc1_w,
            fc1_b,
            fc2_w,
            fc2_b,
            out_w,
            out_b,
        } = self;
        [
            conv1_w.as_slice_mut().unwrap(),
            conv1_b.as_slice_mut().unwrap(),
            conv2_w.as_slice_mut().unwrap(),
            conv2_b.as_slice_mut().unwrap(),
            fc1_w.as_slice_mut().unwrap(),
            fc1_b.as_slice_mut().unwrap(),
            fc2_w.as_slice_mut().unwrap(),
            fc2_b.as_slice_mut().unwrap(),
            out_w.as_slice_mut().unwrap(),
            out_b.as_slice_mut().unwrap(),
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `sum ||W||^2` over weight tensors (biases excluded).
    pub fn weight_norm_sq(&self) -> T {
        self.tensors()
            .iter()
            .zip(Self::IS_WEIGHT)
            .filter(|(_, w)| *w)
            .map(|(t, _)| t.iter().map(|&v| v * v).sum::<T>())
            .sum()
    }

    /// Adds the gradient of `l2 * sum ||W||^2`, i.e. `2 * l2 * W`.
    pub fn add_l2_gradient(&mut self, params: &Parameters<T>, l2: T) {
        let two_l2 = l2 + l2;
        for ((g, p), is_weight) in self.tensors_mut().into_iter().zip(params.tensors()).zip(Self::IS_WEIGHT) {
            if is_weight {
                g.iter_mut().zip(p).for_each(|(g, &p)| *g = *g + two_l2 * p);
            }
        }
    }

    pub fn cast<U: Real>(&self) -> Parameters<U> {
        let c2 = |a: &Array2<T>| a.mapv(|v| U::from(v).unwrap());
        let c1 = |a: &Array1<T>| a.mapv(|v| U::from(v).unwrap());
        Parameters {
            conv1_w: c2(&self.conv1_w),
            conv1_b: c1(&self.conv1_b),
            conv2_w: c2(&self.conv2_w),
            conv2_b: c1(&self.conv2_b),
            fc1_w: c2(&self.fc1_w),
            fc1_b: c1(&self.fc1_b),
            fc2_w: c2(&self.fc2_w),
            fc2_b: c1(&self.fc2_b),
            out_w: c2(&self.out_w),
            out_b: c1(&self.out_b),
        }
    }
}

/// Conv-stage activations of one sample, kept for backpropagation.
#[derive(Debug, Clone)]
struct SampleTrace<T> {
    input: Vec<T>,
    conv1: Vec<T>,
    pool1: Vec<T>,
    pool1_idx: Vec<u32>,
    conv2: Vec<T>,
    pool2_idx: Vec<u32>,
}

/// Everything [`Network::backward`] needs from a training forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    traces: Vec<SampleTrace<T>>,
    flat: Array2<T>,
    hidden1: Array2<T>,
    mask1: Option<Array2<T>>,
    hidden2: Array2<T>,
    mask2: Option<Array2<T>>,
    logits: Array2<T>,
    pub probabilities: Array2<T>,
}

/// Compiled layer geometry for one [`CnnConfig`].
#[derive(Debug, Clone)]
pub struct Network {
    cfg: CnnConfig,
    shapes: StageShapes,
    conv1: ConvGeom,
    pool1: PoolGeom,
    conv2: ConvGeom,
    pool2: PoolGeom,
}

impl Network {
    pub fn new(cfg: &CnnConfig) -> Result<Self, CnnError> {
        let shapes = cfg.shapes()?;
        Ok(Self {
            cfg: cfg.clone(),
            shapes,
            conv1: ConvGeom::new(shapes.input, shapes.conv1, &cfg.conv1),
            pool1: PoolGeom::new(shapes.conv1, shapes.pool1, &cfg.pool1),
            conv2: ConvGeom::new(shapes.pool1, shapes.conv2, &cfg.conv2),
            pool2: PoolGeom::new(shapes.conv2, shapes.pool2, &cfg.pool2),
        })
    }

    pub fn config(&self) -> &CnnConfig {
        &self.cfg
    }

    pub fn shapes(&self) -> &StageShapes {
        &self.shapes
    }

    fn check_params<T: Real>(&self, params: &Parameters<T>) -> Result<(), CnnError> {
        let expected = Parameters::<T>::zeros(&self.cfg)?;
        for ((name, a), b) in Parameters::<T>::NAMES.iter().zip(params.tensors()).zip(expected.tensors()) {
            if a.len() != b.len() {
                return Err(CnnError::ShapeMismatch(format!(
                    "{name}: {} values, expected {}",
                    a.len(),
                    b.len()
                )));
            }
        }
        Ok(())
    }

    fn check_batch<T: Real>(&self, batch: &ArrayView4<T>) -> Result<(), CnnError> {
        let [h, w, c] = self.cfg.input_shape;
        let (_, bh, bw, bc) = batch.dim();
        if (bh, bw, bc) != (h, w, c) {
            return Err(CnnError::ShapeMismatch(format!(
                "batch items are {bh}x{bw}x{bc}, network expects {h}x{w}x{c}"
            )));
        }
        Ok(())
    }

    fn conv_forward<T: Real>(&self, params: &Parameters<T>, sample: ndarray::ArrayView3<T>) -> (SampleTrace<T>, Vec<T>) {
        // [mel][frame][channel] -> [channel][mel][frame]
        let input: Vec<T> = sample.permuted_axes([2, 0, 1]).iter().copied().collect();

        let mut cols = vec![T::zero(); self.conv1.patch_len() * self.conv1.positions()];
        self.conv1.im2col(&input, &mut cols);
        let mut conv1 = vec![T::zero(); self.shapes.conv1.iter().product()];
        self.conv1.forward(params.conv1_w.view(), params.conv1_b.as_slice().unwrap(), &cols, &mut conv1);
        relu_inplace(&mut conv1);

        let n_pool1: usize = self.shapes.pool1.iter().product();
        let mut pool1 = vec![T::zero(); n_pool1];
        let mut pool1_idx = vec![0u32; n_pool1];
        self.pool1.forward(&conv1, &mut pool1, &mut pool1_idx);

        let mut cols2 = vec![T::zero(); self.conv2.patch_len() * self.conv2.positions()];
        self.conv2.im2col(&pool1, &mut cols2);
        let mut conv2 = vec![T::zero(); self.shapes.conv2.iter().product()];
        self.conv2.forward(params.conv2_w.view(), params.conv2_b.as_slice().unwrap(), &cols2, &mut conv2);
        relu_inplace(&mut conv2);

        let mut pool2 = vec![T::zero(); self.shapes.flatten];
        let mut pool2_idx = vec![0u32; self.shapes.flatten];
        self.pool2.forward(&conv2, &mut pool2, &mut pool2_idx);

        (
            SampleTrace {
                input,
                conv1,
                pool1,
                pool1_idx,
                conv2,
                pool2_idx,
            },
            pool2,
        )
    }

    /// Accumulates conv-stage gradients of one sample into `grads`.
    fn conv_backward<T: Real>(
        &self,
        params: &Parameters<T>,
        trace: &SampleTrace<T>,
        d_flat: ndarray::ArrayView1<T>,
        grads: &mut Parameters<T>,
    ) {
        let d_flat = d_flat.to_vec();
        let mut d_conv2 = vec![T::zero(); trace.conv2.len()];
        self.pool2.backward(&d_flat, &trace.pool2_idx, &mut d_conv2);
        relu_backward(&mut d_conv2, &trace.conv2);

        let (f2, p2) = (self.shapes.conv2[0], self.conv2.positions());
        let d_z2 = ArrayView2::from_shape((f2, p2), &d_conv2).unwrap();
        let mut cols2 = vec![T::zero(); self.conv2.patch_len() * p2];
        self.conv2.im2col(&trace.pool1, &mut cols2);
        let cols2_m = ArrayView2::from_shape((self.conv2.patch_len(), p2), &cols2).unwrap();
        ndarray::linalg::general_mat_mul(T::one(), &d_z2, &cols2_m.t(), T::one(), &mut grads.conv2_w);
        grads.conv2_b += &d_z2.sum_axis(Axis(1));
        let d_cols2 = params.conv2_w.t().dot(&d_z2);
        let mut d_pool1 = vec![T::zero(); trace.pool1.len()];
        self.conv2.col2im(d_cols2.as_slice().unwrap(), &mut d_pool1);

        let mut d_conv1 = vec![T::zero(); trace.conv1.len()];
        self.pool1.backward(&d_pool1, &trace.pool1_idx, &mut d_conv1);
        relu_backward(&mut d_conv1, &trace.conv1);

        let (f1, p1) = (self.shapes.conv1[0], self.conv1.positions());
        let d_z1 = ArrayView2::from_shape((f1, p1), &d_conv1).unwrap();
        let mut cols1 = vec![T::zero(); self.conv1.patch_len() * p1];
        self.conv1.im2col(&trace.input, &mut cols1);
        let cols1_m = ArrayView2::from_shape((self.conv1.patch_len(), p1), &cols1).unwrap();
        ndarray::linalg::general_mat_mul(T::one(), &d_z1, &cols1_m.t(), T::one(), &mut grads.conv1_w);
        grads.conv1_b += &d_z1.sum_axis(Axis(1));
    }

    fn conv_stage<T: Real>(
        &self,
        params: &Parameters<T>,
        batch: &ArrayView4<T>,
        keep_traces: bool,
    ) -> (Vec<SampleTrace<T>>, Array2<T>) {
        let samples: Vec<_> = batch.outer_iter().collect();
        let results: Vec<(SampleTrace<T>, Vec<T>)> = samples
            .into_par_iter()
            .map(|sample| self.conv_forward(params, sample))
            .collect();
        let mut flat = Array2::zeros((results.len(), self.shapes.flatten));
        for (mut row, (_, f)) in flat.outer_iter_mut().zip(&results) {
            row.assign(&ndarray::ArrayView1::from(f.as_slice()));
        }
        let traces = if keep_traces {
            results.into_iter().map(|(t, _)| t).collect()
        } else {
            Vec::new()
        };
        (traces, flat)
    }

    /// Inference-mode class probabilities, `[batch][num_classes]`.
    pub fn infer<T: Real>(&self, params: &Parameters<T>, batch: ArrayView4<T>) -> Result<Array2<T>, CnnError> {
        Ok(softmax_rows(&self.logits(params, batch)?))
    }

    /// Inference-mode pre-softmax outputs.
    pub fn logits<T: Real>(&self, params: &Parameters<T>, batch: ArrayView4<T>) -> Result<Array2<T>, CnnError> {
        self.check_params(params)?;
        self.check_batch(&batch)?;
        let (_, flat) = self.conv_stage(params, &batch, false);
        let h1 = dense_relu(&flat, &params.fc1_w, &params.fc1_b);
        let h2 = dense_relu(&h1, &params.fc2_w, &params.fc2_b);
        Ok(dense(&h2, &params.out_w, &params.out_b))
    }

    /// Softmax outputs in either mode. `rng` drives the dropout masks in
    /// `Mode::Train` and is untouched in `Mode::Infer`.
    pub fn forward<T: Real, R: Rng + ?Sized>(
        &self,
        params: &Parameters<T>,
        batch: ArrayView4<T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Array2<T>, CnnError> {
        match mode {
            Mode::Infer => self.infer(params, batch),
            Mode::Train => Ok(self.forward_train(params, batch, rng)?.probabilities),
        }
    }

    /// Training-mode pass that records activations and dropout masks.
    pub fn forward_train<T: Real, R: Rng + ?Sized>(
        &self,
        params: &Parameters<T>,
        batch: ArrayView4<T>,
        rng: &mut R,
    ) -> Result<ForwardCache<T>, CnnError> {
        self.check_params(params)?;
        self.check_batch(&batch)?;
        let (traces, flat) = self.conv_stage(params, &batch, true);

        let mut hidden1 = dense_relu(&flat, &params.fc1_w, &params.fc1_b);
        let mask1 = dropout_mask(hidden1.dim(), self.cfg.dropout_p, rng);
        if let Some(m) = &mask1 {
            hidden1 *= m;
        }
        let mut hidden2 = dense_relu(&hidden1, &params.fc2_w, &params.fc2_b);
        let mask2 = dropout_mask(hidden2.dim(), self.cfg.dropout_p, rng);
        if let Some(m) = &mask2 {
            hidden2 *= m;
        }
        let logits = dense(&hidden2, &params.out_w, &params.out_b);
        let probabilities = softmax_rows(&logits);
        Ok(ForwardCache {
            traces,
            flat,
            hidden1,
            mask1,
            hidden2,
            mask2,
            logits,
            probabilities,
        })
    }

    /// Mean cross-entropy plus `l2 * sum ||W||^2`, and its gradient with
    /// respect to every parameter.
    pub fn backward<T: Real>(
        &self,
        params: &Parameters<T>,
        cache: &ForwardCache<T>,
        labels: &[usize],
        l2: T,
    ) -> Result<(T, Parameters<T>), CnnError> {
        let batch = cache.logits.nrows();
        if labels.len() != batch {
            return Err(CnnError::ShapeMismatch(format!(
                "{} labels for a batch of {batch}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.cfg.num_classes) {
            return Err(CnnError::ShapeMismatch(format!("label {bad} out of range")));
        }
        let n = T::from(batch).unwrap();
        let data_loss = cross_entropy(&cache.logits, labels);
        let loss = data_loss + l2 * params.weight_norm_sq();

        let mut grads = Parameters::<T>::zeros(&self.cfg)?;
        let mut d_logits = cache.probabilities.clone();
        for (mut row, &y) in d_logits.outer_iter_mut().zip(labels) {
            row[y] = row[y] - T::one();
        }
        d_logits.mapv_inplace(|v| v / n);

        let d_h2 = dense_backward(&d_logits, &cache.hidden2, &params.out_w, &mut grads.out_w, &mut grads.out_b);
        let d_z2 = hidden_backward(d_h2, &cache.hidden2, cache.mask2.as_ref());
        let d_h1 = dense_backward(&d_z2, &cache.hidden1, &params.fc2_w, &mut grads.fc2_w, &mut grads.fc2_b);
        let d_z1 = hidden_backward(d_h1, &cache.hidden1, cache.mask1.as_ref());
        let d_flat = dense_backward(&d_z1, &cache.flat, &params.fc1_w, &mut grads.fc1_w, &mut grads.fc1_b);

        let zero = Parameters::<T>::zeros(&self.cfg)?;
        let partials: Vec<Parameters<T>> = cache
            .traces
            .par_chunks(GRAD_CHUNK)
            .enumerate()
            .map(|(chunk, traces)| {
                let mut g = Parameters {
                    conv1_w: zero.conv1_w.clone(),
                    conv1_b: zero.conv1_b.clone(),
                    conv2_w: zero.conv2_w.clone(),
                    conv2_b: zero.conv2_b.clone(),
                    ..Parameters::<T>::empty()
                };
                for (i, trace) in traces.iter().enumerate() {
                    self.conv_backward(params, trace, d_flat.row(chunk * GRAD_CHUNK + i), &mut g);
                }
                g
            })
            .collect();
        for p in partials {
            grads.conv1_w += &p.conv1_w;
            grads.conv1_b += &p.conv1_b;
            grads.conv2_w += &p.conv2_w;
            grads.conv2_b += &p.conv2_b;
        }

        grads.add_l2_gradient(params, l2);
        Ok((loss, grads))
    }

    /// Loss without gradients, evaluated in inference mode.
    pub fn loss<T: Real>(
        &self,
        params: &Parameters<T>,
        batch: ArrayView4<T>,
        labels: &[usize],
        l2: T,
    ) -> Result<T, CnnError> {
        let logits = self.logits(params, batch)?;
        Ok(cross_entropy(&logits, labels) + l2 * params.weight_norm_sq())
    }
}

impl<T: Real> Parameters<T> {
    fn empty() -> Self {
        Self {
            conv1_w: Array2::zeros((0, 0)),
            conv1_b: Array1::zeros(0),
            conv2_w: Array2::zeros((0, 0)),
            conv2_b: Array1::zeros(0),
            fc1_w: Array2::zeros((0, 0)),
            fc1_b: Array1::zeros(0),
            fc2_w: Array2::zeros((0, 0)),
            fc2_b: Array1::zeros(0),
            out_w: Array2::zeros((0, 0)),
            out_b: Array1::zeros(0),
        }
    }
}

fn relu_inplace<T: Real>(v: &mut [T]) {
    v.iter_mut().for_each(|x| {
        if *x < T::zero() {
            *x = T::zero()
        }
    });
}

fn relu_backward<T: Real>(grad: &mut [T], activated: &[T]) {
    grad.iter_mut().zip(activated).for_each(|(g, &a)| {
        if a <= T::zero() {
            *g = T::zero()
        }
    });
}

fn dense<T: Real>(x: &Array2<T>, w: &Array2<T>, b: &Array1<T>) -> Array2<T> {
    let mut z = x.dot(&w.t());
    z += b;
    z
}

fn dense_relu<T: Real>(x: &Array2<T>, w: &Array2<T>, b: &Array1<T>) -> Array2<T> {
    let mut z = dense(x, w, b);
    z.mapv_inplace(|v| if v > T::zero() { v } else { T::zero() });
    z
}

/// Accumulates `dW = dZ^T X`, `db = sum dZ` and returns `dX = dZ W`.
fn dense_backward<T: Real>(
    d_z: &Array2<T>,
    x: &Array2<T>,
    w: &Array2<T>,
    d_w: &mut Array2<T>,
    d_b: &mut Array1<T>,
) -> Array2<T> {
    ndarray::linalg::general_mat_mul(T::one(), &d_z.t(), x, T::one(), d_w);
    *d_b += &d_z.sum_axis(Axis(0));
    d_z.dot(w)
}

/// Back through (optional) dropout scaling and ReLU. `output` is the layer's
/// value after dropout; an element contributes only where it is positive.
fn hidden_backward<T: Real>(mut d: Array2<T>, output: &Array2<T>, mask: Option<&Array2<T>>) -> Array2<T> {
    if let Some(m) = mask {
        d *= m;
    }
    ndarray::Zip::from(&mut d).and(output).for_each(|g, &o| {
        if o <= T::zero() {
            *g = T::zero()
        }
    });
    d
}

fn dropout_mask<T: Real, R: Rng + ?Sized>(dim: (usize, usize), p: f64, rng: &mut R) -> Option<Array2<T>> {
    if p <= 0.0 {
        return None;
    }
    let scale = T::from(1.0 / (1.0 - p)).unwrap();
    Some(Array2::from_shape_simple_fn(dim, || {
        if unit_f64(rng) < p {
            T::zero()
        } else {
            scale
        }
    }))
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows<T: Real>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.outer_iter_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: T = row.iter().copied().sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Mean of `-log softmax(logits)[label]` over rows.
pub fn cross_entropy<T: Real>(logits: &Array2<T>, labels: &[usize]) -> T {
    let mut total = T::zero();
    for (row, &y) in logits.outer_iter().zip(labels) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        total = total + (lse - row[y]);
    }
    total / T::from(labels.len().max(1)).unwrap()
}

#[cfg(test)]
pub(crate) mod tests_support {
    use crate::cnn::config::{CnnConfig, ConvSpec, PoolSpec};

    /// 12x15x2 input, 4 filters, 8 hidden units, 3 classes, no dropout.
    pub(crate) fn tiny_config() -> CnnConfig {
        CnnConfig {
            input_shape: [12, 15, 2],
            conv1: ConvSpec { filters: 4, kernel: [9, 3], stride: [1, 1] },
            pool1: PoolSpec { shape: [2, 2], stride: [1, 2] },
            conv2: ConvSpec { filters: 4, kernel: [1, 3], stride: [1, 1] },
            pool2: PoolSpec { shape: [1, 2], stride: [1, 2] },
            fc_width: 8,
            num_classes: 3,
            dropout_p: 0.0,
        }
    }
}
