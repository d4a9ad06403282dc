//! Per-sample convolution and pooling kernels on channel-first buffers.

use ndarray::{ArrayView2, ArrayViewMut2};

use super::config::{ConvSpec, PoolSpec};
use super::Real;

/// Geometry of one valid (unpadded) convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub in_shape: [usize; 3],
    pub out_shape: [usize; 3],
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
}

impl ConvGeom {
    pub fn new(in_shape: [usize; 3], out_shape: [usize; 3], spec: &ConvSpec) -> Self {
        Self {
            in_shape,
            out_shape,
            kernel: spec.kernel,
            stride: spec.stride,
        }
    }

    /// Rows of the unrolled input: `channels * kh * kw`.
    pub fn patch_len(&self) -> usize {
        self.in_shape[0] * self.kernel[0] * self.kernel[1]
    }

    pub fn positions(&self) -> usize {
        self.out_shape[1] * self.out_shape[2]
    }

    /// Unrolls `input` into `[patch_len][positions]`.
    pub fn im2col<T: Real>(&self, input: &[T], cols: &mut [T]) {
        let [_, h, w] = self.in_shape;
        let [_, oh, ow] = self.out_shape;
        let [kh, kw] = self.kernel;
        let [sh, sw] = self.stride;
        let p = oh * ow;
        for c in 0..self.in_shape[0] {
            for i in 0..kh {
                for j in 0..kw {
                    let row = ((c * kh + i) * kw + j) * p;
                    for oy in 0..oh {
                        let src = c * h * w + (oy * sh + i) * w + j;
                        let dst = row + oy * ow;
                        if sw == 1 {
                            cols[dst..dst + ow].copy_from_slice(&input[src..src + ow]);
                        } else {
                            for ox in 0..ow {
                                cols[dst + ox] = input[src + ox * sw];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Scatters `[patch_len][positions]` gradients back onto the input.
    pub fn col2im<T: Real>(&self, cols: &[T], d_input: &mut [T]) {
        let [_, h, w] = self.in_shape;
        let [_, oh, ow] = self.out_shape;
        let [kh, kw] = self.kernel;
        let [sh, sw] = self.stride;
        let p = oh * ow;
        for c in 0..self.in_shape[0] {
            for i in 0..kh {
                for j in 0..kw {
                    let row = ((c * kh + i) * kw + j) * p;
                    for oy in 0..oh {
                        let dst = c * h * w + (oy * sh + i) * w + j;
                        let src = row + oy * ow;
                        for ox in 0..ow {
                            d_input[dst + ox * sw] = d_input[dst + ox * sw] + cols[src + ox];
                        }
                    }
                }
            }
        }
    }

    /// `out[f][p] = bias[f] + sum_k weights[f][k] * cols[k][p]`
    pub fn forward<T: Real>(&self, weights: ArrayView2<T>, bias: &[T], cols: &[T], out: &mut [T]) {
        let cols = ArrayView2::from_shape((self.patch_len(), self.positions()), cols).expect("cols shape");
        let mut out_m =
            ArrayViewMut2::from_shape((self.out_shape[0], self.positions()), out).expect("out shape");
        ndarray::linalg::general_mat_mul(T::one(), &weights, &cols, T::zero(), &mut out_m);
        for (mut row, &b) in out_m.outer_iter_mut().zip(bias) {
            row.mapv_inplace(|v| v + b);
        }
    }
}

/// Max pooling that records the flat input index of every maximum.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PoolGeom {
    pub in_shape: [usize; 3],
    pub out_shape: [usize; 3],
    pub window: [usize; 2],
    pub stride: [usize; 2],
}

impl PoolGeom {
    pub fn new(in_shape: [usize; 3], out_shape: [usize; 3], spec: &PoolSpec) -> Self {
        Self {
            in_shape,
            out_shape,
            window: spec.shape,
            stride: spec.stride,
        }
    }

    pub fn forward<T: Real>(&self, input: &[T], out: &mut [T], argmax: &mut [u32]) {
        let [c, h, w] = self.in_shape;
        let [_, oh, ow] = self.out_shape;
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_idx = 0usize;
                    for i in 0..self.window[0] {
                        let y = oy * self.stride[0] + i;
                        for j in 0..self.window[1] {
                            let x = ox * self.stride[1] + j;
                            let idx = ch * h * w + y * w + x;
                            // first maximum wins on ties
                            if input[idx] > best {
                                best = input[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = (ch * oh + oy) * ow + ox;
                    out[o] = best;
                    argmax[o] = best_idx as u32;
                }
            }
        }
    }

    pub fn backward<T: Real>(&self, d_out: &[T], argmax: &[u32], d_input: &mut [T]) {
        for (&g, &idx) in d_out.iter().zip(argmax) {
            let idx = idx as usize;
            d_input[idx] = d_input[idx] + g;
        }
    }
}
