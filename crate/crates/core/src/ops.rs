//! Raw forward/backward kernels over row-major f32 buffers.
//!
//! The [`crate::tape::Tape`] wires these into the autodiff graph; everything
//! here is a pure function. Inner loops run over the fastest-varying axis so
//! the compiler can vectorize them.

use alloc::vec::Vec;

use crate::error::{Result, TensorError};

// ---------------------------------------------------------------------------
// convolution geometry

#[derive(Debug, Clone, Copy)]
pub struct ConvDims {
    pub batch: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

pub fn conv_out_extent(extent: usize, k: usize, stride: usize, pad: usize) -> usize {
    (extent + 2 * pad).saturating_sub(k) / stride + 1
}

pub fn conv2d_dims(
    x_shape: &[usize],
    w_shape: &[usize],
    stride: usize,
    pad: usize,
) -> Result<ConvDims> {
    if x_shape.len() != 4 {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            axis: None,
            expected: vec![0, 0, 0, 0],
            got: x_shape.to_vec(),
        });
    }
    if w_shape.len() != 4 || w_shape[2] != w_shape[3] {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d(weight)",
            axis: None,
            expected: vec![w_shape.first().copied().unwrap_or(0), x_shape[1], 0, 0],
            got: w_shape.to_vec(),
        });
    }
    let k = w_shape[2];
    if k % 2 == 0 {
        return Err(TensorError::Invalid(alloc::format!(
            "conv2d: kernel size {k} must be odd"
        )));
    }
    if w_shape[1] != x_shape[1] {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            axis: Some(1),
            expected: vec![w_shape[0], x_shape[1], k, k],
            got: w_shape.to_vec(),
        });
    }
    if stride == 0 {
        return Err(TensorError::Invalid("conv2d: stride must be positive".into()));
    }
    let (h, w) = (x_shape[2], x_shape[3]);
    if h + 2 * pad < k || w + 2 * pad < k {
        return Err(TensorError::EmptySpatial { op: "conv2d", h: 0, w: 0 });
    }
    let h_out = conv_out_extent(h, k, stride, pad);
    let w_out = conv_out_extent(w, k, stride, pad);
    Ok(ConvDims {
        batch: x_shape[0],
        c_in: x_shape[1],
        h,
        w,
        c_out: w_shape[0],
        k,
        stride,
        pad,
        h_out,
        w_out,
    })
}

/// Valid output-column range for one kernel column: all `ow` in `lo..hi`
/// with `ow*stride + k_off - pad` inside `0..len_in`.
#[inline]
fn out_range(len_in: usize, len_out: usize, k_off: usize, pad: usize, stride: usize) -> (usize, usize) {
    let lo = if k_off >= pad {
        0
    } else {
        (pad - k_off).div_ceil(stride)
    };
    let hi = if len_in + pad > k_off {
        ((len_in + pad - k_off - 1) / stride + 1).min(len_out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Cross-correlation; one accumulation pass per (co, ci, kh, kw) so the
/// inner loop is a contiguous row saxpy at stride 1.
pub fn conv2d_forward(x: &[f32], wt: &[f32], d: &ConvDims) -> Vec<f32> {
    let mut y = vec![0.0f32; d.batch * d.c_out * d.h_out * d.w_out];
    let x_plane = d.h * d.w;
    let y_plane = d.h_out * d.w_out;
    for b in 0..d.batch {
        for co in 0..d.c_out {
            let y_base = (b * d.c_out + co) * y_plane;
            for ci in 0..d.c_in {
                let x_base = (b * d.c_in + ci) * x_plane;
                let w_base = (co * d.c_in + ci) * d.k * d.k;
                accumulate_conv_rows(
                    &x[x_base..x_base + x_plane],
                    &wt[w_base..w_base + d.k * d.k],
                    &mut y[y_base..y_base + y_plane],
                    d,
                );
            }
        }
    }
    y
}

#[inline]
fn accumulate_conv_rows(x: &[f32], wt: &[f32], y: &mut [f32], d: &ConvDims) {
    for kh in 0..d.k {
        let (oh_lo, oh_hi) = out_range(d.h, d.h_out, kh, d.pad, d.stride);
        for kw in 0..d.k {
            let wv = wt[kh * d.k + kw];
            if wv == 0.0 {
                continue;
            }
            let (ow_lo, ow_hi) = out_range(d.w, d.w_out, kw, d.pad, d.stride);
            for oh in oh_lo..oh_hi {
                let ih = oh * d.stride + kh - d.pad;
                let y_row = &mut y[oh * d.w_out + ow_lo..oh * d.w_out + ow_hi];
                let x_off = ih * d.w + ow_lo * d.stride + kw - d.pad;
                if d.stride == 1 {
                    let x_row = &x[x_off..x_off + y_row.len()];
                    for (yv, xv) in y_row.iter_mut().zip(x_row) {
                        *yv += wv * xv;
                    }
                } else {
                    for (i, yv) in y_row.iter_mut().enumerate() {
                        *yv += wv * x[x_off + i * d.stride];
                    }
                }
            }
        }
    }
}

pub fn conv2d_backward_input(dy: &[f32], wt: &[f32], d: &ConvDims) -> Vec<f32> {
    let mut dx = vec![0.0f32; d.batch * d.c_in * d.h * d.w];
    let x_plane = d.h * d.w;
    let y_plane = d.h_out * d.w_out;
    for b in 0..d.batch {
        for co in 0..d.c_out {
            let dy_base = (b * d.c_out + co) * y_plane;
            for ci in 0..d.c_in {
                let dx_base = (b * d.c_in + ci) * x_plane;
                let w_base = (co * d.c_in + ci) * d.k * d.k;
                for kh in 0..d.k {
                    let (oh_lo, oh_hi) = out_range(d.h, d.h_out, kh, d.pad, d.stride);
                    for kw in 0..d.k {
                        let wv = wt[w_base + kh * d.k + kw];
                        if wv == 0.0 {
                            continue;
                        }
                        let (ow_lo, ow_hi) = out_range(d.w, d.w_out, kw, d.pad, d.stride);
                        for oh in oh_lo..oh_hi {
                            let ih = oh * d.stride + kh - d.pad;
                            let dy_row = &dy[dy_base + oh * d.w_out + ow_lo
                                ..dy_base + oh * d.w_out + ow_hi];
                            let dx_off = dx_base + ih * d.w + ow_lo * d.stride + kw - d.pad;
                            if d.stride == 1 {
                                let dx_row = &mut dx[dx_off..dx_off + dy_row.len()];
                                for (dxv, dyv) in dx_row.iter_mut().zip(dy_row) {
                                    *dxv += wv * dyv;
                                }
                            } else {
                                for (i, dyv) in dy_row.iter().enumerate() {
                                    dx[dx_off + i * d.stride] += wv * dyv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

pub fn conv2d_backward_weight(dy: &[f32], x: &[f32], d: &ConvDims) -> Vec<f32> {
    let mut dw = vec![0.0f32; d.c_out * d.c_in * d.k * d.k];
    let x_plane = d.h * d.w;
    let y_plane = d.h_out * d.w_out;
    for b in 0..d.batch {
        for co in 0..d.c_out {
            let dy_base = (b * d.c_out + co) * y_plane;
            for ci in 0..d.c_in {
                let x_base = (b * d.c_in + ci) * x_plane;
                let w_base = (co * d.c_in + ci) * d.k * d.k;
                for kh in 0..d.k {
                    let (oh_lo, oh_hi) = out_range(d.h, d.h_out, kh, d.pad, d.stride);
                    for kw in 0..d.k {
                        let (ow_lo, ow_hi) = out_range(d.w, d.w_out, kw, d.pad, d.stride);
                        let mut acc = 0.0f32;
                        for oh in oh_lo..oh_hi {
                            let ih = oh * d.stride + kh - d.pad;
                            let dy_row = &dy[dy_base + oh * d.w_out + ow_lo
                                ..dy_base + oh * d.w_out + ow_hi];
                            let x_off = x_base + ih * d.w + ow_lo * d.stride + kw - d.pad;
                            if d.stride == 1 {
                                let x_row = &x[x_off..x_off + dy_row.len()];
                                for (dyv, xv) in dy_row.iter().zip(x_row) {
                                    acc += dyv * xv;
                                }
                            } else {
                                for (i, dyv) in dy_row.iter().enumerate() {
                                    acc += dyv * x[x_off + i * d.stride];
                                }
                            }
                        }
                        dw[w_base + kh * d.k + kw] += acc;
                    }
                }
            }
        }
    }
    dw
}

// ---------------------------------------------------------------------------
// depthwise: weight [C, 1, k, k], each channel convolved independently

pub fn depthwise_dims(
    x_shape: &[usize],
    w_shape: &[usize],
    stride: usize,
    pad: usize,
) -> Result<ConvDims> {
    if x_shape.len() != 4 || w_shape.len() != 4 {
        return Err(TensorError::ShapeMismatch {
            op: "depthwise_conv2d",
            axis: None,
            expected: vec![0, 0, 0, 0],
            got: if x_shape.len() != 4 { x_shape.to_vec() } else { w_shape.to_vec() },
        });
    }
    if w_shape[0] != x_shape[1] || w_shape[1] != 1 {
        return Err(TensorError::ShapeMismatch {
            op: "depthwise_conv2d",
            axis: Some(0),
            expected: vec![x_shape[1], 1, w_shape[2], w_shape[3]],
            got: w_shape.to_vec(),
        });
    }
    let mut d = conv2d_dims(
        &[x_shape[0], 1, x_shape[2], x_shape[3]],
        &[1, 1, w_shape[2], w_shape[3]],
        stride,
        pad,
    )?;
    d.batch = x_shape[0];
    d.c_in = x_shape[1];
    d.c_out = x_shape[1];
    Ok(d)
}

pub fn depthwise_forward(x: &[f32], wt: &[f32], d: &ConvDims) -> Vec<f32> {
    let mut y = vec![0.0f32; d.batch * d.c_out * d.h_out * d.w_out];
    let x_plane = d.h * d.w;
    let y_plane = d.h_out * d.w_out;
    let per = ConvDims { c_in: 1, c_out: 1, ..*d };
    for b in 0..d.batch {
        for c in 0..d.c_in {
            let x_base = (b * d.c_in + c) * x_plane;
            let y_base = (b * d.c_in + c) * y_plane;
            accumulate_conv_rows(
                &x[x_base..x_base + x_plane],
                &wt[c * d.k * d.k..(c + 1) * d.k * d.k],
                &mut y[y_base..y_base + y_plane],
                &per,
            );
        }
    }
    y
}

pub fn depthwise_backward_input(dy: &[f32], wt: &[f32], d: &ConvDims) -> Vec<f32> {
    let per = ConvDims { batch: 1, c_in: 1, c_out: 1, ..*d };
    let x_plane = d.h * d.w;
    let y_plane = d.h_out * d.w_out;
    let mut dx = vec![0.0f32; d.batch * d.c_in * x_plane];
    for b in 0..d.batch {
        for c in 0..d.c_in {
            let dy_base = (b * d.c_in + c) * y_plane;
            let dx_base = (b * d.c_in + c) * x_plane;
            let part = conv2d_backward_input(
                &dy[dy_base..dy_base + y_plane],
                &wt[c * d.k * d.k..(c + 1) * d.k * d.k],
                &per,
            );
            dx[dx_base..dx_base + x_plane].copy_from_slice(&part);
        }
    }
    dx
}

pub fn depthwise_backward_weight(dy: &[f32], x: &[f32], d: &ConvDims) -> Vec<f32> {
    let per = ConvDims { batch: 1, c_in: 1, c_out: 1, ..*d };
    let x_plane = d.h * d.w;
    let y_plane = d.h_out * d.w_out;
    let mut dw = vec![0.0f32; d.c_in * d.k * d.k];
    for b in 0..d.batch {
        for c in 0..d.c_in {
            let dy_base = (b * d.c_in + c) * y_plane;
            let x_base = (b * d.c_in + c) * x_plane;
            let part = conv2d_backward_weight(
                &dy[dy_base..dy_base + y_plane],
                &x[x_base..x_base + x_plane],
                &per,
            );
            for (acc, v) in dw[c * d.k * d.k..(c + 1) * d.k * d.k].iter_mut().zip(&part) {
                *acc += v;
            }
        }
    }
    dw
}

// ---------------------------------------------------------------------------
// pointwise: weight [Cout, Cin, 1, 1]; per-pixel channel mixing

pub fn pointwise_forward(
    x: &[f32],
    wt: &[f32],
    batch: usize,
    c_in: usize,
    c_out: usize,
    plane: usize,
) -> Vec<f32> {
    let mut y = vec![0.0f32; batch * c_out * plane];
    for b in 0..batch {
        for co in 0..c_out {
            let y_plane = &mut y[(b * c_out + co) * plane..(b * c_out + co + 1) * plane];
            for ci in 0..c_in {
                let wv = wt[co * c_in + ci];
                if wv == 0.0 {
                    continue;
                }
                let x_plane = &x[(b * c_in + ci) * plane..(b * c_in + ci + 1) * plane];
                for (yv, xv) in y_plane.iter_mut().zip(x_plane) {
                    *yv += wv * xv;
                }
            }
        }
    }
    y
}

pub fn pointwise_backward_input(
    dy: &[f32],
    wt: &[f32],
    batch: usize,
    c_in: usize,
    c_out: usize,
    plane: usize,
) -> Vec<f32> {
    let mut dx = vec![0.0f32; batch * c_in * plane];
    for b in 0..batch {
        for ci in 0..c_in {
            let dx_plane = &mut dx[(b * c_in + ci) * plane..(b * c_in + ci + 1) * plane];
            for co in 0..c_out {
                let wv = wt[co * c_in + ci];
                if wv == 0.0 {
                    continue;
                }
                let dy_plane = &dy[(b * c_out + co) * plane..(b * c_out + co + 1) * plane];
                for (dxv, dyv) in dx_plane.iter_mut().zip(dy_plane) {
                    *dxv += wv * dyv;
                }
            }
        }
    }
    dx
}

pub fn pointwise_backward_weight(
    dy: &[f32],
    x: &[f32],
    batch: usize,
    c_in: usize,
    c_out: usize,
    plane: usize,
) -> Vec<f32> {
    let mut dw = vec![0.0f32; c_out * c_in];
    for b in 0..batch {
        for co in 0..c_out {
            let dy_plane = &dy[(b * c_out + co) * plane..(b * c_out + co + 1) * plane];
            for ci in 0..c_in {
                let x_plane = &x[(b * c_in + ci) * plane..(b * c_in + ci + 1) * plane];
                let mut acc = 0.0f32;
                for (dyv, xv) in dy_plane.iter().zip(x_plane) {
                    acc += dyv * xv;
                }
                dw[co * c_in + ci] += acc;
            }
        }
    }
    dw
}

// ---------------------------------------------------------------------------
// linear over the trailing axis: x [R, N] x w [M, N] -> [R, M]

pub fn linear_forward(x: &[f32], wt: &[f32], bias: Option<&[f32]>, rows: usize, n: usize, m: usize) -> Vec<f32> {
    let mut y = vec![0.0f32; rows * m];
    for r in 0..rows {
        let x_row = &x[r * n..(r + 1) * n];
        let y_row = &mut y[r * m..(r + 1) * m];
        for (j, yv) in y_row.iter_mut().enumerate() {
            let w_row = &wt[j * n..(j + 1) * n];
            let mut acc = 0.0f32;
            for (xv, wv) in x_row.iter().zip(w_row) {
                acc += xv * wv;
            }
            *yv = acc + bias.map_or(0.0, |b| b[j]);
        }
    }
    y
}

pub fn linear_backward_input(dy: &[f32], wt: &[f32], rows: usize, n: usize, m: usize) -> Vec<f32> {
    let mut dx = vec![0.0f32; rows * n];
    for r in 0..rows {
        let dy_row = &dy[r * m..(r + 1) * m];
        let dx_row = &mut dx[r * n..(r + 1) * n];
        for (j, dyv) in dy_row.iter().enumerate() {
            if *dyv == 0.0 {
                continue;
            }
            let w_row = &wt[j * n..(j + 1) * n];
            for (dxv, wv) in dx_row.iter_mut().zip(w_row) {
                *dxv += dyv * wv;
            }
        }
    }
    dx
}

pub fn linear_backward_weight(dy: &[f32], x: &[f32], rows: usize, n: usize, m: usize) -> Vec<f32> {
    let mut dw = vec![0.0f32; m * n];
    for r in 0..rows {
        let dy_row = &dy[r * m..(r + 1) * m];
        let x_row = &x[r * n..(r + 1) * n];
        for (j, dyv) in dy_row.iter().enumerate() {
            if *dyv == 0.0 {
                continue;
            }
            let dw_row = &mut dw[j * n..(j + 1) * n];
            for (dwv, xv) in dw_row.iter_mut().zip(x_row) {
                *dwv += dyv * xv;
            }
        }
    }
    dw
}

pub fn linear_backward_bias(dy: &[f32], rows: usize, m: usize) -> Vec<f32> {
    let mut db = vec![0.0f32; m];
    for r in 0..rows {
        for (dbv, dyv) in db.iter_mut().zip(&dy[r * m..(r + 1) * m]) {
            *dbv += dyv;
        }
    }
    db
}

// ---------------------------------------------------------------------------
// group normalization

pub struct GroupNormCache {
    pub mean: Vec<f32>,
    pub inv_std: Vec<f32>,
}

/// Per-(batch, group) standardization followed by per-channel affine.
/// Variance is the biased estimator.
pub fn group_norm_forward(
    x: &[f32],
    gamma: &[f32],
    beta: &[f32],
    batch: usize,
    channels: usize,
    plane: usize,
    groups: usize,
    eps: f32,
) -> (Vec<f32>, GroupNormCache) {
    let cg = channels / groups;
    let group_len = cg * plane;
    let mut y = vec![0.0f32; x.len()];
    let mut mean = vec![0.0f32; batch * groups];
    let mut inv_std = vec![0.0f32; batch * groups];
    for b in 0..batch {
        for g in 0..groups {
            let base = (b * channels + g * cg) * plane;
            let xs = &x[base..base + group_len];
            let m = xs.iter().sum::<f32>() / group_len as f32;
            let var = xs.iter().map(|v| (v - m) * (v - m)).sum::<f32>() / group_len as f32;
            let inv = 1.0 / libm::sqrtf(var + eps);
            mean[b * groups + g] = m;
            inv_std[b * groups + g] = inv;
            for c_off in 0..cg {
                let c = g * cg + c_off;
                let (ga, be) = (gamma[c], beta[c]);
                let row = base + c_off * plane;
                for i in 0..plane {
                    y[row + i] = (x[row + i] - m) * inv * ga + be;
                }
            }
        }
    }
    (y, GroupNormCache { mean, inv_std })
}

/// Gradients for input, gamma, beta.
pub fn group_norm_backward(
    dy: &[f32],
    x: &[f32],
    gamma: &[f32],
    cache: &GroupNormCache,
    batch: usize,
    channels: usize,
    plane: usize,
    groups: usize,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let cg = channels / groups;
    let group_len = (cg * plane) as f32;
    let mut dx = vec![0.0f32; x.len()];
    let mut dgamma = vec![0.0f32; channels];
    let mut dbeta = vec![0.0f32; channels];
    for b in 0..batch {
        for g in 0..groups {
            let m = cache.mean[b * groups + g];
            let inv = cache.inv_std[b * groups + g];
            let base = (b * channels + g * cg) * plane;
            // first pass: group-level sums of dxhat and dxhat*xhat
            let mut sum_dxhat = 0.0f32;
            let mut sum_dxhat_xhat = 0.0f32;
            for c_off in 0..cg {
                let c = g * cg + c_off;
                let row = base + c_off * plane;
                let ga = gamma[c];
                for i in 0..plane {
                    let xhat = (x[row + i] - m) * inv;
                    let dyv = dy[row + i];
                    dgamma[c] += dyv * xhat;
                    dbeta[c] += dyv;
                    let dxhat = dyv * ga;
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                }
            }
            let mean_dxhat = sum_dxhat / group_len;
            let mean_dxhat_xhat = sum_dxhat_xhat / group_len;
            for c_off in 0..cg {
                let c = g * cg + c_off;
                let row = base + c_off * plane;
                let ga = gamma[c];
                for i in 0..plane {
                    let xhat = (x[row + i] - m) * inv;
                    let dxhat = dy[row + i] * ga;
                    dx[row + i] = inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

// ---------------------------------------------------------------------------
// elementwise and broadcast arithmetic

/// Largest f32 strictly below 1.0; sigmoid outputs are clamped into
/// `[MIN_POSITIVE, SIGMOID_CEIL]` so the gate stays strictly inside (0, 1).
pub const SIGMOID_CEIL: f32 = 1.0 - f32::EPSILON / 2.0;

#[inline]
pub fn sigmoid_scalar(x: f32) -> f32 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + libm::expf(-x))
    } else {
        let e = libm::expf(x);
        e / (1.0 + e)
    };
    s.clamp(f32::MIN_POSITIVE, SIGMOID_CEIL)
}

/// ln(1 + e^x) without overflow.
#[inline]
pub fn softplus(x: f32) -> f32 {
    if x > 20.0 {
        x
    } else if x < -20.0 {
        libm::expf(x)
    } else {
        libm::logf(1.0 + libm::expf(x))
    }
}

/// Right-aligned broadcast of two shapes; each axis must match or be 1.
pub fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let ea = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let eb = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        out[i] = if ea == eb {
            ea
        } else if ea == 1 {
            eb
        } else if eb == 1 {
            ea
        } else {
            return Err(TensorError::NotBroadcastable {
                op,
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        };
    }
    Ok(out)
}

/// Row-major strides with 0 on broadcast axes, right-aligned to `out_rank`.
fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let offset = rank - shape.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1usize;
    for i in (0..shape.len()).rev() {
        strides[offset + i] = if shape[i] == 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Applies `f` elementwise over the broadcast of `a` and `b`.
pub fn broadcast_zip(
    a: &[f32],
    a_shape: &[usize],
    b: &[f32],
    b_shape: &[usize],
    out_shape: &[usize],
    f: impl Fn(f32, f32) -> f32,
) -> Vec<f32> {
    let numel: usize = out_shape.iter().product();
    // fast paths: identical shapes, and scalar rhs/lhs
    if a_shape == b_shape {
        return a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect();
    }
    if b.len() == 1 {
        return a.iter().map(|x| f(*x, b[0])).collect();
    }
    if a.len() == 1 {
        return b.iter().map(|y| f(a[0], *y)).collect();
    }
    let sa = broadcast_strides(a_shape, out_shape);
    let sb = broadcast_strides(b_shape, out_shape);
    let rank = out_shape.len();
    let mut idx = vec![0usize; rank];
    let mut oa = 0usize;
    let mut ob = 0usize;
    let mut out = Vec::with_capacity(numel);
    for _ in 0..numel {
        out.push(f(a[oa], b[ob]));
        // odometer increment
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            oa += sa[ax];
            ob += sb[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
            oa -= sa[ax] * out_shape[ax];
            ob -= sb[ax] * out_shape[ax];
        }
    }
    out
}

/// Sums `src` (shape `from`) down to shape `to` (right-aligned; every `to`
/// axis either matches or is 1). Used to push gradients through broadcasts.
pub fn reduce_to_shape(src: &[f32], from: &[usize], to: &[usize]) -> Vec<f32> {
    if from == to {
        return src.to_vec();
    }
    let to_numel: usize = to.iter().product();
    let mut out = vec![0.0f32; to_numel];
    if to_numel == 1 {
        out[0] = src.iter().sum();
        return out;
    }
    let strides = broadcast_strides(to, from);
    let rank = from.len();
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for v in src {
        out[off] += v;
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += strides[ax];
            if idx[ax] < from[ax] {
                break;
            }
            idx[ax] = 0;
            off -= strides[ax] * from[ax];
        }
    }
    out
}
