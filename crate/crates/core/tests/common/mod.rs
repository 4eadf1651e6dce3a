//! Shared oracles for integration tests: naive reference kernels (f32 for
//! value comparison, f64 for finite differences) and a central-difference
//! gradient checker. Everything here stays independent of the library's
//! kernels — the f64 references are direct transcriptions of the textbook
//! definitions.

#![allow(dead_code)]

use rand::distributions::Uniform;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use spikegate_core::{NodeId, SpikeTensor, Tape};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform values with |v| in [lo_mag, hi_mag], random sign.
pub fn signed_uniform(shape: &[usize], lo_mag: f32, hi_mag: f32, rng: &mut ChaCha8Rng) -> SpikeTensor {
    let dist = Uniform::new(lo_mag, hi_mag);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = dist.sample(rng);
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    SpikeTensor::from_vec(shape, data).unwrap()
}

// ---------------------------------------------------------------------------
// f32 references for forward-value oracles

/// Direct six-loop cross-correlation, the reference for conv2d.
pub fn naive_conv2d(x: &SpikeTensor, w: &SpikeTensor, stride: usize, pad: usize) -> SpikeTensor {
    let (b, cin, h, wid) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let h_out = (h + 2 * pad - k) / stride + 1;
    let w_out = (wid + 2 * pad - k) / stride + 1;
    let mut y = vec![0.0f32; b * cout * h_out * w_out];
    for bi in 0..b {
        for co in 0..cout {
            for oh in 0..h_out {
                for ow in 0..w_out {
                    let mut acc = 0.0f32;
                    for ci in 0..cin {
                        for kh in 0..k {
                            for kw in 0..k {
                                let ih = (oh * stride + kh) as isize - pad as isize;
                                let iw = (ow * stride + kw) as isize - pad as isize;
                                if ih < 0 || iw < 0 || ih >= h as isize || iw >= wid as isize {
                                    continue;
                                }
                                let xv = x.data()
                                    [((bi * cin + ci) * h + ih as usize) * wid + iw as usize];
                                let wv = w.data()[((co * cin + ci) * k + kh) * k + kw];
                                acc += xv * wv;
                            }
                        }
                    }
                    y[((bi * cout + co) * h_out + oh) * w_out + ow] = acc;
                }
            }
        }
    }
    SpikeTensor::from_vec(&[b, cout, h_out, w_out], y).unwrap()
}

/// Naive dot-product linear layer over the trailing axis.
pub fn naive_linear(x: &SpikeTensor, w: &SpikeTensor, bias: Option<&SpikeTensor>) -> SpikeTensor {
    let n = *x.shape().last().unwrap();
    let m = w.shape()[0];
    let rows = x.numel() / n;
    let mut y = vec![0.0f32; rows * m];
    for r in 0..rows {
        for j in 0..m {
            let mut acc = 0.0f32;
            for i in 0..n {
                acc += x.data()[r * n + i] * w.data()[j * n + i];
            }
            y[r * m + j] = acc + bias.map_or(0.0, |b| b.data()[j]);
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = m;
    SpikeTensor::from_vec(&shape, y).unwrap()
}

pub fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}

// ---------------------------------------------------------------------------
// f64 reference forwards for finite differences

/// Shape + flat f64 data, the operand type of the reference functions.
#[derive(Clone)]
pub struct Ref64 {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Ref64 {
    pub fn from_tensor(t: &SpikeTensor) -> Self {
        Ref64 {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&v| v as f64).collect(),
        }
    }
}

pub fn ref_conv2d(x: &Ref64, w: &Ref64, stride: usize, pad: usize) -> Ref64 {
    let (b, cin, h, wid) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (cout, k) = (w.shape[0], w.shape[2]);
    let groups_depthwise = w.shape[1] == 1 && cin == cout && cin > 1;
    let h_out = (h + 2 * pad - k) / stride + 1;
    let w_out = (wid + 2 * pad - k) / stride + 1;
    let mut y = vec![0.0f64; b * cout * h_out * w_out];
    for bi in 0..b {
        for co in 0..cout {
            for oh in 0..h_out {
                for ow in 0..w_out {
                    let mut acc = 0.0f64;
                    let ci_range = if groups_depthwise { co..co + 1 } else { 0..cin };
                    for ci in ci_range {
                        for kh in 0..k {
                            for kw in 0..k {
                                let ih = (oh * stride + kh) as isize - pad as isize;
                                let iw = (ow * stride + kw) as isize - pad as isize;
                                if ih < 0 || iw < 0 || ih >= h as isize || iw >= wid as isize {
                                    continue;
                                }
                                let xv =
                                    x.data[((bi * cin + ci) * h + ih as usize) * wid + iw as usize];
                                let wi = if groups_depthwise { 0 } else { ci };
                                let wv = w.data[((co * w.shape[1] + wi) * k + kh) * k + kw];
                                acc += xv * wv;
                            }
                        }
                    }
                    y[((bi * cout + co) * h_out + oh) * w_out + ow] = acc;
                }
            }
        }
    }
    Ref64 {
        shape: vec![b, cout, h_out, w_out],
        data: y,
    }
}

pub fn ref_linear(x: &Ref64, w: &Ref64, bias: Option<&Ref64>) -> Ref64 {
    let n = *x.shape.last().unwrap();
    let m = w.shape[0];
    let rows = x.data.len() / n;
    let mut y = vec![0.0f64; rows * m];
    for r in 0..rows {
        for j in 0..m {
            let mut acc = 0.0f64;
            for i in 0..n {
                acc += x.data[r * n + i] * w.data[j * n + i];
            }
            y[r * m + j] = acc + bias.map_or(0.0, |b| b.data[j]);
        }
    }
    let mut shape = x.shape.clone();
    *shape.last_mut().unwrap() = m;
    Ref64 { shape, data: y }
}

pub fn ref_group_norm(x: &Ref64, gamma: &Ref64, beta: &Ref64, groups: usize, eps: f64) -> Ref64 {
    let (b, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let cg = c / groups;
    let plane = h * w;
    let glen = (cg * plane) as f64;
    let mut y = vec![0.0f64; x.data.len()];
    for bi in 0..b {
        for g in 0..groups {
            let base = (bi * c + g * cg) * plane;
            let xs = &x.data[base..base + cg * plane];
            let mean = xs.iter().sum::<f64>() / glen;
            let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / glen;
            let inv = 1.0 / (var + eps).sqrt();
            for c_off in 0..cg {
                let ch = g * cg + c_off;
                for i in 0..plane {
                    let idx = base + c_off * plane + i;
                    y[idx] = (x.data[idx] - mean) * inv * gamma.data[ch] + beta.data[ch];
                }
            }
        }
    }
    Ref64 {
        shape: x.shape.clone(),
        data: y,
    }
}

pub fn ref_sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn ref_softplus(v: f64) -> f64 {
    if v > 30.0 {
        v
    } else {
        (1.0 + v.exp()).ln()
    }
}

pub fn ref_softmax_xent(logits: &Ref64, labels: &[usize]) -> f64 {
    let k = logits.shape[1];
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = &logits.data[r * k..(r + 1) * k];
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        total += lse - row[label];
    }
    total / labels.len() as f64
}

pub fn ref_focal_loss(logits: &Ref64, target: &Ref64) -> f64 {
    let n_pos = target.data.iter().filter(|&&v| v == 1.0).count().max(1) as f64;
    let mut total = 0.0;
    for (&z, &y) in logits.data.iter().zip(&target.data) {
        let p = ref_sigmoid(z);
        let ln_p = -ref_softplus(-z);
        let ln_1mp = -ref_softplus(z);
        total -= if y == 1.0 {
            (1.0 - p) * (1.0 - p) * ln_p
        } else {
            (1.0 - y).powi(4) * p * p * ln_1mp
        };
    }
    total / n_pos
}

pub fn ref_l1_masked(pred: &Ref64, target: &Ref64, mask: &Ref64, norm: f64) -> f64 {
    pred.data
        .iter()
        .zip(&target.data)
        .zip(&mask.data)
        .map(|((p, t), m)| m * (p - t).abs())
        .sum::<f64>()
        / norm
}

// ---------------------------------------------------------------------------
// the checker

/// Checks the tape gradient of `Σ tape_build(inputs)·R` against central
/// finite differences of `Σ ref_forward(inputs)·R`, where `ref_forward` is an
/// f64 reference implementation independent of the library kernels.
///
/// Elementwise spec tolerance: |ad - fd| / (|fd| + 1e-6) < tol.
pub fn fd_check(
    inputs: &[SpikeTensor],
    tape_build: &dyn Fn(&mut Tape, &[NodeId]) -> NodeId,
    ref_forward: &dyn Fn(&[Ref64]) -> Vec<f64>,
    h: f32,
    tol: f32,
    seed: u64,
) -> f32 {
    // autodiff side: loss-weighted sum on the tape
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().with_grad()))
        .collect();
    let out = tape_build(&mut tape, &ids);
    let out_numel = tape.value(out).numel();

    let mut r = rng(seed ^ LOSS_WEIGHT_SEED_MIX);
    let loss_w: Vec<f64> = (0..out_numel)
        .map(|_| {
            let mag = r.gen_range(0.5f64..1.5);
            if r.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();

    let w_node = tape.constant(
        SpikeTensor::from_vec(
            tape.value(out).shape(),
            loss_w.iter().map(|&v| v as f32).collect(),
        )
        .unwrap(),
    );
    let weighted = tape.hadamard(out, w_node).unwrap();
    let loss = tape.sum_all(weighted);
    tape.backward(loss).unwrap();

    // sanity: the reference agrees with the tape forward
    let base_ref: Vec<Ref64> = inputs.iter().map(Ref64::from_tensor).collect();
    let ref_out = ref_forward(&base_ref);
    assert_eq!(ref_out.len(), out_numel, "reference output size mismatch");
    let fwd_diff = tape
        .value(out)
        .data()
        .iter()
        .zip(&ref_out)
        .map(|(&a, &b)| (a as f64 - b).abs())
        .fold(0.0f64, f64::max);
    assert!(fwd_diff < 1e-4, "reference forward disagrees by {fwd_diff}");

    let loss_of = |perturbed: &[Ref64]| -> f64 {
        ref_forward(perturbed)
            .iter()
            .zip(&loss_w)
            .map(|(y, w)| y * w)
            .sum()
    };

    let mut worst = 0.0f32;
    for (which, input) in inputs.iter().enumerate() {
        let ad = tape
            .grad(ids[which])
            .unwrap_or_else(|| panic!("input {which} received no gradient"));
        for i in 0..input.numel() {
            let mut plus = base_ref.to_vec();
            plus[which].data[i] += h as f64;
            let mut minus = base_ref.to_vec();
            minus[which].data[i] -= h as f64;
            let fd = ((loss_of(&plus) - loss_of(&minus)) / (2.0 * h as f64)) as f32;
            let rel = (ad[i] - fd).abs() / (fd.abs() + 1e-6);
            assert!(
                rel < tol,
                "input {which} element {i}: autodiff {} vs fd {} (rel {rel}, seed {seed})",
                ad[i],
                fd
            );
            worst = worst.max(rel);
        }
    }
    worst
}

/// Decorrelates the loss-weight draw from the input draw for a given seed.
const LOSS_WEIGHT_SEED_MIX: u64 = 0x9e37_79b9_7f4a_7c15;
