//! Leaky integrate-and-fire dynamics over discrete time steps.
//!
//! Per step: `U[t] = H[t-1] + I[t]`, a spike fires where `U[t] >= u_th`
//! (the closed condition makes the exact-threshold case deterministic), and
//! the membrane resets to `H[t] = tau·U[t]·(1-S[t]) + u_reset·S[t]`.
//! The forward spike is an exact Heaviside; the backward pass substitutes a
//! rectangular window of width `surrogate_width` centered on the threshold.

use alloc::vec::Vec;

use crate::error::{Result, TensorError};
use crate::tape::{NodeId, Tape};
use crate::tensor::SpikeTensor;

/// Neuron constants. `tau` is the decay coefficient applied to the
/// non-spiking membrane, `u_th`/`u_reset` the firing threshold and the
/// post-spike value, `surrogate_width` the backward window width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    pub tau: f32,
    pub u_th: f32,
    pub u_reset: f32,
    pub surrogate_width: f32,
}

impl LifParams {
    pub fn new(tau: f32, u_th: f32, u_reset: f32, surrogate_width: f32) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(TensorError::Invalid(alloc::format!(
                "tau {tau} outside [0, 1]"
            )));
        }
        if !(u_th > u_reset) {
            return Err(TensorError::Invalid(alloc::format!(
                "u_th {u_th} must exceed u_reset {u_reset}"
            )));
        }
        if !(surrogate_width > 0.0) {
            return Err(TensorError::Invalid(alloc::format!(
                "surrogate width {surrogate_width} must be positive"
            )));
        }
        Ok(Self { tau, u_th, u_reset, surrogate_width })
    }
}

impl Default for LifParams {
    /// tau 0.5, threshold 0.75 (the best-performing threshold in the
    /// ablation grid), reset to 0, unit surrogate window.
    fn default() -> Self {
        Self { tau: 0.5, u_th: 0.75, u_reset: 0.0, surrogate_width: 1.0 }
    }
}

/// Per-neuron membrane potentials after the latest step.
#[derive(Debug, Clone)]
pub struct LifState {
    pub h: SpikeTensor,
}

impl LifState {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { h: SpikeTensor::zeros(shape) }
    }
}

/// Binary spike maps with a leading time axis.
#[derive(Debug, Clone)]
pub struct SpikeTrain {
    values: SpikeTensor,
}

impl SpikeTrain {
    /// Wraps a tensor whose leading axis is time; every element must be
    /// exactly 0.0 or 1.0.
    pub fn new(values: SpikeTensor) -> Result<Self> {
        if values.rank() < 2 {
            return Err(TensorError::Invalid(
                "spike train needs a leading time axis".into(),
            ));
        }
        if !values.is_binary() {
            return Err(TensorError::Invalid(
                "spike train contains non-binary values".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn time_steps(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn values(&self) -> &SpikeTensor {
        &self.values
    }

    pub fn into_values(self) -> SpikeTensor {
        self.values
    }

    /// Spike map of step `t` as its own tensor.
    pub fn step(&self, t: usize) -> SpikeTensor {
        let step_shape = &self.values.shape()[1..];
        let step_len: usize = step_shape.iter().product();
        let data = self.values.data()[t * step_len..(t + 1) * step_len].to_vec();
        SpikeTensor::from_vec(step_shape, data).unwrap()
    }

    /// Total spike count.
    pub fn count(&self) -> usize {
        self.values.data().iter().filter(|&&v| v == 1.0).count()
    }
}

/// One membrane update. Returns the binary spike map and the new state.
pub fn lif_step(
    state: &LifState,
    input_current: &SpikeTensor,
    params: &LifParams,
) -> Result<(SpikeTensor, LifState)> {
    if input_current.shape() != state.h.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "lif_step",
            axis: None,
            expected: state.h.shape().to_vec(),
            got: input_current.shape().to_vec(),
        });
    }
    if !input_current.is_finite() {
        return Err(TensorError::NonFinite { op: "lif_step" });
    }
    let mut spikes = vec![0.0f32; input_current.numel()];
    let mut h_next = vec![0.0f32; input_current.numel()];
    for (i, (hv, iv)) in state.h.data().iter().zip(input_current.data()).enumerate() {
        let u = hv + iv;
        if u >= params.u_th {
            spikes[i] = 1.0;
            h_next[i] = params.u_reset;
        } else {
            h_next[i] = params.tau * u;
        }
    }
    let shape = input_current.shape();
    Ok((
        SpikeTensor::from_vec(shape, spikes)?,
        LifState { h: SpikeTensor::from_vec(shape, h_next)? },
    ))
}

/// Folds [`lif_step`] over the leading time axis from a zero initial state.
pub fn lif_forward(inputs: &SpikeTensor, params: &LifParams) -> Result<SpikeTrain> {
    if inputs.rank() < 2 {
        return Err(TensorError::EmptyTime);
    }
    let t_steps = inputs.shape()[0];
    let step_shape = &inputs.shape()[1..];
    let step_len: usize = step_shape.iter().product();
    let mut state = LifState::zeros(step_shape);
    let mut out = Vec::with_capacity(inputs.numel());
    for t in 0..t_steps {
        let step_in = SpikeTensor::from_vec(
            step_shape,
            inputs.data()[t * step_len..(t + 1) * step_len].to_vec(),
        )?;
        let (spikes, next) = lif_step(&state, &step_in, params)?;
        out.extend_from_slice(spikes.data());
        state = next;
    }
    SpikeTrain::new(SpikeTensor::from_vec(inputs.shape(), out)?)
}

/// Rectangular surrogate factor: `(1/a)·1[|u - u_th| <= a/2]`, evaluated on
/// pre-centered values `u - u_th`.
pub fn heaviside_surrogate_backward(u_minus_th: &SpikeTensor, width: f32) -> SpikeTensor {
    let half = width / 2.0;
    let scale = 1.0 / width;
    let data = u_minus_th
        .data()
        .iter()
        .map(|&v| if v.abs() <= half { scale } else { 0.0 })
        .collect();
    SpikeTensor::from_vec(u_minus_th.shape(), data).unwrap()
}

/// Stateful LIF layer recorded on a tape; reuse one cell per layer and call
/// [`LifCell::reset`] between forward passes so BPTT unrolls cleanly.
pub struct LifCell {
    pub params: LifParams,
    state: Option<NodeId>,
}

impl LifCell {
    pub fn new(params: LifParams) -> Self {
        Self { params, state: None }
    }

    pub fn reset(&mut self) {
        self.state = None;
    }

    /// Membrane update as tape ops; returns the spike node.
    pub fn step(&mut self, tape: &mut Tape, input: NodeId) -> Result<NodeId> {
        let u = match self.state {
            // zero initial state: U[1] = I[1]
            None => input,
            Some(h) => tape.add(h, input)?,
        };
        let s = tape.spike(u, self.params.u_th, self.params.surrogate_width);
        let neg_s = tape.scalar_mul(s, -1.0);
        let one_minus_s = tape.scalar_add(neg_s, 1.0);
        let kept = tape.hadamard(u, one_minus_s)?;
        let decayed = tape.scalar_mul(kept, self.params.tau);
        let h = if self.params.u_reset == 0.0 {
            decayed
        } else {
            let reset_term = tape.scalar_mul(s, self.params.u_reset);
            tape.add(decayed, reset_term)?
        };
        self.state = Some(h);
        Ok(s)
    }

    /// Membrane node from the latest step, if any.
    pub fn membrane(&self) -> Option<NodeId> {
        self.state
    }
}
