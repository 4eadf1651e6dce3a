use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T> = core::result::Result<T, TensorError>;

/// Errors raised by tensor construction, tape operations, and decoders.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Shape does not match what the operation requires. `axis` is the
    /// offending axis index when a single axis can be blamed.
    ShapeMismatch {
        op: &'static str,
        axis: Option<usize>,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    /// Operand shapes cannot be broadcast together.
    NotBroadcastable {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// Element count does not match the product of the extents.
    LengthMismatch { expected: usize, got: usize },
    /// Channel count not divisible by the group count.
    IndivisibleGroups { channels: usize, groups: usize },
    /// Backward requires a scalar (single-element) loss node.
    NonScalarLoss { numel: usize },
    /// Backward was already run on this tape.
    BackwardConsumed,
    /// The node does not participate in gradient computation.
    Detached { node: usize },
    /// An input value is NaN or infinite where finite data is required.
    NonFinite { op: &'static str },
    /// A spatial extent collapsed to zero or below.
    EmptySpatial { op: &'static str, h: usize, w: usize },
    /// The time axis must have at least one step.
    EmptyTime,
    /// Free-form invalid argument.
    Invalid(String),
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch {
                op,
                axis,
                expected,
                got,
            } => match axis {
                Some(a) => write!(
                    f,
                    "{op}: shape mismatch on axis {a}: expected {expected:?}, got {got:?}"
                ),
                None => write!(f, "{op}: shape mismatch: expected {expected:?}, got {got:?}"),
            },
            TensorError::NotBroadcastable { op, lhs, rhs } => {
                write!(f, "{op}: shapes {lhs:?} and {rhs:?} are not broadcastable")
            }
            TensorError::LengthMismatch { expected, got } => {
                write!(f, "data length {got} does not match shape product {expected}")
            }
            TensorError::IndivisibleGroups { channels, groups } => {
                write!(f, "group_norm: {channels} channels not divisible by {groups} groups")
            }
            TensorError::NonScalarLoss { numel } => {
                write!(f, "backward requires a scalar loss, got {numel} elements")
            }
            TensorError::BackwardConsumed => {
                write!(f, "backward already ran on this tape; build a fresh tape per step")
            }
            TensorError::Detached { node } => {
                write!(f, "node {node} does not require gradients")
            }
            TensorError::NonFinite { op } => write!(f, "{op}: non-finite input value"),
            TensorError::EmptySpatial { op, h, w } => {
                write!(f, "{op}: output spatial extent collapsed to {h}x{w}")
            }
            TensorError::EmptyTime => write!(f, "time axis must have at least one step"),
            TensorError::Invalid(msg) => write!(f, "{msg}"),
        }
    }
}
