//! Core numerics for the spikegate toolkit.
//!
//! Everything in this crate is pure computation over `alloc`: a small dense
//! tensor engine with reverse-mode autodiff ([`tape`]), leaky
//! integrate-and-fire dynamics with a surrogate gradient ([`lif`]), the
//! cross-scale gated spike coder ([`coding`]), membrane-shortcut residual
//! blocks with analytic cost counters ([`blocks`]), monocular 3D box decoding
//! ([`detect`]), detection metrics ([`metrics`]), and the synaptic-operation
//! energy model ([`energy`]). IO, file formats, and the CLI live in the
//! companion `spikegate` crate.

#![no_std]

#[macro_use]
extern crate alloc;

#[cfg(test)]
#[macro_use]
extern crate std;

pub mod blocks;
pub mod coding;
pub mod detect;
pub mod energy;
pub mod error;
pub mod lif;
pub mod metrics;
pub mod net;
pub mod ops;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use error::{Result, TensorError};
pub use tape::{NodeId, Tape};
pub use tensor::SpikeTensor;
