//! Training and verification toolkit for distribution-dependent dropout.
//!
//! Feature or neuron masks are drawn from a multinomial law whose sampling
//! probabilities track the data: `p_i` proportional to the square root of
//! the per-coordinate second moment. The crate provides the samplers, the
//! closed-form identities with independent oracles, a shallow (logistic)
//! SGD trainer, a small dense feedforward network with per-minibatch
//! (evolutional) dropout, and dataset plumbing.

pub mod data;
pub mod deep;
pub mod dropout;
pub mod error;
pub mod shallow;
pub mod theory;
pub mod trace;
pub mod vector;

pub use error::{Error, Result};
