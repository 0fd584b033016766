//! Model-based offline reinforcement learning with variational quantum circuits.
//!
//! The pipeline learns a VQC surrogate of cart-pole dynamics from a fixed,
//! pre-recorded dataset and then searches the parameter space of a second VQC
//! (the policy) with particle swarm optimization, scoring candidates by
//! roll-outs on the surrogate only.
//!
//! Module map:
//! - [`qsim`]: dense statevector simulator and circuit compiler
//! - [`vqc`]: data re-uploading circuit templates and gradients
//! - [`cartpole`]: reference cart-pole physics and the shaped reward
//! - [`dataset`]: offline transition data, scalers and splits
//! - [`optim`]: Adam and particle swarm optimization
//! - [`surrogate`]: VQC dynamics model training and prediction
//! - [`policy`]: VQC policy, model-based return estimation and search
//! - [`baseline`]: classical MLP used for the data-efficiency comparison
//! - [`study`]: re-uploading and data-efficiency studies

pub mod baseline;
pub mod cartpole;
pub mod dataset;
mod error;
pub mod optim;
pub mod policy;
pub mod qsim;
pub mod seed;
pub mod stats;
pub mod study;
pub mod surrogate;
pub mod vqc;

pub use error::{Error, Result};
