//! Hybrid quantum-classical transformer toolkit for short-term voltage stability
//! assessment: autodiff, statevector simulation, models, attacks, data pipeline
//! and experiment harness. `no_std` with `alloc`.

#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod attack;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod model;
pub mod optim;
pub mod quantum;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
