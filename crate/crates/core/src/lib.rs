#![no_std]
//! Estimation of empirical first-order dynamics from sparse, noisy
//! longitudinal data.

extern crate alloc;

pub mod dataset;
pub mod diagnostics;
pub mod dynamics;
pub mod eigenbasis;
pub mod error;
pub mod kernel;
mod linalg;
pub mod pace;
pub mod simulate;
pub mod smoothing;

pub use error::{Error, Result};
