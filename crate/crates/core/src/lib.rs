#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod fft;
pub mod kernels;
pub mod noise;
pub mod quad;
pub mod regularity;
pub mod rng;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
