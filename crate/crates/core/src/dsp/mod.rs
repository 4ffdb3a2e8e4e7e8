//! Fixed-point DSP and tiny-ML kernels, and their FIOS bindings.

pub mod dtree;
pub mod filter;
pub mod fixed;
pub mod library;
pub mod vector;
