//! Command-line front end for the `nn3d` denoising library: argument
//! plumbing, the benchmark harness and the synthetic fixture corpus.

pub mod bench;
pub mod fixtures;
pub mod setup;
