//! Desk-scale generative modeling on low-dimensional data manifolds.
//!
//! The crate bundles a minimal differentiable-computation substrate (tensors,
//! a reverse-mode tape, MLPs, Adam) with the models built on top of it:
//! denoising diffusion with multi-step and RK4-stabilised backward sampling
//! and an exact log-probability estimator, coupling-layer normalising flows
//! with a two-level hierarchical autoencoder stack, a VAE with a
//! mixture-of-Gaussians grid prior, and an ELBO-purification defence against
//! patch attacks.
//!
//! Everything is `f64`, deterministic per seed, and `no_std` + `alloc`; file
//! formats and the command-line interface live in the companion `manifold`
//! binary crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod diffusion;
pub mod error;
pub mod flow;
pub mod gauss;
pub mod gridvae;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod robustness;
pub mod tape;
pub mod tensor;

pub use error::{CoreError, Result};
pub use rng::Rng;
pub use tensor::Tensor;
