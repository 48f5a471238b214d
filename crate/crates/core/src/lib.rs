//! Split-point analysis for collaborative inference.
//!
//! A model deployed across an edge device and a cloud server is cut at some
//! layer; the edge ships the intermediate representation `z` upstream. This
//! crate measures how class-conditional geometry evolves along the depth of a
//! small classifier and turns it into deployment guidance:
//!
//! * [`datagen`] builds deterministic Gaussian-mixture datasets.
//! * [`micronet`] is a dependency-free multilayer perceptron with activation
//!   capture, four target schemes, analytic Jacobians and SGD training.
//! * [`repr_stats`] computes class means, intra-class mean-squared radii and
//!   pooled variances of intermediate representations.
//! * [`entropy`] evaluates Gaussian entropy surrogates, the quantization bridge
//!   and lower bounds on the conditional entropy of the input given `z`.
//! * [`gpz`] locates the transition zone from dimension-normalized radius
//!   profiles and checks its stability.
//! * [`dynamics`] predicts the first-order change of the intra-class radius
//!   under a virtual gradient step and checks it against exact recomputation.
//! * [`inversion`] trains small decoders to reconstruct inputs from `z`.
//! * [`cost`] computes FLOPs, payload sizes and energy-derived metrics.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, reports and the
//! command-line front-end live in the companion `gpz` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cost;
pub mod datagen;
pub mod dynamics;
pub mod entropy;
pub mod error;
pub mod gpz;
pub mod inversion;
pub mod linalg;
pub mod micronet;
pub mod repr_stats;
pub mod rng;

pub use error::{Error, Result};
