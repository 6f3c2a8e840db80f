//! Efficient neural vocoder inference engine.
//!
//! The sample-rate network of an LPC-based vocoder dominates synthesis cost.
//! This crate implements the pieces that make it cheap enough for real time
//! on ordinary CPUs:
//!
//! * [`sampling`] — the 256-way excitation distribution stored as an 8-level
//!   binary tree, sampled with O(log Q) branch decisions against a
//!   precomputed inverse-sigmoid table.
//! * [`kernels`] — clipped rational tanh/sigmoid approximations and the
//!   8x4-block int8 sparse matrix-vector product.
//! * [`quantizer`] — the periodic regularization loss and progressive hard
//!   quantization that produce the int8 weights.
//! * [`dsp`] — mu-law companding, pre-/de-emphasis, and the order-16 linear
//!   predictor around the neural excitation.
//! * [`model`] — the frame-rate and sample-rate networks, the autoregressive
//!   synthesis loop, and weight/feature file I/O.

pub mod dsp;
pub mod kernels;
pub mod model;
pub mod quantizer;
pub mod sampling;
pub mod selftest;
