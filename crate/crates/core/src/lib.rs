//! Verification engine for gradient Ricci solitons on a single coordinate chart.
//!
//! A soliton is given by metric component expressions, a potential and a
//! constant λ. The curvature pipeline differentiates the expressions exactly,
//! evaluates every soliton identity as a pointwise residual over a sample
//! set, and classifies the soliton as trivial or non-trivial.

pub mod exprlang;
pub mod geometry;
pub mod catalog;
pub mod cli;
pub mod soliton;
pub mod spectral;
