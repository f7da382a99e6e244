//! Decide whether a stochastic exponential driven by a one-dimensional
//! diffusion is a true martingale, a uniformly integrable martingale, and
//! whether it stays positive, from boundary behaviour of scale and test
//! functions; with Scott-model oracles and a Monte Carlo cross-check.

// `!(x > 0.0)` is the NaN-rejecting form, on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod cli;
pub mod diffusion;
pub mod exec;
pub mod expr;
pub mod montecarlo;
pub mod quadrature;
pub mod scott;
