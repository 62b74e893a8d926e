//! Distributed gradient tracking for multi-agent aggregative optimization.
//!
//! A network of `N` agents cooperatively minimizes
//!
//! ```text
//!     f(x) = sum_i f_i(x_i, sigma(x)),    sigma(x) = (1/N) sum_i phi_i(x_i),
//! ```
//!
//! where each agent `i` owns a decision block `x_i`, a private objective
//! `f_i`, and a private aggregate contribution `phi_i`. No agent ever sees
//! another agent's decision variable; the only coupling is through the
//! network-wide aggregate `sigma(x)`, which no single agent can evaluate
//! either. Instead, every agent maintains two running trackers, one for the
//! aggregate and one for the mean of the partial gradients with respect to
//! it, and refreshes them each round by mixing neighbor values through a
//! doubly stochastic weight matrix.
//!
//! The crate splits into five modules:
//!
//! - [`graph`]: construction and validation of communication weight
//!   matrices (double stochasticity, strong connectivity, spectral gap).
//! - [`model`]: problem definitions, per-agent evaluators, analytic
//!   gradients, smoothness/convexity constants, and the two built-in
//!   benchmark problems.
//! - [`engine`]: the synchronous tracking iteration itself, with
//!   initialization, step-size bounds, and per-iteration traces.
//! - [`oracle`]: independent reference computations used to check the
//!   engine - centralized solves, finite-difference gradients, and the
//!   Nash-equilibrium contrast for the two-agent benchmark.
//! - [`diagnostics`]: numerical verification of the contraction machinery
//!   behind the linear-rate guarantee, empirical rate fitting, and tracker
//!   audits.
//!
//! The core is `no_std`-compatible (requires `alloc`); everything touching
//! files or terminals lives in the companion CLI crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]
// Guards are written `!(v > 0.0)` on purpose: the negated form also
// rejects NaN, which `v <= 0.0` would wave through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub use nalgebra;

pub mod diagnostics;
pub mod engine;
pub mod graph;
pub mod model;
pub mod oracle;
