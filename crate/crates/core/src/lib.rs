//! Stochastic average model (SAM) trust-region methods for finite-sum
//! minimization
//!
//! ```text
//! f(x) = F_1(x) + F_2(x) + ... + F_p(x)
//! ```
//!
//! where every component `F_i` is expensive to evaluate. Each component keeps
//! its own local model centered at the point where it was last rebuilt. On
//! every iteration only a sampled batch of components is rebuilt at the
//! incumbent; the stale models of the remaining components are corrected with
//! an importance-weighted (SAGA-style) term so that the resulting model is an
//! unbiased estimate of the all-fresh model. Sampling probabilities minimize
//! an upper bound on the variance of that estimate.
//!
//! The crate is organised as
//!
//! - [`problem`]: the component oracle and evaluation accounting,
//! - [`models`]: first-order, interpolation and Gauss-Newton component models,
//! - [`bounds`]: per-component error-difference bounds that drive sampling,
//! - [`sampler`]: variance-minimizing probabilities and batch selection,
//! - [`solver`]: the trust-region iteration itself,
//! - [`testbed`]: logistic, generalized Rosenbrock and cube test problems.
//!
//! Component indices are zero-based throughout.

pub mod bounds;
mod error;
pub mod models;
pub mod problem;
pub mod quadratic;
pub mod rng;
pub mod sampler;
pub mod solver;
pub mod testbed;

pub use error::{Error, Result};
pub use problem::{Capabilities, ComponentValue, EvaluationLedger, FiniteSumProblem, Point};
