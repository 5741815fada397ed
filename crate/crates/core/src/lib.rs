//! PAC-Bayesian lifelong learning.
//!
//! This crate computes an observable bound on the transfer risk of a
//! lifelong learner — the expected loss on future tasks drawn from the same
//! environment as the observed ones — and minimizes it to learn transferable
//! priors under two models:
//!
//! * **parameter transfer** ([`plg`]): all task weight vectors are small
//!   perturbations of a shared prototype; the learned object is the mean of a
//!   Gaussian hyperposterior over prior vectors.
//! * **representation transfer** ([`pll`]): task weight vectors lie in a
//!   shared low-dimensional subspace; the learned object is the mode of a
//!   hyperposterior over orthonormal bases, optimized on the Stiefel
//!   manifold.
//!
//! [`baselines`] provides independent ridge and average-prior ridge for
//! comparison, and [`eval`] implements the hold-out protocol with
//! cross-validated regularization strength.
//!
//! All reductions over tasks and repetitions are performed in a fixed order,
//! so any result is bit-identical across thread counts; the `parallel`
//! feature (default) enables rayon data parallelism with a sequential
//! fallback when disabled.

pub mod baselines;
pub mod bound;
pub mod error;
pub mod eval;
pub mod par;
pub mod plg;
pub mod pll;
pub mod ridge;
pub mod task;

pub use error::{Error, Result};
