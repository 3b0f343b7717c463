//! Training collections of stochastic policies whose trajectory
//! distributions are mutually distinct under an MMD trajectory kernel.
//!
//! The crate is organized around a handful of small modules:
//!
//! - [`env`]: episodic 2-D navigation tasks and cartpole with a uniform
//!   reset/step contract and a rollout generator.
//! - [`policy`]: small MLP policies (categorical or diagonal-Gaussian head)
//!   with hand-derived analytic gradients of action log-probabilities.
//! - [`diversity`]: the trajectory kernel, MMD² estimators, the min-over-Q
//!   diversity measure and its likelihood-ratio gradient estimator.
//! - [`pg`]: REINFORCE and PPO-clip training, the diversity-augmented update,
//!   and the iterative multi-policy loop.
//! - [`batch`]: the off-policy extension (likelihood surrogate, batch
//!   diversity term) and CWPDIS off-policy evaluation.
//!
//! Everything is deterministic given explicit seeds; no global RNG state.

pub mod batch;
pub mod diversity;
pub mod env;
pub mod optim;
pub mod pg;
pub mod policy;
#[doc(hidden)]
pub mod testutil;
pub mod types;

mod error;

pub use error::{Error, Result};
pub use types::{Action, Step, Trajectory};
