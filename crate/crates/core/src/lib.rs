//! Gradient-based training studied as a dynamical system.
//!
//! The crate is organised bottom-up:
//!
//! * [`objectives`] holds every differentiable object the dynamics act on
//!   (closed-form test functions, a bias-free MLP with manual backprop,
//!   batch normalization, cross-entropy, weight decay, Hessian-vector
//!   products and operator norms).
//! * [`dynamics`] implements the stochastic update map `F(θ) = θ − η g(θ)`,
//!   step-size schedules, minibatch samplers and the seeded trajectory runner.
//! * [`measures`] turns trajectories into empirical measures and computes
//!   time averages, the vanishing-change statistic with its Hoeffding
//!   envelope, pushforward residuals and a sliced energy distance.
//! * [`diagnostics`] computes loss, gradient norm, gradient noise, sharpness
//!   and the edge-of-stability ratio along trajectories.
//! * [`theorems`] instantiates each convergence result's preconditions, runs
//!   the implied experiment, and reports pass/fail with margins.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod measures;
pub mod numeric;
pub mod objectives;
pub mod rng;
pub mod theorems;

pub use error::{Error, Result};
pub use objectives::{Block, Objective, ParamVector};
