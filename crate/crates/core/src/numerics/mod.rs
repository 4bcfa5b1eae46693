//! Minimal dense-matrix toolkit: the building blocks for the two-layer
//! encoder, the three losses, the optimizers, and finite-difference
//! gradient verification.
//!
//! Matrices are immutable once built except inside a training step; a
//! [`ParamSet`] is confined to one training worker.

mod gradcheck;
mod loss;
mod matrix;
mod optim;
mod params;

pub use gradcheck::grad_check;
pub use loss::{pinball_grad, pinball_loss};
pub use matrix::Matrix;
pub use optim::{sgd_step, Adam};
pub use params::{Param, ParamSet};

pub(crate) use loss::{check_alpha, pinball};
