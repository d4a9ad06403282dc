//! Mini-batch SGD with Nesterov momentum.
//!
//! Uses the look-ahead reformulation: with `g` the gradient at the stored
//! parameters,
//!
//! ```text
//! v     <- mu * v - lr * g
//! theta <- theta + mu * v - lr * g
//! ```
//!
//! The stored parameters are the look-ahead point `theta + mu * v` of the
//! classical formulation, where the gradient is taken after the momentum jump.

use super::network::Parameters;
use super::{Real, TrainConfig};

/// Applies one update to a flat tensor.
pub fn nesterov_update<T: Real>(theta: &mut [T], grad: &[T], velocity: &mut [T], lr: T, momentum: T) {
    for ((p, &g), v) in theta.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = momentum * *v - lr * g;
        *p = *p + momentum * *v - lr * g;
    }
}

/// Updates every parameter tensor in place. `grads` must already contain
/// the weight-decay term (see [`super::Network::backward`]).
pub fn sgd_step<T: Real>(
    params: &mut Parameters<T>,
    grads: &Parameters<T>,
    velocity: &mut Parameters<T>,
    cfg: &TrainConfig,
) {
    let lr = T::from(cfg.learning_rate).unwrap();
    let mu = T::from(cfg.momentum).unwrap();
    for ((p, g), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(velocity.tensors_mut())
    {
        nesterov_update(p, g, v, lr, mu);
    }
}
