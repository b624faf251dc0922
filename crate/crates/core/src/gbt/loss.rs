//! Twice-differentiable losses and their first two derivatives.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Which convex loss drives the boosting objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `l = (y - yhat)^2 / 2`; regression of the cumulative abnormal return.
    SquaredError,
    /// Log loss on the raw margin; drift-direction classification with
    /// labels in `{0, 1}`.
    Logistic,
}

/// First and second derivative of the loss with respect to the prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct GradientPair<S: Scalar> {
    pub g: S,
    pub h: S,
}

/// Numerically stable logistic function.
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn softplus<S: Scalar>(x: S) -> S {
    x.max(S::zero()) + (S::one() + (-x.abs()).exp()).ln()
}

/// Gradient and hessian of `loss` at prediction `y_hat` for label `y`.
///
/// Logistic labels must be 0 or 1 and `y_hat` is the raw margin.
pub fn grad_hess<S: Scalar>(loss: LossKind, y: S, y_hat: S) -> GradientPair<S> {
    match loss {
        LossKind::SquaredError => GradientPair {
            g: y_hat - y,
            h: S::one(),
        },
        LossKind::Logistic => {
            let p = sigmoid(y_hat);
            GradientPair {
                g: p - y,
                h: p * (S::one() - p),
            }
        }
    }
}

/// Loss value itself, used when tracking the training objective.
pub fn loss_value<S: Scalar>(loss: LossKind, y: S, y_hat: S) -> S {
    match loss {
        LossKind::SquaredError => {
            let r = y - y_hat;
            r * r / S::from_config(2.0)
        }
        LossKind::Logistic => softplus(y_hat) - y * y_hat,
    }
}
