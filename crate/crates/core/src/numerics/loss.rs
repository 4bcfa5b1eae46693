//! Quantile (pinball) loss.

use crate::error::{CoreError, Result};

/// Pinball loss at level `alpha`, in the standard nonnegative form:
/// `alpha * (y - y_hat)` when the target sits above the prediction,
/// `(1 - alpha) * (y_hat - y)` otherwise. Minimized in expectation by the
/// `alpha`-quantile of the target.
pub fn pinball_loss(y: f64, y_hat: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(pinball(y, y_hat, alpha))
}

/// Derivative of the pinball loss with respect to the prediction.
/// At the kink (`y == y_hat`) the right-hand branch applies.
pub fn pinball_grad(y: f64, y_hat: f64, alpha: f64) -> f64 {
    if y > y_hat {
        -alpha
    } else {
        1.0 - alpha
    }
}

#[inline]
pub(crate) fn pinball(y: f64, y_hat: f64, alpha: f64) -> f64 {
    if y > y_hat {
        alpha * (y - y_hat)
    } else {
        (1.0 - alpha) * (y_hat - y)
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CoreError::Config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}
