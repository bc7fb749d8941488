//! Training objectives: the pinball loss, its multi-quantile sum, and the two
//! point-estimate baselines (binary cross-entropy on an interest label and
//! squared error on watch time).

use crate::error::{invalid_arg, Result};
use crate::head::{QuantileEstimates, QuantileLevels};

/// Loss value plus its gradient with respect to the estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(invalid_arg!("quantile level must lie in (0, 1), got {tau}"))
    }
}

/// `tau * (y - t)` when `y >= t`, otherwise `(1 - tau) * (t - y)`.
pub fn pinball(y: f64, t: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(pinball_unchecked(y, t, tau))
}

#[inline]
fn pinball_unchecked(y: f64, t: f64, tau: f64) -> f64 {
    if y >= t {
        tau * (y - t)
    } else {
        (1.0 - tau) * (t - y)
    }
}

/// Derivative of [`pinball`] in `t`. At `y == t` the `y >= t` branch is used.
pub fn pinball_grad(y: f64, t: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(pinball_grad_unchecked(y, t, tau))
}

#[inline]
fn pinball_grad_unchecked(y: f64, t: f64, tau: f64) -> f64 {
    if y >= t {
        -tau
    } else {
        1.0 - tau
    }
}

/// Unweighted sum of pinball losses over every level.
pub fn qr_loss(y: f64, estimates: &QuantileEstimates, levels: &QuantileLevels) -> Result<LossValue> {
    qr_loss_raw(y, estimates.as_slice(), levels)
}

/// [`qr_loss`] on a plain slice, used by the training loop.
pub(crate) fn qr_loss_raw(y: f64, t: &[f64], levels: &QuantileLevels) -> Result<LossValue> {
    if t.len() != levels.len() {
        return Err(invalid_arg!(
            "{} estimates for {} quantile levels",
            t.len(),
            levels.len()
        ));
    }
    let mut value = 0.0;
    let grad = t
        .iter()
        .zip(levels.as_slice())
        .map(|(&ti, &tau)| {
            value += pinball_unchecked(y, ti, tau);
            pinball_grad_unchecked(y, ti, tau)
        })
        .collect();
    Ok(LossValue { value, grad })
}

/// Binary cross-entropy on a logit, `-r log s(z) - (1 - r) log(1 - s(z))`.
///
/// Evaluated as `softplus(z) - r z` so large logits do not overflow.
pub fn bce_baseline(r: f64, logit: f64) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&r) {
        return Err(invalid_arg!("label must lie in [0, 1], got {r}"));
    }
    let softplus = logit.max(0.0) + (-logit.abs()).exp().ln_1p();
    let sigmoid = if logit >= 0.0 {
        1.0 / (1.0 + (-logit).exp())
    } else {
        let e = logit.exp();
        e / (1.0 + e)
    };
    Ok((softplus - r * logit, sigmoid - r))
}

/// Squared error `(pred - y)^2` and its derivative in `pred`.
pub fn mse_baseline(y: f64, pred: f64) -> (f64, f64) {
    let r = pred - y;
    (r * r, 2.0 * r)
}
