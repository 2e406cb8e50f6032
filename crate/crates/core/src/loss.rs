//! Weighted binary cross entropy over a channel grid and the two-branch total.
//!
//! The loss is the negated weighted log-likelihood, summed (not averaged) over
//! cells and channels. Predictions are clamped to `[eps, 1 - eps]`; where the
//! clamp is active the gradient is zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ChannelGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_actor: f64,
    pub lambda_object: f64,
    pub eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_actor: 1.0,
            lambda_object: 1.0,
            eps: 1e-7,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_actor < 0.0 || self.lambda_object < 0.0 {
            return Err(Error::InvalidConfig("loss weights must be >= 0".into()));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::InvalidConfig("eps must be in (0, 0.5)".into()));
        }
        Ok(())
    }
}

fn check_shapes(pred: &ChannelGrid, target: &ChannelGrid, w_han: &ChannelGrid, w_scale: &ChannelGrid) -> Result<()> {
    pred.ensure_same_shape(target, "prediction/target")?;
    pred.ensure_same_shape(w_han, "prediction/hanning weight")?;
    pred.ensure_same_shape(w_scale, "prediction/scale weight")
}

/// `-sum w_han * w_scale * [f ln p + (1 - f) ln(1 - p)]`.
///
/// Summation runs in fixed memory order, so the result is reproducible.
pub fn wce_forward(
    pred: &ChannelGrid,
    target: &ChannelGrid,
    w_han: &ChannelGrid,
    w_scale: &ChannelGrid,
    eps: f64,
) -> Result<f64> {
    check_shapes(pred, target, w_han, w_scale)?;
    let mut total = 0.0;
    for i in 0..pred.len() {
        let p = pred.as_slice()[i].clamp(eps, 1.0 - eps);
        let f = target.as_slice()[i];
        let w = w_han.as_slice()[i] * w_scale.as_slice()[i];
        if w == 0.0 {
            continue;
        }
        total -= w * (f * p.ln() + (1.0 - f) * (1.0 - p).ln());
    }
    Ok(total)
}

/// Gradient of [`wce_forward`] with respect to the (unclamped) predictions.
pub fn wce_backward(
    pred: &ChannelGrid,
    target: &ChannelGrid,
    w_han: &ChannelGrid,
    w_scale: &ChannelGrid,
    eps: f64,
) -> Result<ChannelGrid> {
    check_shapes(pred, target, w_han, w_scale)?;
    let mut grad = ChannelGrid::zeros(pred.width(), pred.height(), pred.channels());
    for (i, g) in grad.as_mut_slice().iter_mut().enumerate() {
        let raw = pred.as_slice()[i];
        if raw <= eps || raw >= 1.0 - eps {
            continue;
        }
        let f = target.as_slice()[i];
        let w = w_han.as_slice()[i] * w_scale.as_slice()[i];
        *g = w * ((1.0 - f) / (1.0 - raw) - f / raw);
    }
    Ok(grad)
}

/// `lambda_a * L_a + lambda_o * L_o`.
pub fn total_loss(actor: f64, object: f64, config: &LossConfig) -> f64 {
    config.lambda_actor * actor + config.lambda_object * object
}
