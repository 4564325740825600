//! Coin mechanism: report the true location with probability `alpha`,
//! otherwise the prior's optimal constant output `z*`.

use std::sync::Arc;

use crate::error::{LppmError, Result};
use crate::geo::{DistanceFn, PlanePoint};
use crate::model::{DiscreteMechanism, PoiSet, Prior};
use crate::remap::{minimize_expected_loss, SearchSpace, WeiszfeldConfig};

/// Relative slack allowed when `q_target` overshoots `q_star` by round-off.
const Q_STAR_SLACK: f64 = 1e-12;

/// `z* = argmin_z sum_x pi(x) d_Q(x, z)` over `space`, with the attained loss `Q*`.
pub fn optimal_constant_output(
    prior: &Prior,
    dq: &DistanceFn,
    space: &SearchSpace,
    cfg: &WeiszfeldConfig,
) -> Result<(PlanePoint, f64)> {
    minimize_expected_loss(prior.poi().points(), prior.mass(), dq, space, cfg, None)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoinParams {
    pub q_target: f64,
    pub alpha: f64,
    pub z_star: PlanePoint,
    pub q_star: f64,
}

impl CoinParams {
    /// Parameters reaching average loss `q_target` given `(z*, Q*)`.
    pub fn new(q_target: f64, z_star: PlanePoint, q_star: f64) -> Result<Self> {
        if !(q_target >= 0.0) || !q_target.is_finite() {
            return Err(LppmError::InvalidInput(format!("coin target loss {q_target} must be non-negative")));
        }
        if q_target > q_star * (1.0 + Q_STAR_SLACK) {
            return Err(LppmError::InvalidInput(format!(
                "coin target loss {q_target} exceeds the constant-output loss {q_star}"
            )));
        }
        let alpha = if q_star > 0.0 { (1.0 - q_target / q_star).clamp(0.0, 1.0) } else { 1.0 };
        Ok(Self { q_target: q_target.min(q_star), alpha, z_star, q_star })
    }

    /// `f[z|x] = alpha 1{z = x} + (1 - alpha) 1{z = z*}`. Outputs are the
    /// inputs followed by `z*` unless `z*` is itself an input.
    pub fn mechanism(&self, inputs: Arc<PoiSet>) -> Result<DiscreteMechanism> {
        let n = inputs.len();
        let mut outputs = inputs.points().to_vec();
        let star = match outputs.iter().position(|&p| p == self.z_star) {
            Some(i) => i,
            None => {
                outputs.push(self.z_star);
                n
            }
        };
        let n_out = outputs.len();
        let mut matrix = vec![0.0; n * n_out];
        for x in 0..n {
            matrix[x * n_out + x] += self.alpha;
            matrix[x * n_out + star] += 1.0 - self.alpha;
        }
        DiscreteMechanism::new(inputs, outputs, matrix)
    }
}

/// Coin mechanism with average loss `q_target`.
pub fn build_coin(
    prior: &Prior,
    dq: &DistanceFn,
    q_target: f64,
    space: &SearchSpace,
    cfg: &WeiszfeldConfig,
) -> Result<(DiscreteMechanism, CoinParams)> {
    let (z_star, q_star) = optimal_constant_output(prior, dq, space, cfg)?;
    let params = CoinParams::new(q_target, z_star, q_star)?;
    Ok((params.mechanism(prior.poi().clone())?, params))
}
