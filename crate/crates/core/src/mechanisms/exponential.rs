//! Exponential mechanism `f[z|x] = a_x e^{-b d_Q(x, z)}`.

use std::sync::Arc;

use crate::error::{LppmError, Result};
use crate::geo::{DistanceFn, PlanePoint};
use crate::model::{DiscreteMechanism, PoiSet};

/// Row-normalised exponential kernel over `outputs`. `b = 0` gives uniform rows.
pub fn build_exponential(inputs: Arc<PoiSet>, outputs: Vec<PlanePoint>, dq: &DistanceFn, b: f64) -> Result<DiscreteMechanism> {
    if !(b >= 0.0) || !b.is_finite() {
        return Err(LppmError::InvalidInput(format!("exponential rate {b} must be non-negative and finite")));
    }
    if outputs.is_empty() {
        return Err(LppmError::InvalidInput("empty output alphabet".into()));
    }
    let d = dq.matrix(inputs.points(), &outputs)?;
    let n_out = outputs.len();
    let mut w = Vec::with_capacity(d.len());
    for row in d.chunks(n_out) {
        // Shift by the nearest output so the largest weight is exactly 1.
        let dmin = row.iter().copied().fold(f64::INFINITY, f64::min);
        w.extend(row.iter().map(|&v| if b == 0.0 { 1.0 } else { (-b * (v - dmin)).exp() }));
    }
    DiscreteMechanism::from_row_weights(inputs, outputs, w)
}
