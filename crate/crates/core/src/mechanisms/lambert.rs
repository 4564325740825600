//! Lower branch `W_{-1}` of the Lambert W function on `[-1/e, 0)`.

use std::f64::consts::E;

use crate::error::{LppmError, Result};

const BRANCH_POINT: f64 = -1.0 / E;

/// Solves `w e^w = v` with `w <= -1` for `v` in `[-1/e, 0)`.
///
/// Starts from the branch-point series near `-1/e` or the logarithmic
/// asymptote near 0, then polishes with Halley's method.
pub fn lambert_w_m1(v: f64) -> Result<f64> {
    if !(v >= BRANCH_POINT && v < 0.0) {
        // Allow a rounding hair below -1/e.
        if v < BRANCH_POINT && v > BRANCH_POINT - 1e-15 {
            return Ok(-1.0);
        }
        return Err(LppmError::InvalidInput(format!("W_-1 is undefined at {v}")));
    }
    if v == BRANCH_POINT {
        return Ok(-1.0);
    }

    let mut w = if v < -0.25 {
        // p = -sqrt(2 (1 + e v)); W = -1 + p - p^2/3 + 11/72 p^3 - ...
        let p = -(2.0 * (1.0 + E * v)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else {
        let l1 = (-v).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };

    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - v;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let next = w - f / denom;
        let next = next.min(-1.0);
        if !next.is_finite() {
            break;
        }
        let done = (next - w).abs() <= 1e-15 * w.abs().max(1.0);
        w = next;
        if done {
            break;
        }
    }
    Ok(w.min(-1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(v: f64) -> f64 {
        let w = lambert_w_m1(v).unwrap();
        assert!(w <= -1.0);
        (w * w.exp() - v).abs()
    }

    #[test]
    fn branch_point() {
        assert_eq!(lambert_w_m1(-1.0 / E).unwrap(), -1.0);
    }

    #[test]
    fn minus_point_one() {
        let w = lambert_w_m1(-0.1).unwrap();
        assert!(residual(-0.1) <= 1e-12);
        // Known value W_-1(-0.1) = -3.577152063957297...
        assert!((w + 3.577152063957297).abs() < 1e-12);
    }

    #[test]
    fn tiny_arguments_stay_finite() {
        for v in [-1e-10, -1e-50, -1e-200, -1e-300] {
            let w = lambert_w_m1(v).unwrap();
            assert!(w.is_finite());
            assert!(residual(v) <= 1e-12, "v={v}");
        }
        assert!(lambert_w_m1(-1e-300).unwrap() < -600.0);
    }

    #[test]
    fn out_of_domain() {
        assert!(lambert_w_m1(0.0).is_err());
        assert!(lambert_w_m1(0.5).is_err());
        assert!(lambert_w_m1(-0.5).is_err());
        assert!(lambert_w_m1(f64::NAN).is_err());
    }

    #[test]
    fn grid_residuals() {
        let n = 1000;
        for i in 0..n {
            let t = (i as f64 + 0.5) / n as f64;
            let v = BRANCH_POINT * (1.0 - t);
            assert!(residual(v) <= 1e-12, "v={v}");
        }
    }
}
