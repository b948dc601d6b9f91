use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum separation between two expansion points, in meters.
pub const DELTA_MIN: f64 = 1e-6;

/// First-order expansion of `‖p_i − p_j‖` around a pair of points.
///
/// `lambda` and `gamma` are the partial derivatives with respect to `x_i`
/// and `y_i`, so `lambda² + gamma² = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizedRange {
    pub d_hat: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl LinearizedRange {
    /// Range predicted by the expansion at `(xi, yi)` against `(xj, yj)`.
    pub fn eval(&self, origin_i: (f64, f64), origin_j: (f64, f64), pi: (f64, f64), pj: (f64, f64)) -> f64 {
        let dxi = (pi.0 - origin_i.0) - (pj.0 - origin_j.0);
        let dyi = (pi.1 - origin_i.1) - (pj.1 - origin_j.1);
        self.d_hat + self.lambda * dxi + self.gamma * dyi
    }
}

pub fn linearize(xi_hat: (f64, f64), xj_hat: (f64, f64)) -> Result<LinearizedRange> {
    let dx = xi_hat.0 - xj_hat.0;
    let dy = xi_hat.1 - xj_hat.1;
    let d = dx.hypot(dy);
    if !(d > DELTA_MIN) {
        return Err(Error::SingularGeometry { distance: d });
    }
    Ok(LinearizedRange {
        d_hat: d,
        lambda: dx / d,
        gamma: dy / d,
    })
}
