//! Scalar Gaussian algebra shared by the message-passing engines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Integrator;

/// Smallest variance an engine is allowed to emit, in squared internal units.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Relative tolerance used by [`moment_match`].
pub const MOMENT_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian1D {
    pub mean: f64,
    pub var: f64,
}

impl Gaussian1D {
    pub fn new(mean: f64, var: f64) -> Result<Self> {
        if !mean.is_finite() || !var.is_finite() || var < 0.0 {
            return Err(Error::InvalidGaussian {
                mean,
                variance: var,
            });
        }
        Ok(Self { mean, var })
    }

    pub const fn dirac(mean: f64) -> Self {
        Self { mean, var: 0.0 }
    }

    pub fn is_dirac(&self) -> bool {
        self.var == 0.0
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }

    pub fn precision(&self) -> f64 {
        1.0 / self.var
    }

    /// Raises the variance to [`VARIANCE_FLOOR`] if it fell below it.
    pub fn floored(self) -> Self {
        Self {
            mean: self.mean,
            var: self.var.max(VARIANCE_FLOOR),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.mean.is_finite() && self.var.is_finite() && self.var >= 0.0
    }

    pub fn scaled(self, k: f64) -> Self {
        Self {
            mean: self.mean * k,
            var: self.var * k * k,
        }
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let d = x - self.mean;
        -0.5 * (d * d / self.var + (2.0 * std::f64::consts::PI * self.var).ln())
    }
}

/// Precision-weighted product of Gaussian factors.
pub fn product(msgs: &[Gaussian1D]) -> Result<Gaussian1D> {
    if msgs.is_empty() {
        return Err(Error::EmptyProduct);
    }
    let mut prec = 0.0;
    let mut info = 0.0;
    for g in msgs {
        if !g.is_valid() {
            return Err(Error::InvalidGaussian {
                mean: g.mean,
                variance: g.var,
            });
        }
        if g.is_dirac() {
            return Err(Error::DiracOperand);
        }
        let p = 1.0 / g.var;
        prec += p;
        info += g.mean * p;
    }
    let var = 1.0 / prec;
    Ok(Gaussian1D {
        mean: info * var,
        var,
    })
}

/// Removes `factor_msg` from `belief`, returning the extrinsic message.
pub fn divide(belief: Gaussian1D, factor_msg: Gaussian1D) -> Result<Gaussian1D> {
    if belief.is_dirac() || factor_msg.is_dirac() {
        return Err(Error::DiracOperand);
    }
    let pb = 1.0 / belief.var;
    let pm = 1.0 / factor_msg.var;
    let prec = pb - pm;
    if factor_msg.var <= belief.var + VARIANCE_FLOOR || prec <= 1e-12 * pb {
        return Err(Error::DegenerateExtrinsic {
            belief_var: belief.var,
            factor_var: factor_msg.var,
        });
    }
    let var = 1.0 / prec;
    Ok(Gaussian1D {
        mean: (belief.mean * pb - factor_msg.mean * pm) * var,
        var,
    })
}

pub fn mmse_estimate(belief: &Gaussian1D) -> f64 {
    belief.mean
}

/// Unnormalized density whose first two moments are wanted.
pub enum Integrand<'a> {
    Gaussian(Gaussian1D),
    /// `exp(-rate·(ξ - lower))` on `ξ > lower`, optionally multiplied by a
    /// Gaussian density.
    ExpTilted {
        gauss: Option<Gaussian1D>,
        rate: f64,
        lower: f64,
    },
    /// Arbitrary non-negative function on `[lo, hi]`.
    Custom(&'a dyn Fn(f64) -> f64, f64, f64),
}

fn fail(msg: impl std::fmt::Display) -> Error {
    Error::MomentMatchFailure(msg.to_string())
}

fn moments_about<F>(q: &Integrator, f: F, centre: f64, lo: f64, hi: f64) -> Result<Gaussian1D>
where
    F: Fn(f64) -> f64,
{
    let m = q
        .integrate(
            |x| {
                let w = f(x);
                let d = x - centre;
                [w, w * d, w * d * d]
            },
            lo,
            hi,
        )
        .map_err(fail)?;
    if !(m[0] > 0.0) || !m.iter().all(|v| v.is_finite()) {
        return Err(fail(format!("non-positive or non-finite mass {:e}", m[0])));
    }
    let mu = m[1] / m[0];
    let var = m[2] / m[0] - mu * mu;
    if !(var >= 0.0) || !var.is_finite() {
        return Err(fail(format!("negative variance {var:e}")));
    }
    Ok(Gaussian1D {
        mean: centre + mu,
        var,
    })
}

/// Gaussian with the same mean and variance as the normalized integrand.
pub fn moment_match(integrand: &Integrand<'_>) -> Result<Gaussian1D> {
    let q = Integrator::with_rel_tol(MOMENT_REL_TOL);
    match *integrand {
        Integrand::Gaussian(g) => {
            if !g.is_valid() || g.is_dirac() {
                return Err(fail("degenerate Gaussian integrand"));
            }
            let s = g.std();
            moments_about(
                &q,
                |x| (-0.5 * (x - g.mean) * (x - g.mean) / g.var).exp(),
                g.mean,
                g.mean - 12.0 * s,
                g.mean + 12.0 * s,
            )
        }
        Integrand::ExpTilted { gauss, rate, lower } => {
            if !rate.is_finite() || rate < 0.0 || !lower.is_finite() {
                return Err(fail(format!("bad exponential rate {rate}")));
            }
            match gauss {
                None => {
                    if rate <= 0.0 {
                        return Err(fail("improper exponential integrand"));
                    }
                    moments_about(
                        &q,
                        |x| (-rate * (x - lower)).exp(),
                        lower + 1.0 / rate,
                        lower,
                        lower + 45.0 / rate,
                    )
                }
                Some(g) => {
                    if !g.is_valid() || g.is_dirac() {
                        return Err(fail("degenerate Gaussian factor"));
                    }
                    // Gaussian times exponential is a shifted Gaussian.
                    let m = g.mean - rate * g.var;
                    let v = g.var;
                    let peak = m.max(lower);
                    let d = peak - m;
                    let hi = peak + 144.0 * v / ((d * d + 144.0 * v).sqrt() + d);
                    let lo = (m - 12.0 * v.sqrt()).max(lower);
                    if !(hi > lo) {
                        return Err(fail("empty support window"));
                    }
                    moments_about(
                        &q,
                        |x| (-0.5 * (x - peak) * (x - peak + 2.0 * d) / v).exp(),
                        peak,
                        lo,
                        hi,
                    )
                }
            }
        }
        Integrand::Custom(f, lo, hi) => {
            let first = moments_about(&q, f, 0.5 * (lo + hi), lo, hi)?;
            moments_about(&q, f, first.mean, lo, hi)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(m: f64, v: f64) -> Gaussian1D {
        Gaussian1D::new(m, v).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn product_examples() {
        let p = product(&[g(0.0, 1.0), g(2.0, 1.0)]).unwrap();
        assert_eq!(p, g(1.0, 0.5));
        assert_eq!(product(&[g(3.0, 2.0)]).unwrap(), g(3.0, 2.0));
        let p = product(&[g(1.0, 1.0), g(2.0, 2.0), g(3.0, 4.0)]).unwrap();
        assert!(close(p.mean, 2.75 / 1.75, 1e-15));
        assert!(close(p.var, 1.0 / 1.75, 1e-15));
    }

    #[test]
    fn product_errors() {
        assert!(matches!(product(&[]), Err(Error::EmptyProduct)));
        assert!(matches!(
            product(&[g(0.0, 1.0), Gaussian1D::dirac(1.0)]),
            Err(Error::DiracOperand)
        ));
    }

    #[test]
    fn divide_examples() {
        assert_eq!(divide(g(1.0, 0.5), g(2.0, 1.0)).unwrap(), g(0.0, 1.0));
        let d = divide(g(0.0, 1.0), g(0.0, 4.0)).unwrap();
        assert_eq!(d.mean, 0.0);
        assert!(close(d.var, 4.0 / 3.0, 1e-15));
        assert!(matches!(
            divide(g(2.0, 1.0), g(2.0, 1.0)),
            Err(Error::DegenerateExtrinsic { .. })
        ));
    }

    #[test]
    fn mmse_examples() {
        assert_eq!(mmse_estimate(&g(5.0, 2.0)), 5.0);
        assert_eq!(mmse_estimate(&g(0.0, 1.0)), 0.0);
        assert_eq!(mmse_estimate(&g(-3.2, 0.01)), -3.2);
    }

    #[test]
    fn invalid_construction() {
        assert!(Gaussian1D::new(f64::NAN, 1.0).is_err());
        assert!(Gaussian1D::new(0.0, -1.0).is_err());
        assert!(Gaussian1D::new(0.0, 0.0).unwrap().is_dirac());
        assert_eq!(g(1.0, 0.0).floored().var, VARIANCE_FLOOR);
    }

    #[test]
    fn moment_match_gaussian_fixed_point() {
        let r = moment_match(&Integrand::Gaussian(g(1.0, 2.0))).unwrap();
        assert!(close(r.mean, 1.0, 1e-8));
        assert!(close(r.var, 2.0, 1e-8));
    }

    #[test]
    fn moment_match_half_normal() {
        let r = moment_match(&Integrand::ExpTilted {
            gauss: Some(g(0.0, 1.0)),
            rate: 0.0,
            lower: 0.0,
        })
        .unwrap();
        let pi = std::f64::consts::PI;
        assert!(close(r.mean, (2.0 / pi).sqrt(), 1e-8));
        assert!(close(r.var, 1.0 - 2.0 / pi, 1e-8));
        assert!((r.mean - 0.7979).abs() < 1e-4);
        assert!((r.var - 0.3634).abs() < 1e-4);
    }

    #[test]
    fn moment_match_pure_exponential() {
        let r = moment_match(&Integrand::ExpTilted {
            gauss: None,
            rate: 0.38,
            lower: 0.0,
        })
        .unwrap();
        assert!(close(r.mean, 1.0 / 0.38, 1e-8));
        assert!(close(r.var, 1.0 / (0.38 * 0.38), 1e-8));
    }

    #[test]
    fn moment_match_custom_matches_tilted() {
        let f = |x: f64| (-0.5 * (x - 5.0) * (x - 5.0) - 0.38 * x).exp();
        let a = moment_match(&Integrand::Custom(&f, 0.0, 20.0)).unwrap();
        let b = moment_match(&Integrand::ExpTilted {
            gauss: Some(g(5.0, 1.0)),
            rate: 0.38,
            lower: 0.0,
        })
        .unwrap();
        assert!(close(a.mean, b.mean, 1e-8));
        assert!(close(a.var, b.var, 1e-8));
    }

    #[test]
    fn moment_match_far_tail() {
        // Gaussian mass sits far below the truncation point.
        let r = moment_match(&Integrand::ExpTilted {
            gauss: Some(g(-30.0, 1.0)),
            rate: 0.5,
            lower: 0.0,
        })
        .unwrap();
        // Asymptotically exponential with rate (lower - m')/v = 30.5.
        assert!((r.mean - 1.0 / 30.5).abs() < 2e-4);
        assert!(r.var > 0.0);
    }

    #[test]
    fn moment_match_errors() {
        assert!(matches!(
            moment_match(&Integrand::ExpTilted { gauss: None, rate: 0.0, lower: 0.0 }),
            Err(Error::MomentMatchFailure(_))
        ));
        let zero = |_x: f64| 0.0;
        assert!(matches!(
            moment_match(&Integrand::Custom(&zero, 0.0, 1.0)),
            Err(Error::MomentMatchFailure(_))
        ));
    }
}
