//! Data shared by the inference engines: beliefs, per-slot problems and
//! slot outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian1D, VARIANCE_FLOOR};
use crate::world::{Measurement, NoiseModel};
use crate::C;

/// Marginal beliefs of one node. The clock component `t` is `c·θ` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub x: Gaussian1D,
    pub y: Gaussian1D,
    pub t: Gaussian1D,
}

impl Belief {
    pub fn new(x: Gaussian1D, y: Gaussian1D, t: Gaussian1D) -> Self {
        Self { x, y, t }
    }

    /// Exact constants of an anchor.
    pub fn anchor(position: (f64, f64)) -> Self {
        Self {
            x: Gaussian1D::dirac(position.0),
            y: Gaussian1D::dirac(position.1),
            t: Gaussian1D::dirac(0.0),
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.x.mean, self.y.mean)
    }

    /// Clock offset belief in seconds.
    pub fn theta_seconds(&self) -> Gaussian1D {
        self.t.scaled(1.0 / C)
    }

    pub fn vars(&self) -> [Gaussian1D; 3] {
        [self.x, self.y, self.t]
    }

    pub fn from_vars(v: [Gaussian1D; 3]) -> Self {
        Self {
            x: v[0],
            y: v[1],
            t: v[2],
        }
    }

    pub fn floored(self) -> Self {
        Self {
            x: self.x.floored(),
            y: self.y.floored(),
            t: self.t.floored(),
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            x: self.x.mean,
            y: self.y.mean,
            t: self.t.mean,
        }
    }
}

/// Point estimate of one agent; `t` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

/// Prediction for standard or broadcast BP: the previous belief pushed
/// through the transition model, variances added.
pub fn prediction_message(prev: &Belief, velocity: (f64, f64), dt: f64, noise: &NoiseModel) -> Belief {
    if prev.x.is_dirac() && prev.y.is_dirac() && prev.t.is_dirac() && velocity == (0.0, 0.0) {
        return *prev;
    }
    let su = noise.sigma_utheta_m();
    Belief {
        x: Gaussian1D {
            mean: prev.x.mean + velocity.0 * dt,
            var: prev.x.var + noise.sigma_ux * noise.sigma_ux,
        },
        y: Gaussian1D {
            mean: prev.y.mean + velocity.1 * dt,
            var: prev.y.var + noise.sigma_uy * noise.sigma_uy,
        },
        t: Gaussian1D {
            mean: prev.t.mean,
            var: prev.t.var + su * su,
        },
    }
}

/// Prediction for VMP: same means, but only the transition variance.
pub fn vmp_prediction(prev: &Belief, velocity: (f64, f64), dt: f64, noise: &NoiseModel) -> Belief {
    let su = noise.sigma_utheta_m();
    Belief {
        x: Gaussian1D {
            mean: prev.x.mean + velocity.0 * dt,
            var: (noise.sigma_ux * noise.sigma_ux).max(VARIANCE_FLOOR),
        },
        y: Gaussian1D {
            mean: prev.y.mean + velocity.1 * dt,
            var: (noise.sigma_uy * noise.sigma_uy).max(VARIANCE_FLOOR),
        },
        t: Gaussian1D {
            mean: prev.t.mean,
            var: (su * su).max(VARIANCE_FLOOR),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BpMode {
    Standard,
    Broadcast,
}

/// Inference problem of one time slot.
///
/// Nodes `0..anchors.len()` are anchors, the rest are agents; `prior[k]`
/// belongs to node `anchors.len() + k`.
#[derive(Debug, Clone)]
pub struct SlotProblem {
    pub anchors: Vec<(f64, f64)>,
    pub prior: Vec<Belief>,
    pub measurements: Vec<Measurement>,
    /// Model range noise standard deviation, meters.
    pub sigma_d: f64,
    pub nlos_rate: f64,
    /// When false, NLOS links are processed as if they were LOS.
    pub nlos_aware: bool,
}

impl SlotProblem {
    pub fn n_anchors(&self) -> usize {
        self.anchors.len()
    }

    pub fn n_agents(&self) -> usize {
        self.prior.len()
    }

    pub fn is_anchor(&self, id: usize) -> bool {
        id < self.anchors.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_d > 0.0) {
            return Err(Error::InvalidInput(format!("sigma_d must be positive, got {}", self.sigma_d)));
        }
        let n = self.anchors.len() + self.prior.len();
        for m in &self.measurements {
            if m.tx >= n || m.rx >= n || m.tx == m.rx {
                return Err(Error::InvalidInput(format!("measurement {}→{} out of range", m.tx, m.rx)));
            }
            if self.is_anchor(m.tx) && self.is_anchor(m.rx) {
                return Err(Error::InvalidInput("anchor–anchor measurement".into()));
            }
            if !m.z.is_finite() {
                return Err(Error::InvalidInput("non-finite measurement".into()));
            }
        }
        for (k, b) in self.prior.iter().enumerate() {
            for g in b.vars() {
                if !g.is_valid() || g.var <= 0.0 {
                    return Err(Error::InvalidInput(format!("agent {k} prior must have positive variances")));
                }
            }
        }
        Ok(())
    }

    /// Incident links of every agent, in measurement order.
    pub fn topology(&self) -> Vec<Vec<Incident>> {
        let a = self.n_anchors();
        let mut inc: Vec<Vec<Incident>> = vec![Vec::new(); self.n_agents()];
        for (mi, m) in self.measurements.iter().enumerate() {
            for (me, other, s) in [(m.rx, m.tx, 1.0), (m.tx, m.rx, -1.0)] {
                if me >= a {
                    inc[me - a].push(Incident {
                        meas: mi,
                        nbr: other,
                        s,
                        z: m.z,
                        nlos: m.nlos && self.nlos_aware,
                        nbr_slot: None,
                    });
                }
            }
        }
        // Cross references into the neighbor's list.
        for i in 0..inc.len() {
            for k in 0..inc[i].len() {
                let nbr = inc[i][k].nbr;
                if nbr >= a {
                    let meas = inc[i][k].meas;
                    inc[i][k].nbr_slot = inc[nbr - a].iter().position(|l| l.meas == meas);
                }
            }
        }
        inc
    }
}

/// One link seen from an agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Incident {
    pub meas: usize,
    /// Node id of the other endpoint.
    pub nbr: usize,
    /// +1 when this agent received the measurement, −1 when it transmitted.
    pub s: f64,
    pub z: f64,
    /// NLOS and handled as such.
    pub nlos: bool,
    /// Position of this link in the neighbor's incident list (agents only).
    pub nbr_slot: Option<usize>,
}

impl Incident {
    pub fn is_receiver(&self) -> bool {
        self.s > 0.0
    }
}

/// Bias belief of one NLOS link, owned by the receiving agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasEstimate {
    pub meas: usize,
    pub belief: Gaussian1D,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub skipped_links: u64,
    pub extrinsic_fallbacks: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutput {
    pub beliefs: Vec<Belief>,
    /// Estimates after every external round.
    pub history: Vec<Vec<Estimate>>,
    /// Transmitted parameters per agent.
    pub comm: Vec<u64>,
    pub bias: Vec<BiasEstimate>,
    pub counters: Counters,
}

impl SlotOutput {
    pub fn estimates(&self) -> Vec<Estimate> {
        self.beliefs.iter().map(Belief::estimate).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise() -> NoiseModel {
        NoiseModel {
            sigma_d: 1.0,
            sigma_ux: 1.0,
            sigma_uy: 1.0,
            sigma_utheta: 1e-8,
            nlos_rate: 0.38,
        }
    }

    fn g(m: f64, v: f64) -> Gaussian1D {
        Gaussian1D { mean: m, var: v }
    }

    #[test]
    fn bp_prediction_examples() {
        let prev = Belief::new(g(2.0, 0.5), g(0.0, 1.0), g(C * 1e-8, C * C * 1e-16));
        let p = prediction_message(&prev, (1.0, 0.0), 1.0, &noise());
        assert_eq!(p.x, g(3.0, 1.5));
        let th = p.theta_seconds();
        assert!((th.mean - 1e-8).abs() < 1e-22);
        assert!((th.var - 2e-16).abs() < 1e-28);
        let a = Belief::anchor((5.0, 5.0));
        assert_eq!(prediction_message(&a, (0.0, 0.0), 1.0, &noise()), a);
    }

    #[test]
    fn vmp_prediction_examples() {
        let prev = Belief::new(g(2.0, 0.5), g(0.0, 1.0), g(C * 5e-9, 123.0));
        let p = vmp_prediction(&prev, (1.0, 0.0), 1.0, &noise());
        assert_eq!(p.x, g(3.0, 1.0));
        let th = p.theta_seconds();
        assert!((th.mean - 5e-9).abs() < 1e-22);
        assert!((th.var - 1e-16).abs() < 1e-28);
        let still = NoiseModel {
            sigma_ux: 0.0,
            sigma_uy: 0.0,
            sigma_utheta: 0.0,
            ..noise()
        };
        let p = vmp_prediction(&prev, (0.0, 0.0), 1.0, &still);
        assert_eq!(p.x.var, VARIANCE_FLOOR);
        assert_eq!(p.t.var, VARIANCE_FLOOR);
    }

    #[test]
    fn topology_signs_and_slots() {
        let m = |tx, rx| Measurement {
            tx,
            rx,
            slot: 1,
            z: 1.0,
            nlos: false,
            bias: 0.0,
        };
        let p = SlotProblem {
            anchors: vec![(0.0, 0.0)],
            prior: vec![Belief::new(g(0.0, 1.0), g(0.0, 1.0), g(0.0, 1.0)); 2],
            measurements: vec![m(0, 1), m(0, 2), m(1, 2)],
            sigma_d: 1.0,
            nlos_rate: 0.38,
            nlos_aware: true,
        };
        let t = p.topology();
        assert_eq!(t[0].len(), 2);
        assert_eq!(t[0][0].s, 1.0);
        assert_eq!(t[0][1].s, -1.0);
        assert_eq!(t[0][1].nbr_slot, Some(1));
        assert_eq!(t[1][1].nbr_slot, Some(1));
        assert_eq!(t[1][0].nbr_slot, None);
        assert!(p.validate().is_ok());
    }
}
