//! Variational (mean-field) message passing.
//!
//! Agents broadcast their beliefs. Every factor message uses point estimates
//! of the other variables only, so its variance is the fixed range noise
//! `σ_d²` and belief variances depend on the prediction variance, `σ_d` and
//! the number of usable links alone.

use log::debug;

use crate::error::Result;
use crate::gaussian::Gaussian1D;
use crate::linearize::{linearize, LinearizedRange};
use crate::model::{BiasEstimate, Belief, Counters, Estimate, Incident, SlotOutput, SlotProblem};
use crate::schedule::Schedule;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VmpLinkInputs {
    pub z: f64,
    /// +1 when `i` received the measurement, −1 when it transmitted.
    pub s: f64,
    pub own: Estimate,
    pub nbr: Estimate,
    pub lin: LinearizedRange,
    /// Current bias belief mean on NLOS links, unclamped.
    pub bias_mean: Option<f64>,
    pub sigma_d2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VmpMessages {
    pub x: Gaussian1D,
    pub y: Gaussian1D,
    pub t: Gaussian1D,
    pub bias: Option<Gaussian1D>,
}

pub fn vmp_factor_to_variable(inp: &VmpLinkInputs) -> VmpMessages {
    let vd = inp.sigma_d2;
    let b_hat = inp.bias_mean.map_or(0.0, |b| b.max(0.0));
    let dt = inp.s * (inp.own.t - inp.nbr.t);
    let u = inp.z - dt - b_hat;
    let fixed = |mean| Gaussian1D { mean, var: vd };
    VmpMessages {
        x: fixed(inp.nbr.x + u * inp.lin.lambda),
        y: fixed(inp.nbr.y + u * inp.lin.gamma),
        t: fixed(inp.nbr.t + inp.s * (inp.z - inp.lin.d_hat - b_hat)),
        bias: inp.bias_mean.map(|_| fixed(inp.z - dt - inp.lin.d_hat)),
    }
}

/// Bias belief from the factor message: the exponential prior shifts the
/// mean by `σ_d²·λ`. Negative means are kept.
pub fn vmp_bias_belief(msg: Gaussian1D, rate: f64) -> Gaussian1D {
    Gaussian1D {
        mean: msg.mean - msg.var * rate,
        var: msg.var,
    }
}

/// Prediction combined with factor message means, each with fixed
/// precision `1/σ_d²`.
pub fn vmp_belief(prediction: &Belief, msgs: &[Belief], sigma_d2: f64) -> Belief {
    let k = msgs.len() as f64;
    let combine = |pred: Gaussian1D, sum: f64| {
        let prec = 1.0 / pred.var + k / sigma_d2;
        Gaussian1D {
            mean: (pred.mean / pred.var + sum / sigma_d2) / prec,
            var: 1.0 / prec,
        }
        .floored()
    };
    Belief {
        x: combine(prediction.x, msgs.iter().map(|m| m.x.mean).sum()),
        y: combine(prediction.y, msgs.iter().map(|m| m.y.mean).sum()),
        t: combine(prediction.t, msgs.iter().map(|m| m.t.mean).sum()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VmpState {
    pub belief: Belief,
    /// Bias beliefs of the NLOS links this agent received.
    pub bias: Vec<Option<Gaussian1D>>,
}

pub struct VmpEngine<'a> {
    problem: &'a SlotProblem,
    topo: Vec<Vec<Incident>>,
}

impl<'a> VmpEngine<'a> {
    pub fn new(problem: &'a SlotProblem) -> Result<Self> {
        problem.validate()?;
        Ok(Self {
            problem,
            topo: problem.topology(),
        })
    }

    pub fn topology(&self) -> &[Vec<Incident>] {
        &self.topo
    }

    pub fn initial_states(&self) -> Vec<VmpState> {
        let r = self.problem.nlos_rate;
        self.problem
            .prior
            .iter()
            .zip(&self.topo)
            .map(|(p, links)| VmpState {
                belief: *p,
                bias: links
                    .iter()
                    .map(|l| {
                        (l.nlos && l.is_receiver()).then_some(Gaussian1D {
                            mean: 1.0 / r,
                            var: 1.0 / (r * r),
                        })
                    })
                    .collect(),
            })
            .collect()
    }

    fn neighbor_estimate(&self, link: &Incident, snapshot: &[VmpState]) -> Estimate {
        let a = self.problem.n_anchors();
        if link.nbr < a {
            let p = self.problem.anchors[link.nbr];
            Estimate { x: p.0, y: p.1, t: 0.0 }
        } else {
            snapshot[link.nbr - a].belief.estimate()
        }
    }

    fn bias_mean(&self, link: &Incident, k: usize, st: &VmpState, snapshot: &[VmpState]) -> Option<f64> {
        if !link.nlos {
            return None;
        }
        if link.is_receiver() {
            return st.bias[k].map(|b| b.mean);
        }
        let a = self.problem.n_anchors();
        let other = &snapshot[link.nbr - a];
        let b = link.nbr_slot.and_then(|s| other.bias[s]);
        Some(b.map_or(1.0 / self.problem.nlos_rate, |b| b.mean))
    }

    /// Factor messages of every usable link of agent `i` given its own
    /// current estimate.
    fn messages(&self, i: usize, own: Estimate, st: &VmpState, snapshot: &[VmpState], counters: &mut Counters) -> Vec<(usize, VmpMessages)> {
        let vd = self.problem.sigma_d * self.problem.sigma_d;
        let mut out = Vec::with_capacity(self.topo[i].len());
        for (k, link) in self.topo[i].iter().enumerate() {
            let nbr = self.neighbor_estimate(link, snapshot);
            let lin = match linearize((own.x, own.y), (nbr.x, nbr.y)) {
                Ok(l) => l,
                Err(e) => {
                    debug!("agent {} link {}: {e}", i + self.problem.n_anchors(), link.meas);
                    counters.skipped_links += 1;
                    continue;
                }
            };
            let m = vmp_factor_to_variable(&VmpLinkInputs {
                z: link.z,
                s: link.s,
                own,
                nbr,
                lin,
                bias_mean: self.bias_mean(link, k, st, snapshot),
                sigma_d2: vd,
            });
            out.push((k, m));
        }
        out
    }

    /// One mean-field sweep over the agent's own variables: position, then
    /// clock offset, then the biases it owns, each from the latest values of
    /// the others.
    pub fn local_cycle(&self, i: usize, st: &mut VmpState, snapshot: &[VmpState], counters: &mut Counters) {
        let vd = self.problem.sigma_d * self.problem.sigma_d;
        let prior = &self.problem.prior[i];
        let to_beliefs = |ms: &[(usize, VmpMessages)]| -> Vec<Belief> { ms.iter().map(|(_, m)| Belief::new(m.x, m.y, m.t)).collect() };

        let ms = self.messages(i, st.belief.estimate(), st, snapshot, counters);
        st.belief.t = vmp_belief(prior, &to_beliefs(&ms), vd).t;

        let ms = self.messages(i, st.belief.estimate(), st, snapshot, counters);
        let b = vmp_belief(prior, &to_beliefs(&ms), vd);
        st.belief.x = b.x;
        st.belief.y = b.y;

        if st.bias.iter().any(Option::is_some) {
            let ms = self.messages(i, st.belief.estimate(), st, snapshot, counters);
            for (k, m) in ms {
                if let (true, Some(b)) = (self.topo[i][k].is_receiver(), m.bias) {
                    st.bias[k] = Some(vmp_bias_belief(b, self.problem.nlos_rate));
                }
            }
        }
    }

    pub fn external_round(&self, prev: &[VmpState], n_int: usize, order: &[usize], counters: &mut Counters) -> Vec<VmpState> {
        let mut next = prev.to_vec();
        for &i in order {
            let mut st = prev[i].clone();
            for _ in 0..n_int {
                self.local_cycle(i, &mut st, prev, counters);
            }
            next[i] = st;
        }
        next
    }

    /// Three belief means, plus one bias mean per agent–agent NLOS link the
    /// agent received.
    pub fn params_per_round(&self, i: usize) -> u64 {
        let links = &self.topo[i];
        if links.is_empty() {
            return 0;
        }
        let a = self.problem.n_anchors();
        3 + links
            .iter()
            .filter(|l| l.nlos && l.is_receiver() && l.nbr >= a)
            .count() as u64
    }

    fn output(&self, states: &[VmpState], history: Vec<Vec<Estimate>>, comm: Vec<u64>, counters: Counters) -> SlotOutput {
        let mut bias = Vec::new();
        for (st, links) in states.iter().zip(&self.topo) {
            for (b, link) in st.bias.iter().zip(links) {
                if let Some(b) = b {
                    bias.push(BiasEstimate {
                        meas: link.meas,
                        belief: *b,
                    });
                }
            }
        }
        bias.sort_by_key(|b| b.meas);
        SlotOutput {
            beliefs: states.iter().map(|s| s.belief).collect(),
            history,
            comm,
            bias,
            counters,
        }
    }
}

pub fn run_slot_vmp(problem: &SlotProblem, n_iter: usize) -> Result<SlotOutput> {
    let engine = VmpEngine::new(problem)?;
    let order: Vec<usize> = (0..problem.n_agents()).collect();
    let mut counters = Counters::default();
    let mut comm = vec![0; problem.n_agents()];
    let mut states = engine.initial_states();
    let mut history = Vec::with_capacity(n_iter);
    for _ in 0..n_iter {
        states = engine.external_round(&states, 1, &order, &mut counters);
        for (i, c) in comm.iter_mut().enumerate() {
            *c += engine.params_per_round(i);
        }
        history.push(states.iter().map(|s| s.belief.estimate()).collect());
    }
    Ok(engine.output(&states, history, comm, counters))
}

pub fn run_slot_vmp_scheduled(problem: &SlotProblem, schedule: Schedule) -> Result<SlotOutput> {
    schedule.validate()?;
    let engine = VmpEngine::new(problem)?;
    let order: Vec<usize> = (0..problem.n_agents()).collect();
    let mut counters = Counters::default();
    let mut comm = vec![0; problem.n_agents()];
    let mut states = engine.initial_states();
    let mut history = Vec::with_capacity(schedule.n_ext);
    for _ in 0..schedule.n_ext {
        states = engine.external_round(&states, schedule.n_int, &order, &mut counters);
        for (i, c) in comm.iter_mut().enumerate() {
            *c += engine.params_per_round(i);
        }
        history.push(states.iter().map(|s| s.belief.estimate()).collect());
    }
    Ok(engine.output(&states, history, comm, counters))
}
