//! Standard and broadcast Gaussian belief propagation.
//!
//! The range factor of link `(i, j)` is the Gaussian likelihood of the
//! measurement with the cross term `‖p_i − p_j‖` expanded to first order.
//! Writing `a = x_i − x_j`, `b = y_i − y_j` and
//! `u = z − β − s·(t_i − t_j)`, the expanded exponent collapses to
//! `[(a − uλ)² + (b − uγ)²] / (2σ_d²)`, so every factor-to-variable message
//! is a Gaussian convolution with a closed form. NLOS links integrate the
//! exponential bias `β` and are moment matched.

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::gaussian::{divide, moment_match, product, Gaussian1D, Integrand};
use crate::linearize::{linearize, LinearizedRange};
use crate::model::{BiasEstimate, Belief, BpMode, Counters, Incident, SlotOutput, SlotProblem};
use crate::schedule::Schedule;

/// Everything one factor needs to message the variables of agent `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkView {
    pub z: f64,
    /// +1 when `i` received the measurement, −1 when it transmitted.
    pub s: f64,
    /// Variable-to-factor messages of `i`.
    pub own: Belief,
    /// Messages from the neighbor `j`; Dirac for anchors.
    pub nbr: Belief,
    pub lin: LinearizedRange,
    pub sigma_d2: f64,
}

/// Messages from one factor to `x_i`, `y_i` and `t_i`.
pub type FactorMessages = Belief;

#[derive(Debug, Clone, Copy)]
struct Terms {
    mu_u: f64,
    v_u: f64,
    m_a: f64,
    v_ad: f64,
    m_b: f64,
    v_bd: f64,
}

impl Terms {
    fn of(v: &LinkView) -> Self {
        let vd = v.sigma_d2;
        Self {
            mu_u: v.z - v.s * (v.own.t.mean - v.nbr.t.mean),
            v_u: v.own.t.var + v.nbr.t.var,
            m_a: v.own.x.mean - v.nbr.x.mean,
            v_ad: vd + v.own.x.var + v.nbr.x.var,
            m_b: v.own.y.mean - v.nbr.y.mean,
            v_bd: vd + v.own.y.var + v.nbr.y.var,
        }
    }
}

/// Message to one position axis: `c_t` is the direction cosine of the
/// target axis, `(c_o, m_o, v_o)` describe the other axis.
#[derive(Debug, Clone, Copy)]
struct AxisMessage {
    msg: Gaussian1D,
    /// Precision of `u` after absorbing the other axis.
    q: f64,
}

fn axis_message(c_t: f64, c_o: f64, m_o: f64, v_o: f64, nbr: Gaussian1D, mu_u: f64, v_u: f64, vd: f64) -> AxisMessage {
    let q = 1.0 / v_u + c_o * c_o / v_o;
    let u_bar = (mu_u / v_u + c_o * m_o / v_o) / q;
    AxisMessage {
        msg: Gaussian1D {
            mean: nbr.mean + c_t * u_bar,
            var: vd + nbr.var + c_t * c_t / q,
        },
        q,
    }
}

/// Posterior of `u` implied by the two position axes alone.
fn u_from_geometry(t: &Terms, lin: &LinearizedRange) -> Gaussian1D {
    let (l, g) = (lin.lambda, lin.gamma);
    let p = l * l / t.v_ad + g * g / t.v_bd;
    Gaussian1D {
        mean: (l * t.m_a / t.v_ad + g * t.m_b / t.v_bd) / p,
        var: 1.0 / p,
    }
}

fn check_view(v: &LinkView) -> Result<()> {
    if !(v.sigma_d2 > 0.0) {
        return Err(Error::InvalidInput("sigma_d² must be positive".into()));
    }
    if !(v.own.x.var > 0.0 && v.own.y.var > 0.0 && v.own.t.var > 0.0) {
        return Err(Error::InvalidInput("agent messages need positive variance".into()));
    }
    Ok(())
}

/// LOS messages for a link whose other endpoint is an anchor at
/// `(nbr.x.mean, nbr.y.mean)` with zero clock offset.
pub fn bp_factor_to_variable_anchor(v: &LinkView) -> Result<FactorMessages> {
    check_view(v)?;
    if !(v.nbr.x.is_dirac() && v.nbr.y.is_dirac() && v.nbr.t.is_dirac()) {
        return Err(Error::InvalidInput("anchor messages must be exact".into()));
    }
    let (l, g, vd) = (v.lin.lambda, v.lin.gamma, v.sigma_d2);
    let (xa, ya) = (v.nbr.x.mean, v.nbr.y.mean);
    let vt = v.own.t.var;
    let mu = v.z - v.s * v.own.t.mean;
    let vxd = vd + v.own.x.var;
    let vyd = vd + v.own.y.var;
    let ma = v.own.x.mean - xa;
    let mb = v.own.y.mean - ya;

    let qx = 1.0 / vt + g * g / vyd;
    let ux = (mu / vt + g * mb / vyd) / qx;
    let qy = 1.0 / vt + l * l / vxd;
    let uy = (mu / vt + l * ma / vxd) / qy;
    let p = l * l / vxd + g * g / vyd;
    let ut = (l * ma / vxd + g * mb / vyd) / p;

    Ok(Belief {
        x: Gaussian1D {
            mean: xa + l * ux,
            var: vd + l * l / qx,
        },
        y: Gaussian1D {
            mean: ya + g * uy,
            var: vd + g * g / qy,
        },
        t: Gaussian1D {
            mean: v.s * (v.z - ut),
            var: 1.0 / p,
        },
    })
}

/// LOS messages for a link between two agents.
pub fn bp_factor_to_variable_agent(v: &LinkView) -> Result<FactorMessages> {
    check_view(v)?;
    let t = Terms::of(v);
    let (l, g, vd) = (v.lin.lambda, v.lin.gamma, v.sigma_d2);
    let x = axis_message(l, g, t.m_b, t.v_bd, v.nbr.x, t.mu_u, t.v_u, vd);
    let y = axis_message(g, l, t.m_a, t.v_ad, v.nbr.y, t.mu_u, t.v_u, vd);
    let u = u_from_geometry(&t, &v.lin);
    Ok(Belief {
        x: x.msg,
        y: y.msg,
        t: Gaussian1D {
            mean: v.nbr.t.mean + v.s * (v.z - u.mean),
            var: u.var + v.nbr.t.var,
        },
    })
}

/// Moments of the NLOS bias weight seen by a position axis.
fn axis_bias_weight(c_o: f64, m_o: f64, v_o: f64, mu_u: f64, v_u: f64, rate: f64) -> Result<Gaussian1D> {
    let s = v_o + c_o * c_o * v_u;
    let prec = c_o * c_o / s;
    let gauss = if prec > 1e-14 * rate * rate {
        Some(Gaussian1D {
            mean: mu_u - m_o / c_o,
            var: 1.0 / prec,
        })
    } else {
        None
    };
    moment_match(&Integrand::ExpTilted {
        gauss,
        rate,
        lower: 0.0,
    })
}

/// Messages for an NLOS link with bias prior `Exp(rate)`.
///
/// Returns the moment-matched messages and, when `with_bias` is set, the
/// moment-matched belief of the bias.
pub fn bp_factor_to_variable_nlos(v: &LinkView, rate: f64, with_bias: bool) -> Result<(FactorMessages, Option<Gaussian1D>)> {
    check_view(v)?;
    if !(rate > 0.0) {
        return Err(Error::InvalidInput("NLOS rate must be positive".into()));
    }
    let t = Terms::of(v);
    let (l, g, vd) = (v.lin.lambda, v.lin.gamma, v.sigma_d2);

    let x = axis_message(l, g, t.m_b, t.v_bd, v.nbr.x, t.mu_u, t.v_u, vd);
    let bx = axis_bias_weight(g, t.m_b, t.v_bd, t.mu_u, t.v_u, rate)?;
    let kx = l / (t.v_u * x.q);
    let y = axis_message(g, l, t.m_a, t.v_ad, v.nbr.y, t.mu_u, t.v_u, vd);
    let by = axis_bias_weight(l, t.m_a, t.v_ad, t.mu_u, t.v_u, rate)?;
    let ky = g / (t.v_u * y.q);

    let u = u_from_geometry(&t, &v.lin);
    let bt = moment_match(&Integrand::ExpTilted {
        gauss: None,
        rate,
        lower: 0.0,
    })?;

    let msgs = Belief {
        x: Gaussian1D {
            mean: x.msg.mean - kx * bx.mean,
            var: x.msg.var + kx * kx * bx.var,
        },
        y: Gaussian1D {
            mean: y.msg.mean - ky * by.mean,
            var: y.msg.var + ky * ky * by.var,
        },
        t: Gaussian1D {
            mean: v.nbr.t.mean + v.s * (v.z - bt.mean - u.mean),
            var: u.var + v.nbr.t.var + bt.var,
        },
    };

    let bias = if with_bias {
        Some(moment_match(&Integrand::ExpTilted {
            gauss: Some(Gaussian1D {
                mean: t.mu_u - u.mean,
                var: u.var + t.v_u,
            }),
            rate,
            lower: 0.0,
        })?)
    } else {
        None
    };
    Ok((msgs, bias))
}

/// Belief of one agent: prediction times every available factor message.
pub fn compute_belief(prediction: &Belief, msgs: &[Belief]) -> Result<Belief> {
    let mut out = [Gaussian1D::dirac(0.0); 3];
    let mut terms = Vec::with_capacity(msgs.len() + 1);
    for (k, slot) in out.iter_mut().enumerate() {
        terms.clear();
        terms.push(prediction.vars()[k]);
        terms.extend(msgs.iter().map(|m| m.vars()[k]));
        *slot = product(&terms)?.floored();
    }
    Ok(Belief::from_vars(out))
}

/// Extrinsic message; on a degenerate division the belief itself is sent.
/// The flag reports whether that fallback happened.
pub fn extrinsic_message(belief: Gaussian1D, factor_msg: Gaussian1D) -> (Gaussian1D, bool) {
    match divide(belief, factor_msg) {
        Ok(m) => (m.floored(), false),
        Err(_) => (belief, true),
    }
}

/// Per-agent engine state.
#[derive(Debug, Clone, PartialEq)]
pub struct BpState {
    pub belief: Belief,
    /// Variable-to-factor messages, one per incident link.
    pub out: Vec<Belief>,
    /// Factor-to-variable messages; `None` when the link was skipped.
    pub fin: Vec<Option<Belief>>,
    pub bias: Vec<Option<Gaussian1D>>,
}

pub struct BpEngine<'a> {
    problem: &'a SlotProblem,
    topo: Vec<Vec<Incident>>,
    mode: BpMode,
}

impl<'a> BpEngine<'a> {
    pub fn new(problem: &'a SlotProblem, mode: BpMode) -> Result<Self> {
        problem.validate()?;
        Ok(Self {
            problem,
            topo: problem.topology(),
            mode,
        })
    }

    pub fn topology(&self) -> &[Vec<Incident>] {
        &self.topo
    }

    pub fn initial_states(&self) -> Vec<BpState> {
        self.problem
            .prior
            .iter()
            .zip(&self.topo)
            .map(|(p, links)| BpState {
                belief: *p,
                out: vec![*p; links.len()],
                fin: vec![None; links.len()],
                bias: vec![None; links.len()],
            })
            .collect()
    }

    fn neighbor_message(&self, link: &Incident, snapshot: &[BpState]) -> Belief {
        let a = self.problem.n_anchors();
        if link.nbr < a {
            return Belief::anchor(self.problem.anchors[link.nbr]);
        }
        let other = &snapshot[link.nbr - a];
        match (self.mode, link.nbr_slot) {
            (BpMode::Standard, Some(k)) => other.out[k],
            _ => other.belief,
        }
    }

    /// One local update of agent `i` against the frozen neighbor snapshot.
    pub fn local_cycle(&self, i: usize, st: &mut BpState, snapshot: &[BpState], counters: &mut Counters) {
        let a = self.problem.n_anchors();
        let vd = self.problem.sigma_d * self.problem.sigma_d;
        let own_pt = st.belief.position();
        for (k, link) in self.topo[i].iter().enumerate() {
            let nbr = self.neighbor_message(link, snapshot);
            let lin = match linearize(own_pt, nbr.position()) {
                Ok(l) => l,
                Err(e) => {
                    debug!("agent {} link {}: {e}", i + a, link.meas);
                    counters.skipped_links += 1;
                    st.fin[k] = None;
                    continue;
                }
            };
            let view = LinkView {
                z: link.z,
                s: link.s,
                own: st.out[k],
                nbr,
                lin,
                sigma_d2: vd,
            };
            let res = if link.nlos {
                bp_factor_to_variable_nlos(&view, self.problem.nlos_rate, link.is_receiver()).map(|(m, b)| {
                    st.bias[k] = b;
                    m
                })
            } else if link.nbr < a {
                bp_factor_to_variable_anchor(&view)
            } else {
                bp_factor_to_variable_agent(&view)
            };
            match res {
                Ok(m) => st.fin[k] = Some(m.floored()),
                Err(e) => {
                    warn!("agent {} link {} skipped: {e}", i + a, link.meas);
                    counters.skipped_links += 1;
                    st.fin[k] = None;
                }
            }
        }

        let msgs: Vec<Belief> = st.fin.iter().flatten().copied().collect();
        st.belief = compute_belief(&self.problem.prior[i], &msgs).expect("prediction has positive variance");

        for k in 0..st.out.len() {
            st.out[k] = match (self.mode, st.fin[k]) {
                (BpMode::Broadcast, _) | (_, None) => st.belief,
                (BpMode::Standard, Some(f)) => {
                    let b = st.belief.vars();
                    let f = f.vars();
                    let mut o = [Gaussian1D::dirac(0.0); 3];
                    for v in 0..3 {
                        let (m, fell) = extrinsic_message(b[v], f[v]);
                        counters.extrinsic_fallbacks += fell as u64;
                        o[v] = m;
                    }
                    Belief::from_vars(o)
                }
            };
        }
    }

    /// One external round: every agent runs `n_int` local cycles against
    /// `prev`, visiting agents in `order`.
    pub fn external_round(&self, prev: &[BpState], n_int: usize, order: &[usize], counters: &mut Counters) -> Vec<BpState> {
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

    /// Parameters each agent transmits in one external round.
    pub fn params_per_round(&self, i: usize) -> u64 {
        let deg = self.topo[i].len() as u64;
        if deg == 0 {
            return 0;
        }
        match self.mode {
            BpMode::Standard => 6 * deg,
            BpMode::Broadcast => 6,
        }
    }

    pub fn output(&self, states: &[BpState], history: Vec<Vec<crate::model::Estimate>>, comm: Vec<u64>, counters: Counters) -> SlotOutput {
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

/// Plain synchronous BP: `n_iter` rounds of one update per agent.
pub fn run_slot_bp(problem: &SlotProblem, mode: BpMode, n_iter: usize) -> Result<SlotOutput> {
    let engine = BpEngine::new(problem, mode)?;
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

/// BP under a two-loop schedule.
pub fn run_slot_bp_scheduled(problem: &SlotProblem, mode: BpMode, schedule: Schedule) -> Result<SlotOutput> {
    schedule.validate()?;
    let engine = BpEngine::new(problem, mode)?;
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
