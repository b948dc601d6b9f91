//! Reference solutions used to check the engines: nested adaptive quadrature
//! of message integrals and an importance-sampling particle BP over the exact
//! range likelihood.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gaussian::Gaussian1D;
use crate::model::{Belief, SlotProblem};
use crate::quadrature::Integrator;
use crate::world::normal;

/// Integration variable of [`quadrature_message`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dim {
    /// Whole real line; `centre` and `scale` only seed the window search.
    Line { centre: f64, scale: f64 },
    /// `[lower, ∞)`.
    HalfLine { lower: f64, scale: f64 },
    /// Whole real line for a variable in which the log-integrand is exactly
    /// quadratic. Integrated in closed form from a parabola through three
    /// points, checked at two more.
    Quadratic { centre: f64, scale: f64 },
}

const WINDOW_SIGMAS: f64 = 9.0;
/// Log-integrand drop below the peak required at both window ends.
const TAIL_DROP: f64 = 40.0;
const MAX_WIDENINGS: usize = 20;
const MAX_DIMS: usize = 3;
type Point = [f64; MAX_DIMS];

fn oracle_err(msg: impl std::fmt::Display) -> Error {
    Error::OracleFailure(msg.to_string())
}

struct Nested<'a> {
    log_f: &'a dyn Fn(&[f64]) -> f64,
    dims: &'a [Dim],
    rel_tol: f64,
}

impl Nested<'_> {
    fn quad(&self) -> Integrator {
        Integrator {
            rel_tol: self.rel_tol,
            abs_tol: 0.0,
            max_intervals: 200,
            initial_panels: 7,
        }
    }

    /// Integration window of `dims[level]` from a parabola through three
    /// values of the log-integrand, refined twice.
    fn window(&self, level: usize, point: Point) -> Result<(f64, f64, f64)> {
        let (lower, mut c, mut h) = match self.dims[level] {
            Dim::Line { centre, scale } | Dim::Quadratic { centre, scale } => (f64::NEG_INFINITY, centre, scale),
            Dim::HalfLine { lower, scale } => (lower, lower + 2.0 * scale, scale),
        };
        let mut k = 0.0;
        for _ in 0..3 {
            let c0 = c.max(lower + 1.01 * h);
            let mut f = [0.0; 3];
            for (fv, v) in f.iter_mut().zip([c0 - h, c0, c0 + h]) {
                *fv = self.log_value(level, point, v)?;
            }
            k = -(f[2] + f[0] - 2.0 * f[1]) / (h * h);
            if !(k > 0.0) || !k.is_finite() {
                if lower.is_finite() && f[2] < f[1] && f[1] < f[0] {
                    // Decreasing without curvature: exponential tail.
                    let slope = (f[0] - f[2]) / (2.0 * h);
                    return Ok((lower, lower + 60.0 / slope, lower));
                }
                return Err(oracle_err(format!("no curvature at level {level}: {f:?}")));
            }
            c = c0 + (f[2] - f[0]) / (2.0 * h * k);
            h = 1.0 / k.sqrt();
        }
        let s = 1.0 / k.sqrt();
        let (lo, hi, peak) = if lower.is_finite() {
            let peak = c.max(lower);
            let d = peak - c;
            let w2 = WINDOW_SIGMAS * WINDOW_SIGMAS * s * s;
            let hi = peak + w2 / ((d * d + w2).sqrt() + d);
            ((c - WINDOW_SIGMAS * s).max(lower), hi, peak)
        } else {
            (c - WINDOW_SIGMAS * s, c + WINDOW_SIGMAS * s, c)
        };
        // Tails heavier than Gaussian: widen until both ends are negligible.
        let floor = self.log_value(level, point, peak)? - TAIL_DROP;
        let widen = |mut end: f64| -> Result<f64> {
            for _ in 0..MAX_WIDENINGS {
                if end <= lower || self.log_value(level, point, end)? < floor {
                    return Ok(end.max(lower));
                }
                end = peak + 2.0 * (end - peak);
            }
            Err(oracle_err(format!("integrand does not decay at level {level}")))
        };
        Ok((widen(lo)?, widen(hi)?, peak))
    }

    fn log_value(&self, level: usize, mut point: Point, v: f64) -> Result<f64> {
        point[level] = v;
        self.log_integral(level + 1, point)
    }

    /// `ln ∫ exp(log_f)` over `dims[level..]` with `point` fixing the
    /// outer variables.
    fn log_integral(&self, level: usize, point: Point) -> Result<f64> {
        if level == self.dims.len() {
            return Ok((self.log_f)(&point[..level]));
        }
        if let Dim::Quadratic { centre, scale } = self.dims[level] {
            return self.quadratic_log_integral(level, point, centre, scale);
        }
        let (lo, hi, peak) = self.window(level, point)?;
        let top = self.log_value(level, point, peak)?;
        let mut failure = None;
        let j = self
            .quad()
            .integrate_scalar(
                |v| match self.log_value(level, point, v) {
                    Ok(l) => (l - top).exp(),
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                },
                lo,
                hi,
            )
            .map_err(oracle_err)?;
        if let Some(e) = failure {
            return Err(e);
        }
        if !(j > 0.0) {
            return Err(oracle_err(format!("zero mass at level {level}")));
        }
        Ok(top + j.ln())
    }

    fn quadratic_log_integral(&self, level: usize, point: Point, centre: f64, h: f64) -> Result<f64> {
        let mut f = [0.0; 5];
        for (fv, k) in f.iter_mut().zip(-2..=2) {
            *fv = self.log_value(level, point, centre + k as f64 * h)?;
        }
        let curv = -(f[3] + f[1] - 2.0 * f[2]) / (h * h);
        let slope = (f[3] - f[1]) / (2.0 * h);
        if !(curv > 0.0) || !curv.is_finite() {
            return Err(oracle_err(format!("no curvature at level {level}: {f:?}")));
        }
        let fit = |x: f64| f[2] + slope * x - 0.5 * curv * x * x;
        for (x, v) in [(-2.0 * h, f[0]), (2.0 * h, f[4])] {
            if (fit(x) - v).abs() > 1e-9 * (1.0 + v.abs()) {
                return Err(oracle_err(format!("log-integrand not quadratic at level {level}")));
            }
        }
        Ok(f[2] + slope * slope / (2.0 * curv) + 0.5 * (2.0 * std::f64::consts::PI / curv).ln())
    }

    fn moments(&self) -> Result<Gaussian1D> {
        let point = [0.0; MAX_DIMS];
        let (lo, hi, peak) = self.window(0, point)?;
        let top = self.log_value(0, point, peak)?;
        let mut failure = None;
        let m = self
            .quad()
            .integrate(
                |v| match self.log_value(0, point, v) {
                    Ok(l) => {
                        let w = (l - top).exp();
                        let d = v - peak;
                        [w, w * d, w * d * d]
                    }
                    Err(e) => {
                        failure.get_or_insert(e);
                        [0.0; 3]
                    }
                },
                lo,
                hi,
            )
            .map_err(oracle_err)?;
        if let Some(e) = failure {
            return Err(e);
        }
        if !(m[0] > 0.0) {
            return Err(oracle_err("zero total mass"));
        }
        let mu = m[1] / m[0];
        Ok(Gaussian1D {
            mean: peak + mu,
            var: m[2] / m[0] - mu * mu,
        })
    }
}

/// Mean and variance of the first variable of `exp(log_f)` after
/// integrating out the remaining ones.
///
/// Windows are located per level from the log-integrand, so `log_f` should
/// be (close to) concave in every variable.
pub fn quadrature_message(log_f: &dyn Fn(&[f64]) -> f64, dims: &[Dim]) -> Result<Gaussian1D> {
    if dims.is_empty() || dims.len() > MAX_DIMS {
        return Err(oracle_err(format!("{} integration dimensions", dims.len())));
    }
    Nested {
        log_f,
        dims,
        rel_tol: 1e-8,
    }
    .moments()
}

/// `ln Φ(t)` for the standard normal CDF, without underflow in the far
/// left tail.
fn ln_norm_cdf(t: f64) -> f64 {
    if t > -30.0 {
        (0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)).ln()
    } else {
        let r = 1.0 / (t * t);
        -0.5 * t * t - (-t).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + (1.0 - r + 3.0 * r * r - 15.0 * r * r * r).ln()
    }
}

/// Log-density of `g + β` with `β ~ Exp(rate)` independent of `g`.
fn ln_exp_modified_gauss(x: f64, g: Gaussian1D, rate: f64) -> f64 {
    let sd = g.var.sqrt();
    rate.ln() - rate * (x - g.mean) + 0.5 * rate * rate * g.var + ln_norm_cdf((x - g.mean - rate * g.var) / sd)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    X,
    Y,
    T,
}

/// One factor with explicit expansion points, for the quadrature oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkCase {
    pub z: f64,
    pub s: f64,
    /// Incoming messages of the target agent.
    pub own: Belief,
    /// Messages from the other endpoint.
    pub nbr: Belief,
    /// Expansion points of the two endpoints.
    pub own_point: (f64, f64),
    pub nbr_point: (f64, f64),
    pub sigma_d2: f64,
    /// Exponential bias rate for NLOS links.
    pub nlos_rate: Option<f64>,
}

/// Factor-to-variable message of `case` toward `target`, by integrating the
/// expanded likelihood against the incoming Gaussians.
///
/// The factor depends on the position pair only through `x_i − x_j` and
/// `y_i − y_j`, and on clocks and bias only through `q = s·(t_i − t_j) + β`.
/// The integral is taken over those combinations, whose input densities
/// follow exactly from the incoming Gaussians and the exponential bias prior,
/// and the neighbor's own uncertainty is convolved back at the end.
pub fn link_message_oracle(case: &LinkCase, target: Target) -> Result<Gaussian1D> {
    let (px, py) = (case.own_point.0 - case.nbr_point.0, case.own_point.1 - case.nbr_point.1);
    let d_hat = px.hypot(py);
    if !(d_hat > 0.0) {
        return Err(oracle_err("coincident expansion points"));
    }
    let (lam, gam) = (px / d_hat, py / d_hat);
    let vd = case.sigma_d2;
    let (o, n) = (case.own, case.nbr);
    let diff = |p: Gaussian1D, q: Gaussian1D| Gaussian1D {
        mean: p.mean - q.mean,
        var: p.var + q.var,
    };
    let (a, b, w) = (diff(o.x, n.x), diff(o.y, n.y), diff(o.t, n.t));
    let (z, s) = (case.z, case.s);
    let exponent = move |av: f64, bv: f64, qv: f64| {
        let u = z - qv;
        let lin = d_hat + lam * (av - px) + gam * (bv - py);
        -(u * u - 2.0 * u * lin + av * av + bv * bv) / (2.0 * vd)
    };
    let gauss = |g: Gaussian1D, v: f64| -0.5 * (v - g.mean) * (v - g.mean) / g.var;
    let line = |g: Gaussian1D| Dim::Line {
        centre: g.mean,
        scale: (g.var + vd).sqrt(),
    };
    let quadratic = |g: Gaussian1D| Dim::Quadratic {
        centre: g.mean,
        scale: (g.var + vd).sqrt(),
    };
    let free = |g: Gaussian1D| Dim::Line {
        centre: g.mean,
        scale: (vd + 1.0).sqrt(),
    };
    let q = Gaussian1D {
        mean: s * w.mean,
        var: w.var,
    };
    let rate = case.nlos_rate;
    // The q-density is costly for NLOS links; q is an outer variable below,
    // so the last value is reused across the innermost sweep.
    let memo = std::cell::Cell::new((f64::NAN, 0.0));
    let log_q = |v: f64| match rate {
        None => gauss(q, v),
        Some(r) => {
            let (last, value) = memo.get();
            if last == v {
                return value;
            }
            let value = ln_exp_modified_gauss(v, q, r);
            memo.set((v, value));
            value
        }
    };
    let q_dim = {
        let (bm, bv) = rate.map_or((0.0, 0.0), |r| (1.0 / r, 1.0 / (r * r)));
        line(Gaussian1D {
            mean: q.mean + bm,
            var: q.var + bv,
        })
    };

    let rel = match target {
        Target::X => quadrature_message(
            &|p: &[f64]| exponent(p[0], p[2], p[1]) + gauss(b, p[2]) + log_q(p[1]),
            &[free(a), q_dim, quadratic(b)],
        )?,
        Target::Y => quadrature_message(
            &|p: &[f64]| exponent(p[2], p[0], p[1]) + gauss(a, p[2]) + log_q(p[1]),
            &[free(b), q_dim, quadratic(a)],
        )?,
        Target::T => {
            // With no incoming clock message, t_i − t_j = s·(q − β) where q
            // is flat and the bias keeps its prior, independently.
            let mq = quadrature_message(
                &|p: &[f64]| exponent(p[1], p[2], p[0]) + gauss(a, p[1]) + gauss(b, p[2]),
                &[free(q), line(a), quadratic(b)],
            )?;
            let mb = match rate {
                None => Gaussian1D { mean: 0.0, var: 0.0 },
                Some(r) => quadrature_message(
                    &|p: &[f64]| -r * p[0],
                    &[Dim::HalfLine {
                        lower: 0.0,
                        scale: 1.0 / r,
                    }],
                )?,
            };
            Gaussian1D {
                mean: s * (mq.mean - mb.mean),
                var: mq.var + mb.var,
            }
        }
    };
    let shift = match target {
        Target::X => n.x,
        Target::Y => n.y,
        Target::T => n.t,
    };
    Ok(Gaussian1D {
        mean: rel.mean + shift.mean,
        var: rel.var + shift.var,
    })
}

/// Weighted samples of one agent's `(x, y, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Normalizes log-weights in place into weights summing to one.
    fn from_log_weights(particles: Vec<[f64; 3]>, logw: &[f64]) -> Result<Self> {
        let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Err(oracle_err("all particle weights vanished"));
        }
        let mut weights: Vec<f64> = logw.iter().map(|l| (l - top).exp()).collect();
        let sum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(Self { particles, weights })
    }

    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn mean(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for (p, w) in self.particles.iter().zip(&self.weights) {
            for k in 0..3 {
                m[k] += w * p[k];
            }
        }
        m
    }

    pub fn std(&self) -> [f64; 3] {
        let m = self.mean();
        let mut v = [0.0; 3];
        for (p, w) in self.particles.iter().zip(&self.weights) {
            for k in 0..3 {
                v[k] += w * (p[k] - m[k]) * (p[k] - m[k]);
            }
        }
        v.map(f64::sqrt)
    }

    /// Systematic resampling to `n` equally weighted particles.
    pub fn resample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Self {
        let step = 1.0 / n as f64;
        let mut u = rng.random::<f64>() * step;
        let mut out = Vec::with_capacity(n);
        let mut acc = 0.0;
        let mut k = 0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            while k < n && u < acc {
                out.push(self.particles[i]);
                u += step;
                k += 1;
            }
        }
        while out.len() < n {
            out.push(*self.particles.last().expect("non-empty set"));
        }
        Self {
            particles: out,
            weights: vec![step; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleSummary {
    pub mean: [f64; 3],
    pub std: [f64; 3],
    /// Monte-Carlo standard error of `mean`, `std/√ESS`.
    pub std_err: [f64; 3],
    pub ess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleBpConfig {
    pub particles: usize,
    pub iterations: usize,
    /// Particles drawn from a neighbor's belief to evaluate its message.
    pub neighbor_samples: usize,
    /// Standard-deviation inflation of the fitted proposal.
    pub inflation: f64,
    /// Proposal refits allowed per update before giving up.
    pub max_refits: usize,
    pub seed: u64,
}

impl Default for ParticleBpConfig {
    fn default() -> Self {
        Self {
            particles: 4000,
            iterations: 10,
            neighbor_samples: 500,
            inflation: 1.5,
            max_refits: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct DiagGauss {
    mean: [f64; 3],
    std: [f64; 3],
}

impl DiagGauss {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        std::array::from_fn(|k| self.mean[k] + normal(rng, self.std[k]))
    }

    /// Log-density up to a constant; zero-width axes are ignored.
    fn log_pdf(&self, p: &[f64; 3]) -> f64 {
        let mut l = 0.0;
        for k in 0..3 {
            if self.std[k] > 0.0 {
                let d = (p[k] - self.mean[k]) / self.std[k];
                l -= 0.5 * d * d + self.std[k].ln();
            }
        }
        l
    }
}

fn log_lik(z: f64, rx: &[f64; 3], tx: &[f64; 3], vd: f64) -> f64 {
    let d = (rx[0] - tx[0]).hypot(rx[1] - tx[1]);
    let r = z - d - (rx[2] - tx[2]);
    -0.5 * r * r / vd
}

/// Importance-sampling BP over the exact range likelihood.
///
/// Each round, every agent draws particles from a Gaussian fitted to its
/// previous belief, weights them by prior times incoming messages, and
/// refits when the effective sample size falls below a tenth of the set.
/// Messages from agents are Monte-Carlo averages over samples of the
/// sender's previous belief. Only LOS links are supported.
pub fn particle_bp_slot(problem: &SlotProblem, cfg: &ParticleBpConfig) -> Result<Vec<ParticleSummary>> {
    if cfg.particles == 0 || cfg.neighbor_samples == 0 {
        return Err(Error::InvalidInput("particle counts must be positive".into()));
    }
    if problem.measurements.iter().any(|m| m.nlos) {
        return Err(Error::InvalidInput("particle oracle handles LOS links only".into()));
    }
    let na = problem.n_anchors();
    let n = problem.n_agents();
    let vd = problem.sigma_d * problem.sigma_d;
    let topo = problem.topology();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let prior: Vec<DiagGauss> = problem
        .prior
        .iter()
        .map(|b| DiagGauss {
            mean: [b.x.mean, b.y.mean, b.t.mean],
            std: [b.x.std(), b.y.std(), b.t.std()],
        })
        .collect();
    let prior_logpdf = |i: usize, p: &[f64; 3]| {
        let b = &problem.prior[i];
        let mut l = 0.0;
        for (g, v) in [(b.x, p[0]), (b.y, p[1]), (b.t, p[2])] {
            if g.var > 0.0 {
                l -= 0.5 * (v - g.mean) * (v - g.mean) / g.var;
            }
        }
        l
    };

    let mut beliefs: Vec<ParticleSet> = prior
        .iter()
        .map(|q| {
            let particles: Vec<[f64; 3]> = (0..cfg.particles).map(|_| q.sample(&mut rng)).collect();
            ParticleSet {
                weights: vec![1.0 / cfg.particles as f64; cfg.particles],
                particles,
            }
        })
        .collect();
    let mut proposals = prior.clone();

    for _ in 0..cfg.iterations {
        let senders: Vec<ParticleSet> = beliefs
            .iter()
            .map(|b| b.resample(cfg.neighbor_samples.min(cfg.particles.max(1)), &mut rng))
            .collect();
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let log_target = |p: &[f64; 3]| {
                let mut l = prior_logpdf(i, p);
                for link in &topo[i] {
                    let (rx_is_me, z) = (link.is_receiver(), link.z);
                    if link.nbr < na {
                        let a = problem.anchors[link.nbr];
                        let q = [a.0, a.1, 0.0];
                        l += if rx_is_me { log_lik(z, p, &q, vd) } else { log_lik(z, &q, p, vd) };
                    } else {
                        let other = &senders[link.nbr - na].particles;
                        let terms: Vec<f64> = other
                            .iter()
                            .map(|q| if rx_is_me { log_lik(z, p, q, vd) } else { log_lik(z, q, p, vd) })
                            .collect();
                        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        let s: f64 = terms.iter().map(|t| (t - top).exp()).sum();
                        l += top + (s / other.len() as f64).ln();
                    }
                }
                l
            };

            let mut q = proposals[i];
            let mut refits = 0;
            let set = loop {
                let particles: Vec<[f64; 3]> = (0..cfg.particles).map(|_| q.sample(&mut rng)).collect();
                let logw: Vec<f64> = particles.iter().map(|p| log_target(p) - q.log_pdf(p)).collect();
                let set = ParticleSet::from_log_weights(particles, &logw)?;
                let ess = set.ess();
                let fitted = DiagGauss {
                    mean: set.mean(),
                    std: set.std().map(|s| s * cfg.inflation),
                };
                if ess >= cfg.particles as f64 / 10.0 || cfg.particles < 10 {
                    q = fitted;
                    break set;
                }
                refits += 1;
                if refits > cfg.max_refits {
                    return Err(oracle_err(format!(
                        "agent {} stays degenerate (ESS {ess:.1} of {})",
                        i + na,
                        cfg.particles
                    )));
                }
                q = fitted;
            };
            proposals[i] = q;
            next.push(set);
        }
        beliefs = next;
    }

    Ok(beliefs
        .iter()
        .map(|b| {
            let ess = b.ess();
            let std = b.std();
            ParticleSummary {
                mean: b.mean(),
                std,
                std_err: std.map(|s| s / ess.sqrt()),
                ess,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Measurement;

    #[test]
    fn conjugate_gaussian_is_exact() {
        // x ~ N(1, 2), y | x ~ N(x, 0.5): marginal over y of the joint gives
        // back N(1, 2).
        let f = |p: &[f64]| -0.5 * (p[0] - 1.0).powi(2) / 2.0 - 0.5 * (p[1] - p[0]).powi(2) / 0.5;
        let g = quadrature_message(
            &f,
            &[
                Dim::Line { centre: 0.0, scale: 1.0 },
                Dim::Line { centre: 0.0, scale: 1.0 },
            ],
        )
        .unwrap();
        assert!((g.mean - 1.0).abs() < 1e-8);
        assert!((g.var - 2.0).abs() < 1e-8);

        // Posterior of x given an observation y = 3: N(2.6, 0.4).
        let f = |p: &[f64]| -0.5 * (p[0] - 1.0).powi(2) / 2.0 - 0.5 * (3.0 - p[0]).powi(2) / 0.5;
        let g = quadrature_message(&f, &[Dim::Line { centre: 5.0, scale: 3.0 }]).unwrap();
        assert!((g.mean - 2.6).abs() < 1e-8);
        assert!((g.var - 0.4).abs() < 1e-8);
    }

    #[test]
    fn half_line_exponential() {
        let f = |p: &[f64]| -0.38 * p[0];
        let g = quadrature_message(&f, &[Dim::HalfLine { lower: 0.0, scale: 1.0 }]).unwrap();
        assert!((g.mean - 1.0 / 0.38).abs() < 1e-7);
        assert!((g.var - 1.0 / (0.38 * 0.38)).abs() < 1e-6);
    }

    #[test]
    fn quadratic_dimension_matches_adaptive() {
        let f = |p: &[f64]| -0.5 * (p[0] - 1.0).powi(2) / 2.0 - 0.5 * (p[1] - 0.7 * p[0]).powi(2) / 0.5 - 0.3 * (p[1] - 2.0).powi(2);
        let adaptive = quadrature_message(
            &f,
            &[
                Dim::Line { centre: 0.0, scale: 1.0 },
                Dim::Line { centre: 0.0, scale: 1.0 },
            ],
        )
        .unwrap();
        let closed = quadrature_message(
            &f,
            &[
                Dim::Line { centre: 0.0, scale: 1.0 },
                Dim::Quadratic { centre: 0.0, scale: 1.0 },
            ],
        )
        .unwrap();
        assert!((adaptive.mean - closed.mean).abs() < 1e-9);
        assert!((adaptive.var - closed.var).abs() < 1e-9);

        let bumpy = |p: &[f64]| -0.5 * p[0] * p[0] - p[1].powi(4);
        let r = quadrature_message(
            &bumpy,
            &[
                Dim::Line { centre: 0.0, scale: 1.0 },
                Dim::Quadratic { centre: 0.0, scale: 1.0 },
            ],
        );
        assert!(matches!(r, Err(Error::OracleFailure(_))));
    }

    #[test]
    fn nlos_oracle_is_finite() {
        let g = |m, v| Gaussian1D { mean: m, var: v };
        let case = LinkCase {
            z: 12.0,
            s: 1.0,
            own: Belief::new(g(3.0, 2.0), g(4.0, 1.0), g(1.0, 3.0)),
            nbr: Belief::anchor((10.0, 10.0)),
            own_point: (3.0, 4.0),
            nbr_point: (10.0, 10.0),
            sigma_d2: 1.0,
            nlos_rate: Some(0.38),
        };
        for t in [Target::X, Target::Y, Target::T] {
            let m = link_message_oracle(&case, t).unwrap();
            assert!(m.mean.is_finite() && m.var > 0.0);
        }
    }

    #[test]
    fn particle_single_sample_exact_prior() {
        let anchors = vec![(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
        let truth = [3.0_f64, 4.0, 2.0];
        let ms = anchors
            .iter()
            .enumerate()
            .map(|(k, a): (usize, &(f64, f64))| Measurement {
                tx: k,
                rx: 3,
                slot: 1,
                z: (truth[0] - a.0).hypot(truth[1] - a.1) + truth[2],
                nlos: false,
                bias: 0.0,
            })
            .collect();
        let p = SlotProblem {
            anchors,
            prior: vec![Belief::new(
                Gaussian1D::dirac(truth[0]),
                Gaussian1D::dirac(truth[1]),
                Gaussian1D::dirac(truth[2]),
            )],
            measurements: ms,
            sigma_d: 0.5,
            nlos_rate: 0.38,
            nlos_aware: true,
        };
        let cfg = ParticleBpConfig {
            particles: 1,
            neighbor_samples: 1,
            ..Default::default()
        };
        let s = particle_bp_slot(&p, &cfg).unwrap();
        assert_eq!(s[0].mean, truth);
    }

    #[test]
    fn resample_keeps_size_and_uniform_weights() {
        let set = ParticleSet {
            particles: vec![[0.0; 3], [1.0; 3], [2.0; 3]],
            weights: vec![0.1, 0.0, 0.9],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = set.resample(10, &mut rng);
        assert_eq!(r.len(), 10);
        assert!(r.particles.iter().all(|p| p[0] != 1.0));
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
