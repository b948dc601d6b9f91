//! Ground-truth simulation: placement, mobility, clocks, connectivity,
//! LOS/NLOS classification and range measurements.

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::C;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Anchor,
    Agent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: usize,
    pub role: Role,
    pub position: (f64, f64),
    pub velocity: (f64, f64),
    /// Clock offset in seconds.
    pub clock_offset: f64,
    /// Per-axis direction of travel, ±1.
    pub heading: (f64, f64),
}

impl NodeState {
    pub fn anchor(id: usize, position: (f64, f64)) -> Self {
        Self {
            id,
            role: Role::Anchor,
            position,
            velocity: (0.0, 0.0),
            clock_offset: 0.0,
            heading: (1.0, 1.0),
        }
    }

    pub fn is_anchor(&self) -> bool {
        self.role == Role::Anchor
    }

    /// Clock offset expressed as an equivalent range `c·θ`.
    pub fn clock_offset_m(&self) -> f64 {
        C * self.clock_offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub tx: usize,
    pub rx: usize,
    pub slot: usize,
    /// Observed range in meters.
    pub z: f64,
    pub nlos: bool,
    /// Hidden positive bias in meters, zero on LOS links.
    pub bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Range noise standard deviation, meters.
    pub sigma_d: f64,
    pub sigma_ux: f64,
    pub sigma_uy: f64,
    /// Clock random-walk standard deviation, seconds.
    pub sigma_utheta: f64,
    /// Rate of the exponential NLOS bias, 1/m.
    pub nlos_rate: f64,
}

impl NoiseModel {
    pub fn sigma_utheta_m(&self) -> f64 {
        C * self.sigma_utheta
    }

    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("sigma_d", self.sigma_d),
            ("sigma_ux", self.sigma_ux),
            ("sigma_uy", self.sigma_uy),
            ("sigma_utheta", self.sigma_utheta),
            ("nlos_rate", self.nlos_rate),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("noise.{name} must be strictly positive, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub width: f64,
    pub height: f64,
}

impl Bounds {
    pub fn contains(&self, p: (f64, f64)) -> bool {
        (0.0..=self.width).contains(&p.0) && (0.0..=self.height).contains(&p.1)
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self {
            x0: x0.min(x1),
            y0: y0.min(y1),
            x1: x0.max(x1),
            y1: y0.max(y1),
        }
    }

    /// Liang–Barsky clip of the segment `a → b` against the rectangle.
    pub fn intersects_segment(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for (p, q) in [
            (-dx, a.0 - self.x0),
            (dx, self.x1 - a.0),
            (-dy, a.1 - self.y0),
            (dy, self.y1 - a.1),
        ] {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObstacleMap {
    pub rects: Vec<Rect>,
}

impl ObstacleMap {
    pub fn blocks(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        self.rects.iter().any(|r| r.intersects_segment(a, b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NlosMode {
    None,
    Probabilistic(f64),
    Obstacles(ObstacleMap),
}

pub(crate) fn normal<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sd * z
}

fn reflect(mut v: f64, hi: f64) -> f64 {
    for _ in 0..8 {
        if v < 0.0 {
            v = -v;
        } else if v > hi {
            v = 2.0 * hi - v;
        } else {
            return v;
        }
    }
    v.clamp(0.0, hi)
}

/// Advances one node by `dt`.
///
/// The position moves with the current velocity plus Gaussian noise; the
/// clock takes a Gaussian random-walk step. Afterwards each velocity
/// component is redrawn from `U[0, speed_max]` with the node's heading sign,
/// which flips whenever the next step would leave the area.
pub fn step_mobility<R: Rng + ?Sized>(
    state: &NodeState,
    noise: &NoiseModel,
    dt: f64,
    bounds: &Bounds,
    speed_max: f64,
    rng: &mut R,
) -> NodeState {
    if state.is_anchor() {
        return *state;
    }
    let mut next = *state;
    let x = state.position.0 + state.velocity.0 * dt + normal(rng, noise.sigma_ux);
    let y = state.position.1 + state.velocity.1 * dt + normal(rng, noise.sigma_uy);
    next.position = (reflect(x, bounds.width), reflect(y, bounds.height));
    next.clock_offset = state.clock_offset + normal(rng, noise.sigma_utheta);

    let mut axis = |pos: f64, hi: f64, heading: &mut f64| {
        let speed = rng.random_range(0.0..=speed_max);
        let ahead = pos + *heading * speed * dt;
        if !(0.0..=hi).contains(&ahead) {
            *heading = -*heading;
        }
        *heading * speed
    };
    let mut hx = state.heading.0;
    let mut hy = state.heading.1;
    let vx = axis(next.position.0, bounds.width, &mut hx);
    let vy = axis(next.position.1, bounds.height, &mut hy);
    next.velocity = (vx, vy);
    next.heading = (hx, hy);
    next
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommSet {
    /// Unordered pairs `(i, j)` with `i < j`.
    pub pairs: Vec<(usize, usize)>,
    /// Sorted neighbor ids of every node.
    pub neighbors: Vec<Vec<usize>>,
}

impl CommSet {
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }
}

/// All node pairs within `d_max` of each other. Anchor–anchor pairs are
/// included here; measurement generation skips them.
pub fn build_comm_set(states: &[NodeState], d_max: f64) -> CommSet {
    let n = states.len();
    let mut pairs = Vec::new();
    let mut neighbors = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (states[i].position, states[j].position);
            if (a.0 - b.0).hypot(a.1 - b.1) <= d_max {
                pairs.push((i, j));
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
    }
    CommSet { pairs, neighbors }
}

pub fn classify_nlos<R: Rng + ?Sized>(a: (f64, f64), b: (f64, f64), mode: &NlosMode, rng: &mut R) -> bool {
    match mode {
        NlosMode::None => false,
        NlosMode::Probabilistic(p) => *p > 0.0 && rng.random::<f64>() < *p,
        NlosMode::Obstacles(map) => map.blocks(a, b),
    }
}

/// Range measurement `z = d + b + c(θ_rx − θ_tx) + ζ`.
pub fn generate_measurement<R: Rng + ?Sized>(
    tx: &NodeState,
    rx: &NodeState,
    slot: usize,
    nlos: bool,
    noise: &NoiseModel,
    rng: &mut R,
) -> Measurement {
    let d = (tx.position.0 - rx.position.0).hypot(tx.position.1 - rx.position.1);
    let bias = if nlos { sample_bias(noise.nlos_rate, rng) } else { 0.0 };
    let zeta = normal(rng, noise.sigma_d);
    Measurement {
        tx: tx.id,
        rx: rx.id,
        slot,
        z: d + bias + C * (rx.clock_offset - tx.clock_offset) + zeta,
        nlos,
        bias,
    }
}

/// Strictly positive draw from `Exp(rate)`.
pub fn sample_bias<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let exp = Exp::new(rate).expect("positive NLOS rate");
    loop {
        let b: f64 = exp.sample(rng);
        if b > 0.0 {
            return b;
        }
    }
}

/// Measurements for one slot: one per linked pair, lower id transmits.
pub fn measure_slot<R: Rng + ?Sized>(
    states: &[NodeState],
    comm: &CommSet,
    slot: usize,
    mode: &NlosMode,
    noise: &NoiseModel,
    rng: &mut R,
) -> Vec<Measurement> {
    let mut out = Vec::with_capacity(comm.pairs.len());
    for &(i, j) in &comm.pairs {
        if states[i].is_anchor() && states[j].is_anchor() {
            continue;
        }
        let nlos = classify_nlos(states[i].position, states[j].position, mode, rng);
        out.push(generate_measurement(&states[i], &states[j], slot, nlos, noise, rng));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quiet() -> NoiseModel {
        NoiseModel {
            sigma_d: 0.0,
            sigma_ux: 0.0,
            sigma_uy: 0.0,
            sigma_utheta: 0.0,
            nlos_rate: 0.38,
        }
    }

    fn agent(id: usize, p: (f64, f64), v: (f64, f64), theta: f64) -> NodeState {
        NodeState {
            id,
            role: Role::Agent,
            position: p,
            velocity: v,
            clock_offset: theta,
            heading: (1.0, 1.0),
        }
    }

    const BIG: Bounds = Bounds {
        width: 100.0,
        height: 100.0,
    };

    #[test]
    fn noiseless_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = agent(1, (0.0, 0.0), (1.0, 2.0), 0.0);
        let n = step_mobility(&s, &quiet(), 1.0, &BIG, 3.0, &mut rng);
        assert_eq!(n.position, (1.0, 2.0));
        assert_eq!(n.clock_offset, 0.0);
        assert!((0.0..=3.0).contains(&n.velocity.0));
    }

    #[test]
    fn anchors_do_not_move() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = NodeState::anchor(0, (5.0, 5.0));
        let noise = NoiseModel {
            sigma_d: 1.0,
            sigma_ux: 1.0,
            sigma_uy: 1.0,
            sigma_utheta: 1e-8,
            nlos_rate: 0.38,
        };
        assert_eq!(step_mobility(&a, &noise, 1.0, &BIG, 3.0, &mut rng), a);
    }

    #[test]
    fn golden_step_seed_42() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let noise = NoiseModel {
            sigma_d: 1.0,
            sigma_ux: 1.0,
            sigma_uy: 1.0,
            sigma_utheta: 1e-8,
            nlos_rate: 0.38,
        };
        let s = agent(1, (25.0, 25.0), (1.0, 1.0), 0.0);
        let n = step_mobility(&s, &noise, 1.0, &Bounds { width: 50.0, height: 50.0 }, 3.0, &mut rng);
        let got = [n.position.0, n.position.1, n.clock_offset, n.velocity.0, n.velocity.1];
        let want = GOLDEN_42;
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() <= 1e-12 * w.abs().max(1e-20), "{got:?}");
        }
    }

    // Captured once from the seeded run; guards against silent changes in the
    // draw order.
    const GOLDEN_42: [f64; 5] = [
        26.47798123835102,
        27.33407061023181,
        -2.108666832710303e-9,
        1.882081563592021,
        0.8657816374235479,
    ];

    #[test]
    fn walls_reflect() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = Bounds {
            width: 10.0,
            height: 10.0,
        };
        let mut s = agent(1, (9.5, 0.5), (3.0, -3.0), 0.0);
        for _ in 0..200 {
            s = step_mobility(
                &s,
                &NoiseModel {
                    sigma_d: 1.0,
                    sigma_ux: 1.0,
                    sigma_uy: 1.0,
                    sigma_utheta: 1e-9,
                    nlos_rate: 1.0,
                },
                1.0,
                &b,
                3.0,
                &mut rng,
            );
            assert!(b.contains(s.position));
        }
    }

    #[test]
    fn comm_set_examples() {
        let a = agent(0, (0.0, 0.0), (0.0, 0.0), 0.0);
        let b = agent(1, (3.0, 4.0), (0.0, 0.0), 0.0);
        assert_eq!(build_comm_set(&[a, b], 20.0).pairs, vec![(0, 1)]);
        let far = agent(1, (25.0, 0.0), (0.0, 0.0), 0.0);
        assert!(build_comm_set(&[a, far], 20.0).pairs.is_empty());
        let line = [
            agent(0, (0.0, 0.0), (0.0, 0.0), 0.0),
            agent(1, (15.0, 0.0), (0.0, 0.0), 0.0),
            agent(2, (30.0, 0.0), (0.0, 0.0), 0.0),
        ];
        let cs = build_comm_set(&line, 20.0);
        assert_eq!(cs.pairs, vec![(0, 1), (1, 2)]);
        assert_eq!(cs.degree(1), 2);
    }

    #[test]
    fn nlos_classification() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert!(!classify_nlos((0.0, 0.0), (1.0, 1.0), &NlosMode::Probabilistic(0.0), &mut rng));
        }
        let hit = NlosMode::Obstacles(ObstacleMap {
            rects: vec![Rect::new(4.0, -1.0, 6.0, 1.0)],
        });
        let miss = NlosMode::Obstacles(ObstacleMap {
            rects: vec![Rect::new(4.0, 2.0, 6.0, 3.0)],
        });
        assert!(classify_nlos((0.0, 0.0), (10.0, 0.0), &hit, &mut rng));
        assert!(!classify_nlos((0.0, 0.0), (10.0, 0.0), &miss, &mut rng));
    }

    #[test]
    fn segment_rect_edge_cases() {
        let r = Rect::new(0.0, 0.0, 1.0, 1.0);
        assert!(r.intersects_segment((0.5, 0.5), (0.6, 0.6)));
        assert!(r.intersects_segment((-1.0, 2.0), (2.0, -1.0)));
        assert!(!r.intersects_segment((-1.0, 3.0), (3.0, 2.5)));
        assert!(!r.intersects_segment((2.0, 0.0), (3.0, 1.0)));
    }

    #[test]
    fn measurement_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let tx = agent(0, (0.0, 0.0), (0.0, 0.0), 0.0);
        let rx = agent(1, (3.0, 4.0), (0.0, 0.0), 10e-9);
        let m = generate_measurement(&tx, &rx, 1, false, &quiet(), &mut rng);
        assert!((m.z - (5.0 + C * 10e-9)).abs() < 1e-12);
        assert_eq!(m.bias, 0.0);
        let m = generate_measurement(&tx, &rx, 1, true, &quiet(), &mut rng);
        assert!(m.bias > 0.0);
        assert!((m.z - (5.0 + C * 10e-9 + m.bias)).abs() < 1e-12);
        let same = agent(1, (0.0, 0.0), (0.0, 0.0), 0.0);
        assert_eq!(generate_measurement(&tx, &same, 1, false, &quiet(), &mut rng).z, 0.0);
    }

    #[test]
    fn golden_measurement_seed_7() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let tx = agent(0, (0.0, 0.0), (0.0, 0.0), 0.0);
        let rx = agent(1, (3.0, 4.0), (0.0, 0.0), 10e-9);
        let noise = NoiseModel {
            sigma_d: 1.0,
            ..quiet()
        };
        let m = generate_measurement(&tx, &rx, 1, false, &noise, &mut rng);
        assert!((m.z - GOLDEN_7).abs() < 1e-12, "{}", m.z);
    }

    const GOLDEN_7: f64 = 7.222552646782203;

    #[test]
    fn measure_slot_skips_anchor_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let states = [
            NodeState::anchor(0, (0.0, 0.0)),
            NodeState::anchor(1, (5.0, 0.0)),
            agent(2, (2.0, 2.0), (0.0, 0.0), 0.0),
        ];
        let cs = build_comm_set(&states, 20.0);
        let ms = measure_slot(&states, &cs, 1, &NlosMode::None, &quiet(), &mut rng);
        assert_eq!(ms.len(), 2);
        assert!(ms.iter().all(|m| m.tx < m.rx && m.rx == 2));
    }
}
