//! Scenario configuration files (TOML).

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BpMode;
use crate::schedule::{Engine, Schedule};
use crate::world::{Bounds, NlosMode, NoiseModel, ObstacleMap, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "std-bp")]
    StdBp,
    #[serde(rename = "bcast-bp")]
    BcastBp,
    #[serde(rename = "vmp")]
    Vmp,
}

impl Algorithm {
    pub fn engine(self) -> Engine {
        match self {
            Algorithm::StdBp => Engine::Bp(BpMode::Standard),
            Algorithm::BcastBp => Engine::Bp(BpMode::Broadcast),
            Algorithm::Vmp => Engine::Vmp,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::StdBp => "std-bp",
            Algorithm::BcastBp => "bcast-bp",
            Algorithm::Vmp => "vmp",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "std-bp" => Ok(Algorithm::StdBp),
            "bcast-bp" => Ok(Algorithm::BcastBp),
            "vmp" => Ok(Algorithm::Vmp),
            other => Err(Error::InvalidInput(format!(
                "unknown algorithm {other:?}; expected std-bp, bcast-bp or vmp"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub count: usize,
    /// Upper end of the per-axis speed draw, m/s.
    pub speed_max: f64,
    /// Initial `c·θ` drawn uniformly from this range, meters.
    pub clock_offset_range_m: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub sigma_x0: f64,
    pub sigma_y0: f64,
    /// Prior standard deviation of `c·θ`, meters.
    pub sigma_theta0_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum NlosConfig {
    None,
    Probabilistic {
        p: f64,
    },
    /// Rectangles as `[x0, y0, x1, y1]`.
    Obstacles {
        rects: Vec<[f64; 4]>,
    },
}

impl NlosConfig {
    pub fn mode(&self) -> NlosMode {
        match self {
            NlosConfig::None => NlosMode::None,
            NlosConfig::Probabilistic { p } => NlosMode::Probabilistic(*p),
            NlosConfig::Obstacles { rects } => NlosMode::Obstacles(ObstacleMap {
                rects: rects.iter().map(|r| Rect::new(r[0], r[1], r[2], r[3])).collect(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub trials: usize,
    pub n_time: usize,
    /// Slot duration, seconds.
    pub dt: f64,
    /// Communication range, meters.
    pub d_max: f64,
    pub algorithm: Algorithm,
    /// Process NLOS links with the exponential bias model.
    pub nlos_aware: bool,
    /// Trial worlds are redrawn until every agent has this many links in
    /// every slot.
    #[serde(default)]
    pub min_agent_degree: usize,
    pub anchors: Vec<[f64; 2]>,
    pub area: Bounds,
    pub agents: AgentConfig,
    pub prior: PriorConfig,
    pub noise: NoiseModel,
    pub nlos: NlosConfig,
    pub schedule: Schedule,
}

fn invalid(field: &str, msg: impl fmt::Display) -> Error {
    Error::InvalidInput(format!("{field}: {msg}"))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be strictly positive, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config {
            path: "<string>".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|e| Error::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if self.n_time == 0 {
            return Err(invalid("n_time", "must be at least 1"));
        }
        positive("dt", self.dt)?;
        positive("d_max", self.d_max)?;
        positive("area.width", self.area.width)?;
        positive("area.height", self.area.height)?;
        if self.agents.count == 0 {
            return Err(invalid("agents.count", "must be at least 1"));
        }
        if !(self.agents.speed_max >= 0.0) || !self.agents.speed_max.is_finite() {
            return Err(invalid("agents.speed_max", "must be non-negative"));
        }
        let [lo, hi] = self.agents.clock_offset_range_m;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid("agents.clock_offset_range_m", format!("[{lo}, {hi}] is not a range")));
        }
        for (k, a) in self.anchors.iter().enumerate() {
            if !self.area.contains((a[0], a[1])) {
                return Err(invalid(&format!("anchors[{k}]"), format!("({}, {}) is outside the area", a[0], a[1])));
            }
        }
        positive("prior.sigma_x0", self.prior.sigma_x0)?;
        positive("prior.sigma_y0", self.prior.sigma_y0)?;
        positive("prior.sigma_theta0_m", self.prior.sigma_theta0_m)?;
        self.noise.validate().map_err(|m| Error::InvalidInput(m))?;
        match &self.nlos {
            NlosConfig::None => {}
            NlosConfig::Probabilistic { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(invalid("nlos.p", format!("must lie in [0, 1], got {p}")));
                }
            }
            NlosConfig::Obstacles { rects } => {
                for (k, r) in rects.iter().enumerate() {
                    if !self.area.contains((r[0], r[1])) || !self.area.contains((r[2], r[3])) {
                        return Err(invalid(&format!("nlos.rects[{k}]"), "rectangle leaves the area"));
                    }
                }
            }
        }
        self.schedule.validate().map_err(|e| invalid("schedule", e))?;
        Ok(())
    }

    pub fn bounds(&self) -> Bounds {
        self.area
    }

    pub fn anchor_positions(&self) -> Vec<(f64, f64)> {
        self.anchors.iter().map(|a| (a[0], a[1])).collect()
    }
}

/// Random-network reference: 50×50 m, 9 anchors on a grid, 50 agents.
pub fn reference_random_scenario() -> ScenarioConfig {
    let grid = [5.0, 25.0, 45.0];
    let anchors = grid.iter().flat_map(|&x| grid.iter().map(move |&y| [x, y])).collect();
    ScenarioConfig {
        name: "reference-random".into(),
        seed: 1,
        trials: 10,
        n_time: 10,
        dt: 1.0,
        d_max: 20.0,
        algorithm: Algorithm::StdBp,
        nlos_aware: true,
        min_agent_degree: 0,
        anchors,
        area: Bounds {
            width: 50.0,
            height: 50.0,
        },
        agents: AgentConfig {
            count: 50,
            speed_max: 3.0,
            clock_offset_range_m: [0.0, 50.0],
        },
        prior: PriorConfig {
            sigma_x0: 10.0,
            sigma_y0: 10.0,
            sigma_theta0_m: 50.0,
        },
        noise: NoiseModel {
            sigma_d: 1.0,
            sigma_ux: 1.0,
            sigma_uy: 1.0,
            sigma_utheta: 1e-8,
            nlos_rate: 0.38,
        },
        nlos: NlosConfig::None,
        schedule: Schedule { n_int: 1, n_ext: 20 },
    }
}

/// 80×60 m parking floor: four wall anchors, rows of parked cars as
/// obstacles, 10 moving vehicles.
pub fn make_parking_scenario() -> ScenarioConfig {
    let mut rects = Vec::new();
    // Two double rows of parked cars, 4.5 m deep and 2.5 m wide.
    for &(y0, y1) in &[(14.0, 18.5), (18.5, 23.0), (37.0, 41.5), (41.5, 46.0)] {
        let mut x = 12.0;
        while x + 2.5 <= 68.0 {
            rects.push([x, y0, x + 2.3, y1]);
            x += 5.0;
        }
    }
    ScenarioConfig {
        name: "parking".into(),
        seed: 1,
        trials: 10,
        n_time: 20,
        dt: 1.0,
        d_max: 50.0,
        algorithm: Algorithm::StdBp,
        nlos_aware: true,
        min_agent_degree: 0,
        anchors: vec![[40.0, 0.0], [80.0, 30.0], [40.0, 60.0], [0.0, 30.0]],
        area: Bounds {
            width: 80.0,
            height: 60.0,
        },
        agents: AgentConfig {
            count: 10,
            speed_max: 7.0,
            clock_offset_range_m: [0.0, 50.0],
        },
        prior: PriorConfig {
            sigma_x0: 10.0,
            sigma_y0: 10.0,
            sigma_theta0_m: 50.0,
        },
        noise: NoiseModel {
            sigma_d: 1.0,
            sigma_ux: 1.0,
            sigma_uy: 1.0,
            sigma_utheta: 1e-8,
            nlos_rate: 0.38,
        },
        nlos: NlosConfig::Obstacles { rects },
        schedule: Schedule { n_int: 1, n_ext: 20 },
    }
}
