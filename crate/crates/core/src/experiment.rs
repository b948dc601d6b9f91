//! Monte-Carlo scenario runs and their output files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Algorithm, ScenarioConfig};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian1D;
use crate::metrics::{empirical_cdf, rmse};
use crate::model::{prediction_message, vmp_prediction, Belief, Counters, Estimate, SlotProblem};
use crate::schedule::run_slot_scheduled;
use crate::world::{build_comm_set, measure_slot, normal, step_mobility, Measurement, NodeState, Role};
use crate::C;

const MAX_LAYOUT_DRAWS: usize = 10_000;

/// One agent's true state, `t` as `c·θ` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truth {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    /// Indexed by agent.
    pub truth: Vec<Truth>,
    /// Estimates before the first exchange (prediction means) and after every
    /// external round.
    pub iterations: Vec<Vec<Estimate>>,
    /// Transmitted parameters per agent.
    pub comm: Vec<u64>,
    /// Neighbor count per agent.
    pub degree: Vec<usize>,
    /// Agent–agent NLOS links received per agent.
    pub nlos_received: Vec<usize>,
    pub links: usize,
    pub nlos_links: usize,
    pub counters: Counters,
}

impl SlotRecord {
    pub fn final_estimates(&self) -> &[Estimate] {
        self.iterations.last().expect("at least the prediction")
    }

    pub fn position_errors(&self, iteration: usize) -> Vec<f64> {
        self.iterations[iteration]
            .iter()
            .zip(&self.truth)
            .map(|(e, t)| (e.x - t.x).hypot(e.y - t.y))
            .collect()
    }

    /// Clock errors in seconds.
    pub fn clock_errors(&self, iteration: usize) -> Vec<f64> {
        self.iterations[iteration]
            .iter()
            .zip(&self.truth)
            .map(|(e, t)| (e.t - t.t) / C)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub slots: Vec<SlotRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub config: ScenarioConfig,
    pub trials: Vec<TrialResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RmseRow {
    pub slot: usize,
    pub iteration: usize,
    pub position_m: f64,
    pub clock_s: f64,
}

impl RunResult {
    fn records(&self, slot: usize) -> impl Iterator<Item = &SlotRecord> {
        self.trials.iter().map(move |t| &t.slots[slot - 1])
    }

    /// Position errors of every agent in every trial at `slot` (1-based)
    /// after `iteration` rounds.
    pub fn position_errors(&self, slot: usize, iteration: usize) -> Vec<f64> {
        self.records(slot).flat_map(|r| r.position_errors(iteration)).collect()
    }

    pub fn clock_errors(&self, slot: usize, iteration: usize) -> Vec<f64> {
        self.records(slot).flat_map(|r| r.clock_errors(iteration)).collect()
    }

    /// Per-trial mean position error at `slot` after the last round.
    pub fn trial_mean_position_errors(&self, slot: usize) -> Vec<f64> {
        self.records(slot)
            .map(|r| {
                let e = r.position_errors(r.iterations.len() - 1);
                e.iter().sum::<f64>() / e.len() as f64
            })
            .collect()
    }

    pub fn rmse_rows(&self) -> Result<Vec<RmseRow>> {
        let mut rows = Vec::new();
        for slot in 1..=self.config.n_time {
            for iteration in 0..=self.config.schedule.n_ext {
                rows.push(RmseRow {
                    slot,
                    iteration,
                    position_m: rmse(&self.position_errors(slot, iteration))?,
                    clock_s: rmse(&self.clock_errors(slot, iteration))?,
                });
            }
        }
        Ok(rows)
    }

    /// Transmitted-parameter totals per agent, summed over slots and trials.
    pub fn comm_per_agent(&self) -> Vec<u64> {
        let mut out = vec![0; self.config.agents.count];
        for r in self.trials.iter().flat_map(|t| &t.slots) {
            for (o, c) in out.iter_mut().zip(&r.comm) {
                *o += c;
            }
        }
        out
    }

    /// The same totals from the per-round cost formulas of the algorithm.
    pub fn comm_expected_per_agent(&self) -> Vec<u64> {
        let n_ext = self.config.schedule.n_ext as u64;
        let mut out = vec![0; self.config.agents.count];
        for r in self.trials.iter().flat_map(|t| &t.slots) {
            for (k, o) in out.iter_mut().enumerate() {
                let deg = r.degree[k] as u64;
                if deg == 0 {
                    continue;
                }
                let per_round = match self.config.algorithm {
                    Algorithm::StdBp => 6 * deg,
                    Algorithm::BcastBp => 6,
                    Algorithm::Vmp => 3 + r.nlos_received[k] as u64,
                };
                *o += per_round * n_ext;
            }
        }
        out
    }
}

fn initial_layout(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<NodeState> {
    let mut states: Vec<NodeState> = cfg
        .anchor_positions()
        .into_iter()
        .enumerate()
        .map(|(id, p)| NodeState::anchor(id, p))
        .collect();
    let a = states.len();
    let [c_lo, c_hi] = cfg.agents.clock_offset_range_m;
    let sign = |rng: &mut ChaCha8Rng| if rng.random::<bool>() { 1.0 } else { -1.0 };
    for k in 0..cfg.agents.count {
        let heading = (sign(rng), sign(rng));
        let speed = (
            rng.random_range(0.0..=cfg.agents.speed_max),
            rng.random_range(0.0..=cfg.agents.speed_max),
        );
        let ct = if c_hi > c_lo { rng.random_range(c_lo..c_hi) } else { c_lo };
        states.push(NodeState {
            id: a + k,
            role: Role::Agent,
            position: (
                rng.random_range(0.0..=cfg.area.width),
                rng.random_range(0.0..=cfg.area.height),
            ),
            velocity: (heading.0 * speed.0, heading.1 * speed.1),
            clock_offset: ct / C,
            heading,
        });
    }
    states
}

/// Ground truth and observations of one trial.
#[derive(Debug, Clone)]
pub struct World {
    /// Initial beliefs of the agents.
    pub priors: Vec<Belief>,
    /// Node states at slots `0..=n_time`.
    pub states: Vec<Vec<NodeState>>,
    /// Measurements of slots `1..=n_time`.
    pub measurements: Vec<Vec<Measurement>>,
}

impl World {
    fn min_agent_degree(&self, n_anchors: usize, n_agents: usize) -> usize {
        let mut lowest = usize::MAX;
        for ms in &self.measurements {
            let mut deg = vec![0; n_agents];
            for m in ms {
                for id in [m.tx, m.rx] {
                    if id >= n_anchors {
                        deg[id - n_anchors] += 1;
                    }
                }
            }
            lowest = lowest.min(deg.into_iter().min().unwrap_or(0));
        }
        lowest
    }
}

fn draw_world(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> World {
    let a = cfg.anchors.len();
    let mut states = initial_layout(cfg, rng);
    let priors = states[a..]
        .iter()
        .map(|s| {
            let p = &cfg.prior;
            let mut g = |truth: f64, sd: f64| Gaussian1D {
                mean: truth + normal(rng, sd),
                var: sd * sd,
            };
            let x = g(s.position.0, p.sigma_x0);
            let y = g(s.position.1, p.sigma_y0);
            let t = g(s.clock_offset_m(), p.sigma_theta0_m);
            Belief::new(x, y, t)
        })
        .collect();
    let bounds = cfg.bounds();
    let mode = cfg.nlos.mode();
    let mut all_states = vec![states.clone()];
    let mut measurements = Vec::with_capacity(cfg.n_time);
    for slot in 1..=cfg.n_time {
        states = states
            .iter()
            .map(|s| step_mobility(s, &cfg.noise, cfg.dt, &bounds, cfg.agents.speed_max, rng))
            .collect();
        let comm_set = build_comm_set(&states, cfg.d_max);
        measurements.push(measure_slot(&states, &comm_set, slot, &mode, &cfg.noise, rng));
        all_states.push(states.clone());
    }
    World {
        priors,
        states: all_states,
        measurements,
    }
}

/// World of one trial. With `min_agent_degree > 0`, whole trials are redrawn
/// until every agent has that many links in every slot.
pub fn trial_world(cfg: &ScenarioConfig, trial: usize) -> Result<World> {
    let mut rng = trial_rng(cfg.seed, trial);
    for _ in 0..MAX_LAYOUT_DRAWS {
        let world = draw_world(cfg, &mut rng);
        if cfg.min_agent_degree == 0 || world.min_agent_degree(cfg.anchors.len(), cfg.agents.count) >= cfg.min_agent_degree {
            return Ok(world);
        }
    }
    Err(Error::InvalidInput(format!(
        "trial {trial}: no world with every agent degree ≥ {} in {MAX_LAYOUT_DRAWS} draws",
        cfg.min_agent_degree
    )))
}

/// Random number stream of one trial.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Runs one Monte-Carlo trial. The world, measurements and priors depend
/// only on `(seed, trial)` and the scenario, so different algorithms see
/// identical data.
pub fn run_trial(cfg: &ScenarioConfig, trial: usize) -> Result<TrialResult> {
    let world = trial_world(cfg, trial)?;
    let a = cfg.anchors.len();
    let anchors = cfg.anchor_positions();
    let engine = cfg.algorithm.engine();
    let mut beliefs = world.priors.clone();
    let mut slots = Vec::with_capacity(cfg.n_time);

    for slot in 1..=cfg.n_time {
        let prev = &world.states[slot - 1];
        let states = &world.states[slot];
        let measurements = world.measurements[slot - 1].clone();
        let prior: Vec<Belief> = beliefs
            .iter()
            .zip(&prev[a..])
            .map(|(b, s)| match cfg.algorithm {
                Algorithm::Vmp => vmp_prediction(b, s.velocity, cfg.dt, &cfg.noise),
                _ => prediction_message(b, s.velocity, cfg.dt, &cfg.noise),
            })
            .collect();

        let mut degree = vec![0; cfg.agents.count];
        let mut nlos_received = vec![0; cfg.agents.count];
        for m in &measurements {
            for id in [m.tx, m.rx] {
                if id >= a {
                    degree[id - a] += 1;
                }
            }
            if m.nlos && cfg.nlos_aware && m.tx >= a {
                nlos_received[m.rx - a] += 1;
            }
        }
        let nlos_links = measurements.iter().filter(|m| m.nlos).count();
        let links = measurements.len();

        let problem = SlotProblem {
            anchors: anchors.clone(),
            prior: prior.clone(),
            measurements,
            sigma_d: cfg.noise.sigma_d,
            nlos_rate: cfg.noise.nlos_rate,
            nlos_aware: cfg.nlos_aware,
        };
        let out = run_slot_scheduled(&problem, engine, cfg.schedule)?;
        let mut iterations = Vec::with_capacity(out.history.len() + 1);
        iterations.push(prior.iter().map(Belief::estimate).collect());
        iterations.extend(out.history.iter().cloned());
        if out.counters.skipped_links > 0 || out.counters.extrinsic_fallbacks > 0 {
            log::debug!(
                "trial {trial} slot {slot}: {} skipped links, {} extrinsic fallbacks",
                out.counters.skipped_links,
                out.counters.extrinsic_fallbacks
            );
        }
        slots.push(SlotRecord {
            slot,
            truth: states[a..]
                .iter()
                .map(|s| Truth {
                    x: s.position.0,
                    y: s.position.1,
                    t: s.clock_offset_m(),
                })
                .collect(),
            iterations,
            comm: out.comm.clone(),
            degree,
            nlos_received,
            links,
            nlos_links,
            counters: out.counters.clone(),
        });
        beliefs = out.beliefs;
    }
    Ok(TrialResult { trial, slots })
}

/// Runs every trial of `cfg`, in parallel; the result does not depend on
/// the thread count.
pub fn simulate(cfg: &ScenarioConfig) -> Result<RunResult> {
    cfg.validate()?;
    let trials = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult {
        config: cfg.clone(),
        trials,
    })
}

fn fmt(v: f64) -> String {
    format!("{v:.8e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

#[derive(Debug, Serialize)]
struct CommReport<'a> {
    algorithm: &'a str,
    n_int: usize,
    n_ext: usize,
    trials: usize,
    n_time: usize,
    total: u64,
    expected_total: u64,
    per_agent: Vec<u64>,
    expected_per_agent: Vec<u64>,
    skipped_links: u64,
    extrinsic_fallbacks: u64,
}

pub const RMSE_FILE: &str = "rmse.csv";
pub const CDF_FILE: &str = "cdf.csv";
pub const COMM_FILE: &str = "comm.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const SLOTS_FILE: &str = "slots.csv";

/// Writes the CSV/JSON outputs of `result` into `dir`.
pub fn write_outputs(result: &RunResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let cfg = &result.config;

    let mut w = csv_writer(&dir.join(RMSE_FILE))?;
    w.write_record(["slot", "iteration", "position_rmse_m", "clock_rmse_s", "clock_rmse_m"])?;
    for r in result.rmse_rows()? {
        w.write_record([
            r.slot.to_string(),
            r.iteration.to_string(),
            fmt(r.position_m),
            fmt(r.clock_s),
            fmt(r.clock_s * C),
        ])?;
    }
    w.flush()?;

    let last = cfg.n_time;
    let last_iter = cfg.schedule.n_ext;
    let mut w = csv_writer(&dir.join(CDF_FILE))?;
    w.write_record(["metric", "error", "fraction"])?;
    let clock_abs: Vec<f64> = result.clock_errors(last, last_iter).iter().map(|e| e.abs()).collect();
    for (name, errors) in [("position_m", result.position_errors(last, last_iter)), ("clock_s", clock_abs)] {
        for (v, f) in empirical_cdf(&errors)? {
            w.write_record([name.to_string(), fmt(v), fmt(f)])?;
        }
    }
    w.flush()?;

    let per_agent = result.comm_per_agent();
    let expected_per_agent = result.comm_expected_per_agent();
    let mut counters = Counters::default();
    for r in result.trials.iter().flat_map(|t| &t.slots) {
        counters.skipped_links += r.counters.skipped_links;
        counters.extrinsic_fallbacks += r.counters.extrinsic_fallbacks;
    }
    let report = CommReport {
        algorithm: cfg.algorithm.name(),
        n_int: cfg.schedule.n_int,
        n_ext: cfg.schedule.n_ext,
        trials: cfg.trials,
        n_time: cfg.n_time,
        total: per_agent.iter().sum(),
        expected_total: expected_per_agent.iter().sum(),
        per_agent,
        expected_per_agent,
        skipped_links: counters.skipped_links,
        extrinsic_fallbacks: counters.extrinsic_fallbacks,
    };
    let mut f = BufWriter::new(File::create(dir.join(COMM_FILE))?);
    serde_json::to_writer_pretty(&mut f, &report)?;
    writeln!(f)?;
    f.flush()?;

    let a = cfg.anchors.len();
    let mut w = csv_writer(&dir.join(TRACE_FILE))?;
    w.write_record([
        "trial", "slot", "id", "x_true", "y_true", "theta_true_s", "x_est", "y_est", "theta_est_s",
    ])?;
    for t in &result.trials {
        for r in &t.slots {
            for (k, (tr, e)) in r.truth.iter().zip(r.final_estimates()).enumerate() {
                w.write_record([
                    t.trial.to_string(),
                    r.slot.to_string(),
                    (a + k).to_string(),
                    fmt(tr.x),
                    fmt(tr.y),
                    fmt(tr.t / C),
                    fmt(e.x),
                    fmt(e.y),
                    fmt(e.t / C),
                ])?;
            }
        }
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join(SLOTS_FILE))?;
    w.write_record(["trial", "slot", "links", "nlos_links", "skipped_links", "extrinsic_fallbacks"])?;
    for t in &result.trials {
        for r in &t.slots {
            w.write_record([
                t.trial.to_string(),
                r.slot.to_string(),
                r.links.to_string(),
                r.nlos_links.to_string(),
                r.counters.skipped_links.to_string(),
                r.counters.extrinsic_fallbacks.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads `config_path`, runs it and writes the outputs into `out_dir`.
pub fn run_experiment(config_path: &Path, out_dir: &Path) -> Result<RunResult> {
    let cfg = ScenarioConfig::load(config_path)?;
    let result = simulate(&cfg)?;
    write_outputs(&result, out_dir)?;
    Ok(result)
}
