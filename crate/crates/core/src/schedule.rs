//! Two-loop message-passing schedule.
//!
//! Within each external round every agent performs `n_int` local cycles
//! using only what its neighbors transmitted at the previous exchange. The
//! neighbor-originated messages stay frozen; the agent refreshes its own
//! outgoing messages, beliefs and expansion point between cycles. Only the
//! external exchanges are transmitted and counted.

use serde::{Deserialize, Serialize};

use crate::bp::run_slot_bp_scheduled;
use crate::error::{Error, Result};
use crate::model::{BpMode, SlotOutput, SlotProblem};
use crate::vmp::run_slot_vmp_scheduled;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub n_int: usize,
    pub n_ext: usize,
}

impl Schedule {
    pub fn new(n_int: usize, n_ext: usize) -> Result<Self> {
        let s = Self { n_int, n_ext };
        s.validate()?;
        Ok(s)
    }

    /// One local cycle per exchange.
    pub fn plain(n_iter: usize) -> Self {
        Self {
            n_int: 1,
            n_ext: n_iter,
        }
    }

    pub fn n_iter(&self) -> usize {
        self.n_int * self.n_ext
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_int == 0 || self.n_ext == 0 {
            return Err(Error::InvalidInput(format!(
                "schedule needs positive n_int and n_ext, got ({}, {})",
                self.n_int, self.n_ext
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Engine {
    Bp(BpMode),
    Vmp,
}

pub fn run_slot_scheduled(problem: &SlotProblem, engine: Engine, schedule: Schedule) -> Result<SlotOutput> {
    match engine {
        Engine::Bp(mode) => run_slot_bp_scheduled(problem, mode, schedule),
        Engine::Vmp => run_slot_vmp_scheduled(problem, schedule),
    }
}
