//! One pick-and-place attempt against the true scene, with random drops.
//!
//! Each call draws exactly one uniform number to decide failure. A failed
//! attempt draws once more to pick the table slot where the object lands.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instr::{self, GroundError, SkillInstruction};
use crate::rng::SimRng;
use crate::world::{ObjectId, Placement, WorkspaceState, WorldError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error("grounding failed: {0}")]
    GroundingError(#[from] GroundError),
    #[error("no free table slot to drop the object")]
    NoFreeTableSlot,
    #[error("world rejected the move: {0}")]
    World(#[from] WorldError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Succeeded,
    FailedDropped,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecOutcome {
    pub status: ExecStatus,
    pub object: ObjectId,
    /// Where the instruction meant to put the object.
    pub intended: Placement,
    pub dropped_at: Option<Placement>,
    pub pre_hash: u64,
    pub post_hash: u64,
}

impl ExecOutcome {
    pub fn succeeded(&self) -> bool {
        self.status == ExecStatus::Succeeded
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutorConfig {
    pub failure_prob: f64,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self { failure_prob: 0.2 }
    }
}

pub fn execute(
    state: &WorkspaceState,
    instr: &SkillInstruction,
    cfg: &ExecutorConfig,
    rng: &mut SimRng,
) -> Result<(WorkspaceState, ExecOutcome), ExecError> {
    let (object, intended) = instr::resolve(instr, state)?;
    if !state.is_movable(object) {
        return Err(GroundError::Immovable(object).into());
    }
    let u: f64 = rng.random();
    let (next, status, dropped_at) = if u < cfg.failure_prob {
        let free = state.free_table_slots(Some(object));
        if free.is_empty() {
            return Err(ExecError::NoFreeTableSlot);
        }
        let at = free[rng.random_range(0..free.len())];
        (state.place_object(object, at)?, ExecStatus::FailedDropped, Some(at))
    } else {
        (state.place_object(object, intended)?, ExecStatus::Succeeded, None)
    };
    let outcome = ExecOutcome {
        status,
        object,
        intended,
        dropped_at,
        pre_hash: state.state_hash(),
        post_hash: next.state_hash(),
    };
    Ok((next, outcome))
}
