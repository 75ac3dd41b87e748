//! Planners: decide the next skill from the latest monitor report.
//!
//! Three rule-based planners share the [`Planner`] trait:
//!
//! * [`OpenLoop`] renders the whole plan up front and never listens.
//! * [`FlatReplan`] reacts to the first reported change only, and always in
//!   the same way per kind.
//! * [`Hcot`] tracks a belief of the scene and runs a three-layer check
//!   (feasibility, progress, future steps) on every reported change.

mod baselines;
mod belief;
mod hcot;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instr::{self, GroundError, SkillInstruction};
use crate::monitor::MonitorReport;
use crate::tasks::{EpisodeSpec, Target};
use crate::world::{ObjectId, WorkspaceState};

pub use baselines::{FlatReplan, OpenLoop};
pub use belief::{find_object, placement_for, update_belief, Belief, BeliefUpdate, ResolvedEntry};
pub use hcot::{corrective_plan, hcot_evaluate, Hcot, HcotVerdict, Impact, LayerOne, LayerThree, LayerTwo};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlannerError {
    #[error("belief cannot place a reported object: {0}")]
    BeliefGroundingFailure(String),
    #[error("no groundable plan: {0}")]
    UngroundablePlan(String),
    #[error("cannot read reply: {0}")]
    UnparseableReply(String),
    #[error("completion backend failed: {0}")]
    Backend(String),
}

impl From<GroundError> for PlannerError {
    fn from(e: GroundError) -> Self {
        PlannerError::UngroundablePlan(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Skill { instruction: SkillInstruction },
    Done,
    Alert,
}

impl Decision {
    pub fn skill(instruction: SkillInstruction) -> Self {
        Decision::Skill { instruction }
    }
}

/// Reply text for a decision: the instruction sentence, "done" or "alert".
impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Skill { instruction } => write!(f, "{instruction}"),
            Decision::Done => f.write_str("done"),
            Decision::Alert => f.write_str("alert"),
        }
    }
}

/// Text sent to and received from a completion backend.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    /// Only kept when prompt logging is on.
    pub prompt: Option<String>,
    pub reply: String,
}

/// A decision plus whatever reasoning the planner wants traced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerOutput {
    pub decision: Decision,
    pub verdict: Option<HcotVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchange: Option<Exchange>,
}

impl From<Decision> for PlannerOutput {
    fn from(decision: Decision) -> Self {
        Self { decision, verdict: None, exchange: None }
    }
}

pub trait Planner: Send {
    fn name(&self) -> &str;

    /// Next decision. `report` is `None` before the first skill.
    fn decide(&mut self, report: Option<&MonitorReport>) -> Result<PlannerOutput, PlannerError>;

    /// The planner's current picture of the scene, if it keeps one.
    fn belief_state(&self) -> Option<&WorkspaceState> {
        None
    }

    /// Whether the belief should match the true scene under a perfect monitor.
    fn exact_belief(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    OpenLoop,
    FlatReplan,
    Hcot,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 3] = [PlannerKind::OpenLoop, PlannerKind::FlatReplan, PlannerKind::Hcot];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::OpenLoop => "open_loop",
            PlannerKind::FlatReplan => "flat_replan",
            PlannerKind::Hcot => "hcot",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn build(self, spec: &EpisodeSpec) -> Result<Box<dyn Planner>, PlannerError> {
        Ok(match self {
            PlannerKind::OpenLoop => Box::new(OpenLoop::new(spec)?),
            PlannerKind::FlatReplan => Box::new(FlatReplan::new(spec)?),
            PlannerKind::Hcot => Box::new(Hcot::new(spec)?),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Nominal,
    Discard,
    Retry,
    Restore,
}

/// A planned move, by belief id, with the wording last used for it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intent {
    pub object: ObjectId,
    pub target: Target,
    pub purpose: Purpose,
    pub last: SkillInstruction,
}

impl Intent {
    pub fn new(state: &WorkspaceState, object: ObjectId, target: Target, purpose: Purpose) -> Result<Self, PlannerError> {
        let last = instr::instruction_for(state, object, target)?;
        Ok(Self { object, target, purpose, last })
    }
}
