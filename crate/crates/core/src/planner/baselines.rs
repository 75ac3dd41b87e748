//! Reference planners without layered analysis.

use super::belief::{placement_for, update_belief, Belief};
use super::hcot::{emit, goal_intents};
use super::{Decision, Intent, Planner, PlannerError, PlannerOutput, Purpose};
use crate::instr::SkillInstruction;
use crate::monitor::{MonitorReport, PerturbAnswer};
use crate::tasks::{EpisodeSpec, GoalSpec, Target};
use crate::world::{Placement, WorkspaceState};

/// Renders the nominal plan once and replays it, ignoring every report.
#[derive(Clone, Debug)]
pub struct OpenLoop {
    plan: Vec<SkillInstruction>,
    next: usize,
}

impl OpenLoop {
    pub fn new(spec: &EpisodeSpec) -> Result<Self, PlannerError> {
        let plan = spec.nominal_plan().map_err(|e| PlannerError::UngroundablePlan(e.to_string()))?;
        Ok(Self { plan, next: 0 })
    }
}

impl Planner for OpenLoop {
    fn name(&self) -> &str {
        "open_loop"
    }

    fn decide(&mut self, _report: Option<&MonitorReport>) -> Result<PlannerOutput, PlannerError> {
        let d = match self.plan.get(self.next) {
            Some(i) => Decision::skill(*i),
            None => Decision::Done,
        };
        self.next += 1;
        Ok(d.into())
    }
}

/// Replans from each report directly: retries failures, throws away every
/// addition, alerts on every removal and undoes every displacement. Only the
/// first reported change of a step is looked at.
#[derive(Clone, Debug)]
pub struct FlatReplan {
    goal: GoalSpec,
    belief: Belief,
}

impl FlatReplan {
    pub fn new(spec: &EpisodeSpec) -> Result<Self, PlannerError> {
        let pending = goal_intents(&spec.initial, &spec.goal)?;
        Ok(Self { goal: spec.goal.clone(), belief: Belief { state: spec.initial.clone(), pending, in_flight: None } })
    }
}

impl Planner for FlatReplan {
    fn name(&self) -> &str {
        "flat_replan"
    }

    fn decide(&mut self, report: Option<&MonitorReport>) -> Result<PlannerOutput, PlannerError> {
        let Some(report) = report else {
            return Ok(emit(&mut self.belief, &self.goal)?.into());
        };
        let first = report.perturbations().next().copied();
        let partial = MonitorReport {
            step: report.step,
            r1: report.r1,
            r2: vec![first.unwrap_or(PerturbAnswer::None)],
        };
        let update = update_belief(&self.belief, &partial, &self.goal)?;
        let state = &update.belief.state;
        let mut front = Vec::new();
        if let (Some(answer), Some(entry)) = (first, update.resolved.first()) {
            match answer {
                PerturbAnswer::Removed { .. } => {
                    self.belief = update.belief;
                    return Ok(Decision::Alert.into());
                }
                PerturbAnswer::Added { .. } => {
                    front.push(Intent::new(state, entry.object, Target::Trash, Purpose::Discard)?);
                }
                PerturbAnswer::Moved { from, .. } => {
                    let target = match placement_for(state, &from, Some(entry.object)) {
                        Some(Placement::OnTable { region, .. }) => Some(Target::Region { region }),
                        Some(Placement::In { container }) => Some(Target::Container { id: container }),
                        Some(Placement::OnStand { layer, slot }) => Some(Target::Stand { layer, slot }),
                        _ => None,
                    };
                    if let Some(target) = target {
                        front.push(Intent::new(state, entry.object, target, Purpose::Restore)?);
                    }
                }
                PerturbAnswer::None => {}
            }
        }
        if let Some(f) = update.failed {
            front.push(Intent { purpose: Purpose::Retry, ..f });
        }
        front.extend(update.belief.pending.iter().copied());
        self.belief = Belief { pending: front, ..update.belief };
        Ok(emit(&mut self.belief, &self.goal)?.into())
    }

    fn belief_state(&self) -> Option<&WorkspaceState> {
        Some(&self.belief.state)
    }
}
