//! Layered analysis of reported changes and the planner built on it.
//!
//! Every report with a change goes through the same three checks, in order:
//! can the goal still be reached, was finished work undone, and will the
//! change trip up an instruction still to come.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::belief::{update_belief, Belief, BeliefUpdate};
use super::{Decision, Intent, Planner, PlannerError, PlannerOutput, Purpose};
use crate::instr::{self, Destination, ObjectDescriptor};
use crate::monitor::{MonitorReport, PerturbAnswer};
use crate::perturb;
use crate::tasks::{self, EpisodeSpec, GoalPredicate, GoalSpec, Target};
use crate::world::{ObjectId, ObjectSpec, Placement, StandSlot, WorkspaceState};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerOne {
    pub feasible: bool,
    pub missing: Vec<ObjectSpec>,
    pub explanation: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTwo {
    pub intact: bool,
    pub violated: Vec<GoalPredicate>,
    pub explanation: String,
}

/// A changed object that gets in the way of a later instruction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Impact {
    pub object: ObjectId,
    pub spec: ObjectSpec,
    /// Whether the object is new to the scene (and so may be thrown away).
    pub added: bool,
    pub affected: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerThree {
    pub impacts: Vec<Impact>,
    pub explanation: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HcotVerdict {
    pub layer1: LayerOne,
    pub layer2: LayerTwo,
    pub layer3: LayerThree,
}

fn container_descriptor(dest: &Destination) -> Option<ObjectDescriptor> {
    match dest {
        Destination::Container(c) => Some(ObjectDescriptor {
            color: c.color,
            category: c.category,
            relation: None,
            region: c.region,
        }),
        _ => None,
    }
}

fn layer_three(
    state: &WorkspaceState,
    goal: &GoalSpec,
    upcoming: &[Intent],
    changed: &[(ObjectId, bool)],
) -> LayerThree {
    let (bowls, slots) = perturb::pending_destinations(state, goal);
    let mut impacts = Vec::new();
    for &(object, added) in changed {
        let Some(o) = state.get(object).filter(|_| state.is_available(object)) else { continue };
        let spec = o.spec();
        let mut push = |affected: String, reason: String| {
            impacts.push(Impact { object, spec, added, affected, reason });
        };
        let mut hit = false;
        for intent in upcoming {
            let text = intent.last.to_string();
            let picks = instr::denotation(&intent.last.pick, state);
            if picks.len() > 1 && picks.contains(&object) {
                push(text.clone(), format!("the {spec} makes \"{}\" ambiguous", instr::render_descriptor(&intent.last.pick)));
                hit = true;
            }
            if let Some(d) = container_descriptor(&intent.last.dest) {
                let dests = instr::denotation(&d, state);
                if dests.len() > 1 && dests.contains(&object) {
                    push(text.clone(), format!("the {spec} makes the destination \"{}\" ambiguous", instr::render_descriptor(&d)));
                    hit = true;
                }
            }
            let occupies = match (o.placement, intent.target) {
                (Placement::In { container }, Target::Container { id }) => {
                    container == id && state.get(id).is_some_and(|c| c.category.capacity().is_some())
                }
                (Placement::OnStand { layer, slot }, Target::Stand { layer: l, slot: s }) => (layer, slot) == (l, s),
                _ => false,
            };
            if occupies {
                push(text, format!("the {spec} occupies the destination"));
                hit = true;
            }
        }
        let blocks = match o.placement {
            Placement::In { container } => bowls.contains(&container),
            Placement::OnStand { layer, slot } => slots.contains(&StandSlot { layer, slot }),
            _ => false,
        };
        if blocks && !hit {
            push("a pending goal placement".into(), format!("the {spec} occupies a destination the goal still needs"));
        }
    }
    let explanation = if impacts.is_empty() {
        "No upcoming instruction is affected by the change.".to_string()
    } else {
        impacts.iter().map(|i| format!("{}, which affects \"{}\".", capitalize(&i.reason), i.affected)).collect::<Vec<_>>().join(" ")
    };
    LayerThree { impacts, explanation }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Runs the three layers against the belief after an update.
pub fn hcot_evaluate(belief: &Belief, goal: &GoalSpec, update: &BeliefUpdate) -> HcotVerdict {
    let state = &belief.state;
    let missing: Vec<ObjectSpec> = tasks::missing_specs(state, goal).into_iter().map(|(s, _, _)| s).collect();
    let layer1 = LayerOne {
        feasible: missing.is_empty(),
        explanation: if missing.is_empty() {
            "Every object the goal needs is still in the scene, so the task is still achievable.".into()
        } else {
            let names: Vec<String> = missing.iter().map(|s| format!("the {s}")).collect();
            format!("The goal needs {} but it is gone, so the task is no longer achievable.", names.join(" and "))
        },
        missing,
    };

    let mut after = tasks::satisfied_predicates(state, goal);
    let mut violated = Vec::new();
    for p in &update.progress_before {
        match after.iter().position(|q| q == p) {
            Some(i) => {
                after.remove(i);
            }
            None => violated.push(*p),
        }
    }
    let layer2 = LayerTwo {
        intact: violated.is_empty(),
        explanation: if violated.is_empty() {
            "Everything placed so far is still in place.".into()
        } else {
            let lost: Vec<String> = violated.iter().map(|p| p.describe()).collect();
            format!("Progress was undone: it is no longer true that {}.", lost.join(", and that "))
        },
        violated,
    };

    let upcoming: Vec<Intent> = update.failed.iter().chain(belief.pending.iter()).copied().collect();
    let changed: Vec<(ObjectId, bool)> = update
        .resolved
        .iter()
        .filter_map(|r| match r.answer {
            PerturbAnswer::Added { .. } => Some((r.object, true)),
            PerturbAnswer::Moved { .. } => Some((r.object, false)),
            _ => None,
        })
        .collect();
    let layer3 = layer_three(state, goal, &upcoming, &changed);
    HcotVerdict { layer1, layer2, layer3 }
}

/// Target that puts `object` back where the violated predicate wants it.
fn restore_target(p: &GoalPredicate, before: &WorkspaceState, object: ObjectId, now: &WorkspaceState) -> Option<Target> {
    match *p {
        GoalPredicate::OnStandSlot { layer, slot, .. } => Some(Target::Stand { layer, slot }),
        GoalPredicate::InContainer { container, .. } => {
            if let Some(Placement::In { container: c }) = before.get(object).map(|o| o.placement) {
                if now.is_available(c) {
                    return Some(Target::Container { id: c });
                }
            }
            now.available()
                .find(|c| c.spec() == container)
                .map(|c| Target::Container { id: c.id })
        }
    }
}

/// Orders the work after a report: discards, then the retry, restores and
/// the remaining plan, stably sorted so lower stand layers come first.
pub fn corrective_plan(verdict: &HcotVerdict, update: &BeliefUpdate) -> Result<Vec<Intent>, PlannerError> {
    let state = &update.belief.state;
    let mut discards = Vec::new();
    let mut seen = BTreeSet::new();
    for imp in verdict.layer3.impacts.iter().filter(|i| i.added) {
        if seen.insert(imp.object) && state.is_available(imp.object) {
            discards.push(Intent::new(state, imp.object, Target::Trash, Purpose::Discard)?);
        }
    }

    let mut rest = Vec::new();
    if let Some(f) = update.failed {
        rest.push(Intent { purpose: Purpose::Retry, ..f });
    }
    let mut used = BTreeSet::new();
    for p in &verdict.layer2.violated {
        let moved = update.resolved.iter().map(|r| r.object).find(|id| {
            !used.contains(id) && p.holders(&update.before_changes).contains(id) && state.is_available(*id)
        });
        let Some(object) = moved else { continue };
        used.insert(object);
        if let Some(target) = restore_target(p, &update.before_changes, object, state) {
            rest.push(Intent::new(state, object, target, Purpose::Restore)?);
        }
    }
    rest.extend(update.belief.pending.iter().copied());
    rest.sort_by_key(|i| i.target.layer());
    discards.extend(rest);
    Ok(discards)
}

/// Whether an intent can run as-is in `state`.
pub(super) fn intent_valid(state: &WorkspaceState, intent: &Intent) -> bool {
    if !state.is_movable(intent.object) {
        return false;
    }
    match intent.target {
        Target::Container { id } => {
            id != intent.object
                && state.is_available(id)
                && state.get(id).is_some_and(|c| match c.category.capacity() {
                    Some(cap) => state.contents(id).into_iter().filter(|x| *x != intent.object).count() < cap,
                    None => c.category.is_container(),
                })
        }
        Target::Stand { layer, slot } => {
            instr::ground_destination(&Destination::StandSlot { layer, slot }, state, intent.object).is_ok()
        }
        Target::Region { region } => {
            instr::ground_destination(&Destination::Table { region }, state, intent.object).is_ok()
        }
        Target::Trash => state.trash_can().is_some(),
    }
}

pub(super) fn goal_intents(state: &WorkspaceState, goal: &GoalSpec) -> Result<Vec<Intent>, PlannerError> {
    tasks::plan_assignments(state, goal)
        .map_err(|e| PlannerError::UngroundablePlan(e.to_string()))?
        .into_iter()
        .map(|a| Intent::new(state, a.object, a.target, Purpose::Nominal))
        .collect()
}

/// Pops the next runnable intent, re-rendered against the belief, or
/// decides the episode is over.
pub(super) fn emit(belief: &mut Belief, goal: &GoalSpec) -> Result<Decision, PlannerError> {
    let mut rebuilt = false;
    loop {
        let Some(head) = belief.pending.first().copied() else {
            if tasks::goal_satisfied(&belief.state, goal) {
                return Ok(Decision::Done);
            }
            if rebuilt {
                return Err(PlannerError::UngroundablePlan("goal unsatisfied but nothing left to do".into()));
            }
            belief.pending = goal_intents(&belief.state, goal)?;
            rebuilt = true;
            continue;
        };
        if !intent_valid(&belief.state, &head) {
            if head.purpose == Purpose::Discard {
                belief.pending.remove(0);
                continue;
            }
            if rebuilt {
                return Err(PlannerError::UngroundablePlan(format!("cannot carry out \"{}\"", head.last)));
            }
            let mut next: Vec<Intent> =
                belief.pending.iter().filter(|i| i.purpose == Purpose::Discard).copied().collect();
            next.extend(goal_intents(&belief.state, goal)?);
            belief.pending = next;
            rebuilt = true;
            continue;
        }
        let last = instr::instruction_for(&belief.state, head.object, head.target)?;
        belief.pending.remove(0);
        belief.in_flight = Some(Intent { last, ..head });
        return Ok(Decision::skill(last));
    }
}

/// The layered planner.
#[derive(Clone, Debug)]
pub struct Hcot {
    goal: GoalSpec,
    belief: Belief,
}

impl Hcot {
    pub fn new(spec: &EpisodeSpec) -> Result<Self, PlannerError> {
        let pending = goal_intents(&spec.initial, &spec.goal)?;
        Ok(Self { goal: spec.goal.clone(), belief: Belief { state: spec.initial.clone(), pending, in_flight: None } })
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }
}

impl Planner for Hcot {
    fn name(&self) -> &str {
        "hcot"
    }

    fn decide(&mut self, report: Option<&MonitorReport>) -> Result<PlannerOutput, PlannerError> {
        let Some(report) = report else {
            return Ok(emit(&mut self.belief, &self.goal)?.into());
        };
        let update = update_belief(&self.belief, report, &self.goal)?;
        if !report.has_perturbation() {
            let mut belief = update.belief;
            if let Some(f) = update.failed {
                belief.pending.insert(0, Intent { purpose: Purpose::Retry, ..f });
            }
            self.belief = belief;
            return Ok(emit(&mut self.belief, &self.goal)?.into());
        }
        let verdict = hcot_evaluate(&update.belief, &self.goal, &update);
        if !verdict.layer1.feasible {
            self.belief = update.belief;
            return Ok(PlannerOutput { decision: Decision::Alert, verdict: Some(verdict), exchange: None });
        }
        let pending = corrective_plan(&verdict, &update)?;
        self.belief = Belief { pending, ..update.belief };
        let decision = emit(&mut self.belief, &self.goal)?;
        Ok(PlannerOutput { decision, verdict: Some(verdict), exchange: None })
    }

    fn belief_state(&self) -> Option<&WorkspaceState> {
        Some(&self.belief.state)
    }

    fn exact_belief(&self) -> bool {
        true
    }
}
