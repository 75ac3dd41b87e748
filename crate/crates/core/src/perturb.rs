//! Scene perturbations: additions, removals and displacements.
//!
//! [`schedule`] fixes when events fire and what kind they are. The concrete
//! object and placement are chosen by [`realize`] against the true scene at
//! the scheduled step, so a payload never refers to a scene that no longer
//! exists. [`inject`] applies an event and reports the exact delta.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SimRng;
use crate::tasks::{self, EpisodeSpec, GoalPredicate, GoalSpec};
use crate::world::{
    Category, Color, Good, Move, ObjectId, ObjectInstance, ObjectSpec, Placement, Region, StandSlot, StateDelta,
    WorkspaceState, WorldError,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PerturbError {
    #[error("scenario cannot be realized: {0}")]
    UnsatisfiableScenario(String),
    #[error("injection conflict: {0}")]
    InjectionConflict(String),
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[default]
    None,
    AddRelated,
    AddDistractor,
    RmvRelated,
    RmvDistractor,
    Dis,
    MixedAddDis,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::None,
        Scenario::AddRelated,
        Scenario::AddDistractor,
        Scenario::RmvRelated,
        Scenario::RmvDistractor,
        Scenario::Dis,
        Scenario::MixedAddDis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::None => "none",
            Scenario::AddRelated => "add_related",
            Scenario::AddDistractor => "add_distractor",
            Scenario::RmvRelated => "rmv_related",
            Scenario::RmvDistractor => "rmv_distractor",
            Scenario::Dis => "dis",
            Scenario::MixedAddDis => "mixed_add_dis",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn is_removal(self) -> bool {
        matches!(self, Scenario::RmvRelated | Scenario::RmvDistractor)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PerturbationKind {
    Add,
    Rmv,
    Dis,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub scenario: Scenario,
    pub max_dis_objects: usize,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self { scenario: Scenario::None, max_dis_objects: 2 }
    }
}

impl PerturbConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self { scenario, ..Self::default() }
    }
}

/// When an event fires and which label it is meant to carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledEvent {
    pub kind: PerturbationKind,
    /// Fires right after the `step`-th executed skill (1-based).
    pub step: usize,
    pub related: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Add { object: ObjectInstance },
    Rmv { object: ObjectId },
    Dis { moves: Vec<(ObjectId, Placement)> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationEvent {
    pub kind: PerturbationKind,
    pub step: usize,
    pub payload: Payload,
    pub task_related: bool,
}

/// One applied event with the scenes around it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Injection {
    pub event: PerturbationEvent,
    pub before: WorkspaceState,
    pub after: WorkspaceState,
    pub delta: StateDelta,
}

fn removable(state: &WorkspaceState, goal: &GoalSpec, related: bool, fresh_since: ObjectId) -> Vec<ObjectId> {
    state
        .available()
        .filter(|o| o.id < fresh_since && state.is_movable(o.id) && state.contents(o.id).is_empty())
        .filter(|o| {
            let (after, _) = state.remove(o.id).expect("object exists");
            tasks::goal_feasible(&after, goal) != related
        })
        .map(|o| o.id)
        .collect()
}

/// Draws the step and kind of every event for the episode.
pub fn schedule(spec: &EpisodeSpec, rng: &mut SimRng) -> Result<Vec<ScheduledEvent>, PerturbError> {
    let cfg = spec.perturb;
    if cfg.scenario == Scenario::None {
        return Ok(Vec::new());
    }
    if cfg.max_dis_objects == 0 {
        return Err(PerturbError::UnsatisfiableScenario("displacement needs at least one object".into()));
    }
    let len = spec
        .nominal_plan()
        .map_err(|e| PerturbError::UnsatisfiableScenario(e.to_string()))?
        .len();
    if len == 0 {
        return Err(PerturbError::UnsatisfiableScenario("empty nominal plan".into()));
    }
    let first = ObjectId(u32::MAX);
    match cfg.scenario {
        Scenario::RmvRelated if removable(&spec.initial, &spec.goal, true, first).is_empty() => {
            return Err(PerturbError::UnsatisfiableScenario("no goal-required object to remove".into()));
        }
        Scenario::RmvDistractor if removable(&spec.initial, &spec.goal, false, first).is_empty() => {
            return Err(PerturbError::UnsatisfiableScenario("no distractor to remove".into()));
        }
        _ => {}
    }
    let step = rng.random_range(1..=len);
    let ev = |kind, related| ScheduledEvent { kind, step, related };
    Ok(match cfg.scenario {
        Scenario::None => unreachable!(),
        Scenario::AddRelated => vec![ev(PerturbationKind::Add, true)],
        Scenario::AddDistractor => vec![ev(PerturbationKind::Add, false)],
        Scenario::RmvRelated => vec![ev(PerturbationKind::Rmv, true)],
        Scenario::RmvDistractor => vec![ev(PerturbationKind::Rmv, false)],
        Scenario::Dis => vec![ev(PerturbationKind::Dis, true)],
        Scenario::MixedAddDis => vec![ev(PerturbationKind::Add, true), ev(PerturbationKind::Dis, true)],
    })
}

/// Bowls and stand slots an unsatisfied predicate still needs to be empty.
pub fn pending_destinations(state: &WorkspaceState, goal: &GoalSpec) -> (BTreeSet<ObjectId>, BTreeSet<StandSlot>) {
    let mut bowls = BTreeSet::new();
    let mut slots = BTreeSet::new();
    for i in tasks::unsatisfied_indices(state, goal) {
        match goal.predicates[i] {
            GoalPredicate::InContainer { container, .. } if container.category.capacity().is_some() => {
                bowls.extend(
                    state
                        .available()
                        .filter(|c| c.spec() == container && state.contents(c.id).is_empty())
                        .map(|c| c.id),
                );
            }
            GoalPredicate::OnStandSlot { layer, slot, .. } => {
                slots.insert(StandSlot { layer, slot });
            }
            _ => {}
        }
    }
    (bowls, slots)
}

fn occupies_pending(placement: Placement, bowls: &BTreeSet<ObjectId>, slots: &BTreeSet<StandSlot>) -> bool {
    match placement {
        Placement::In { container } => bowls.contains(&container),
        Placement::OnStand { layer, slot } => slots.contains(&StandSlot { layer, slot }),
        _ => false,
    }
}

/// Specs never seen in the scene and foreign to the goal, in the goal's theme.
pub fn unseen_specs(state: &WorkspaceState, goal: &GoalSpec, items_only: bool) -> Vec<ObjectSpec> {
    let required = goal.required_specs();
    let present: BTreeSet<ObjectSpec> = state.objects().map(|o| o.spec()).collect();
    let goods = required.keys().any(|s| matches!(s.category, Category::Good(_)));
    let bowls = !items_only && required.keys().any(|s| s.category == Category::Bowl);
    let mut pool: Vec<ObjectSpec> = if goods {
        Good::ALL.into_iter().map(ObjectSpec::good).collect()
    } else {
        Color::PALETTE.into_iter().map(ObjectSpec::block).collect()
    };
    if bowls {
        pool.extend(Color::PALETTE.into_iter().map(ObjectSpec::bowl));
    }
    pool.retain(|s| !required.contains_key(s) && !present.contains(s));
    pool
}

/// Free table slots in regions holding no object of `spec`.
fn lookalike_slots(state: &WorkspaceState, spec: ObjectSpec) -> Vec<Placement> {
    let taken: BTreeSet<Region> = state
        .available()
        .filter(|o| o.spec() == spec)
        .filter_map(|o| state.effective_region(o.id))
        .collect();
    state
        .free_table_slots(None)
        .into_iter()
        .filter(|p| matches!(p, Placement::OnTable { region, .. } if !taken.contains(region)))
        .collect()
}

fn pick<T: Copy>(rng: &mut SimRng, xs: &[T]) -> Option<T> {
    (!xs.is_empty()).then(|| xs[rng.random_range(0..xs.len())])
}

fn unsatisfiable<T>(msg: &str) -> Result<T, PerturbError> {
    Err(PerturbError::UnsatisfiableScenario(msg.to_string()))
}

/// Chooses the concrete payload of a scheduled event against the current
/// true scene. `reference` is the scene when the step began: what counts as
/// related is judged against it, so the object handled during the step still
/// counts as needed. Objects with ids from `fresh_since` on were added during
/// the current step and are never removed or displaced.
pub fn realize(
    state: &WorkspaceState,
    reference: &WorkspaceState,
    goal: &GoalSpec,
    ev: &ScheduledEvent,
    cfg: &PerturbConfig,
    fresh_since: ObjectId,
    rng: &mut SimRng,
) -> Result<PerturbationEvent, PerturbError> {
    let payload = match ev.kind {
        PerturbationKind::Add => {
            let (spec, placement) = if ev.related {
                let mut lookalikes: Vec<ObjectSpec> = tasks::unconsumed_specs(reference, goal)
                    .into_iter()
                    .filter(|s| !s.category.is_fixture() && !lookalike_slots(state, *s).is_empty())
                    .collect();
                lookalikes.sort();
                let (bowls, slots) = pending_destinations(reference, goal);
                let mut blocked: Vec<Placement> = bowls
                    .iter()
                    .filter(|b| state.is_available(**b) && state.contents(**b).is_empty())
                    .map(|&container| Placement::In { container })
                    .collect();
                blocked.extend(
                    slots
                        .iter()
                        .filter(|s| state.at_stand(**s).is_none())
                        .filter(|s| s.supports().is_none_or(|sup| sup.iter().all(|x| state.at_stand(*x).is_some())))
                        .map(|s| Placement::on_stand(*s)),
                );
                let blockers = unseen_specs(state, goal, true);
                let can_block = !blocked.is_empty() && !blockers.is_empty();
                let use_blocker = match (lookalikes.is_empty(), can_block) {
                    (true, false) => return unsatisfiable("no related addition possible"),
                    (true, true) => true,
                    (false, false) => false,
                    (false, true) => rng.random_bool(0.5),
                };
                if use_blocker {
                    (pick(rng, &blockers).expect("non-empty"), pick(rng, &blocked).expect("non-empty"))
                } else {
                    let spec = pick(rng, &lookalikes).expect("non-empty");
                    (spec, pick(rng, &lookalike_slots(state, spec)).expect("non-empty"))
                }
            } else {
                let specs = unseen_specs(state, goal, false);
                let Some(spec) = pick(rng, &specs) else { return unsatisfiable("no unseen distractor spec") };
                let mut options = state.free_table_slots(None);
                if spec.category.is_item() {
                    options.extend(
                        state
                            .available()
                            .filter(|o| o.category == Category::Box)
                            .map(|o| Placement::In { container: o.id }),
                    );
                }
                let Some(p) = pick(rng, &options) else { return unsatisfiable("no room for an addition") };
                (spec, p)
            };
            Payload::Add {
                object: ObjectInstance { id: state.next_id(), category: spec.category, color: spec.color, placement },
            }
        }
        PerturbationKind::Rmv => {
            let candidates = removable(state, goal, ev.related, fresh_since);
            match pick(rng, &candidates) {
                Some(object) => Payload::Rmv { object },
                None => return unsatisfiable("no object to remove"),
            }
        }
        PerturbationKind::Dis => {
            let item_specs: BTreeSet<ObjectSpec> = goal.predicates.iter().map(|p| p.object()).collect();
            let mut candidates: Vec<ObjectId> = state
                .available()
                .filter(|o| o.id < fresh_since && item_specs.contains(&o.spec()) && state.is_movable(o.id))
                .map(|o| o.id)
                .collect();
            if candidates.is_empty() {
                return unsatisfiable("no goal object to displace");
            }
            let m = rng.random_range(1..=cfg.max_dis_objects.min(candidates.len()));
            candidates.shuffle(rng);
            let mut scene = state.clone();
            let mut moves = Vec::new();
            for id in candidates.into_iter().take(m) {
                let here = scene.effective_region(id);
                let slots: Vec<Placement> = scene
                    .free_table_slots(None)
                    .into_iter()
                    .filter(|p| matches!(p, Placement::OnTable { region, .. } if Some(*region) != here))
                    .collect();
                let Some(to) = pick(rng, &slots) else { return unsatisfiable("no free slot to displace into") };
                scene = scene.place_object(id, to)?;
                moves.push((id, to));
            }
            Payload::Dis { moves }
        }
    };
    let mut event = PerturbationEvent { kind: ev.kind, step: ev.step, payload, task_related: false };
    event.task_related = classify(&event, goal, reference);
    Ok(event)
}

/// Ground-truth label of an event against the scene at the start of its step.
pub fn classify(event: &PerturbationEvent, goal: &GoalSpec, state: &WorkspaceState) -> bool {
    match &event.payload {
        Payload::Add { object } => {
            let (bowls, slots) = pending_destinations(state, goal);
            tasks::unconsumed_specs(state, goal).contains(&object.spec())
                || occupies_pending(object.placement, &bowls, &slots)
        }
        Payload::Rmv { object } => match state.remove(*object) {
            Ok((after, _)) => !tasks::goal_feasible(&after, goal),
            Err(_) => false,
        },
        Payload::Dis { .. } => true,
    }
}

fn first_free_slot(state: &WorkspaceState, avoid: Option<Region>) -> Option<Placement> {
    state
        .free_table_slots(None)
        .into_iter()
        .find(|p| matches!(p, Placement::OnTable { region, .. } if Some(*region) != avoid))
}

/// Applies an event atomically. A placement taken in the meantime is
/// replaced by the first free table slot.
pub fn inject(state: &WorkspaceState, event: &PerturbationEvent) -> Result<(WorkspaceState, StateDelta), PerturbError> {
    let conflict = |m: String| PerturbError::InjectionConflict(m);
    let mut delta = StateDelta::default();
    let next = match &event.payload {
        Payload::Add { object } => {
            let (next, id) = match state.insert(object.category, object.color, object.placement) {
                Ok(r) => r,
                Err(_) => {
                    let p = first_free_slot(state, None).ok_or_else(|| conflict("no free slot for addition".into()))?;
                    state.insert(object.category, object.color, p)?
                }
            };
            delta.added.push(next.get(id).expect("inserted").clone());
            next
        }
        Payload::Rmv { object } => {
            if !state.contents(*object).is_empty() {
                return Err(conflict(format!("{object} holds other objects")));
            }
            let (next, gone) = state.remove(*object).map_err(|e| conflict(e.to_string()))?;
            delta.removed.push(gone);
            next
        }
        Payload::Dis { moves } => {
            let mut scene = state.clone();
            for &(id, to) in moves {
                let from = scene.get(id).ok_or_else(|| conflict(format!("{id} vanished")))?.placement;
                let next = match scene.place_object(id, to) {
                    Ok(s) => s,
                    Err(WorldError::SlotOccupied(_)) => {
                        let p = first_free_slot(&scene, scene.effective_region(id))
                            .ok_or_else(|| conflict("no free slot for displacement".into()))?;
                        scene.place_object(id, p)?
                    }
                    Err(e) => return Err(conflict(e.to_string())),
                };
                delta.moved.push(Move { id, from, to: next.get(id).expect("moved").placement });
                scene = next;
            }
            scene
        }
    };
    Ok((next, delta))
}

/// Realizes and injects, in order, every event scheduled for this step.
pub fn perturb_step(
    state: &WorkspaceState,
    reference: &WorkspaceState,
    goal: &GoalSpec,
    events: &[ScheduledEvent],
    cfg: &PerturbConfig,
    rng: &mut SimRng,
) -> Result<Vec<Injection>, PerturbError> {
    let fresh_since = state.next_id();
    let mut scene = state.clone();
    let mut out = Vec::new();
    for ev in events {
        let event = realize(&scene, reference, goal, ev, cfg, fresh_since, rng)?;
        let (after, delta) = inject(&scene, &event)?;
        out.push(Injection { event, before: scene, after: after.clone(), delta });
        scene = after;
    }
    Ok(out)
}
