//! Task catalog, goal predicates and nominal plans.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instr::{self, SkillInstruction};
use crate::perturb::PerturbConfig;
use crate::rng;
use crate::world::{
    Category, Color, Good, ObjectId, ObjectSpec, Placement, Region, StandSlot, WorkspaceState,
    DEFAULT_SLOT_CAPACITY,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaskError {
    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),
    #[error("no plan: {0}")]
    NoPlan(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Matching,
    PackB,
    PackG,
    Stacking,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::Matching, TaskKind::PackB, TaskKind::PackG, TaskKind::Stacking];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Matching => "matching",
            TaskKind::PackB => "pack_b",
            TaskKind::PackG => "pack_g",
            TaskKind::Stacking => "stacking",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn default_goal_objects(self) -> usize {
        match self {
            TaskKind::Matching => 3,
            TaskKind::PackB | TaskKind::PackG => 4,
            TaskKind::Stacking => 6,
        }
    }

    fn goal_bounds(self) -> (usize, usize) {
        match self {
            TaskKind::Matching => (2, 6),
            TaskKind::PackB => (1, 8),
            TaskKind::PackG => (1, 12),
            TaskKind::Stacking => (6, 6),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoalPredicate {
    InContainer { object: ObjectSpec, container: ObjectSpec },
    OnStandSlot { object: ObjectSpec, layer: u8, slot: u8 },
}

impl GoalPredicate {
    pub fn object(&self) -> ObjectSpec {
        match *self {
            GoalPredicate::InContainer { object, .. } | GoalPredicate::OnStandSlot { object, .. } => object,
        }
    }

    pub fn stand_slot(&self) -> Option<StandSlot> {
        match *self {
            GoalPredicate::OnStandSlot { layer, slot, .. } => Some(StandSlot { layer, slot }),
            _ => None,
        }
    }

    /// Layer used to order work: stand predicates by layer, everything else 0.
    pub fn layer(&self) -> u8 {
        self.stand_slot().map_or(0, |s| s.layer)
    }

    pub fn describe(&self) -> String {
        match self {
            GoalPredicate::InContainer { object, container } => {
                format!("the {object} is in the {container}")
            }
            GoalPredicate::OnStandSlot { object, layer, slot } => format!(
                "the {object} is on the stand at the {}",
                StandSlot { layer: *layer, slot: *slot }.phrase()
            ),
        }
    }

    /// Objects that currently make this predicate true.
    pub fn holders(&self, state: &WorkspaceState) -> Vec<ObjectId> {
        match *self {
            GoalPredicate::InContainer { object, container } => state
                .available()
                .filter(|o| o.spec() == object)
                .filter(|o| match o.placement {
                    Placement::In { container: c } => state.get(c).is_some_and(|c| c.spec() == container),
                    _ => false,
                })
                .map(|o| o.id)
                .collect(),
            GoalPredicate::OnStandSlot { object, layer, slot } => state
                .at_stand(StandSlot { layer, slot })
                .filter(|id| state.get(*id).is_some_and(|o| o.spec() == object))
                .into_iter()
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub predicates: Vec<GoalPredicate>,
}

impl GoalSpec {
    /// Multiset of specs the goal consumes: one item per predicate, one bowl
    /// per bowl predicate, one box per box spec, one stand.
    pub fn required_specs(&self) -> BTreeMap<ObjectSpec, usize> {
        let mut out = BTreeMap::new();
        let mut unbounded = BTreeSet::new();
        for p in &self.predicates {
            *out.entry(p.object()).or_insert(0) += 1;
            match p {
                GoalPredicate::InContainer { container, .. } => {
                    if container.category.capacity().is_some() {
                        *out.entry(*container).or_insert(0) += 1;
                    } else {
                        unbounded.insert(*container);
                    }
                }
                GoalPredicate::OnStandSlot { .. } => {
                    unbounded.insert(ObjectSpec::new(Category::Stand, None));
                }
            }
        }
        for spec in unbounded {
            out.insert(spec, 1);
        }
        out
    }
}

/// The predicates holding in `state`. Identical predicates are counted
/// against distinct holders, earliest first.
pub fn satisfied_predicates(state: &WorkspaceState, goal: &GoalSpec) -> Vec<GoalPredicate> {
    let mut used: BTreeMap<GoalPredicate, usize> = BTreeMap::new();
    let mut support: BTreeMap<GoalPredicate, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for p in &goal.predicates {
        let avail = *support.entry(*p).or_insert_with(|| p.holders(state).len());
        let n = used.entry(*p).or_insert(0);
        if *n < avail {
            *n += 1;
            out.push(*p);
        }
    }
    out
}

pub fn goal_satisfied(state: &WorkspaceState, goal: &GoalSpec) -> bool {
    satisfied_predicates(state, goal).len() == goal.predicates.len()
}

/// Indices of predicates not holding in `state`.
pub fn unsatisfied_indices(state: &WorkspaceState, goal: &GoalSpec) -> Vec<usize> {
    let mut left = satisfied_predicates(state, goal);
    let mut out = Vec::new();
    for (i, p) in goal.predicates.iter().enumerate() {
        if let Some(pos) = left.iter().position(|q| q == p) {
            left.remove(pos);
        } else {
            out.push(i);
        }
    }
    out
}

/// Specs the goal still needs: item and destination specs of every
/// unsatisfied predicate.
pub fn unconsumed_specs(state: &WorkspaceState, goal: &GoalSpec) -> BTreeSet<ObjectSpec> {
    let mut out = BTreeSet::new();
    for i in unsatisfied_indices(state, goal) {
        let p = &goal.predicates[i];
        out.insert(p.object());
        match p {
            GoalPredicate::InContainer { container, .. } => {
                out.insert(*container);
            }
            GoalPredicate::OnStandSlot { .. } => {
                out.insert(ObjectSpec::new(Category::Stand, None));
            }
        }
    }
    out
}

/// Specs the scene is short of for the goal to remain achievable. Empty when
/// every required spec is still present in sufficient number.
pub fn missing_specs(state: &WorkspaceState, goal: &GoalSpec) -> Vec<(ObjectSpec, usize, usize)> {
    let mut have: BTreeMap<ObjectSpec, usize> = BTreeMap::new();
    for o in state.available() {
        *have.entry(o.spec()).or_insert(0) += 1;
    }
    goal.required_specs()
        .into_iter()
        .filter_map(|(spec, need)| {
            let got = have.get(&spec).copied().unwrap_or(0);
            (got < need).then_some((spec, need, got))
        })
        .collect()
}

pub fn goal_feasible(state: &WorkspaceState, goal: &GoalSpec) -> bool {
    missing_specs(state, goal).is_empty()
}

/// A grounded destination, independent of wording.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Container { id: ObjectId },
    Stand { layer: u8, slot: u8 },
    Region { region: Region },
    Trash,
}

impl Target {
    pub fn stand(s: StandSlot) -> Self {
        Target::Stand { layer: s.layer, slot: s.slot }
    }

    pub fn stand_slot(&self) -> Option<StandSlot> {
        match *self {
            Target::Stand { layer, slot } => Some(StandSlot { layer, slot }),
            _ => None,
        }
    }

    pub fn layer(&self) -> u8 {
        self.stand_slot().map_or(0, |s| s.layer)
    }
}

/// One step of a plan: which object goes where, for which predicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub object: ObjectId,
    pub target: Target,
    pub predicate: usize,
}

/// Assigns a distinct object and destination to every unsatisfied predicate,
/// in support order (stand layer ascending, then goal order).
pub fn plan_assignments(state: &WorkspaceState, goal: &GoalSpec) -> Result<Vec<Assignment>, TaskError> {
    let satisfied = satisfied_predicates(state, goal);
    let mut used_objects: BTreeSet<ObjectId> = BTreeSet::new();
    let mut used_containers: BTreeSet<ObjectId> = BTreeSet::new();
    {
        // reserve holders of satisfied predicates
        let mut left = satisfied.clone();
        for p in &goal.predicates {
            if let Some(pos) = left.iter().position(|q| q == p) {
                left.remove(pos);
                if let Some(h) = p.holders(state).into_iter().find(|h| !used_objects.contains(h)) {
                    used_objects.insert(h);
                    if let Some(Placement::In { container }) = state.get(h).map(|o| o.placement) {
                        if state.get(container).is_some_and(|c| c.category.capacity().is_some()) {
                            used_containers.insert(container);
                        }
                    }
                }
            }
        }
    }

    let mut pending = unsatisfied_indices(state, goal);
    pending.sort_by_key(|&i| goal.predicates[i].layer());

    let mut out = Vec::new();
    for i in pending {
        let p = goal.predicates[i];
        let object = state
            .available()
            .filter(|o| o.spec() == p.object() && !used_objects.contains(&o.id))
            .map(|o| o.id)
            .next()
            .ok_or_else(|| TaskError::NoPlan(format!("no {} available for {}", p.object(), p.describe())))?;
        used_objects.insert(object);
        let target = match p {
            GoalPredicate::InContainer { container, .. } => {
                let id = state
                    .available()
                    .filter(|c| c.spec() == container && !used_containers.contains(&c.id))
                    .filter(|c| match c.category.capacity() {
                        Some(cap) => state.contents(c.id).len() < cap,
                        None => true,
                    })
                    .map(|c| c.id)
                    .next()
                    .ok_or_else(|| TaskError::NoPlan(format!("no free {container} for {}", p.describe())))?;
                if container.category.capacity().is_some() {
                    used_containers.insert(id);
                }
                Target::Container { id }
            }
            GoalPredicate::OnStandSlot { layer, slot, .. } => {
                if state.stand().is_none() {
                    return Err(TaskError::NoPlan("no stand in the scene".into()));
                }
                if state.at_stand(StandSlot { layer, slot }).is_some() {
                    return Err(TaskError::NoPlan(format!("stand slot for {} is blocked", p.describe())));
                }
                Target::Stand { layer, slot }
            }
        };
        out.push(Assignment { object, target, predicate: i });
    }
    Ok(out)
}

/// Straight-line instructions completing the goal from `initial` when
/// nothing goes wrong.
pub fn nominal_plan(initial: &WorkspaceState, goal: &GoalSpec) -> Result<Vec<SkillInstruction>, TaskError> {
    plan_assignments(initial, goal)?
        .into_iter()
        .map(|a| {
            instr::instruction_for(initial, a.object, a.target)
                .map_err(|e| TaskError::NoPlan(format!("cannot describe step: {e}")))
        })
        .collect()
}

/// Object counts for episode generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSizes {
    /// Goal objects (Matching: block/bowl pairs). `None` uses the task default.
    pub goal_objects: Option<usize>,
    pub distractors: usize,
    pub slot_capacity: u8,
}

impl Default for TaskSizes {
    fn default() -> Self {
        Self { goal_objects: None, distractors: 2, slot_capacity: DEFAULT_SLOT_CAPACITY }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub task: TaskKind,
    pub seed: u64,
    pub sizes: TaskSizes,
    pub failure_prob: f64,
    pub perturb: PerturbConfig,
    pub goal: GoalSpec,
    pub initial: WorkspaceState,
}

impl EpisodeSpec {
    pub fn canonical_text(&self) -> String {
        let value = serde_json::to_value(self).expect("episode serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn from_text(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn spec_hash(&self) -> u64 {
        rng::stable_hash(&self.canonical_text())
    }

    pub fn nominal_plan(&self) -> Result<Vec<SkillInstruction>, TaskError> {
        nominal_plan(&self.initial, &self.goal)
    }
}

pub fn generate_episode(
    task: TaskKind,
    seed: u64,
    sizes: TaskSizes,
    perturb: PerturbConfig,
    failure_prob: f64,
) -> Result<EpisodeSpec, TaskError> {
    let infeasible = |m: String| Err(TaskError::InfeasibleConfig(m));
    if !(0.0..=1.0).contains(&failure_prob) {
        return infeasible(format!("failure probability {failure_prob} outside [0, 1]"));
    }
    if sizes.slot_capacity == 0 {
        return infeasible("slot capacity must be positive".into());
    }
    let n = sizes.goal_objects.unwrap_or(task.default_goal_objects());
    let (lo, hi) = task.goal_bounds();
    if n < lo || n > hi {
        return infeasible(format!("{} needs between {lo} and {hi} goal objects, got {n}", task.name()));
    }
    let d = sizes.distractors;
    let mut rng = rng::stream(seed, 0, rng::STREAM_EPISODE);

    let mut colors = Color::PALETTE.to_vec();
    colors.shuffle(&mut rng);
    let mut goods = Good::ALL.to_vec();
    goods.shuffle(&mut rng);

    let need_colors = n + d;
    let mut items: Vec<ObjectSpec> = Vec::new();
    let mut predicates = Vec::new();
    match task {
        TaskKind::Matching | TaskKind::PackB | TaskKind::Stacking => {
            if need_colors > colors.len() {
                return infeasible(format!("{need_colors} distinct colors needed, palette has {}", colors.len()));
            }
            let goal_colors = &colors[..n];
            for &c in goal_colors {
                items.push(ObjectSpec::block(c));
            }
            match task {
                TaskKind::Matching => {
                    for &c in goal_colors {
                        items.push(ObjectSpec::bowl(c));
                        predicates.push(GoalPredicate::InContainer {
                            object: ObjectSpec::block(c),
                            container: ObjectSpec::bowl(c),
                        });
                    }
                }
                TaskKind::PackB => {
                    items.push(ObjectSpec::brown_box());
                    for &c in goal_colors {
                        predicates.push(GoalPredicate::InContainer {
                            object: ObjectSpec::block(c),
                            container: ObjectSpec::brown_box(),
                        });
                    }
                }
                _ => {
                    items.push(ObjectSpec::new(Category::Stand, None));
                    for (&c, s) in goal_colors.iter().zip(StandSlot::ALL) {
                        predicates.push(GoalPredicate::OnStandSlot {
                            object: ObjectSpec::block(c),
                            layer: s.layer,
                            slot: s.slot,
                        });
                    }
                }
            }
            for &c in &colors[n..n + d] {
                let bowl = task == TaskKind::Matching && rand::Rng::random_bool(&mut rng, 0.5);
                items.push(if bowl { ObjectSpec::bowl(c) } else { ObjectSpec::block(c) });
            }
        }
        TaskKind::PackG => {
            if need_colors > goods.len() {
                return infeasible(format!("{need_colors} distinct goods needed, catalog has {}", goods.len()));
            }
            for &g in &goods[..n] {
                items.push(ObjectSpec::good(g));
                predicates.push(GoalPredicate::InContainer {
                    object: ObjectSpec::good(g),
                    container: ObjectSpec::brown_box(),
                });
            }
            items.push(ObjectSpec::brown_box());
            for &g in &goods[n..n + d] {
                items.push(ObjectSpec::good(g));
            }
        }
    }
    items.push(ObjectSpec::new(Category::TrashCan, None));

    let mut slots: Vec<Placement> = WorkspaceState::new(sizes.slot_capacity).free_table_slots(None);
    if items.len() > slots.len() {
        return infeasible(format!("{} objects do not fit in {} table slots", items.len(), slots.len()));
    }
    slots.shuffle(&mut rng);
    let mut state = WorkspaceState::new(sizes.slot_capacity);
    for (spec, slot) in items.iter().zip(slots) {
        state = state
            .insert(spec.category, spec.color, slot)
            .map_err(|e| TaskError::InfeasibleConfig(e.to_string()))?
            .0;
    }

    let goal = GoalSpec { predicates };
    let spec = EpisodeSpec { task, seed, sizes, failure_prob, perturb, goal, initial: state };
    if goal_satisfied(&spec.initial, &spec.goal) {
        return infeasible("generated scene already satisfies the goal".into());
    }
    spec.nominal_plan()?;
    Ok(spec)
}
