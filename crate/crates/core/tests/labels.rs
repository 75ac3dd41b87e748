//! Related/unrelated labels checked exhaustively on scenes along nominal
//! runs, against a counting oracle written from the goal predicates alone.

use std::collections::BTreeMap;

use tabletop::instr;
use tabletop::perturb::{classify, Payload, PerturbConfig, PerturbationEvent, PerturbationKind, Scenario};
use tabletop::tasks::{generate_episode, GoalPredicate, GoalSpec, TaskKind, TaskSizes};
use tabletop::world::{Category, Color, Good, ObjectSpec, Placement, StandSlot, WorkspaceState};

fn spec_of(state: &WorkspaceState, id: tabletop::world::ObjectId) -> ObjectSpec {
    state.get(id).unwrap().spec()
}

fn is_bounded(c: &ObjectSpec) -> bool {
    c.category == Category::Bowl
}

/// Does each predicate hold, matching identical predicates to distinct holders.
fn holds(state: &WorkspaceState, goal: &GoalSpec) -> Vec<bool> {
    let mut taken = Vec::new();
    goal.predicates
        .iter()
        .map(|p| {
            let found = state.available().find(|o| {
                !taken.contains(&o.id)
                    && o.spec() == p.object()
                    && match (*p, o.placement) {
                        (GoalPredicate::InContainer { container, .. }, Placement::In { container: c }) => spec_of(state, c) == container,
                        (GoalPredicate::OnStandSlot { layer, slot, .. }, Placement::OnStand { layer: l, slot: s }) => (layer, slot) == (l, s),
                        _ => false,
                    }
            });
            if let Some(o) = found {
                taken.push(o.id);
            }
            found.is_some()
        })
        .collect()
}

fn removal_related(state: &WorkspaceState, goal: &GoalSpec, removed: tabletop::world::ObjectId) -> bool {
    let mut need: BTreeMap<ObjectSpec, usize> = BTreeMap::new();
    let mut once = Vec::new();
    for p in &goal.predicates {
        *need.entry(p.object()).or_default() += 1;
        match p {
            GoalPredicate::InContainer { container, .. } if is_bounded(container) => *need.entry(*container).or_default() += 1,
            GoalPredicate::InContainer { container, .. } => once.push(*container),
            GoalPredicate::OnStandSlot { .. } => once.push(ObjectSpec::new(Category::Stand, None)),
        }
    }
    for s in once {
        need.insert(s, 1);
    }
    need.iter().any(|(s, n)| state.available().filter(|o| o.id != removed && o.spec() == *s).count() < *n)
}

fn addition_related(state: &WorkspaceState, goal: &GoalSpec, spec: ObjectSpec, at: Placement) -> bool {
    let open: Vec<&GoalPredicate> = goal.predicates.iter().zip(holds(state, goal)).filter(|(_, h)| !h).map(|(p, _)| p).collect();
    open.iter().any(|p| match **p {
        GoalPredicate::InContainer { object, container } => {
            spec == object
                || spec == container
                || matches!(at, Placement::In { container: c } if is_bounded(&container)
                    && spec_of(state, c) == container && state.contents(c).is_empty())
        }
        GoalPredicate::OnStandSlot { object, layer, slot } => {
            spec == object || spec.category == Category::Stand || at == Placement::OnStand { layer, slot }
        }
    })
}

fn pool() -> Vec<ObjectSpec> {
    let mut v: Vec<ObjectSpec> = Color::ALL.iter().flat_map(|c| [ObjectSpec::block(*c), ObjectSpec::bowl(*c)]).collect();
    v.extend(Good::ALL.iter().map(|g| ObjectSpec::good(*g)));
    v
}

/// Places a new object of `spec` could be added: one free table slot, every
/// bowl, every stand slot. Invalid ones are dropped by the insert.
fn placements(state: &WorkspaceState) -> Vec<Placement> {
    let mut out: Vec<Placement> = state.free_table_slots(None).into_iter().take(1).collect();
    out.extend(state.available().filter(|o| o.category.capacity().is_some()).map(|o| Placement::In { container: o.id }));
    if state.stand().is_some() {
        out.extend(StandSlot::ALL.iter().map(|s| Placement::OnStand { layer: s.layer, slot: s.slot }));
    }
    out
}

fn states_along(task: TaskKind, seed: u64) -> (GoalSpec, Vec<WorkspaceState>) {
    let spec = generate_episode(task, seed, TaskSizes::default(), PerturbConfig::new(Scenario::AddRelated), 0.2).unwrap();
    let mut s = spec.initial.clone();
    let mut out = vec![s.clone()];
    for i in spec.nominal_plan().unwrap() {
        let (o, p) = instr::resolve(&i, &s).unwrap();
        s = s.place_object(o, p).unwrap();
        out.push(s.clone());
    }
    (spec.goal, out)
}

#[test]
fn removal_labels_match_counting() {
    let mut seen = [0usize; 2];
    for task in TaskKind::ALL {
        for seed in 0..15 {
            let (goal, states) = states_along(task, seed);
            for s in &states {
                for o in s.available().filter(|o| s.is_movable(o.id) && s.contents(o.id).is_empty()) {
                    let ev = PerturbationEvent { kind: PerturbationKind::Rmv, step: 1, payload: Payload::Rmv { object: o.id }, task_related: false };
                    let want = removal_related(s, &goal, o.id);
                    assert_eq!(classify(&ev, &goal, s), want, "{} seed {seed} removing {}", task.name(), o.spec());
                    seen[want as usize] += 1;
                }
            }
        }
    }
    assert!(seen[0] > 0 && seen[1] > 0, "{seen:?}");
}

#[test]
fn addition_labels_match_open_predicates() {
    let mut seen = [0usize; 2];
    for task in TaskKind::ALL {
        for seed in 0..6 {
            let (goal, states) = states_along(task, seed);
            for s in &states {
                for spec in pool() {
                    for at in placements(s) {
                        let Ok((after, id)) = s.insert(spec.category, spec.color, at) else { continue };
                        let object = after.get(id).unwrap().clone();
                        let ev = PerturbationEvent { kind: PerturbationKind::Add, step: 1, payload: Payload::Add { object }, task_related: false };
                        let want = addition_related(s, &goal, spec, at);
                        assert_eq!(classify(&ev, &goal, s), want, "{} seed {seed} adding {spec} at {at:?}", task.name());
                        seen[want as usize] += 1;
                    }
                }
            }
        }
    }
    assert!(seen[0] > 0 && seen[1] > 0, "{seen:?}");
}
