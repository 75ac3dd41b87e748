//! Helpers shared by the integration tests: random scenes and independent
//! oracles written without the library's own query helpers.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tabletop::instr::{self, ObjectDescriptor, Relation, SimpleDescriptor};
use tabletop::perturb::PerturbConfig;
use tabletop::tasks::{generate_episode, TaskKind, TaskSizes};
use tabletop::world::{Category, Color, Location, ObjectId, ObjectSpec, Region, WorkspaceState};

/// A generated scene, partly solved, with an extra lookalike or two so
/// that descriptors can be ambiguous.
pub fn random_scene(seed: u64) -> WorkspaceState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let task = TaskKind::ALL[rng.random_range(0..TaskKind::ALL.len())];
    let spec = generate_episode(task, seed, TaskSizes::default(), PerturbConfig::default(), 0.0).expect("default sizes fit");
    let plan = spec.nominal_plan().expect("generated episodes have a plan");
    let done = rng.random_range(0..=plan.len());
    let mut state = spec.initial.clone();
    for i in &plan[..done] {
        let (obj, p) = instr::resolve(i, &state).expect("nominal steps ground");
        state = state.place_object(obj, p).expect("nominal steps are legal");
    }
    for _ in 0..rng.random_range(0..3) {
        let movable: Vec<ObjectSpec> =
            state.objects().filter(|o| o.category.is_item()).map(|o| o.spec()).collect();
        let free = state.free_table_slots(None);
        if movable.is_empty() || free.is_empty() {
            break;
        }
        let spec = movable[rng.random_range(0..movable.len())];
        let p = free[rng.random_range(0..free.len())];
        state = state.insert(spec.category, spec.color, p).expect("free slot").0;
    }
    state
}

/// Region of an object, read off locations only.
fn region_of(state: &WorkspaceState, id: ObjectId) -> Option<Region> {
    match state.location(id)? {
        Location::Table { region } | Location::In { region, .. } => Some(region),
        Location::Stand { .. } => {
            let stand = state.objects().find(|o| o.category == Category::Stand)?;
            match state.location(stand.id)? {
                Location::Table { region } => Some(region),
                _ => None,
            }
        }
        Location::Trash => None,
    }
}

fn simple_matches(d: &SimpleDescriptor, spec: ObjectSpec) -> bool {
    d.category == spec.category && d.color.is_none_or(|c| spec.color == Some(c))
}

/// Every non-trashed object the descriptor fits.
pub fn oracle_denotation(d: &ObjectDescriptor, state: &WorkspaceState) -> Vec<ObjectId> {
    let mut out = Vec::new();
    for o in state.objects() {
        let Some(loc) = state.location(o.id) else { continue };
        if loc == Location::Trash {
            continue;
        }
        if o.category != d.category || d.color.is_some_and(|c| o.color != Some(c)) {
            continue;
        }
        let rel_ok = match d.relation {
            None => true,
            Some(Relation::In(c)) => matches!(loc, Location::In { container, .. } if simple_matches(&c, container)),
            Some(Relation::On(c)) => {
                matches!(loc, Location::Stand { .. })
                    && state.objects().any(|s| s.category == Category::Stand && simple_matches(&c, s.spec()))
            }
        };
        let region_ok = d.region.is_none_or(|r| region_of(state, o.id) == Some(r));
        if rel_ok && region_ok {
            out.push(o.id);
        }
    }
    out
}

/// A random descriptor biased toward things present in `state`.
pub fn random_descriptor(state: &WorkspaceState, rng: &mut ChaCha8Rng) -> ObjectDescriptor {
    let objs: Vec<_> = state.objects().collect();
    let base = objs[rng.random_range(0..objs.len())].spec();
    let color = match rng.random_range(0..3) {
        0 => None,
        1 => base.color,
        _ => Some(Color::ALL[rng.random_range(0..Color::ALL.len())]),
    };
    let containers: Vec<ObjectSpec> = objs.iter().filter(|o| o.category.is_container()).map(|o| o.spec()).collect();
    let relation = match rng.random_range(0..4) {
        0 if !containers.is_empty() => {
            let c = containers[rng.random_range(0..containers.len())];
            let color = if rng.random_bool(0.5) { c.color } else { None };
            Some(Relation::In(SimpleDescriptor { color, category: c.category }))
        }
        1 => Some(Relation::On(SimpleDescriptor { color: None, category: Category::Stand })),
        _ => None,
    };
    let region = rng.random_bool(0.4).then(|| Region::ALL[rng.random_range(0..Region::ALL.len())]);
    ObjectDescriptor { color, category: base.category, relation, region }
}
