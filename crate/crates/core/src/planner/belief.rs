//! The planner's picture of the scene, kept in sync from reports alone.

use serde::{Deserialize, Serialize};

use super::{Intent, PlannerError};
use crate::instr;
use crate::monitor::{ExecAnswer, MonitorReport, PerturbAnswer};
use crate::tasks::{self, GoalPredicate, GoalSpec};
use crate::world::{Location, ObjectId, ObjectSpec, Placement, SlotQuery, StandSlot, WorkspaceState};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Belief {
    pub state: WorkspaceState,
    pub pending: Vec<Intent>,
    pub in_flight: Option<Intent>,
}

/// A report entry matched to the belief object it is about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedEntry {
    pub answer: PerturbAnswer,
    pub object: ObjectId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BeliefUpdate {
    pub belief: Belief,
    /// The in-flight intent, when the report says it failed.
    pub failed: Option<Intent>,
    /// Belief after the execution answer, before any reported change.
    pub before_changes: WorkspaceState,
    pub progress_before: Vec<GoalPredicate>,
    pub resolved: Vec<ResolvedEntry>,
}

/// Lowest-id available object of `spec` observed at `at`.
pub fn find_object(state: &WorkspaceState, spec: ObjectSpec, at: &Location) -> Option<ObjectId> {
    state
        .available()
        .filter(|o| o.spec() == spec)
        .find(|o| state.location(o.id).as_ref() == Some(at))
        .map(|o| o.id)
}

/// A concrete placement matching a reported location. `moving` may keep its
/// own table slot.
pub fn placement_for(state: &WorkspaceState, at: &Location, moving: Option<ObjectId>) -> Option<Placement> {
    match *at {
        Location::Table { region } => {
            if let Some(Placement::OnTable { region: r, slot }) = moving.and_then(|m| state.get(m)).map(|o| o.placement) {
                if r == region {
                    return Some(Placement::OnTable { region, slot });
                }
            }
            state.free_slots(SlotQuery::Region(region)).ok()?.into_iter().next()
        }
        Location::In { container, region } => state
            .available()
            .filter(|c| c.spec() == container && state.effective_region(c.id) == Some(region))
            .find(|c| match c.category.capacity() {
                Some(cap) => state.contents(c.id).into_iter().filter(|x| Some(*x) != moving).count() < cap,
                None => true,
            })
            .map(|c| Placement::In { container: c.id }),
        Location::Stand { layer, slot } => {
            let s = StandSlot::new(layer, slot)?;
            state.at_stand(s).filter(|x| Some(*x) != moving).is_none().then_some(Placement::on_stand(s))
        }
        Location::Trash => Some(Placement::InTrash),
    }
}

fn lost(what: String) -> PlannerError {
    PlannerError::BeliefGroundingFailure(what)
}

/// Applies the execution answer, then each reported change, to the belief.
pub fn update_belief(belief: &Belief, report: &MonitorReport, goal: &GoalSpec) -> Result<BeliefUpdate, PlannerError> {
    let mut state = belief.state.clone();
    let mut failed = None;
    if let Some(intent) = belief.in_flight {
        match report.r1 {
            ExecAnswer::Succeeded => {
                let (object, placement) = instr::resolve(&intent.last, &state)
                    .map_err(|e| lost(format!("\"{}\": {e}", intent.last)))?;
                state = state.place_object(object, placement).map_err(|e| lost(e.to_string()))?;
            }
            ExecAnswer::Failed { dropped_at } => {
                failed = Some(intent);
                if let Some(region) = dropped_at {
                    let object = instr::ground_any(&intent.last.pick, &state)
                        .map_err(|e| lost(format!("\"{}\": {e}", intent.last)))?;
                    let p = placement_for(&state, &Location::Table { region }, Some(object))
                        .ok_or_else(|| lost(format!("no room at the {}", region.phrase())))?;
                    state = state.place_object(object, p).map_err(|e| lost(e.to_string()))?;
                }
            }
        }
    }
    let before_changes = state.clone();
    let progress_before = tasks::satisfied_predicates(&state, goal);

    let mut resolved = Vec::new();
    for answer in report.perturbations() {
        let object = match *answer {
            PerturbAnswer::Added { object, at } => {
                let p = placement_for(&state, &at, None)
                    .ok_or_else(|| lost(format!("no room for the added {object}")))?;
                let (next, id) = state.insert(object.category, object.color, p).map_err(|e| lost(e.to_string()))?;
                state = next;
                id
            }
            PerturbAnswer::Removed { object, at } => {
                let id = find_object(&state, object, &at).ok_or_else(|| lost(format!("no {object} to remove")))?;
                state = state.remove(id).map_err(|e| lost(e.to_string()))?.0;
                id
            }
            PerturbAnswer::Moved { object, from, to } => {
                let id = find_object(&state, object, &from).ok_or_else(|| lost(format!("no {object} to move")))?;
                let p = placement_for(&state, &to, Some(id)).ok_or_else(|| lost(format!("no room for the {object}")))?;
                state = state.place_object(id, p).map_err(|e| lost(e.to_string()))?;
                id
            }
            PerturbAnswer::None => unreachable!("filtered"),
        };
        resolved.push(ResolvedEntry { answer: *answer, object });
    }

    Ok(BeliefUpdate {
        belief: Belief { state, pending: belief.pending.clone(), in_flight: None },
        failed,
        before_changes,
        progress_before,
        resolved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::Purpose;
    use crate::tasks::Target;
    use crate::world::{Category, Color, Region};

    fn scene() -> (WorkspaceState, ObjectId, ObjectId) {
        let t = |region, slot| Placement::OnTable { region, slot };
        let s = WorkspaceState::default();
        let (s, block) = s.insert(Category::Block, Some(Color::Red), t(Region::TopLeft, 0)).unwrap();
        let (s, bowl) = s.insert(Category::Bowl, Some(Color::Red), t(Region::Center, 0)).unwrap();
        (s, block, bowl)
    }

    fn goal() -> GoalSpec {
        GoalSpec {
            predicates: vec![GoalPredicate::InContainer {
                object: ObjectSpec::block(Color::Red),
                container: ObjectSpec::bowl(Color::Red),
            }],
        }
    }

    #[test]
    fn success_applies_the_intended_effect() {
        let (s, block, bowl) = scene();
        let intent = Intent::new(&s, block, Target::Container { id: bowl }, Purpose::Nominal).unwrap();
        let b = Belief { state: s.clone(), pending: vec![], in_flight: Some(intent) };
        let r = MonitorReport { step: 1, r1: ExecAnswer::Succeeded, r2: vec![PerturbAnswer::None] };
        let u = update_belief(&b, &r, &goal()).unwrap();
        assert_eq!(u.belief.state.get(block).unwrap().placement, Placement::In { container: bowl });
        assert_eq!(u.progress_before.len(), 1);
        assert!(u.failed.is_none());
    }

    #[test]
    fn failure_and_changes() {
        let (s, block, bowl) = scene();
        let intent = Intent::new(&s, block, Target::Container { id: bowl }, Purpose::Nominal).unwrap();
        let b = Belief { state: s, pending: vec![], in_flight: Some(intent) };
        let r = MonitorReport {
            step: 1,
            r1: ExecAnswer::Failed { dropped_at: Some(Region::BottomRight) },
            r2: vec![
                PerturbAnswer::Added { object: ObjectSpec::block(Color::Blue), at: Location::In { container: ObjectSpec::bowl(Color::Red), region: Region::Center } },
                PerturbAnswer::Moved {
                    object: ObjectSpec::block(Color::Red),
                    from: Location::Table { region: Region::BottomRight },
                    to: Location::Table { region: Region::TopRight },
                },
            ],
        };
        let u = update_belief(&b, &r, &goal()).unwrap();
        assert_eq!(u.failed, Some(intent));
        assert_eq!(u.belief.state.location(block), Some(Location::Table { region: Region::TopRight }));
        assert_eq!(u.resolved.len(), 2);
        assert_eq!(u.resolved[1].object, block);
        let added = u.resolved[0].object;
        assert_eq!(u.belief.state.get(added).unwrap().placement, Placement::In { container: bowl });
    }

    #[test]
    fn unknown_removal_is_surfaced() {
        let (s, _, _) = scene();
        let b = Belief { state: s, pending: vec![], in_flight: None };
        let r = MonitorReport {
            step: 1,
            r1: ExecAnswer::Succeeded,
            r2: vec![PerturbAnswer::Removed { object: ObjectSpec::block(Color::Green), at: Location::Table { region: Region::TopLeft } }],
        };
        assert!(matches!(update_belief(&b, &r, &goal()), Err(PlannerError::BeliefGroundingFailure(_))));
    }
}
