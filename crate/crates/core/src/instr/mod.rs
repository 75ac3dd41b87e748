//! Skill instructions with relational and regional descriptors.
//!
//! An instruction names one object to pick and one destination:
//!
//! ```text
//! put the red block in the red bowl into the trash can
//! put the blue block at the top left into the brown box
//! put the green block onto the stand at the middle left
//! ```
//!
//! The grammar is in `docs/grammar.md`. [`render_instruction`] produces the
//! canonical sentence and [`parse_instruction`] inverts it.

mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tasks::Target;
use crate::world::{Category, Color, ObjectId, ObjectSpec, Placement, Region, SlotQuery, StandSlot, WorkspaceState};

pub use parser::{parse_instruction, ParseError};

/// `[color] category`, used inside relations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SimpleDescriptor {
    pub color: Option<Color>,
    pub category: Category,
}

impl SimpleDescriptor {
    pub fn of(spec: ObjectSpec) -> Self {
        Self { color: spec.color, category: spec.category }
    }

    fn matches(&self, spec: ObjectSpec) -> bool {
        self.category == spec.category && (self.color.is_none() || self.color == spec.color)
    }
}

impl fmt::Display for SimpleDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.color {
            Some(c) => write!(f, "{} {}", c.word(), self.category.phrase()),
            None => f.write_str(self.category.phrase()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// Inside a bowl or box.
    In(SimpleDescriptor),
    /// On the stand.
    On(SimpleDescriptor),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectDescriptor {
    pub color: Option<Color>,
    pub category: Category,
    pub relation: Option<Relation>,
    pub region: Option<Region>,
}

impl ObjectDescriptor {
    pub fn new(category: Category, color: Option<Color>) -> Self {
        Self { color, category, relation: None, region: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContainerRef {
    pub color: Option<Color>,
    pub category: Category,
    pub region: Option<Region>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Destination {
    Container(ContainerRef),
    StandSlot { layer: u8, slot: u8 },
    Table { region: Region },
    Trash,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    Put,
    Discard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SkillInstruction {
    pub pick: ObjectDescriptor,
    pub dest: Destination,
}

impl SkillInstruction {
    /// Discarding is putting into the trash can.
    pub fn verb(&self) -> Verb {
        match self.dest {
            Destination::Trash => Verb::Discard,
            _ => Verb::Put,
        }
    }
}

impl fmt::Display for SkillInstruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_instruction(self))
    }
}

pub fn render_descriptor(d: &ObjectDescriptor) -> String {
    let mut out = SimpleDescriptor { color: d.color, category: d.category }.to_string();
    match d.relation {
        Some(Relation::In(c)) => out.push_str(&format!(" in the {c}")),
        Some(Relation::On(c)) => out.push_str(&format!(" on the {c}")),
        None => {}
    }
    if let Some(r) = d.region {
        out.push_str(&format!(" at the {}", r.phrase()));
    }
    out
}

/// Canonical lowercase sentence.
pub fn render_instruction(i: &SkillInstruction) -> String {
    let (prep, dest) = match i.dest {
        Destination::Container(c) => {
            let mut s = SimpleDescriptor { color: c.color, category: c.category }.to_string();
            if let Some(r) = c.region {
                s.push_str(&format!(" at the {}", r.phrase()));
            }
            ("into", s)
        }
        Destination::StandSlot { layer, slot } => {
            ("onto", format!("stand at the {}", StandSlot { layer, slot }.phrase()))
        }
        Destination::Table { region } => ("onto", format!("table at the {}", region.phrase())),
        Destination::Trash => ("into", "trash can".to_string()),
    };
    format!("put the {} {prep} the {dest}", render_descriptor(&i.pick))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroundError {
    #[error("nothing matches \"{0}\"")]
    NoMatch(String),
    #[error("\"{descriptor}\" matches {} objects", candidates.len())]
    Ambiguous { descriptor: String, candidates: Vec<ObjectId> },
    #[error("no room at \"{0}\"")]
    DestFull(String),
    #[error("object {0} cannot be told apart from an identical neighbour")]
    NotDistinguishable(ObjectId),
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("object {0} is not movable")]
    Immovable(ObjectId),
}

/// All objects a descriptor denotes in `state`. Trashed objects are never denoted.
pub fn denotation(d: &ObjectDescriptor, state: &WorkspaceState) -> Vec<ObjectId> {
    state
        .available()
        .filter(|o| o.category == d.category && (d.color.is_none() || d.color == o.color))
        .filter(|o| match d.relation {
            None => true,
            Some(Relation::In(c)) => match o.placement {
                Placement::In { container } => state.get(container).is_some_and(|x| c.matches(x.spec())),
                _ => false,
            },
            Some(Relation::On(c)) => {
                matches!(o.placement, Placement::OnStand { .. })
                    && state.stand().and_then(|s| state.get(s)).is_some_and(|x| c.matches(x.spec()))
            }
        })
        .filter(|o| d.region.is_none() || state.effective_region(o.id) == d.region)
        .map(|o| o.id)
        .collect()
}

/// The unique object a descriptor denotes.
pub fn ground(d: &ObjectDescriptor, state: &WorkspaceState) -> Result<ObjectId, GroundError> {
    match denotation(d, state).as_slice() {
        [] => Err(GroundError::NoMatch(render_descriptor(d))),
        [id] => Ok(*id),
        many => Err(GroundError::Ambiguous { descriptor: render_descriptor(d), candidates: many.to_vec() }),
    }
}

/// Two objects no observer can tell apart: same spec, same location, both empty.
pub fn interchangeable(state: &WorkspaceState, a: ObjectId, b: ObjectId) -> bool {
    let (Some(x), Some(y)) = (state.get(a), state.get(b)) else { return false };
    x.spec() == y.spec()
        && state.location(a) == state.location(b)
        && state.contents(a).is_empty()
        && state.contents(b).is_empty()
}

fn break_tie(d: &ObjectDescriptor, state: &WorkspaceState, err: GroundError) -> Result<ObjectId, GroundError> {
    let GroundError::Ambiguous { ref candidates, .. } = err else { return Err(err) };
    if candidates.iter().all(|c| interchangeable(state, candidates[0], *c)) {
        return Ok(candidates[0]);
    }
    // No relation clause reads as "the one lying loose on the table".
    if d.relation.is_none() {
        let loose: Vec<ObjectId> = candidates
            .iter()
            .copied()
            .filter(|c| state.get(*c).is_some_and(|o| matches!(o.placement, Placement::OnTable { .. })))
            .collect();
        if let Some(&first) = loose.first() {
            if loose.iter().all(|c| interchangeable(state, first, *c)) {
                return Ok(first);
            }
        }
    }
    Err(err)
}

/// Like [`ground`], but settles ties: among indistinguishable candidates
/// the lowest id is taken, and a descriptor without a relation clause
/// prefers the object lying loose on the table.
pub fn ground_any(d: &ObjectDescriptor, state: &WorkspaceState) -> Result<ObjectId, GroundError> {
    ground(d, state).or_else(|e| break_tie(d, state, e))
}

fn container_has_room(state: &WorkspaceState, c: ObjectId, moving: ObjectId) -> bool {
    let Some(obj) = state.get(c) else { return false };
    match obj.category.capacity() {
        Some(cap) => state.contents(c).into_iter().filter(|x| *x != moving).count() < cap,
        None => true,
    }
}

/// Resolves a destination to a concrete placement for `moving`.
pub fn ground_destination(dest: &Destination, state: &WorkspaceState, moving: ObjectId) -> Result<Placement, GroundError> {
    match *dest {
        Destination::Container(c) => {
            let d = ObjectDescriptor { color: c.color, category: c.category, relation: None, region: c.region };
            if !c.category.is_container() {
                return Err(GroundError::NoMatch(render_descriptor(&d)));
            }
            let candidates = denotation(&d, state);
            let container = match candidates.as_slice() {
                [] => return Err(GroundError::NoMatch(render_descriptor(&d))),
                [one] => *one,
                many => {
                    let empty_twins = many.iter().all(|x| interchangeable(state, many[0], *x) || {
                        state.get(*x).map(|o| o.spec()) == state.get(many[0]).map(|o| o.spec())
                            && state.location(*x) == state.location(many[0])
                    });
                    if !empty_twins {
                        return Err(GroundError::Ambiguous {
                            descriptor: render_descriptor(&d),
                            candidates: many.to_vec(),
                        });
                    }
                    // identical containers side by side: any one with room
                    many.iter()
                        .copied()
                        .find(|x| container_has_room(state, *x, moving))
                        .ok_or_else(|| GroundError::DestFull(render_descriptor(&d)))?
                }
            };
            if !container_has_room(state, container, moving) {
                return Err(GroundError::DestFull(render_descriptor(&d)));
            }
            Ok(Placement::In { container })
        }
        Destination::StandSlot { layer, slot } => {
            let s = StandSlot::new(layer, slot).ok_or_else(|| GroundError::NoMatch(format!("stand slot {layer}/{slot}")))?;
            if state.stand().is_none() {
                return Err(GroundError::NoMatch("stand".into()));
            }
            let taken = state.at_stand(s).is_some_and(|x| x != moving);
            let supported = s.supports().is_none_or(|sup| {
                sup.into_iter().all(|x| state.at_stand(x).is_some_and(|o| o != moving))
            });
            if taken || !supported {
                return Err(GroundError::DestFull(format!("stand at the {}", s.phrase())));
            }
            Ok(Placement::on_stand(s))
        }
        Destination::Table { region } => state
            .free_slots(SlotQuery::Region(region))
            .unwrap_or_default()
            .into_iter()
            .next()
            .or_else(|| {
                // the object's own slot counts as free
                match state.get(moving).map(|o| o.placement) {
                    Some(p @ Placement::OnTable { region: r, .. }) if r == region => Some(p),
                    _ => None,
                }
            })
            .ok_or_else(|| GroundError::DestFull(format!("table at the {}", region.phrase()))),
        Destination::Trash => {
            if state.trash_can().is_some() {
                Ok(Placement::InTrash)
            } else {
                Err(GroundError::NoMatch("trash can".into()))
            }
        }
    }
}

/// Grounds a whole instruction as the robot would: pick object and placement.
pub fn resolve(i: &SkillInstruction, state: &WorkspaceState) -> Result<(ObjectId, Placement), GroundError> {
    let object = ground_any(&i.pick, state)?;
    let placement = ground_destination(&i.dest, state, object)?;
    Ok((object, placement))
}

fn relation_of(state: &WorkspaceState, id: ObjectId) -> Option<Relation> {
    match state.get(id)?.placement {
        Placement::In { container } => Some(Relation::In(SimpleDescriptor::of(state.get(container)?.spec()))),
        Placement::OnStand { .. } => Some(Relation::On(SimpleDescriptor::of(state.get(state.stand()?)?.spec()))),
        _ => None,
    }
}

fn check_describable(state: &WorkspaceState, id: ObjectId) -> Result<(), GroundError> {
    let o = state.get(id).ok_or(GroundError::UnknownObject(id))?;
    if o.category.is_fixture() || !state.is_available(id) {
        return Err(GroundError::Immovable(id));
    }
    Ok(())
}

/// Shortest descriptor denoting exactly `id`, adding color, then relation,
/// then region.
pub fn minimal_unique_descriptor(id: ObjectId, state: &WorkspaceState) -> Result<ObjectDescriptor, GroundError> {
    check_describable(state, id)?;
    let o = state.get(id).expect("checked");
    let mut d = ObjectDescriptor::new(o.category, o.color);
    if denotation(&d, state) == [id] {
        return Ok(d);
    }
    if let Some(rel) = relation_of(state, id) {
        d.relation = Some(rel);
        if denotation(&d, state) == [id] {
            return Ok(d);
        }
    }
    d.region = state.effective_region(id);
    if denotation(&d, state) == [id] {
        return Ok(d);
    }
    Err(GroundError::NotDistinguishable(id))
}

/// Descriptor with every qualifier that applies.
pub fn full_descriptor(id: ObjectId, state: &WorkspaceState) -> Result<ObjectDescriptor, GroundError> {
    check_describable(state, id)?;
    let o = state.get(id).expect("checked");
    Ok(ObjectDescriptor {
        color: o.color,
        category: o.category,
        relation: relation_of(state, id),
        region: state.effective_region(id),
    })
}

/// Minimal descriptor, or the full one when the object has an identical twin.
pub fn describe(id: ObjectId, state: &WorkspaceState) -> Result<ObjectDescriptor, GroundError> {
    match minimal_unique_descriptor(id, state) {
        Err(GroundError::NotDistinguishable(_)) => full_descriptor(id, state),
        other => other,
    }
}

pub fn container_ref(id: ObjectId, state: &WorkspaceState) -> Result<ContainerRef, GroundError> {
    let o = state.get(id).ok_or(GroundError::UnknownObject(id))?;
    let mut r = ContainerRef { color: o.color, category: o.category, region: None };
    let d = ObjectDescriptor::new(o.category, o.color);
    if denotation(&d, state).len() > 1 {
        r.region = state.effective_region(id);
    }
    Ok(r)
}

/// Renders a grounded (object, target) pair as an instruction.
pub fn instruction_for(state: &WorkspaceState, object: ObjectId, target: Target) -> Result<SkillInstruction, GroundError> {
    let pick = describe(object, state)?;
    let dest = match target {
        Target::Container { id } => Destination::Container(container_ref(id, state)?),
        Target::Stand { layer, slot } => Destination::StandSlot { layer, slot },
        Target::Region { region } => Destination::Table { region },
        Target::Trash => Destination::Trash,
    };
    Ok(SkillInstruction { pick, dest })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(region: Region, slot: u8) -> Placement {
        Placement::OnTable { region, slot }
    }

    fn red_blocks_one_in_bowl() -> (WorkspaceState, ObjectId, ObjectId) {
        let s = WorkspaceState::default();
        let (s, bowl) = s.insert(Category::Bowl, Some(Color::Red), t(Region::Center, 0)).unwrap();
        let (s, a) = s.insert(Category::Block, Some(Color::Red), t(Region::TopLeft, 0)).unwrap();
        let (s, b) = s.insert(Category::Block, Some(Color::Red), t(Region::BottomRight, 0)).unwrap();
        let s = s.place_object(b, Placement::In { container: bowl }).unwrap();
        (s, a, b)
    }

    #[test]
    fn relational_descriptor_picks_the_contained_block() {
        let (s, _, inside) = red_blocks_one_in_bowl();
        let i = parse_instruction("put the red block in the red bowl into the trash can").unwrap();
        assert_eq!(ground(&i.pick, &s), Ok(inside));
        assert_eq!(i.verb(), Verb::Discard);
    }

    #[test]
    fn bare_descriptor_is_ambiguous() {
        let (s, a, b) = red_blocks_one_in_bowl();
        let d = ObjectDescriptor::new(Category::Block, Some(Color::Red));
        match ground(&d, &s) {
            Err(GroundError::Ambiguous { candidates, .. }) => assert_eq!(candidates, vec![a, b]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_object_is_no_match() {
        let (s, _, _) = red_blocks_one_in_bowl();
        let d = ObjectDescriptor::new(Category::Bowl, Some(Color::Green));
        assert!(matches!(ground(&d, &s), Err(GroundError::NoMatch(_))));
    }

    #[test]
    fn minimal_descriptors() {
        let s = WorkspaceState::default();
        let (s, blue) = s.insert(Category::Block, Some(Color::Blue), t(Region::TopLeft, 0)).unwrap();
        let d = minimal_unique_descriptor(blue, &s).unwrap();
        assert_eq!(d, ObjectDescriptor::new(Category::Block, Some(Color::Blue)));

        let (s, r1) = s.insert(Category::Block, Some(Color::Red), t(Region::TopLeft, 1)).unwrap();
        let (s, r2) = s.insert(Category::Block, Some(Color::Red), t(Region::BottomLeft, 0)).unwrap();
        let d = minimal_unique_descriptor(r2, &s).unwrap();
        assert_eq!(d.region, Some(Region::BottomLeft));
        assert_eq!(d.relation, None);
        assert_eq!(ground(&d, &s), Ok(r2));
        assert_eq!(ground(&minimal_unique_descriptor(r1, &s).unwrap(), &s), Ok(r1));

        let (s, r3) = s.insert(Category::Block, Some(Color::Red), t(Region::BottomLeft, 1)).unwrap();
        assert_eq!(minimal_unique_descriptor(r3, &s), Err(GroundError::NotDistinguishable(r3)));
        // twins are interchangeable for the robot
        let full = describe(r3, &s).unwrap();
        assert_eq!(ground_any(&full, &s), Ok(r2));
    }

    #[test]
    fn relation_comes_before_region() {
        let (s, _, inside) = red_blocks_one_in_bowl();
        let d = minimal_unique_descriptor(inside, &s).unwrap();
        assert!(matches!(d.relation, Some(Relation::In(_))));
        assert_eq!(d.region, None);
        assert_eq!(render_descriptor(&d), "red block in the red bowl");
    }

    #[test]
    fn destinations() {
        let (s, free, inside) = red_blocks_one_in_bowl();
        let bowl = Destination::Container(ContainerRef { color: Some(Color::Red), category: Category::Bowl, region: None });
        assert!(matches!(ground_destination(&bowl, &s, free), Err(GroundError::DestFull(_))));
        assert!(ground_destination(&bowl, &s, inside).is_ok());
        assert!(matches!(ground_destination(&Destination::Trash, &s, free), Err(GroundError::NoMatch(_))));
        let p = ground_destination(&Destination::Table { region: Region::TopRight }, &s, free).unwrap();
        assert_eq!(p, t(Region::TopRight, 0));
        assert!(ground_destination(&Destination::StandSlot { layer: 1, slot: 0 }, &s, free).is_err());
    }

    #[test]
    fn canonical_forms() {
        let i = SkillInstruction {
            pick: ObjectDescriptor::new(Category::Block, None),
            dest: Destination::Container(ContainerRef { color: Some(Color::Brown), category: Category::Box, region: None }),
        };
        assert_eq!(render_instruction(&i), "put the block into the brown box");
        let d = SkillInstruction { dest: Destination::Trash, ..i };
        assert!(render_instruction(&d).ends_with("into the trash can"));
        let s = SkillInstruction { dest: Destination::StandSlot { layer: 2, slot: 1 }, ..i };
        assert_eq!(render_instruction(&s), "put the block onto the stand at the middle right");
    }
}
