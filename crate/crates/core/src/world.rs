//! Symbolic tabletop scene.
//!
//! The table is a 3×3 grid of named regions, each with a fixed number of
//! slots. Objects sit in a table slot, inside a container, on a slot of the
//! 3-2-1 stand, or in the trash. States are immutable values: every operation
//! returns a new [`WorkspaceState`] and leaves its input untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub const DEFAULT_SLOT_CAPACITY: u8 = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("unknown object id {0}")]
    UnknownId(ObjectId),
    #[error("object {0} cannot be moved")]
    ImmovableObject(ObjectId),
    #[error("placement {0} is occupied")]
    SlotOccupied(Placement),
    #[error("stand slot {0} lacks support")]
    UnsupportedStandSlot(StandSlot),
    #[error("object {0} supports other objects on the stand")]
    SupportingObject(ObjectId),
    #[error("unknown container: {0}")]
    UnknownContainer(String),
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("inconsistent delta: {0}")]
    InconsistentDelta(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
}

pub type Result<T, E = WorldError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Purple,
    Orange,
    Pink,
    White,
    Gray,
    Cyan,
    Brown,
}

impl Color {
    pub const ALL: [Color; 11] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Yellow,
        Color::Purple,
        Color::Orange,
        Color::Pink,
        Color::White,
        Color::Gray,
        Color::Cyan,
        Color::Brown,
    ];

    /// Colors used for blocks and bowls. Brown is reserved for the packing box.
    pub const PALETTE: [Color; 10] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Yellow,
        Color::Purple,
        Color::Orange,
        Color::Pink,
        Color::White,
        Color::Gray,
        Color::Cyan,
    ];

    pub fn word(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Purple => "purple",
            Color::Orange => "orange",
            Color::Pink => "pink",
            Color::White => "white",
            Color::Gray => "gray",
            Color::Cyan => "cyan",
            Color::Brown => "brown",
        }
    }

    pub fn from_word(word: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.word() == word)
    }
}

/// Named packing goods. They carry no geometry, only identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Good {
    ButterfingerChocolate,
    TennisBall,
    RubberDuck,
    ToyCar,
    SoapDispenser,
    SprayBottle,
    CoffeeMug,
    TapeRoll,
    Hammer,
    Screwdriver,
    Toothbrush,
    Sunglasses,
    BaseballCap,
    WaterBottle,
    AlarmClock,
    ToyDinosaur,
    PepperShaker,
    MustardBottle,
    CanOpener,
    PaintBrush,
}

impl Good {
    pub const ALL: [Good; 20] = [
        Good::ButterfingerChocolate,
        Good::TennisBall,
        Good::RubberDuck,
        Good::ToyCar,
        Good::SoapDispenser,
        Good::SprayBottle,
        Good::CoffeeMug,
        Good::TapeRoll,
        Good::Hammer,
        Good::Screwdriver,
        Good::Toothbrush,
        Good::Sunglasses,
        Good::BaseballCap,
        Good::WaterBottle,
        Good::AlarmClock,
        Good::ToyDinosaur,
        Good::PepperShaker,
        Good::MustardBottle,
        Good::CanOpener,
        Good::PaintBrush,
    ];

    pub fn phrase(self) -> &'static str {
        match self {
            Good::ButterfingerChocolate => "butterfinger chocolate",
            Good::TennisBall => "tennis ball",
            Good::RubberDuck => "rubber duck",
            Good::ToyCar => "toy car",
            Good::SoapDispenser => "soap dispenser",
            Good::SprayBottle => "spray bottle",
            Good::CoffeeMug => "coffee mug",
            Good::TapeRoll => "tape roll",
            Good::Hammer => "hammer",
            Good::Screwdriver => "screwdriver",
            Good::Toothbrush => "toothbrush",
            Good::Sunglasses => "sunglasses",
            Good::BaseballCap => "baseball cap",
            Good::WaterBottle => "water bottle",
            Good::AlarmClock => "alarm clock",
            Good::ToyDinosaur => "toy dinosaur",
            Good::PepperShaker => "pepper shaker",
            Good::MustardBottle => "mustard bottle",
            Good::CanOpener => "can opener",
            Good::PaintBrush => "paint brush",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Category {
    Block,
    Bowl,
    Box,
    Stand,
    TrashCan,
    Good(Good),
}

impl Category {
    pub fn phrase(self) -> &'static str {
        match self {
            Category::Block => "block",
            Category::Bowl => "bowl",
            Category::Box => "box",
            Category::Stand => "stand",
            Category::TrashCan => "trash can",
            Category::Good(g) => g.phrase(),
        }
    }

    pub fn from_phrase(phrase: &str) -> Option<Self> {
        Self::all().find(|c| c.phrase() == phrase)
    }

    pub fn all() -> impl Iterator<Item = Category> {
        [
            Category::Block,
            Category::Bowl,
            Category::Box,
            Category::Stand,
            Category::TrashCan,
        ]
        .into_iter()
        .chain(Good::ALL.into_iter().map(Category::Good))
    }

    /// Bowls and boxes hold other objects; the trash can is modelled by
    /// [`Placement::InTrash`].
    pub fn is_container(self) -> bool {
        matches!(self, Category::Bowl | Category::Box)
    }

    /// Maximum number of objects a container holds, `None` when unbounded.
    pub fn capacity(self) -> Option<usize> {
        match self {
            Category::Bowl => Some(1),
            _ => None,
        }
    }

    pub fn is_fixture(self) -> bool {
        matches!(self, Category::Stand | Category::TrashCan)
    }

    /// Blocks and goods: the things that go into containers and onto the stand.
    pub fn is_item(self) -> bool {
        matches!(self, Category::Block | Category::Good(_))
    }
}

impl From<Category> for String {
    fn from(c: Category) -> String {
        c.phrase().to_string()
    }
}

impl TryFrom<String> for Category {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        Category::from_phrase(&s).ok_or_else(|| format!("unknown category {s:?}"))
    }
}

/// Observable identity of an object: what it is, never which one it is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub category: Category,
    pub color: Option<Color>,
}

impl ObjectSpec {
    pub fn new(category: Category, color: Option<Color>) -> Self {
        Self { category, color }
    }

    pub fn block(color: Color) -> Self {
        Self::new(Category::Block, Some(color))
    }

    pub fn bowl(color: Color) -> Self {
        Self::new(Category::Bowl, Some(color))
    }

    pub fn good(good: Good) -> Self {
        Self::new(Category::Good(good), None)
    }

    pub fn brown_box() -> Self {
        Self::new(Category::Box, Some(Color::Brown))
    }

    /// "red block", "tennis ball".
    pub fn phrase(&self) -> String {
        match self.color {
            Some(c) => format!("{} {}", c.word(), self.category.phrase()),
            None => self.category.phrase().to_string(),
        }
    }
}

impl fmt::Display for ObjectSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.phrase())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    TopLeft,
    TopCenter,
    TopRight,
    MiddleLeft,
    Center,
    MiddleRight,
    BottomLeft,
    BottomCenter,
    BottomRight,
}

impl Region {
    pub const ALL: [Region; 9] = [
        Region::TopLeft,
        Region::TopCenter,
        Region::TopRight,
        Region::MiddleLeft,
        Region::Center,
        Region::MiddleRight,
        Region::BottomLeft,
        Region::BottomCenter,
        Region::BottomRight,
    ];

    pub fn phrase(self) -> &'static str {
        match self {
            Region::TopLeft => "top left",
            Region::TopCenter => "top center",
            Region::TopRight => "top right",
            Region::MiddleLeft => "middle left",
            Region::Center => "center",
            Region::MiddleRight => "middle right",
            Region::BottomLeft => "bottom left",
            Region::BottomCenter => "bottom center",
            Region::BottomRight => "bottom right",
        }
    }

    pub fn from_phrase(phrase: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.phrase() == phrase)
    }
}

/// A slot of the 3-2-1 pyramid stand. Layer 1 is the bottom (3 slots), layer 3
/// the top (1 slot). Slot `s` on layer `L > 1` rests on slots `s` and `s + 1`
/// of layer `L - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StandSlot {
    pub layer: u8,
    pub slot: u8,
}

impl StandSlot {
    pub const LAYERS: u8 = 3;

    pub const ALL: [StandSlot; 6] = [
        StandSlot { layer: 1, slot: 0 },
        StandSlot { layer: 1, slot: 1 },
        StandSlot { layer: 1, slot: 2 },
        StandSlot { layer: 2, slot: 0 },
        StandSlot { layer: 2, slot: 1 },
        StandSlot { layer: 3, slot: 0 },
    ];

    pub fn new(layer: u8, slot: u8) -> Option<Self> {
        ((1..=Self::LAYERS).contains(&layer) && slot < Self::slots_in_layer(layer))
            .then_some(Self { layer, slot })
    }

    pub fn slots_in_layer(layer: u8) -> u8 {
        Self::LAYERS + 1 - layer
    }

    pub fn supports(self) -> Option<[StandSlot; 2]> {
        (self.layer > 1).then(|| {
            [
                StandSlot { layer: self.layer - 1, slot: self.slot },
                StandSlot { layer: self.layer - 1, slot: self.slot + 1 },
            ]
        })
    }

    /// Slots resting on this one.
    pub fn supported(self) -> Vec<StandSlot> {
        if self.layer >= Self::LAYERS {
            return Vec::new();
        }
        let upper = self.layer + 1;
        let mut out = Vec::new();
        if self.slot > 0 {
            out.extend(StandSlot::new(upper, self.slot - 1));
        }
        out.extend(StandSlot::new(upper, self.slot));
        out
    }

    pub fn phrase(self) -> &'static str {
        match (self.layer, self.slot) {
            (1, 0) => "bottom left",
            (1, 1) => "bottom center",
            (1, 2) => "bottom right",
            (2, 0) => "middle left",
            (2, 1) => "middle right",
            _ => "top center",
        }
    }

    pub fn from_phrase(phrase: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.phrase() == phrase)
    }
}

impl fmt::Display for StandSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layer {} slot {}", self.layer, self.slot)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Placement {
    OnTable { region: Region, slot: u8 },
    In { container: ObjectId },
    OnStand { layer: u8, slot: u8 },
    InTrash,
}

impl Placement {
    pub fn on_stand(s: StandSlot) -> Self {
        Placement::OnStand { layer: s.layer, slot: s.slot }
    }

    pub fn stand_slot(&self) -> Option<StandSlot> {
        match *self {
            Placement::OnStand { layer, slot } => Some(StandSlot { layer, slot }),
            _ => None,
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Placement::OnTable { region, slot } => write!(f, "table {} #{slot}", region.phrase()),
            Placement::In { container } => write!(f, "in {container}"),
            Placement::OnStand { layer, slot } => write!(f, "stand layer {layer} slot {slot}"),
            Placement::InTrash => f.write_str("trash"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: ObjectId,
    pub category: Category,
    pub color: Option<Color>,
    pub placement: Placement,
}

impl ObjectInstance {
    pub fn spec(&self) -> ObjectSpec {
        ObjectSpec::new(self.category, self.color)
    }
}

/// Where an object is, as an observer would describe it: region-level, no
/// slot indices, containers named by their spec.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Location {
    Table { region: Region },
    In { container: ObjectSpec, region: Region },
    Stand { layer: u8, slot: u8 },
    Trash,
}

/// Argument of [`WorkspaceState::free_slots`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotQuery {
    Region(Region),
    Container(ObjectId),
    StandLayer(u8),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub id: ObjectId,
    pub from: Placement,
    pub to: Placement,
}

/// Ground-truth change between two states. Lists are disjoint by id.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDelta {
    pub added: Vec<ObjectInstance>,
    pub removed: Vec<ObjectInstance>,
    pub moved: Vec<Move>,
}

impl StateDelta {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.moved.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "StateRepr", try_from = "StateRepr")]
pub struct WorkspaceState {
    objects: BTreeMap<ObjectId, ObjectInstance>,
    slot_capacity: u8,
    next_id: u32,
}

#[derive(Serialize, Deserialize)]
struct StateRepr {
    next_id: u32,
    objects: Vec<ObjectInstance>,
    slot_capacity: u8,
}

impl From<WorkspaceState> for StateRepr {
    fn from(s: WorkspaceState) -> Self {
        StateRepr {
            next_id: s.next_id,
            objects: s.objects.into_values().collect(),
            slot_capacity: s.slot_capacity,
        }
    }
}

impl TryFrom<StateRepr> for WorkspaceState {
    type Error = WorldError;
    fn try_from(r: StateRepr) -> Result<Self> {
        let mut objects = BTreeMap::new();
        for o in r.objects {
            if objects.insert(o.id, o.clone()).is_some() {
                return Err(WorldError::InvalidState(format!("duplicate id {}", o.id)));
            }
        }
        let s = WorkspaceState { objects, slot_capacity: r.slot_capacity, next_id: r.next_id };
        s.validate()?;
        Ok(s)
    }
}

impl Default for WorkspaceState {
    fn default() -> Self {
        Self::new(DEFAULT_SLOT_CAPACITY)
    }
}

impl WorkspaceState {
    pub fn new(slot_capacity: u8) -> Self {
        Self { objects: BTreeMap::new(), slot_capacity, next_id: 1 }
    }

    pub fn slot_capacity(&self) -> u8 {
        self.slot_capacity
    }

    pub fn next_id(&self) -> ObjectId {
        ObjectId(self.next_id)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn get(&self, id: ObjectId) -> Option<&ObjectInstance> {
        self.objects.get(&id)
    }

    fn obj(&self, id: ObjectId) -> Result<&ObjectInstance> {
        self.objects.get(&id).ok_or(WorldError::UnknownId(id))
    }

    pub fn objects(&self) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.values()
    }

    pub fn ids(&self) -> BTreeSet<ObjectId> {
        self.objects.keys().copied().collect()
    }

    pub fn stand(&self) -> Option<ObjectId> {
        self.objects.values().find(|o| o.category == Category::Stand).map(|o| o.id)
    }

    pub fn trash_can(&self) -> Option<ObjectId> {
        self.objects.values().find(|o| o.category == Category::TrashCan).map(|o| o.id)
    }

    /// Not in the trash, directly or through its container.
    pub fn is_available(&self, id: ObjectId) -> bool {
        match self.objects.get(&id).map(|o| o.placement) {
            None | Some(Placement::InTrash) => false,
            Some(Placement::In { container }) => self.is_available(container),
            Some(_) => true,
        }
    }

    pub fn available(&self) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.values().filter(|o| self.is_available(o.id))
    }

    pub fn contents(&self, container: ObjectId) -> Vec<ObjectId> {
        self.objects
            .values()
            .filter(|o| o.placement == Placement::In { container })
            .map(|o| o.id)
            .collect()
    }

    pub fn at_table(&self, region: Region, slot: u8) -> Option<ObjectId> {
        let p = Placement::OnTable { region, slot };
        self.objects.values().find(|o| o.placement == p).map(|o| o.id)
    }

    pub fn at_stand(&self, s: StandSlot) -> Option<ObjectId> {
        let p = Placement::on_stand(s);
        self.objects.values().find(|o| o.placement == p).map(|o| o.id)
    }

    /// Region the object occupies: its own, its container's, or the stand's.
    pub fn effective_region(&self, id: ObjectId) -> Option<Region> {
        match self.objects.get(&id)?.placement {
            Placement::OnTable { region, .. } => Some(region),
            Placement::In { container } => self.effective_region(container),
            Placement::OnStand { .. } => self.stand().and_then(|s| self.effective_region(s)),
            Placement::InTrash => None,
        }
    }

    pub fn location(&self, id: ObjectId) -> Option<Location> {
        let o = self.objects.get(&id)?;
        if !self.is_available(id) {
            return Some(Location::Trash);
        }
        Some(match o.placement {
            Placement::OnTable { region, .. } => Location::Table { region },
            Placement::In { container } => Location::In {
                container: self.objects.get(&container)?.spec(),
                region: self.effective_region(container)?,
            },
            Placement::OnStand { layer, slot } => Location::Stand { layer, slot },
            Placement::InTrash => Location::Trash,
        })
    }

    /// Whether an object on the stand currently carries another one.
    pub fn is_supporting(&self, id: ObjectId) -> bool {
        self.objects
            .get(&id)
            .and_then(|o| o.placement.stand_slot())
            .map(|s| s.supported().into_iter().any(|up| self.at_stand(up).is_some()))
            .unwrap_or(false)
    }

    /// Movable right now: not a fixture, not trashed, not holding up the pyramid.
    pub fn is_movable(&self, id: ObjectId) -> bool {
        match self.objects.get(&id) {
            Some(o) => !o.category.is_fixture() && self.is_available(id) && !self.is_supporting(id),
            None => false,
        }
    }

    /// Checks that `category` (the object `moving`, if it already exists)
    /// may occupy `target`.
    fn check_target(&self, moving: Option<ObjectId>, category: Category, target: Placement) -> Result<()> {
        let others = |p: Placement| {
            self.objects.values().any(|o| o.placement == p && Some(o.id) != moving)
        };
        match target {
            Placement::OnTable { region, slot } => {
                if slot >= self.slot_capacity {
                    return Err(WorldError::InvalidTarget(format!(
                        "slot {slot} beyond capacity in {}",
                        region.phrase()
                    )));
                }
                if others(target) {
                    return Err(WorldError::SlotOccupied(target));
                }
            }
            Placement::In { container } => {
                let c = self
                    .objects
                    .get(&container)
                    .ok_or_else(|| WorldError::UnknownContainer(container.to_string()))?;
                if !c.category.is_container() {
                    return Err(WorldError::InvalidTarget(format!("{container} is not a container")));
                }
                if !category.is_item() {
                    return Err(WorldError::InvalidTarget(format!(
                        "a {} cannot go inside a container",
                        category.phrase()
                    )));
                }
                if let Some(cap) = c.category.capacity() {
                    let held = self
                        .contents(container)
                        .into_iter()
                        .filter(|id| Some(*id) != moving)
                        .count();
                    if held >= cap {
                        return Err(WorldError::SlotOccupied(target));
                    }
                }
            }
            Placement::OnStand { layer, slot } => {
                let s = StandSlot::new(layer, slot).ok_or_else(|| {
                    WorldError::InvalidTarget(format!("no stand slot at layer {layer} slot {slot}"))
                })?;
                if self.stand().is_none() {
                    return Err(WorldError::UnknownContainer("stand".into()));
                }
                if !category.is_item() {
                    return Err(WorldError::InvalidTarget(format!(
                        "a {} cannot go on the stand",
                        category.phrase()
                    )));
                }
                if others(target) {
                    return Err(WorldError::SlotOccupied(target));
                }
                if let Some(sup) = s.supports() {
                    let held = |x: StandSlot| {
                        self.at_stand(x).is_some_and(|id| Some(id) != moving)
                    };
                    if !sup.into_iter().all(held) {
                        return Err(WorldError::UnsupportedStandSlot(s));
                    }
                }
            }
            Placement::InTrash => {
                if self.trash_can().is_none() {
                    return Err(WorldError::UnknownContainer("trash can".into()));
                }
                if category.is_fixture() {
                    return Err(WorldError::InvalidTarget("fixtures cannot be discarded".into()));
                }
            }
        }
        Ok(())
    }

    /// Moves `id` to `target`, returning the new state.
    pub fn place_object(&self, id: ObjectId, target: Placement) -> Result<Self> {
        let o = self.obj(id)?;
        if o.category.is_fixture() || !self.is_available(id) {
            return Err(WorldError::ImmovableObject(id));
        }
        if self.is_supporting(id) {
            return Err(WorldError::SupportingObject(id));
        }
        self.check_target(Some(id), o.category, target)?;
        let mut next = self.clone();
        next.objects.get_mut(&id).expect("checked").placement = target;
        Ok(next)
    }

    /// Adds a new object, allocating the next id.
    pub fn insert(&self, category: Category, color: Option<Color>, placement: Placement) -> Result<(Self, ObjectId)> {
        self.check_target(None, category, placement)?;
        if category == Category::Stand && self.stand().is_some() {
            return Err(WorldError::InvalidTarget("a stand already exists".into()));
        }
        if category == Category::TrashCan && self.trash_can().is_some() {
            return Err(WorldError::InvalidTarget("a trash can already exists".into()));
        }
        if category.is_fixture() && !matches!(placement, Placement::OnTable { .. }) {
            return Err(WorldError::InvalidTarget("fixtures stand on the table".into()));
        }
        let id = ObjectId(self.next_id);
        let mut next = self.clone();
        next.next_id += 1;
        next.objects.insert(id, ObjectInstance { id, category, color, placement });
        Ok((next, id))
    }

    /// Removes an object from the scene entirely.
    pub fn remove(&self, id: ObjectId) -> Result<(Self, ObjectInstance)> {
        let o = self.obj(id)?.clone();
        if o.category.is_fixture() {
            return Err(WorldError::ImmovableObject(id));
        }
        if self.is_supporting(id) {
            return Err(WorldError::SupportingObject(id));
        }
        if !self.contents(id).is_empty() {
            return Err(WorldError::InvalidTarget(format!("{id} still holds objects")));
        }
        let mut next = self.clone();
        next.objects.remove(&id);
        Ok((next, o))
    }

    /// All unoccupied, support-valid placements for the query, in a fixed order.
    pub fn free_slots(&self, query: SlotQuery) -> Result<Vec<Placement>> {
        match query {
            SlotQuery::Region(region) => Ok((0..self.slot_capacity)
                .filter(|&slot| self.at_table(region, slot).is_none())
                .map(|slot| Placement::OnTable { region, slot })
                .collect()),
            SlotQuery::Container(c) => {
                let obj = self
                    .objects
                    .get(&c)
                    .ok_or_else(|| WorldError::UnknownContainer(c.to_string()))?;
                match obj.category {
                    Category::TrashCan => Ok(vec![Placement::InTrash]),
                    cat if cat.is_container() => {
                        let full = cat.capacity().is_some_and(|cap| self.contents(c).len() >= cap);
                        Ok(if full { vec![] } else { vec![Placement::In { container: c }] })
                    }
                    _ => Err(WorldError::UnknownContainer(format!("{c} is not a container"))),
                }
            }
            SlotQuery::StandLayer(layer) => {
                if self.stand().is_none() {
                    return Err(WorldError::UnknownContainer("stand".into()));
                }
                if !(1..=StandSlot::LAYERS).contains(&layer) {
                    return Err(WorldError::UnknownContainer(format!("stand layer {layer}")));
                }
                Ok((0..StandSlot::slots_in_layer(layer))
                    .map(|slot| StandSlot { layer, slot })
                    .filter(|s| self.at_stand(*s).is_none())
                    .filter(|s| {
                        s.supports()
                            .is_none_or(|sup| sup.into_iter().all(|x| self.at_stand(x).is_some()))
                    })
                    .map(Placement::on_stand)
                    .collect())
            }
        }
    }

    /// Free table slots in region order. `lifted` counts as absent.
    pub fn free_table_slots(&self, lifted: Option<ObjectId>) -> Vec<Placement> {
        let mut out = Vec::new();
        for region in Region::ALL {
            for slot in 0..self.slot_capacity {
                let occupied = self.at_table(region, slot).is_some_and(|id| Some(id) != lifted);
                if !occupied {
                    out.push(Placement::OnTable { region, slot });
                }
            }
        }
        out
    }

    /// Checks every joint invariant of the scene.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(WorldError::InvalidState(m));
        if self.slot_capacity == 0 {
            return bad("slot capacity must be positive".into());
        }
        let mut stands = 0;
        let mut trash = 0;
        let mut seen = BTreeSet::new();
        for (key, o) in &self.objects {
            if *key != o.id {
                return bad(format!("object keyed {key} carries id {}", o.id));
            }
            if o.id.0 >= self.next_id {
                return bad(format!("id {} not below next id {}", o.id, self.next_id));
            }
            match o.category {
                Category::Stand => stands += 1,
                Category::TrashCan => trash += 1,
                _ => {}
            }
            if o.category.is_fixture() && !matches!(o.placement, Placement::OnTable { .. }) {
                return bad(format!("fixture {} is not on the table", o.id));
            }
            if !matches!(o.placement, Placement::In { .. } | Placement::InTrash) && !seen.insert(o.placement) {
                return bad(format!("two objects share {}", o.placement));
            }
            if let Err(e) = self.check_target(Some(o.id), o.category, o.placement) {
                return bad(format!("object {}: {e}", o.id));
            }
        }
        if stands > 1 {
            return bad("more than one stand".into());
        }
        if trash > 1 {
            return bad("more than one trash can".into());
        }
        Ok(())
    }

    pub fn apply_delta(&self, delta: &StateDelta) -> Result<Self> {
        let inconsistent = |m: String| WorldError::InconsistentDelta(m);
        let mut ids = BTreeSet::new();
        let all = delta
            .added
            .iter()
            .map(|o| o.id)
            .chain(delta.removed.iter().map(|o| o.id))
            .chain(delta.moved.iter().map(|m| m.id));
        for id in all {
            if !ids.insert(id) {
                return Err(inconsistent(format!("{id} appears twice")));
            }
        }
        let mut next = self.clone();
        for o in &delta.removed {
            match next.objects.remove(&o.id) {
                Some(cur) if cur == *o => {}
                Some(_) => return Err(inconsistent(format!("removed {} does not match state", o.id))),
                None => return Err(inconsistent(format!("removed {} does not exist", o.id))),
            }
        }
        for m in &delta.moved {
            let cur = next
                .objects
                .get_mut(&m.id)
                .ok_or_else(|| inconsistent(format!("moved {} does not exist", m.id)))?;
            if cur.placement != m.from {
                return Err(inconsistent(format!("moved {} is not at {}", m.id, m.from)));
            }
            cur.placement = m.to;
        }
        for o in &delta.added {
            if next.objects.insert(o.id, o.clone()).is_some() {
                return Err(inconsistent(format!("added {} already exists", o.id)));
            }
            next.next_id = next.next_id.max(o.id.0 + 1);
        }
        next.validate().map_err(|e| inconsistent(e.to_string()))?;
        Ok(next)
    }

    /// The delta taking `pre` to `post`, sorted by id.
    pub fn diff(pre: &WorkspaceState, post: &WorkspaceState) -> StateDelta {
        let mut delta = StateDelta::default();
        for (id, o) in &post.objects {
            match pre.objects.get(id) {
                None => delta.added.push(o.clone()),
                Some(old) if old.placement != o.placement => delta.moved.push(Move {
                    id: *id,
                    from: old.placement,
                    to: o.placement,
                }),
                Some(_) => {}
            }
        }
        delta.removed = pre
            .objects
            .iter()
            .filter(|(id, _)| !post.objects.contains_key(id))
            .map(|(_, o)| o.clone())
            .collect();
        delta
    }

    /// Canonical key-sorted JSON text of the full state.
    pub fn canonical_text(&self) -> String {
        let value = serde_json::to_value(self).expect("state serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn state_hash(&self) -> u64 {
        rng::stable_hash(&self.canonical_text())
    }

    /// What an observer can tell apart: the sorted multiset of
    /// (spec, location) pairs. Ids and table slot indices are erased.
    pub fn observable_view(&self) -> Vec<(ObjectSpec, Location)> {
        let mut view: Vec<_> = self
            .objects
            .values()
            .map(|o| (o.spec(), self.location(o.id).expect("object exists")))
            .collect();
        view.sort();
        view
    }

    pub fn observable_hash(&self) -> u64 {
        let value = serde_json::to_value(self.observable_view()).expect("view serializes");
        rng::stable_hash(&serde_json::to_string(&value).expect("value serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(region: Region, slot: u8) -> Placement {
        Placement::OnTable { region, slot }
    }

    fn scene() -> (WorkspaceState, ObjectId, ObjectId) {
        let s = WorkspaceState::default();
        let (s, block) = s.insert(Category::Block, Some(Color::Red), table(Region::TopLeft, 0)).unwrap();
        let (s, bowl) = s.insert(Category::Bowl, Some(Color::Red), table(Region::Center, 0)).unwrap();
        (s, block, bowl)
    }

    fn with_stand() -> WorkspaceState {
        let s = WorkspaceState::default();
        let (mut s, _) = s.insert(Category::Stand, None, table(Region::Center, 0)).unwrap();
        for (i, region) in Region::ALL.iter().take(6).enumerate() {
            s = s.insert(Category::Block, Some(Color::PALETTE[i]), table(*region, 1)).unwrap().0;
        }
        s
    }

    #[test]
    fn place_into_bowl_creates_containment() {
        let (s, block, bowl) = scene();
        let next = s.place_object(block, Placement::In { container: bowl }).unwrap();
        assert_eq!(next.get(block).unwrap().placement, Placement::In { container: bowl });
        assert_eq!(next.contents(bowl), vec![block]);
        assert_eq!(next.effective_region(block), Some(Region::Center));
        // input untouched
        assert_eq!(s.get(block).unwrap().placement, table(Region::TopLeft, 0));
    }

    #[test]
    fn occupied_slot_is_rejected() {
        let (s, block, _) = scene();
        let err = s.place_object(block, table(Region::Center, 0)).unwrap_err();
        assert_eq!(err, WorldError::SlotOccupied(table(Region::Center, 0)));
    }

    #[test]
    fn bowl_holds_one_item() {
        let (s, block, bowl) = scene();
        let (s, other) = s.insert(Category::Block, Some(Color::Blue), table(Region::TopRight, 0)).unwrap();
        let s = s.place_object(block, Placement::In { container: bowl }).unwrap();
        assert!(matches!(
            s.place_object(other, Placement::In { container: bowl }),
            Err(WorldError::SlotOccupied(_))
        ));
    }

    #[test]
    fn fixtures_do_not_move() {
        let s = with_stand();
        let stand = s.stand().unwrap();
        assert_eq!(
            s.place_object(stand, table(Region::TopLeft, 3)),
            Err(WorldError::ImmovableObject(stand))
        );
        assert_eq!(s.place_object(ObjectId(99), table(Region::TopLeft, 3)), Err(WorldError::UnknownId(ObjectId(99))));
    }

    #[test]
    fn upper_stand_slot_needs_both_supports() {
        let s = with_stand();
        let blocks: Vec<_> = s.objects().filter(|o| o.category == Category::Block).map(|o| o.id).collect();
        let err = s.place_object(blocks[0], Placement::OnStand { layer: 2, slot: 0 }).unwrap_err();
        assert_eq!(err, WorldError::UnsupportedStandSlot(StandSlot { layer: 2, slot: 0 }));
        let s = s.place_object(blocks[0], Placement::OnStand { layer: 1, slot: 0 }).unwrap();
        assert!(s.place_object(blocks[1], Placement::OnStand { layer: 2, slot: 0 }).is_err());
        let s = s.place_object(blocks[1], Placement::OnStand { layer: 1, slot: 1 }).unwrap();
        let s = s.place_object(blocks[2], Placement::OnStand { layer: 2, slot: 0 }).unwrap();
        // the supporting block is now locked in place
        assert_eq!(
            s.place_object(blocks[0], table(Region::TopLeft, 3)),
            Err(WorldError::SupportingObject(blocks[0]))
        );
    }

    /// Enumerates every occupancy pattern of the six stand slots and counts the
    /// free, support-valid slots per layer directly from the support rule.
    #[test]
    fn stand_free_slots_match_enumeration() {
        for mask in 0u32..64 {
            let occupied: Vec<StandSlot> =
                StandSlot::ALL.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, s)| *s).collect();
            let valid = occupied
                .iter()
                .all(|s| s.supports().is_none_or(|sup| sup.iter().all(|x| occupied.contains(x))));
            if !valid {
                continue;
            }
            let mut s = with_stand();
            let blocks: Vec<_> = s.objects().filter(|o| o.category == Category::Block).map(|o| o.id).collect();
            let mut sorted = occupied.clone();
            sorted.sort();
            for (b, slot) in blocks.iter().zip(&sorted) {
                s = s.place_object(*b, Placement::on_stand(*slot)).unwrap();
            }
            for layer in 1..=3u8 {
                let expected = StandSlot::ALL
                    .iter()
                    .filter(|x| x.layer == layer && !occupied.contains(x))
                    .filter(|x| x.supports().is_none_or(|sup| sup.iter().all(|y| occupied.contains(y))))
                    .count();
                assert_eq!(s.free_slots(SlotQuery::StandLayer(layer)).unwrap().len(), expected, "mask {mask:06b}");
            }
        }
        // the worked case: full bottom layer, empty middle layer -> 2 slots
        let mut s = with_stand();
        let blocks: Vec<_> = s.objects().filter(|o| o.category == Category::Block).map(|o| o.id).collect();
        for (i, b) in blocks.iter().take(3).enumerate() {
            s = s.place_object(*b, Placement::OnStand { layer: 1, slot: i as u8 }).unwrap();
        }
        assert_eq!(s.free_slots(SlotQuery::StandLayer(2)).unwrap().len(), 2);
    }

    #[test]
    fn free_slots_in_regions() {
        let s = WorkspaceState::default();
        assert_eq!(s.free_slots(SlotQuery::Region(Region::TopLeft)).unwrap().len(), 4);
        let mut s = s;
        for slot in 0..4 {
            s = s.insert(Category::Block, Some(Color::Red), table(Region::TopLeft, slot)).unwrap().0;
        }
        assert!(s.free_slots(SlotQuery::Region(Region::TopLeft)).unwrap().is_empty());
        assert!(matches!(s.free_slots(SlotQuery::Container(ObjectId(1))), Err(WorldError::UnknownContainer(_))));
        assert!(matches!(s.free_slots(SlotQuery::StandLayer(1)), Err(WorldError::UnknownContainer(_))));
    }

    #[test]
    fn delta_identity_and_errors() {
        let (s, block, bowl) = scene();
        assert_eq!(s.apply_delta(&StateDelta::default()).unwrap(), s);
        assert!(WorkspaceState::diff(&s, &s).is_empty());

        let (added, _) = s.insert(Category::Block, Some(Color::Blue), table(Region::BottomLeft, 2)).unwrap();
        let d = WorkspaceState::diff(&s, &added);
        assert_eq!(d.added.len(), 1);
        assert_eq!(s.apply_delta(&d).unwrap().len(), s.len() + 1);

        let bad = StateDelta {
            moved: vec![Move { id: block, from: table(Region::TopLeft, 0), to: table(Region::Center, 0) }],
            ..Default::default()
        };
        assert!(matches!(s.apply_delta(&bad), Err(WorldError::InconsistentDelta(_))));

        let moved = s.place_object(block, Placement::In { container: bowl }).unwrap();
        let d = WorkspaceState::diff(&s, &moved);
        assert_eq!(d.moved.len(), 1);
        assert!(d.added.is_empty() && d.removed.is_empty());
    }

    #[test]
    fn canonical_text_round_trips_and_hash_is_stable() {
        let (s, _, _) = scene();
        let text = s.canonical_text();
        let back: WorkspaceState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.state_hash(), s.state_hash());
        assert!(text.find("\"next_id\"").unwrap() < text.find("\"objects\"").unwrap());
    }

    #[test]
    fn observable_hash_ignores_slot_indices() {
        let (s, block, _) = scene();
        let a = s.place_object(block, table(Region::TopLeft, 3)).unwrap();
        assert_ne!(a.state_hash(), s.state_hash());
        assert_eq!(a.observable_hash(), s.observable_hash());
        let b = s.place_object(block, table(Region::TopRight, 0)).unwrap();
        assert_ne!(b.observable_hash(), s.observable_hash());
    }

    #[test]
    fn trash_makes_objects_unavailable() {
        let (s, block, _) = scene();
        let (s, _) = s.insert(Category::TrashCan, None, table(Region::BottomRight, 0)).unwrap();
        let s = s.place_object(block, Placement::InTrash).unwrap();
        assert!(!s.is_available(block));
        assert_eq!(s.location(block), Some(Location::Trash));
        assert_eq!(s.place_object(block, table(Region::TopLeft, 0)), Err(WorldError::ImmovableObject(block)));
    }
}
