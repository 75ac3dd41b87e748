//! Step reports: did the skill work, and did the scene change on its own.
//!
//! The oracle monitor reads ground-truth deltas. [`apply_noise`] corrupts a
//! report to emulate an imperfect observer. Reports name objects by spec and
//! location only, so planners have to re-ground every entry.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{ExecOutcome, ExecStatus};
use crate::perturb::Injection;
use crate::rng::SimRng;
use crate::world::{Category, Color, Location, ObjectSpec, Placement, Region, StandSlot};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExecAnswer {
    Succeeded,
    Failed { dropped_at: Option<Region> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbAnswer {
    None,
    Added { object: ObjectSpec, at: Location },
    Removed { object: ObjectSpec, at: Location },
    Moved { object: ObjectSpec, from: Location, to: Location },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorReport {
    pub step: usize,
    pub r1: ExecAnswer,
    pub r2: Vec<PerturbAnswer>,
}

impl MonitorReport {
    /// Entries other than [`PerturbAnswer::None`].
    pub fn perturbations(&self) -> impl Iterator<Item = &PerturbAnswer> {
        self.r2.iter().filter(|a| **a != PerturbAnswer::None)
    }

    pub fn has_perturbation(&self) -> bool {
        self.perturbations().next().is_some()
    }
}

impl fmt::Display for MonitorReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_report(self))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Chance the execution answer is inverted.
    pub flip_exec: f64,
    /// Chance each perturbation entry is dropped.
    pub miss_perturb: f64,
    /// Chance a spurious addition is appended.
    pub hallucinate: f64,
}

impl NoiseModel {
    pub fn oracle() -> Self {
        Self::default()
    }

    pub fn is_oracle(&self) -> bool {
        self.flip_exec == 0.0 && self.miss_perturb == 0.0 && self.hallucinate == 0.0
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("flip_exec", self.flip_exec), ("miss_perturb", self.miss_perturb), ("hallucinate", self.hallucinate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

fn table_region(p: Option<Placement>) -> Option<Region> {
    match p {
        Some(Placement::OnTable { region, .. }) => Some(region),
        _ => None,
    }
}

/// Ground-truth report for one step. `injections` are the perturbations
/// applied after the action, in order.
pub fn observe(step: usize, outcome: &ExecOutcome, injections: &[Injection]) -> MonitorReport {
    let r1 = match outcome.status {
        ExecStatus::Succeeded => ExecAnswer::Succeeded,
        ExecStatus::FailedDropped => ExecAnswer::Failed { dropped_at: table_region(outcome.dropped_at) },
    };
    let mut r2 = Vec::new();
    for inj in injections {
        for o in &inj.delta.added {
            r2.push(PerturbAnswer::Added { object: o.spec(), at: inj.after.location(o.id).expect("added object") });
        }
        for o in &inj.delta.removed {
            r2.push(PerturbAnswer::Removed { object: o.spec(), at: inj.before.location(o.id).expect("removed object") });
        }
        let mut scene = inj.before.clone();
        for m in &inj.delta.moved {
            let from = scene.location(m.id).expect("moved object");
            scene = scene.place_object(m.id, m.to).expect("delta replays");
            let to = scene.location(m.id).expect("moved object");
            let object = scene.get(m.id).expect("moved object").spec();
            r2.push(PerturbAnswer::Moved { object, from, to });
        }
    }
    if r2.is_empty() {
        r2.push(PerturbAnswer::None);
    }
    MonitorReport { step, r1, r2 }
}

/// Corrupts a report. The number of draws depends only on the report shape,
/// never on the noise levels, so runs at different levels stay aligned.
pub fn apply_noise(report: &MonitorReport, noise: &NoiseModel, pool: &[ObjectSpec], rng: &mut SimRng) -> MonitorReport {
    let flip = rng.random::<f64>() < noise.flip_exec;
    let r1 = match (report.r1, flip) {
        (r, false) => r,
        (ExecAnswer::Succeeded, true) => ExecAnswer::Failed { dropped_at: None },
        (ExecAnswer::Failed { .. }, true) => ExecAnswer::Succeeded,
    };
    let mut r2: Vec<PerturbAnswer> = Vec::new();
    for entry in report.perturbations() {
        if rng.random::<f64>() >= noise.miss_perturb {
            r2.push(*entry);
        }
    }
    let ghost = rng.random::<f64>() < noise.hallucinate;
    let spec_draw: f64 = rng.random();
    let region_draw: f64 = rng.random();
    if ghost && !pool.is_empty() {
        let object = pool[((spec_draw * pool.len() as f64) as usize).min(pool.len() - 1)];
        let region = Region::ALL[((region_draw * 9.0) as usize).min(8)];
        r2.push(PerturbAnswer::Added { object, at: Location::Table { region } });
    }
    if r2.is_empty() {
        r2.push(PerturbAnswer::None);
    }
    MonitorReport { step: report.step, r1, r2 }
}

fn spec_phrase(s: &ObjectSpec) -> String {
    s.phrase()
}

/// "at the top left", "in the red bowl at the center", ...
pub fn location_phrase(l: &Location) -> String {
    match l {
        Location::Table { region } => format!("at the {}", region.phrase()),
        Location::In { container, region } => format!("in the {} at the {}", spec_phrase(container), region.phrase()),
        Location::Stand { layer, slot } => format!("on the stand at the {}", StandSlot { layer: *layer, slot: *slot }.phrase()),
        Location::Trash => "in the trash can".into(),
    }
}

/// "the top left", "the red bowl at the center", ...
fn place_phrase(l: &Location) -> String {
    match l {
        Location::Table { region } => format!("the {}", region.phrase()),
        Location::In { container, region } => format!("the {} at the {}", spec_phrase(container), region.phrase()),
        Location::Stand { layer, slot } => format!("the stand at the {}", StandSlot { layer: *layer, slot: *slot }.phrase()),
        Location::Trash => "the trash can".into(),
    }
}

pub fn render_answer(a: &PerturbAnswer) -> String {
    match a {
        PerturbAnswer::None => "No perturbation occurred.".into(),
        PerturbAnswer::Added { object, at } => {
            format!("A never-seen {} appeared {}.", spec_phrase(object), location_phrase(at))
        }
        PerturbAnswer::Removed { object, at } => {
            format!("The {} {} disappeared.", spec_phrase(object), location_phrase(at))
        }
        PerturbAnswer::Moved { object, from, to } => format!(
            "The {} moved from {} to {}.",
            spec_phrase(object),
            place_phrase(from),
            place_phrase(to)
        ),
    }
}

pub fn render_exec(a: &ExecAnswer) -> String {
    match a {
        ExecAnswer::Succeeded => "The action succeeded.".into(),
        ExecAnswer::Failed { dropped_at: None } => "The action failed.".into(),
        ExecAnswer::Failed { dropped_at: Some(r) } => {
            format!("The action failed. The object dropped at the {}.", r.phrase())
        }
    }
}

pub fn render_report(r: &MonitorReport) -> String {
    let mut out = render_exec(&r.r1);
    for a in &r.r2 {
        out.push(' ');
        out.push_str(&render_answer(a));
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot read report sentence \"{sentence}\"")]
pub struct ReportParseError {
    pub sentence: String,
}

fn parse_spec(text: &str) -> Option<ObjectSpec> {
    if let Some(c) = Category::from_phrase(text) {
        return Some(ObjectSpec::new(c, None));
    }
    let (color, rest) = text.split_once(' ')?;
    Some(ObjectSpec::new(Category::from_phrase(rest)?, Some(Color::from_word(color)?)))
}

fn parse_place(text: &str) -> Option<Location> {
    let text = text.strip_prefix("the ")?;
    if text == "trash can" {
        return Some(Location::Trash);
    }
    if let Some(r) = Region::from_phrase(text) {
        return Some(Location::Table { region: r });
    }
    if let Some(slot) = text.strip_prefix("stand at the ") {
        let s = StandSlot::from_phrase(slot)?;
        return Some(Location::Stand { layer: s.layer, slot: s.slot });
    }
    let (container, region) = text.split_once(" at the ")?;
    Some(Location::In { container: parse_spec(container)?, region: Region::from_phrase(region)? })
}

fn parse_location(text: &str) -> Option<Location> {
    if let Some(rest) = text.strip_prefix("at ") {
        return parse_place(rest).filter(|l| matches!(l, Location::Table { .. }));
    }
    if text == "in the trash can" {
        return Some(Location::Trash);
    }
    if let Some(rest) = text.strip_prefix("on ") {
        return parse_place(rest).filter(|l| matches!(l, Location::Stand { .. }));
    }
    let rest = text.strip_prefix("in ")?;
    parse_place(rest).filter(|l| matches!(l, Location::In { .. }))
}

/// Splits "red block at the top left" into spec and location.
fn split_spec_location(text: &str) -> Option<(ObjectSpec, Location)> {
    let cut = [" at the ", " in the ", " on the "]
        .iter()
        .filter_map(|m| text.find(m))
        .min()?;
    Some((parse_spec(&text[..cut])?, parse_location(&text[cut + 1..])?))
}

fn parse_answer(sentence: &str) -> Option<PerturbAnswer> {
    if sentence == "No perturbation occurred" {
        return Some(PerturbAnswer::None);
    }
    if let Some(rest) = sentence.strip_prefix("A never-seen ") {
        let (spec, loc) = rest.split_once(" appeared ")?;
        return Some(PerturbAnswer::Added { object: parse_spec(spec)?, at: parse_location(loc)? });
    }
    let rest = sentence.strip_prefix("The ")?;
    if let Some(body) = rest.strip_suffix(" disappeared") {
        let (object, at) = split_spec_location(body)?;
        return Some(PerturbAnswer::Removed { object, at });
    }
    let (spec, places) = rest.split_once(" moved from ")?;
    let (from, to) = places.split_once(" to the ")?;
    Some(PerturbAnswer::Moved {
        object: parse_spec(spec)?,
        from: parse_place(from)?,
        to: parse_place(&format!("the {to}"))?,
    })
}

/// Inverse of [`render_report`].
pub fn parse_report(step: usize, text: &str) -> Result<MonitorReport, ReportParseError> {
    let sentences: Vec<&str> = text.split('.').map(str::trim).filter(|s| !s.is_empty()).collect();
    let err = |s: &str| ReportParseError { sentence: s.to_string() };
    let mut it = sentences.into_iter().peekable();
    let first = it.next().ok_or_else(|| err(""))?;
    let r1 = match first {
        "The action succeeded" => ExecAnswer::Succeeded,
        "The action failed" => {
            let dropped_at = match it.peek().and_then(|s| s.strip_prefix("The object dropped at the ")) {
                Some(r) => {
                    let region = Region::from_phrase(r).ok_or_else(|| err(r))?;
                    it.next();
                    Some(region)
                }
                None => None,
            };
            ExecAnswer::Failed { dropped_at }
        }
        other => return Err(err(other)),
    };
    let r2 = it.map(|s| parse_answer(s).ok_or_else(|| err(s))).collect::<Result<Vec<_>, _>>()?;
    if r2.is_empty() {
        return Err(err(text));
    }
    Ok(MonitorReport { step, r1, r2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::world::Good;

    fn report(r1: ExecAnswer, r2: Vec<PerturbAnswer>) -> MonitorReport {
        MonitorReport { step: 1, r1, r2 }
    }

    #[test]
    fn templates() {
        let r = report(ExecAnswer::Succeeded, vec![PerturbAnswer::None]);
        assert_eq!(render_report(&r), "The action succeeded. No perturbation occurred.");
        let added = PerturbAnswer::Added {
            object: ObjectSpec::bowl(Color::Red),
            at: Location::Table { region: Region::BottomLeft },
        };
        assert_eq!(render_answer(&added), "A never-seen red bowl appeared at the bottom left.");
        let moved = PerturbAnswer::Moved {
            object: ObjectSpec::block(Color::Red),
            from: Location::Table { region: Region::TopLeft },
            to: Location::Table { region: Region::BottomRight },
        };
        assert_eq!(render_answer(&moved), "The red block moved from the top left to the bottom right.");
        let r = report(ExecAnswer::Failed { dropped_at: Some(Region::Center) }, vec![added]);
        assert_eq!(
            render_report(&r),
            "The action failed. The object dropped at the center. A never-seen red bowl appeared at the bottom left."
        );
    }

    #[test]
    fn round_trip_all_location_shapes() {
        let locs = [
            Location::Table { region: Region::TopCenter },
            Location::In { container: ObjectSpec::brown_box(), region: Region::MiddleLeft },
            Location::Stand { layer: 2, slot: 1 },
            Location::Trash,
        ];
        let object = ObjectSpec::good(Good::CanOpener);
        let mut r2 = Vec::new();
        for a in locs {
            r2.push(PerturbAnswer::Added { object, at: a });
            r2.push(PerturbAnswer::Removed { object, at: a });
            for b in locs {
                r2.push(PerturbAnswer::Moved { object, from: a, to: b });
            }
        }
        for r1 in [ExecAnswer::Succeeded, ExecAnswer::Failed { dropped_at: None }, ExecAnswer::Failed { dropped_at: Some(Region::TopLeft) }] {
            let r = report(r1, r2.clone());
            assert_eq!(parse_report(1, &render_report(&r)).unwrap(), r);
        }
    }

    #[test]
    fn zero_noise_is_identity_and_full_miss_empties() {
        let r = report(
            ExecAnswer::Succeeded,
            vec![PerturbAnswer::Removed { object: ObjectSpec::block(Color::Red), at: Location::Trash }],
        );
        let mut g = rng::stream(0, 0, rng::STREAM_MONITOR);
        let pool = [ObjectSpec::block(Color::Cyan)];
        assert_eq!(apply_noise(&r, &NoiseModel::oracle(), &pool, &mut g), r);
        let miss = NoiseModel { miss_perturb: 1.0, ..Default::default() };
        assert_eq!(apply_noise(&r, &miss, &pool, &mut g).r2, vec![PerturbAnswer::None]);
        let flip = NoiseModel { flip_exec: 1.0, ..Default::default() };
        assert_eq!(apply_noise(&r, &flip, &pool, &mut g).r1, ExecAnswer::Failed { dropped_at: None });
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_report(1, "The action exploded.").is_err());
        assert!(parse_report(1, "The action succeeded.").is_err());
        assert!(parse_report(1, "The action succeeded. A never-seen plaid block appeared at the top left.").is_err());
    }
}
