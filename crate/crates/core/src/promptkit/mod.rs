//! Prompt rendering and reply parsing for planners driven by a text
//! completion backend.
//!
//! The prompt holds a fixed preamble, one worked example per perturbation
//! scenario (generated from the layered rule engine, then frozen by golden
//! tests), the running transcript, the newest report and the query line.
//! Replies are untrusted: [`parse_completion`] only ever extracts a
//! decision from them.

mod backend;
mod llm;

use std::fmt::{self, Write as _};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{run_episode, EpisodeRecord};
use crate::instr::parse_instruction;
use crate::monitor::{self, MonitorReport, NoiseModel};
use crate::perturb::{PerturbConfig, Scenario};
use crate::planner::{Decision, Hcot, HcotVerdict, PlannerError};
use crate::tasks::{generate_episode, EpisodeSpec, TaskKind, TaskSizes};
use crate::world::WorkspaceState;

pub use backend::{BackendError, CompletionBackend, ScriptedBackend};
#[cfg(feature = "http-backend")]
pub use backend::{HttpBackend, HttpConfig};
pub use llm::LlmPlanner;

pub const QUERY: &str = "What is your next plan?";

/// Stop sequences passed to backends: the model must not speak for others.
pub const STOP: [&str; 2] = ["\nVLM:", "\nUser:"];

pub const LAYER_QUESTIONS: [&str; 3] = [
    "Layer 1 (feasibility): Can the goal still be reached with the objects now in the scene?",
    "Layer 2 (progress): Did the change undo any part of the goal that was already done?",
    "Layer 3 (operation): Does the change get in the way of any instruction still to come?",
];

const PREAMBLE: &str = "\
You control a robot arm that rearranges objects on a table.
Each turn, reply with exactly one instruction, \"done\" once the goal is reached, or \"alert\" if the goal can no longer be reached.
Instructions look like \"put the red block into the red bowl\", \"put the blue block onto the stand at the bottom left\" or \"put the red block in the red bowl into the trash can\".
After the VLM reports a change, answer the layer questions first and give the plan on a last line starting with \"Plan:\".";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    User,
    Robot,
    #[serde(rename = "VLM")]
    Vlm,
}

impl Speaker {
    pub fn label(self) -> &'static str {
        match self {
            Speaker::User => "User",
            Speaker::Robot => "Robot",
            Speaker::Vlm => "VLM",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TranscriptError {
    #[error("the first turn must be the user's scene description")]
    MustStartWithUser,
    #[error("turn {0}: the user only speaks first")]
    LateUser(usize),
    #[error("turn {0}: a report must answer a robot turn")]
    UnansweredReport(usize),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    turns: Vec<Turn>,
}

impl Transcript {
    /// Starts with the user turn describing `spec`'s scene and goal.
    pub fn new(spec: &EpisodeSpec) -> Self {
        Self { turns: vec![Turn { speaker: Speaker::User, text: scene_description(spec) }] }
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    fn check(turns: &[Turn]) -> Result<(), TranscriptError> {
        for (i, t) in turns.iter().enumerate() {
            match (i, t.speaker) {
                (0, Speaker::User) => {}
                (0, _) => return Err(TranscriptError::MustStartWithUser),
                (_, Speaker::User) => return Err(TranscriptError::LateUser(i)),
                (_, Speaker::Vlm) if turns[i - 1].speaker != Speaker::Robot => {
                    return Err(TranscriptError::UnansweredReport(i));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), TranscriptError> {
        Self::check(&self.turns)
    }

    pub fn push(&mut self, speaker: Speaker, text: impl Into<String>) -> Result<(), TranscriptError> {
        self.turns.push(Turn { speaker, text: text.into() });
        let r = Self::check(&self.turns);
        if r.is_err() {
            self.turns.pop();
        }
        r
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.turns {
            writeln!(f, "{}: {}", t.speaker.label(), t.text)?;
        }
        Ok(())
    }
}

/// Objects in id order with their observable locations.
pub fn describe_state(state: &WorkspaceState) -> String {
    let parts: Vec<String> = state
        .objects()
        .map(|o| {
            let at = state.location(o.id).expect("listed object exists");
            let name = o.spec().to_string();
            let article = if name.starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { "a" };
            format!("{article} {name} {}", monitor::location_phrase(&at))
        })
        .collect();
    format!("The scene has {}.", parts.join("; "))
}

pub fn scene_description(spec: &EpisodeSpec) -> String {
    let goals: Vec<String> = spec.goal.predicates.iter().map(|p| p.describe()).collect();
    format!("{} The goal is that {}.", describe_state(&spec.initial), goals.join(", and "))
}

/// Robot turn text for a decision, with layered reasoning when given.
pub fn robot_turn(decision: &Decision, verdict: Option<&HcotVerdict>) -> String {
    match verdict {
        None => decision.to_string(),
        Some(v) => format!(
            "Layer 1: {} Layer 2: {} Layer 3: {}\nPlan: {decision}",
            v.layer1.explanation, v.layer2.explanation, v.layer3.explanation
        ),
    }
}

/// Turns of a finished episode, as the examples show them.
pub fn transcript_of(spec: &EpisodeSpec, record: &EpisodeRecord) -> Transcript {
    let mut t = Transcript::new(spec);
    for s in &record.steps {
        let Ok(instruction) = parse_instruction(&s.instruction) else { break };
        t.turns.push(Turn { speaker: Speaker::Robot, text: robot_turn(&Decision::skill(instruction), s.verdict.as_ref()) });
        if let Some(text) = &s.report_text {
            t.turns.push(Turn { speaker: Speaker::Vlm, text: text.clone() });
        }
    }
    let last = match record.terminal {
        crate::harness::Terminal::Done => Some(Decision::Done),
        crate::harness::Terminal::Alert => Some(Decision::Alert),
        _ => None,
    };
    if let Some(d) = last {
        t.turns.push(Turn { speaker: Speaker::Robot, text: robot_turn(&d, record.final_verdict.as_ref()) });
    }
    t
}

/// Scenarios shown as worked examples, in prompt order.
pub const EXAMPLE_SCENARIOS: [Scenario; 6] = [
    Scenario::AddRelated,
    Scenario::AddDistractor,
    Scenario::RmvRelated,
    Scenario::RmvDistractor,
    Scenario::Dis,
    Scenario::MixedAddDis,
];

fn example_for(scenario: Scenario) -> Transcript {
    let sizes = TaskSizes { goal_objects: Some(2), distractors: 1, ..TaskSizes::default() };
    for seed in 0..64 {
        let Ok(spec) = generate_episode(TaskKind::Matching, seed, sizes, PerturbConfig::new(scenario), 0.0) else {
            continue;
        };
        let Ok(mut planner) = Hcot::new(&spec) else { continue };
        let rec = run_episode(&spec, &mut planner, &NoiseModel::oracle(), seed, 0);
        let perturbed = rec.steps.iter().any(|s| !s.events.is_empty());
        if perturbed && matches!(rec.terminal, crate::harness::Terminal::Done | crate::harness::Terminal::Alert) {
            return transcript_of(&spec, &rec);
        }
    }
    unreachable!("small matching episodes always yield an example")
}

/// The worked examples, built once per process.
pub fn examples() -> &'static [(Scenario, Transcript)] {
    static EXAMPLES: OnceLock<Vec<(Scenario, Transcript)>> = OnceLock::new();
    EXAMPLES.get_or_init(|| EXAMPLE_SCENARIOS.iter().map(|&s| (s, example_for(s))).collect())
}

/// Full prompt text. Pure and byte-stable.
pub fn render_prompt(spec: &EpisodeSpec, transcript: &Transcript, report: Option<&MonitorReport>) -> String {
    let mut out = String::from(PREAMBLE);
    out.push_str("\n\nExample episodes:\n");
    for (scenario, t) in examples() {
        let _ = write!(out, "\n### Example: {}\n{t}", scenario.name().replace('_', " "));
    }
    out.push_str("\n### Current episode\n");
    if transcript.is_empty() {
        let _ = writeln!(out, "User: {}", scene_description(spec));
    } else {
        let _ = write!(out, "{transcript}");
    }
    if let Some(r) = report {
        let _ = writeln!(out, "VLM: {}", monitor::render_report(r));
        if r.has_perturbation() {
            for q in LAYER_QUESTIONS {
                let _ = writeln!(out, "{q}");
            }
        }
    }
    out.push_str(QUERY);
    out.push('\n');
    out
}

fn sentences(text: &str) -> impl Iterator<Item = &str> {
    text.split(['\n', '.', '!', '?', ';']).map(str::trim).filter(|s| !s.is_empty())
}

fn strip_label(s: &str) -> &str {
    let mut s = s.trim();
    for label in ["plan:", "robot:", "next:", "answer:"] {
        if s.len() >= label.len() && s.is_char_boundary(label.len()) && s[..label.len()].eq_ignore_ascii_case(label) {
            s = s[label.len()..].trim();
        }
    }
    s.trim_matches(|c| c == '"' || c == '\'' || c == '`' || c == '*').trim()
}

/// First decision in a reply: a sentence that is exactly "done" or "alert",
/// or a well-formed instruction.
pub fn parse_completion(text: &str) -> Result<Decision, PlannerError> {
    for raw in sentences(text) {
        let s = strip_label(raw);
        if s.eq_ignore_ascii_case("done") {
            return Ok(Decision::Done);
        }
        if s.eq_ignore_ascii_case("alert") {
            return Ok(Decision::Alert);
        }
        if let Ok(i) = parse_instruction(s) {
            return Ok(Decision::skill(i));
        }
    }
    let shown: String = text.chars().take(80).collect();
    Err(PlannerError::UnparseableReply(shown))
}
