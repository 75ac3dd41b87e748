//! One closed-loop episode: decide, execute, perturb, observe, repeat.

use serde::{Deserialize, Serialize};

use crate::executor::{self, ExecOutcome, ExecutorConfig};
use crate::monitor::{self, MonitorReport, NoiseModel};
use crate::perturb::{self, PerturbationEvent, ScheduledEvent};
use crate::planner::{Decision, Exchange, HcotVerdict, Planner};
use crate::rng;
use crate::tasks::{self, EpisodeSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Done,
    Alert,
    Failed,
    BudgetExceeded,
}

impl Terminal {
    pub fn name(self) -> &'static str {
        match self {
            Terminal::Done => "done",
            Terminal::Alert => "alert",
            Terminal::Failed => "failed",
            Terminal::BudgetExceeded => "budget_exceeded",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based count of executed skills.
    pub step: usize,
    pub instruction: String,
    /// Layered analysis behind this instruction, if any.
    pub verdict: Option<HcotVerdict>,
    /// Backend traffic behind this instruction, for text-driven planners.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchange: Option<Exchange>,
    pub outcome: Option<ExecOutcome>,
    pub error: Option<String>,
    pub events: Vec<PerturbationEvent>,
    pub report: Option<MonitorReport>,
    pub report_text: Option<String>,
    pub state_hash: String,
    /// Whether the planner's belief matched the scene after reading the report.
    pub belief_matches: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub index: u64,
    pub seed: u64,
    pub spec_hash: String,
    pub planner: String,
    pub nominal_len: usize,
    pub scheduled: Vec<ScheduledEvent>,
    pub steps: Vec<StepRecord>,
    pub terminal: Terminal,
    pub final_verdict: Option<HcotVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_exchange: Option<Exchange>,
    pub reason: Option<String>,
    /// Executed skill attempts.
    pub steps_taken: usize,
    pub succeeded_skills: usize,
    pub goal_satisfied: bool,
    /// Ground-truth label of every injected event, in order.
    pub labels: Vec<bool>,
    pub final_hash: String,
    pub violations: Vec<String>,
}

impl EpisodeRecord {
    pub fn success(&self) -> bool {
        self.terminal == Terminal::Done && self.goal_satisfied
    }

    pub fn alerted(&self) -> bool {
        self.terminal == Terminal::Alert
    }

    /// Whether the episode's perturbation made the task infeasible. Falls
    /// back to the scheduled label when the event never fired.
    pub fn related(&self) -> bool {
        match self.labels.first() {
            Some(l) => *l,
            None => self.scheduled.first().is_some_and(|e| e.related),
        }
    }

    /// Stable hash over the whole record.
    pub fn trace_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("record serializes");
        rng::hash_hex(rng::stable_hash(&serde_json::to_string(&value).expect("value serializes")))
    }
}

impl EpisodeRecord {
    fn blank(spec: &EpisodeSpec, index: u64, planner: &str, nominal_len: usize) -> Self {
        Self {
            index,
            seed: spec.seed,
            spec_hash: rng::hash_hex(spec.spec_hash()),
            planner: planner.to_string(),
            nominal_len,
            scheduled: Vec::new(),
            steps: Vec::new(),
            terminal: Terminal::Failed,
            final_verdict: None,
            final_exchange: None,
            reason: None,
            steps_taken: 0,
            succeeded_skills: 0,
            goal_satisfied: false,
            labels: Vec::new(),
            final_hash: String::new(),
            violations: Vec::new(),
        }
    }

    /// A failed record for an episode whose planner could not be built.
    pub fn unstarted(spec: &EpisodeSpec, index: u64, planner: &str, reason: String) -> Self {
        let nominal_len = spec.nominal_plan().map(|p| p.len()).unwrap_or(0);
        Self {
            reason: Some(reason),
            goal_satisfied: tasks::goal_satisfied(&spec.initial, &spec.goal),
            final_hash: rng::hash_hex(spec.initial.state_hash()),
            ..Self::blank(spec, index, planner, nominal_len)
        }
    }
}

/// Step cap for an episode with a nominal plan of `nominal_len` skills.
pub fn step_budget(nominal_len: usize) -> usize {
    4 * nominal_len + 20
}

/// Runs one episode. Randomness comes from streams derived from
/// (`master`, `index`), so equal inputs give equal records.
pub fn run_episode(
    spec: &EpisodeSpec,
    planner: &mut dyn Planner,
    noise: &NoiseModel,
    master: u64,
    index: u64,
) -> EpisodeRecord {
    let mut exec_rng = rng::stream(master, index, rng::STREAM_EXEC);
    let mut perturb_rng = rng::stream(master, index, rng::STREAM_PERTURB);
    let mut monitor_rng = rng::stream(master, index, rng::STREAM_MONITOR);
    let exec_cfg = ExecutorConfig { failure_prob: spec.failure_prob };
    let nominal_len = spec.nominal_plan().map(|p| p.len()).unwrap_or(0);
    let budget = step_budget(nominal_len);

    let mut rec = EpisodeRecord::blank(spec, index, planner.name(), nominal_len);
    let mut state = spec.initial.clone();
    let finish = |mut rec: EpisodeRecord, state: &crate::world::WorkspaceState, terminal, reason: Option<String>| {
        rec.terminal = terminal;
        rec.reason = reason;
        rec.goal_satisfied = tasks::goal_satisfied(state, &spec.goal);
        rec.final_hash = rng::hash_hex(state.state_hash());
        rec
    };

    match perturb::schedule(spec, &mut perturb_rng) {
        Ok(s) => rec.scheduled = s,
        Err(e) => return finish(rec, &state, Terminal::Failed, Some(e.to_string())),
    }
    let pool = perturb::unseen_specs(&spec.initial, &spec.goal, false);
    let check_belief = noise.is_oracle() && planner.exact_belief();

    let mut report: Option<MonitorReport> = None;
    loop {
        let out = match planner.decide(report.as_ref()) {
            Ok(o) => o,
            Err(e) => return finish(rec, &state, Terminal::Failed, Some(e.to_string())),
        };
        if let (Some(last), Some(belief)) = (rec.steps.last_mut(), planner.belief_state()) {
            let same = belief.observable_hash() == state.observable_hash();
            last.belief_matches = Some(same);
            if check_belief && !same {
                rec.violations.push(format!("belief diverged from the scene after step {}", last.step));
            }
        }
        let instruction = match out.decision {
            Decision::Done => {
                rec.final_verdict = out.verdict;
                rec.final_exchange = out.exchange;
                return finish(rec, &state, Terminal::Done, None);
            }
            Decision::Alert => {
                rec.final_verdict = out.verdict;
                rec.final_exchange = out.exchange;
                return finish(rec, &state, Terminal::Alert, None);
            }
            Decision::Skill { instruction } => instruction,
        };
        if rec.steps_taken >= budget {
            return finish(rec, &state, Terminal::BudgetExceeded, Some(format!("{budget} skill attempts used")));
        }
        let step = rec.steps_taken + 1;
        let mut entry = StepRecord {
            step,
            instruction: instruction.to_string(),
            verdict: out.verdict,
            exchange: out.exchange,
            outcome: None,
            error: None,
            events: Vec::new(),
            report: None,
            report_text: None,
            state_hash: String::new(),
            belief_matches: None,
        };
        let (post, outcome) = match executor::execute(&state, &instruction, &exec_cfg, &mut exec_rng) {
            Ok(r) => r,
            Err(e) => {
                entry.error = Some(e.to_string());
                entry.state_hash = rng::hash_hex(state.state_hash());
                rec.steps.push(entry);
                return finish(rec, &state, Terminal::Failed, Some(format!("step {step}: {e}")));
            }
        };
        rec.steps_taken = step;
        if outcome.succeeded() {
            rec.succeeded_skills += 1;
        }
        let due: Vec<ScheduledEvent> = rec.scheduled.iter().filter(|e| e.step == step).copied().collect();
        let injections = if due.is_empty() {
            Vec::new()
        } else {
            match perturb::perturb_step(&post, &state, &spec.goal, &due, &spec.perturb, &mut perturb_rng) {
                Ok(i) => i,
                Err(e) => {
                    entry.error = Some(e.to_string());
                    entry.outcome = Some(outcome);
                    entry.state_hash = rng::hash_hex(post.state_hash());
                    rec.steps.push(entry);
                    return finish(rec, &post, Terminal::Failed, Some(format!("step {step}: {e}")));
                }
            }
        };
        state = injections.last().map_or(post, |i| i.after.clone());
        if let Err(e) = state.validate() {
            rec.violations.push(format!("invalid scene after step {step}: {e}"));
        }
        for inj in &injections {
            rec.labels.push(inj.event.task_related);
            entry.events.push(inj.event.clone());
        }
        let truth = monitor::observe(step, &outcome, &injections);
        let seen = monitor::apply_noise(&truth, noise, &pool, &mut monitor_rng);
        if noise.is_oracle() && seen != truth {
            rec.violations.push(format!("oracle report altered at step {step}"));
        }
        entry.outcome = Some(outcome);
        entry.report_text = Some(monitor::render_report(&seen));
        entry.report = Some(seen.clone());
        entry.state_hash = rng::hash_hex(state.state_hash());
        rec.steps.push(entry);
        report = Some(seen);
    }
}
