//! Per-campaign aggregates. Every reduction runs over records in episode
//! order, so parallel and serial runs sum floats identically.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CampaignConfig, EpisodeRecord, MonitorKind};
use crate::monitor::NoiseModel;
use crate::perturb::Scenario;
use crate::planner::PlannerKind;
use crate::tasks::TaskKind;

/// Alert outcomes. A positive is a perturbation that breaks the task; the
/// predicted label is whether the planner alerted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn record(&mut self, related: bool, alerted: bool) {
        match (related, alerted) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn recall(&self) -> Option<f64> {
        let p = self.tp + self.fn_;
        (p > 0).then(|| self.tp as f64 / p as f64)
    }

    pub fn precision(&self) -> Option<f64> {
        let p = self.tp + self.fp;
        (p > 0).then(|| self.tp as f64 / p as f64)
    }

    pub fn accuracy(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| (self.tp + self.tn) as f64 / n as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub task: TaskKind,
    pub scenario: Scenario,
    pub planner: PlannerKind,
    pub monitor: MonitorKind,
    pub noise: NoiseModel,
    pub failure_prob: f64,
    pub episodes: u64,
    pub seed: u64,
    /// Fraction of episodes that end done with the goal met. Not scored for
    /// removal scenarios.
    pub sr: Option<f64>,
    /// Mean executed skills over completed runs, distractor additions only.
    pub asc: Option<f64>,
    /// Removal scenarios only.
    pub confusion: Option<Confusion>,
    pub attempts: u64,
    pub succeeded_skills: u64,
    pub terminals: BTreeMap<String, u64>,
    pub violations: u64,
}

impl MetricsSummary {
    /// Executed attempts per completed skill.
    pub fn attempts_per_skill(&self) -> Option<f64> {
        (self.succeeded_skills > 0).then(|| self.attempts as f64 / self.succeeded_skills as f64)
    }
}

pub fn summarize(config: &CampaignConfig, records: &[EpisodeRecord]) -> MetricsSummary {
    let n = records.len() as u64;
    let removal = config.scenario.is_removal();
    let sr = (!removal && n > 0).then(|| records.iter().filter(|r| r.success()).count() as f64 / n as f64);
    let asc = if config.scenario == Scenario::AddDistractor {
        let done: Vec<f64> = records.iter().filter(|r| r.success()).map(|r| r.steps_taken as f64).collect();
        (!done.is_empty()).then(|| done.iter().sum::<f64>() / done.len() as f64)
    } else {
        None
    };
    let confusion = removal.then(|| {
        let mut c = Confusion::default();
        for r in records {
            c.record(r.related(), r.alerted());
        }
        c
    });
    let mut terminals = BTreeMap::new();
    for r in records {
        *terminals.entry(r.terminal.name().to_string()).or_insert(0) += 1;
    }
    MetricsSummary {
        task: config.task,
        scenario: config.scenario,
        planner: config.planner,
        monitor: config.monitor,
        noise: config.effective_noise(),
        failure_prob: config.failure_prob,
        episodes: n,
        seed: config.seed,
        sr,
        asc,
        confusion,
        attempts: records.iter().map(|r| r.steps_taken as u64).sum(),
        succeeded_skills: records.iter().map(|r| r.succeeded_skills as u64).sum(),
        terminals,
        violations: records.iter().map(|r| r.violations.len() as u64).sum(),
    }
}
