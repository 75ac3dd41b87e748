//! Campaign orchestration: config, per-episode seeding, parallel or serial
//! execution, metrics, traces and reports.

mod episode;
mod metrics;
mod report;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::monitor::NoiseModel;
use crate::perturb::{PerturbConfig, Scenario};
use crate::planner::{Planner, PlannerError, PlannerKind};
use crate::rng;
use crate::tasks::{self, EpisodeSpec, TaskKind, TaskSizes};

pub use episode::{run_episode, step_budget, EpisodeRecord, StepRecord, Terminal};
pub use metrics::{summarize, Confusion, MetricsSummary};
pub use report::{emit_report, parse_csv, CsvRow, ReportFormat};
pub use trace::{
    read_config, read_summary, read_traces, replay, write_run, ReplayOutcome, TraceError, TraceLine, CONFIG_FILE, SUMMARY_FILE,
    TRACE_FILE,
};

/// A config field that failed validation, by dotted path.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid config at `{path}`: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorKind {
    #[default]
    Oracle,
    Noisy,
}

impl MonitorKind {
    pub fn name(self) -> &'static str {
        match self {
            MonitorKind::Oracle => "oracle",
            MonitorKind::Noisy => "noisy",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [MonitorKind::Oracle, MonitorKind::Noisy].into_iter().find(|m| m.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub task: TaskKind,
    pub scenario: Scenario,
    pub planner: PlannerKind,
    pub monitor: MonitorKind,
    /// Only used when `monitor` is noisy.
    pub noise: NoiseModel,
    pub failure_prob: f64,
    pub episodes: u64,
    pub seed: u64,
    pub sizes: TaskSizes,
    pub max_dis_objects: usize,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Matching,
            scenario: Scenario::None,
            planner: PlannerKind::Hcot,
            monitor: MonitorKind::Oracle,
            noise: NoiseModel::oracle(),
            failure_prob: 0.2,
            episodes: 100,
            seed: 0,
            sizes: TaskSizes::default(),
            max_dis_objects: 2,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.episodes == 0 {
            return Err(ConfigError::new("episodes", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.failure_prob) {
            return Err(ConfigError::new("failure_prob", format!("{} outside [0, 1]", self.failure_prob)));
        }
        for (field, v) in [
            ("noise.flip_exec", self.noise.flip_exec),
            ("noise.miss_perturb", self.noise.miss_perturb),
            ("noise.hallucinate", self.noise.hallucinate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::new(field, format!("{v} outside [0, 1]")));
            }
        }
        if self.sizes.slot_capacity == 0 {
            return Err(ConfigError::new("sizes.slot_capacity", "must be positive"));
        }
        if self.max_dis_objects == 0 {
            return Err(ConfigError::new("max_dis_objects", "must be at least 1"));
        }
        // Catches size combinations the generator cannot satisfy.
        self.episode_spec(0).map(|_| ())
    }

    /// Noise actually applied: none under the oracle monitor.
    pub fn effective_noise(&self) -> NoiseModel {
        match self.monitor {
            MonitorKind::Oracle => NoiseModel::oracle(),
            MonitorKind::Noisy => self.noise,
        }
    }

    pub fn perturb_config(&self) -> PerturbConfig {
        PerturbConfig { scenario: self.scenario, max_dis_objects: self.max_dis_objects }
    }

    pub fn episode_seed(&self, index: u64) -> u64 {
        rng::derive_seed(self.seed, index, rng::STREAM_EPISODE)
    }

    pub fn episode_spec(&self, index: u64) -> Result<EpisodeSpec, ConfigError> {
        tasks::generate_episode(
            self.task,
            self.episode_seed(index),
            self.sizes,
            self.perturb_config(),
            self.failure_prob,
        )
        .map_err(|e| ConfigError::new("sizes", e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExecutionMode {
    /// Data-parallel when the `parallel` feature is on, serial otherwise.
    #[default]
    Auto,
    Serial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub config: CampaignConfig,
    pub records: Vec<EpisodeRecord>,
    pub summary: MetricsSummary,
}

impl CampaignResult {
    pub fn trace_hashes(&self) -> Vec<String> {
        self.records.iter().map(EpisodeRecord::trace_hash).collect()
    }

    pub fn violations(&self) -> impl Iterator<Item = (u64, &str)> {
        self.records.iter().flat_map(|r| r.violations.iter().map(move |v| (r.index, v.as_str())))
    }
}

pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignResult, ConfigError> {
    run_campaign_mode(config, ExecutionMode::Auto)
}

pub fn run_campaign_mode(config: &CampaignConfig, mode: ExecutionMode) -> Result<CampaignResult, ConfigError> {
    let kind = config.planner;
    run_campaign_with(config, mode, &move |spec: &EpisodeSpec| kind.build(spec))
}

/// Runs a campaign with planners from `factory`. The config's planner kind
/// is only used for labelling.
pub fn run_campaign_with<F>(config: &CampaignConfig, mode: ExecutionMode, factory: &F) -> Result<CampaignResult, ConfigError>
where
    F: Fn(&EpisodeSpec) -> Result<Box<dyn Planner>, PlannerError> + Sync,
{
    config.validate()?;
    let specs = (0..config.episodes).map(|i| config.episode_spec(i)).collect::<Result<Vec<_>, _>>()?;
    let noise = config.effective_noise();
    let one = |(i, spec): (usize, &EpisodeSpec)| -> EpisodeRecord {
        let index = i as u64;
        match factory(spec) {
            Ok(mut planner) => run_episode(spec, planner.as_mut(), &noise, config.seed, index),
            Err(e) => EpisodeRecord::unstarted(spec, index, config.planner.name(), e.to_string()),
        }
    };
    let records: Vec<EpisodeRecord> = match mode {
        #[cfg(feature = "parallel")]
        ExecutionMode::Auto => {
            use rayon::prelude::*;
            specs.par_iter().enumerate().map(one).collect()
        }
        _ => specs.iter().enumerate().map(one).collect(),
    };
    let summary = summarize(config, &records);
    Ok(CampaignResult { config: config.clone(), records, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_errors_name_the_field() {
        let bad = CampaignConfig { failure_prob: 1.5, ..Default::default() };
        assert_eq!(bad.validate().unwrap_err().path, "failure_prob");
        let bad = CampaignConfig { episodes: 0, ..Default::default() };
        assert_eq!(bad.validate().unwrap_err().path, "episodes");
        let mut bad = CampaignConfig::default();
        bad.noise.miss_perturb = -0.1;
        assert_eq!(bad.validate().unwrap_err().path, "noise.miss_perturb");
        let mut bad = CampaignConfig::default();
        bad.sizes.goal_objects = Some(40);
        assert_eq!(bad.validate().unwrap_err().path, "sizes");
    }

    #[test]
    fn config_reads_partial_documents() {
        let c: CampaignConfig = serde_json::from_str(r#"{"task":"stacking","scenario":"dis","episodes":3}"#).unwrap();
        assert_eq!(c.task, TaskKind::Stacking);
        assert_eq!(c.scenario, Scenario::Dis);
        assert_eq!(c.failure_prob, 0.2);
        assert!(serde_json::from_str::<CampaignConfig>(r#"{"tsak":"stacking"}"#).is_err());
    }

    #[test]
    fn oracle_monitor_ignores_noise_settings() {
        let mut c = CampaignConfig::default();
        c.noise.miss_perturb = 0.5;
        assert!(c.effective_noise().is_oracle());
        c.monitor = MonitorKind::Noisy;
        assert_eq!(c.effective_noise().miss_perturb, 0.5);
    }

    #[test]
    fn records_follow_episode_order() {
        let c = CampaignConfig { episodes: 6, scenario: Scenario::Dis, ..Default::default() };
        let r = run_campaign(&c).unwrap();
        let idx: Vec<u64> = r.records.iter().map(|x| x.index).collect();
        assert_eq!(idx, (0..6).collect::<Vec<_>>());
        assert_eq!(r, run_campaign_mode(&c, ExecutionMode::Serial).unwrap());
    }
}
