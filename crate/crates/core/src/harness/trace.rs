//! Run directories and JSON Lines traces.
//!
//! A run directory holds `config.json`, `summary.json` and `traces.jsonl`.
//! Each trace line is one object tagged by `"type"`:
//!
//! * `episode`: `{"type":"episode","record":{...}}`, the episode record with
//!   an empty `steps` array.
//! * `step`: `{"type":"step","episode":i,"step":{...}}`, one per executed or
//!   attempted skill, in order.
//! * `end`: `{"type":"end","episode":i,"terminal":"done","trace_hash":"..."}`.
//!   The hash covers the reassembled record.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{run_campaign, CampaignConfig, CampaignResult, ConfigError, EpisodeRecord, MetricsSummary, StepRecord, Terminal};

pub const CONFIG_FILE: &str = "config.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRACE_FILE: &str = "traces.jsonl";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot access {}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad JSON in {}, line {line}", path.display())]
    Json { path: PathBuf, line: usize, source: serde_json::Error },
    #[error("malformed trace: {0}")]
    Malformed(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceLine {
    Episode { record: Box<EpisodeRecord> },
    Step { episode: u64, step: Box<StepRecord> },
    End { episode: u64, terminal: Terminal, trace_hash: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TraceError + '_ {
    move |source| TraceError::Io { path: path.to_path_buf(), source }
}

fn lines_for(record: &EpisodeRecord) -> Vec<TraceLine> {
    let mut out = vec![TraceLine::Episode { record: Box::new(EpisodeRecord { steps: Vec::new(), ..record.clone() }) }];
    out.extend(record.steps.iter().map(|s| TraceLine::Step { episode: record.index, step: Box::new(s.clone()) }));
    out.push(TraceLine::End { episode: record.index, terminal: record.terminal, trace_hash: record.trace_hash() });
    out
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), TraceError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Writes config, summary and traces into `dir`, creating it if needed.
pub fn write_run(dir: &Path, result: &CampaignResult) -> Result<(), TraceError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join(CONFIG_FILE), &result.config)?;
    write_json(&dir.join(SUMMARY_FILE), &result.summary)?;
    let path = dir.join(TRACE_FILE);
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    for record in &result.records {
        for line in lines_for(record) {
            serde_json::to_writer(&mut w, &line).expect("serializable");
            w.write_all(b"\n").map_err(io_err(&path))?;
        }
    }
    w.flush().map_err(io_err(&path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, TraceError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| TraceError::Json { path: path.to_path_buf(), line: 0, source })
}

pub fn read_config(dir: &Path) -> Result<CampaignConfig, TraceError> {
    read_json(&dir.join(CONFIG_FILE))
}

pub fn read_summary(dir: &Path) -> Result<MetricsSummary, TraceError> {
    read_json(&dir.join(SUMMARY_FILE))
}

/// Reassembles records from a trace file, checking each stored hash.
pub fn read_traces(path: &Path) -> Result<Vec<EpisodeRecord>, TraceError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    let mut open: Option<EpisodeRecord> = None;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine = serde_json::from_str(&line)
            .map_err(|source| TraceError::Json { path: path.to_path_buf(), line: n + 1, source })?;
        match parsed {
            TraceLine::Episode { record } => {
                if let Some(r) = &open {
                    return Err(TraceError::Malformed(format!("episode {} has no end line", r.index)));
                }
                open = Some(*record);
            }
            TraceLine::Step { episode, step } => match open.as_mut() {
                Some(r) if r.index == episode => r.steps.push(*step),
                _ => return Err(TraceError::Malformed(format!("line {}: step outside episode {episode}", n + 1))),
            },
            TraceLine::End { episode, terminal, trace_hash } => {
                let r = open.take().filter(|r| r.index == episode).ok_or_else(|| {
                    TraceError::Malformed(format!("line {}: end of unopened episode {episode}", n + 1))
                })?;
                if r.terminal != terminal || r.trace_hash() != trace_hash {
                    return Err(TraceError::Malformed(format!("episode {episode}: stored hash does not match its lines")));
                }
                records.push(r);
            }
        }
    }
    if let Some(r) = open {
        return Err(TraceError::Malformed(format!("episode {} has no end line", r.index)));
    }
    Ok(records)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayOutcome {
    pub episodes: usize,
    /// Episode indices whose re-run differs from the stored trace.
    pub mismatched: Vec<u64>,
    pub summary_matches: bool,
    /// Invariant violations seen during the re-run.
    pub violations: u64,
}

impl ReplayOutcome {
    pub fn ok(&self) -> bool {
        self.mismatched.is_empty() && self.summary_matches && self.violations == 0
    }
}

/// Re-runs the campaign stored in `dir` and compares it against the files.
pub fn replay(dir: &Path) -> Result<ReplayOutcome, TraceError> {
    let config = read_config(dir)?;
    let stored = read_traces(&dir.join(TRACE_FILE))?;
    let summary = read_summary(dir)?;
    let fresh = run_campaign(&config)?;
    let mut mismatched: Vec<u64> = fresh
        .records
        .iter()
        .filter(|r| stored.iter().find(|s| s.index == r.index).is_none_or(|s| s.trace_hash() != r.trace_hash()))
        .map(|r| r.index)
        .collect();
    mismatched.extend(stored.iter().filter(|s| s.index >= config.episodes).map(|s| s.index));
    Ok(ReplayOutcome {
        episodes: stored.len(),
        mismatched,
        summary_matches: summary == fresh.summary,
        violations: fresh.summary.violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::Scenario;

    fn small() -> CampaignResult {
        let c = CampaignConfig { episodes: 3, scenario: Scenario::MixedAddDis, seed: 11, ..Default::default() };
        run_campaign(&c).unwrap()
    }

    #[test]
    fn traces_round_trip_and_replay() {
        let dir = tempfile::tempdir().unwrap();
        let r = small();
        write_run(dir.path(), &r).unwrap();
        assert_eq!(read_traces(&dir.path().join(TRACE_FILE)).unwrap(), r.records);
        assert_eq!(read_summary(dir.path()).unwrap(), r.summary);
        let out = replay(dir.path()).unwrap();
        assert!(out.ok(), "{out:?}");
        assert_eq!(out.episodes, 3);
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        write_run(dir.path(), &small()).unwrap();
        let path = dir.path().join(TRACE_FILE);
        let text = fs::read_to_string(&path).unwrap();
        let bad = text.replacen("\"step\":1", "\"step\":7", 1);
        assert_ne!(bad, text);
        fs::write(&path, bad).unwrap();
        assert!(matches!(replay(dir.path()), Err(TraceError::Malformed(_))));
    }

    #[test]
    fn one_line_per_step() {
        let r = small();
        let lines: usize = r.records.iter().map(|x| lines_for(x).len()).sum();
        let steps: usize = r.records.iter().map(|x| x.steps.len()).sum();
        assert_eq!(lines, steps + 2 * r.records.len());
    }
}
