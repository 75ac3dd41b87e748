//! Text and CSV renderings of a set of campaign summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Confusion, MetricsSummary, MonitorKind};
use crate::monitor::NoiseModel;
use crate::perturb::Scenario;
use crate::planner::PlannerKind;
use crate::tasks::TaskKind;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ReportFormat {
    #[default]
    Table,
    Csv,
}

impl ReportFormat {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "table" => Some(ReportFormat::Table),
            "csv" => Some(ReportFormat::Csv),
            _ => None,
        }
    }
}

/// One summary as a flat CSV record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub task: TaskKind,
    pub scenario: Scenario,
    pub planner: PlannerKind,
    pub monitor: MonitorKind,
    pub flip_exec: f64,
    pub miss_perturb: f64,
    pub hallucinate: f64,
    pub failure_prob: f64,
    pub episodes: u64,
    pub seed: u64,
    pub sr: Option<f64>,
    pub asc: Option<f64>,
    pub tp: Option<u64>,
    #[serde(rename = "fn")]
    pub fn_: Option<u64>,
    pub fp: Option<u64>,
    pub tn: Option<u64>,
    pub attempts: u64,
    pub succeeded_skills: u64,
    pub violations: u64,
}

impl CsvRow {
    pub fn from_summary(s: &MetricsSummary) -> Self {
        let c = s.confusion;
        Self {
            task: s.task,
            scenario: s.scenario,
            planner: s.planner,
            monitor: s.monitor,
            flip_exec: s.noise.flip_exec,
            miss_perturb: s.noise.miss_perturb,
            hallucinate: s.noise.hallucinate,
            failure_prob: s.failure_prob,
            episodes: s.episodes,
            seed: s.seed,
            sr: s.sr,
            asc: s.asc,
            tp: c.map(|c| c.tp),
            fn_: c.map(|c| c.fn_),
            fp: c.map(|c| c.fp),
            tn: c.map(|c| c.tn),
            attempts: s.attempts,
            succeeded_skills: s.succeeded_skills,
            violations: s.violations,
        }
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel { flip_exec: self.flip_exec, miss_perturb: self.miss_perturb, hallucinate: self.hallucinate }
    }

    pub fn confusion(&self) -> Option<Confusion> {
        Some(Confusion { tp: self.tp?, fn_: self.fn_?, fp: self.fp?, tn: self.tn? })
    }
}

fn column_label(s: &MetricsSummary) -> String {
    match s.monitor {
        MonitorKind::Oracle => format!("{}/oracle", s.planner.name()),
        MonitorKind::Noisy => format!(
            "{}/noisy({},{},{})",
            s.planner.name(),
            s.noise.flip_exec,
            s.noise.miss_perturb,
            s.noise.hallucinate
        ),
    }
}

fn cell(s: &MetricsSummary) -> String {
    if let Some(c) = s.confusion {
        return format!("{}/{}/{}/{}", c.tp, c.fn_, c.fp, c.tn);
    }
    let mut out = match s.sr {
        Some(sr) => format!("{:.1}%", sr * 100.0),
        None => "-".to_string(),
    };
    if let Some(asc) = s.asc {
        let _ = write!(out, " ({asc:.2})");
    }
    out
}

fn render_table(summaries: &[MetricsSummary]) -> String {
    type RowKey = (TaskKind, Scenario, u64);
    let mut columns = BTreeSet::new();
    let mut rows: BTreeMap<RowKey, BTreeMap<String, String>> = BTreeMap::new();
    for s in summaries {
        let label = column_label(s);
        columns.insert((s.planner, s.monitor, label.clone()));
        rows.entry((s.task, s.scenario, s.failure_prob.to_bits())).or_default().insert(label, cell(s));
    }
    let columns: Vec<String> = columns.into_iter().map(|(_, _, l)| l).collect();
    let mut out = String::from("| task | scenario | p |");
    for c in &columns {
        let _ = write!(out, " {c} |");
    }
    out.push_str("\n|---|---|---|");
    for _ in &columns {
        out.push_str("---|");
    }
    out.push('\n');
    for ((task, scenario, p), cells) in &rows {
        let _ = write!(out, "| {} | {} | {} |", task.name(), scenario.name(), f64::from_bits(*p));
        for c in &columns {
            let _ = write!(out, " {} |", cells.get(c).map_or("", String::as_str));
        }
        out.push('\n');
    }
    if summaries.iter().any(|s| s.confusion.is_some()) {
        out.push_str("\nRemoval scenarios are not scored for success; their cells give alert counts as TP/FN/FP/TN, where a positive is a removal that breaks the task.\n");
    }
    if summaries.iter().any(|s| s.asc.is_some()) {
        out.push_str("Parenthesized values are mean executed skills over completed runs.\n");
    }
    out
}

fn render_csv(summaries: &[MetricsSummary]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut sorted: Vec<&MetricsSummary> = summaries.iter().collect();
    sorted.sort_by(|a, b| {
        (a.task, a.scenario, a.planner, a.monitor)
            .cmp(&(b.task, b.scenario, b.planner, b.monitor))
            .then(a.failure_prob.total_cmp(&b.failure_prob))
    });
    if sorted.is_empty() {
        w.write_record(HEADER).expect("in-memory write");
    }
    for s in sorted {
        w.serialize(CsvRow::from_summary(s)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

const HEADER: [&str; 19] = [
    "task", "scenario", "planner", "monitor", "flip_exec", "miss_perturb", "hallucinate", "failure_prob", "episodes",
    "seed", "sr", "asc", "tp", "fn", "fp", "tn", "attempts", "succeeded_skills", "violations",
];

/// Deterministic rendering; input order does not matter.
pub fn emit_report(summaries: &[MetricsSummary], format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => render_table(summaries),
        ReportFormat::Csv => render_csv(summaries),
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_campaign, CampaignConfig};

    fn summaries() -> Vec<MetricsSummary> {
        let mut out = Vec::new();
        for scenario in [Scenario::AddDistractor, Scenario::RmvRelated] {
            for planner in [PlannerKind::FlatReplan, PlannerKind::Hcot] {
                let c = CampaignConfig { scenario, planner, episodes: 4, failure_prob: 0.0, ..Default::default() };
                out.push(run_campaign(&c).unwrap().summary);
            }
        }
        out
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = emit_report(&[], ReportFormat::Table);
        assert_eq!(t.lines().count(), 2);
        assert!(t.starts_with("| task | scenario |"));
        assert_eq!(parse_csv(&emit_report(&[], ReportFormat::Csv)).unwrap(), vec![]);
    }

    #[test]
    fn table_has_a_row_per_task_and_scenario() {
        let s = summaries();
        let t = emit_report(&s, ReportFormat::Table);
        let body = t.lines().skip(2).take_while(|l| l.starts_with('|')).count();
        assert_eq!(body, 2);
        assert!(t.contains("flat_replan/oracle"));
        assert!(t.contains("TP/FN/FP/TN"));
        let mut rev = s.clone();
        rev.reverse();
        assert_eq!(emit_report(&rev, ReportFormat::Table), t);
    }

    #[test]
    fn csv_round_trips() {
        let s = summaries();
        let rows = parse_csv(&emit_report(&s, ReportFormat::Csv)).unwrap();
        assert_eq!(rows.len(), s.len());
        for src in &s {
            let row = rows.iter().find(|r| r.scenario == src.scenario && r.planner == src.planner).unwrap();
            assert_eq!(row, &CsvRow::from_summary(src));
            assert_eq!(row.sr, src.sr);
            assert_eq!(row.confusion(), src.confusion);
            assert_eq!(row.noise(), src.noise);
        }
    }
}
