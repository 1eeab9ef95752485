//! Evaluation reports and their markdown rendering.
//!
//! A report is a flat list of rows, one per `(dataset, metric)`. The markdown
//! table puts one `(task type, dataset)` pair per row and one column per
//! evaluated system, showing each task's headline metric as a percentage to
//! two decimals.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::schema::TaskKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub task: TaskKind,
    pub metric_name: String,
    /// In `[0, 1]`.
    pub value: f64,
    pub malformed_rate: f64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    pub config_digest: String,
    pub rows: Vec<ReportRow>,
    #[serde(default)]
    pub records: u64,
    #[serde(default)]
    pub correct: u64,
    #[serde(default)]
    pub wrong: u64,
    #[serde(default)]
    pub failed: u64,
    #[serde(default)]
    pub malformed: u64,
}

/// Scores for one dataset, as produced by the runner.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetResult {
    pub dataset: String,
    pub task: TaskKind,
    pub metrics: Vec<(String, f64)>,
    pub n: u64,
    pub malformed: u64,
}

/// Record-level tallies across all datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RecordTally {
    pub records: u64,
    pub correct: u64,
    pub wrong: u64,
    pub failed: u64,
    pub malformed: u64,
}

/// The metric shown in tables for each task.
pub fn headline_metric(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Ner => "entity_f1",
        TaskKind::Re => "micro_f1",
        TaskKind::Nli => "accuracy",
        TaskKind::DocCls => "micro_f1",
        TaskKind::Qa => "exact_match",
    }
}

pub fn build_report(
    system: &str,
    results: &[DatasetResult],
    tally: RecordTally,
    config_digest: &str,
) -> EvalReport {
    let mut rows = Vec::new();
    for r in results {
        let malformed_rate = if r.n == 0 {
            0.0
        } else {
            r.malformed as f64 / r.n as f64
        };
        for (name, value) in &r.metrics {
            rows.push(ReportRow {
                dataset: r.dataset.clone(),
                task: r.task,
                metric_name: name.clone(),
                value: *value,
                malformed_rate,
                n: r.n,
            });
        }
    }
    EvalReport {
        system: system.to_string(),
        config_digest: config_digest.to_string(),
        rows,
        records: tally.records,
        correct: tally.correct,
        wrong: tally.wrong,
        failed: tally.failed,
        malformed: tally.malformed,
    }
}

pub fn percent(value: f64) -> String {
    format!("{:.2}", value * 100.0)
}

impl EvalReport {
    fn headline(&self, task: TaskKind, dataset: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.task == task && r.dataset == dataset && r.metric_name == headline_metric(task)
        })
    }

    /// Reports from actual runs carry record counts; published reference
    /// numbers do not, and get no malformed column.
    fn has_malformed_data(&self) -> bool {
        self.rows.iter().any(|r| r.n > 0)
    }
}

/// Markdown comparison table over one or more reports.
pub fn render_markdown(reports: &[EvalReport]) -> String {
    let mut keys: Vec<(TaskKind, &str)> = Vec::new();
    for rep in reports {
        for row in &rep.rows {
            if row.metric_name == headline_metric(row.task)
                && !keys.iter().any(|&(t, d)| t == row.task && d == row.dataset)
            {
                keys.push((row.task, &row.dataset));
            }
        }
    }

    let mut header: Vec<String> = ["Type", "Task"].iter().map(|s| s.to_string()).collect();
    for rep in reports {
        header.push(rep.system.clone());
        if rep.has_malformed_data() {
            header.push(format!("{} malformed %", rep.system));
        }
    }
    let mut out = String::new();
    push_row(&mut out, &header);
    push_row(
        &mut out,
        &header.iter().map(|_| "---".to_string()).collect::<Vec<_>>(),
    );

    for (task, dataset) in keys {
        let mut cells = alloc::vec![task.display_name().to_string(), dataset.to_string()];
        for rep in reports {
            let row = rep.headline(task, dataset);
            cells.push(row.map_or_else(|| "-".to_string(), |r| percent(r.value)));
            if rep.has_malformed_data() {
                cells.push(row.map_or_else(|| "-".to_string(), |r| percent(r.malformed_rate)));
            }
        }
        push_row(&mut out, &cells);
    }
    out
}

fn push_row(out: &mut String, cells: &[String]) {
    out.push('|');
    for c in cells {
        out.push(' ');
        out.push_str(&c.replace('|', "\\|"));
        out.push_str(" |");
    }
    out.push('\n');
}

/// Accepts a single report object or an array of reports.
pub fn parse_reports(json: &str) -> Result<Vec<EvalReport>, serde_json::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(EvalReport),
        Many(Vec<EvalReport>),
    }
    Ok(match serde_json::from_str(json)? {
        OneOrMany::One(r) => alloc::vec![r],
        OneOrMany::Many(v) => v,
    })
}
