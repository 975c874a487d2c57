use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::types::*;
use super::DatasetBundle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareRow {
    pub variable: String,
    pub value: String,
    pub percent: f64,
}

/// Percentage breakdown of each socio-demographic variable and of the chosen
/// alternative over a set of records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub records: usize,
    pub rows: Vec<ShareRow>,
}

fn percents<C: Category>(records: &[ChoiceRecord], get: impl Fn(&ChoiceRecord) -> C) -> Vec<ShareRow> {
    let mut counts = vec![0usize; C::ALL.len()];
    for r in records {
        counts[get(r).index()] += 1;
    }
    C::ALL
        .iter()
        .zip(counts)
        .map(|(c, n)| ShareRow {
            variable: C::VARIABLE.to_string(),
            value: c.label().to_string(),
            percent: pct(n, records.len()),
        })
        .collect()
}

fn pct(n: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * n as f64 / total as f64
    }
}

pub fn summarize_records(name: &str, records: &[ChoiceRecord]) -> DatasetSummary {
    let mut rows = Vec::new();
    rows.extend(percents(records, |r| r.demographics.gender));
    rows.extend(percents(records, |r| r.demographics.age));
    rows.extend(percents(records, |r| r.demographics.income));
    rows.extend(percents(records, |r| r.demographics.group));
    for alt in Alternative::ALL {
        let n = records.iter().filter(|r| r.chosen == alt).count();
        rows.push(ShareRow {
            variable: "choice".into(),
            value: alt.name().into(),
            percent: pct(n, records.len()),
        });
    }
    DatasetSummary {
        name: name.to_string(),
        records: records.len(),
        rows,
    }
}

pub fn summarize_bundle(bundle: &DatasetBundle) -> Vec<DatasetSummary> {
    vec![
        summarize_records("detailed", &bundle.detailed_records()),
        summarize_records("general", &bundle.general),
        summarize_records("test", &bundle.test),
    ]
}

impl DatasetSummary {
    pub fn percent(&self, variable: &str, value: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.variable == variable && r.value == value)
            .map(|r| r.percent)
    }
}

/// Side-by-side text table, one column per summary.
pub fn render_table(summaries: &[DatasetSummary]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<10} {:<12}", "variable", "value");
    for s in summaries {
        let _ = write!(out, " {:>10}", s.name);
    }
    out.push('\n');
    if let Some(first) = summaries.first() {
        for (i, row) in first.rows.iter().enumerate() {
            let _ = write!(out, "{:<10} {:<12}", row.variable, row.value);
            for s in summaries {
                let _ = write!(out, " {:>9.1}%", s.rows[i].percent);
            }
            out.push('\n');
        }
    }
    out
}
