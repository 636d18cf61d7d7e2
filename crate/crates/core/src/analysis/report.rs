use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::stats::{two_sample_t, StatsSummary, TTestResult, TooFewSamples};
use crate::orchestrator::BatchRow;

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub condition: String,
    pub seed: u64,
    pub steps: u32,
    pub avg_tokens_per_step: f64,
    pub completed: bool,
}

impl From<&BatchRow> for CsvRow {
    fn from(r: &BatchRow) -> Self {
        CsvRow {
            condition: r.condition.clone(),
            seed: r.seed,
            steps: r.steps,
            avg_tokens_per_step: r.avg_tokens_per_step,
            completed: r.completed,
        }
    }
}

pub fn write_csv<W: Write>(rows: &[CsvRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub steps: StatsSummary,
    pub avg_tokens_per_step: StatsSummary,
    pub completion_rate: f64,
}

/// Per-condition summaries, in first-appearance order.
pub fn summarize(rows: &[CsvRow]) -> Vec<ConditionSummary> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&CsvRow>> = BTreeMap::new();
    for r in rows {
        if !groups.contains_key(r.condition.as_str()) {
            order.push(&r.condition);
        }
        groups.entry(&r.condition).or_default().push(r);
    }
    order
        .into_iter()
        .map(|c| {
            let g = &groups[c];
            let steps: Vec<f64> = g.iter().map(|r| f64::from(r.steps)).collect();
            let cost: Vec<f64> = g.iter().map(|r| r.avg_tokens_per_step).collect();
            ConditionSummary {
                condition: c.to_string(),
                steps: StatsSummary::of(&steps).expect("group is non-empty"),
                avg_tokens_per_step: StatsSummary::of(&cost).expect("group is non-empty"),
                completion_rate: g.iter().filter(|r| r.completed).count() as f64 / g.len() as f64,
            }
        })
        .collect()
}

pub fn steps_of(rows: &[CsvRow], condition: &str) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.condition == condition)
        .map(|r| f64::from(r.steps))
        .collect()
}

/// Tests whether `treatment` needs fewer steps than `baseline`.
pub fn compare_steps(rows: &[CsvRow], baseline: &str, treatment: &str) -> Result<TTestResult, TooFewSamples> {
    two_sample_t(&steps_of(rows, baseline), &steps_of(rows, treatment))
}
