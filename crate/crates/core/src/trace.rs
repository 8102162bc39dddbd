//! Training traces and run summaries.
//!
//! Trace CSV schema: `step,train_err,train_loss,test_err,test_loss,elapsed_ms`.
//! Identical seed and configuration must give byte-identical CSVs, so wall
//! clock readings are opt-in; with the clock disabled the elapsed column is
//! written as zero.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};

/// One evaluation row. Missing test metrics are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub train_err: f64,
    pub train_loss: f64,
    pub test_err: f64,
    pub test_loss: f64,
    pub elapsed_ms: u64,
}

/// An append-only trace with strictly increasing steps.
#[derive(Debug, Clone, Default)]
pub struct TrainingTrace {
    rows: Vec<TraceRow>,
}

impl TrainingTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: TraceRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.step <= last.step {
                return Err(Error::InvalidConfig(format!(
                    "trace steps must be strictly increasing: {} after {}",
                    row.step, last.step
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// First step whose training loss is at or below `target`.
    pub fn steps_to_reach_train_loss(&self, target: f64) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.train_loss <= target)
            .map(|r| r.step)
    }

    /// First step whose training error is at or below `target`.
    pub fn steps_to_reach_train_err(&self, target: f64) -> Option<u64> {
        self.rows
            .iter()
            .find(|r| r.train_err <= target)
            .map(|r| r.step)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,train_err,train_loss,test_err,test_loss,elapsed_ms\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.step, r.train_err, r.train_loss, r.test_err, r.test_loss, r.elapsed_ms
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Elapsed-time source for trace rows. `Disabled` keeps traces byte-stable
/// across runs; `Wall` records real milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClockMode {
    #[default]
    Disabled,
    Wall,
}

/// A stopwatch honoring the clock mode.
#[derive(Debug, Clone, Copy)]
pub struct RunClock {
    mode: ClockMode,
    start: Instant,
}

impl RunClock {
    pub fn start(mode: ClockMode) -> Self {
        Self {
            mode,
            start: Instant::now(),
        }
    }

    pub fn elapsed_ms(&self) -> u64 {
        match self.mode {
            ClockMode::Disabled => 0,
            ClockMode::Wall => self.start.elapsed().as_millis() as u64,
        }
    }
}

/// Flat key-value run summary, serialized as sorted JSON.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    fields: BTreeMap<String, String>,
}

impl RunSummary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.fields.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.get(key).map(|s| s.as_str())
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(&self.fields).expect("string map serializes");
        out.push('\n');
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }
}
