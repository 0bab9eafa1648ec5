//! Run report assembly. Every warn/fail row carries the violated bound's
//! identifier and the measured margin; the rollup drives the exit code.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportItem {
    pub id: String,
    pub status: Status,
    pub measured: f64,
    pub bound: f64,
    pub message: String,
}

/// The serialized run report. Deliberately excludes wall-clock timing so
/// identical runs produce byte-identical artifacts; timing goes to stdout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub seed: u64,
    pub items: Vec<ReportItem>,
    pub artifacts: Vec<String>,
    pub stages: serde_json::Value,
    pub rollup: Status,
}

impl RunReport {
    pub fn new(config: RunConfig, seed: u64) -> Self {
        RunReport {
            config,
            seed,
            items: Vec::new(),
            artifacts: Vec::new(),
            stages: serde_json::Value::Null,
            rollup: Status::Pass,
        }
    }

    pub fn push(&mut self, id: &str, status: Status, measured: f64, bound: f64, message: String) {
        self.items.push(ReportItem {
            id: id.to_string(),
            status,
            measured,
            bound,
            message,
        });
        self.rollup = self.rollup.max(status);
    }

    pub fn pass(&mut self, id: &str, measured: f64, bound: f64, message: String) {
        self.push(id, Status::Pass, measured, bound, message);
    }

    pub fn check(&mut self, id: &str, ok: bool, measured: f64, bound: f64, message: String) {
        self.push(
            id,
            if ok { Status::Pass } else { Status::Fail },
            measured,
            bound,
            message,
        );
    }

    pub fn warn_if(&mut self, id: &str, bad: bool, measured: f64, bound: f64, message: String) {
        self.push(
            id,
            if bad { Status::Warn } else { Status::Pass },
            measured,
            bound,
            message,
        );
    }

    pub fn exit_code(&self) -> i32 {
        match self.rollup {
            Status::Pass => 0,
            Status::Warn => 1,
            Status::Fail => 2,
        }
    }
}
