//! The report every command prints, as text or as `report-v1` JSON.

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Limit};
use crate::robustness::SearchLimits;

pub const SCHEMA: &str = "report-v1";

/// The JSON Schema that `--json` output conforms to.
pub const JSON_SCHEMA: &str = include_str!("../../schema/report-v1.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    Violated,
    InputError,
    LimitExceeded,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Violated => 1,
            Status::InputError => 2,
            Status::LimitExceeded => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LimitHit {
    pub limit: Limit,
    pub bound: u64,
    pub needed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub status: Status,
    pub exit_code: i32,
    /// Whether the checked property holds; absent for input errors.
    pub verdict: Option<bool>,
    pub summary: String,
    pub details: Value,
    pub violations: Vec<String>,
    pub limits: Option<SearchLimits>,
    pub limit_exceeded: Option<LimitHit>,
    pub error: Option<String>,
    pub elapsed_ms: u64,
    /// Human-readable body printed under the summary in text mode.
    #[serde(skip)]
    pub text: String,
}

impl Report {
    pub fn new(command: &str, argv: Vec<String>) -> Self {
        Report {
            schema: SCHEMA,
            command: command.to_string(),
            argv,
            status: Status::Ok,
            exit_code: 0,
            verdict: None,
            summary: String::new(),
            details: Value::Null,
            violations: Vec::new(),
            limits: None,
            limit_exceeded: None,
            error: None,
            elapsed_ms: 0,
            text: String::new(),
        }
    }

    /// Records the outcome of a yes/no check.
    pub fn verdict(&mut self, holds: bool, summary: impl Into<String>) {
        self.verdict = Some(holds);
        self.status = if holds { Status::Ok } else { Status::Violated };
        self.summary = summary.into();
    }

    pub fn fail(&mut self, message: String, limit: Option<&Error>) {
        self.verdict = None;
        self.status = Status::InputError;
        if let Some(Error::LimitExceeded { limit, bound, needed }) = limit {
            self.status = Status::LimitExceeded;
            self.limit_exceeded = Some(LimitHit { limit: *limit, bound: *bound, needed: *needed });
        }
        self.summary = format!("error: {message}");
        self.error = Some(message);
    }

    pub fn render(&mut self, json: bool) -> String {
        self.exit_code = self.status.exit_code();
        if json {
            let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
            s.push('\n');
            return s;
        }
        let mut out = format!("{}: {}\n", self.command, self.summary);
        for v in &self.violations {
            out.push_str(&format!("  - {v}\n"));
        }
        out.push_str(&self.text);
        out
    }
}
