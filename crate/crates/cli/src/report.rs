use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::json::to_canonical_string;
use crate::CliError;

pub const ARTIFACT_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// One verification entry. `condition` names the measurement condition or
/// theorem the check instantiates.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub condition: String,
    pub passed: bool,
    pub residual: f64,
    pub tolerance: f64,
    pub detail: Value,
}

impl Check {
    /// Passes iff `residual ≤ tolerance`.
    pub fn within(name: &str, condition: &str, residual: f64, tolerance: f64, detail: Value) -> Self {
        Self {
            name: name.into(),
            condition: condition.into(),
            passed: residual <= tolerance,
            residual,
            tolerance,
            detail,
        }
    }

    pub fn verdict(name: &str, condition: &str, passed: bool, residual: f64, tolerance: f64, detail: Value) -> Self {
        Self {
            name: name.into(),
            condition: condition.into(),
            passed,
            residual,
            tolerance,
            detail,
        }
    }

    fn to_json(&self) -> Value {
        json!({
            "name": self.name,
            "condition": self.condition,
            "passed": self.passed,
            "residual": finite_or_null(self.residual),
            "tolerance": finite_or_null(self.tolerance),
            "detail": self.detail,
        })
    }
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub command: String,
    pub scenario: Value,
    pub checks: Vec<Check>,
    pub counterexamples: u64,
}

impl VerificationReport {
    pub fn new(command: &str, scenario: Value) -> Self {
        Self {
            command: command.into(),
            scenario,
            checks: Vec::new(),
            counterexamples: 0,
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn passed(&self) -> bool {
        self.counterexamples == 0 && self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// SHA-256 of the canonical scenario echo.
    pub fn config_hash(&self) -> String {
        let text = to_canonical_string(&json!({"command": self.command, "scenario": self.scenario}));
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "command": self.command,
            "scenario": self.scenario,
            "checks": self.checks.iter().map(Check::to_json).collect::<Vec<_>>(),
            "summary": {
                "passed": self.passed(),
                "counterexamples": self.counterexamples,
                "checks_total": self.checks.len(),
                "checks_failed": self.checks.iter().filter(|c| !c.passed).count(),
            },
            "versions": {
                "artifact": ARTIFACT_VERSION,
                "config_hash": self.config_hash(),
            },
        })
    }

    pub fn to_canonical_string(&self) -> String {
        to_canonical_string(&self.to_json())
    }
}

/// Write the canonical report to `path`.
pub fn emit_report(report: &VerificationReport, path: &Path) -> Result<(), CliError> {
    std::fs::write(path, report.to_canonical_string()).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}
