use std::fmt;

use everett_core::measurement::{default_alpha, default_beta, MeasurementModel, SystemState};
use everett_core::{ToleranceProfile, C64};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

/// Largest system dimension accepted from a config file.
pub const MAX_M: usize = 16;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub eq_tol: Option<f64>,
    pub residual_tol: Option<f64>,
    pub degeneracy_gap: Option<f64>,
    pub max_retries: Option<usize>,
}

impl ToleranceOverrides {
    pub fn apply(&self, base: ToleranceProfile) -> ToleranceProfile {
        ToleranceProfile {
            eq_tol: self.eq_tol.unwrap_or(base.eq_tol),
            residual_tol: self.residual_tol.unwrap_or(base.residual_tol),
            degeneracy_gap: self.degeneracy_gap.unwrap_or(base.degeneracy_gap),
            max_retries: self.max_retries.unwrap_or(base.max_retries),
        }
    }

    /// Parse one `KEY=VAL` override from the command line.
    pub fn set(&mut self, assignment: &str) -> Result<(), String> {
        let (key, val) = assignment
            .split_once('=')
            .ok_or_else(|| format!("expected KEY=VAL, got {assignment:?}"))?;
        let real = || val.trim().parse::<f64>().map_err(|e| format!("{key}: {e}"));
        match key.trim() {
            "eq_tol" => self.eq_tol = Some(real()?),
            "residual_tol" => self.residual_tol = Some(real()?),
            "degeneracy_gap" => self.degeneracy_gap = Some(real()?),
            "max_retries" => {
                self.max_retries = Some(val.trim().parse().map_err(|e| format!("{key}: {e}"))?)
            }
            other => return Err(format!("unknown tolerance key {other:?}")),
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ToleranceOverrides) {
        self.eq_tol = other.eq_tol.or(self.eq_tol);
        self.residual_tol = other.residual_tol.or(self.residual_tol);
        self.degeneracy_gap = other.degeneracy_gap.or(self.degeneracy_gap);
        self.max_retries = other.max_retries.or(self.max_retries);
    }
}

/// Scenario file contents. Optional fields fall back to the documented defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub m: usize,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub psi: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub tolerances: Option<ToleranceOverrides>,
}

fn default_duration() -> f64 {
    1.0
}

pub const DEFAULT_TRIALS: usize = 1000;

impl ScenarioConfig {
    pub fn with_m(m: usize) -> Self {
        Self {
            m,
            duration: default_duration(),
            psi: None,
            beta: None,
            alpha: None,
            seed: None,
            trials: None,
            tolerances: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| {
            ConfigError::new(vec![FieldDiagnostic {
                field: "<document>".into(),
                message: e.to_string(),
            }])
        })
    }

    /// Check every field and build the model and initial state.
    pub fn validate(&self) -> Result<Scenario, ConfigError> {
        let mut diags = Vec::new();
        let mut push = |field: &str, message: String| {
            diags.push(FieldDiagnostic {
                field: field.into(),
                message,
            })
        };
        let m = self.m;
        if !(2..=MAX_M).contains(&m) {
            push("m", format!("must be between 2 and {MAX_M}, got {m}"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            push("duration", format!("must be finite and > 0, got {}", self.duration));
        }
        let tol = self
            .tolerances
            .clone()
            .unwrap_or_default()
            .apply(ToleranceProfile::default());
        if let Err(e) = tol.validate() {
            push("tolerances", e);
        }
        let gap = if tol.degeneracy_gap.is_finite() && tol.degeneracy_gap > 0.0 {
            tol.degeneracy_gap
        } else {
            ToleranceProfile::default().degeneracy_gap
        };
        let alpha = self.alpha.clone().unwrap_or_else(|| default_alpha(m));
        let beta = self.beta.clone().unwrap_or_else(|| default_beta(m));
        check_values("alpha", &alpha, m, gap, &mut push);
        check_values("beta", &beta, m + 1, gap, &mut push);

        let psi: Vec<C64> = match &self.psi {
            Some(pairs) => pairs.iter().map(|[re, im]| C64::new(*re, *im)).collect(),
            None => vec![C64::new(1.0 / (m.max(1) as f64).sqrt(), 0.0); m],
        };
        if psi.len() != m {
            push("psi", format!("needs {m} amplitudes, got {}", psi.len()));
        } else if psi.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            push("psi", "amplitudes must be finite".into());
        } else {
            let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > tol.eq_tol {
                push("psi", format!("must be normalized, norm is {norm}"));
            }
        }
        let trials = self.trials.unwrap_or(DEFAULT_TRIALS);
        if trials == 0 {
            push("trials", "must be at least 1".into());
        }
        if !diags.is_empty() {
            return Err(ConfigError::new(diags));
        }

        let model = MeasurementModel::build(m, self.duration, alpha.clone(), beta.clone(), &tol)
            .map_err(|e| ConfigError::new(vec![FieldDiagnostic { field: "model".into(), message: e.to_string() }]))?;
        let state = SystemState::new(psi.clone(), &tol)
            .map_err(|e| ConfigError::new(vec![FieldDiagnostic { field: "psi".into(), message: e.to_string() }]))?;
        let seed = self.seed.unwrap_or(0);
        let resolved = json!({
            "m": m,
            "duration": self.duration,
            "psi": psi.iter().map(|z| json!([z.re, z.im])).collect::<Vec<_>>(),
            "alpha": alpha,
            "beta": beta,
            "seed": seed,
            "trials": trials,
            "tolerances": {
                "eq_tol": tol.eq_tol,
                "residual_tol": tol.residual_tol,
                "degeneracy_gap": tol.degeneracy_gap,
                "max_retries": tol.max_retries,
            },
        });
        Ok(Scenario {
            model,
            state,
            tol,
            seed,
            trials,
            resolved,
        })
    }
}

fn check_values(field: &str, values: &[f64], expected: usize, gap: f64, push: &mut impl FnMut(&str, String)) {
    if values.len() != expected {
        push(field, format!("needs {expected} values, got {}", values.len()));
        return;
    }
    if values.iter().any(|v| !v.is_finite()) {
        push(field, "values must be finite".into());
        return;
    }
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            if (values[i] - values[j]).abs() <= gap {
                push(
                    field,
                    format!(
                        "degenerate pair ({i}, {j}): values {} and {} must differ by more than {gap:e}",
                        values[i], values[j]
                    ),
                );
            }
        }
    }
}

/// A validated config with its model built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: MeasurementModel,
    pub state: SystemState,
    pub tol: ToleranceProfile,
    pub seed: u64,
    pub trials: usize,
    /// Config with all defaults filled in; echoed into reports and hashed.
    pub resolved: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldDiagnostic {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigError {
    pub diagnostics: Vec<FieldDiagnostic>,
}

impl ConfigError {
    pub fn new(diagnostics: Vec<FieldDiagnostic>) -> Self {
        Self { diagnostics }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config")?;
        for d in &self.diagnostics {
            write!(f, "\n  {d}")?;
        }
        Ok(())
    }
}
