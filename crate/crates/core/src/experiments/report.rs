use serde::{Deserialize, Serialize};

use crate::rng::SEED_SCHEME;
use crate::stats::{Estimate, LineFit};

/// One estimated quantity at one `(N, t)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub quantity: String,
    pub n: Option<usize>,
    pub t: Option<f64>,
    pub mean: f64,
    pub se: f64,
    pub replicas: usize,
}

/// A fitted straight line with its 95% slope interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub name: String,
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub slope_interval: (f64, f64),
}

impl Fit {
    #[must_use]
    pub fn new(name: impl Into<String>, fit: &LineFit) -> Self {
        Self {
            name: name.into(),
            slope: fit.slope,
            slope_se: fit.slope_se,
            intercept: fit.intercept,
            slope_interval: fit.slope_interval(),
        }
    }
}

/// A pass/fail check of `value` against an optional band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub check: String,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub passed: bool,
}

impl Verdict {
    #[must_use]
    pub fn within(check: impl Into<String>, value: f64, lower: Option<f64>, upper: Option<f64>) -> Self {
        let passed = value.is_finite() && lower.is_none_or(|l| value >= l) && upper.is_none_or(|u| value <= u);
        Self { check: check.into(), value, lower, upper, passed }
    }
}

/// Result of a study. Serialises to the same bytes for the same
/// configuration and master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: String,
    pub seed: u64,
    pub seed_scheme: String,
    pub parameters: serde_json::Value,
    pub cells: Vec<Cell>,
    pub fits: Vec<Fit>,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
}

impl StudyReport {
    pub fn new(study: &str, seed: u64, parameters: &impl Serialize) -> Self {
        Self {
            study: study.into(),
            seed,
            seed_scheme: SEED_SCHEME.into(),
            parameters: serde_json::to_value(parameters).unwrap_or(serde_json::Value::Null),
            cells: Vec::new(),
            fits: Vec::new(),
            verdicts: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push_cell(&mut self, quantity: &str, n: Option<usize>, t: Option<f64>, e: &Estimate) {
        self.cells.push(Cell { quantity: quantity.into(), n, t, mean: e.mean, se: e.se, replicas: e.samples });
    }

    /// A single deterministic value, reported with zero standard error.
    pub fn push_value(&mut self, quantity: &str, n: Option<usize>, t: Option<f64>, value: f64) {
        self.cells.push(Cell { quantity: quantity.into(), n, t, mean: value, se: 0.0, replicas: 1 });
    }

    /// First cell matching all given keys.
    #[must_use]
    pub fn cell(&self, quantity: &str, n: Option<usize>, t: Option<f64>) -> Option<&Cell> {
        self.cells.iter().find(|c| c.quantity == quantity && c.n == n && c.t == t)
    }

    #[must_use]
    pub fn verdict(&self, check: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.check == check)
    }

    #[must_use]
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    /// Pretty JSON.
    ///
    /// # Panics
    ///
    /// Never for reports built by this crate: every field is plain data.
    #[must_use]
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }
}
