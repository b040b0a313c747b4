//! Verification reports. Every verdict is a function of `max_residual` and
//! `tolerance` in the same record, see [`CheckReport::recompute_verdict`].

use std::collections::BTreeMap;

use isotm_core::{Harmonicity, Integrability, Thresholds, Verdict};
use serde::{Deserialize, Serialize};

use crate::scenario::CheckName;

/// How a check names its verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    PassFail,
    Integrability,
    Harmonicity,
}

impl VerdictKind {
    pub fn label(self, v: Verdict) -> String {
        match self {
            Self::PassFail => match v {
                Verdict::Holds => "PASS",
                Verdict::Fails => "FAIL",
                Verdict::Inconclusive => "INCONCLUSIVE",
            }
            .to_string(),
            Self::Integrability => Integrability::from(v).to_string(),
            Self::Harmonicity => Harmonicity::from(v).to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub accept: f64,
    pub reject: f64,
}

impl From<Thresholds> for Tolerance {
    fn from(t: Thresholds) -> Self {
        Self {
            accept: t.accept,
            reject: t.reject,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: CheckName,
    pub n_samples: usize,
    pub max_residual: Option<f64>,
    pub mean_residual: Option<f64>,
    pub tolerance: Tolerance,
    pub verdict_kind: VerdictKind,
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
    pub passed: bool,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub term_breakdowns: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CheckReport {
    /// The verdict label implied by `max_residual` and `tolerance`.
    pub fn recompute_verdict(&self) -> String {
        if self.error.is_some() {
            return "ERROR".into();
        }
        let t = Thresholds {
            accept: self.tolerance.accept,
            reject: self.tolerance.reject,
        };
        self.verdict_kind.label(t.classify(self.max_residual.unwrap_or(f64::NAN)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub rng: String,
    pub seed: u64,
    pub n_points: usize,
    pub fiber_radius: f64,
    pub region: f64,
    pub grid: usize,
    pub fd_first: f64,
    pub fd_second: f64,
    pub oracle_adjudicate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub chart: String,
    pub structure: String,
    pub field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub subject: Subject,
    pub environment: Environment,
    pub checks: Vec<CheckReport>,
    pub all_passed: bool,
}

impl VerificationReport {
    pub fn exit_code(&self) -> i32 {
        if self.all_passed {
            0
        } else {
            2
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self).map(|mut s| {
            s.push('\n');
            s
        })
    }
}
