//! Comparison report: per-model, per-test-set SSIM summaries plus the
//! pairwise significance matrices. Emitted by the experiment matrix and
//! serialized by the CLI.

use serde::{Deserialize, Serialize};

use crate::metrics::WilcoxonMethod;

/// The four trained models of the experiment design, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    BaselineA,
    BaselineB,
    Central,
    Federated,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::BaselineA,
        ModelKind::BaselineB,
        ModelKind::Central,
        ModelKind::Federated,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ModelKind::BaselineA => "baseline-a",
            ModelKind::BaselineB => "baseline-b",
            ModelKind::Central => "central",
            ModelKind::Federated => "federated",
        }
    }

    pub fn index(&self) -> usize {
        Self::ALL.iter().position(|m| m == self).expect("member")
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.label() == s)
            .ok_or_else(|| format!("unknown model `{s}` (expected one of baseline-a, baseline-b, central, federated)"))
    }
}

/// One model's evaluation on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub model: ModelKind,
    pub mean: f64,
    pub sd: f64,
    pub per_pair: Vec<f64>,
}

/// Per-test-set block: four cells plus the 4x4 two-sided p matrix (diagonal
/// entries are degenerate self-comparisons with p = 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSetReport {
    pub test_set: String,
    pub pair_ids: Vec<String>,
    pub cells: Vec<EvalCell>,
    pub p_values: Vec<Vec<f64>>,
    pub p_methods: Vec<Vec<WilcoxonMethod>>,
}

impl TestSetReport {
    pub fn cell(&self, model: ModelKind) -> &EvalCell {
        &self.cells[model.index()]
    }

    pub fn p(&self, a: ModelKind, b: ModelKind) -> f64 {
        self.p_values[a.index()][b.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub version: String,
    pub config_echo: serde_json::Value,
    pub test_sets: Vec<TestSetReport>,
}

impl ComparisonReport {
    pub fn test_set(&self, name: &str) -> Option<&TestSetReport> {
        self.test_sets.iter().find(|t| t.test_set == name)
    }
}
