//! Machine-readable output.

use serde::{Deserialize, Serialize};

/// Every parameter that influenced a result, defaults included, so that a
/// report can be reproduced from its own echo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub command: String,
    pub epsilon: f64,
    pub tau: f64,
    pub max_iter: usize,
    pub normalize: bool,
    pub mask: String,
    pub hops: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub header: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal_a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginal_b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultReport {
    pub distance: f64,
    pub iterations: usize,
    pub converged: bool,
    pub marginal_residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mwd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mgwd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combined_penalty: Option<f64>,
    pub config: ConfigEcho,
}

impl ResultReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable") + "\n"
    }
}
