use arrival_core::comparators::{DiagnosticsSeries, Estimate, TrendTest};
use arrival_core::simulator::Truth;
use arrival_core::study::McSummary;
use arrival_core::{FitResult, LikelihoodEvaluation};
use serde::{Deserialize, Serialize};

use crate::config::{Command, RunConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: Command,
    /// Effective configuration after command-line overrides.
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likelihood: Option<LikelihoodEvaluation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparators: Option<Comparators>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<Truth>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_study: Option<McSummary>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl Report {
    pub fn new(config: RunConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: config.command,
            config,
            data: None,
            fit: None,
            likelihood: None,
            comparators: None,
            diagnostics: None,
            simulation: None,
            mc_study: None,
            warnings: Vec::new(),
            timing: None,
        }
    }

    /// Serialized report without timing, for reproducibility checks.
    pub fn body_json(&self) -> String {
        let mut body = self.clone();
        body.timing = None;
        serde_json::to_string_pretty(&body).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub population_size: u64,
    pub censor_time: f64,
    pub n_responded: usize,
    pub n_labeled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparators {
    pub sample_proportion: Estimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poststratified: Option<Estimate>,
    pub extrapolation_horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extrapolated: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub daily: DiagnosticsSeries,
    pub hazard_ratio: DiagnosticsSeries,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_ratio_trend: Option<TrendTest>,
    /// `π̂ ± 2 se` from the fit, for plotting next to the daily proportions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate_band: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_seconds: f64,
}
