//! Run configuration, read from TOML.
//!
//! ```toml
//! version = 1
//! command = "fit"
//! input = "responses.csv"
//! calendar = "calendar.csv"
//! population_size = 100000
//! censor_time = 42.0
//! partition = "every-10-weekdays"
//! seed = 20220531
//!
//! [fit]
//! max_iterations = 200
//! ```
//!
//! Relative paths are taken relative to the config file.

use std::path::{Path, PathBuf};

use arrival_core::comparators::StratumRow;
use arrival_core::simulator::{HazardSpec, ScenarioConfig};
use arrival_core::{FitConfig, PartitionSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum Command {
    #[default]
    Fit,
    Simulate,
    Diagnose,
    Compare,
    McStudy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub command: Command,
    pub input: Option<PathBuf>,
    pub calendar: Option<PathBuf>,
    pub population_size: Option<u64>,
    pub censor_time: Option<f64>,
    pub partition: PartitionSpec,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Tidy CSV of the diagnostic series.
    pub series_csv: Option<PathBuf>,
    /// Where `simulate` writes the generated responses.
    pub data_out: Option<PathBuf>,
    /// Attach the log-likelihood, score and Hessian at the estimate.
    pub likelihood_debug: bool,
    pub fit: FitConfig,
    pub scenario: ScenarioSection,
    pub diagnose: DiagnoseSection,
    pub compare: CompareSection,
    pub mc_study: McStudySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            command: Command::Fit,
            input: None,
            calendar: None,
            population_size: None,
            censor_time: None,
            partition: PartitionSpec::Constant,
            seed: 0,
            out: None,
            series_csv: None,
            data_out: None,
            likelihood_debug: false,
            fit: FitConfig::default(),
            scenario: ScenarioSection::default(),
            diagnose: DiagnoseSection::default(),
            compare: CompareSection::default(),
            mc_study: McStudySection::default(),
        }
    }
}

/// Simulation design. `weekly` is a six-week survey opening on a Tuesday
/// with holidays on days 20 and 34 and its baseline scaled to hit
/// `response_rate`; `custom` takes explicit hazards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScenarioSection {
    Weekly {
        #[serde(default = "default_true_pi")]
        true_pi: f64,
        #[serde(default = "default_hazard_ratio")]
        hazard_ratio: f64,
        #[serde(default = "default_response_rate")]
        response_rate: f64,
        #[serde(default = "default_item_response_rate")]
        item_response_rate: f64,
    },
    Custom {
        #[serde(default = "default_true_pi")]
        true_pi: f64,
        hazard: HazardSpec,
        #[serde(default = "default_item_response_rate")]
        item_response_rate: f64,
    },
}

fn default_true_pi() -> f64 {
    0.2
}
fn default_hazard_ratio() -> f64 {
    2.0
}
fn default_response_rate() -> f64 {
    0.33
}
fn default_item_response_rate() -> f64 {
    0.95
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection::Weekly {
            true_pi: default_true_pi(),
            hazard_ratio: default_hazard_ratio(),
            response_rate: default_response_rate(),
            item_response_rate: default_item_response_rate(),
        }
    }
}

pub const WEEKLY_DAYS: f64 = 42.0;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSection {
    /// Proportion assumed for the hazard-ratio series; the fitted value if absent.
    pub assumed_pi: Option<f64>,
    /// Keep weekends and holidays in the hazard-ratio series.
    pub include_non_weekdays: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    /// Known population shares with respondent counts, for poststratification.
    pub strata: Vec<StratumRow>,
    /// Extrapolation horizon in days; `τ N / n` if absent.
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McStudySection {
    pub replicates: usize,
}

impl Default for McStudySection {
    fn default() -> Self {
        Self { replicates: 200 }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            for p in [
                &mut cfg.input,
                &mut cfg.calendar,
                &mut cfg.out,
                &mut cfg.series_csv,
                &mut cfg.data_out,
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn population_size(&self) -> Result<u64> {
        self.population_size
            .ok_or_else(|| CliError::Config("population_size is required".to_string()))
    }

    pub fn censor_time(&self) -> Result<f64> {
        let tau = match (self.censor_time, self.command, &self.scenario) {
            (Some(t), ..) => t,
            (None, Command::Simulate | Command::McStudy, ScenarioSection::Weekly { .. }) => {
                WEEKLY_DAYS
            }
            _ => return Err(CliError::Config("censor_time is required".to_string())),
        };
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(CliError::Config(format!(
                "censor_time must be positive, got {tau}"
            )));
        }
        Ok(tau)
    }

    pub fn input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::Config("an input CSV is required".to_string()))
    }

    /// Simulation design for `seed`.
    pub fn scenario(&self, seed: u64) -> Result<ScenarioConfig> {
        let n = self.population_size()?;
        let tau = self.censor_time()?;
        let cfg = match &self.scenario {
            ScenarioSection::Weekly {
                true_pi,
                hazard_ratio,
                response_rate,
                item_response_rate,
            } => {
                if tau != WEEKLY_DAYS {
                    return Err(CliError::Config(format!(
                        "the weekly scenario runs for {WEEKLY_DAYS} days; censor_time is {tau}"
                    )));
                }
                if !(*response_rate > 0.0 && *response_rate < 1.0) {
                    return Err(CliError::Config(
                        "response_rate must lie in (0, 1)".to_string(),
                    ));
                }
                if !(*true_pi > 0.0 && *true_pi < 1.0)
                    || hazard_ratio.is_nan()
                    || *hazard_ratio <= 0.0
                {
                    return Err(CliError::Config(
                        "true_pi must lie in (0, 1) and hazard_ratio must be positive".to_string(),
                    ));
                }
                let mut s =
                    ScenarioConfig::weekly_survey(n, seed, *true_pi, *hazard_ratio, *response_rate);
                s.item_response_rate = *item_response_rate;
                s
            }
            ScenarioSection::Custom {
                true_pi,
                hazard,
                item_response_rate,
            } => ScenarioConfig {
                population_size: n,
                true_pi: *true_pi,
                hazard: hazard.clone(),
                censor_time: tau,
                item_response_rate: *item_response_rate,
                rng_seed: seed,
                calendar: None,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
