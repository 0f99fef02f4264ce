//! Monte-Carlo coverage study.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::SurveyDataset;
use crate::error::{Error, Result};
use crate::fit::{fit, FitConfig};
use crate::partition::{resolve_partition, PartitionSpec};
use crate::simulator::{simulate_survey, ScenarioConfig};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McStudyConfig {
    pub scenario: ScenarioConfig,
    pub partition: PartitionSpec,
    pub replicates: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub fit: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub seed: u64,
    pub true_pi: f64,
    pub pi_hat: Option<f64>,
    pub pi_se: Option<f64>,
    pub covered: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub replicates: usize,
    pub fits_ok: usize,
    /// Share of successful fits whose 95% interval covers that replicate's
    /// finite-population proportion.
    pub coverage: f64,
    pub mean_pi_hat: f64,
    pub bias: f64,
    pub sd_pi_hat: f64,
    pub mean_pi_se: f64,
    /// `sd_pi_hat / mean_pi_se`.
    pub sd_ratio: f64,
    pub outcomes: Vec<ReplicateOutcome>,
}

/// Seed of replicate `r`.
pub fn replicate_seed(base: u64, r: usize) -> u64 {
    base.wrapping_add(r as u64)
}

fn one_replicate(cfg: &McStudyConfig, seed: u64) -> ReplicateOutcome {
    let mut scenario = cfg.scenario.clone();
    scenario.rng_seed = seed;
    let outcome = |true_pi, res: Result<(f64, f64)>| match res {
        Ok((pi_hat, pi_se)) => ReplicateOutcome {
            seed,
            true_pi,
            pi_hat: Some(pi_hat),
            pi_se: Some(pi_se),
            covered: Some((pi_hat - true_pi).abs() <= Z_95 * pi_se),
            error: None,
        },
        Err(e) => ReplicateOutcome {
            seed,
            true_pi,
            pi_hat: None,
            pi_se: None,
            covered: None,
            error: Some(e.to_string()),
        },
    };
    let sim = match simulate_survey(&scenario) {
        Ok(s) => s,
        Err(e) => return outcome(scenario.true_pi, Err(e)),
    };
    let fitted = fit_dataset(&sim.dataset, &cfg.partition, &cfg.fit);
    outcome(sim.truth.true_pi, fitted)
}

fn fit_dataset(d: &SurveyDataset, spec: &PartitionSpec, cfg: &FitConfig) -> Result<(f64, f64)> {
    let partition = resolve_partition(spec, d.censor_time.days(), d.calendar.as_ref())?;
    let r = fit(d, &partition, cfg)?;
    Ok((r.pi_hat, r.pi_se))
}

/// Simulate and fit `replicates` surveys in parallel. Outcomes are returned
/// in replicate order whatever the thread count.
pub fn run_mc_study(cfg: &McStudyConfig) -> Result<McSummary> {
    cfg.scenario.validate()?;
    cfg.fit.validate()?;
    if cfg.replicates == 0 {
        return Err(Error::Validation("replicates must be positive".to_string()));
    }
    let outcomes: Vec<ReplicateOutcome> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| one_replicate(cfg, replicate_seed(cfg.base_seed, r)))
        .collect();
    Ok(summarize(outcomes))
}

pub fn summarize(outcomes: Vec<ReplicateOutcome>) -> McSummary {
    let ok: Vec<&ReplicateOutcome> = outcomes.iter().filter(|o| o.pi_hat.is_some()).collect();
    let k = ok.len() as f64;
    let mean = |f: &dyn Fn(&ReplicateOutcome) -> f64| ok.iter().map(|o| f(o)).sum::<f64>() / k;
    let mean_pi_hat = mean(&|o| o.pi_hat.unwrap());
    let mean_true = mean(&|o| o.true_pi);
    let mean_pi_se = mean(&|o| o.pi_se.unwrap());
    let sd_pi_hat = (ok
        .iter()
        .map(|o| (o.pi_hat.unwrap() - mean_pi_hat).powi(2))
        .sum::<f64>()
        / (k - 1.0))
        .sqrt();
    let covered = ok.iter().filter(|o| o.covered == Some(true)).count() as f64;
    McSummary {
        replicates: outcomes.len(),
        fits_ok: ok.len(),
        coverage: covered / k,
        mean_pi_hat,
        bias: mean_pi_hat - mean_true,
        sd_pi_hat,
        mean_pi_se,
        sd_ratio: sd_pi_hat / mean_pi_se,
        outcomes,
    }
}
