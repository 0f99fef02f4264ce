//! Maximum partial-likelihood estimation of `(π, ρ₁ … ρ_K)`.
//!
//! Newton iterations run on `(logit π, log ρ_k)` by default. The Hessian has
//! a dense `π` row and a diagonal `ρ` block, so each Newton system is an
//! arrowhead solve in `O(K)`. When the negated Hessian is not positive
//! definite the step falls back to diagonally scaled gradient ascent. `π` is
//! kept inside the range where every labeled event has a positive own-label
//! risk count; if the likelihood keeps increasing toward that edge the fit
//! stops on it and reports a boundary solution.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{break_ties, validate_dataset, SurveyDataset};
use crate::error::{Error, Result};
use crate::likelihood::{
    information_from_hessian, ArrowMatrix, LikelihoodEvaluation, ModelParams, PartialLikelihood,
    FEASIBILITY_MARGIN,
};
use crate::partition::HazardPartition;

/// `π̂` closer than this to a feasibility bound is reported as a boundary fit.
pub const BOUNDARY_TOLERANCE: f64 = 1e-6;
/// Weak identification: fewer labeled events per interval than this many
/// days of average daily volume.
pub const WEAK_MIN_DAYS_PER_INTERVAL: f64 = 5.0;
/// Weak identification: standard error of `π̂` above this.
pub const WEAK_MAX_PI_SE: f64 = 0.1;
/// Weak identification: condition number of the observed information above this.
pub const WEAK_MAX_CONDITION: f64 = 1e8;

const MAX_NEWTON_STEP: f64 = 4.0;
const ARMIJO: f64 = 1e-4;
/// Fraction of the feasible width within which `π` counts as on a bound.
const PIN_TOLERANCE: f64 = 1e-9;

/// Starting value: data-driven or fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartValue {
    Auto,
    Fixed(f64),
}

impl Serialize for StartValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StartValue::Auto => s.serialize_str("auto"),
            StartValue::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for StartValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(StartValue::Fixed(v)),
            Repr::Str(s) if s == "auto" => Ok(StartValue::Auto),
            Repr::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"auto\", got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// `(logit π, log ρ_k)`.
    Transformed,
    /// `(π, ρ_k)` directly.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub pi_init: StartValue,
    pub rho_init: StartValue,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Backtracking factor in `(0, 1)`.
    pub step_shrink: f64,
    pub tie_seed: u64,
    pub parameterization: Parameterization,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            pi_init: StartValue::Auto,
            rho_init: StartValue::Auto,
            max_iterations: 200,
            gradient_tolerance: 1e-8,
            step_shrink: 0.5,
            tie_seed: 0,
            parameterization: Parameterization::Transformed,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Validation(m.to_string()));
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.gradient_tolerance > 0.0) {
            return bad("gradient_tolerance must be positive");
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return bad("step_shrink must lie in (0, 1)");
        }
        if let StartValue::Fixed(p) = self.pi_init {
            if !(p > 0.0 && p < 1.0) {
                return bad("pi_init must lie in (0, 1)");
            }
        }
        if let StartValue::Fixed(r) = self.rho_init {
            if !(r > 0.0 && r.is_finite()) {
                return bad("rho_init must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub pi_hat: f64,
    pub pi_se: f64,
    pub rho_hat: Vec<f64>,
    pub rho_se: Vec<f64>,
    pub loglik_at_max: f64,
    pub iterations: usize,
    pub converged: bool,
    pub at_boundary: bool,
    /// Largest absolute score entry at exit (free coordinates only).
    pub gradient_norm_at_exit: f64,
    /// Profile information for `π` at the solution.
    pub pi_information: f64,
    /// Negated Hessian at the solution.
    pub information: ArrowMatrix,
    pub weak_identification_warning: Option<String>,
    pub warnings: Vec<String>,
    pub tie_seed: u64,
    /// Log-likelihood after each accepted step, starting value first.
    pub loglik_trace: Vec<f64>,
}

/// Everything the optimizer needs about the current iterate.
struct Iterate {
    params: ModelParams,
    eval: LikelihoodEvaluation,
}

struct Optimizer<'a> {
    lik: &'a PartialLikelihood,
    cfg: &'a FitConfig,
    lo: f64,
    hi: f64,
}

impl Optimizer<'_> {
    fn pinned(&self, it: &Iterate) -> bool {
        let u = it.eval.score[0];
        let near = PIN_TOLERANCE * (self.hi - self.lo).max(1e-300);
        (it.params.pi - self.lo <= near && u < 0.0) || (self.hi - it.params.pi <= near && u > 0.0)
    }

    fn gradient_norm(&self, it: &Iterate) -> f64 {
        let skip = usize::from(self.pinned(it));
        it.eval.score[skip..]
            .iter()
            .fold(0.0_f64, |m, g| m.max(g.abs()))
    }

    /// Gradient and negated Hessian in the working coordinates.
    fn working_derivatives(&self, it: &Iterate) -> (Vec<f64>, ArrowMatrix) {
        let u = &it.eval.score;
        let h = &it.eval.hessian;
        match self.cfg.parameterization {
            Parameterization::Raw => (u.clone(), h.negated()),
            Parameterization::Transformed => {
                let pi = it.params.pi;
                let rho = &it.params.rho;
                let s = pi * (1.0 - pi);
                let s2 = s * (1.0 - 2.0 * pi);
                let mut g = vec![u[0] * s];
                g.extend(u[1..].iter().zip(rho).map(|(u, r)| u * r));
                let a = ArrowMatrix {
                    pi_pi: -(h.pi_pi * s * s + u[0] * s2),
                    pi_rho: h.pi_rho.iter().zip(rho).map(|(c, r)| -c * s * r).collect(),
                    rho_rho: h
                        .rho_rho
                        .iter()
                        .zip(&u[1..])
                        .zip(rho)
                        .map(|((d, u), r)| -(d * r * r + u * r))
                        .collect(),
                };
                (g, a)
            }
        }
    }

    fn to_working(&self, p: &ModelParams) -> Vec<f64> {
        match self.cfg.parameterization {
            Parameterization::Raw => std::iter::once(p.pi).chain(p.rho.iter().copied()).collect(),
            Parameterization::Transformed => std::iter::once((p.pi / (1.0 - p.pi)).ln())
                .chain(p.rho.iter().map(|r| r.ln()))
                .collect(),
        }
    }

    /// Map working coordinates back, projecting `π` onto `[lo, hi]`.
    fn params_from_working(&self, w: &[f64]) -> Option<(ModelParams, bool)> {
        let (pi, rho): (f64, Vec<f64>) = match self.cfg.parameterization {
            Parameterization::Raw => (w[0], w[1..].to_vec()),
            Parameterization::Transformed => (
                1.0 / (1.0 + (-w[0]).exp()),
                w[1..].iter().map(|b| b.exp()).collect(),
            ),
        };
        if rho.iter().any(|r| !(*r > 0.0 && r.is_finite())) || !pi.is_finite() {
            return None;
        }
        let clamped = pi.clamp(self.lo, self.hi);
        Some((ModelParams { pi: clamped, rho }, clamped != pi))
    }

    fn direction(&self, it: &Iterate, g: &[f64], a: &ArrowMatrix) -> Vec<f64> {
        let mut dir = if self.pinned(it) {
            let mut d = vec![0.0];
            d.extend(g[1..].iter().zip(&a.rho_rho).map(|(g, &h)| {
                if h > 0.0 {
                    g / h
                } else {
                    g / h.abs().max(1.0)
                }
            }));
            d
        } else {
            damped_newton(g, a)
        };
        let biggest = dir.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        if self.cfg.parameterization == Parameterization::Transformed && biggest > MAX_NEWTON_STEP {
            let scale = MAX_NEWTON_STEP / biggest;
            dir.iter_mut().for_each(|d| *d *= scale);
        }
        dir
    }

    fn evaluate(&self, params: ModelParams) -> Option<Iterate> {
        let eval = self.lik.evaluate(&params).ok()?;
        eval.loglik.is_finite().then_some(Iterate { params, eval })
    }

    /// Backtracking line search; `None` when no acceptable step exists.
    fn step(&self, it: &Iterate) -> Option<Iterate> {
        let (g, a) = self.working_derivatives(it);
        let dir = self.direction(it, &g, &a);
        let slope: f64 = g.iter().zip(&dir).map(|(g, d)| g * d).sum();
        let base = self.to_working(&it.params);
        let ll = it.eval.loglik;
        let noise = 1e-12 * ll.abs().max(1.0);
        let gnorm = self.gradient_norm(it);

        let mut s = 1.0;
        while s > 1e-16 {
            let w: Vec<f64> = base.iter().zip(&dir).map(|(b, d)| b + s * d).collect();
            if let Some((params, clamped)) = self.params_from_working(&w) {
                if let Some(trial) = self.evaluate(params) {
                    let gain = trial.eval.loglik - ll;
                    let sufficient = if clamped {
                        gain > 0.0
                    } else {
                        gain >= ARMIJO * s * slope && gain >= 0.0
                    };
                    let tie = gain.abs() <= noise && self.gradient_norm(&trial) < gnorm;
                    if sufficient || tie {
                        return Some(trial);
                    }
                }
            }
            s *= self.cfg.step_shrink;
        }
        None
    }
}

/// Newton direction, adding a growing ridge to the diagonal until the
/// system is positive definite.
fn damped_newton(g: &[f64], a: &ArrowMatrix) -> Vec<f64> {
    if a.is_positive_definite() {
        if let Some(d) = a.solve(g) {
            return d;
        }
    }
    let scale = std::iter::once(a.pi_pi)
        .chain(a.rho_rho.iter().copied())
        .fold(0.0_f64, |m, v| m.max(v.abs()))
        .max(1e-8);
    let mut ridge = 1e-6 * scale;
    while ridge < 1e12 * scale {
        let mut shifted = a.clone();
        shifted.pi_pi += ridge;
        shifted.rho_rho.iter_mut().for_each(|v| *v += ridge);
        if shifted.is_positive_definite() {
            if let Some(d) = shifted.solve(g) {
                return d;
            }
        }
        ridge *= 10.0;
    }
    scaled_gradient(g, a)
}

fn scaled_gradient(g: &[f64], a: &ArrowMatrix) -> Vec<f64> {
    let diag = std::iter::once(a.pi_pi).chain(a.rho_rho.iter().copied());
    g.iter()
        .zip(diag)
        .map(|(g, h)| g / h.abs().max(1e-8))
        .collect()
}

fn initial_params(
    lik: &PartialLikelihood,
    cfg: &FitConfig,
    lo: f64,
    hi: f64,
) -> Result<ModelParams> {
    let width = hi - lo;
    let pi0 = match cfg.pi_init {
        StartValue::Auto => lik.sample_proportion(),
        StartValue::Fixed(p) => p,
    };
    let pi0 = if pi0 > lo && pi0 < hi {
        pi0
    } else {
        pi0.clamp(lo + 0.01 * width, hi - 0.01 * width)
    };
    let rho0 = match cfg.rho_init {
        StartValue::Auto => 1.0,
        StartValue::Fixed(r) => r,
    };
    let rho = lik.maximize_rho(pi0, &vec![rho0; lik.n_strata()])?;
    Ok(ModelParams { pi: pi0, rho })
}

/// Maximise a prepared likelihood.
pub fn fit_prepared(lik: &PartialLikelihood, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let (lo, hi) = lik.pi_bounds(FEASIBILITY_MARGIN);
    if !(lo < hi) {
        return Err(Error::Validation(format!(
            "no value of pi keeps every risk count positive (bounds {lo}..{hi})"
        )));
    }
    let opt = Optimizer { lik, cfg, lo, hi };
    let start = initial_params(lik, cfg, lo, hi)?;
    let mut it = opt
        .evaluate(start)
        .ok_or_else(|| Error::Validation("starting point is infeasible".to_string()))?;

    let mut trace = vec![it.eval.loglik];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        if opt.gradient_norm(&it) < cfg.gradient_tolerance {
            converged = true;
            break;
        }
        match opt.step(&it) {
            Some(next) => {
                it = next;
                iterations += 1;
                trace.push(it.eval.loglik);
            }
            None => break,
        }
    }
    if !converged && opt.gradient_norm(&it) < cfg.gradient_tolerance {
        converged = true;
    }

    let info = it.eval.hessian.negated();
    let pi_information = information_from_hessian(&it.eval.hessian);
    let at_boundary =
        it.params.pi - lo < BOUNDARY_TOLERANCE || hi - it.params.pi < BOUNDARY_TOLERANCE;
    let mut warnings = Vec::new();
    if at_boundary {
        warnings.push(format!(
            "pi_hat = {} is pinned at the feasibility boundary [{lo}, {hi}]",
            it.params.pi
        ));
    }

    let (pi_information, pi_se, rho_se) = match pi_information {
        Ok(i) if i > 0.0 => {
            let diag = info.inverse_diagonal().unwrap_or_default();
            let rho_se = diag[1..].iter().map(|v| v.max(0.0).sqrt()).collect();
            (i, 1.0 / i.sqrt(), rho_se)
        }
        Ok(i) => {
            if converged && !at_boundary {
                return Err(Error::SingularInformation { k: None });
            }
            warnings.push(format!("profile information {i} is not positive"));
            (i, f64::NAN, vec![f64::NAN; lik.n_strata()])
        }
        Err(e) => return Err(e),
    };
    if converged && !at_boundary && !info.is_positive_definite() {
        converged = false;
        warnings.push("negated Hessian is not positive definite at exit".to_string());
    }

    let result = FitResult {
        pi_hat: it.params.pi,
        pi_se,
        rho_hat: it.params.rho.clone(),
        rho_se,
        loglik_at_max: it.eval.loglik,
        iterations,
        converged,
        at_boundary,
        gradient_norm_at_exit: opt.gradient_norm(&it),
        pi_information,
        information: info,
        weak_identification_warning: None,
        warnings,
        tie_seed: cfg.tie_seed,
        loglik_trace: trace,
    };
    if result.converged {
        Ok(result)
    } else {
        Err(Error::NotConverged(Box::new(result)))
    }
}

/// Break ties, validate, and maximise the partial likelihood.
pub fn fit(d: &SurveyDataset, partition: &HazardPartition, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let d = break_ties(d, cfg.tie_seed);
    let findings = validate_dataset(&d);
    if let Some(first) = findings.first() {
        return Err(Error::Validation(format!(
            "{first} ({} finding(s) in total)",
            findings.len()
        )));
    }
    let lik = PartialLikelihood::new(&d, partition)?;
    let attach = |mut r: FitResult| {
        r.weak_identification_warning = weak_identification_check(&d, partition, &r);
        r
    };
    match fit_prepared(&lik, cfg) {
        Ok(r) => Ok(attach(r)),
        Err(Error::NotConverged(r)) => Err(Error::NotConverged(Box::new(attach(*r)))),
        Err(e) => Err(e),
    }
}

/// Condition number of a symmetric matrix (infinite if not positive definite).
fn condition_number(m: &ArrowMatrix) -> f64 {
    let eig = m.to_dense().symmetric_eigen();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v.abs());
    }
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Flag fits where `π` is poorly pinned down by the chosen partition.
///
/// Rules, any of which triggers:
/// * mean labeled events per interval below [`WEAK_MIN_DAYS_PER_INTERVAL`]
///   days of average daily labeled volume;
/// * `pi_se` above [`WEAK_MAX_PI_SE`] (or not finite);
/// * condition number of the observed information above [`WEAK_MAX_CONDITION`].
pub fn weak_identification_check(
    d: &SurveyDataset,
    partition: &HazardPartition,
    result: &FitResult,
) -> Option<String> {
    let mut reasons = Vec::new();

    let counts = partition.labeled_counts(d);
    let total: usize = counts.iter().sum();
    let days: BTreeSet<u32> = d
        .timed()
        .filter(|(_, r)| r.observed_label().is_some())
        .map(|(t, _)| t.day())
        .collect();
    if total > 0 && !days.is_empty() {
        let per_interval = total as f64 / counts.len() as f64;
        let per_day = total as f64 / days.len() as f64;
        if per_interval < WEAK_MIN_DAYS_PER_INTERVAL * per_day {
            reasons.push(format!(
                "{per_interval:.1} labeled events per interval is under {WEAK_MIN_DAYS_PER_INTERVAL} days of average volume ({per_day:.1}/day)"
            ));
        }
    }

    if !(result.pi_se <= WEAK_MAX_PI_SE) {
        reasons.push(format!(
            "standard error of pi {} exceeds {WEAK_MAX_PI_SE}",
            result.pi_se
        ));
    }

    let cond = condition_number(&result.information);
    if cond > WEAK_MAX_CONDITION {
        reasons.push(format!(
            "information condition number {cond:.3e} exceeds {WEAK_MAX_CONDITION:e}"
        ));
    }

    (!reasons.is_empty()).then(|| format!("pi is weakly identified: {}", reasons.join("; ")))
}

/// One point of the profile log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub pi: f64,
    /// `None` when `π` is infeasible for the data.
    pub loglik: Option<f64>,
}

/// Log-likelihood maximised over the hazard ratios at each fixed `π`.
pub fn profile_curve(
    d: &SurveyDataset,
    partition: &HazardPartition,
    pi_grid: &[f64],
    tie_seed: u64,
) -> Result<Vec<ProfilePoint>> {
    let d = break_ties(d, tie_seed);
    let lik = PartialLikelihood::new(&d, partition)?;
    let ones = vec![1.0; lik.n_strata()];
    Ok(pi_grid
        .par_iter()
        .map(|&pi| {
            let loglik = (pi > 0.0 && pi < 1.0)
                .then(|| lik.maximize_rho(pi, &ones).ok())
                .flatten()
                .and_then(|rho| lik.loglik(&ModelParams { pi, rho }).ok());
            ProfilePoint { pi, loglik }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn start_value_serde() {
        #[derive(Serialize, Deserialize)]
        struct W {
            v: StartValue,
        }
        let a: W = serde_json::from_str(r#"{"v":"auto"}"#).unwrap();
        assert_eq!(a.v, StartValue::Auto);
        let b: W = serde_json::from_str(r#"{"v":0.25}"#).unwrap();
        assert_eq!(b.v, StartValue::Fixed(0.25));
        assert!(serde_json::from_str::<W>(r#"{"v":"bogus"}"#).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        let bad = FitConfig {
            step_shrink: 1.0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FitConfig {
            max_iterations: 0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FitConfig {
            pi_init: StartValue::Fixed(1.2),
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn injected_large_se_warns() {
        use crate::simulator::{simulate_survey, HazardSpec, ScenarioConfig};
        let cfg = ScenarioConfig {
            population_size: 20_000,
            true_pi: 0.3,
            hazard: HazardSpec::constant(0.02, 3.0),
            censor_time: 40.0,
            item_response_rate: 1.0,
            rng_seed: 5,
            calendar: None,
        };
        let d = simulate_survey(&cfg).unwrap().dataset;
        let part = HazardPartition::constant(40.0);
        let mut r = fit(&d, &part, &FitConfig::default()).unwrap();
        let base = weak_identification_check(&d, &part, &r);
        assert!(base
            .as_deref()
            .is_none_or(|w| !w.contains("standard error")));
        r.pi_se = 0.25;
        let w = weak_identification_check(&d, &part, &r).unwrap();
        assert!(w.contains("standard error of pi 0.25"));
    }
}
