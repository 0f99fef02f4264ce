//! Synthetic surveys.
//!
//! Each individual's response time is drawn from a piecewise-exponential
//! distribution by inverting its cumulative hazard. The group of interest
//! has hazard `ρ(t) λ₀(t)`. Times at or after the censor time are unit
//! nonresponse; earlier responses lose their label independently with
//! probability `1 − item_response_rate`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::comparators::{StratumRow, StratumTable};
use crate::domain::{
    Calendar, DayClass, DayOfWeek, Label, ResponseRecord, SurveyDataset, TimePoint,
};
use crate::error::{Error, Result};

/// Hazard rates are kept within `[RATE_EPS, 1 / RATE_EPS]`.
pub const RATE_EPS: f64 = 1e-9;

const STREAM_GROUPS: u64 = 0;
const STREAM_TIMES: u64 = 1;
const STREAM_ITEMS: u64 = 2;

/// Step function on `[0, ∞)`: `values[j]` applies from `starts[j]` until the
/// next start; the last piece is open-ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub starts: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn constant(value: f64) -> Self {
        Self {
            starts: vec![0.0],
            values: vec![value],
        }
    }

    pub fn new(starts: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let f = Self { starts, values };
        f.validate()?;
        Ok(f)
    }

    fn validate(&self) -> Result<()> {
        if self.starts.is_empty() || self.starts.len() != self.values.len() {
            return Err(Error::Validation(
                "step function needs matching, non-empty starts and values".to_string(),
            ));
        }
        if self.starts[0] != 0.0 {
            return Err(Error::Validation(
                "step function must start at 0".to_string(),
            ));
        }
        if self
            .starts
            .windows(2)
            .any(|w| !(w[1] > w[0]) || !w[1].is_finite())
        {
            return Err(Error::Validation(
                "step function starts must be finite and increasing".to_string(),
            ));
        }
        if let Some(v) = self
            .values
            .iter()
            .find(|v| !(**v >= RATE_EPS && **v <= 1.0 / RATE_EPS))
        {
            return Err(Error::Validation(format!(
                "rate {v} violates positivity bounds [{RATE_EPS:e}, {:e}]",
                1.0 / RATE_EPS
            )));
        }
        Ok(())
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let j = self.starts.partition_point(|&s| s <= t);
        self.values[j.saturating_sub(1)]
    }
}

/// Group hazards: baseline `λ₀(t)` and ratio `ρ(t)`, so `λ₁ = ρ λ₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardSpec {
    pub baseline: StepFunction,
    pub ratio: StepFunction,
}

impl HazardSpec {
    pub fn constant(baseline: f64, ratio: f64) -> Self {
        Self {
            baseline: StepFunction::constant(baseline),
            ratio: StepFunction::constant(ratio),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.baseline.validate()?;
        self.ratio.validate()?;
        for label in [Label::Reference, Label::Interest] {
            if let Some(r) = self
                .group(label)
                .rates
                .iter()
                .find(|r| !(**r >= RATE_EPS && **r <= 1.0 / RATE_EPS))
            {
                return Err(Error::Validation(format!("group hazard {r} out of bounds")));
            }
        }
        Ok(())
    }

    /// The response-time distribution of one group.
    pub fn group(&self, label: Label) -> PiecewiseExponential {
        let mut starts: Vec<f64> = self
            .baseline
            .starts
            .iter()
            .chain(&self.ratio.starts)
            .copied()
            .collect();
        starts.sort_by(f64::total_cmp);
        starts.dedup();
        let rates = starts
            .iter()
            .map(|&s| {
                let base = self.baseline.value_at(s);
                match label {
                    Label::Reference => base,
                    Label::Interest => base * self.ratio.value_at(s),
                }
            })
            .collect();
        PiecewiseExponential::from_parts(starts, rates)
    }

    /// Multiply the baseline by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            baseline: StepFunction {
                starts: self.baseline.starts.clone(),
                values: self.baseline.values.iter().map(|v| v * factor).collect(),
            },
            ratio: self.ratio.clone(),
        }
    }
}

/// Distribution with piecewise-constant hazard.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseExponential {
    starts: Vec<f64>,
    rates: Vec<f64>,
    cumulative: Vec<f64>,
}

impl PiecewiseExponential {
    fn from_parts(starts: Vec<f64>, rates: Vec<f64>) -> Self {
        let mut cumulative = Vec::with_capacity(starts.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for j in 1..starts.len() {
            acc += rates[j - 1] * (starts[j] - starts[j - 1]);
            cumulative.push(acc);
        }
        Self {
            starts,
            rates,
            cumulative,
        }
    }

    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        let j = self.starts.partition_point(|&s| s <= t).saturating_sub(1);
        self.cumulative[j] + self.rates[j] * (t - self.starts[j])
    }

    pub fn survival(&self, t: f64) -> f64 {
        (-self.cumulative_hazard(t)).exp()
    }

    /// Time at which the cumulative hazard reaches `target`.
    pub fn inverse_cumulative_hazard(&self, target: f64) -> f64 {
        let j = self
            .cumulative
            .partition_point(|&c| c <= target)
            .saturating_sub(1);
        self.starts[j] + (target - self.cumulative[j]) / self.rates[j]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(Exp1);
        self.inverse_cumulative_hazard(e)
    }
}

/// Draw one response time for `group`; values at or beyond the censor time
/// mean the individual did not respond.
pub fn sample_response_time<R: Rng + ?Sized>(h: &HazardSpec, group: Label, rng: &mut R) -> f64 {
    h.group(group).sample(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub population_size: u64,
    pub true_pi: f64,
    pub hazard: HazardSpec,
    /// May be infinite for a fully observed population.
    pub censor_time: f64,
    pub item_response_rate: f64,
    pub rng_seed: u64,
    #[serde(default)]
    pub calendar: Option<Calendar>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.population_size == 0 {
            return bad("population_size must be positive".into());
        }
        if !(self.true_pi > 0.0 && self.true_pi < 1.0) {
            return bad(format!("true_pi must lie in (0, 1), got {}", self.true_pi));
        }
        if !(self.censor_time > 0.0) {
            return bad("censor_time must be positive".into());
        }
        if !(self.item_response_rate > 0.0 && self.item_response_rate <= 1.0) {
            return bad("item_response_rate must lie in (0, 1]".into());
        }
        self.hazard.validate()
    }

    /// Expected fraction of the population responding before the censor time.
    pub fn expected_response_rate(&self) -> f64 {
        expected_response_rate(&self.hazard, self.true_pi, self.censor_time)
    }

    /// A six-week survey opening on a Tuesday with holidays on days 20 and
    /// 34, a constant hazard ratio of 2, 20% in the group of interest, 95%
    /// item response, and the baseline scaled for 33% unit response.
    ///
    /// Daily volume favours early weekdays, spikes on launch day, and drops
    /// to a trickle on weekends and holidays.
    pub fn fevs_like(population_size: u64, rng_seed: u64) -> Self {
        Self::weekly_survey(population_size, rng_seed, 0.2, 2.0, 0.33)
    }

    /// The [`fevs_like`](Self::fevs_like) calendar and volume pattern with
    /// other proportion, hazard ratio and response-rate targets.
    pub fn weekly_survey(
        population_size: u64,
        rng_seed: u64,
        true_pi: f64,
        ratio: f64,
        response_rate: f64,
    ) -> Self {
        let n_days = 42;
        let calendar = Calendar::weekly(DayOfWeek::Tuesday, n_days, &[20, 34]);
        let values = (0..n_days)
            .map(|d| {
                let class = calendar.class_of(d).unwrap();
                let weight = match class {
                    DayClass::Monday => 1.2,
                    DayClass::Tuesday => 1.1,
                    DayClass::Wednesday => 1.0,
                    DayClass::Thursday => 0.9,
                    DayClass::Friday => 0.8,
                    DayClass::Weekend => 0.04,
                    DayClass::Holiday => 0.08,
                };
                if d == 0 {
                    2.0 * weight
                } else {
                    weight
                }
            })
            .chain(std::iter::once(1.0))
            .collect();
        let starts = (0..=n_days).map(f64::from).collect();
        let shape = HazardSpec {
            baseline: StepFunction { starts, values },
            ratio: StepFunction::constant(ratio),
        };
        let tau = f64::from(n_days);
        let hazard = scale_to_response_rate(&shape, true_pi, tau, response_rate);
        Self {
            population_size,
            true_pi,
            hazard,
            censor_time: tau,
            item_response_rate: 0.95,
            rng_seed,
            calendar: Some(calendar),
        }
    }
}

/// `(1 − π) F₀(τ) + π F₁(τ)`.
pub fn expected_response_rate(h: &HazardSpec, pi: f64, tau: f64) -> f64 {
    let f0 = 1.0 - h.group(Label::Reference).survival(tau);
    let f1 = 1.0 - h.group(Label::Interest).survival(tau);
    (1.0 - pi) * f0 + pi * f1
}

/// Rescale the baseline so the expected response rate by `tau` hits `target`.
pub fn scale_to_response_rate(h: &HazardSpec, pi: f64, tau: f64, target: f64) -> HazardSpec {
    let (mut lo, mut hi) = (1e-12_f64, 1e12_f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if expected_response_rate(&h.scaled(mid), pi, tau) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    h.scaled((lo * hi).sqrt())
}

/// Hidden ground truth of a simulated survey.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub population_size: u64,
    pub n_interest: u64,
    /// Exact finite-population proportion `n_interest / N`.
    pub true_pi: f64,
    pub censor_time: f64,
    pub n_responded: usize,
    pub n_labeled: usize,
    pub rng_seed: u64,
    /// Label of every individual, by individual index.
    #[serde(skip)]
    pub labels: Vec<Label>,
    /// Uncensored response time of every individual, by individual index.
    #[serde(skip)]
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSurvey {
    pub dataset: SurveyDataset,
    pub truth: Truth,
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generate a survey from `cfg`.
///
/// Exactly `⌊Nπ⌋` individuals join the group of interest, plus one more with
/// probability equal to the fractional remainder. Group sizes, response
/// times and item nonresponse use separate random streams, so changing the
/// item response rate never moves a response time.
pub fn simulate_survey(cfg: &ScenarioConfig) -> Result<SimulatedSurvey> {
    cfg.validate()?;
    let n = cfg.population_size;
    let exact = n as f64 * cfg.true_pi;
    let mut n_interest = exact.floor() as u64;
    let mut groups_rng = stream(cfg.rng_seed, STREAM_GROUPS);
    if groups_rng.random::<f64>() < exact - exact.floor() {
        n_interest += 1;
    }

    let dist0 = cfg.hazard.group(Label::Reference);
    let dist1 = cfg.hazard.group(Label::Interest);
    let mut times_rng = stream(cfg.rng_seed, STREAM_TIMES);
    let mut items_rng = stream(cfg.rng_seed, STREAM_ITEMS);

    let mut labels = Vec::with_capacity(n as usize);
    let mut times = Vec::with_capacity(n as usize);
    let mut records = Vec::new();
    for i in 0..n {
        let label = if i < n_interest {
            Label::Interest
        } else {
            Label::Reference
        };
        let dist = if label == Label::Interest {
            &dist1
        } else {
            &dist0
        };
        let t = dist.sample(&mut times_rng);
        labels.push(label);
        times.push(t);
        if t < cfg.censor_time {
            let keep = items_rng.random::<f64>() < cfg.item_response_rate;
            let time = TimePoint::new(t)?;
            records.push(if keep {
                ResponseRecord::labeled(time, label)
            } else {
                ResponseRecord::item_nonresponse(time)
            });
        }
    }
    records.sort_by(|a, b| a.time.unwrap().days().total_cmp(&b.time.unwrap().days()));

    let censor_time = if cfg.censor_time.is_finite() {
        cfg.censor_time
    } else {
        records
            .last()
            .map_or(1.0, |r| r.time.unwrap().days().floor() + 1.0)
    };
    let mut dataset = SurveyDataset::new(records, n, TimePoint::new(censor_time)?);
    dataset.calendar = cfg.calendar.clone();
    let truth = Truth {
        population_size: n,
        n_interest,
        true_pi: n_interest as f64 / n as f64,
        censor_time,
        n_responded: dataset.n_responded(),
        n_labeled: dataset.n_labeled(),
        rng_seed: cfg.rng_seed,
        labels,
        times,
    };
    Ok(SimulatedSurvey { dataset, truth })
}

/// One cell of a stratum-by-label table, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColliderCell {
    pub stratum: String,
    pub label: Label,
    pub population_pct: f64,
    pub respondent_pct: f64,
}

/// Population and respondent composition by stratum and label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColliderSpec {
    pub cells: Vec<ColliderCell>,
    pub population_size: u64,
    /// Fraction of the population that responds.
    pub response_fraction: f64,
}

impl ColliderSpec {
    /// Supervisors and non-supervisors where not-satisfied supervisors are
    /// over-represented among respondents and not-satisfied non-supervisors
    /// almost absent ("interest" = not satisfied).
    pub fn supervisor_collider() -> Self {
        let cell = |stratum: &str, label, population_pct, respondent_pct| ColliderCell {
            stratum: stratum.to_string(),
            label,
            population_pct,
            respondent_pct,
        };
        Self {
            cells: vec![
                cell("supervisor", Label::Reference, 40.0, 45.0),
                cell("supervisor", Label::Interest, 10.0, 45.0),
                cell("non-supervisor", Label::Reference, 10.0, 8.0),
                cell("non-supervisor", Label::Interest, 40.0, 2.0),
            ],
            population_size: 10_000,
            response_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationMember {
    pub stratum: usize,
    pub label: Label,
    pub responded: bool,
}

/// A finite population whose respondents follow a given composition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColliderPopulation {
    pub strata: Vec<String>,
    pub members: Vec<PopulationMember>,
}

impl ColliderPopulation {
    pub fn true_proportion(&self) -> f64 {
        let ones = self
            .members
            .iter()
            .filter(|m| m.label == Label::Interest)
            .count();
        ones as f64 / self.members.len() as f64
    }

    pub fn respondent_proportion(&self) -> f64 {
        let resp: Vec<_> = self.members.iter().filter(|m| m.responded).collect();
        let ones = resp.iter().filter(|m| m.label == Label::Interest).count();
        ones as f64 / resp.len() as f64
    }

    /// Population shares and respondent counts per stratum.
    pub fn stratum_table(&self) -> StratumTable {
        let n = self.members.len() as f64;
        let rows = self
            .strata
            .iter()
            .enumerate()
            .map(|(s, name)| {
                let in_s = self.members.iter().filter(|m| m.stratum == s);
                let (mut size, mut ones, mut zeros) = (0u64, 0u64, 0u64);
                for m in in_s {
                    size += 1;
                    if m.responded {
                        match m.label {
                            Label::Interest => ones += 1,
                            Label::Reference => zeros += 1,
                        }
                    }
                }
                StratumRow {
                    name: name.clone(),
                    population_share: size as f64 / n,
                    interest: ones,
                    reference: zeros,
                }
            })
            .collect();
        StratumTable { rows }
    }
}

/// Materialise a population matching a stratum-by-label table.
pub fn simulate_collider_population(spec: &ColliderSpec) -> Result<ColliderPopulation> {
    let inconsistent = |m: String| Err(Error::InconsistentTable(m));
    let pop_total: f64 = spec.cells.iter().map(|c| c.population_pct).sum();
    let resp_total: f64 = spec.cells.iter().map(|c| c.respondent_pct).sum();
    if (pop_total - 100.0).abs() > 1e-9 || (resp_total - 100.0).abs() > 1e-9 {
        return inconsistent(format!(
            "columns must sum to 100 (population {pop_total}, respondents {resp_total})"
        ));
    }
    if spec
        .cells
        .iter()
        .any(|c| c.population_pct < 0.0 || c.respondent_pct < 0.0)
    {
        return inconsistent("shares must be nonnegative".to_string());
    }
    if !(spec.response_fraction > 0.0 && spec.response_fraction <= 1.0) {
        return inconsistent("response_fraction must lie in (0, 1]".to_string());
    }

    let n = spec.population_size as f64;
    let respondents = n * spec.response_fraction;
    let mut strata: Vec<String> = Vec::new();
    let mut members = Vec::with_capacity(spec.population_size as usize);
    for c in &spec.cells {
        let stratum = match strata.iter().position(|s| s == &c.stratum) {
            Some(i) => i,
            None => {
                strata.push(c.stratum.clone());
                strata.len() - 1
            }
        };
        let size = (c.population_pct / 100.0 * n).round() as usize;
        let responding = (c.respondent_pct / 100.0 * respondents).round() as usize;
        if responding > size {
            return inconsistent(format!(
                "{} {:?}: {responding} respondents but only {size} members",
                c.stratum, c.label
            ));
        }
        members.extend((0..size).map(|i| PopulationMember {
            stratum,
            label: c.label,
            responded: i < responding,
        }));
    }
    if members.len() as u64 != spec.population_size {
        return inconsistent(format!(
            "cells round to {} members, expected {}",
            members.len(),
            spec.population_size
        ));
    }
    Ok(ColliderPopulation { strata, members })
}
