//! Reference estimators and per-day diagnostic series.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::domain::{DayClass, Label, SurveyDataset};
use crate::error::{Error, Result};

/// Two-sided level of the log-ratio trend test.
pub const TREND_TEST_LEVEL: f64 = 0.05;

const SHARE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub se: f64,
}

fn binomial(ones: u64, n: u64) -> Estimate {
    let p = ones as f64 / n as f64;
    Estimate {
        estimate: p,
        se: (p * (1.0 - p) / n as f64).sqrt(),
    }
}

/// Labeled mean of the indicator with its binomial standard error.
pub fn sample_proportion(d: &SurveyDataset) -> Result<Estimate> {
    let (mut ones, mut n) = (0u64, 0u64);
    for r in &d.records {
        if r.time.is_none() {
            continue;
        }
        if let Some(label) = r.observed_label() {
            n += 1;
            ones += u64::from(label.indicator());
        }
    }
    if n == 0 {
        return Err(Error::Degenerate("no labeled respondents".to_string()));
    }
    Ok(binomial(ones, n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub name: String,
    pub population_share: f64,
    /// Labeled respondents in the group of interest.
    pub interest: u64,
    /// Labeled respondents in the reference group.
    pub reference: u64,
}

impl StratumRow {
    pub fn labeled(&self) -> u64 {
        self.interest + self.reference
    }
}

/// Known population shares and labeled respondent counts per stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumTable {
    pub rows: Vec<StratumRow>,
}

impl StratumTable {
    pub fn new(rows: Vec<StratumRow>) -> Result<Self> {
        let t = Self { rows };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::InconsistentTable("no strata".to_string()));
        }
        if let Some(r) = self
            .rows
            .iter()
            .find(|r| !(r.population_share.is_finite() && r.population_share >= 0.0))
        {
            return Err(Error::InconsistentTable(format!(
                "stratum `{}` has invalid share {}",
                r.name, r.population_share
            )));
        }
        let total: f64 = self.rows.iter().map(|r| r.population_share).sum();
        if (total - 1.0).abs() > SHARE_TOLERANCE {
            return Err(Error::InconsistentTable(format!(
                "population shares sum to {total}"
            )));
        }
        Ok(())
    }

    /// Strata with a positive share and no labeled respondents.
    pub fn empty_strata(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| r.population_share > 0.0 && r.labeled() == 0)
            .map(|r| r.name.as_str())
            .collect()
    }

    /// Pooled respondent proportion, ignoring the shares.
    pub fn pooled(&self) -> Result<Estimate> {
        let ones: u64 = self.rows.iter().map(|r| r.interest).sum();
        let n: u64 = self.rows.iter().map(StratumRow::labeled).sum();
        if n == 0 {
            return Err(Error::Degenerate("no labeled respondents".to_string()));
        }
        Ok(binomial(ones, n))
    }
}

/// Share-weighted average of within-stratum proportions.
///
/// The standard error propagates each stratum's binomial variance:
/// `sqrt(Σ w_s² p_s (1 − p_s) / n_s)`.
pub fn poststratify(t: &StratumTable) -> Result<Estimate> {
    t.validate()?;
    if let Some(name) = t.empty_strata().first() {
        return Err(Error::EmptyStratum((*name).to_string()));
    }
    let (mut est, mut var) = (0.0, 0.0);
    for r in t.rows.iter().filter(|r| r.population_share > 0.0) {
        let b = binomial(r.interest, r.labeled());
        est += r.population_share * b.estimate;
        var += r.population_share.powi(2) * b.se.powi(2);
    }
    Ok(Estimate {
        estimate: est,
        se: var.sqrt(),
    })
}

/// Labeled responses on one calendar day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyProportion {
    pub day: u32,
    pub class: Option<DayClass>,
    pub interest: u64,
    pub reference: u64,
    pub proportion: Option<f64>,
    pub se: Option<f64>,
}

impl DailyProportion {
    pub fn labeled(&self) -> u64 {
        self.interest + self.reference
    }
}

/// Daily hazard ratio of the group of interest to the reference group,
/// given an assumed population proportion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyHazardRatio {
    pub day: u32,
    pub class: Option<DayClass>,
    pub interest: u64,
    pub reference: u64,
    /// Estimated reference-group members still at risk at the start of the day.
    pub n0_at_risk: f64,
    /// Estimated interest-group members still at risk at the start of the day.
    pub n1_at_risk: f64,
    pub ratio: Option<f64>,
    pub log_ratio_se: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSeries {
    pub proportions: Vec<DailyProportion>,
    pub assumed_pi: Option<f64>,
    pub hazard_ratios: Vec<DailyHazardRatio>,
}

/// One value of a series in long format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TidyRow {
    pub day: u32,
    pub day_class: String,
    pub metric: &'static str,
    pub value: f64,
}

impl DiagnosticsSeries {
    /// One row per day per metric; absent values are skipped.
    pub fn tidy_rows(&self) -> Vec<TidyRow> {
        let mut out = Vec::new();
        let class = |c: Option<DayClass>| c.map_or_else(String::new, |c| c.to_string());
        let mut push = |day, c: Option<DayClass>, metric, value: Option<f64>| {
            if let Some(value) = value {
                out.push(TidyRow {
                    day,
                    day_class: class(c),
                    metric,
                    value,
                });
            }
        };
        for r in &self.proportions {
            push(r.day, r.class, "interest_count", Some(r.interest as f64));
            push(r.day, r.class, "reference_count", Some(r.reference as f64));
            push(r.day, r.class, "proportion", r.proportion);
            push(r.day, r.class, "proportion_se", r.se);
        }
        for r in &self.hazard_ratios {
            push(r.day, r.class, "n0_at_risk", Some(r.n0_at_risk));
            push(r.day, r.class, "n1_at_risk", Some(r.n1_at_risk));
            push(r.day, r.class, "hazard_ratio", r.ratio);
            push(r.day, r.class, "log_ratio_se", r.log_ratio_se);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct DayCounts {
    interest: u64,
    reference: u64,
    unlabeled: u64,
}

fn day_counts(d: &SurveyDataset) -> Vec<DayCounts> {
    let mut days = vec![DayCounts::default(); d.n_days() as usize];
    for (t, r) in d.timed() {
        let Some(c) = days.get_mut(t.day() as usize) else {
            continue;
        };
        match r.observed_label() {
            Some(Label::Interest) => c.interest += 1,
            Some(Label::Reference) => c.reference += 1,
            None => c.unlabeled += 1,
        }
    }
    days
}

fn class_of(d: &SurveyDataset, day: u32) -> Option<DayClass> {
    d.calendar.as_ref().and_then(|c| c.class_of(day))
}

fn is_weekday(class: Option<DayClass>) -> bool {
    class.is_none_or(DayClass::is_weekday)
}

/// Labeled proportion and binomial SE for every day in `[0, τ)`.
pub fn daily_proportion_series(d: &SurveyDataset) -> DiagnosticsSeries {
    let proportions = day_counts(d)
        .into_iter()
        .enumerate()
        .map(|(day, c)| {
            let day = day as u32;
            let n = c.interest + c.reference;
            let b = (n > 0).then(|| binomial(c.interest, n));
            DailyProportion {
                day,
                class: class_of(d, day),
                interest: c.interest,
                reference: c.reference,
                proportion: b.map(|b| b.estimate),
                se: b.map(|b| b.se),
            }
        })
        .collect();
    DiagnosticsSeries {
        proportions,
        ..Default::default()
    }
}

/// Which days enter the hazard-ratio series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DayFilter {
    #[default]
    WeekdaysOnly,
    AllDays,
}

/// Hazard-ratio series over weekdays, holidays excluded.
pub fn hazard_ratio_series(d: &SurveyDataset, assumed_pi: f64) -> Result<DiagnosticsSeries> {
    hazard_ratio_series_with(d, assumed_pi, DayFilter::WeekdaysOnly)
}

/// Daily ratio `(d₁ / N̂₁) / (d₀ / N̂₀)` with risk sets taken at the start
/// of each day.
///
/// The log ratio's standard error is
/// `sqrt(1/d₁ + 1/d₀ − 1/N̂₁ − 1/N̂₀)`, floored at zero. Days where either
/// group has no responses keep their row but have no ratio.
pub fn hazard_ratio_series_with(
    d: &SurveyDataset,
    assumed_pi: f64,
    filter: DayFilter,
) -> Result<DiagnosticsSeries> {
    if !(assumed_pi > 0.0 && assumed_pi < 1.0) {
        return Err(Error::Validation(format!(
            "assumed pi must lie in (0, 1), got {assumed_pi}"
        )));
    }
    let n = d.population_size as f64;
    let (mut unlabeled, mut ones, mut zeros) = (0.0, 0.0, 0.0);
    let mut rows = Vec::new();
    for (day, c) in day_counts(d).into_iter().enumerate() {
        let day = day as u32;
        let m = n - unlabeled;
        let n1 = m * assumed_pi - ones;
        let n0 = m * (1.0 - assumed_pi) - zeros;
        if n1 < c.interest as f64 || n0 < c.reference as f64 {
            return Err(Error::Infeasible {
                event_index: day as usize,
                n0_hat: n0,
                n1_hat: n1,
            });
        }
        unlabeled += c.unlabeled as f64;
        ones += c.interest as f64;
        zeros += c.reference as f64;

        let class = class_of(d, day);
        if filter == DayFilter::WeekdaysOnly && !is_weekday(class) {
            continue;
        }
        let (d1, d0) = (c.interest as f64, c.reference as f64);
        let (ratio, log_ratio_se) = if c.interest > 0 && c.reference > 0 {
            let var = 1.0 / d1 + 1.0 / d0 - 1.0 / n1 - 1.0 / n0;
            (Some((d1 / n1) / (d0 / n0)), Some(var.max(0.0).sqrt()))
        } else {
            (None, None)
        };
        rows.push(DailyHazardRatio {
            day,
            class,
            interest: c.interest,
            reference: c.reference,
            n0_at_risk: n0,
            n1_at_risk: n1,
            ratio,
            log_ratio_se,
        });
    }
    Ok(DiagnosticsSeries {
        proportions: Vec::new(),
        assumed_pi: Some(assumed_pi),
        hazard_ratios: rows,
    })
}

/// Weighted least-squares slope of the daily log ratio on day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendTest {
    pub slope: f64,
    pub slope_se: f64,
    pub z: f64,
    pub p_value: f64,
    pub significant: bool,
}

struct WeightedLine {
    intercept: f64,
    slope: f64,
    sxx: f64,
}

fn weighted_line(points: &[(f64, f64, f64)]) -> Result<WeightedLine> {
    let sw: f64 = points.iter().map(|p| p.2).sum();
    if points.len() < 2 || !(sw > 0.0) {
        return Err(Error::Degenerate(
            "need at least two weighted days".to_string(),
        ));
    }
    let xbar = points.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ybar = points.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - xbar).powi(2)).sum();
    let sxy: f64 = points
        .iter()
        .map(|p| p.2 * (p.0 - xbar) * (p.1 - ybar))
        .sum();
    if !(sxx > 0.0) {
        return Err(Error::Degenerate("all days coincide".to_string()));
    }
    let slope = sxy / sxx;
    Ok(WeightedLine {
        intercept: ybar - slope * xbar,
        slope,
        sxx,
    })
}

fn log_ratio_points(series: &DiagnosticsSeries) -> Vec<(f64, f64, f64)> {
    series
        .hazard_ratios
        .iter()
        .filter_map(|r| match (r.ratio, r.log_ratio_se) {
            (Some(ratio), Some(se)) if se > 0.0 => {
                Some((f64::from(r.day) + 0.5, ratio.ln(), 1.0 / (se * se)))
            }
            _ => None,
        })
        .collect()
}

/// Test for a linear trend in the log hazard ratio, weighting each day by
/// its inverse variance.
pub fn log_ratio_trend(series: &DiagnosticsSeries) -> Result<TrendTest> {
    let line = weighted_line(&log_ratio_points(series))?;
    let slope_se = line.sxx.recip().sqrt();
    let z = line.slope / slope_se;
    let normal = Normal::standard();
    let p_value = 2.0 * (1.0 - normal.cdf(z.abs()));
    Ok(TrendTest {
        slope: line.slope,
        slope_se,
        z,
        p_value,
        significant: p_value < TREND_TEST_LEVEL,
    })
}

/// Inverse-variance weighted mean of the daily log ratios and its SE.
pub fn weighted_mean_log_ratio(series: &DiagnosticsSeries) -> Result<Estimate> {
    let points = log_ratio_points(series);
    let sw: f64 = points.iter().map(|p| p.2).sum();
    if !(sw > 0.0) {
        return Err(Error::Degenerate("no days with a ratio".to_string()));
    }
    Ok(Estimate {
        estimate: points.iter().map(|p| p.2 * p.1).sum::<f64>() / sw,
        se: sw.recip().sqrt(),
    })
}

/// Days needed to reach full response at the observed average arrival rate.
pub fn response_horizon(d: &SurveyDataset) -> Result<f64> {
    let n = d.n_responded();
    if n == 0 {
        return Err(Error::Degenerate("no respondents".to_string()));
    }
    Ok(d.censor_time.days() * d.population_size as f64 / n as f64)
}

/// Back-of-the-envelope estimate from continuing the daily trend.
///
/// A line is fitted to weekday proportions by least squares weighted by
/// daily counts and averaged over `[0, horizon)`. Observed days weigh by
/// their counts and later days by the mean weekday count.
pub fn extrapolate_trend(series: &DiagnosticsSeries, horizon: f64) -> Result<f64> {
    let rows: Vec<&DailyProportion> = series
        .proportions
        .iter()
        .filter(|r| is_weekday(r.class) && r.labeled() > 0)
        .collect();
    let points: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|r| {
            (
                f64::from(r.day) + 0.5,
                r.interest as f64 / r.labeled() as f64,
                r.labeled() as f64,
            )
        })
        .collect();
    let line = weighted_line(&points)?;
    let at = |x: f64| line.intercept + line.slope * x;

    let (mut num, mut den) = (0.0, 0.0);
    for &(x, _, w) in points.iter().filter(|p| p.0 < horizon) {
        num += w * at(x);
        den += w;
    }
    let mean_count = points.iter().map(|p| p.2).sum::<f64>() / points.len() as f64;
    let observed_end = series
        .proportions
        .last()
        .map_or(0.0, |r| f64::from(r.day) + 1.0);
    let mut start = observed_end;
    while start < horizon {
        let end = (start + 1.0).min(horizon);
        let w = mean_count * (end - start);
        num += w * at(0.5 * (start + end));
        den += w;
        start = end;
    }
    if !(den > 0.0) {
        return Err(Error::Degenerate("empty horizon".to_string()));
    }
    Ok(num / den)
}
