//! Partial likelihood with a piecewise-constant hazard ratio.
//!
//! Labeled responses arrive in time order. Given the history, the chance
//! that the arrival at `t` belongs to the group of interest is
//!
//! ```text
//! ρ_k N̂₁(t) / (N̂₀(t) + ρ_k N̂₁(t))
//! ```
//!
//! where `k` is the stratum of `t` and the risk counts are estimated from
//! `π` and the strict past:
//!
//! ```text
//! N̂₁(t) = (N − #unlabeled before t) π       − #interest before t
//! N̂₀(t) = (N − #unlabeled before t) (1 − π) − #reference before t
//! ```
//!
//! Responses without a label contribute a factor of one but still deplete
//! the risk sets. Derivatives are taken with respect to `(π, ρ₁ … ρ_K)`;
//! the `ρ` block of the Hessian is diagonal.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::domain::{Label, SurveyDataset};
use crate::error::{Error, Result};
use crate::partition::HazardPartition;

/// Minimum own-label risk count accepted by the optimizer (half a person).
pub const FEASIBILITY_MARGIN: f64 = 0.5;

/// Rounding slack when a risk count is required to be nonnegative.
const COUNT_SLACK: f64 = 1e-9;

/// Hazard-ratio model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub pi: f64,
    pub rho: Vec<f64>,
}

impl ModelParams {
    pub fn new(pi: f64, rho: Vec<f64>) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::Validation(format!(
                "pi must lie in (0, 1), got {pi}"
            )));
        }
        if let Some(r) = rho.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::Validation(format!("rho must be positive, got {r}")));
        }
        Ok(Self { pi, rho })
    }

    /// `(1 − π, 1/ρ)`, the parameters of the relabeled problem.
    pub fn complement(&self) -> Self {
        Self {
            pi: 1.0 - self.pi,
            rho: self.rho.iter().map(|r| 1.0 / r).collect(),
        }
    }
}

/// Estimated numbers still at risk just before an event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskCounts {
    pub n0_hat: f64,
    pub n1_hat: f64,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Hessian (or information) with dense `π` row and diagonal `ρ` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrowMatrix {
    pub pi_pi: f64,
    pub pi_rho: Vec<f64>,
    pub rho_rho: Vec<f64>,
}

impl ArrowMatrix {
    pub fn dim(&self) -> usize {
        self.rho_rho.len() + 1
    }

    pub fn negated(&self) -> Self {
        Self {
            pi_pi: -self.pi_pi,
            pi_rho: self.pi_rho.iter().map(|x| -x).collect(),
            rho_rho: self.rho_rho.iter().map(|x| -x).collect(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        m[(0, 0)] = self.pi_pi;
        for (k, (&c, &d)) in self.pi_rho.iter().zip(&self.rho_rho).enumerate() {
            m[(0, k + 1)] = c;
            m[(k + 1, 0)] = c;
            m[(k + 1, k + 1)] = d;
        }
        m
    }

    /// `a − Σ c_k² / d_k`; `Err(k)` names the first zero or non-finite diagonal.
    pub fn schur_complement(&self) -> std::result::Result<f64, usize> {
        let mut s = self.pi_pi;
        for (k, (&c, &d)) in self.pi_rho.iter().zip(&self.rho_rho).enumerate() {
            if d == 0.0 || !d.is_finite() {
                return Err(k);
            }
            s -= c * c / d;
        }
        Ok(s)
    }

    /// Positive definite iff every `ρ` diagonal and the Schur complement are positive.
    pub fn is_positive_definite(&self) -> bool {
        self.rho_rho.iter().all(|&d| d > 0.0) && matches!(self.schur_complement(), Ok(s) if s > 0.0)
    }

    /// Solve `M x = b` in `O(K)`. Requires nonzero diagonals and Schur complement.
    pub fn solve(&self, b: &[f64]) -> Option<Vec<f64>> {
        let s = self.schur_complement().ok()?;
        if s == 0.0 || !s.is_finite() {
            return None;
        }
        let mut rhs0 = b[0];
        for (k, (&c, &d)) in self.pi_rho.iter().zip(&self.rho_rho).enumerate() {
            rhs0 -= c * b[k + 1] / d;
        }
        let x0 = rhs0 / s;
        let mut x = Vec::with_capacity(self.dim());
        x.push(x0);
        for (k, (&c, &d)) in self.pi_rho.iter().zip(&self.rho_rho).enumerate() {
            x.push((b[k + 1] - c * x0) / d);
        }
        Some(x)
    }

    /// Diagonal of the inverse.
    pub fn inverse_diagonal(&self) -> Option<Vec<f64>> {
        let s = self.schur_complement().ok()?;
        let mut out = vec![1.0 / s];
        for (&c, &d) in self.pi_rho.iter().zip(&self.rho_rho) {
            out.push(1.0 / d + c * c / (d * d * s));
        }
        Some(out)
    }
}

/// Log-likelihood with its first and second derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodEvaluation {
    pub loglik: f64,
    /// `(U_π, U_ρ1 … U_ρK)`.
    pub score: Vec<f64>,
    pub hessian: ArrowMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_event_terms: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
struct LabeledEvent {
    /// Position among timed records.
    event_index: usize,
    stratum: usize,
    interest: bool,
    /// `N` minus unlabeled responses strictly before this event.
    at_risk_total: f64,
    prior_interest: f64,
    prior_reference: f64,
}

impl LabeledEvent {
    fn counts(&self, pi: f64) -> RiskCounts {
        RiskCounts {
            n0_hat: self.at_risk_total * (1.0 - pi) - self.prior_reference,
            n1_hat: self.at_risk_total * pi - self.prior_interest,
        }
    }

    /// Own-label count must be positive, the other nonnegative.
    fn feasible(&self, c: RiskCounts) -> bool {
        let (own, other) = if self.interest {
            (c.n1_hat, c.n0_hat)
        } else {
            (c.n0_hat, c.n1_hat)
        };
        own > 0.0 && other >= -COUNT_SLACK
    }
}

/// Preprocessed event table for repeated likelihood evaluation.
#[derive(Debug, Clone)]
pub struct PartialLikelihood {
    events: Vec<LabeledEvent>,
    by_stratum: Vec<Vec<usize>>,
    population: f64,
}

impl PartialLikelihood {
    /// Build from a dataset whose timed records are in strictly increasing order.
    pub fn new(d: &SurveyDataset, partition: &HazardPartition) -> Result<Self> {
        let n_strata = partition.n_strata();
        let population = d.population_size as f64;
        let mut events = Vec::new();
        let mut by_stratum = vec![Vec::new(); n_strata];
        let (mut unlabeled, mut ones, mut zeros) = (0.0, 0.0, 0.0);
        let mut prev = f64::NEG_INFINITY;
        let mut n_timed = 0u64;
        for (idx, (t, r)) in d.timed().enumerate() {
            let t = t.days();
            if t <= prev {
                return Err(Error::Validation(format!(
                    "event {idx}: times must be strictly increasing (break ties first)"
                )));
            }
            prev = t;
            n_timed += 1;
            match r.observed_label() {
                Some(label) => {
                    let stratum = partition.stratum_of(t);
                    by_stratum[stratum].push(events.len());
                    events.push(LabeledEvent {
                        event_index: idx,
                        stratum,
                        interest: label == Label::Interest,
                        at_risk_total: population - unlabeled,
                        prior_interest: ones,
                        prior_reference: zeros,
                    });
                    match label {
                        Label::Interest => ones += 1.0,
                        Label::Reference => zeros += 1.0,
                    }
                }
                None => unlabeled += 1.0,
            }
        }
        if n_timed > d.population_size {
            return Err(Error::Validation(format!(
                "{n_timed} respondents exceed population size {}",
                d.population_size
            )));
        }
        if let Some(k) = by_stratum.iter().position(Vec::is_empty) {
            return Err(Error::EmptyInterval { k });
        }
        Ok(Self {
            events,
            by_stratum,
            population,
        })
    }

    pub fn n_strata(&self) -> usize {
        self.by_stratum.len()
    }

    pub fn n_labeled(&self) -> usize {
        self.events.len()
    }

    pub fn population(&self) -> f64 {
        self.population
    }

    pub fn labeled_interest(&self) -> usize {
        self.events.iter().filter(|e| e.interest).count()
    }

    /// Fraction of labeled events in the group of interest.
    pub fn sample_proportion(&self) -> f64 {
        self.labeled_interest() as f64 / self.n_labeled() as f64
    }

    /// Risk counts at the `i`-th labeled event.
    pub fn risk_counts_at(&self, i: usize, pi: f64) -> RiskCounts {
        self.events[i].counts(pi)
    }

    /// Range of `π` over which every labeled event has own-label count at
    /// least `margin` and other-label count at least zero.
    pub fn pi_bounds(&self, margin: f64) -> (f64, f64) {
        let mut lo: f64 = 0.0;
        let mut hi: f64 = 1.0;
        for e in &self.events {
            let m = e.at_risk_total;
            let (need1, need0) = if e.interest {
                (margin, 0.0)
            } else {
                (0.0, margin)
            };
            lo = lo.max((e.prior_interest + need1) / m);
            hi = hi.min(1.0 - (e.prior_reference + need0) / m);
        }
        (lo, hi)
    }

    fn check(&self, pi: f64) -> Result<()> {
        for e in &self.events {
            let c = e.counts(pi);
            if !e.feasible(c) {
                return Err(Error::Infeasible {
                    event_index: e.event_index,
                    n0_hat: c.n0_hat,
                    n1_hat: c.n1_hat,
                });
            }
        }
        Ok(())
    }

    fn check_params(&self, params: &ModelParams) -> Result<()> {
        if params.rho.len() != self.n_strata() {
            return Err(Error::Validation(format!(
                "expected {} hazard ratios, got {}",
                self.n_strata(),
                params.rho.len()
            )));
        }
        if !(params.pi > 0.0 && params.pi < 1.0) || params.rho.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::Validation(
                "parameters outside 0 < pi < 1, rho > 0".to_string(),
            ));
        }
        self.check(params.pi)
    }

    fn event_log_term(e: &LabeledEvent, c: RiskCounts, rho: f64) -> f64 {
        let denom = c.n0_hat + rho * c.n1_hat;
        if e.interest {
            (rho * c.n1_hat).ln() - denom.ln()
        } else {
            c.n0_hat.ln() - denom.ln()
        }
    }

    /// Pr(label = interest | arrival at labeled event `i`, history).
    pub fn conditional_prob(&self, i: usize, params: &ModelParams) -> Result<f64> {
        self.check_params(params)?;
        let e = &self.events[i];
        let c = e.counts(params.pi);
        let rho = params.rho[e.stratum];
        Ok(rho * c.n1_hat / (c.n0_hat + rho * c.n1_hat))
    }

    pub fn loglik(&self, params: &ModelParams) -> Result<f64> {
        self.check_params(params)?;
        let mut acc = CompensatedSum::default();
        for e in &self.events {
            acc.add(Self::event_log_term(
                e,
                e.counts(params.pi),
                params.rho[e.stratum],
            ));
        }
        Ok(acc.value())
    }

    /// Log contribution of each labeled event, in time order.
    pub fn per_event_terms(&self, params: &ModelParams) -> Result<Vec<f64>> {
        self.check_params(params)?;
        Ok(self
            .events
            .iter()
            .map(|e| Self::event_log_term(e, e.counts(params.pi), params.rho[e.stratum]))
            .collect())
    }

    /// Log-likelihood, score and Hessian in one pass.
    pub fn evaluate(&self, params: &ModelParams) -> Result<LikelihoodEvaluation> {
        self.check_params(params)?;
        let k = self.n_strata();
        let mut ll = CompensatedSum::default();
        let mut u_pi = CompensatedSum::default();
        let mut u_rho = vec![CompensatedSum::default(); k];
        let mut h_pp = CompensatedSum::default();
        let mut h_pr = vec![CompensatedSum::default(); k];
        let mut h_rr = vec![CompensatedSum::default(); k];

        for e in &self.events {
            let c = e.counts(params.pi);
            let (n0, n1) = (c.n0_hat, c.n1_hat);
            let rho = params.rho[e.stratum];
            let m = e.at_risk_total;
            let denom = n0 + rho * n1;
            ll.add(Self::event_log_term(e, c, rho));

            // dN̂₁/dπ = m, dN̂₀/dπ = −m, d(denom)/dπ = m (ρ − 1).
            let slope = m * (rho - 1.0) / denom;
            let (own_score, own_curv) = if e.interest {
                (m / n1, -(m * m) / (n1 * n1))
            } else {
                (-m / n0, -(m * m) / (n0 * n0))
            };
            u_pi.add(own_score - slope);
            h_pp.add(own_curv + slope * slope);

            let x = if e.interest { 1.0 } else { 0.0 };
            u_rho[e.stratum].add(x / rho - n1 / denom);
            h_pr[e.stratum].add(-m * (n0 + n1) / (denom * denom));
            h_rr[e.stratum].add(-x / (rho * rho) + (n1 * n1) / (denom * denom));
        }

        let mut score = Vec::with_capacity(k + 1);
        score.push(u_pi.value());
        score.extend(u_rho.iter().map(CompensatedSum::value));
        Ok(LikelihoodEvaluation {
            loglik: ll.value(),
            score,
            hessian: ArrowMatrix {
                pi_pi: h_pp.value(),
                pi_rho: h_pr.iter().map(CompensatedSum::value).collect(),
                rho_rho: h_rr.iter().map(CompensatedSum::value).collect(),
            },
            per_event_terms: None,
        })
    }

    /// Log-likelihood, score and curvature of one stratum in `b = log ρ_k` at fixed `π`.
    fn stratum_in_log_rho(&self, k: usize, pi: f64, b: f64) -> (f64, f64, f64) {
        let rho = b.exp();
        let (mut ll, mut g, mut h) = (
            CompensatedSum::default(),
            CompensatedSum::default(),
            CompensatedSum::default(),
        );
        for &i in &self.by_stratum[k] {
            let e = &self.events[i];
            let c = e.counts(pi);
            let denom = c.n0_hat + rho * c.n1_hat;
            let share = rho * c.n1_hat / denom;
            ll.add(Self::event_log_term(e, c, rho));
            g.add(if e.interest { 1.0 } else { 0.0 } - share);
            h.add(-share * (1.0 - share));
        }
        (ll.value(), g.value(), h.value())
    }

    /// Maximise over each `ρ_k` with `π` held fixed.
    ///
    /// Each stratum is a separate concave problem in `log ρ_k`. A stratum
    /// whose labeled events all carry the same label has no finite maximiser
    /// and is reported as singular.
    pub fn maximize_rho(&self, pi: f64, start: &[f64]) -> Result<Vec<f64>> {
        self.check(pi)?;
        (0..self.n_strata())
            .map(|k| {
                let events = &self.by_stratum[k];
                let ones = events.iter().filter(|&&i| self.events[i].interest).count();
                if ones == 0 || ones == events.len() {
                    return Err(Error::SingularInformation { k: Some(k) });
                }
                let mut b = start.get(k).copied().unwrap_or(1.0).ln();
                let (mut ll, mut g, mut h) = self.stratum_in_log_rho(k, pi, b);
                for _ in 0..200 {
                    if g.abs() <= 1e-12 * (1.0 + events.len() as f64) {
                        break;
                    }
                    let mut step = (-g / h).clamp(-4.0, 4.0);
                    let mut moved = false;
                    for _ in 0..60 {
                        let (ll_t, g_t, h_t) = self.stratum_in_log_rho(k, pi, b + step);
                        if ll_t >= ll - 1e-12 * ll.abs().max(1.0) && ll_t.is_finite() {
                            b += step;
                            (ll, g, h) = (ll_t, g_t, h_t);
                            moved = true;
                            break;
                        }
                        step *= 0.5;
                    }
                    if !moved {
                        break;
                    }
                }
                Ok(b.exp())
            })
            .collect()
    }
}

/// Risk counts just before the `i`-th timed record (0-based, time order).
///
/// Fails as infeasible when either count is negative, or when the record is
/// labeled and the count for its own label is not positive.
pub fn risk_counts(d: &SurveyDataset, pi: f64, upto_event_index: usize) -> Result<RiskCounts> {
    let n = d.population_size as f64;
    let (mut unlabeled, mut ones, mut zeros) = (0.0, 0.0, 0.0);
    let mut target = None;
    for (idx, (_, r)) in d.timed().enumerate() {
        if idx == upto_event_index {
            target = Some(r);
            break;
        }
        match r.observed_label() {
            Some(Label::Interest) => ones += 1.0,
            Some(Label::Reference) => zeros += 1.0,
            None => unlabeled += 1.0,
        }
    }
    let r = target
        .ok_or_else(|| Error::Validation(format!("event index {upto_event_index} out of range")))?;
    let at_risk = n - unlabeled;
    let c = RiskCounts {
        n0_hat: at_risk * (1.0 - pi) - zeros,
        n1_hat: at_risk * pi - ones,
    };
    let ok = match r.observed_label() {
        Some(Label::Interest) => c.n1_hat > 0.0 && c.n0_hat >= 0.0,
        Some(Label::Reference) => c.n0_hat > 0.0 && c.n1_hat >= 0.0,
        None => c.n0_hat >= 0.0 && c.n1_hat >= 0.0,
    };
    if ok {
        Ok(c)
    } else {
        Err(Error::Infeasible {
            event_index: upto_event_index,
            n0_hat: c.n0_hat,
            n1_hat: c.n1_hat,
        })
    }
}

/// Pr(label = interest) for the `i`-th timed record, which must be labeled.
pub fn conditional_arrival_prob(
    d: &SurveyDataset,
    partition: &HazardPartition,
    params: &ModelParams,
    event_index: usize,
) -> Result<f64> {
    let (t, r) = d
        .timed()
        .nth(event_index)
        .ok_or_else(|| Error::Validation(format!("event index {event_index} out of range")))?;
    if r.observed_label().is_none() {
        return Err(Error::Validation(format!(
            "event {event_index} has no recorded label"
        )));
    }
    let c = risk_counts(d, params.pi, event_index)?;
    let rho = *params
        .rho
        .get(partition.stratum_of(t.days()))
        .ok_or_else(|| Error::Validation("too few hazard ratios for partition".to_string()))?;
    Ok(rho * c.n1_hat / (c.n0_hat + rho * c.n1_hat))
}

pub fn log_partial_likelihood(
    d: &SurveyDataset,
    partition: &HazardPartition,
    params: &ModelParams,
) -> Result<f64> {
    PartialLikelihood::new(d, partition)?.loglik(params)
}

/// `(U_π, U_ρ1 … U_ρK)`.
pub fn score(
    d: &SurveyDataset,
    partition: &HazardPartition,
    params: &ModelParams,
) -> Result<Vec<f64>> {
    Ok(PartialLikelihood::new(d, partition)?
        .evaluate(params)?
        .score)
}

/// Dense symmetric Hessian ordered `(π, ρ₁ … ρ_K)`.
pub fn hessian(
    d: &SurveyDataset,
    partition: &HazardPartition,
    params: &ModelParams,
) -> Result<DMatrix<f64>> {
    Ok(PartialLikelihood::new(d, partition)?
        .evaluate(params)?
        .hessian
        .to_dense())
}

/// Observed profile information for `π` from an already computed Hessian.
pub fn information_from_hessian(h: &ArrowMatrix) -> Result<f64> {
    h.negated()
        .schur_complement()
        .map_err(|k| Error::SingularInformation { k: Some(k) })
}

/// Observed information for `π` after profiling out the hazard ratios:
/// the Schur complement of the negated Hessian. Its inverse approximates
/// the variance of `π̂`.
pub fn profile_information(
    d: &SurveyDataset,
    partition: &HazardPartition,
    params: &ModelParams,
) -> Result<f64> {
    let ev = PartialLikelihood::new(d, partition)?.evaluate(params)?;
    information_from_hessian(&ev.hessian)
}
