//! Estimating a population proportion from survey response times.
//!
//! When the surveyed characteristic itself drives participation, the
//! respondent mix drifts over the fieldwork period: the group that is keener
//! to respond is depleted first. Modelling arrival order with a partial
//! likelihood and a slowly varying hazard ratio between the two groups
//! identifies the population share `π` from that drift.
//!
//! Modules:
//! * [`domain`]: records, datasets, calendars, validation and tie breaking.
//! * [`partition`]: piecewise-constant hazard-ratio partitions.
//! * [`likelihood`]: risk counts, log partial likelihood, score, Hessian, information.
//! * [`fit`]: Newton maximisation, standard errors, weak-identification check, profile curve.
//! * [`simulator`]: synthetic surveys with group-specific piecewise-exponential hazards.
//! * [`comparators`]: sample proportion, poststratification, extrapolation, daily diagnostics.
//! * [`study`]: Monte-Carlo coverage study.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod comparators;
pub mod domain;
pub mod error;
pub mod fit;
pub mod likelihood;
pub mod partition;
pub mod simulator;
pub mod study;

pub use domain::{
    break_ties, validate_dataset, Calendar, DayClass, DayOfWeek, Finding, FindingKind, Label,
    ResponseRecord, SurveyDataset, TimePoint,
};
pub use error::{Error, Result};
pub use fit::{fit, profile_curve, weak_identification_check, FitConfig, FitResult, StartValue};
pub use likelihood::{
    conditional_arrival_prob, hessian, log_partial_likelihood, profile_information, risk_counts,
    score, LikelihoodEvaluation, ModelParams, PartialLikelihood, RiskCounts,
};
pub use partition::{resolve_partition, HazardPartition, PartitionSpec};
