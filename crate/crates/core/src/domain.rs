//! Survey paradata: response records, datasets, calendars.
//!
//! Time is measured in (fractional) days since the survey opened. Integer
//! day `d` covers `[d, d + 1)`. Calendars map day indices to a day class so
//! that hazard partitions can pool weekends and holidays without any
//! date arithmetic in the kernel.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A nonnegative, finite time in days since the survey opened.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TimePoint(f64);

impl TimePoint {
    pub fn new(days: f64) -> Result<Self> {
        if days.is_finite() && days >= 0.0 {
            Ok(Self(days))
        } else {
            Err(Error::Validation(format!(
                "time must be finite and nonnegative, got {days}"
            )))
        }
    }

    pub fn days(self) -> f64 {
        self.0
    }

    /// Integer day containing this time.
    pub fn day(self) -> u32 {
        self.0.floor() as u32
    }
}

impl TryFrom<f64> for TimePoint {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<TimePoint> for f64 {
    fn from(t: TimePoint) -> f64 {
        t.0
    }
}

/// Binary group membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    /// `X = 0`.
    Reference,
    /// `X = 1`, the group whose population share is estimated.
    Interest,
}

impl Label {
    pub fn from_indicator(x: u8) -> Option<Self> {
        match x {
            0 => Some(Label::Reference),
            1 => Some(Label::Interest),
            _ => None,
        }
    }

    pub fn indicator(self) -> u8 {
        match self {
            Label::Reference => 0,
            Label::Interest => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Label::Reference => Label::Interest,
            Label::Interest => Label::Reference,
        }
    }
}

/// One individual's paradata.
///
/// * `observed` with a time and a label: a labeled response.
/// * time without `observed`: item nonresponse (responded, skipped the item).
/// * neither: unit nonresponse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub time: Option<TimePoint>,
    pub label: Option<Label>,
    pub observed: bool,
}

impl ResponseRecord {
    pub fn labeled(time: TimePoint, label: Label) -> Self {
        Self {
            time: Some(time),
            label: Some(label),
            observed: true,
        }
    }

    pub fn item_nonresponse(time: TimePoint) -> Self {
        Self {
            time: Some(time),
            label: None,
            observed: false,
        }
    }

    pub fn unit_nonresponse() -> Self {
        Self {
            time: None,
            label: None,
            observed: false,
        }
    }

    /// The label if this record contributes to the likelihood.
    pub fn observed_label(&self) -> Option<Label> {
        if self.observed {
            self.label
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayOfWeek {
    Monday,
    Tuesday,
    Wednesday,
    Thursday,
    Friday,
    Saturday,
    Sunday,
}

impl DayOfWeek {
    const ALL: [DayOfWeek; 7] = [
        DayOfWeek::Monday,
        DayOfWeek::Tuesday,
        DayOfWeek::Wednesday,
        DayOfWeek::Thursday,
        DayOfWeek::Friday,
        DayOfWeek::Saturday,
        DayOfWeek::Sunday,
    ];

    fn index(self) -> usize {
        Self::ALL.iter().position(|&d| d == self).unwrap()
    }

    pub fn plus_days(self, days: u32) -> Self {
        Self::ALL[(self.index() + days as usize) % 7]
    }
}

/// Tag attached to each calendar day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayClass {
    Monday,
    Tuesday,
    Wednesday,
    Thursday,
    Friday,
    Weekend,
    Holiday,
}

impl DayClass {
    pub fn is_weekday(self) -> bool {
        !matches!(self, DayClass::Weekend | DayClass::Holiday)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DayClass::Monday => "monday",
            DayClass::Tuesday => "tuesday",
            DayClass::Wednesday => "wednesday",
            DayClass::Thursday => "thursday",
            DayClass::Friday => "friday",
            DayClass::Weekend => "weekend",
            DayClass::Holiday => "holiday",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.trim().to_ascii_lowercase().as_str() {
            "monday" | "mon" => DayClass::Monday,
            "tuesday" | "tue" => DayClass::Tuesday,
            "wednesday" | "wed" => DayClass::Wednesday,
            "thursday" | "thu" => DayClass::Thursday,
            "friday" | "fri" => DayClass::Friday,
            "weekend" | "saturday" | "sat" | "sunday" | "sun" => DayClass::Weekend,
            "holiday" => DayClass::Holiday,
            _ => return None,
        })
    }
}

impl From<DayOfWeek> for DayClass {
    fn from(d: DayOfWeek) -> Self {
        match d {
            DayOfWeek::Monday => DayClass::Monday,
            DayOfWeek::Tuesday => DayClass::Tuesday,
            DayOfWeek::Wednesday => DayClass::Wednesday,
            DayOfWeek::Thursday => DayClass::Thursday,
            DayOfWeek::Friday => DayClass::Friday,
            DayOfWeek::Saturday | DayOfWeek::Sunday => DayClass::Weekend,
        }
    }
}

impl fmt::Display for DayClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Integer day index to day class.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Calendar {
    days: BTreeMap<u32, DayClass>,
}

impl Calendar {
    pub fn new(days: BTreeMap<u32, DayClass>) -> Self {
        Self { days }
    }

    /// Consecutive days starting on `start`, with the listed day indices
    /// marked as holidays.
    pub fn weekly(start: DayOfWeek, n_days: u32, holidays: &[u32]) -> Self {
        let days = (0..n_days)
            .map(|d| {
                let class = if holidays.contains(&d) {
                    DayClass::Holiday
                } else {
                    start.plus_days(d).into()
                };
                (d, class)
            })
            .collect();
        Self { days }
    }

    pub fn class_of(&self, day: u32) -> Option<DayClass> {
        self.days.get(&day).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, DayClass)> + '_ {
        self.days.iter().map(|(&d, &c)| (d, c))
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }
}

/// All paradata for one survey.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyDataset {
    pub records: Vec<ResponseRecord>,
    pub population_size: u64,
    pub censor_time: TimePoint,
    pub calendar: Option<Calendar>,
}

impl SurveyDataset {
    pub fn new(records: Vec<ResponseRecord>, population_size: u64, censor_time: TimePoint) -> Self {
        Self {
            records,
            population_size,
            censor_time,
            calendar: None,
        }
    }

    pub fn with_calendar(mut self, calendar: Calendar) -> Self {
        self.calendar = Some(calendar);
        self
    }

    /// Number of respondents (records with a time).
    pub fn n_responded(&self) -> usize {
        self.records.iter().filter(|r| r.time.is_some()).count()
    }

    pub fn n_labeled(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.time.is_some() && r.observed_label().is_some())
            .count()
    }

    /// Records with a time, in stored order.
    pub fn timed(&self) -> impl Iterator<Item = (TimePoint, &ResponseRecord)> {
        self.records.iter().filter_map(|r| r.time.map(|t| (t, r)))
    }

    /// Number of calendar days in `[0, censor_time)`.
    pub fn n_days(&self) -> u32 {
        self.censor_time.days().ceil() as u32
    }

    /// The same dataset with every label flipped.
    pub fn relabeled(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.records {
            r.label = r.label.map(Label::flipped);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    TimeAtOrAfterCensor,
    LabeledWithoutLabel,
    LabeledWithoutTime,
    LabelWithoutFlag,
    TooManyRespondents,
    NonPositiveCensorTime,
    UnsortedTimes,
    TiedTimes,
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub record: Option<usize>,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.record {
            Some(i) => write!(f, "record {i}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Check every record and dataset invariant. Empty output means valid.
pub fn validate_dataset(d: &SurveyDataset) -> Vec<Finding> {
    let mut findings = Vec::new();
    let tau = d.censor_time.days();
    let mut push = |kind, record, message: &str| {
        findings.push(Finding {
            kind,
            record,
            message: message.to_string(),
        })
    };

    if tau <= 0.0 {
        push(
            FindingKind::NonPositiveCensorTime,
            None,
            "censor_time must be positive",
        );
    }

    let mut prev: Option<f64> = None;
    for (i, r) in d.records.iter().enumerate() {
        if r.observed && r.label.is_none() {
            push(
                FindingKind::LabeledWithoutLabel,
                Some(i),
                "labeled flag without label",
            );
        }
        if r.observed && r.time.is_none() {
            push(
                FindingKind::LabeledWithoutTime,
                Some(i),
                "labeled flag without response time",
            );
        }
        if !r.observed && r.label.is_some() {
            push(
                FindingKind::LabelWithoutFlag,
                Some(i),
                "label present on an unlabeled record",
            );
        }
        if let Some(t) = r.time {
            let t = t.days();
            if t >= tau {
                push(
                    FindingKind::TimeAtOrAfterCensor,
                    Some(i),
                    "time ≥ censor_time",
                );
            }
            match prev {
                Some(p) if t < p => push(
                    FindingKind::UnsortedTimes,
                    Some(i),
                    "times are not in ascending order",
                ),
                Some(p) if t == p => push(
                    FindingKind::TiedTimes,
                    Some(i),
                    "time ties with the previous record",
                ),
                _ => {}
            }
            prev = Some(prev.map_or(t, |p| p.max(t)));
        }
    }

    let n = d.n_responded() as u64;
    if n > d.population_size {
        push(
            FindingKind::TooManyRespondents,
            None,
            &format!(
                "{n} respondents exceed population size {}",
                d.population_size
            ),
        );
    }
    findings
}

/// Sort records by time and separate tied times.
///
/// Each run of identical times is put in a seeded random order and spread
/// over `[t, t + gap)`, where `gap` stops short of the next recorded time,
/// the end of the day and the censor time. Day membership of every record is
/// preserved. Records without a time are moved to the end.
pub fn break_ties(d: &SurveyDataset, seed: u64) -> SurveyDataset {
    let mut timed: Vec<ResponseRecord> = d
        .records
        .iter()
        .filter(|r| r.time.is_some())
        .copied()
        .collect();
    let untimed = d.records.iter().filter(|r| r.time.is_none()).copied();
    let time_of = |r: &ResponseRecord| r.time.map(TimePoint::days).unwrap();
    timed.sort_by(|a, b| time_of(a).total_cmp(&time_of(b)));

    let tau = d.censor_time.days();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start = 0;
    while start < timed.len() {
        let t = time_of(&timed[start]);
        let mut end = start + 1;
        while end < timed.len() && time_of(&timed[end]) == t {
            end += 1;
        }
        let m = end - start;
        if m > 1 {
            let next = timed.get(end).map(time_of).unwrap_or(f64::INFINITY);
            let mut upper = next.min(t.floor() + 1.0);
            if tau > t {
                upper = upper.min(tau);
            }
            let gap = upper - t;
            let spacing = gap / m as f64;
            timed[start..end].shuffle(&mut rng);
            let mut last = t;
            for (j, rec) in timed[start..end].iter_mut().enumerate() {
                let mut s = t + spacing * j as f64;
                if j > 0 && s <= last {
                    s = last.next_up();
                }
                last = s;
                rec.time = Some(TimePoint(s));
            }
        }
        start = end;
    }

    timed.extend(untimed);
    SurveyDataset {
        records: timed,
        population_size: d.population_size,
        censor_time: d.censor_time,
        calendar: d.calendar.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tp(t: f64) -> TimePoint {
        TimePoint::new(t).unwrap()
    }

    #[test]
    fn time_point_rejects_bad_values() {
        assert!(TimePoint::new(-1.0).is_err());
        assert!(TimePoint::new(f64::NAN).is_err());
        assert!(TimePoint::new(f64::INFINITY).is_err());
        assert_eq!(tp(4.7).day(), 4);
    }

    #[test]
    fn finding_for_time_beyond_censor() {
        let d = SurveyDataset::new(
            vec![ResponseRecord::labeled(tp(43.0), Label::Interest)],
            10,
            tp(42.0),
        );
        let f = validate_dataset(&d);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].kind, FindingKind::TimeAtOrAfterCensor);
        assert_eq!(f[0].record, Some(0));
        assert_eq!(f[0].message, "time ≥ censor_time");
    }

    #[test]
    fn finding_for_flag_without_label() {
        let rec = ResponseRecord {
            time: Some(tp(1.0)),
            label: None,
            observed: true,
        };
        let d = SurveyDataset::new(vec![rec], 10, tp(42.0));
        let f = validate_dataset(&d);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].kind, FindingKind::LabeledWithoutLabel);
        assert_eq!(f[0].message, "labeled flag without label");
    }

    #[test]
    fn finding_for_label_on_item_nonresponse_and_overfull_sample() {
        let rec = ResponseRecord {
            time: Some(tp(1.0)),
            label: Some(Label::Reference),
            observed: false,
        };
        let d = SurveyDataset::new(
            vec![rec, ResponseRecord::item_nonresponse(tp(2.0))],
            1,
            tp(5.0),
        );
        let kinds: Vec<_> = validate_dataset(&d).into_iter().map(|f| f.kind).collect();
        assert_eq!(
            kinds,
            vec![
                FindingKind::LabelWithoutFlag,
                FindingKind::TooManyRespondents
            ]
        );
    }

    #[test]
    fn unit_nonresponse_records_are_valid() {
        let d = SurveyDataset::new(
            vec![
                ResponseRecord::labeled(tp(1.0), Label::Reference),
                ResponseRecord::unit_nonresponse(),
            ],
            2,
            tp(5.0),
        );
        assert!(validate_dataset(&d).is_empty());
    }

    #[test]
    fn ties_are_reported() {
        let d = SurveyDataset::new(
            vec![
                ResponseRecord::labeled(tp(1.0), Label::Reference),
                ResponseRecord::labeled(tp(1.0), Label::Interest),
            ],
            5,
            tp(5.0),
        );
        let f = validate_dataset(&d);
        assert_eq!(f[0].kind, FindingKind::TiedTimes);
        assert!(validate_dataset(&break_ties(&d, 1)).is_empty());
    }

    #[test]
    fn three_way_tie_spreads_within_day() {
        let d = SurveyDataset::new(
            vec![
                ResponseRecord::labeled(tp(4.0), Label::Reference),
                ResponseRecord::labeled(tp(4.0), Label::Interest),
                ResponseRecord::item_nonresponse(tp(4.0)),
            ],
            10,
            tp(42.0),
        );
        let out = break_ties(&d, 7);
        let times: Vec<f64> = out.records.iter().map(|r| r.time.unwrap().days()).collect();
        assert_eq!(times[0], 4.0);
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        assert!(times.iter().all(|&t| (4.0..5.0).contains(&t)));
        assert!(out.records.iter().all(|r| r.time.unwrap().day() == 4));
    }

    #[test]
    fn tie_gap_stops_before_next_time() {
        let d = SurveyDataset::new(
            vec![
                ResponseRecord::labeled(tp(4.0), Label::Reference),
                ResponseRecord::labeled(tp(4.0), Label::Interest),
                ResponseRecord::labeled(tp(4.01), Label::Interest),
            ],
            10,
            tp(42.0),
        );
        let out = break_ties(&d, 3);
        let times: Vec<f64> = out.records.iter().map(|r| r.time.unwrap().days()).collect();
        assert!(times[1] < 4.01);
        assert_eq!(times[2], 4.01);
    }

    #[test]
    fn no_ties_is_identity() {
        let d = SurveyDataset::new(
            vec![
                ResponseRecord::labeled(tp(0.5), Label::Reference),
                ResponseRecord::item_nonresponse(tp(1.5)),
                ResponseRecord::labeled(tp(2.5), Label::Interest),
            ],
            10,
            tp(42.0),
        );
        assert_eq!(break_ties(&d, 99), d);
    }

    #[test]
    fn weekly_calendar_marks_weekends_and_holidays() {
        let cal = Calendar::weekly(DayOfWeek::Tuesday, 14, &[6]);
        assert_eq!(cal.class_of(0), Some(DayClass::Tuesday));
        assert_eq!(cal.class_of(4), Some(DayClass::Weekend));
        assert_eq!(cal.class_of(6), Some(DayClass::Holiday));
        assert_eq!(cal.class_of(13), Some(DayClass::Monday));
        assert_eq!(cal.class_of(14), None);
    }
}
