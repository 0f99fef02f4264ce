//! Piecewise-constant hazard-ratio partitions.
//!
//! A partition cuts `[0, τ)` into contiguous segments and maps each segment
//! to one of `K` strata. A stratum is the set on which the hazard ratio is
//! held constant; it need not be contiguous (all weekends can share one).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{Calendar, DayClass, SurveyDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardPartition {
    segment_starts: Vec<f64>,
    segment_stratum: Vec<usize>,
    names: Vec<String>,
    censor_time: f64,
}

impl HazardPartition {
    /// One stratum covering `[0, τ)`.
    pub fn constant(censor_time: f64) -> Self {
        Self {
            segment_starts: vec![0.0],
            segment_stratum: vec![0],
            names: vec!["all".to_string()],
            censor_time,
        }
    }

    /// Contiguous intervals split at the given interior cut points.
    pub fn from_breakpoints(cuts: &[f64], censor_time: f64) -> Result<Self> {
        let mut starts = vec![0.0];
        for &c in cuts {
            if c == 0.0 && starts.len() == 1 {
                continue;
            }
            let last = *starts.last().unwrap();
            if !(c > last && c < censor_time) {
                return Err(Error::Validation(format!(
                    "breakpoints must be increasing within (0, {censor_time}), got {c}"
                )));
            }
            starts.push(c);
        }
        let names = starts
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let end = starts.get(k + 1).copied().unwrap_or(censor_time);
                format!("[{s}, {end})")
            })
            .collect();
        Ok(Self {
            segment_stratum: (0..starts.len()).collect(),
            segment_starts: starts,
            names,
            censor_time,
        })
    }

    /// One segment per integer day; `day_strata[d]` is the stratum of day `d`.
    pub fn from_day_strata(
        day_strata: &[usize],
        names: Vec<String>,
        censor_time: f64,
    ) -> Result<Self> {
        let k = names.len();
        if let Some(&bad) = day_strata.iter().find(|&&s| s >= k) {
            return Err(Error::Validation(format!(
                "day stratum {bad} out of range for {k} strata"
            )));
        }
        let mut seen = vec![false; k];
        for &s in day_strata {
            seen[s] = true;
        }
        if let Some(empty) = seen.iter().position(|&s| !s) {
            return Err(Error::EmptyInterval { k: empty });
        }
        Ok(Self {
            segment_starts: (0..day_strata.len()).map(|d| d as f64).collect(),
            segment_stratum: day_strata.to_vec(),
            names,
            censor_time,
        })
    }

    pub fn n_strata(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn censor_time(&self) -> f64 {
        self.censor_time
    }

    /// Contiguous `[start, end)` pieces with their stratum index.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        self.segment_starts.iter().enumerate().map(move |(i, &s)| {
            let end = self
                .segment_starts
                .get(i + 1)
                .copied()
                .unwrap_or(self.censor_time);
            (s, end, self.segment_stratum[i])
        })
    }

    /// Stratum index of time `t`. Times past the last segment start map to
    /// the last segment.
    pub fn stratum_of(&self, t: f64) -> usize {
        let seg = self.segment_starts.partition_point(|&s| s <= t);
        self.segment_stratum[seg.saturating_sub(1)]
    }

    /// Labeled events per stratum.
    pub fn labeled_counts(&self, d: &SurveyDataset) -> Vec<usize> {
        let mut counts = vec![0; self.n_strata()];
        for (t, r) in d.timed() {
            if r.observed_label().is_some() {
                counts[self.stratum_of(t.days())] += 1;
            }
        }
        counts
    }

    /// Every stratum must hold at least one labeled event.
    pub fn check_identified(&self, d: &SurveyDataset) -> Result<()> {
        match self.labeled_counts(d).iter().position(|&c| c == 0) {
            Some(k) => Err(Error::EmptyInterval { k }),
            None => Ok(()),
        }
    }
}

/// How to build a partition from the censor time and a calendar.
#[derive(Debug, Clone, PartialEq)]
pub enum PartitionSpec {
    /// `ρ(t) = ρ`.
    Constant,
    /// Monday through Friday each get a stratum, plus one for weekends and holidays.
    WeekdayClasses,
    /// Consecutive blocks of `k` weekdays; weekends and holidays share one extra stratum.
    EveryKWeekdays(u32),
    /// Contiguous intervals cut at these times.
    Breakpoints(Vec<f64>),
}

impl PartitionSpec {
    pub fn needs_calendar(&self) -> bool {
        matches!(
            self,
            PartitionSpec::WeekdayClasses | PartitionSpec::EveryKWeekdays(_)
        )
    }
}

impl fmt::Display for PartitionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionSpec::Constant => f.write_str("constant"),
            PartitionSpec::WeekdayClasses => f.write_str("weekday-classes"),
            PartitionSpec::EveryKWeekdays(k) => write!(f, "every-{k}-weekdays"),
            PartitionSpec::Breakpoints(b) => {
                let parts: Vec<String> = b.iter().map(|x| x.to_string()).collect();
                write!(f, "breakpoints:{}", parts.join(","))
            }
        }
    }
}

impl FromStr for PartitionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Validation(format!("unrecognised partition `{s}`"));
        match s {
            "constant" => return Ok(PartitionSpec::Constant),
            "weekday-classes" => return Ok(PartitionSpec::WeekdayClasses),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("breakpoints:") {
            let cuts = rest
                .split(',')
                .filter(|p| !p.trim().is_empty())
                .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            return Ok(PartitionSpec::Breakpoints(cuts));
        }
        if let Some(k) = s
            .strip_prefix("every-")
            .and_then(|r| r.strip_suffix("-weekdays"))
        {
            let k: u32 = k.parse().map_err(|_| bad())?;
            if k == 0 {
                return Err(bad());
            }
            return Ok(PartitionSpec::EveryKWeekdays(k));
        }
        Err(bad())
    }
}

impl Serialize for PartitionSpec {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PartitionSpec {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn day_classes(censor_time: f64, calendar: Option<&Calendar>) -> Result<Vec<DayClass>> {
    let calendar =
        calendar.ok_or_else(|| Error::Validation("this partition needs a calendar".to_string()))?;
    let n_days = censor_time.ceil() as u32;
    (0..n_days)
        .map(|d| {
            calendar
                .class_of(d)
                .ok_or_else(|| Error::Validation(format!("calendar has no entry for day {d}")))
        })
        .collect()
}

/// Materialise a partition over `[0, τ)`.
pub fn resolve_partition(
    spec: &PartitionSpec,
    censor_time: f64,
    calendar: Option<&Calendar>,
) -> Result<HazardPartition> {
    match spec {
        PartitionSpec::Constant => Ok(HazardPartition::constant(censor_time)),
        PartitionSpec::Breakpoints(cuts) => HazardPartition::from_breakpoints(cuts, censor_time),
        PartitionSpec::WeekdayClasses => {
            let classes = day_classes(censor_time, calendar)?;
            let order = [
                DayClass::Monday,
                DayClass::Tuesday,
                DayClass::Wednesday,
                DayClass::Thursday,
                DayClass::Friday,
            ];
            let strata: Vec<usize> = classes
                .iter()
                .map(|c| order.iter().position(|o| o == c).unwrap_or(order.len()))
                .collect();
            let mut names: Vec<String> = order.iter().map(|c| c.to_string()).collect();
            names.push("weekend/holiday".to_string());
            HazardPartition::from_day_strata(&strata, names, censor_time)
        }
        PartitionSpec::EveryKWeekdays(k) => {
            let classes = day_classes(censor_time, calendar)?;
            let k = *k as usize;
            let n_weekdays = classes.iter().filter(|c| c.is_weekday()).count();
            let n_blocks = n_weekdays.div_ceil(k);
            let has_off_days = classes.iter().any(|c| !c.is_weekday());
            let mut seen = 0;
            let strata: Vec<usize> = classes
                .iter()
                .map(|c| {
                    if c.is_weekday() {
                        seen += 1;
                        (seen - 1) / k
                    } else {
                        n_blocks
                    }
                })
                .collect();
            let mut names: Vec<String> = (0..n_blocks)
                .map(|b| {
                    let lo = b * k + 1;
                    let hi = ((b + 1) * k).min(n_weekdays);
                    format!("weekdays {lo}-{hi}")
                })
                .collect();
            if has_off_days {
                names.push("weekend/holiday".to_string());
            }
            HazardPartition::from_day_strata(&strata, names, censor_time)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DayOfWeek;

    #[test]
    fn constant_covers_window() {
        let p = resolve_partition(&PartitionSpec::Constant, 42.0, None).unwrap();
        assert_eq!(p.n_strata(), 1);
        let segs: Vec<_> = p.segments().collect();
        assert_eq!(segs, vec![(0.0, 42.0, 0)]);
        assert_eq!(p.stratum_of(41.99), 0);
    }

    #[test]
    fn every_ten_weekdays_over_six_weeks_with_two_holidays() {
        // 42 days from a Tuesday: 30 weekdays, 2 of them holidays -> 28 working
        // days -> blocks of 10, 10, 8 plus the off-day stratum.
        let cal = Calendar::weekly(DayOfWeek::Tuesday, 42, &[20, 34]);
        let p = resolve_partition(&PartitionSpec::EveryKWeekdays(10), 42.0, Some(&cal)).unwrap();
        assert_eq!(p.n_strata(), 4);
        assert_eq!(p.stratum_of(0.5), 0);
        assert_eq!(p.stratum_of(20.5), 3);
        assert_eq!(p.stratum_of(4.5), 3); // Saturday
        assert_eq!(p.stratum_of(41.5), 2);
    }

    #[test]
    fn weekday_classes_has_six_strata() {
        let cal = Calendar::weekly(DayOfWeek::Tuesday, 42, &[20, 34]);
        let p = resolve_partition(&PartitionSpec::WeekdayClasses, 42.0, Some(&cal)).unwrap();
        assert_eq!(p.n_strata(), 6);
        assert_eq!(p.stratum_of(0.1), 1); // Tuesday
        assert_eq!(p.stratum_of(6.1), 0); // Monday
        assert_eq!(p.stratum_of(20.1), 5); // holiday Monday
    }

    #[test]
    fn weekday_classes_short_window_is_empty_interval() {
        let cal = Calendar::weekly(DayOfWeek::Tuesday, 3, &[]);
        let err = resolve_partition(&PartitionSpec::WeekdayClasses, 3.0, Some(&cal)).unwrap_err();
        assert_eq!(err, Error::EmptyInterval { k: 0 });
    }

    #[test]
    fn calendar_specs_require_calendar() {
        assert!(resolve_partition(&PartitionSpec::WeekdayClasses, 42.0, None).is_err());
        let short = Calendar::weekly(DayOfWeek::Monday, 10, &[]);
        assert!(resolve_partition(&PartitionSpec::EveryKWeekdays(5), 42.0, Some(&short)).is_err());
    }

    #[test]
    fn breakpoints_and_shorthand() {
        let spec: PartitionSpec = "breakpoints:14,28".parse().unwrap();
        let p = resolve_partition(&spec, 42.0, None).unwrap();
        assert_eq!(p.n_strata(), 3);
        assert_eq!(p.stratum_of(13.99), 0);
        assert_eq!(p.stratum_of(14.0), 1);
        assert_eq!(p.stratum_of(30.0), 2);
        assert!("breakpoints:28,14".parse::<PartitionSpec>().is_ok());
        assert!(resolve_partition(&"breakpoints:28,14".parse().unwrap(), 42.0, None).is_err());
        for s in [
            "constant",
            "weekday-classes",
            "every-15-weekdays",
            "breakpoints:7,21.5",
        ] {
            assert_eq!(s.parse::<PartitionSpec>().unwrap().to_string(), s);
        }
        assert!("every-0-weekdays".parse::<PartitionSpec>().is_err());
        assert!("monthly".parse::<PartitionSpec>().is_err());
    }
}
