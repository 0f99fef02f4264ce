//! File formats.
//!
//! * Responses: CSV with a header containing `time` (days since launch) and
//!   `label` (`1`, `0`, or empty for a missing answer). One row per
//!   respondent; nonrespondents are implied by the population size.
//! * Calendar: CSV with `day` (integer index) and `class`
//!   (`monday` … `friday`, `weekend`, `holiday`).

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use arrival_core::comparators::TidyRow;
use arrival_core::{Calendar, DayClass, Label, ResponseRecord, SurveyDataset, TimePoint};
use serde::Serialize;

use crate::error::{CliError, Result};

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Row {
            path: path.to_path_buf(),
            row: 1,
            message: format!("missing column `{name}`"),
        })
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let row = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        kind => CliError::Row {
            path: path.to_path_buf(),
            row,
            message: format!("{kind:?}"),
        },
    }
}

/// Responses as a dataset over a population of `population_size`,
/// observed on `[0, censor_time)`.
pub fn read_responses(
    path: &Path,
    population_size: u64,
    censor_time: f64,
) -> Result<SurveyDataset> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let (ti, li) = (
        column(&headers, "time", path)?,
        column(&headers, "label", path)?,
    );
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| CliError::Row {
            path: path.to_path_buf(),
            row,
            message,
        };
        let raw_t = rec.get(ti).unwrap_or("");
        let time = raw_t
            .parse::<f64>()
            .ok()
            .and_then(|t| TimePoint::new(t).ok())
            .ok_or_else(|| bad(format!("time `{raw_t}` is not a nonnegative number")))?;
        let record = match rec.get(li).unwrap_or("") {
            "" => ResponseRecord::item_nonresponse(time),
            "0" => ResponseRecord::labeled(time, Label::Reference),
            "1" => ResponseRecord::labeled(time, Label::Interest),
            other => return Err(bad(format!("label `{other}` must be 0, 1 or empty"))),
        };
        records.push(record);
    }
    let censor_time = TimePoint::new(censor_time)?;
    Ok(SurveyDataset::new(records, population_size, censor_time))
}

pub fn read_calendar(path: &Path) -> Result<Calendar> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let (di, ci) = (
        column(&headers, "day", path)?,
        column(&headers, "class", path)?,
    );
    let mut days = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| CliError::Row {
            path: path.to_path_buf(),
            row,
            message,
        };
        let raw_d = rec.get(di).unwrap_or("");
        let day: u32 = raw_d
            .parse()
            .map_err(|_| bad(format!("day `{raw_d}` is not a day index")))?;
        let raw_c = rec.get(ci).unwrap_or("");
        let class =
            DayClass::parse(raw_c).ok_or_else(|| bad(format!("unknown day class `{raw_c}`")))?;
        if days.insert(day, class).is_some() {
            return Err(bad(format!("day {day} listed twice")));
        }
    }
    Ok(Calendar::new(days))
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish(path: &Path, w: csv::Writer<File>) -> Result<()> {
    w.into_inner()
        .map_err(|e| CliError::io(path, e.into_error()))?
        .sync_all()
        .map_err(|e| CliError::io(path, e))
}

/// Respondents in the input format, in stored order.
pub fn write_responses(path: &Path, d: &SurveyDataset) -> Result<()> {
    let mut w = writer(path)?;
    let io = |e: csv::Error| csv_error(path, e);
    w.write_record(["time", "label"]).map_err(io)?;
    for (t, r) in d.timed() {
        let label = r
            .observed_label()
            .map_or(String::new(), |l| l.indicator().to_string());
        w.write_record([t.days().to_string(), label]).map_err(io)?;
    }
    finish(path, w)
}

pub fn write_calendar(path: &Path, c: &Calendar) -> Result<()> {
    let mut w = writer(path)?;
    let io = |e: csv::Error| csv_error(path, e);
    w.write_record(["day", "class"]).map_err(io)?;
    for (day, class) in c.iter() {
        w.write_record([day.to_string(), class.to_string()])
            .map_err(io)?;
    }
    finish(path, w)
}

/// Long-format series: `day,day_class,metric,value`.
pub fn write_series_csv(path: &Path, rows: &[TidyRow]) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    finish(path, w)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
