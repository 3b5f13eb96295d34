//! CSV ingestion for daily returns, shock-time profiles and intraday ticks.

use std::collections::HashMap;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, Timelike};

use crate::error::{CliError, CliResult};

/// A daily return series, optionally dated.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    pub dates: Option<Vec<NaiveDate>>,
    pub returns: Vec<f64>,
}

impl DailySeries {
    /// Index of the first observation on or after `date`.
    pub fn index_of(&self, date: NaiveDate) -> CliResult<usize> {
        let dates = self
            .dates
            .as_ref()
            .ok_or_else(|| CliError::validation("a shock date needs a date column"))?;
        Ok(dates.partition_point(|d| *d < date))
    }
}

fn reader(path: &Path) -> CliResult<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn parse_number(path: &Path, record: &csv::StringRecord, col: usize, name: &str) -> CliResult<f64> {
    let cell = record.get(col).unwrap_or("");
    if cell.is_empty() {
        return Err(CliError::validation(format!(
            "{}: line {}, column {name:?}: missing value",
            path.display(),
            line_of(record)
        )));
    }
    cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
        CliError::validation(format!(
            "{}: line {}, column {name:?}: {cell:?} is not a finite number",
            path.display(),
            line_of(record)
        ))
    })
}

pub fn parse_date(s: &str) -> CliResult<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| CliError::validation(format!("date {s:?}: {e}")))
}

/// Reads a CSV with a `return` or a `price` column (case-insensitive) and
/// an optional ISO-8601 `date` column. Prices become log returns, which
/// drops the first row.
pub fn read_returns(path: &Path) -> CliResult<DailySeries> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let date_col = find("date");
    let (col, is_price) = match (find("return"), find("price")) {
        (Some(c), _) => (c, false),
        (None, Some(c)) => (c, true),
        (None, None) => {
            return Err(CliError::validation(format!("{}: no \"return\" or \"price\" column", path.display())))
        }
    };
    let mut values = Vec::new();
    let mut dates = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let v = parse_number(path, &record, col, &headers[col])?;
        if is_price && v <= 0.0 {
            return Err(CliError::validation(format!(
                "{}: line {}: price must be positive",
                path.display(),
                line_of(&record)
            )));
        }
        values.push(v);
        if let Some(dc) = date_col {
            let d = parse_date(record.get(dc).unwrap_or("")).map_err(|e| {
                CliError::validation(format!("{}: line {}: {e}", path.display(), line_of(&record)))
            })?;
            if dates.last().is_some_and(|prev| *prev >= d) {
                return Err(CliError::validation(format!(
                    "{}: line {}: dates must be strictly increasing",
                    path.display(),
                    line_of(&record)
                )));
            }
            dates.push(d);
        }
    }
    let returns = if is_price { values.windows(2).map(|w| (w[1] / w[0]).ln()).collect() } else { values };
    if is_price && !dates.is_empty() {
        dates.remove(0);
    }
    Ok(DailySeries { dates: date_col.map(|_| dates), returns })
}

/// Reads shock-time covariates: a `series` column naming the event, then one
/// column per declared covariate. Columns are matched by name.
pub fn read_profiles(path: &Path, covariates: &[String]) -> CliResult<HashMap<String, Vec<f64>>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?.clone();
    let series_col = headers
        .iter()
        .position(|h| h == "series")
        .ok_or_else(|| CliError::validation(format!("{}: no \"series\" column", path.display())))?;
    let cols: Vec<usize> = covariates
        .iter()
        .map(|name| {
            headers.iter().position(|h| h == name).ok_or_else(|| {
                CliError::validation(format!("{}: covariate column {name:?} is missing", path.display()))
            })
        })
        .collect::<CliResult<_>>()?;
    let mut out = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let series = record.get(series_col).unwrap_or("").to_string();
        let row = cols
            .iter()
            .zip(covariates)
            .map(|(&c, name)| {
                parse_number(path, &record, c, name)
                    .map_err(|e| CliError::validation(format!("{e} (series {series:?})")))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        if out.insert(series.clone(), row).is_some() {
            return Err(CliError::validation(format!("{}: series {series:?} appears twice", path.display())));
        }
    }
    Ok(out)
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// `(seconds after midnight, price)` ticks of one day.
pub type DayTicks = (NaiveDate, Vec<(u32, f64)>);

/// Reads `(timestamp, price)` ticks and groups them by calendar day, in
/// order.
pub fn read_intraday(path: &Path) -> CliResult<Vec<DayTicks>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| CliError::validation(format!("{}: no {name:?} column", path.display())))
    };
    let (tc, pc) = (find("timestamp")?, find("price")?);
    let mut days: Vec<DayTicks> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let raw = record.get(tc).unwrap_or("");
        let ts = parse_timestamp(raw).ok_or_else(|| {
            CliError::validation(format!("{}: line {}: bad timestamp {raw:?}", path.display(), line_of(&record)))
        })?;
        let price = parse_number(path, &record, pc, "price")?;
        let tick = (ts.time().num_seconds_from_midnight(), price);
        match days.last_mut() {
            Some((d, ticks)) if *d == ts.date() => ticks.push(tick),
            Some((d, _)) if *d > ts.date() => {
                return Err(CliError::validation(format!(
                    "{}: line {}: ticks are not in time order",
                    path.display(),
                    line_of(&record)
                )))
            }
            _ => days.push((ts.date(), vec![tick])),
        }
    }
    Ok(days)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn prices_become_log_returns() {
        let f = file("date,price\n2020-01-02,100\n2020-01-03,110\n2020-01-06,99\n");
        let s = read_returns(f.path()).unwrap();
        assert_eq!(s.returns, vec![(1.1f64).ln(), (99.0f64 / 110.0).ln()]);
        assert_eq!(s.dates.unwrap()[0], parse_date("2020-01-03").unwrap());
    }

    #[test]
    fn shock_date_maps_to_first_index_on_or_after() {
        let f = file("date,return\n2020-01-02,0.1\n2020-01-03,0.2\n2020-01-07,0.3\n");
        let s = read_returns(f.path()).unwrap();
        assert_eq!(s.index_of(parse_date("2020-01-06").unwrap()).unwrap(), 2);
        assert_eq!(s.index_of(parse_date("2020-01-03").unwrap()).unwrap(), 1);
    }

    #[test]
    fn bad_cells_name_line_and_column() {
        let f = file("return\n0.1\n\n0.2\nabc\n");
        let err = read_returns(f.path()).unwrap_err().to_string();
        assert!(err.contains("line 5") && err.contains("return"), "{err}");
    }

    #[test]
    fn missing_profile_cell_is_reported() {
        let f = file("series,a,b\nx,1,2\ny,3,\n");
        let err = read_profiles(f.path(), &["a".into(), "b".into()]).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("\"b\"") && err.contains("\"y\""), "{err}");
    }

    #[test]
    fn intraday_groups_by_day() {
        let f = file("timestamp,price\n2020-01-02T09:30:00,1\n2020-01-02 09:35:00,2\n2020-01-03T09:30:00,3\n");
        let days = read_intraday(f.path()).unwrap();
        assert_eq!(days.len(), 2);
        assert_eq!(days[0].1, vec![(34200, 1.0), (34500, 2.0)]);
    }
}
