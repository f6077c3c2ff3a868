//! CSV and JSON files.
//!
//! Score CSV: a header row whose first column is `t`, then one or more score
//! columns. Each row is one step; its scores form the step's batch. Times are
//! integers and strictly increasing.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use cpdetect::detector::TestRecord;
use cpdetect::MiniBatch;

use crate::error::{CliError, Result};

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn row_error(path: &Path, line: u64, msg: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: line {line}: {msg}", path.display()))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.position() {
        Some(p) => row_error(path, p.line(), e),
        None => CliError::io(path, e),
    }
}

/// Parses rows of `t` followed by `width` further numeric columns.
fn parse_rows<R: Read>(path: &Path, mut rdr: csv::Reader<R>, min_width: usize) -> Result<Vec<(u64, Vec<f64>)>> {
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.get(0) != Some("t") {
        return Err(row_error(path, 1, "first column must be `t`"));
    }
    if header.len() < 1 + min_width {
        return Err(row_error(
            path,
            1,
            format!("expected at least {min_width} value column(s)"),
        ));
    }
    let mut rows: Vec<(u64, Vec<f64>)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let t: u64 = record[0].parse().map_err(|_| {
            row_error(
                path,
                line,
                format!("time `{}` is not a non-negative integer", &record[0]),
            )
        })?;
        if let Some((prev, _)) = rows.last() {
            if t <= *prev {
                return Err(row_error(
                    path,
                    line,
                    format!("time {t} does not increase (previous {prev})"),
                ));
            }
        }
        let values = record
            .iter()
            .skip(1)
            .map(|s| match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(row_error(path, line, format!("`{s}` is not a finite number"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((t, values));
    }
    Ok(rows)
}

/// One batch per row.
pub fn load_score_stream(path: &Path) -> Result<Vec<MiniBatch<f64>>> {
    let rows = parse_rows(path, reader(path)?, 1)?;
    Ok(rows
        .into_iter()
        .map(|(time, items)| MiniBatch { time, items })
        .collect())
}

/// The `t` column of a single-column CSV.
pub fn load_times(path: &Path) -> Result<Vec<u64>> {
    let rows = parse_rows(path, reader(path)?, 0)?;
    Ok(rows.into_iter().map(|(t, _)| t).collect())
}

/// Writes `contents` to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, contents).map_err(|e| CliError::io(p, e)),
        None => std::io::stdout()
            .write_all(contents.as_bytes())
            .map_err(|e| CliError::Data(format!("stdout: {e}"))),
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn times_csv(times: &[u64]) -> String {
    let mut s = String::from("t\n");
    for t in times {
        s.push_str(&format!("{t}\n"));
    }
    s
}

/// Long-format per-test diagnostics for external plotting.
pub fn plot_csv(records: &[TestRecord]) -> String {
    let mut s = String::from("time,z,threshold,delta_i,rejected\n");
    for r in records {
        let delta = r.delta_i.map(|d| d.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.time, r.z, r.threshold, delta, r.rejected as u8
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, min_width: usize) -> Result<Vec<(u64, Vec<f64>)>> {
        let rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        parse_rows(Path::new("x.csv"), rdr, min_width)
    }

    #[test]
    fn singleton_batches() {
        let rows = parse("t,v\n1,0.5\n2,0.7\n", 1).unwrap();
        assert_eq!(rows, vec![(1, vec![0.5]), (2, vec![0.7])]);
    }

    #[test]
    fn wide_rows_are_batches() {
        let rows = parse("t,v1,v2,v3\n1,1,2,3\n", 1).unwrap();
        assert_eq!(rows[0].1.len(), 3);
    }

    #[test]
    fn decreasing_time_names_the_line() {
        let err = parse("t,v\n2,0.5\n1,0.7\n", 1).unwrap_err();
        assert!(matches!(&err, CliError::Data(m) if m.contains("line 3")), "{err}");
    }

    #[test]
    fn malformed_value_names_the_line() {
        let err = parse("t,v\n1,0.5\n2,abc\n", 1).unwrap_err();
        assert!(
            matches!(&err, CliError::Data(m) if m.contains("line 3") && m.contains("abc")),
            "{err}"
        );
        let err = parse("t,v\n1,NaN\n", 1).unwrap_err();
        assert!(matches!(&err, CliError::Data(m) if m.contains("line 2")), "{err}");
    }

    #[test]
    fn ragged_row_names_the_line() {
        let err = parse("t,v\n1,0.5\n2,0.5,0.6\n", 1).unwrap_err();
        assert!(matches!(&err, CliError::Data(m) if m.contains("line 3")), "{err}");
    }

    #[test]
    fn header_must_start_with_t() {
        assert!(parse("time,v\n1,0.5\n", 1).is_err());
        assert!(parse("t\n1\n", 1).is_err());
        assert_eq!(parse("t\n4\n9\n", 0).unwrap().len(), 2);
    }

    #[test]
    fn plot_rows() {
        let r = TestRecord {
            time: 100,
            z: 1.5,
            threshold: 20.0,
            delta_i: None,
            rejected: false,
            extrapolated: false,
        };
        assert_eq!(plot_csv(&[r]), "time,z,threshold,delta_i,rejected\n100,1.5,20,,0\n");
    }
}
