//! CSV ingestion and write-back.
//!
//! Panels are stored as `date,TICKER1,TICKER2,…` with ISO-8601 dates and
//! one row per trading day. Cells hold decimal numbers; `NA` marks an
//! observation that is genuinely missing. An empty cell is an error.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use walkfolio_core::date::Date;
use walkfolio_core::panel::ReturnsPanel;
use walkfolio_core::DMatrix;

/// Token written for, and accepted as, a missing observation.
pub const MISSING: &str = "NA";

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{}: line {line}{}: {message}", path.display(), column.as_ref().map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        line: u64,
        column: Option<String>,
        message: String,
    },

    #[error("{}: {message}", path.display())]
    Data { path: PathBuf, message: String },
}

impl LoadError {
    /// True when the file itself could not be opened.
    pub fn is_missing_file(&self) -> bool {
        matches!(self, LoadError::Io { .. })
    }
}

/// A dated table of numbers before it is interpreted.
struct Table {
    header: Vec<String>,
    dates: Vec<Date>,
    values: DMatrix<f64>,
}

fn read_table<R: Read>(path: &Path, reader: R, allow_missing: bool) -> Result<Table, LoadError> {
    let parse_err = |line: u64, column: Option<&str>, message: String| LoadError::Parse {
        path: path.to_path_buf(),
        line,
        column: column.map(str::to_string),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, None, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header
        .first()
        .is_none_or(|h| !h.eq_ignore_ascii_case("date"))
    {
        return Err(parse_err(
            1,
            None,
            "first header cell must be 'date'".into(),
        ));
    }
    if header.len() < 2 {
        return Err(parse_err(1, None, "no value columns".into()));
    }
    let names = &header[1..];
    let mut dates = Vec::new();
    let mut flat = Vec::new();
    let mut seen: HashMap<Date, u64> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, None, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let date: Date = rec[0].parse().map_err(|_| {
            parse_err(
                line,
                Some("date"),
                format!("not an ISO-8601 date: {:?}", &rec[0]),
            )
        })?;
        if let Some(first) = seen.insert(date, line) {
            return Err(LoadError::Data {
                path: path.to_path_buf(),
                message: format!("duplicate date {date} on lines {first} and {line}"),
            });
        }
        if let Some(&prev) = dates.last() {
            if date < prev {
                return Err(LoadError::Data {
                    path: path.to_path_buf(),
                    message: format!("dates out of order: {date} on line {line} follows {prev}"),
                });
            }
        }
        dates.push(date);
        for (cell, name) in rec.iter().skip(1).zip(names) {
            let v = if cell.is_empty() {
                return Err(parse_err(
                    line,
                    Some(name),
                    "empty cell (write NA for a missing value)".into(),
                ));
            } else if cell.eq_ignore_ascii_case(MISSING) || cell.eq_ignore_ascii_case("nan") {
                if !allow_missing {
                    return Err(parse_err(
                        line,
                        Some(name),
                        "missing values are not allowed here".into(),
                    ));
                }
                f64::NAN
            } else {
                let v: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(line, Some(name), format!("not a number: {cell:?}")))?;
                if !v.is_finite() {
                    return Err(parse_err(
                        line,
                        Some(name),
                        format!("non-finite value {cell:?}"),
                    ));
                }
                v
            };
            flat.push(v);
        }
    }
    if dates.is_empty() {
        return Err(LoadError::Data {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }
    let values = DMatrix::from_row_slice(dates.len(), names.len(), &flat);
    Ok(Table {
        header,
        dates,
        values,
    })
}

fn open(path: &Path) -> Result<File, LoadError> {
    File::open(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn into_panel(path: &Path, t: Table) -> Result<ReturnsPanel, LoadError> {
    ReturnsPanel::new(t.dates, t.header[1..].to_vec(), t.values).map_err(|e| LoadError::Data {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Reads a returns panel from CSV.
pub fn load_returns_csv(path: &Path) -> Result<ReturnsPanel, LoadError> {
    read_returns(path, open(path)?)
}

/// Reads a returns panel from any reader; `path` only labels errors.
pub fn read_returns<R: Read>(path: &Path, reader: R) -> Result<ReturnsPanel, LoadError> {
    let t = read_table(path, reader, true)?;
    into_panel(path, t)
}

/// Reads a single-column daily series (`date,VALUE`) and aligns it with
/// `dates`, which must all be present. Dates outside `dates` are ignored.
pub fn load_series_csv(path: &Path, dates: &[Date]) -> Result<Vec<f64>, LoadError> {
    read_series(path, open(path)?, dates)
}

pub fn read_series<R: Read>(path: &Path, reader: R, dates: &[Date]) -> Result<Vec<f64>, LoadError> {
    let t = read_table(path, reader, false)?;
    if t.header.len() != 2 {
        return Err(LoadError::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: None,
            message: format!("expected one value column, found {}", t.header.len() - 1),
        });
    }
    let by_date: HashMap<Date, f64> = t
        .dates
        .iter()
        .copied()
        .zip(t.values.column(0).iter().copied())
        .collect();
    dates
        .iter()
        .map(|d| {
            by_date.get(d).copied().ok_or_else(|| LoadError::Data {
                path: path.to_path_buf(),
                message: format!("no value for trading date {d}"),
            })
        })
        .collect()
}

/// Writes a panel in the format [`read_returns`] accepts.
///
/// Numbers use the shortest representation that parses back to the same
/// `f64`, so a write-then-read round trip is bit-exact.
pub fn write_returns<W: Write>(panel: &ReturnsPanel, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string()];
    header.extend(panel.tickers().iter().cloned());
    w.write_record(&header)?;
    for (r, date) in panel.dates().iter().enumerate() {
        let mut row = vec![date.to_string()];
        row.extend(panel.values().row(r).iter().map(|&v| format_value(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_returns_csv(panel: &ReturnsPanel, path: &Path) -> std::io::Result<()> {
    let f = File::create(path)?;
    write_returns(panel, f).map_err(std::io::Error::other)
}

/// Writes a single-column dated series.
pub fn write_series_csv(
    path: &Path,
    name: &str,
    dates: &[Date],
    values: &[f64],
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["date", name])?;
    for (d, v) in dates.iter().zip(values) {
        w.write_record([d.to_string(), format_value(*v)])?;
    }
    w.flush()
}

/// Shortest round-trip decimal form; `NA` for a missing value.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        MISSING.to_string()
    } else {
        format!("{v:?}")
    }
}

/// Simple returns `p_t / p_{t-1} - 1` from a panel of prices.
///
/// The first date has no return and is dropped. A return is missing when
/// either price is missing.
pub fn prices_to_returns(prices: &ReturnsPanel) -> Result<ReturnsPanel, String> {
    let p = prices.values();
    if let Some((r, c)) = (0..p.nrows())
        .flat_map(|r| (0..p.ncols()).map(move |c| (r, c)))
        .find(|&(r, c)| p[(r, c)] <= 0.0)
    {
        return Err(format!(
            "non-positive price {} for {} on {}",
            p[(r, c)],
            prices.tickers()[c],
            prices.dates()[r]
        ));
    }
    if p.nrows() < 2 {
        return Err("need at least two dates to form returns".into());
    }
    let values = DMatrix::from_fn(p.nrows() - 1, p.ncols(), |r, c| {
        p[(r + 1, c)] / p[(r, c)] - 1.0
    });
    ReturnsPanel::new(
        prices.dates()[1..].to_vec(),
        prices.tickers().to_vec(),
        values,
    )
    .map_err(|e| e.to_string())
}
