//! Run directory layout: the record store and the run manifest.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkfolio_core::backtest::{
    BacktestRecord, CellConfig, CellFailure, FailureCode, RecordMetrics,
};
use walkfolio_core::centrality::Measure;
use walkfolio_core::corrmat::Transform;
use walkfolio_core::graphbuild::AdjacencyOption;
use walkfolio_core::metrics::MetricsRow;
use walkfolio_core::portfolio::{Scheme, Side};

pub const RECORDS_FILE: &str = "records.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORTS_DIR: &str = "reports";

pub const RECORD_HEADER: [&str; 27] = [
    "id",
    "transform",
    "shrink",
    "option",
    "theta",
    "measure",
    "alpha_fraction",
    "side",
    "scheme",
    "graph",
    "status",
    "failure_code",
    "failure_year",
    "failure_message",
    "CR",
    "ER",
    "SD",
    "SR",
    "VaR005",
    "CVaR005",
    "MaxDDar",
    "Omega",
    "Sortino",
    "UP",
    "folds",
    "degenerate_folds",
    "fallback_folds",
];

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{}: line {line}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn record_row(r: &BacktestRecord) -> Vec<String> {
    let c = &r.cell;
    let mut row = vec![
        r.id.clone(),
        c.transform.label().to_string(),
        if c.shrink { "Y" } else { "N" }.to_string(),
        c.option.to_string(),
        opt(c.theta),
        c.measure.key().to_string(),
        opt(c.alpha_fraction),
        c.side.label().to_string(),
        c.scheme.key().to_string(),
        c.option.graph_tag().to_string(),
    ];
    match &r.outcome {
        Ok(m) => {
            let x = &m.metrics;
            row.extend([
                "ok".to_string(),
                String::new(),
                String::new(),
                String::new(),
            ]);
            row.extend([
                num(x.cr),
                num(x.er),
                num(x.sd),
                opt(x.sr),
                num(x.var005),
                num(x.cvar005),
                num(x.max_dd),
                opt(x.omega),
                opt(x.sortino),
                opt(x.up),
            ]);
            row.extend([m.folds, m.degenerate_folds, m.fallback_folds].map(|v| v.to_string()));
        }
        Err(f) => {
            row.extend([
                "failed".to_string(),
                f.code.as_str().to_string(),
                f.train_year.map(|y| y.to_string()).unwrap_or_default(),
                f.message.clone(),
            ]);
            row.extend(std::iter::repeat_n(String::new(), 13));
        }
    }
    row
}

fn parse_row(rec: &csv::StringRecord) -> Result<BacktestRecord, String> {
    let field = |i: usize| rec.get(i).unwrap_or("");
    let float = |i: usize| -> Result<f64, String> {
        field(i).parse::<f64>().map_err(|_| {
            format!(
                "column {} is not a number: {:?}",
                RECORD_HEADER[i],
                field(i)
            )
        })
    };
    let opt_float = |i: usize| -> Result<Option<f64>, String> {
        if field(i).is_empty() {
            Ok(None)
        } else {
            float(i).map(Some)
        }
    };
    let count = |i: usize| -> Result<usize, String> {
        field(i)
            .parse::<usize>()
            .map_err(|_| format!("column {} is not a count: {:?}", RECORD_HEADER[i], field(i)))
    };
    let cell = CellConfig {
        transform: Transform::parse(field(1))
            .ok_or_else(|| format!("unknown transform {:?}", field(1)))?,
        shrink: match field(2) {
            "Y" => true,
            "N" => false,
            s => return Err(format!("shrink must be Y or N, got {s:?}")),
        },
        option: AdjacencyOption::parse(field(3)).map_err(|e| e.to_string())?,
        theta: opt_float(4)?,
        measure: Measure::parse(field(5))
            .ok_or_else(|| format!("unknown measure {:?}", field(5)))?,
        alpha_fraction: opt_float(6)?,
        side: Side::parse(field(7)).ok_or_else(|| format!("unknown side {:?}", field(7)))?,
        scheme: Scheme::parse(field(8)).ok_or_else(|| format!("unknown scheme {:?}", field(8)))?,
    };
    let outcome = match field(10) {
        "ok" => Ok(RecordMetrics {
            metrics: MetricsRow {
                cr: float(14)?,
                er: float(15)?,
                sd: float(16)?,
                sr: opt_float(17)?,
                var005: float(18)?,
                cvar005: float(19)?,
                max_dd: float(20)?,
                omega: opt_float(21)?,
                sortino: opt_float(22)?,
                up: opt_float(23)?,
            },
            folds: count(24)?,
            degenerate_folds: count(25)?,
            fallback_folds: count(26)?,
        }),
        "failed" => Err(CellFailure {
            code: FailureCode::parse(field(11))
                .ok_or_else(|| format!("unknown failure code {:?}", field(11)))?,
            train_year: if field(12).is_empty() {
                None
            } else {
                Some(
                    field(12)
                        .parse()
                        .map_err(|_| format!("bad failure year {:?}", field(12)))?,
                )
            },
            message: field(13).to_string(),
        }),
        s => return Err(format!("unknown status {s:?}")),
    };
    Ok(BacktestRecord {
        id: field(0).to_string(),
        cell,
        outcome,
    })
}

/// Writes `records` to `path` in one step, replacing any existing file.
pub fn write_records(path: &Path, records: &[BacktestRecord]) -> Result<(), StoreError> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp).map_err(|e| StoreError::Io {
            path: tmp.clone(),
            source: e.into(),
        })?;
        w.write_record(RECORD_HEADER).map_err(|e| StoreError::Io {
            path: tmp.clone(),
            source: e.into(),
        })?;
        for r in records {
            w.write_record(record_row(r)).map_err(|e| StoreError::Io {
                path: tmp.clone(),
                source: e.into(),
            })?;
        }
        w.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Appends `records` to the store, creating it with a header if needed.
pub fn append_records(path: &Path, records: &[BacktestRecord]) -> Result<(), StoreError> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    let wrap = |e: csv::Error| StoreError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    if fresh {
        w.write_record(RECORD_HEADER).map_err(wrap)?;
    }
    for r in records {
        w.write_record(record_row(r)).map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads a record store.
///
/// With `lenient` set, rows that do not parse are skipped with a warning;
/// this recovers a store whose last append was interrupted.
pub fn read_records(path: &Path, lenient: bool) -> Result<Vec<BacktestRecord>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let malformed = |line: u64, message: String| StoreError::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let header = rdr
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    if header.iter().ne(RECORD_HEADER.iter().copied()) {
        return Err(malformed(1, "not a record store header".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let parsed = rec
            .map_err(|e| (e.position().map_or(0, |p| p.line()), e.to_string()))
            .and_then(|rec| {
                let line = rec.position().map_or(0, |p| p.line());
                if rec.len() != RECORD_HEADER.len() {
                    return Err((
                        line,
                        format!(
                            "expected {} fields, found {}",
                            RECORD_HEADER.len(),
                            rec.len()
                        ),
                    ));
                }
                parse_row(&rec).map_err(|m| (line, m))
            });
        match parsed {
            Ok(r) => out.push(r),
            Err((line, message)) if lenient => {
                log::warn!("{}: skipping line {line}: {message}", path.display())
            }
            Err((line, message)) => return Err(malformed(line, message)),
        }
    }
    Ok(out)
}

/// Ids already present in a store; empty when the store does not exist.
pub fn completed_ids(path: &Path) -> Result<HashSet<String>, StoreError> {
    if !path.exists() {
        return Ok(HashSet::new());
    }
    Ok(read_records(path, true)?
        .into_iter()
        .map(|r| r.id)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub inputs: Inputs,
    pub data: DataSummary,
    pub protocol: ProtocolEcho,
    pub grid: GridEcho,
    /// Valid cells of the requested grid.
    pub cardinality: usize,
    /// Valid cells of the unrestricted grid.
    pub full_grid_cardinality: usize,
    pub completed: usize,
    pub succeeded: usize,
    pub folds: Vec<FoldEcho>,
    pub skipped_years: Vec<SkippedYear>,
    pub failures: Vec<FailureEcho>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub returns: String,
    pub risk_free: Option<String>,
    pub benchmark: Option<String>,
    pub market: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub fingerprint: String,
    pub tickers: usize,
    pub dates: usize,
    pub first_date: String,
    pub last_date: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolEcho {
    pub tau: usize,
    pub m: usize,
    pub r_target: f64,
    pub annualization: f64,
    pub var_level_bp: u32,
    pub var_scale: f64,
    pub long_only: [f64; 2],
    pub long_short: [f64; 2],
    pub shrink_intensity: Option<f64>,
    pub years: Option<[i32; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEcho {
    pub transforms: Vec<String>,
    pub shrink: Vec<bool>,
    pub options: Vec<String>,
    pub thetas: Vec<f64>,
    pub measures: Vec<String>,
    pub alpha_fractions: Vec<f64>,
    pub sides: Vec<String>,
    pub schemes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldEcho {
    pub train_year: i32,
    pub test_year: i32,
    pub universe: usize,
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedYear {
    pub year: i32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEcho {
    pub id: String,
    pub cell: String,
    pub code: String,
    pub train_year: Option<i32>,
    pub message: String,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<(), StoreError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|source| StoreError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        text.push('\n');
        let tmp = path.with_extension("json.tmp");
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(text.as_bytes()).map_err(io_err(&tmp))?;
        drop(f);
        fs::rename(&tmp, path).map_err(io_err(path))
    }

    pub fn read(path: &Path) -> Result<Self, StoreError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|source| StoreError::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}
