//! Ranked performance tables.

use std::fmt::Write as _;

use walkfolio_core::backtest::{rank, BacktestRecord, CellConfig, RankKey};
use walkfolio_core::graphbuild::AdjacencyOption;

pub const COLUMNS: [&str; 18] = [
    "Portfolio",
    "Centrality",
    "AM",
    "C/P",
    "TV",
    "alpha",
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
    "Graph",
    "Shrink",
];

/// `v` with six significant digits, in the style of C's `%g`.
pub fn sig6(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "NaN".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if !(-4..6).contains(&exp) {
        format!(
            "{}e{}{:02}",
            trim(mantissa.to_string()),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    } else {
        trim(format!("{v:.*}", (5 - exp) as usize))
    }
}

fn opt6(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".into(), sig6)
}

fn am(option: AdjacencyOption) -> String {
    match option {
        AdjacencyOption::Threshold(k) => format!("({k})"),
        other => other.to_string(),
    }
}

/// Table cells of one successful record; `None` for a failed one.
pub fn row(r: &BacktestRecord) -> Option<Vec<String>> {
    let m = &r.outcome.as_ref().ok()?.metrics;
    let c = &r.cell;
    Some(vec![
        c.scheme.label().to_string(),
        c.measure.label().to_string(),
        am(c.option),
        c.side.label().to_string(),
        opt6(c.theta),
        opt6(c.alpha_fraction),
        sig6(m.cr),
        sig6(m.er),
        sig6(m.sd),
        opt6(m.sr),
        sig6(m.var005),
        sig6(m.cvar005),
        sig6(m.max_dd),
        opt6(m.omega),
        opt6(m.sortino),
        opt6(m.up),
        c.option.graph_tag().to_string(),
        if c.shrink { "Y" } else { "N" }.to_string(),
    ])
}

/// A ranked table.
#[derive(Debug, Clone)]
pub struct Table {
    pub title: String,
    pub rows: Vec<Vec<String>>,
}

pub fn ranked(
    title: impl Into<String>,
    records: &[BacktestRecord],
    key: RankKey,
    top: usize,
    filter: impl Fn(&CellConfig) -> bool,
) -> Table {
    let rows = rank(records, key, top, filter)
        .into_iter()
        .filter_map(row)
        .collect();
    Table {
        title: title.into(),
        rows,
    }
}

impl Table {
    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = COLUMNS.iter().map(|c| c.len()).collect();
        for r in &self.rows {
            for (w, cell) in widths.iter_mut().zip(r) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &mut dyn Iterator<Item = &str>| {
            let parts: Vec<String> = cells
                .zip(&widths)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut COLUMNS.iter().copied());
        for r in &self.rows {
            line(&mut r.iter().map(String::as_str));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(COLUMNS).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}
