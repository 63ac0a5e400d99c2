//! Aligned daily return panels.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use nalgebra::DMatrix;

use crate::date::Date;
use crate::{Error, Result};

/// Daily simple returns, one row per trading date and one column per ticker.
///
/// A missing observation is stored as `NaN`. The estimation routines work on
/// spans that must be fully observed, and the walk-forward driver drops
/// tickers with gaps from the universe of the affected year.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    dates: Vec<Date>,
    tickers: Vec<String>,
    values: DMatrix<f64>,
}

impl ReturnsPanel {
    pub fn new(dates: Vec<Date>, tickers: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != dates.len() || values.ncols() != tickers.len() {
            return Err(Error::Data(alloc::format!(
                "panel shape {}x{} does not match {} dates and {} tickers",
                values.nrows(),
                values.ncols(),
                dates.len(),
                tickers.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Data(alloc::format!(
                "dates must be strictly increasing: {} is followed by {}",
                w[0],
                w[1]
            )));
        }
        for (j, t) in tickers.iter().enumerate() {
            if tickers[..j].contains(t) {
                return Err(Error::Data(alloc::format!("duplicate ticker {t}")));
            }
        }
        if let Some(v) = values.iter().find(|v| v.is_infinite()) {
            return Err(Error::Data(alloc::format!("non-finite return {v}")));
        }
        Ok(Self {
            dates,
            tickers,
            values,
        })
    }

    pub fn dates(&self) -> &[Date] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn ticker_index(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }

    /// Returns of one ticker, in date order.
    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n_rows();
        &self.values.as_slice()[j * n..(j + 1) * n]
    }

    /// True when the ticker has no missing observation inside `rows`.
    pub fn is_observed(&self, j: usize, rows: Range<usize>) -> bool {
        self.column(j)[rows].iter().all(|v| !v.is_nan())
    }

    /// Consecutive row ranges sharing a calendar year, in order.
    pub fn year_ranges(&self) -> Vec<(i32, Range<usize>)> {
        let mut out: Vec<(i32, Range<usize>)> = Vec::new();
        for (i, d) in self.dates.iter().enumerate() {
            match out.last_mut() {
                Some((y, r)) if *y == d.year() => r.end = i + 1,
                _ => out.push((d.year(), i..i + 1)),
            }
        }
        out
    }

    /// A panel restricted to the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> ReturnsPanel {
        let values = DMatrix::from_fn(self.n_rows(), cols.len(), |i, k| self.values[(i, cols[k])]);
        ReturnsPanel {
            dates: self.dates.clone(),
            tickers: cols.iter().map(|&j| self.tickers[j].clone()).collect(),
            values,
        }
    }

    /// A panel restricted to a contiguous range of rows.
    pub fn select_rows(&self, rows: Range<usize>) -> ReturnsPanel {
        let values = self.values.rows(rows.start, rows.len()).into_owned();
        ReturnsPanel {
            dates: self.dates[rows].to_vec(),
            tickers: self.tickers.clone(),
            values,
        }
    }

    /// Equal-weighted cross-sectional mean return per row.
    pub fn equal_weight_mean(&self) -> Vec<f64> {
        let k = self.n_assets() as f64;
        (0..self.n_rows())
            .map(|i| self.values.row(i).iter().sum::<f64>() / k)
            .collect()
    }
}
