//! Exponentially weighted rolling correlations, single-index shrinkage and
//! the elementwise sign transforms.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::math;
use crate::panel::ReturnsPanel;
use crate::{Error, Result};

/// A symmetric correlation matrix labelled by ticker.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub tickers: Vec<String>,
    pub c: DMatrix<f64>,
    pub shrunk: bool,
}

/// Elementwise transform applied before graph construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Transform {
    /// Identity.
    A1,
    /// Positive part, `max(C, 0)`.
    A2,
    /// Positive part of the negated matrix, `max(-C, 0)`.
    A3,
    /// Absolute value.
    A4,
}

impl Transform {
    pub const ALL: [Transform; 4] = [Transform::A1, Transform::A2, Transform::A3, Transform::A4];

    pub fn label(self) -> &'static str {
        match self {
            Transform::A1 => "A1",
            Transform::A2 => "A2",
            Transform::A3 => "A3",
            Transform::A4 => "A4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.label().eq_ignore_ascii_case(s))
    }
}

/// Normalized weights `w(t) ∝ exp((t - τ)/τ)` for `t = 1..=τ`.
pub fn exp_weights(tau: usize) -> Result<Vec<f64>> {
    if tau == 0 {
        return Err(Error::InvalidParameter(
            "window length must be positive".into(),
        ));
    }
    let tf = tau as f64;
    let raw: Vec<f64> = (1..=tau).map(|t| math::exp((t as f64 - tf) / tf)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Weighted sum of Pearson correlation matrices over `tau` rolling windows.
///
/// Window `t` (for `t = 1..=tau`) has `tau` rows and ends at row
/// `as_of + 1 - t`; it receives weight `w(t)` from [`exp_weights`]. The
/// panel must therefore hold `2 tau - 1` rows ending at `as_of`.
pub fn weighted_correlation(
    panel: &ReturnsPanel,
    tau: usize,
    as_of: usize,
) -> Result<CorrelationMatrix> {
    if tau < 2 {
        return Err(Error::InvalidParameter(format!(
            "correlation window needs at least 2 rows, got {tau}"
        )));
    }
    let span = 2 * tau - 1;
    if as_of + 1 < span || as_of >= panel.n_rows() {
        return Err(Error::InsufficientHistory {
            needed: span,
            earliest: span - 1,
        });
    }
    let n = panel.n_assets();
    let first = as_of + 1 - span;
    let weights = exp_weights(tau)?;

    // Shift by the span means so the running cross-products stay small.
    let mut x = DMatrix::<f64>::zeros(span, n);
    for j in 0..n {
        let col = &panel.column(j)[first..=as_of];
        if col.iter().any(|v| v.is_nan()) {
            return Err(Error::Data(format!(
                "ticker {} has missing returns inside the estimation span",
                panel.tickers()[j]
            )));
        }
        let mean = col.iter().sum::<f64>() / span as f64;
        for (r, v) in col.iter().enumerate() {
            x[(r, j)] = v - mean;
        }
    }

    // Oldest window first: rows [0, tau), weight w(tau).
    let head = x.rows(0, tau);
    let mut q = head.transpose() * head;
    let mut s: DVector<f64> = head.row_sum().transpose();
    let mut acc = DMatrix::<f64>::zeros(n, n);
    let mut sd = vec![0.0; n];
    for t in (1..=tau).rev() {
        let start = span - tau - (t - 1);
        if t < tau {
            let (old, new) = (start - 1, start + tau - 1);
            for j in 0..n {
                let (xo, xn) = (x[(old, j)], x[(new, j)]);
                s[j] += xn - xo;
                for i in 0..=j {
                    q[(i, j)] += x[(new, i)] * xn - x[(old, i)] * xo;
                }
            }
        }
        let end_row = first + start + tau - 1;
        let tf = tau as f64;
        for j in 0..n {
            let window = x.view((start, j), (tau, 1));
            let lo = window.min();
            if lo == window.max() {
                return Err(Error::ZeroVariance {
                    ticker: panel.tickers()[j].clone(),
                    row: end_row,
                });
            }
            sd[j] = math::sqrt((q[(j, j)] - s[j] * s[j] / tf).max(f64::MIN_POSITIVE));
        }
        let w = weights[t - 1];
        for j in 0..n {
            for i in 0..j {
                let r = ((q[(i, j)] - s[i] * s[j] / tf) / (sd[i] * sd[j])).clamp(-1.0, 1.0);
                acc[(i, j)] += w * r;
            }
        }
    }
    for j in 0..n {
        acc[(j, j)] = 1.0;
        for i in 0..j {
            let v = acc[(i, j)].clamp(-1.0, 1.0);
            acc[(i, j)] = v;
            acc[(j, i)] = v;
        }
    }
    Ok(CorrelationMatrix {
        tickers: panel.tickers().to_vec(),
        c: acc,
        shrunk: false,
    })
}

/// Ledoit–Wolf single-index covariance estimate.
#[derive(Debug, Clone)]
pub struct SingleIndex {
    /// Sample covariance with the `1/T` normalization.
    pub sample: DMatrix<f64>,
    /// Single-index target; its diagonal equals the sample diagonal.
    pub prior: DMatrix<f64>,
    pub intensity: f64,
    /// Set when the estimated intensity fell outside `[0, 1]`.
    pub clamped: bool,
}

impl SingleIndex {
    /// `δ F + (1 - δ) S`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.prior * self.intensity + &self.sample * (1.0 - self.intensity)
    }
}

/// Estimates the single-index shrinkage target and its optimal intensity.
///
/// `returns` holds one row per observation. `market` defaults to the
/// equal-weighted cross-sectional mean. A supplied `intensity` replaces the
/// estimated one and must lie in `[0, 1]`.
pub fn single_index(
    returns: &DMatrix<f64>,
    market: Option<&[f64]>,
    intensity: Option<f64>,
) -> Result<SingleIndex> {
    let (t, n) = returns.shape();
    if t < 2 || n == 0 {
        return Err(Error::InvalidParameter(
            "shrinkage needs at least two observations".into(),
        ));
    }
    if let Some(d) = intensity {
        if !(0.0..=1.0).contains(&d) {
            return Err(Error::InvalidParameter(format!(
                "shrinkage intensity {d} outside [0, 1]"
            )));
        }
    }
    let tf = t as f64;
    let mut x = returns.clone();
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / tf;
        col.add_scalar_mut(-mean);
    }
    let mut mkt = match market {
        Some(m) if m.len() != t => {
            return Err(Error::Data(format!(
                "market series has {} rows, returns have {t}",
                m.len()
            )))
        }
        Some(m) => DVector::from_column_slice(m),
        None => DVector::from_fn(t, |r, _| returns.row(r).sum() / n as f64),
    };
    let mmean = mkt.sum() / tf;
    mkt.add_scalar_mut(-mmean);

    let sample = x.transpose() * &x / tf;
    let covmkt: DVector<f64> = x.transpose() * &mkt / tf;
    let varmkt = mkt.dot(&mkt) / tf;
    if !(varmkt > 0.0) {
        return Err(Error::Data("market proxy has zero variance".into()));
    }
    let mut prior = &covmkt * covmkt.transpose() / varmkt;
    for i in 0..n {
        prior[(i, i)] = sample[(i, i)];
    }

    let (delta, clamped) = match intensity {
        Some(d) => (d, false),
        None => {
            let c = (&sample - &prior).norm_squared();
            if c == 0.0 {
                (0.0, false)
            } else {
                let y = x.component_mul(&x);
                let p = (y.transpose() * &y).sum() / tf - sample.norm_squared();
                let rdiag = y.component_mul(&y).sum() / tf - sample.diagonal().norm_squared();
                let mut z = x.clone();
                for (r, mut row) in z.row_iter_mut().enumerate() {
                    row *= mkt[r];
                }
                let yz = y.transpose() * &z / tf;
                let zz = z.transpose() * &z / tf;
                let (mut roff1, mut roff3) = (0.0, 0.0);
                for j in 0..n {
                    for i in 0..n {
                        let v1 = yz[(i, j)] - covmkt[i] * sample[(i, j)];
                        let v3 = zz[(i, j)] - varmkt * sample[(i, j)];
                        if i != j {
                            roff1 += v1 * covmkt[j];
                            roff3 += v3 * covmkt[i] * covmkt[j];
                        }
                    }
                }
                let r = rdiag + 2.0 * roff1 / varmkt - roff3 / (varmkt * varmkt);
                let raw = (p - r) / c / tf;
                (raw.clamp(0.0, 1.0), !(0.0..=1.0).contains(&raw))
            }
        }
    };
    Ok(SingleIndex {
        sample,
        prior,
        intensity: delta,
        clamped,
    })
}

/// Result of [`shrink`].
#[derive(Debug, Clone)]
pub struct Shrunk {
    pub corr: CorrelationMatrix,
    pub intensity: f64,
    pub clamped: bool,
}

/// Shrinks a correlation matrix toward the single-index model.
///
/// The correlation is lifted to a covariance with the sample standard
/// deviations of `returns`, blended with the single-index target and
/// renormalized to unit diagonal.
pub fn shrink(
    corr: &CorrelationMatrix,
    returns: &DMatrix<f64>,
    market: Option<&[f64]>,
    intensity: Option<f64>,
) -> Result<Shrunk> {
    let n = corr.c.nrows();
    if returns.ncols() != n {
        return Err(Error::Data(format!(
            "correlation has {n} tickers, returns have {} columns",
            returns.ncols()
        )));
    }
    let est = single_index(returns, market, intensity)?;
    let mut sd = vec![0.0; n];
    for i in 0..n {
        let v = est.sample[(i, i)];
        if !(v > 0.0) {
            return Err(Error::ZeroVariance {
                ticker: corr.tickers[i].clone(),
                row: returns.nrows(),
            });
        }
        sd[i] = math::sqrt(v);
    }
    let d = est.intensity;
    let c = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            d * est.prior[(i, j)] / (sd[i] * sd[j]) + (1.0 - d) * corr.c[(i, j)]
        }
    });
    Ok(Shrunk {
        corr: CorrelationMatrix {
            tickers: corr.tickers.clone(),
            c,
            shrunk: true,
        },
        intensity: d,
        clamped: est.clamped,
    })
}

/// Applies one of the A1–A4 transforms elementwise.
pub fn apply_transform(c: &DMatrix<f64>, tag: Transform) -> DMatrix<f64> {
    match tag {
        Transform::A1 => c.clone(),
        Transform::A2 => c.map(|v| v.max(0.0)),
        Transform::A3 => c.map(|v| (-v).max(0.0)),
        Transform::A4 => c.map(math::abs),
    }
}
