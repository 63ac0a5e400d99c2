//! Performance and risk statistics of a daily return series.

use alloc::format;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Reporting conventions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsConfig {
    /// Trading days per year.
    pub annualization: f64,
    /// Tail probability for VaR and CVaR, in basis points (500 = 5%).
    pub var_level_bp: u32,
    /// Factor applied to the daily VaR and CVaR before reporting.
    pub var_scale: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            annualization: 252.0,
            var_level_bp: 500,
            var_scale: 1.0,
        }
    }
}

/// One row of the performance tables. `None` marks a ratio whose
/// denominator vanished.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub cr: f64,
    pub er: f64,
    pub sd: f64,
    pub sr: Option<f64>,
    pub var005: f64,
    pub cvar005: f64,
    pub max_dd: f64,
    pub omega: Option<f64>,
    pub sortino: Option<f64>,
    pub up: Option<f64>,
}

/// Minimum series length accepted by [`var_cvar`].
pub const MIN_VAR_LEN: usize = 20;

fn mean(x: &[f64]) -> f64 {
    let x0 = x[0];
    x0 + x.iter().map(|v| v - x0).sum::<f64>() / x.len() as f64
}

/// Sample standard deviation; exactly zero for a constant series.
pub fn sample_sd(x: &[f64]) -> f64 {
    if x.len() < 2 || x.iter().all(|&v| v == x[0]) {
        return 0.0;
    }
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    math::sqrt(ss / (x.len() - 1) as f64)
}

/// Daily portfolio returns `Σ_i x_i r_{i,t}`; `rows[t]` lists the asset
/// returns of day `t` in weight order.
pub fn realized_returns(weights: &[f64], rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    rows.iter()
        .enumerate()
        .map(|(t, row)| {
            if row.len() != weights.len() {
                return Err(Error::Data(format!(
                    "day {t} has {} returns for {} weights",
                    row.len(),
                    weights.len()
                )));
            }
            Ok(weights.iter().zip(row).map(|(w, r)| w * r).sum())
        })
        .collect()
}

/// Annualized Sharpe ratio.
pub fn sharpe(rp: &[f64], rf: &[f64], annualization: f64) -> Option<f64> {
    let sd = sample_sd(rp);
    if sd == 0.0 {
        return None;
    }
    Some((mean(rp) - mean(rf)) * annualization / (sd * math::sqrt(annualization)))
}

/// Portfolio value path starting at 100, including the initial value.
pub fn portfolio_values(rp: &[f64]) -> Vec<f64> {
    let mut pv = Vec::with_capacity(rp.len() + 1);
    let mut v = 100.0;
    pv.push(v);
    for r in rp {
        v *= 1.0 + r;
        pv.push(v);
    }
    pv
}

/// Largest decline from a running peak, in percent of the peak.
pub fn max_drawdown(pv: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &v in pv {
        peak = peak.max(v);
        if peak > 0.0 {
            worst = worst.max((peak - v) / peak * 100.0);
        }
    }
    worst
}

/// Lower partial moment `mean(max(r_b - r_p, 0)^n)` with a per-day
/// benchmark.
pub fn lpm(rp: &[f64], rb: &[f64], n: i32) -> f64 {
    let s: f64 = rp
        .iter()
        .zip(rb)
        .map(|(p, b)| math::powi((b - p).max(0.0), n))
        .sum();
    s / rp.len() as f64
}

fn upm1(rp: &[f64], rb: &[f64]) -> f64 {
    rp.iter()
        .zip(rb)
        .map(|(p, b)| (p - b).max(0.0))
        .sum::<f64>()
        / rp.len() as f64
}

/// Kappa ratio `(E[r_p] - E[r_b]) / LPM_n^{1/n}` for `n ∈ {1, 2}`.
pub fn kappa(rp: &[f64], rb: &[f64], n: i32) -> Option<f64> {
    let l = lpm(rp, rb, n);
    if l == 0.0 {
        return None;
    }
    match n {
        // E[r_p - r_b] = E[(r_p - r_b)+] - LPM_1, which avoids cancellation.
        1 => Some(upm1(rp, rb) / l - 1.0),
        2 => Some((mean(rp) - mean(rb)) / math::sqrt(l)),
        _ => Some((mean(rp) - mean(rb)) / math::exp(math::ln(l) / n as f64)),
    }
}

/// Omega ratio `1 + K_1`.
pub fn omega(rp: &[f64], rb: &[f64]) -> Option<f64> {
    let l = lpm(rp, rb, 1);
    (l != 0.0).then(|| upm1(rp, rb) / l)
}

/// Sortino ratio `K_2`.
pub fn sortino(rp: &[f64], rb: &[f64]) -> Option<f64> {
    kappa(rp, rb, 2)
}

/// Upside potential `E[(r_p - r_b)+] / √LPM_2`.
pub fn upside_potential(rp: &[f64], rb: &[f64]) -> Option<f64> {
    let l = lpm(rp, rb, 2);
    (l != 0.0).then(|| upm1(rp, rb) / math::sqrt(l))
}

/// Empirical VaR and CVaR of daily returns.
///
/// VaR is the order statistic at 1-based position `⌈level · T⌉` of the
/// ascending returns; CVaR averages every return at or below it.
pub fn var_cvar(rp: &[f64], level_bp: u32) -> Result<(f64, f64)> {
    let t = rp.len();
    if t < MIN_VAR_LEN {
        return Err(Error::Data(format!(
            "VaR needs at least {MIN_VAR_LEN} returns, got {t}"
        )));
    }
    if level_bp == 0 || level_bp > 10_000 {
        return Err(Error::InvalidParameter(format!(
            "VaR level {level_bp} bp outside (0, 10000]"
        )));
    }
    let k = (t * level_bp as usize).div_ceil(10_000).max(1);
    let mut sorted = rp.to_vec();
    sorted.sort_by(f64::total_cmp);
    let var = sorted[k - 1];
    let tail: Vec<f64> = sorted.iter().copied().filter(|&v| v <= var).collect();
    Ok((var, mean(&tail)))
}

/// `Π(1 + r_t) - 1`, summed in log space while every factor is positive.
pub fn cumulative_return(rp: &[f64]) -> f64 {
    if rp.iter().all(|&r| r > -1.0) {
        math::expm1(rp.iter().map(|&r| math::log1p(r)).sum())
    } else {
        rp.iter().fold(1.0, |acc, r| acc * (1.0 + r)) - 1.0
    }
}

/// Full metrics row for portfolio returns `rp` against risk-free `rf` and
/// benchmark `rb`, all daily and aligned.
pub fn panel_row(rp: &[f64], rf: &[f64], rb: &[f64], cfg: &MetricsConfig) -> Result<MetricsRow> {
    if rp.len() != rf.len() || rp.len() != rb.len() {
        return Err(Error::Data(format!(
            "series lengths differ: portfolio {}, risk-free {}, benchmark {}",
            rp.len(),
            rf.len(),
            rb.len()
        )));
    }
    if rp.iter().chain(rf).chain(rb).any(|v| !v.is_finite()) {
        return Err(Error::Data(
            "return series contain non-finite values".into(),
        ));
    }
    let (var, cvar) = var_cvar(rp, cfg.var_level_bp)?;
    Ok(MetricsRow {
        cr: cumulative_return(rp),
        er: mean(rp) * cfg.annualization,
        sd: sample_sd(rp) * math::sqrt(cfg.annualization),
        sr: sharpe(rp, rf, cfg.annualization),
        var005: var * cfg.var_scale,
        cvar005: cvar * cfg.var_scale,
        max_dd: max_drawdown(&portfolio_values(rp)),
        omega: omega(rp, rb),
        sortino: sortino(rp, rb),
        up: upside_potential(rp, rb),
    })
}
