//! Stock selection and constrained portfolio weights.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::corrmat;
use crate::linalg;
use crate::{Error, Result};

/// Which end of the centrality ranking to buy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Central,
    Peripheral,
}

impl Side {
    pub fn label(self) -> &'static str {
        match self {
            Side::Central => "central",
            Side::Peripheral => "peripheral",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "central" | "c" => Some(Side::Central),
            "peripheral" | "p" => Some(Side::Peripheral),
            _ => None,
        }
    }
}

/// Indices of the `m` highest (central) or lowest (peripheral) scores.
///
/// Equal scores are ordered by ticker. The result follows the ranking.
pub fn select(scores: &[f64], tickers: &[String], m: usize, side: Side) -> Result<Vec<usize>> {
    if scores.len() != tickers.len() {
        return Err(Error::Data(format!(
            "{} scores for {} tickers",
            scores.len(),
            tickers.len()
        )));
    }
    if m == 0 || m > scores.len() {
        return Err(Error::Data(format!(
            "cannot select {m} stocks from a universe of {}",
            scores.len()
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let by_score = match side {
            Side::Central => scores[b].total_cmp(&scores[a]),
            Side::Peripheral => scores[a].total_cmp(&scores[b]),
        };
        by_score.then_with(|| tickers[a].cmp(&tickers[b]))
    });
    idx.truncate(m);
    Ok(idx)
}

/// Per-weight box shared by every asset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const LONG_ONLY: Bounds = Bounds {
        lower: 0.0,
        upper: 0.25,
    };
    pub const LONG_SHORT: Bounds = Bounds {
        lower: -0.25,
        upper: 0.25,
    };

    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower > upper || !lower.is_finite() || !upper.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "invalid weight box [{lower}, {upper}]"
            )));
        }
        Ok(Bounds { lower, upper })
    }

    fn check_budget(&self, m: usize) -> Result<()> {
        let (lo, hi) = (self.lower * m as f64, self.upper * m as f64);
        if lo > 1.0 + 1e-12 || hi < 1.0 - 1e-12 {
            return Err(Error::Infeasible(format!(
                "{m} weights in [{}, {}] cannot sum to one",
                self.lower, self.upper
            )));
        }
        Ok(())
    }
}

/// Weighting rule applied to the selected stocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    EqualWeight,
    MinVarLongOnly,
    MinVarLongShort,
    MeanVarLongOnly,
    MeanVarLongShort,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::EqualWeight,
        Scheme::MinVarLongOnly,
        Scheme::MinVarLongShort,
        Scheme::MeanVarLongOnly,
        Scheme::MeanVarLongShort,
    ];

    /// Name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Scheme::EqualWeight => "EW",
            Scheme::MinVarLongOnly => "Min Var (LO)",
            Scheme::MinVarLongShort => "Min Var (LS)",
            Scheme::MeanVarLongOnly => "Mean-Var (LO)",
            Scheme::MeanVarLongShort => "Mean-Var (LS)",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Scheme::EqualWeight => "ew",
            Scheme::MinVarLongOnly => "minvar-lo",
            Scheme::MinVarLongShort => "minvar-ls",
            Scheme::MeanVarLongOnly => "meanvar-lo",
            Scheme::MeanVarLongShort => "meanvar-ls",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL.into_iter().find(|x| x.key() == s)
    }

    /// Long-short schemes use the wide box, the rest the long-only one.
    pub fn is_long_short(self) -> bool {
        matches!(self, Scheme::MinVarLongShort | Scheme::MeanVarLongShort)
    }
}

/// `m` weights of `1/m`.
pub fn equal_weights(m: usize) -> Vec<f64> {
    vec![1.0 / m as f64; m]
}

/// Optimal weights of a quadratic program.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// `½ xᵀΣx` with the caller's (unregularized) covariance.
    pub objective: f64,
    /// Largest violation among stationarity, feasibility and multiplier
    /// signs.
    pub kkt_residual: f64,
    pub iterations: usize,
}

const MAX_ITER: usize = 10_000;

/// Positive definite version of `sigma`: unchanged when it factors,
/// otherwise shifted by `1e-10 · tr(Σ)/m · I` (or `I` when the trace is 0).
fn regularize(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    if linalg::SpdFactor::new(sigma.clone()).is_ok() {
        return sigma.clone();
    }
    let m = sigma.nrows();
    let tr = sigma.trace();
    let shift = if tr > 0.0 { 1e-10 * tr / m as f64 } else { 1.0 };
    sigma + DMatrix::identity(m, m) * shift
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Free,
    Lower,
    Upper,
}

/// Primal active-set method for `min ½xᵀHx` subject to `E x = b` and a
/// common box, started from a feasible `x`.
///
/// The working set holds bound constraints only; the rows of `E` must be
/// linearly independent.
fn active_set(
    h: &DMatrix<f64>,
    e: &DMatrix<f64>,
    bounds: Bounds,
    mut x: Vec<f64>,
) -> Result<(Vec<f64>, f64, usize)> {
    let m = x.len();
    let k = e.nrows();
    let (l, u) = (bounds.lower, bounds.upper);
    let snap = 1e-14 * (1.0 + l.abs().max(u.abs()));
    let mut status = vec![Status::Free; m];
    for i in 0..m {
        if (x[i] - l).abs() <= snap {
            x[i] = l;
            status[i] = Status::Lower;
        } else if (x[i] - u).abs() <= snap {
            x[i] = u;
            status[i] = Status::Upper;
        }
    }
    let full_rank = |status: &[Status]| {
        let free: Vec<usize> = (0..m).filter(|&i| status[i] == Status::Free).collect();
        let ef = DMatrix::from_fn(k, free.len(), |r, c| e[(r, free[c])]);
        free.len() >= k && ef.svd(false, false).rank(1e-10 * e.amax().max(1.0)) == k
    };
    // Free bounds until the equality rows stay independent on the free set.
    loop {
        if full_rank(&status) {
            break;
        }
        match (0..m).find(|&i| status[i] != Status::Free) {
            Some(i) => status[i] = Status::Free,
            None => {
                return Err(Error::Numeric(
                    "equality constraints are linearly dependent".into(),
                ))
            }
        }
    }
    // Set after a full unblocked step: the iterate minimizes the working
    // face up to rounding, whatever the size of the next correction.
    let mut face_min = false;
    let mut released: Option<usize> = None;
    for it in 0..MAX_ITER {
        let free: Vec<usize> = (0..m).filter(|&i| status[i] == Status::Free).collect();
        let nf = free.len();
        let xv = DVector::from_column_slice(&x);
        let g = h * &xv;
        let mut kkt = DMatrix::zeros(nf + k, nf + k);
        let mut rhs = DVector::zeros(nf + k);
        for (a, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                kkt[(a, c)] = h[(i, j)];
            }
            for r in 0..k {
                kkt[(a, nf + r)] = e[(r, i)];
                kkt[(nf + r, a)] = e[(r, i)];
            }
            rhs[a] = -g[i];
        }
        let sol = kkt
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numeric("singular KKT system in the active-set method".into()))?;
        let pmax = (0..nf).fold(0.0f64, |acc, a| acc.max(sol[a].abs()));
        let xmax = x.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        if face_min || pmax <= 1e-13 * xmax {
            // Stationary on the working face: inspect bound multipliers.
            let lambda: Vec<f64> = (0..k).map(|r| -sol[nf + r]).collect();
            let mut worst: Option<(usize, f64)> = None;
            let mut resid = 0.0f64;
            for i in 0..m {
                let eta: f64 = (0..k).map(|r| e[(r, i)] * lambda[r]).sum();
                let gi = g[i] - eta;
                let mu = match status[i] {
                    Status::Free => {
                        resid = resid.max(gi.abs());
                        continue;
                    }
                    Status::Lower => gi,
                    Status::Upper => -gi,
                };
                if mu < 0.0 && worst.is_none_or(|(_, w)| mu < w) {
                    worst = Some((i, mu));
                }
            }
            let gscale = g.amax().max(f64::MIN_POSITIVE);
            match worst {
                Some((i, mu)) if mu < -1e-12 * gscale => {
                    status[i] = Status::Free;
                    released = Some(i);
                    face_min = false;
                }
                _ => {
                    let neg = worst.map_or(0.0, |(_, w)| -w);
                    return Ok((x, resid.max(neg), it + 1));
                }
            }
            continue;
        }
        let mut step = 1.0;
        let mut block: Option<(usize, Status)> = None;
        for (a, &i) in free.iter().enumerate() {
            let p = sol[a];
            let (lim, st) = if p < 0.0 {
                ((l - x[i]) / p, Status::Lower)
            } else if p > 0.0 {
                ((u - x[i]) / p, Status::Upper)
            } else {
                continue;
            };
            if released == Some(i) && lim <= 0.0 {
                continue;
            }
            if lim < step {
                step = lim.max(0.0);
                block = Some((i, st));
            }
        }
        if let Some((i, st)) = block {
            // A bound that would make the equality rows dependent can only
            // block a direction made of rounding noise.
            status[i] = st;
            let independent = full_rank(&status);
            status[i] = Status::Free;
            if !independent {
                face_min = true;
                released = None;
                continue;
            }
        }
        for (a, &i) in free.iter().enumerate() {
            x[i] = (x[i] + step * sol[a]).clamp(l, u);
        }
        if let Some((i, st)) = block {
            x[i] = if st == Status::Lower { l } else { u };
            status[i] = st;
        }
        face_min = block.is_none();
        released = None;
    }
    Err(Error::Numeric(format!(
        "active-set method did not converge in {MAX_ITER} iterations"
    )))
}

fn finish(
    sigma: &DMatrix<f64>,
    e: &DMatrix<f64>,
    b: &[f64],
    bounds: Bounds,
    x: Vec<f64>,
    stat: f64,
    iterations: usize,
) -> QpSolution {
    let xv = DVector::from_column_slice(&x);
    let objective = 0.5 * xv.dot(&(sigma * &xv));
    let mut resid = stat;
    for r in 0..e.nrows() {
        resid = resid.max((e.row(r).transpose().dot(&xv) - b[r]).abs());
    }
    for &v in &x {
        resid = resid.max(bounds.lower - v).max(v - bounds.upper);
    }
    QpSolution {
        x,
        objective,
        kkt_residual: resid,
        iterations,
    }
}

/// A feasible point with unit budget: lower bounds, then fill in order.
fn budget_start(m: usize, bounds: Bounds) -> Vec<f64> {
    let mut x = vec![bounds.lower; m];
    let mut left = 1.0 - bounds.lower * m as f64;
    for v in x.iter_mut() {
        let add = left.min(bounds.upper - bounds.lower).max(0.0);
        *v += add;
        left -= add;
    }
    x
}

fn check_sigma(sigma: &DMatrix<f64>) -> Result<()> {
    if !sigma.is_square() || sigma.nrows() == 0 {
        return Err(Error::InvalidParameter(
            "covariance must be a nonempty square matrix".into(),
        ));
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("covariance has non-finite entries".into()));
    }
    Ok(())
}

/// Minimum-variance weights under the budget and a common box.
pub fn min_variance(sigma: &DMatrix<f64>, bounds: Bounds) -> Result<QpSolution> {
    check_sigma(sigma)?;
    let m = sigma.nrows();
    bounds.check_budget(m)?;
    let h = regularize(sigma);
    let e = DMatrix::from_element(1, m, 1.0);
    let (x, stat, it) = active_set(&h, &e, bounds, budget_start(m, bounds))?;
    Ok(finish(sigma, &e, &[1.0], bounds, x, stat, it))
}

/// Extreme expected return under budget and box, with its vertex.
///
/// Filling the best (or worst) assets first solves the linear program.
pub fn extreme_return(r: &[f64], bounds: Bounds, maximize: bool) -> Result<(f64, Vec<f64>)> {
    let m = r.len();
    bounds.check_budget(m)?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        let c = r[a].total_cmp(&r[b]);
        (if maximize { c.reverse() } else { c }).then(a.cmp(&b))
    });
    let mut x = vec![bounds.lower; m];
    let mut left = 1.0 - bounds.lower * m as f64;
    for &i in &order {
        let add = left.min(bounds.upper - bounds.lower).max(0.0);
        x[i] += add;
        left -= add;
    }
    let value = x.iter().zip(r).map(|(a, b)| a * b).sum();
    Ok((value, x))
}

/// How the requested target return was handled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetOutcome {
    /// The requested target was attainable.
    Met,
    /// The target exceeded the attainable maximum, which was used instead.
    LoweredToMax(f64),
    /// The target was below the attainable minimum, which was used instead.
    RaisedToMin(f64),
    /// No positive return was attainable; minimum variance was used.
    MinVarianceFallback,
    /// All expected returns coincide; the return constraint is redundant.
    Redundant,
}

/// Result of [`mean_variance`].
#[derive(Debug, Clone, PartialEq)]
pub struct MeanVarSolution {
    pub solution: QpSolution,
    pub target: f64,
    pub outcome: TargetOutcome,
}

/// Minimum variance at expected return `r_target`, under budget and box.
///
/// A target above the attainable maximum `r_max` is lowered to `r_max`
/// when that is positive; otherwise minimum-variance weights are returned.
pub fn mean_variance(
    sigma: &DMatrix<f64>,
    r: &[f64],
    r_target: f64,
    bounds: Bounds,
) -> Result<MeanVarSolution> {
    check_sigma(sigma)?;
    let m = sigma.nrows();
    if r.len() != m || r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(
            "expected returns must be finite and match the covariance".into(),
        ));
    }
    bounds.check_budget(m)?;
    let (r_max, x_max) = extreme_return(r, bounds, true)?;
    let (r_min, x_min) = extreme_return(r, bounds, false)?;
    let scale = r.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let tol = 1e-12 * scale.max(r_target.abs());

    if r_max - r_min <= 1e-13 * scale {
        let solution = min_variance(sigma, bounds)?;
        return Ok(MeanVarSolution {
            solution,
            target: r_max,
            outcome: TargetOutcome::Redundant,
        });
    }
    let (target, outcome) = if r_target > r_max + tol {
        if r_max > 0.0 {
            (r_max, TargetOutcome::LoweredToMax(r_max))
        } else {
            let solution = min_variance(sigma, bounds)?;
            let target = solution.x.iter().zip(r).map(|(a, b)| a * b).sum();
            return Ok(MeanVarSolution {
                solution,
                target,
                outcome: TargetOutcome::MinVarianceFallback,
            });
        }
    } else if r_target < r_min - tol {
        (r_min, TargetOutcome::RaisedToMin(r_min))
    } else {
        (r_target.clamp(r_min, r_max), TargetOutcome::Met)
    };
    let t = ((target - r_min) / (r_max - r_min)).clamp(0.0, 1.0);
    let x0: Vec<f64> = x_min
        .iter()
        .zip(&x_max)
        .map(|(a, b)| (1.0 - t) * a + t * b)
        .collect();
    let h = regularize(sigma);
    let mut e = DMatrix::from_element(2, m, 1.0);
    for j in 0..m {
        e[(1, j)] = r[j];
    }
    let rhs = [1.0, target];
    let (x, stat, it) = active_set(&h, &e, bounds, x0)?;
    let solution = finish(sigma, &e, &rhs, bounds, x, stat, it);
    Ok(MeanVarSolution {
        solution,
        target,
        outcome,
    })
}

/// Covariance of daily returns and annualized mean returns over the
/// training rows.
///
/// `returns` holds one row per day. The plain estimate is the `n - 1`
/// sample covariance; with `shrunk` it is the single-index shrinkage
/// estimate rescaled to the same normalization.
pub fn covariance_from_train(
    returns: &DMatrix<f64>,
    shrunk: bool,
    annualization: f64,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (t, m) = returns.shape();
    if t < 2 {
        return Err(Error::Data(format!(
            "need at least 2 training rows, got {t}"
        )));
    }
    if returns.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data(
            "training returns contain missing values".into(),
        ));
    }
    let tf = t as f64;
    let means: Vec<f64> = (0..m).map(|j| returns.column(j).sum() / tf).collect();
    let r = means.iter().map(|v| v * annualization).collect();
    let sigma = if shrunk {
        let zero_var = (0..m).any(|j| returns.column(j).iter().all(|&v| v == returns[(0, j)]));
        if zero_var {
            sample_covariance(returns)
        } else {
            corrmat::single_index(returns, None, None)?.covariance() * (tf / (tf - 1.0))
        }
    } else {
        sample_covariance(returns)
    };
    Ok((sigma, r))
}

fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (t, m) = x.shape();
    let mut centered = DMatrix::from_fn(t, m, |r, c| x[(r, c)] - x[(0, c)]);
    for mut col in centered.column_iter_mut() {
        let mu = col.sum() / t as f64;
        col.add_scalar_mut(-mu);
    }
    let mut s = centered.transpose() * &centered / (t as f64 - 1.0);
    for j in 0..m {
        for i in 0..j {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    s
}

/// Objective comparison helper for callers ranking candidate weights.
pub fn variance(sigma: &DMatrix<f64>, x: &[f64]) -> f64 {
    let xv = DVector::from_column_slice(x);
    xv.dot(&(sigma * &xv))
}
