//! Walk-forward protocol: estimate on year `t`, hold through year `t + 1`.
//!
//! A [`Walkforward`] splits a returns panel into calendar-year folds. Each
//! grid cell ([`CellConfig`]) picks a transform, graph construction,
//! centrality, side and weighting scheme; [`Walkforward::run_cell`] applies
//! it to every fold and scores the concatenated out-of-sample returns.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::ops::Range;

use nalgebra::DMatrix;

use crate::centrality::{self, CentralityVector, Measure};
use crate::corrmat::{self, CorrelationMatrix, Transform};
use crate::graphbuild::{self, AdjacencyOption};
use crate::metrics::{self, MetricsConfig, MetricsRow};
use crate::panel::ReturnsPanel;
use crate::portfolio::{self, Bounds, Scheme, Side, TargetOutcome};
use crate::{Error, Result};

/// Settings shared by every cell of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    /// Correlation window length in trading days.
    pub tau: usize,
    /// Number of stocks held.
    pub m: usize,
    /// Annual target return for mean-variance schemes.
    pub r_target: f64,
    pub long_only: Bounds,
    pub long_short: Bounds,
    pub metrics: MetricsConfig,
    /// Fixed shrinkage intensity instead of the estimated one.
    pub shrink_intensity: Option<f64>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            tau: 125,
            m: 10,
            r_target: 0.10,
            long_only: Bounds::LONG_ONLY,
            long_short: Bounds::LONG_SHORT,
            metrics: MetricsConfig::default(),
            shrink_intensity: None,
        }
    }
}

/// One point of the configuration grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellConfig {
    pub transform: Transform,
    pub shrink: bool,
    pub option: AdjacencyOption,
    /// Threshold; `None` for constructions that do not use one.
    pub theta: Option<f64>,
    pub measure: Measure,
    /// Fraction of `α_max`; `None` for parameter-free measures and Katz-min.
    pub alpha_fraction: Option<f64>,
    pub side: Side,
    pub scheme: Scheme,
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x}"))
}

impl CellConfig {
    /// Canonical text form; equal cells have equal keys.
    pub fn key(&self) -> String {
        format!(
            "{}|shrink={}|option={}|theta={}|{}|alpha={}|{}|{}",
            self.transform.label(),
            if self.shrink { "Y" } else { "N" },
            self.option,
            opt_num(self.theta),
            self.measure.key(),
            opt_num(self.alpha_fraction),
            self.side.label(),
            self.scheme.key()
        )
    }

    fn sort_tuple(
        &self,
    ) -> (
        Transform,
        bool,
        AdjacencyOption,
        u64,
        Measure,
        u64,
        Side,
        Scheme,
    ) {
        let bits = |v: Option<f64>| v.map_or(0, |x| x.to_bits().wrapping_add(1));
        (
            self.transform,
            self.shrink,
            self.option,
            bits(self.theta),
            self.measure,
            bits(self.alpha_fraction),
            self.side,
            self.scheme,
        )
    }

    /// Key of the centrality computation this cell needs; shared by every
    /// side and scheme.
    pub fn score_key(&self) -> ScoreKey {
        ScoreKey {
            transform: self.transform,
            shrink: self.shrink,
            option: self.option,
            theta_bits: self.theta.map(f64::to_bits),
            measure: self.measure,
            alpha_bits: self.alpha_fraction.map(f64::to_bits),
        }
    }

    pub fn bounds(&self, cfg: &ProtocolConfig) -> Bounds {
        if self.scheme.is_long_short() {
            cfg.long_short
        } else {
            cfg.long_only
        }
    }
}

impl fmt::Display for CellConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// Identity of a cached centrality evaluation within a fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScoreKey {
    pub transform: Transform,
    pub shrink: bool,
    pub option: AdjacencyOption,
    pub theta_bits: Option<u64>,
    pub measure: Measure,
    pub alpha_bits: Option<u64>,
}

/// Lists of values to combine into grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub transforms: Vec<Transform>,
    pub shrink: Vec<bool>,
    pub options: Vec<AdjacencyOption>,
    pub thetas: Vec<f64>,
    pub measures: Vec<Measure>,
    pub alpha_fractions: Vec<f64>,
    pub sides: Vec<Side>,
    pub schemes: Vec<Scheme>,
}

/// `0.0, 0.1, …, 0.9`.
pub fn theta_grid() -> Vec<f64> {
    (0..10).map(|k| k as f64 / 10.0).collect()
}

/// `0.1, 0.2, …, 0.9`.
pub fn alpha_grid() -> Vec<f64> {
    (1..10).map(|k| k as f64 / 10.0).collect()
}

impl GridConfig {
    /// Every transform, shrinkage setting, construction, threshold,
    /// measure, α fraction, side and scheme.
    pub fn full() -> Self {
        let mut options: Vec<AdjacencyOption> = (1..=8).map(AdjacencyOption::Threshold).collect();
        options.extend([
            AdjacencyOption::Raw,
            AdjacencyOption::RawNoLoops,
            AdjacencyOption::Mst,
        ]);
        GridConfig {
            transforms: Transform::ALL.to_vec(),
            shrink: vec![false, true],
            options,
            thetas: theta_grid(),
            measures: Measure::ALL.to_vec(),
            alpha_fractions: alpha_grid(),
            sides: vec![Side::Central, Side::Peripheral],
            schemes: Scheme::ALL.to_vec(),
        }
    }

    /// Valid cells in canonical order, without duplicates.
    ///
    /// Thresholds apply only to threshold constructions and α fractions
    /// only to measures on the α grid.
    pub fn cells(&self) -> Vec<CellConfig> {
        let mut graphs: Vec<(AdjacencyOption, Option<f64>)> = Vec::new();
        for &option in &self.options {
            if option.uses_theta() {
                graphs.extend(self.thetas.iter().map(|&t| (option, Some(t))));
            } else {
                graphs.push((option, None));
            }
        }
        let mut scored: Vec<(Measure, Option<f64>)> = Vec::new();
        for &measure in &self.measures {
            if measure.takes_alpha_fraction() {
                scored.extend(self.alpha_fractions.iter().map(|&a| (measure, Some(a))));
            } else {
                scored.push((measure, None));
            }
        }
        let mut out = Vec::new();
        for &transform in &self.transforms {
            for &shrink in &self.shrink {
                for &(option, theta) in &graphs {
                    for &(measure, alpha_fraction) in &scored {
                        for &side in &self.sides {
                            for &scheme in &self.schemes {
                                out.push(CellConfig {
                                    transform,
                                    shrink,
                                    option,
                                    theta,
                                    measure,
                                    alpha_fraction,
                                    side,
                                    scheme,
                                });
                            }
                        }
                    }
                }
            }
        }
        out.sort_by_key(|c| c.sort_tuple());
        out.dedup_by(|a, b| a.sort_tuple() == b.sort_tuple());
        out
    }
}

/// One train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train_year: i32,
    pub test_year: i32,
    pub train_rows: Range<usize>,
    pub test_rows: Range<usize>,
    /// Rows feeding the rolling correlation, ending with the train year.
    pub estimation_rows: Range<usize>,
    /// Panel columns eligible in this fold.
    pub universe: Vec<usize>,
    /// Panel columns excluded for missing or constant data.
    pub dropped: Vec<usize>,
}

/// Correlation matrix of a fold's universe.
#[derive(Debug, Clone)]
pub struct FoldCorrelation {
    pub corr: CorrelationMatrix,
    pub shrink_intensity: Option<f64>,
    pub shrink_clamped: bool,
}

/// Per-fold audit trail of a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldTrace {
    pub train_year: i32,
    pub test_year: i32,
    pub universe: usize,
    pub theta: Option<f64>,
    pub alpha: Option<f64>,
    pub alpha_max: Option<f64>,
    pub spectral_radius: Option<f64>,
    pub degenerate: bool,
    pub shrink_intensity: Option<f64>,
    pub shrink_clamped: bool,
    pub selected: Vec<String>,
    pub weights: Vec<f64>,
    pub target: Option<TargetOutcome>,
    pub kkt_residual: Option<f64>,
    /// Compounded return over the test year.
    pub test_return: f64,
}

/// Machine-readable failure category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureCode {
    UniverseTooSmall,
    InvalidParameter,
    InsufficientHistory,
    Data,
    Infeasible,
    Numeric,
}

impl FailureCode {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureCode::UniverseTooSmall => "universe-too-small",
            FailureCode::InvalidParameter => "invalid-parameter",
            FailureCode::InsufficientHistory => "insufficient-history",
            FailureCode::Data => "data",
            FailureCode::Infeasible => "infeasible",
            FailureCode::Numeric => "numeric",
        }
    }

    /// Inverse of [`FailureCode::as_str`].
    pub fn parse(s: &str) -> Option<Self> {
        [
            FailureCode::UniverseTooSmall,
            FailureCode::InvalidParameter,
            FailureCode::InsufficientHistory,
            FailureCode::Data,
            FailureCode::Infeasible,
            FailureCode::Numeric,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
    }

    fn of(e: &Error) -> Self {
        match e {
            Error::InvalidParameter(_) => FailureCode::InvalidParameter,
            Error::InsufficientHistory { .. } => FailureCode::InsufficientHistory,
            Error::ZeroVariance { .. } | Error::Data(_) => FailureCode::Data,
            Error::Infeasible(_) => FailureCode::Infeasible,
            Error::Numeric(_) => FailureCode::Numeric,
        }
    }
}

/// Why a cell produced no metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub code: FailureCode,
    pub train_year: Option<i32>,
    pub message: String,
}

impl fmt::Display for CellFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.train_year {
            Some(y) => write!(
                f,
                "{} (train year {y}): {}",
                self.code.as_str(),
                self.message
            ),
            None => write!(f, "{}: {}", self.code.as_str(), self.message),
        }
    }
}

/// Metrics and trail of a completed cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSuccess {
    pub metrics: MetricsRow,
    pub folds: Vec<FoldTrace>,
    /// Concatenated out-of-sample daily returns.
    pub returns: Vec<f64>,
}

impl CellSuccess {
    pub fn degenerate_folds(&self) -> usize {
        self.folds.iter().filter(|f| f.degenerate).count()
    }

    pub fn fallback_folds(&self) -> usize {
        self.folds
            .iter()
            .filter(|f| !matches!(f.target, None | Some(TargetOutcome::Met)))
            .count()
    }
}

pub type CellResult = core::result::Result<CellSuccess, CellFailure>;

/// Memoization hook for work shared between cells.
pub trait FoldCache: Sync {
    fn correlation(
        &self,
        fold: usize,
        shrink: bool,
        compute: &dyn Fn() -> Result<Arc<FoldCorrelation>>,
    ) -> Result<Arc<FoldCorrelation>>;

    fn scores(
        &self,
        fold: usize,
        key: ScoreKey,
        compute: &dyn Fn() -> Result<Arc<CentralityVector>>,
    ) -> Result<Arc<CentralityVector>>;
}

/// A cache that always recomputes.
pub struct NoCache;

impl FoldCache for NoCache {
    fn correlation(
        &self,
        _: usize,
        _: bool,
        compute: &dyn Fn() -> Result<Arc<FoldCorrelation>>,
    ) -> Result<Arc<FoldCorrelation>> {
        compute()
    }

    fn scores(
        &self,
        _: usize,
        _: ScoreKey,
        compute: &dyn Fn() -> Result<Arc<CentralityVector>>,
    ) -> Result<Arc<CentralityVector>> {
        compute()
    }
}

/// A panel split into folds together with aligned rate series.
pub struct Walkforward<'a> {
    panel: &'a ReturnsPanel,
    rf: Vec<f64>,
    rb: Vec<f64>,
    market: Option<Vec<f64>>,
    cfg: ProtocolConfig,
    folds: Vec<Fold>,
    skipped: Vec<(i32, String)>,
}

/// True when some window of `tau` consecutive values is constant.
fn has_flat_window(col: &[f64], tau: usize) -> bool {
    let mut run = 1;
    for k in 1..col.len() {
        if col[k] == col[k - 1] {
            run += 1;
            if run >= tau {
                return true;
            }
        } else {
            run = 1;
        }
    }
    tau <= 1 && !col.is_empty()
}

impl<'a> Walkforward<'a> {
    /// Splits `panel` into consecutive calendar-year folds.
    ///
    /// `rf`, `rb` and `market` are daily series aligned with the panel rows;
    /// absent rate series are zero and an absent market series means the
    /// equal-weighted universe mean. Train years without `2τ - 1` rows of
    /// history are skipped and listed in [`Walkforward::skipped`].
    pub fn new(
        panel: &'a ReturnsPanel,
        rf: Option<&[f64]>,
        rb: Option<&[f64]>,
        market: Option<&[f64]>,
        cfg: ProtocolConfig,
    ) -> Result<Self> {
        let n = panel.n_rows();
        for (name, s) in [("risk-free", rf), ("benchmark", rb), ("market", market)] {
            if let Some(s) = s {
                if s.len() != n {
                    return Err(Error::Data(format!(
                        "{name} series has {} rows, panel has {n}",
                        s.len()
                    )));
                }
                if s.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data(format!("{name} series has missing values")));
                }
            }
        }
        if cfg.tau < 2 {
            return Err(Error::InvalidParameter(format!(
                "correlation window {} is below 2",
                cfg.tau
            )));
        }
        if cfg.m == 0 {
            return Err(Error::InvalidParameter(
                "portfolio size must be positive".into(),
            ));
        }
        let span = 2 * cfg.tau - 1;
        let years = panel.year_ranges();
        let mut folds = Vec::new();
        let mut skipped = Vec::new();
        for w in years.windows(2) {
            let (ty, train) = (w[0].0, w[0].1.clone());
            let (sy, test) = (w[1].0, w[1].1.clone());
            if train.end < span {
                skipped.push((
                    ty,
                    format!(
                        "needs {span} rows of history ending with the year, has {}",
                        train.end
                    ),
                ));
                continue;
            }
            let estimation_rows = train.end - span..train.end;
            let history = estimation_rows.start.min(train.start)..train.end;
            let mut universe = Vec::new();
            let mut dropped = Vec::new();
            for j in 0..panel.n_assets() {
                let col = &panel.column(j)[estimation_rows.clone()];
                if panel.is_observed(j, history.clone()) && !has_flat_window(col, cfg.tau) {
                    universe.push(j);
                } else {
                    dropped.push(j);
                }
            }
            folds.push(Fold {
                train_year: ty,
                test_year: sy,
                train_rows: train,
                test_rows: test,
                estimation_rows,
                universe,
                dropped,
            });
        }
        if folds.is_empty() {
            return Err(Error::InsufficientHistory {
                needed: span,
                earliest: span - 1,
            });
        }
        Ok(Walkforward {
            panel,
            rf: rf.map_or_else(|| vec![0.0; n], <[f64]>::to_vec),
            rb: rb.map_or_else(|| vec![0.0; n], <[f64]>::to_vec),
            market: market.map(<[f64]>::to_vec),
            cfg,
            folds,
            skipped,
        })
    }

    /// Keeps only the folds whose train year lies in `first..=last`.
    pub fn with_train_years(mut self, first: i32, last: i32) -> Result<Self> {
        if first > last {
            return Err(Error::InvalidParameter(format!(
                "empty train-year range {first}:{last}"
            )));
        }
        let (keep, drop): (Vec<Fold>, Vec<Fold>) = self
            .folds
            .into_iter()
            .partition(|f| (first..=last).contains(&f.train_year));
        self.skipped.retain(|(y, _)| (first..=last).contains(y));
        if keep.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "no usable train year in {first}:{last} ({} available elsewhere)",
                drop.len()
            )));
        }
        self.folds = keep;
        Ok(self)
    }

    pub fn folds(&self) -> &[Fold] {
        &self.folds
    }

    pub fn skipped(&self) -> &[(i32, String)] {
        &self.skipped
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.cfg
    }

    pub fn panel(&self) -> &ReturnsPanel {
        self.panel
    }

    /// Rolling correlation of the fold's universe at the end of the train
    /// year, optionally shrunk.
    pub fn correlation(&self, fold: usize, shrink: bool) -> Result<FoldCorrelation> {
        let f = &self.folds[fold];
        let sub = self
            .panel
            .select_rows(f.estimation_rows.clone())
            .select_columns(&f.universe);
        let corr = corrmat::weighted_correlation(&sub, self.cfg.tau, sub.n_rows() - 1)?;
        if !shrink {
            return Ok(FoldCorrelation {
                corr,
                shrink_intensity: None,
                shrink_clamped: false,
            });
        }
        let market = self.market.as_ref().map(|m| &m[f.estimation_rows.clone()]);
        let s = corrmat::shrink(&corr, sub.values(), market, self.cfg.shrink_intensity)?;
        Ok(FoldCorrelation {
            corr: s.corr,
            shrink_intensity: Some(s.intensity),
            shrink_clamped: s.clamped,
        })
    }

    /// Centrality scores of the fold's universe for the cell's graph and
    /// measure.
    pub fn scores(&self, corr: &FoldCorrelation, cell: &CellConfig) -> Result<CentralityVector> {
        let c = corrmat::apply_transform(&corr.corr.c, cell.transform);
        let g = graphbuild::build(&c, cell.option, cell.theta.unwrap_or(0.0))?;
        centrality::evaluate(&g, cell.measure, cell.alpha_fraction)
    }

    /// Weights for `selected` panel columns fitted on the train year.
    pub fn weights(
        &self,
        fold: usize,
        selected: &[usize],
        cell: &CellConfig,
    ) -> Result<(Vec<f64>, Option<TargetOutcome>, Option<f64>)> {
        if cell.scheme == Scheme::EqualWeight {
            return Ok((portfolio::equal_weights(selected.len()), None, None));
        }
        let rows = self.folds[fold].train_rows.clone();
        let x = DMatrix::from_fn(rows.len(), selected.len(), |r, c| {
            self.panel.values()[(rows.start + r, selected[c])]
        });
        let (sigma, r) =
            portfolio::covariance_from_train(&x, cell.shrink, self.cfg.metrics.annualization)?;
        let bounds = cell.bounds(&self.cfg);
        match cell.scheme {
            Scheme::MinVarLongOnly | Scheme::MinVarLongShort => {
                let s = portfolio::min_variance(&sigma, bounds)?;
                Ok((s.x, None, Some(s.kkt_residual)))
            }
            _ => {
                let s = portfolio::mean_variance(&sigma, &r, self.cfg.r_target, bounds)?;
                Ok((s.solution.x, Some(s.outcome), Some(s.solution.kkt_residual)))
            }
        }
    }

    /// Runs one cell without sharing work with other cells.
    pub fn run_cell(&self, cell: &CellConfig) -> CellResult {
        self.run_cell_cached(cell, &NoCache)
    }

    /// Runs one cell, taking correlations and scores from `cache`.
    pub fn run_cell_cached(&self, cell: &CellConfig, cache: &dyn FoldCache) -> CellResult {
        let mut traces = Vec::with_capacity(self.folds.len());
        let mut rp = Vec::new();
        let mut rf = Vec::new();
        let mut rb = Vec::new();
        for (k, fold) in self.folds.iter().enumerate() {
            let fail = |e: Error| CellFailure {
                code: FailureCode::of(&e),
                train_year: Some(fold.train_year),
                message: e.to_string(),
            };
            if fold.universe.len() < self.cfg.m {
                return Err(CellFailure {
                    code: FailureCode::UniverseTooSmall,
                    train_year: Some(fold.train_year),
                    message: format!(
                        "{} eligible stocks, {} required",
                        fold.universe.len(),
                        self.cfg.m
                    ),
                });
            }
            let corr = cache
                .correlation(k, cell.shrink, &|| {
                    self.correlation(k, cell.shrink).map(Arc::new)
                })
                .map_err(fail)?;
            let cv = cache
                .scores(k, cell.score_key(), &|| {
                    self.scores(&corr, cell).map(Arc::new)
                })
                .map_err(fail)?;
            let local = portfolio::select(&cv.scores, &corr.corr.tickers, self.cfg.m, cell.side)
                .map_err(fail)?;
            let selected: Vec<usize> = local.iter().map(|&i| fold.universe[i]).collect();
            let (w, target, kkt) = self.weights(k, &selected, cell).map_err(fail)?;
            let mut growth = 1.0;
            for t in fold.test_rows.clone() {
                let day: f64 = selected
                    .iter()
                    .zip(&w)
                    .map(|(&j, x)| {
                        let v = self.panel.values()[(t, j)];
                        if v.is_nan() {
                            0.0
                        } else {
                            x * v
                        }
                    })
                    .sum();
                growth *= 1.0 + day;
                rp.push(day);
                rf.push(self.rf[t]);
                rb.push(self.rb[t]);
            }
            traces.push(FoldTrace {
                train_year: fold.train_year,
                test_year: fold.test_year,
                universe: fold.universe.len(),
                theta: cell.theta,
                alpha: cv.alpha,
                alpha_max: cv.alpha_max,
                spectral_radius: cv.spectral_radius,
                degenerate: cv.degenerate,
                shrink_intensity: corr.shrink_intensity,
                shrink_clamped: corr.shrink_clamped,
                selected: selected
                    .iter()
                    .map(|&j| self.panel.tickers()[j].clone())
                    .collect(),
                weights: w,
                target,
                kkt_residual: kkt,
                test_return: growth - 1.0,
            });
        }
        let metrics =
            metrics::panel_row(&rp, &rf, &rb, &self.cfg.metrics).map_err(|e| CellFailure {
                code: FailureCode::of(&e),
                train_year: None,
                message: e.to_string(),
            })?;
        Ok(CellSuccess {
            metrics,
            folds: traces,
            returns: rp,
        })
    }
}

/// A cell's configuration and outcome as stored by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestRecord {
    pub id: String,
    pub cell: CellConfig,
    pub outcome: core::result::Result<RecordMetrics, CellFailure>,
}

/// Metrics plus fold-level flags kept in the record store.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordMetrics {
    pub metrics: MetricsRow,
    pub folds: usize,
    pub degenerate_folds: usize,
    pub fallback_folds: usize,
}

impl RecordMetrics {
    pub fn from_success(s: &CellSuccess) -> Self {
        RecordMetrics {
            metrics: s.metrics,
            folds: s.folds.len(),
            degenerate_folds: s.degenerate_folds(),
            fallback_folds: s.fallback_folds(),
        }
    }
}

/// Ranking column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankKey {
    Sr,
    Er,
}

impl RankKey {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sr" => Some(RankKey::Sr),
            "er" => Some(RankKey::Er),
            _ => None,
        }
    }

    fn value(self, m: &MetricsRow) -> Option<f64> {
        match self {
            RankKey::Sr => m.sr,
            RankKey::Er => Some(m.er),
        }
    }
}

/// The `top` best records by `key` among those passing `filter`.
///
/// Failed cells and undefined key values are left out. Ties fall back to
/// ER, then to the configuration key.
pub fn rank(
    records: &[BacktestRecord],
    key: RankKey,
    top: usize,
    filter: impl Fn(&CellConfig) -> bool,
) -> Vec<&BacktestRecord> {
    let mut rows: Vec<(&BacktestRecord, f64, f64, String)> = records
        .iter()
        .filter(|r| filter(&r.cell))
        .filter_map(|r| {
            let m = &r.outcome.as_ref().ok()?.metrics;
            let v = key.value(m).filter(|v| v.is_finite())?;
            Some((r, v, m.er, r.cell.key()))
        })
        .collect();
    rows.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| b.2.partial_cmp(&a.2).unwrap_or(Ordering::Equal))
            .then_with(|| a.3.cmp(&b.3))
    });
    rows.into_iter().take(top).map(|r| r.0).collect()
}
