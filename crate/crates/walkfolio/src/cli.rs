//! Command-line interface.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};
use walkfolio_core::backtest::{
    BacktestRecord, CellConfig, GridConfig, ProtocolConfig, RankKey, Walkforward,
};
use walkfolio_core::centrality::Measure;
use walkfolio_core::corrmat::Transform;
use walkfolio_core::graphbuild::AdjacencyOption;
use walkfolio_core::metrics::MetricsConfig;
use walkfolio_core::panel::ReturnsPanel;
use walkfolio_core::portfolio::{Bounds, Scheme, Side};

use crate::io::{self, LoadError};
use crate::report::{self, sig6};
use crate::runner::{self, data_fingerprint};
use crate::store::{self, FailureEcho, FoldEcho, Manifest, SkippedYear, StoreError};
use crate::synth::{self, SynthConfig};

/// Errors that end a command, with their exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        if e.is_missing_file() {
            CliError::Config(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Io { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn core_err(e: walkfolio_core::Error) -> CliError {
    match e {
        walkfolio_core::Error::InvalidParameter(_) => CliError::Config(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Config(format!("cannot write {}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "walkfolio",
    version,
    about = "Walk-forward backtests of centrality-driven portfolios"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a configuration grid and write records, manifest and reports.
    Run(RunArgs),
    /// Print the best cells of a finished run.
    Rank(RankArgs),
    /// Recompute one cell and print its per-year trail.
    Inspect(InspectArgs),
    /// Convert a panel of prices into simple returns.
    PricesToReturns(PricesArgs),
    /// Write a synthetic one-factor data set.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory holding returns.csv and, optionally, riskfree.csv and benchmark.csv.
    #[arg(long, default_value = "data")]
    pub data: PathBuf,
    /// Daily returns panel; defaults to DATA/returns.csv.
    #[arg(long)]
    pub returns: Option<PathBuf>,
    /// Daily risk-free rate; defaults to DATA/riskfree.csv when present, else zero.
    #[arg(long)]
    pub risk_free: Option<PathBuf>,
    /// Daily benchmark returns; defaults to DATA/benchmark.csv when present, else zero.
    #[arg(long)]
    pub benchmark: Option<PathBuf>,
    /// Daily market returns for single-index shrinkage; defaults to the universe mean.
    #[arg(long)]
    pub market: Option<PathBuf>,
}

fn parse_list<T>(s: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<T, String> {
    f(s).ok_or_else(|| format!("unknown {what} '{s}'"))
}

fn parse_transform(s: &str) -> Result<Transform, String> {
    parse_list(s, "transform", Transform::parse)
}

fn parse_option(s: &str) -> Result<AdjacencyOption, String> {
    AdjacencyOption::parse(s).map_err(|e| e.to_string())
}

fn parse_measure(s: &str) -> Result<Measure, String> {
    parse_list(s, "measure", Measure::parse)
}

fn parse_side(s: &str) -> Result<Side, String> {
    parse_list(s, "side", Side::parse)
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    parse_list(s, "scheme", Scheme::parse)
}

fn parse_flag(s: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "y" | "yes" | "true" | "1" => Ok(true),
        "n" | "no" | "false" | "0" => Ok(false),
        _ => Err(format!("expected Y or N, got '{s}'")),
    }
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("not a number: '{s}'"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn parse_years(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected FIRST:LAST, got '{s}'"))?;
    let a: i32 = a.trim().parse().map_err(|_| format!("bad year '{a}'"))?;
    let b: i32 = b.trim().parse().map_err(|_| format!("bad year '{b}'"))?;
    if a > b {
        return Err(format!("empty year range {a}:{b}"));
    }
    Ok((a, b))
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Every omitted list takes all its values; otherwise transforms
    /// default to A1 and shrinkage to N.
    #[arg(long)]
    pub full: bool,
    /// Correlation transforms (A1..A4).
    #[arg(long, value_delimiter = ',', value_parser = parse_transform)]
    pub transforms: Option<Vec<Transform>>,
    /// Shrinkage settings (Y, N).
    #[arg(long, value_delimiter = ',', value_parser = parse_flag)]
    pub shrink: Option<Vec<bool>>,
    /// Adjacency options (1..8, raw, raw-noloops, mst).
    #[arg(long, value_delimiter = ',', value_parser = parse_option)]
    pub options: Option<Vec<AdjacencyOption>>,
    /// Thresholds for options 1..8.
    #[arg(long, value_delimiter = ',', value_parser = parse_fraction)]
    pub thetas: Option<Vec<f64>>,
    /// Centrality measures.
    #[arg(long, value_delimiter = ',', value_parser = parse_measure)]
    pub measures: Option<Vec<Measure>>,
    /// Fractions of the largest admissible parameter.
    #[arg(long, value_delimiter = ',', value_parser = parse_fraction)]
    pub alphas: Option<Vec<f64>>,
    /// central, peripheral.
    #[arg(long, value_delimiter = ',', value_parser = parse_side)]
    pub sides: Option<Vec<Side>>,
    /// ew, minvar-lo, minvar-ls, meanvar-lo, meanvar-ls.
    #[arg(long, value_delimiter = ',', value_parser = parse_scheme)]
    pub schemes: Option<Vec<Scheme>>,
}

impl GridArgs {
    pub fn grid(&self) -> GridConfig {
        let full = GridConfig::full();
        GridConfig {
            transforms: self.transforms.clone().unwrap_or(if self.full {
                full.transforms
            } else {
                vec![Transform::A1]
            }),
            shrink: self.shrink.clone().unwrap_or(if self.full {
                full.shrink
            } else {
                vec![false]
            }),
            options: self.options.clone().unwrap_or(full.options),
            thetas: self.thetas.clone().unwrap_or(full.thetas),
            measures: self.measures.clone().unwrap_or(full.measures),
            alpha_fractions: self.alphas.clone().unwrap_or(full.alpha_fractions),
            sides: self.sides.clone().unwrap_or(full.sides),
            schemes: self.schemes.clone().unwrap_or(full.schemes),
        }
    }
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    /// Correlation window length in trading days.
    #[arg(long, default_value_t = 125)]
    pub tau: usize,
    /// Stocks per portfolio.
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    /// Annual target return of the mean-variance schemes.
    #[arg(long, default_value_t = 0.10)]
    pub r_target: f64,
    /// Trading days per year.
    #[arg(long, default_value_t = 252.0)]
    pub annualization: f64,
    /// Factor applied to daily VaR and CVaR in the reports.
    #[arg(long, default_value_t = 1.0)]
    pub var_scale: f64,
    /// Fixed shrinkage intensity instead of the estimated one.
    #[arg(long)]
    pub shrink_intensity: Option<f64>,
    /// Train years to use, as FIRST:LAST.
    #[arg(long, value_parser = parse_years)]
    pub years: Option<(i32, i32)>,
}

impl ProtocolArgs {
    fn config(&self) -> Result<ProtocolConfig, CliError> {
        if !(self.annualization > 0.0 && self.annualization.is_finite()) {
            return Err(CliError::Config(format!(
                "annualization must be positive, got {}",
                self.annualization
            )));
        }
        if !self.r_target.is_finite() || !self.var_scale.is_finite() {
            return Err(CliError::Config(
                "r-target and var-scale must be finite".into(),
            ));
        }
        if let Some(d) = self.shrink_intensity {
            if !(0.0..=1.0).contains(&d) {
                return Err(CliError::Config(format!(
                    "shrink intensity {d} is outside [0, 1]"
                )));
            }
        }
        Ok(ProtocolConfig {
            tau: self.tau,
            m: self.m,
            r_target: self.r_target,
            metrics: MetricsConfig {
                annualization: self.annualization,
                var_scale: self.var_scale,
                ..MetricsConfig::default()
            },
            shrink_intensity: self.shrink_intensity,
            ..ProtocolConfig::default()
        })
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Run directory; completed cells found there are not recomputed.
    #[arg(long, default_value = "walkfolio-run")]
    pub out: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Rows in the overall SR table; per-transform tables hold two thirds of it.
    #[arg(long, default_value_t = 30)]
    pub top: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    /// Run directory.
    #[arg(long, default_value = "walkfolio-run")]
    pub run: PathBuf,
    /// Ranking column (sr or er).
    #[arg(long, default_value = "sr", value_parser = |s: &str| RankKey::parse(s).ok_or_else(|| format!("unknown key '{s}'")))]
    pub key: RankKey,
    #[arg(long, default_value_t = 30)]
    pub top: usize,
    #[arg(long, value_parser = parse_transform)]
    pub transform: Option<Transform>,
    #[arg(long, value_parser = parse_side)]
    pub side: Option<Side>,
    #[arg(long, value_parser = parse_measure)]
    pub measure: Option<Measure>,
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Option<Scheme>,
    #[arg(long, value_parser = parse_flag)]
    pub shrink: Option<bool>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Run directory.
    #[arg(long, default_value = "walkfolio-run")]
    pub run: PathBuf,
    /// Cell id, or a unique prefix of one.
    pub cell: String,
}

#[derive(Debug, Args)]
pub struct PricesArgs {
    /// Panel of prices in the returns layout.
    #[arg(long)]
    pub prices: PathBuf,
    /// Output returns CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub tickers: usize,
    #[arg(long, default_value_t = 4)]
    pub years: usize,
    #[arg(long, default_value_t = 2001)]
    pub start_year: i32,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Tickers without data in the first year.
    #[arg(long, default_value_t = 2)]
    pub late_listings: usize,
}

/// Runs a parsed command, writing human-readable output to `out`.
pub fn execute(cli: Cli, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let text = match cli.command {
        Command::Run(a) => cmd_run(&a)?,
        Command::Rank(a) => cmd_rank(&a)?,
        Command::Inspect(a) => cmd_inspect(&a)?,
        Command::PricesToReturns(a) => cmd_prices(&a)?,
        Command::Synth(a) => cmd_synth(&a)?,
    };
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Config(format!("cannot write output: {e}")))
}

/// Loaded inputs with the paths they came from.
struct Inputs {
    panel: ReturnsPanel,
    rf: Option<Vec<f64>>,
    rb: Option<Vec<f64>>,
    market: Option<Vec<f64>>,
    echo: store::Inputs,
}

impl Inputs {
    fn fingerprint(&self) -> String {
        data_fingerprint(
            &self.panel,
            &[
                ("rf", self.rf.as_deref()),
                ("rb", self.rb.as_deref()),
                ("market", self.market.as_deref()),
            ],
        )
    }

    fn walkforward(
        &self,
        cfg: ProtocolConfig,
        years: Option<(i32, i32)>,
    ) -> Result<Walkforward<'_>, CliError> {
        let wf = Walkforward::new(
            &self.panel,
            self.rf.as_deref(),
            self.rb.as_deref(),
            self.market.as_deref(),
            cfg,
        )
        .map_err(core_err)?;
        match years {
            Some((a, b)) => wf.with_train_years(a, b).map_err(core_err),
            None => Ok(wf),
        }
    }
}

fn resolve(explicit: &Option<PathBuf>, dir: &Path, default: &str) -> Option<PathBuf> {
    match explicit {
        Some(p) => Some(p.clone()),
        None => Some(dir.join(default)).filter(|p| p.exists()),
    }
}

fn load_inputs(
    returns: &Path,
    rf: Option<&Path>,
    rb: Option<&Path>,
    market: Option<&Path>,
) -> Result<Inputs, CliError> {
    for p in [Some(returns), rf, rb, market].into_iter().flatten() {
        if !p.is_file() {
            return Err(CliError::Config(format!("no such file: {}", p.display())));
        }
    }
    let panel = io::load_returns_csv(returns)?;
    let series = |p: Option<&Path>| -> Result<Option<Vec<f64>>, CliError> {
        p.map(|p| io::load_series_csv(p, panel.dates()))
            .transpose()
            .map_err(CliError::from)
    };
    let (rf_v, rb_v, m_v) = (series(rf)?, series(rb)?, series(market)?);
    let show = |p: Option<&Path>| p.map(|p| p.display().to_string());
    Ok(Inputs {
        echo: store::Inputs {
            returns: returns.display().to_string(),
            risk_free: show(rf),
            benchmark: show(rb),
            market: show(market),
        },
        panel,
        rf: rf_v,
        rb: rb_v,
        market: m_v,
    })
}

fn grid_echo(g: &GridConfig) -> store::GridEcho {
    store::GridEcho {
        transforms: g.transforms.iter().map(|t| t.label().to_string()).collect(),
        shrink: g.shrink.clone(),
        options: g.options.iter().map(|o| o.to_string()).collect(),
        thetas: g.thetas.clone(),
        measures: g.measures.iter().map(|m| m.key().to_string()).collect(),
        alpha_fractions: g.alpha_fractions.clone(),
        sides: g.sides.iter().map(|s| s.label().to_string()).collect(),
        schemes: g.schemes.iter().map(|s| s.key().to_string()).collect(),
    }
}

fn protocol_echo(c: &ProtocolConfig, years: Option<(i32, i32)>) -> store::ProtocolEcho {
    store::ProtocolEcho {
        tau: c.tau,
        m: c.m,
        r_target: c.r_target,
        annualization: c.metrics.annualization,
        var_level_bp: c.metrics.var_level_bp,
        var_scale: c.metrics.var_scale,
        long_only: [c.long_only.lower, c.long_only.upper],
        long_short: [c.long_short.lower, c.long_short.upper],
        shrink_intensity: c.shrink_intensity,
        years: years.map(|(a, b)| [a, b]),
    }
}

fn protocol_from_echo(e: &store::ProtocolEcho) -> Result<ProtocolConfig, CliError> {
    let bounds = |b: [f64; 2]| Bounds::new(b[0], b[1]).map_err(core_err);
    Ok(ProtocolConfig {
        tau: e.tau,
        m: e.m,
        r_target: e.r_target,
        long_only: bounds(e.long_only)?,
        long_short: bounds(e.long_short)?,
        metrics: MetricsConfig {
            annualization: e.annualization,
            var_level_bp: e.var_level_bp,
            var_scale: e.var_scale,
        },
        shrink_intensity: e.shrink_intensity,
    })
}

fn cmd_run(a: &RunArgs) -> Result<String, CliError> {
    let returns = a
        .data
        .returns
        .clone()
        .unwrap_or_else(|| a.data.data.join("returns.csv"));
    let rf = resolve(&a.data.risk_free, &a.data.data, "riskfree.csv");
    let rb = resolve(&a.data.benchmark, &a.data.data, "benchmark.csv");
    let protocol = a.protocol.config()?;
    let years = a.protocol.years;
    let grid = a.grid.grid();
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(CliError::Config(
            "the grid restrictions leave no valid cell".into(),
        ));
    }
    let threads = match a.parallelism {
        Some(0) => return Err(CliError::Config("parallelism must be at least 1".into())),
        Some(k) => k,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let inputs = load_inputs(
        &returns,
        rf.as_deref(),
        rb.as_deref(),
        a.data.market.as_deref(),
    )?;
    if inputs.rf.is_none() {
        log::warn!("no risk-free series; using zero");
    }
    if inputs.rb.is_none() {
        log::warn!("no benchmark series; using zero");
    }
    let wf = inputs.walkforward(protocol.clone(), years)?;
    let fingerprint = inputs.fingerprint();
    let jobs = runner::jobs(&fingerprint, &protocol, years, &cells);

    std::fs::create_dir_all(&a.out).map_err(write_err(&a.out))?;
    let records_path = a.out.join(store::RECORDS_FILE);
    let mut previous: HashMap<String, BacktestRecord> = if records_path.exists() {
        store::read_records(&records_path, true)?
            .into_iter()
            .map(|r| (r.id.clone(), r))
            .collect()
    } else {
        HashMap::new()
    };
    let wanted: std::collections::HashSet<&str> = jobs.iter().map(|j| j.id.as_str()).collect();
    previous.retain(|id, _| wanted.contains(id.as_str()));
    let done = previous.keys().cloned().collect();
    let reused = previous.len();

    let append_error: Mutex<Option<StoreError>> = Mutex::new(None);
    let checkpoint = |recs: &[BacktestRecord]| {
        let mut slot = append_error.lock().unwrap();
        if slot.is_none() {
            if let Err(e) = store::append_records(&records_path, recs) {
                *slot = Some(e);
            }
        }
    };
    log::info!(
        "{} cells, {} already complete, {threads} threads",
        jobs.len(),
        reused
    );
    let fresh = runner::run(&wf, &jobs, &done, threads, &checkpoint)
        .map_err(|e| CliError::Config(format!("cannot start worker threads: {e}")))?;
    if let Some(e) = append_error.into_inner().unwrap() {
        log::warn!("checkpoint append failed: {e}");
    }
    let mut by_id = previous;
    by_id.extend(fresh.into_iter().map(|r| (r.id.clone(), r)));
    let records: Vec<BacktestRecord> = jobs.iter().filter_map(|j| by_id.remove(&j.id)).collect();
    store::write_records(&records_path, &records)?;

    let failures: Vec<FailureEcho> = records
        .iter()
        .filter_map(|r| {
            let f = r.outcome.as_ref().err()?;
            Some(FailureEcho {
                id: r.id.clone(),
                cell: r.cell.key(),
                code: f.code.as_str().to_string(),
                train_year: f.train_year,
                message: f.message.clone(),
            })
        })
        .collect();
    let tickers = inputs.panel.tickers();
    let manifest = Manifest {
        tool: format!("walkfolio {}", env!("CARGO_PKG_VERSION")),
        inputs: inputs.echo.clone(),
        data: store::DataSummary {
            fingerprint: fingerprint.clone(),
            tickers: tickers.len(),
            dates: inputs.panel.n_rows(),
            first_date: inputs.panel.dates()[0].to_string(),
            last_date: inputs.panel.dates()[inputs.panel.n_rows() - 1].to_string(),
        },
        protocol: protocol_echo(&protocol, years),
        grid: grid_echo(&grid),
        cardinality: cells.len(),
        full_grid_cardinality: GridConfig::full().cells().len(),
        completed: records.len(),
        succeeded: records.len() - failures.len(),
        folds: wf
            .folds()
            .iter()
            .map(|f| FoldEcho {
                train_year: f.train_year,
                test_year: f.test_year,
                universe: f.universe.len(),
                dropped: f.dropped.iter().map(|&j| tickers[j].clone()).collect(),
            })
            .collect(),
        skipped_years: wf
            .skipped()
            .iter()
            .map(|(y, r)| SkippedYear {
                year: *y,
                reason: r.clone(),
            })
            .collect(),
        failures,
    };
    manifest.write(&a.out.join(store::MANIFEST_FILE))?;
    let tables = write_reports(&a.out, &records, a.top)?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "{} cells ({} computed, {} from checkpoint), {} failed",
        records.len(),
        records.len() - reused,
        reused,
        manifest.failures.len()
    );
    let _ = writeln!(text, "records: {}", records_path.display());
    let _ = writeln!(
        text,
        "reports: {} tables in {}",
        tables,
        a.out.join(store::REPORTS_DIR).display()
    );
    Ok(text)
}

fn write_reports(dir: &Path, records: &[BacktestRecord], top: usize) -> Result<usize, CliError> {
    let rdir = dir.join(store::REPORTS_DIR);
    std::fs::create_dir_all(&rdir).map_err(write_err(&rdir))?;
    let per = (top * 2).div_ceil(3).max(1);
    let mut tables = vec![(
        format!("sr_top{top}"),
        report::ranked(
            format!("Best {top} methods for SR"),
            records,
            RankKey::Sr,
            top,
            |_| true,
        ),
    )];
    for t in Transform::ALL {
        for (key, name) in [(RankKey::Er, "er"), (RankKey::Sr, "sr")] {
            let title = format!("{} {per} - {}", name.to_uppercase(), t.label());
            tables.push((
                format!("{name}_top{per}_{}", t.label()),
                report::ranked(title, records, key, per, |c| c.transform == t),
            ));
        }
    }
    for (stem, table) in &tables {
        let path = rdir.join(format!("{stem}.csv"));
        std::fs::write(&path, table.to_csv()).map_err(write_err(&path))?;
    }
    Ok(tables.len())
}

fn cmd_rank(a: &RankArgs) -> Result<String, CliError> {
    let records = store::read_records(&a.run.join(store::RECORDS_FILE), false)?;
    let filter = |c: &CellConfig| {
        a.transform.is_none_or(|t| c.transform == t)
            && a.side.is_none_or(|s| c.side == s)
            && a.measure.is_none_or(|m| c.measure == m)
            && a.scheme.is_none_or(|s| c.scheme == s)
            && a.shrink.is_none_or(|s| c.shrink == s)
    };
    let key = match a.key {
        RankKey::Sr => "SR",
        RankKey::Er => "ER",
    };
    let table = report::ranked(
        format!("Best {} methods for {key}", a.top),
        &records,
        a.key,
        a.top,
        filter,
    );
    if table.rows.is_empty() {
        eprintln!("warning: empty table; every matching record failed or has an undefined {key}");
    }
    Ok(match a.format {
        Format::Text => format!("{}\n{}", table.title, table.to_text()),
        Format::Csv => table.to_csv(),
    })
}

fn cmd_inspect(a: &InspectArgs) -> Result<String, CliError> {
    let manifest = Manifest::read(&a.run.join(store::MANIFEST_FILE))?;
    let records = store::read_records(&a.run.join(store::RECORDS_FILE), false)?;
    let matches: Vec<&BacktestRecord> = records
        .iter()
        .filter(|r| r.id.starts_with(&a.cell))
        .collect();
    let rec = match matches.as_slice() {
        [] => return Err(CliError::Config(format!("unknown cell id '{}'", a.cell))),
        [r] => *r,
        _ => {
            return Err(CliError::Config(format!(
                "cell id prefix '{}' is ambiguous",
                a.cell
            )))
        }
    };
    let mut text = String::new();
    let _ = writeln!(text, "cell {}", rec.id);
    let _ = writeln!(text, "config {}", rec.cell.key());
    if let Err(f) = &rec.outcome {
        let _ = writeln!(text, "status failed");
        let _ = writeln!(text, "failure {f}");
        return Ok(text);
    }

    let path = |s: &Option<String>| s.as_ref().map(PathBuf::from);
    let inputs = load_inputs(
        Path::new(&manifest.inputs.returns),
        path(&manifest.inputs.risk_free).as_deref(),
        path(&manifest.inputs.benchmark).as_deref(),
        path(&manifest.inputs.market).as_deref(),
    )?;
    if inputs.fingerprint() != manifest.data.fingerprint {
        return Err(CliError::Data(
            "input files changed since the run; fingerprints differ".into(),
        ));
    }
    let protocol = protocol_from_echo(&manifest.protocol)?;
    let years = manifest.protocol.years.map(|[a, b]| (a, b));
    let wf = inputs.walkforward(protocol, years)?;
    let success = match wf.run_cell(&rec.cell) {
        Ok(s) => s,
        Err(f) => {
            let _ = writeln!(text, "status failed on recomputation");
            let _ = writeln!(text, "failure {f}");
            return Ok(text);
        }
    };
    let _ = writeln!(text, "status ok");
    let opt = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), sig6);
    let full = |v: Option<f64>| v.map_or_else(|| "NaN".to_string(), |x| format!("{x:?}"));
    for f in &success.folds {
        let _ = writeln!(text, "\nyear {} -> {}", f.train_year, f.test_year);
        let _ = writeln!(text, "  universe {}", f.universe);
        let _ = writeln!(text, "  theta {}", opt(f.theta));
        let _ = writeln!(text, "  alpha {}", full(f.alpha));
        let _ = writeln!(text, "  alpha_max {}", full(f.alpha_max));
        let _ = writeln!(text, "  rho {}", full(f.spectral_radius));
        if f.degenerate {
            let _ = writeln!(text, "  graph has no edges");
        }
        if let Some(d) = f.shrink_intensity {
            let _ = writeln!(
                text,
                "  shrink_intensity {}{}",
                sig6(d),
                if f.shrink_clamped { " (clamped)" } else { "" }
            );
        }
        if let Some(t) = &f.target {
            let _ = writeln!(text, "  target {t:?}");
        }
        if let Some(k) = f.kkt_residual {
            let _ = writeln!(text, "  kkt_residual {}", sig6(k));
        }
        for (t, w) in f.selected.iter().zip(&f.weights) {
            let _ = writeln!(text, "  weight {t} {w:?}");
        }
        let _ = writeln!(text, "  test_return {}", sig6(f.test_return));
    }
    let m = &success.metrics;
    let _ = writeln!(
        text,
        "\nCR {} ER {} SD {} SR {} MaxDDar {}",
        sig6(m.cr),
        sig6(m.er),
        sig6(m.sd),
        opt(m.sr),
        sig6(m.max_dd)
    );
    Ok(text)
}

fn cmd_prices(a: &PricesArgs) -> Result<String, CliError> {
    if !a.prices.is_file() {
        return Err(CliError::Config(format!(
            "no such file: {}",
            a.prices.display()
        )));
    }
    let prices = io::load_returns_csv(&a.prices)?;
    let returns = io::prices_to_returns(&prices)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.prices.display())))?;
    io::write_returns_csv(&returns, &a.out).map_err(write_err(&a.out))?;
    Ok(format!(
        "{} rows x {} tickers -> {}\n",
        returns.n_rows(),
        returns.n_assets(),
        a.out.display()
    ))
}

fn cmd_synth(a: &SynthArgs) -> Result<String, CliError> {
    if a.tickers == 0 || a.years == 0 {
        return Err(CliError::Config(
            "tickers and years must be positive".into(),
        ));
    }
    let cfg = SynthConfig {
        tickers: a.tickers,
        start_year: a.start_year,
        years: a.years,
        seed: a.seed,
        late_listings: a.late_listings.min(a.tickers),
    };
    let data = synth::generate(&cfg);
    std::fs::create_dir_all(&a.out).map_err(write_err(&a.out))?;
    let dates = data.panel.dates();
    let p = a.out.join("returns.csv");
    io::write_returns_csv(&data.panel, &p).map_err(write_err(&p))?;
    let p = a.out.join("riskfree.csv");
    io::write_series_csv(&p, "rf", dates, &data.risk_free).map_err(write_err(&p))?;
    let p = a.out.join("benchmark.csv");
    io::write_series_csv(&p, "benchmark", dates, &data.benchmark).map_err(write_err(&p))?;
    Ok(format!(
        "{} days x {} tickers -> {}\n",
        dates.len(),
        a.tickers,
        a.out.display()
    ))
}
