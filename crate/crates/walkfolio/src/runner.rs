//! Parallel grid execution with shared per-fold work and checkpoints.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use walkfolio_core::backtest::{
    BacktestRecord, CellConfig, FoldCache, FoldCorrelation, ProtocolConfig, RecordMetrics,
    ScoreKey, Walkforward,
};
use walkfolio_core::centrality::CentralityVector;
use walkfolio_core::panel::ReturnsPanel;
use walkfolio_core::Result;

/// Content hash of the panel and the optional rate series.
pub fn data_fingerprint(panel: &ReturnsPanel, series: &[(&str, Option<&[f64]>)]) -> String {
    let mut h = Sha256::new();
    for t in panel.tickers() {
        h.update(t.as_bytes());
        h.update([0]);
    }
    for d in panel.dates() {
        h.update(d.to_string().as_bytes());
    }
    for v in panel.values().iter() {
        h.update(v.to_bits().to_le_bytes());
    }
    for (name, values) in series {
        h.update(name.as_bytes());
        match values {
            Some(vs) => vs.iter().for_each(|v| h.update(v.to_bits().to_le_bytes())),
            None => h.update(b"-"),
        }
    }
    hex::encode(h.finalize())
}

/// Stable identifier of a cell run on given data under given settings.
pub fn cell_id(
    fingerprint: &str,
    protocol: &ProtocolConfig,
    years: Option<(i32, i32)>,
    cell: &CellConfig,
) -> String {
    let mut h = Sha256::new();
    h.update(fingerprint.as_bytes());
    h.update(format!("{protocol:?}|{years:?}").as_bytes());
    h.update(cell.key().as_bytes());
    hex::encode(&h.finalize()[..16])
}

type Slot<T> = Arc<OnceLock<Result<Arc<T>>>>;

fn memo<K: Eq + std::hash::Hash, T>(
    map: &Mutex<HashMap<K, Slot<T>>>,
    key: K,
    compute: &dyn Fn() -> Result<Arc<T>>,
) -> Result<Arc<T>> {
    let slot = map.lock().unwrap().entry(key).or_default().clone();
    slot.get_or_init(compute).clone()
}

/// Correlations shared by every cell of a run.
#[derive(Default)]
pub struct SharedCache {
    corr: Mutex<HashMap<(usize, bool), Slot<FoldCorrelation>>>,
}

/// Scores shared by the cells of one group; correlations come from the
/// run-wide cache.
struct GroupCache<'a> {
    shared: &'a SharedCache,
    scores: Mutex<HashMap<(usize, ScoreKey), Slot<CentralityVector>>>,
}

impl FoldCache for GroupCache<'_> {
    fn correlation(
        &self,
        fold: usize,
        shrink: bool,
        compute: &dyn Fn() -> Result<Arc<FoldCorrelation>>,
    ) -> Result<Arc<FoldCorrelation>> {
        memo(&self.shared.corr, (fold, shrink), compute)
    }

    fn scores(
        &self,
        fold: usize,
        key: ScoreKey,
        compute: &dyn Fn() -> Result<Arc<CentralityVector>>,
    ) -> Result<Arc<CentralityVector>> {
        memo(&self.scores, (fold, key), compute)
    }
}

/// A cell together with its identifier.
#[derive(Debug, Clone)]
pub struct Job {
    pub id: String,
    pub cell: CellConfig,
}

pub fn jobs(
    fingerprint: &str,
    protocol: &ProtocolConfig,
    years: Option<(i32, i32)>,
    cells: &[CellConfig],
) -> Vec<Job> {
    cells
        .iter()
        .map(|c| Job {
            id: cell_id(fingerprint, protocol, years, c),
            cell: *c,
        })
        .collect()
}

/// Runs every job not listed in `done` and returns the new records in job
/// order.
///
/// Jobs sharing a centrality computation run together on one worker.
/// `checkpoint` receives each finished group's records and may be called
/// from any worker thread. The result does not depend on `threads`.
pub fn run(
    wf: &Walkforward<'_>,
    jobs: &[Job],
    done: &HashSet<String>,
    threads: usize,
    checkpoint: &(dyn Fn(&[BacktestRecord]) + Sync),
) -> std::result::Result<Vec<BacktestRecord>, rayon::ThreadPoolBuildError> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut first: HashMap<ScoreKey, usize> = HashMap::new();
    for (k, job) in jobs.iter().enumerate() {
        if done.contains(&job.id) {
            continue;
        }
        let lead = *first.entry(job.cell.score_key()).or_insert(k);
        groups.entry(lead).or_default().push(k);
    }
    let groups: Vec<Vec<usize>> = groups.into_values().collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()?;
    let shared = SharedCache::default();
    let mut out: Vec<(usize, BacktestRecord)> = pool.install(|| {
        groups
            .par_iter()
            .flat_map_iter(|group| {
                let cache = GroupCache {
                    shared: &shared,
                    scores: Mutex::default(),
                };
                let recs: Vec<(usize, BacktestRecord)> = group
                    .iter()
                    .map(|&k| {
                        let job = &jobs[k];
                        let outcome = wf
                            .run_cell_cached(&job.cell, &cache)
                            .map(|s| RecordMetrics::from_success(&s));
                        if let Err(f) = &outcome {
                            log::debug!("cell {} failed: {f}", job.cell);
                        }
                        (
                            k,
                            BacktestRecord {
                                id: job.id.clone(),
                                cell: job.cell,
                                outcome,
                            },
                        )
                    })
                    .collect();
                let plain: Vec<BacktestRecord> = recs.iter().map(|(_, r)| r.clone()).collect();
                checkpoint(&plain);
                recs
            })
            .collect()
    });
    out.sort_by_key(|(k, _)| *k);
    Ok(out.into_iter().map(|(_, r)| r).collect())
}
