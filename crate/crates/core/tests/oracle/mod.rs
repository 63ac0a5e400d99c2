//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random symmetric adjacency on `n` nodes with edge probability `p`.
/// Weights are drawn from (0, 1] when `weighted`, loops added when `loops`.
pub fn random_adjacency(
    r: &mut ChaCha8Rng,
    n: usize,
    p: f64,
    weighted: bool,
    loops: bool,
) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            if i == j && !loops {
                continue;
            }
            if r.random::<f64>() < p {
                let w = if weighted {
                    1.0 - r.random::<f64>()
                } else {
                    1.0
                };
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
    }
    a
}

/// Random correlation-like matrix: Pearson correlation of `t` Gaussian-ish
/// draws with a common factor.
pub fn random_correlation(r: &mut ChaCha8Rng, n: usize, t: usize) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(t, n);
    for row in 0..t {
        let f: f64 = r.random::<f64>() - 0.5;
        for j in 0..n {
            x[(row, j)] = f * (j as f64 / n as f64) + r.random::<f64>() - 0.5;
        }
    }
    pearson(&x)
}

pub fn pearson(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (t, n) = x.shape();
    let mut c = DMatrix::zeros(n, n);
    let mean = |j: usize| (0..t).map(|r| x[(r, j)]).sum::<f64>() / t as f64;
    let mu: Vec<f64> = (0..n).map(mean).collect();
    for i in 0..n {
        for j in 0..n {
            let mut sxy = 0.0;
            let mut sxx = 0.0;
            let mut syy = 0.0;
            for r in 0..t {
                let a = x[(r, i)] - mu[i];
                let b = x[(r, j)] - mu[j];
                sxy += a * b;
                sxx += a * a;
                syy += b * b;
            }
            c[(i, j)] = sxy / (sxx * syy).sqrt();
        }
    }
    for i in 0..n {
        c[(i, i)] = 1.0;
    }
    c
}

/// Weighted NBTW counts by depth-first enumeration: `(row, diag)` where
/// `row[k][i]` sums the weights of all NBTWs of length `k` starting at `i`
/// and `diag[k][i]` those that also end at `i`.
pub fn nbtw_enumerate(a: &DMatrix<f64>, max_len: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = a.nrows();
    let mut row = vec![vec![0.0; n]; max_len + 1];
    let mut diag = vec![vec![0.0; n]; max_len + 1];
    fn go(
        a: &DMatrix<f64>,
        start: usize,
        walk: &mut Vec<usize>,
        w: f64,
        max_len: usize,
        row: &mut [Vec<f64>],
        diag: &mut [Vec<f64>],
    ) {
        let k = walk.len() - 1;
        let cur = walk[k];
        row[k][start] += w;
        if cur == start {
            diag[k][start] += w;
        }
        if k == max_len {
            return;
        }
        for next in 0..a.nrows() {
            let e = a[(cur, next)];
            if e == 0.0 || (k >= 1 && walk[k - 1] == next) {
                continue;
            }
            walk.push(next);
            go(a, start, walk, w * e, max_len, row, diag);
            walk.pop();
        }
    }
    for s in 0..n {
        go(a, s, &mut vec![s], 1.0, max_len, &mut row, &mut diag);
    }
    (row, diag)
}

/// The same counts as [`nbtw_enumerate`], aggregated over the last directed
/// edge so that long lengths stay cheap.
pub fn nbtw_counts(a: &DMatrix<f64>, max_len: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = a.nrows();
    let mut row = vec![vec![0.0; n]; max_len + 1];
    let mut diag = vec![vec![0.0; n]; max_len + 1];
    for s in 0..n {
        row[0][s] = 1.0;
        diag[0][s] = 1.0;
        if max_len == 0 {
            continue;
        }
        // g[p][c]: weight of walks from s whose last step is p -> c.
        let mut g = vec![vec![0.0; n]; n];
        for c in 0..n {
            g[s][c] = a[(s, c)];
        }
        for k in 1..=max_len {
            row[k][s] = g.iter().flatten().sum();
            diag[k][s] = (0..n).map(|p| g[p][s]).sum();
            if k == max_len {
                break;
            }
            let mut h = vec![vec![0.0; n]; n];
            for p in 0..n {
                for c in 0..n {
                    let v = g[p][c];
                    if v == 0.0 {
                        continue;
                    }
                    for d in 0..n {
                        if d != p && a[(c, d)] != 0.0 {
                            h[c][d] += v * a[(c, d)];
                        }
                    }
                }
            }
            g = h;
        }
    }
    (row, diag)
}

/// `Σ_k c_k α^k x_k` over the computed lengths.
pub fn series(terms: &[Vec<f64>], coeff: impl Fn(usize) -> f64) -> Vec<f64> {
    let n = terms[0].len();
    let mut out = vec![0.0; n];
    for (k, t) in terms.iter().enumerate() {
        let c = coeff(k);
        for i in 0..n {
            out[i] += c * t[i];
        }
    }
    out
}

/// Plain walk counts: `(A^k 𝟙, diag A^k)` for `k ≤ max_len`.
pub fn walk_counts(a: &DMatrix<f64>, max_len: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = a.nrows();
    let mut p = DMatrix::<f64>::identity(n, n);
    let mut row = Vec::new();
    let mut diag = Vec::new();
    for _ in 0..=max_len {
        row.push((0..n).map(|i| p.row(i).sum()).collect());
        diag.push((0..n).map(|i| p[(i, i)]).collect());
        p = &p * a;
    }
    (row, diag)
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// All labelled spanning trees of `K_n` via Prüfer sequences.
pub fn spanning_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n == 2 {
        return vec![vec![(0, 1)]];
    }
    let len = n - 2;
    let total = n.pow(len as u32);
    let mut out = Vec::with_capacity(total);
    for code in 0..total {
        let mut seq = Vec::with_capacity(len);
        let mut c = code;
        for _ in 0..len {
            seq.push(c % n);
            c /= n;
        }
        let mut deg = vec![1usize; n];
        for &v in &seq {
            deg[v] += 1;
        }
        let mut edges = Vec::with_capacity(n - 1);
        for &v in &seq {
            let leaf = (0..n).find(|&u| deg[u] == 1).unwrap();
            edges.push((leaf.min(v), leaf.max(v)));
            deg[leaf] -= 1;
            deg[v] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&u| deg[u] == 1).collect();
        edges.push((rest[0], rest[1]));
        edges.sort();
        out.push(edges);
    }
    out
}

/// Edge sets of every maximum-weight spanning tree under `w`.
pub fn max_spanning_trees(w: &DMatrix<f64>) -> (f64, Vec<Vec<(usize, usize)>>) {
    let trees = spanning_trees(w.nrows());
    let score = |t: &Vec<(usize, usize)>| t.iter().map(|&(i, j)| w[(i, j)]).sum::<f64>();
    let best = trees.iter().map(score).fold(f64::NEG_INFINITY, f64::max);
    let winners = trees
        .into_iter()
        .filter(|t| score(t) >= best - 1e-12)
        .collect();
    (best, winners)
}

/// Euclidean projection onto `{x : Σx = 1, lo ≤ x ≤ hi}`.
pub fn project_budget_box(y: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let sum_at = |s: f64| y.iter().map(|v| (v - s).clamp(lo, hi)).sum::<f64>();
    let (mut a, mut b) = (-1e3, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if sum_at(mid) > 1.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let s = 0.5 * (a + b);
    y.iter().map(|v| (v - s).clamp(lo, hi)).collect()
}

pub fn quad(sigma: &DMatrix<f64>, x: &[f64]) -> f64 {
    let m = x.len();
    let mut q = 0.0;
    for i in 0..m {
        for j in 0..m {
            q += x[i] * sigma[(i, j)] * x[j];
        }
    }
    0.5 * q
}

/// Minimum of `½ xᵀΣx` over budget and box: accelerated projected gradient,
/// then an exact equality-constrained solve on the detected free set.
pub fn min_variance_oracle(sigma: &DMatrix<f64>, lo: f64, hi: f64) -> (f64, Vec<f64>) {
    let m = sigma.nrows();
    let lip = sigma.clone().symmetric_eigenvalues().max().max(1e-12);
    let step = 1.0 / lip;
    let mut x = project_budget_box(&vec![1.0 / m as f64; m], lo, hi);
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..20_000 {
        let g: Vec<f64> = (0..m)
            .map(|i| (0..m).map(|j| sigma[(i, j)] * y[j]).sum())
            .collect();
        let z: Vec<f64> = (0..m).map(|i| y[i] - step * g[i]).collect();
        let xn = project_budget_box(&z, lo, hi);
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = (0..m)
            .map(|i| xn[i] + (t - 1.0) / tn * (xn[i] - x[i]))
            .collect();
        x = xn;
        t = tn;
    }
    let mut best = (quad(sigma, &x), x.clone());
    if let Some(p) = polish(sigma, &x, lo, hi) {
        let f = quad(sigma, &p);
        if f < best.0 {
            best = (f, p);
        }
    }
    best
}

fn polish(sigma: &DMatrix<f64>, x: &[f64], lo: f64, hi: f64) -> Option<Vec<f64>> {
    let m = x.len();
    let tol = 1e-7;
    let fixed: Vec<Option<f64>> = x
        .iter()
        .map(|&v| {
            if (v - lo).abs() < tol {
                Some(lo)
            } else if (v - hi).abs() < tol {
                Some(hi)
            } else {
                None
            }
        })
        .collect();
    let free: Vec<usize> = (0..m).filter(|&i| fixed[i].is_none()).collect();
    let k = free.len();
    if k == 0 {
        return None;
    }
    // [Σ_FF 1; 1ᵀ 0] [x_F; ν] = [-Σ_FB x_B; 1 - Σ x_B]
    let mut kkt = DMatrix::zeros(k + 1, k + 1);
    let mut rhs = nalgebra::DVector::zeros(k + 1);
    let fixed_sum: f64 = fixed.iter().flatten().sum();
    for (a, &i) in free.iter().enumerate() {
        for (b, &j) in free.iter().enumerate() {
            kkt[(a, b)] = sigma[(i, j)];
        }
        kkt[(a, k)] = 1.0;
        kkt[(k, a)] = 1.0;
        rhs[a] = -(0..m)
            .filter_map(|j| fixed[j].map(|v| sigma[(i, j)] * v))
            .sum::<f64>();
    }
    rhs[k] = 1.0 - fixed_sum;
    let sol = kkt.lu().solve(&rhs)?;
    let mut out: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    for (a, &i) in free.iter().enumerate() {
        out[i] = sol[a];
    }
    let feasible = out.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12);
    feasible.then_some(out)
}

/// Random positive semidefinite `m × m` covariance of daily-return scale.
pub fn random_covariance(r: &mut ChaCha8Rng, m: usize, rank: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(rank, m, |_, _| (r.random::<f64>() - 0.5) * 0.04);
    let s = b.transpose() * &b / rank as f64;
    (&s + s.transpose()) * 0.5
}

/// Metrics row recomputed from the textbook definitions.
pub struct RefMetrics {
    pub cr: f64,
    pub er: f64,
    pub sd: f64,
    pub sr: Option<f64>,
    pub var: f64,
    pub cvar: f64,
    pub mdd: f64,
    pub omega: Option<f64>,
    pub sortino: Option<f64>,
    pub up: Option<f64>,
}

pub fn reference_metrics(rp: &[f64], rf: &[f64], rb: &[f64], ann: f64) -> RefMetrics {
    let t = rp.len() as f64;
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut pv = 100.0;
    let mut peak = 100.0f64;
    let mut mdd = 0.0f64;
    for &r in rp {
        pv *= 1.0 + r;
        peak = peak.max(pv);
        mdd = mdd.max((peak - pv) / peak * 100.0);
    }
    let cr = pv / 100.0 - 1.0;
    let mu = avg(rp);
    let var = rp.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / (t - 1.0);
    let sd_d = var.sqrt();
    let sr = (sd_d > 0.0).then(|| (mu - avg(rf)) * ann / (sd_d * ann.sqrt()));
    let mut sorted = rp.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = ((0.05 * t).ceil() as usize).max(1);
    let q = sorted[k - 1];
    let tail: Vec<f64> = sorted.iter().copied().filter(|&v| v <= q).collect();
    let excess: Vec<f64> = rp.iter().zip(rb).map(|(p, b)| p - b).collect();
    let lpm1 = excess.iter().map(|e| (-e).max(0.0)).sum::<f64>() / t;
    let lpm2 = excess.iter().map(|e| (-e).max(0.0).powi(2)).sum::<f64>() / t;
    let upm1 = excess.iter().map(|e| e.max(0.0)).sum::<f64>() / t;
    let mean_excess = mu - avg(rb);
    RefMetrics {
        cr,
        er: mu * ann,
        sd: sd_d * ann.sqrt(),
        sr,
        var: q,
        cvar: avg(&tail),
        mdd,
        omega: (lpm1 > 0.0).then(|| 1.0 + mean_excess / lpm1),
        sortino: (lpm2 > 0.0).then(|| mean_excess / lpm2.sqrt()),
        up: (lpm2 > 0.0).then(|| upm1 / lpm2.sqrt()),
    }
}

/// Weekday dates from `start_year`-01-01 covering `years` calendar years.
pub fn business_days(start_year: i32, years: i32) -> Vec<walkfolio_core::date::Date> {
    use walkfolio_core::date::Date;
    let mut d = Date::from_ymd(start_year, 1, 1).unwrap();
    let mut out = Vec::new();
    while d.year() < start_year + years {
        if d.weekday() < 5 {
            out.push(d);
        }
        d = d.add_days(1);
    }
    out
}

/// One-factor synthetic returns panel on business days.
pub fn synthetic_panel(
    seed: u64,
    n: usize,
    start_year: i32,
    years: i32,
) -> walkfolio_core::panel::ReturnsPanel {
    let dates = business_days(start_year, years);
    let mut r = rng(seed);
    let beta: Vec<f64> = (0..n).map(|_| 0.5 + r.random::<f64>()).collect();
    let mut values = DMatrix::zeros(dates.len(), n);
    for t in 0..dates.len() {
        let f = (r.random::<f64>() - 0.5) * 0.02;
        for j in 0..n {
            values[(t, j)] = 2e-4 + beta[j] * f + (r.random::<f64>() - 0.5) * 0.03;
        }
    }
    let tickers = (0..n).map(|j| format!("T{j:03}")).collect();
    walkfolio_core::panel::ReturnsPanel::new(dates, tickers, values).unwrap()
}
