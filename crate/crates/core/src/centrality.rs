//! Node centralities on market graphs.
//!
//! Resolvent and exponential measures count walks; their nonbacktracking
//! counterparts count walks that never traverse an edge and immediately
//! return along it (for a loop, never take it twice in a row). Weighted
//! walks carry the product of their edge weights.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::graphbuild::MarketGraph;
use crate::linalg::{self, SpdFactor};
use crate::math;
use crate::{Error, Result};

/// The available centrality measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    Degree,
    Katz,
    KatzMin,
    Subgraph,
    Exponential,
    ExpSubgraph,
    Nbtw,
    NbtwSubgraph,
    NbtwExp,
    NbtwExpSubgraph,
    Betweenness,
}

/// Parameter-range family of a measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Resolvent of `A`; range `(0, 1/ρ(A))`.
    Walk,
    /// Resolvent of the nonbacktracking generating matrix.
    Nbtw,
    /// Exponential generating functions; range `(0, 1]`.
    Exponential,
}

impl Measure {
    pub const ALL: [Measure; 11] = [
        Measure::Degree,
        Measure::Katz,
        Measure::KatzMin,
        Measure::Subgraph,
        Measure::Exponential,
        Measure::ExpSubgraph,
        Measure::Nbtw,
        Measure::NbtwSubgraph,
        Measure::NbtwExp,
        Measure::NbtwExpSubgraph,
        Measure::Betweenness,
    ];

    /// Name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            Measure::Degree => "Degree",
            Measure::Katz => "Katz",
            Measure::KatzMin => "Katz Min",
            Measure::Subgraph => "Katz Subgraph",
            Measure::Exponential => "Exponential",
            Measure::ExpSubgraph => "Exponential Subgraph",
            Measure::Nbtw => "NBTW",
            Measure::NbtwSubgraph => "NBTW Subgraph",
            Measure::NbtwExp => "NBTW Exponential",
            Measure::NbtwExpSubgraph => "NBTW Exponential Subgraph",
            Measure::Betweenness => "Betweenness",
        }
    }

    /// Identifier used on the command line and in record files.
    pub fn key(self) -> &'static str {
        match self {
            Measure::Degree => "degree",
            Measure::Katz => "katz",
            Measure::KatzMin => "katz-min",
            Measure::Subgraph => "subgraph",
            Measure::Exponential => "exponential",
            Measure::ExpSubgraph => "exp-subgraph",
            Measure::Nbtw => "nbtw",
            Measure::NbtwSubgraph => "nbtw-subgraph",
            Measure::NbtwExp => "nbtw-exp",
            Measure::NbtwExpSubgraph => "nbtw-exp-subgraph",
            Measure::Betweenness => "betweenness",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL.into_iter().find(|m| m.key() == s)
    }

    pub fn family(self) -> Option<Family> {
        match self {
            Measure::Degree | Measure::Betweenness => None,
            Measure::Katz | Measure::KatzMin | Measure::Subgraph => Some(Family::Walk),
            Measure::Nbtw | Measure::NbtwSubgraph => Some(Family::Nbtw),
            Measure::Exponential
            | Measure::ExpSubgraph
            | Measure::NbtwExp
            | Measure::NbtwExpSubgraph => Some(Family::Exponential),
        }
    }

    /// True for measures evaluated on the `α = k/10 · α_max` grid.
    pub fn takes_alpha_fraction(self) -> bool {
        !matches!(
            self,
            Measure::Degree | Measure::Betweenness | Measure::KatzMin
        )
    }
}

/// Scores for one measure and parameter choice.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralityVector {
    pub scores: Vec<f64>,
    pub measure: Measure,
    pub alpha_fraction: Option<f64>,
    /// Resolved parameter; `None` for parameter-free measures and for
    /// edgeless graphs.
    pub alpha: Option<f64>,
    pub alpha_max: Option<f64>,
    /// `ρ(A)` when the measure needed it.
    pub spectral_radius: Option<f64>,
    /// Set when the graph has no edges and the small-α limit was returned.
    pub degenerate: bool,
}

/// Weighted degree: row sums of the adjacency matrix.
pub fn degree(g: &MarketGraph) -> Vec<f64> {
    (0..g.n()).map(|i| g.a.row(i).sum()).collect()
}

fn is_edgeless(g: &MarketGraph) -> bool {
    g.a.iter().all(|&v| v == 0.0)
}

/// Upper end of the admissible parameter range.
///
/// Returns `f64::INFINITY` for an edgeless graph in the walk and
/// nonbacktracking families.
pub fn alpha_max(g: &MarketGraph, family: Family) -> f64 {
    match family {
        Family::Exponential => 1.0,
        Family::Walk => {
            let rho = linalg::spectral_radius(&g.a);
            if rho == 0.0 {
                f64::INFINITY
            } else {
                1.0 / rho
            }
        }
        Family::Nbtw => nbtw_alpha_max(g, linalg::spectral_radius(&g.a)),
    }
}

/// Smallest α at which the nonbacktracking system stops being positive
/// definite, capped by the first pole `1/max A_ij` of its entries.
fn nbtw_alpha_max(g: &MarketGraph, rho: f64) -> f64 {
    if rho == 0.0 {
        return f64::INFINITY;
    }
    let cap = 1.0 / g.a.max();
    let lo = 1.0 / rho;
    if lo >= cap {
        return cap;
    }
    let pd = |x: f64| {
        psi_matrix(g, x)
            .map(|p| linalg::is_positive_definite(&p))
            .unwrap_or(false)
    };
    if !pd(lo) {
        return lo;
    }
    let steps = 8;
    let mut prev = lo;
    let mut bad = None;
    for j in 1..=steps {
        let x = if j == steps {
            cap - (cap - lo) * 1e-9
        } else {
            lo + (cap - lo) * j as f64 / steps as f64
        };
        if pd(x) {
            prev = x;
        } else {
            bad = Some(x);
            break;
        }
    }
    let Some(mut hi) = bad else { return cap };
    let mut lo = prev;
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if pd(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    // Definiteness cannot be resolved this close to a singular entry.
    if cap - root <= 1e-6 * cap {
        cap
    } else {
        root
    }
}

/// `(1 - e^{-x}) / x`, evaluated without cancellation; tends to 1 as
/// `x → 0`.
pub fn katz_min_formula(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        -math::expm1(-x) / x
    }
}

/// Katz parameter matched to exponential centrality, computed from the
/// spectral radius `ρ(A)`. `None` for an edgeless graph.
pub fn katz_min_alpha(g: &MarketGraph) -> Option<f64> {
    let rho = linalg::spectral_radius(&g.a);
    (rho > 0.0).then(|| katz_min_formula(rho))
}

fn check_range(alpha: f64, max: f64, inclusive: bool) -> Result<()> {
    let ok = alpha > 0.0 && if inclusive { alpha <= max } else { alpha < max };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "alpha {alpha} outside the admissible range (0, {max})"
        )))
    }
}

fn residual_check(m: &DMatrix<f64>, v: &DVector<f64>, rhs: &DVector<f64>) -> Result<()> {
    let n = m.nrows().max(1) as f64;
    let res = (m * v - rhs).amax();
    if res <= 1e-10 * n * rhs.amax().max(1.0) {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "linear solve residual {res:e} too large"
        )))
    }
}

fn resolvent(g: &MarketGraph, alpha: f64) -> DMatrix<f64> {
    let n = g.n();
    DMatrix::identity(n, n) - &g.a * alpha
}

/// Katz centrality `(I - αA)^{-1} 𝟙`.
pub fn katz(g: &MarketGraph, alpha: f64) -> Result<Vec<f64>> {
    check_range(alpha, alpha_max(g, Family::Walk), false)?;
    katz_unchecked(g, alpha)
}

fn katz_unchecked(g: &MarketGraph, alpha: f64) -> Result<Vec<f64>> {
    let m = resolvent(g, alpha);
    let ones = DVector::from_element(g.n(), 1.0);
    let f = SpdFactor::new(m)?;
    let v = f.solve(&ones);
    residual_check(f.matrix(), &v, &ones)?;
    Ok(v.iter().copied().collect())
}

/// Katz centrality at the Katz-min parameter `α = (1 - e^{-ρ})/ρ`.
///
/// Here `1 - αρ = e^{-ρ}` underflows the direct solve once `ρ` is moderate,
/// so the resolvent is applied through the eigendecomposition of each
/// component with that gap supplied exactly.
fn katz_min_scores(g: &MarketGraph, rho: f64) -> Result<Vec<f64>> {
    let gap = math::exp(-rho);
    let mut out = vec![1.0; g.n()];
    for comp in linalg::connected_components(&g.a) {
        let sub = linalg::submatrix(&g.a, &comp);
        if comp.len() == 1 && sub[(0, 0)] == 0.0 {
            continue;
        }
        let eig = sub.symmetric_eigen();
        let mut v = DVector::<f64>::zeros(comp.len());
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            let q = eig.eigenvectors.column(k);
            let below = (rho - lambda).max(0.0);
            let below = if below <= 1e-12 * rho { 0.0 } else { below };
            let d = below / rho + lambda / rho * gap;
            if !(d > 0.0) {
                return Err(Error::Numeric("Katz-min resolvent is singular".into()));
            }
            v += q * (q.sum() / d);
        }
        for (li, &i) in comp.iter().enumerate() {
            out[i] = v[li];
        }
    }
    Ok(out)
}

/// Resolvent subgraph centrality: the diagonal of `(I - αA)^{-1}`.
pub fn subgraph(g: &MarketGraph, alpha: f64) -> Result<Vec<f64>> {
    check_range(alpha, alpha_max(g, Family::Walk), false)?;
    subgraph_unchecked(g, alpha)
}

fn subgraph_unchecked(g: &MarketGraph, alpha: f64) -> Result<Vec<f64>> {
    let inv = SpdFactor::new(resolvent(g, alpha))?.inverse();
    Ok(inv.diagonal().iter().copied().collect())
}

fn exp_of(g: &MarketGraph, alpha: f64) -> Result<DMatrix<f64>> {
    let e = linalg::expm(&(&g.a * alpha));
    if e.iter().all(|v| v.is_finite()) {
        Ok(e)
    } else {
        Err(Error::Numeric("matrix exponential overflowed".into()))
    }
}

/// Exponential centrality `e^{αA} 𝟙`.
pub fn exponential(g: &MarketGraph, alpha: f64) -> Result<Vec<f64>> {
    check_range(alpha, 1.0, true)?;
    let e = exp_of(g, alpha)?;
    Ok((0..g.n()).map(|i| e.row(i).sum()).collect())
}

/// Exponential subgraph centrality: the diagonal of `e^{αA}`.
pub fn exp_subgraph(g: &MarketGraph, alpha: f64) -> Result<Vec<f64>> {
    check_range(alpha, 1.0, true)?;
    Ok(exp_of(g, alpha)?.diagonal().iter().copied().collect())
}

/// The matrix `Ψ(α) = Ψ_e(α) - Ψ_o(α)` whose inverse generates weighted
/// nonbacktracking walk counts:
///
/// `(Ψ_e)_ii = 1 + Σ_j α²A_ij² / (1 - α²A_ij²)` and
/// `(Ψ_o)_ij = αA_ij / (1 - α²A_ij²)`, the latter including the diagonal.
pub fn psi_matrix(g: &MarketGraph, alpha: f64) -> Result<DMatrix<f64>> {
    let n = g.n();
    let mut psi = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            let w = g.a[(i, j)];
            if w == 0.0 {
                continue;
            }
            let aw = alpha * w;
            let den = 1.0 - aw * aw;
            if !(den > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "alpha {alpha} reaches the pole of edge ({i},{j})"
                )));
            }
            psi[(i, j)] -= aw / den;
            psi[(i, i)] += aw * aw / den;
        }
    }
    for i in 0..n {
        psi[(i, i)] += 1.0;
    }
    Ok(psi)
}

/// `I - αA + α²(D - I)`, which equals `(1 - α²) Ψ(α)` on simple graphs.
fn deformed_laplacian(g: &MarketGraph, alpha: f64) -> DMatrix<f64> {
    let n = g.n();
    let mut m = resolvent(g, alpha);
    for i in 0..n {
        let d = g.a.row(i).sum();
        m[(i, i)] += alpha * alpha * (d - 1.0);
    }
    m
}

/// Nonbacktracking walk centrality `Ψ(α)^{-1} 𝟙`.
pub fn nbtw(g: &MarketGraph, alpha: f64) -> Result<Vec<f64>> {
    check_range(alpha, alpha_max(g, Family::Nbtw), false)?;
    nbtw_unchecked(g, alpha)
}

fn nbtw_unchecked(g: &MarketGraph, alpha: f64) -> Result<Vec<f64>> {
    let n = g.n();
    let ones = DVector::from_element(n, 1.0);
    if g.is_simple() {
        let rhs = &ones * (1.0 - alpha * alpha);
        let f = SpdFactor::new(deformed_laplacian(g, alpha))?;
        let v = f.solve(&rhs);
        residual_check(f.matrix(), &v, &rhs)?;
        Ok(v.iter().copied().collect())
    } else {
        nbtw_psi_route(g, alpha)
    }
}

/// Solves `Ψ(α) v = 𝟙` directly, whatever the graph type.
pub fn nbtw_psi_route(g: &MarketGraph, alpha: f64) -> Result<Vec<f64>> {
    let ones = DVector::from_element(g.n(), 1.0);
    let f = SpdFactor::new(psi_matrix(g, alpha)?)?;
    let v = f.solve(&ones);
    residual_check(f.matrix(), &v, &ones)?;
    Ok(v.iter().copied().collect())
}

/// Nonbacktracking subgraph centrality: the diagonal of `Ψ(α)^{-1}`.
pub fn nbtw_subgraph(g: &MarketGraph, alpha: f64) -> Result<Vec<f64>> {
    check_range(alpha, alpha_max(g, Family::Nbtw), false)?;
    nbtw_subgraph_unchecked(g, alpha)
}

fn nbtw_subgraph_unchecked(g: &MarketGraph, alpha: f64) -> Result<Vec<f64>> {
    if g.is_simple() {
        let inv = SpdFactor::new(deformed_laplacian(g, alpha))?.inverse();
        Ok(inv
            .diagonal()
            .iter()
            .map(|d| d * (1.0 - alpha * alpha))
            .collect())
    } else {
        let inv = SpdFactor::new(psi_matrix(g, alpha)?)?.inverse();
        Ok(inv.diagonal().iter().copied().collect())
    }
}

/// Directed edges of one connected component in local numbering, grouped
/// by source node. A loop appears once.
struct Edges {
    src: Vec<usize>,
    dst: Vec<usize>,
    w: Vec<f64>,
    nodes: usize,
}

impl Edges {
    fn of(a: &DMatrix<f64>, nodes: &[usize]) -> Self {
        let (mut src, mut dst, mut w) = (Vec::new(), Vec::new(), Vec::new());
        for (li, &i) in nodes.iter().enumerate() {
            for (lj, &j) in nodes.iter().enumerate() {
                let v = a[(i, j)];
                if v != 0.0 {
                    src.push(li);
                    dst.push(lj);
                    w.push(v);
                }
            }
        }
        Edges {
            src,
            dst,
            w,
            nodes: nodes.len(),
        }
    }
}

/// Upper bound on `Σ_{j>k} x^j / j!`, or infinity while the terms still grow.
fn exp_tail(x: f64, k: usize) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let j = (k + 1) as f64;
    let ratio = x / (j + 1.0);
    if ratio >= 1.0 {
        return f64::INFINITY;
    }
    math::exp(j * math::ln(x) - math::lgamma(j + 1.0)) / (1.0 - ratio)
}

const MAX_TERMS: usize = 100_000;
const SERIES_RTOL: f64 = 1e-12;

/// Runs the scaled nonbacktracking recurrence for `b` start vectors at once.
///
/// `u0` holds `p(0)` as `nodes × b` (node-major). After each length `k`,
/// `visit(k, ũ_k)` receives `α^k/k! · p(k)` in the same layout and returns
/// the smallest partial sum it cares about; the loop stops once the tail
/// bound `scale · Σ_{j>k}(αρ)^j/j!` falls below `1e-12` of that.
fn nbtw_series(
    e: &Edges,
    b: usize,
    u0: &[f64],
    alpha: f64,
    rho: f64,
    scale: f64,
    mut visit: impl FnMut(usize, &[f64]) -> f64,
) -> Result<()> {
    let m = e.nodes;
    let ne = e.w.len();
    let mut u_prev2 = vec![0.0; m * b];
    let mut u_prev1 = u0.to_vec();
    let mut z_prev2 = vec![0.0; ne * b];
    let mut z_prev1 = vec![0.0; ne * b];
    let mut z_new = vec![0.0; ne * b];
    let mut u_new = vec![0.0; m * b];
    let x = alpha * rho;
    for k in 1..MAX_TERMS {
        let c1 = alpha / k as f64;
        let c2 = if k >= 2 {
            alpha * alpha / (k as f64 * (k - 1) as f64)
        } else {
            0.0
        };
        u_new.iter_mut().for_each(|v| *v = 0.0);
        for ed in 0..ne {
            let (i, j, w) = (e.src[ed], e.dst[ed], e.w[ed]);
            let (a1, a2) = (c1 * w, c2 * w * w);
            let zo = &mut z_new[ed * b..(ed + 1) * b];
            let zp = &z_prev2[ed * b..(ed + 1) * b];
            let uj = &u_prev1[j * b..(j + 1) * b];
            let ui = &u_prev2[i * b..(i + 1) * b];
            for c in 0..b {
                zo[c] = a1 * uj[c] + a2 * (zp[c] - ui[c]);
            }
            let acc = &mut u_new[i * b..(i + 1) * b];
            for c in 0..b {
                acc[c] += zo[c];
            }
        }
        let floor = visit(k, &u_new);
        if !u_new.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("nonbacktracking series overflowed".into()));
        }
        if scale * exp_tail(x, k) <= SERIES_RTOL * floor {
            return Ok(());
        }
        core::mem::swap(&mut z_prev2, &mut z_prev1);
        core::mem::swap(&mut z_prev1, &mut z_new);
        core::mem::swap(&mut u_prev2, &mut u_prev1);
        core::mem::swap(&mut u_prev1, &mut u_new);
    }
    Err(Error::Numeric(
        "nonbacktracking series did not converge".into(),
    ))
}

/// Nonbacktracking exponential centrality `Σ_k α^k/k! · P_k 𝟙`, where
/// `P_k` counts weighted nonbacktracking walks of length `k`.
pub fn nbtw_exp(g: &MarketGraph, alpha: f64) -> Result<Vec<f64>> {
    check_range(alpha, 1.0, true)?;
    let mut out = vec![1.0; g.n()];
    for comp in linalg::connected_components(&g.a) {
        let e = Edges::of(&g.a, &comp);
        if e.w.is_empty() {
            continue;
        }
        let rho = linalg::spectral_radius(&linalg::submatrix(&g.a, &comp));
        let mut acc = vec![1.0; comp.len()];
        let scale = math::sqrt(comp.len() as f64);
        nbtw_series(&e, 1, &vec![1.0; comp.len()], alpha, rho, scale, |_, u| {
            let mut lo = f64::INFINITY;
            for (a, v) in acc.iter_mut().zip(u) {
                *a += v;
                lo = lo.min(*a);
            }
            lo
        })?;
        for (li, &i) in comp.iter().enumerate() {
            out[i] = acc[li];
        }
    }
    Ok(out)
}

/// Nonbacktracking exponential subgraph centrality: the diagonal of
/// `Σ_k α^k/k! · P_k`.
pub fn nbtw_exp_subgraph(g: &MarketGraph, alpha: f64) -> Result<Vec<f64>> {
    check_range(alpha, 1.0, true)?;
    let mut out = vec![1.0; g.n()];
    for comp in linalg::connected_components(&g.a) {
        let sub = linalg::submatrix(&g.a, &comp);
        if sub.iter().all(|&v| v == 0.0) {
            continue;
        }
        let diag = if !g.weighted {
            nbtw_exp_diag_blocks(&sub, alpha)?
        } else if let Some(d) = nbtw_exp_diag_nodes(&sub, alpha)? {
            d
        } else {
            nbtw_exp_diag_edges(&sub, alpha)?
        };
        for (li, &i) in comp.iter().enumerate() {
            out[i] = diag[li];
        }
    }
    Ok(out)
}

/// Diagonal from the node-level convolution
/// `P_{k+1} = Σ_{p odd} (A^{∘p}) P_{k+1-p} - Σ_{p even} D_p P_{k+1-p}`,
/// where `D_p` holds the row sums of `A^{∘p}` and `P_0 = I`.
///
/// Each odd term costs a dense product, so this only pays off on dense
/// graphs whose walk counts grow much faster than the weights decay.
/// Returns `None` when the edge recurrence is expected to be cheaper, or
/// when a dropped history term turns out not to be negligible.
fn nbtw_exp_diag_nodes(a: &DMatrix<f64>, alpha: f64) -> Result<Option<Vec<f64>>> {
    let n = a.nrows();
    let off = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { a[(i, j)] });
    let nnz = off.iter().filter(|&&v| v != 0.0).count();
    let rho = linalg::spectral_radius(a);
    let wmax = off.max();
    let q = (wmax / rho) * (wmax / rho);
    if nnz == 0 || !(q < 1.0) {
        return Ok(None);
    }
    let products = 1.0 + math::ln(1e-17) / math::ln(q);
    if products * (n * n) as f64 >= 25.0 * nnz as f64 {
        return Ok(None);
    }

    // α^{k+1-j} j!/(k+1)!, the weight of history term j in step k.
    let coef = |j: usize, k: usize| (j + 1..=k + 1).fold(1.0, |c, i| c * alpha / i as f64);
    let h1 = linalg::inf_norm(&off);
    let loop_max = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max);
    let mut powers = HadamardPowers {
        a,
        off: &off,
        odd: Vec::new(),
        diag: Vec::new(),
    };

    let mut history = alloc::collections::VecDeque::new();
    history.push_back(HistoryTerm::new(0, DMatrix::identity(n, n)));
    let mut dropped: Option<(usize, f64)> = None;
    let mut acc = vec![1.0; n];
    let x = alpha * rho;
    for k in 0..MAX_TERMS {
        let last = history.back().expect("history is never empty");
        let mut next = DMatrix::zeros(n, n);
        upper_gemm(&mut next, alpha / (k + 1) as f64, a, &last.u);
        let tol = 1e-14 * next.amax();
        // Entrywise bound on a history term, from A^{∘p} ≤ wmax^{p-1} A
        // off the diagonal.
        let bound = |j: usize, mu: f64| {
            coef(j, k)
                * mu
                * (2.0 * h1 * math::powi(wmax, (k - j) as i32)
                    + math::powi(loop_max, (k + 1 - j) as i32))
        };
        if dropped.is_some_and(|(j, mu)| bound(j, mu) > tol) {
            return Ok(None);
        }
        for term in history.iter().rev().skip(1) {
            let (j, mu) = (term.j, term.mu);
            if bound(j, mu) <= tol {
                continue;
            }
            let p = k + 1 - j;
            let c = coef(j, k);
            if p % 2 == 1 {
                let (h, norm) = powers.odd(p);
                if c * norm * mu > tol {
                    upper_gemm(&mut next, c, h, &term.u);
                }
            }
            let (u, mu) = (&term.u, term.mu);
            let (d, norm) = powers.diag(p);
            if c * norm * mu > tol {
                let scaled: Vec<f64> = d.iter().map(|v| c * v).collect();
                for (dst, src) in next
                    .as_mut_slice()
                    .chunks_exact_mut(n)
                    .zip(u.as_slice().chunks_exact(n))
                {
                    for ((y, x), s) in dst.iter_mut().zip(src).zip(&scaled) {
                        *y += s * x;
                    }
                }
            }
        }
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("nonbacktracking series overflowed".into()));
        }
        for j in 0..n {
            for i in j + 1..n {
                next[(i, j)] = next[(j, i)];
            }
        }
        let mut floor = f64::INFINITY;
        for (i, s) in acc.iter_mut().enumerate() {
            *s += next[(i, i)];
            floor = floor.min(*s);
        }
        if exp_tail(x, k + 1) <= SERIES_RTOL * floor {
            return Ok(Some(acc));
        }
        history.push_back(HistoryTerm::new(k + 1, next));
        while history.len() > 2 {
            let (j, mu) = (history[0].j, history[0].mu);
            if bound(j, mu) > 1e-6 * tol {
                break;
            }
            history.pop_front();
            dropped = Some((j, mu));
        }
    }
    Err(Error::Numeric(
        "nonbacktracking series did not converge".into(),
    ))
}

/// Adds `c · x y` to the blocks of `dst` on and above the block diagonal.
/// Every `P_k` is symmetric, so the lower blocks are mirrored afterwards.
fn upper_gemm(dst: &mut DMatrix<f64>, c: f64, x: &DMatrix<f64>, y: &DMatrix<f64>) {
    let n = dst.nrows();
    let parts = if n >= 256 {
        4
    } else if n >= 96 {
        2
    } else {
        1
    };
    let cut = |b: usize| b * n / parts;
    for bi in 0..parts {
        let (r0, rs) = (cut(bi), cut(bi + 1) - cut(bi));
        for bj in bi..parts {
            let (c0, cs) = (cut(bj), cut(bj + 1) - cut(bj));
            dst.view_mut((r0, c0), (rs, cs))
                .gemm(c, &x.rows(r0, rs), &y.columns(c0, cs), 1.0);
        }
    }
}

struct HistoryTerm {
    j: usize,
    u: DMatrix<f64>,
    mu: f64,
}

impl HistoryTerm {
    fn new(j: usize, u: DMatrix<f64>) -> Self {
        let mu = u.amax();
        HistoryTerm { j, u, mu }
    }
}

/// Lazily built Hadamard powers for [`nbtw_exp_diag_nodes`], each with its
/// infinity norm.
struct HadamardPowers<'a> {
    a: &'a DMatrix<f64>,
    off: &'a DMatrix<f64>,
    /// Off-diagonal part of `A^{∘p}` for odd `p`, at index `p / 2`.
    odd: Vec<Option<(DMatrix<f64>, f64)>>,
    /// Diagonal coefficients at index `p - 2`: the loop weights `A_ii^p`
    /// for odd `p`, and `-Σ_j A_ij^p` for even `p`.
    diag: Vec<Option<(Vec<f64>, f64)>>,
}

impl HadamardPowers<'_> {
    fn odd(&mut self, p: usize) -> (&DMatrix<f64>, f64) {
        let slot = p / 2;
        if self.odd.len() <= slot {
            self.odd.resize(slot + 1, None);
        }
        let off = self.off;
        let (m, norm) = self.odd[slot].get_or_insert_with(|| {
            let m = off.map(|v| math::powi(v, p as i32));
            let norm = linalg::inf_norm(&m);
            (m, norm)
        });
        (m, *norm)
    }

    fn diag(&mut self, p: usize) -> (&[f64], f64) {
        let slot = p - 2;
        if self.diag.len() <= slot {
            self.diag.resize(slot + 1, None);
        }
        let a = self.a;
        let (d, norm) = self.diag[slot].get_or_insert_with(|| {
            let n = a.nrows();
            let d: Vec<f64> = if p % 2 == 1 {
                (0..n).map(|i| math::powi(a[(i, i)], p as i32)).collect()
            } else {
                (0..n)
                    .map(|i| {
                        -a.row(i)
                            .iter()
                            .map(|&v| math::powi(v, p as i32))
                            .sum::<f64>()
                    })
                    .collect()
            };
            let norm = d.iter().fold(0.0f64, |m, v| m.max(math::abs(*v)));
            (d, norm)
        });
        (d, *norm)
    }
}

/// Diagonal by running the edge recurrence from every unit vector, in
/// column batches.
fn nbtw_exp_diag_edges(a: &DMatrix<f64>, alpha: f64) -> Result<Vec<f64>> {
    let n = a.nrows();
    let all: Vec<usize> = (0..n).collect();
    let e = Edges::of(a, &all);
    let rho = linalg::spectral_radius(a);
    let mut out = vec![1.0; n];
    const BATCH: usize = 16;
    for start in (0..n).step_by(BATCH) {
        let b = BATCH.min(n - start);
        let mut u0 = vec![0.0; n * b];
        for c in 0..b {
            u0[(start + c) * b + c] = 1.0;
        }
        let mut acc = vec![1.0; b];
        nbtw_series(&e, b, &u0, alpha, rho, 1.0, |_, u| {
            let mut lo = f64::INFINITY;
            for c in 0..b {
                acc[c] += u[(start + c) * b + c];
                lo = lo.min(acc[c]);
            }
            lo
        })?;
        out[start..start + b].copy_from_slice(&acc);
    }
    Ok(out)
}

/// Diagonal for unweighted graphs.
///
/// There `P_k = R_k - R_{k-2}` with `R_0 = I`, `R_{-1} = 0` and
/// `R_k = A R_{k-1} - (D' - I) R_{k-2}`, where `D'` holds the row sums of
/// `A∘A`. With the companion matrix `𝒜 = [[A, -(D'-I)], [I, 0]]`,
/// `Σ α^k/k! R_k` is the leading block of `e^{α𝒜}` and the shifted sum
/// `Σ α^{k+2}/(k+2)! R_k` is the lower block of `∫_0^α e^{s𝒜} ds [I; 0]`.
/// Both come from one scaling-and-squaring pass.
fn nbtw_exp_diag_blocks(a: &DMatrix<f64>, alpha: f64) -> Result<Vec<f64>> {
    let n = a.nrows();
    let dm1: Vec<f64> = (0..n)
        .map(|i| a.row(i).iter().map(|v| v * v).sum::<f64>() - 1.0)
        .collect();
    // y = 𝒜 x for a 2n-row block x.
    let apply = |x: &DMatrix<f64>| -> DMatrix<f64> {
        let c = x.ncols();
        let top = x.rows(0, n);
        let bot = x.rows(n, n);
        let mut y = DMatrix::zeros(2 * n, c);
        let mut yt = a * top;
        for j in 0..c {
            for i in 0..n {
                yt[(i, j)] -= dm1[i] * bot[(i, j)];
            }
        }
        y.rows_mut(0, n).copy_from(&yt);
        y.rows_mut(n, n).copy_from(&top);
        y
    };
    let norm = (0..n)
        .map(|i| a.row(i).iter().map(|v| math::abs(*v)).sum::<f64>() + math::abs(dm1[i]))
        .fold(1.0, f64::max)
        * alpha;
    let mut squarings = 0u32;
    let mut h = alpha;
    let mut hn = norm;
    while hn > 1.0 {
        h *= 0.5;
        hn *= 0.5;
        squarings += 1;
    }
    let degree = 20;
    let eye = DMatrix::<f64>::identity(2 * n, 2 * n);
    let mut b = DMatrix::<f64>::zeros(2 * n, n);
    b.rows_mut(0, n).fill_with_identity();
    let mut e = eye.clone();
    let mut f = b.clone();
    for k in (1..=degree).rev() {
        e = &eye + apply(&e) * (h / k as f64);
        f = &b + apply(&f) * (h / (k + 1) as f64);
    }
    f *= h;
    let diag = |e: &DMatrix<f64>, f: &DMatrix<f64>, last: bool| -> Vec<f64> {
        (0..n)
            .map(|i| {
                if last {
                    let r = e.row(i).dot(&e.column(i).transpose());
                    let g = e.row(n + i).dot(&f.column(i).transpose()) + f[(n + i, i)];
                    r - g
                } else {
                    e[(i, i)] - f[(n + i, i)]
                }
            })
            .collect()
    };
    let out = if squarings == 0 {
        diag(&e, &f, false)
    } else {
        for _ in 1..squarings {
            f = &e * &f + &f;
            e = &e * &e;
        }
        diag(&e, &f, true)
    };
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Numeric("matrix exponential overflowed".into()))
    }
}

/// Shortest-path betweenness, unnormalized, over unordered node pairs.
///
/// Unweighted graphs use hop counts; weighted graphs use edge length
/// `1/A_ij`. Loops are ignored.
pub fn betweenness(g: &MarketGraph) -> Vec<f64> {
    let n = g.n();
    let nbrs: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && g.a[(i, j)] != 0.0)
                .map(|j| (j, if g.weighted { 1.0 / g.a[(i, j)] } else { 1.0 }))
                .collect()
        })
        .collect();
    let mut cb = vec![0.0; n];
    let mut order = Vec::with_capacity(n);
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![f64::INFINITY; n];
    let mut delta = vec![0.0; n];
    let mut done = vec![false; n];
    for s in 0..n {
        order.clear();
        for v in 0..n {
            preds[v].clear();
            sigma[v] = 0.0;
            dist[v] = f64::INFINITY;
            delta[v] = 0.0;
            done[v] = false;
        }
        sigma[s] = 1.0;
        dist[s] = 0.0;
        if g.weighted {
            loop {
                let mut u = usize::MAX;
                for v in 0..n {
                    if !done[v] && dist[v].is_finite() && (u == usize::MAX || dist[v] < dist[u]) {
                        u = v;
                    }
                }
                if u == usize::MAX {
                    break;
                }
                done[u] = true;
                order.push(u);
                for &(v, len) in &nbrs[u] {
                    if done[v] {
                        continue;
                    }
                    let d = dist[u] + len;
                    let tol = 1e-12 * d;
                    if d < dist[v] - tol {
                        dist[v] = d;
                        sigma[v] = sigma[u];
                        preds[v].clear();
                        preds[v].push(u);
                    } else if math::abs(d - dist[v]) <= tol {
                        sigma[v] += sigma[u];
                        preds[v].push(u);
                    }
                }
            }
        } else {
            order.push(s);
            let mut head = 0;
            while head < order.len() {
                let u = order[head];
                head += 1;
                for &(v, _) in &nbrs[u] {
                    if dist[v].is_infinite() {
                        dist[v] = dist[u] + 1.0;
                        order.push(v);
                    }
                    if dist[v] == dist[u] + 1.0 {
                        sigma[v] += sigma[u];
                        preds[v].push(u);
                    }
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                cb[w] += delta[w];
            }
        }
    }
    cb.iter().map(|v| v / 2.0).collect()
}

/// Evaluates `measure` on `g`, resolving `α = fraction · α_max`.
///
/// `fraction` is required for measures on the α grid and ignored by the
/// others. Edgeless graphs yield the small-α limit (all ones) for every
/// walk-counting measure and are flagged as degenerate.
pub fn evaluate(
    g: &MarketGraph,
    measure: Measure,
    fraction: Option<f64>,
) -> Result<CentralityVector> {
    let n = g.n();
    let mut cv = CentralityVector {
        scores: Vec::new(),
        measure,
        alpha_fraction: None,
        alpha: None,
        alpha_max: None,
        spectral_radius: None,
        degenerate: false,
    };
    match measure {
        Measure::Degree => {
            cv.scores = degree(g);
            return Ok(cv);
        }
        Measure::Betweenness => {
            cv.scores = betweenness(g);
            return Ok(cv);
        }
        _ => {}
    }
    if measure.takes_alpha_fraction() {
        let f = fraction.ok_or_else(|| {
            Error::InvalidParameter(format!("measure {} needs an alpha fraction", measure.key()))
        })?;
        if !(f > 0.0 && f < 1.0) && !(f == 1.0 && measure.family() == Some(Family::Exponential)) {
            return Err(Error::InvalidParameter(format!(
                "alpha fraction {f} outside (0, 1)"
            )));
        }
        cv.alpha_fraction = Some(f);
    }
    if is_edgeless(g) {
        cv.scores = vec![1.0; n];
        cv.degenerate = true;
        return Ok(cv);
    }
    let family = measure.family().expect("walk-counting measure");
    let rho = match family {
        Family::Exponential => 0.0,
        _ => linalg::spectral_radius(&g.a),
    };
    let amax = match family {
        Family::Exponential => 1.0,
        Family::Walk => 1.0 / rho,
        Family::Nbtw => nbtw_alpha_max(g, rho),
    };
    cv.alpha_max = Some(amax);
    if family != Family::Exponential {
        cv.spectral_radius = Some(rho);
    }
    let alpha = match measure {
        Measure::KatzMin => katz_min_formula(rho),
        _ => cv.alpha_fraction.unwrap() * amax,
    };
    cv.alpha = Some(alpha);
    cv.scores = match measure {
        Measure::Katz => katz_unchecked(g, alpha)?,
        Measure::KatzMin => katz_min_scores(g, rho)?,
        Measure::Subgraph => subgraph_unchecked(g, alpha)?,
        Measure::Exponential => exponential(g, alpha)?,
        Measure::ExpSubgraph => exp_subgraph(g, alpha)?,
        Measure::Nbtw => nbtw_unchecked(g, alpha)?,
        Measure::NbtwSubgraph => nbtw_subgraph_unchecked(g, alpha)?,
        Measure::NbtwExp => nbtw_exp(g, alpha)?,
        Measure::NbtwExpSubgraph => nbtw_exp_subgraph(g, alpha)?,
        Measure::Degree | Measure::Betweenness => unreachable!(),
    };
    if let Some(bad) = cv.scores.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Numeric(format!(
            "score for node {bad} is {}",
            cv.scores[bad]
        )));
    }
    Ok(cv)
}
