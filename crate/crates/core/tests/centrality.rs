mod oracle;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use walkfolio_core::centrality::{self, Family, Measure};
use walkfolio_core::graphbuild::MarketGraph;

use oracle::*;

fn graph(a: DMatrix<f64>) -> MarketGraph {
    MarketGraph::from_adjacency(a).unwrap()
}

fn random_graph(seed: u64) -> MarketGraph {
    let mut r = rng(seed);
    let n = r.random_range(2..=6);
    let p = r.random_range(0.3..0.9);
    let weighted = r.random::<bool>();
    let loops = r.random::<bool>();
    graph(random_adjacency(&mut r, n, p, weighted, loops))
}

/// Spectral radius of the nonbacktracking operator on directed edges,
/// where `p -> c` may be followed by `c -> d` whenever `d != p`.
fn hashimoto_radius(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let arcs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| a[(i, j)] != 0.0)
        .collect();
    if arcs.is_empty() {
        return 0.0;
    }
    let b = DMatrix::from_fn(arcs.len(), arcs.len(), |x, y| {
        let (p, c) = arcs[x];
        let (c2, d) = arcs[y];
        if c == c2 && d != p {
            a[(c, d)]
        } else {
            0.0
        }
    });
    gelfand_radius(b)
}

/// `lim ‖Bᴺ‖^{1/N}` along `N = 2^j`, renormalizing after each squaring.
fn gelfand_radius(mut m: DMatrix<f64>) -> f64 {
    let mut log_norm = 0.0;
    let mut scale = 1.0;
    for _ in 0..60 {
        let s = m.abs().max();
        if s == 0.0 {
            return 0.0;
        }
        m /= s;
        log_norm += s.ln() * scale;
        m = &m * &m;
        scale *= 0.5;
    }
    log_norm.exp()
}

#[test]
fn dynamic_program_matches_depth_first_enumeration() {
    for seed in 0..60 {
        let g = random_graph(seed);
        let (r1, d1) = nbtw_enumerate(&g.a, 8);
        let (r2, d2) = nbtw_counts(&g.a, 8);
        for k in 0..=8 {
            assert!(close(&r1[k], &r2[k], 1e-12), "seed {seed} length {k}");
            assert!(close(&d1[k], &d2[k], 1e-12), "seed {seed} length {k}");
        }
    }
}

#[test]
fn nbtw_family_matches_enumeration() {
    for seed in 0..200 {
        let g = random_graph(seed);
        if g.a.iter().all(|&v| v == 0.0) {
            continue;
        }
        let (rows, diags) = nbtw_counts(&g.a, 60);
        let amax = centrality::alpha_max(&g, Family::Nbtw);
        let alpha = 0.3 * amax.min(1.0);
        let pow = |k: usize| alpha.powi(k as i32);
        let fact = |k: usize| alpha.powi(k as i32) / factorial(k);
        let (short_rows, _) = nbtw_counts(&g.a, 12);
        assert!(max_diff(&series(&short_rows, fact), &series(&rows, fact)) < 1e-8);
        let v = centrality::nbtw(&g, alpha).unwrap();
        assert!(max_diff(&v, &series(&rows, pow)) < 1e-8, "nbtw seed {seed}");
        let v = centrality::nbtw_subgraph(&g, alpha).unwrap();
        assert!(
            max_diff(&v, &series(&diags, pow)) < 1e-8,
            "nbtw subgraph seed {seed}"
        );
        let v = centrality::nbtw_exp(&g, alpha).unwrap();
        assert!(
            max_diff(&v, &series(&rows, fact)) < 1e-8,
            "nbtw exp seed {seed}"
        );
        let v = centrality::nbtw_exp_subgraph(&g, alpha).unwrap();
        assert!(
            max_diff(&v, &series(&diags, fact)) < 1e-8,
            "nbtw exp subgraph seed {seed}"
        );
        let v = centrality::nbtw_exp(&g, 1.0).unwrap();
        assert!(
            max_diff(&v, &series(&rows, |k| 1.0 / factorial(k))) < 1e-8,
            "nbtw exp at 1, seed {seed}"
        );
    }
}

#[test]
fn walk_family_matches_series() {
    for seed in 200..300 {
        let g = random_graph(seed);
        if g.a.iter().all(|&v| v == 0.0) {
            continue;
        }
        let (rows, diags) = walk_counts(&g.a, 60);
        let alpha = 0.3 * centrality::alpha_max(&g, Family::Walk);
        let pow = |k: usize| alpha.powi(k as i32);
        assert!(max_diff(&centrality::katz(&g, alpha).unwrap(), &series(&rows, pow)) < 1e-8);
        assert!(
            max_diff(
                &centrality::subgraph(&g, alpha).unwrap(),
                &series(&diags, pow)
            ) < 1e-8
        );
        let fact = |k: usize| 0.7f64.powi(k as i32) / factorial(k);
        assert!(
            max_diff(
                &centrality::exponential(&g, 0.7).unwrap(),
                &series(&rows, fact)
            ) < 1e-8
        );
        assert!(
            max_diff(
                &centrality::exp_subgraph(&g, 0.7).unwrap(),
                &series(&diags, fact)
            ) < 1e-8
        );
    }
}

#[test]
fn triangle_closed_walks() {
    let mut a = DMatrix::from_element(3, 3, 1.0);
    a.fill_diagonal(0.0);
    let g = graph(a);
    for alpha in [1e-3, 1e-2, 0.05] {
        let v = centrality::nbtw_subgraph(&g, alpha).unwrap();
        for s in v {
            assert!((s - (1.0 + 2.0 * alpha.powi(3))).abs() < 1e-8 + 10.0 * alpha.powi(4));
        }
    }
}

#[test]
fn nbtw_alpha_max_is_series_radius() {
    for seed in 300..380 {
        let g = random_graph(seed);
        if g.a.iter().all(|&v| v == 0.0) {
            continue;
        }
        let cap = 1.0 / g.a.max();
        let radius = 1.0 / hashimoto_radius(&g.a);
        let expected = radius.min(cap);
        let got = centrality::alpha_max(&g, Family::Nbtw);
        assert!(
            (got - expected).abs() <= 1e-6 * expected,
            "seed {seed}: {got} vs {expected}"
        );
    }
}

#[test]
fn nbtw_alpha_max_triangle_matches_series_divergence() {
    let mut a = DMatrix::from_element(3, 3, 1.0);
    a.fill_diagonal(0.0);
    let g = graph(a.clone());
    assert_eq!(centrality::alpha_max(&g, Family::Nbtw), 1.0);
    // Every node starts exactly 2 NBTWs of each positive length on K3.
    let (rows, _) = nbtw_counts(&a, 30);
    assert!(rows[1..].iter().all(|r| r.iter().all(|&v| v == 2.0)));
}

#[test]
fn betweenness_on_trees_matches_pair_enumeration() {
    for seed in 0..50u64 {
        let mut r = rng(seed);
        let n = r.random_range(2..=9);
        let mut a = DMatrix::zeros(n, n);
        let mut parent = vec![usize::MAX; n];
        for v in 1..n {
            let p = r.random_range(0..v);
            let w = if seed % 2 == 0 {
                1.0
            } else {
                1.0 - r.random::<f64>()
            };
            a[(v, p)] = w;
            a[(p, v)] = w;
            parent[v] = p;
        }
        let depth = |mut v: usize| {
            let mut d = 0;
            while parent[v] != usize::MAX {
                v = parent[v];
                d += 1;
            }
            d
        };
        let mut oracle = vec![0.0; n];
        for s in 0..n {
            for t in s + 1..n {
                let (mut x, mut y) = (s, t);
                let mut inner = Vec::new();
                while x != y {
                    if depth(x) >= depth(y) {
                        x = parent[x];
                        inner.push(x);
                    } else {
                        y = parent[y];
                        inner.push(y);
                    }
                }
                inner.sort();
                inner.dedup();
                for v in inner {
                    if v != s && v != t {
                        oracle[v] += 1.0;
                    }
                }
            }
        }
        assert_eq!(centrality::betweenness(&graph(a)), oracle, "seed {seed}");
    }
}

fn distinct_degree_graph(seed: u64) -> MarketGraph {
    let mut r = rng(seed);
    loop {
        let n = r.random_range(3..=8);
        let loops = r.random();
        let a = random_adjacency(&mut r, n, 0.7, true, loops);
        let mut d: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
        d.sort_by(f64::total_cmp);
        if d[0] > 0.0 && d.windows(2).all(|w| w[1] - w[0] > 1e-3) {
            return graph(a);
        }
    }
}

fn argsort(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[j].total_cmp(&v[i]).then(i.cmp(&j)));
    idx
}

#[test]
fn small_alpha_rankings_follow_degree() {
    for seed in 0..100 {
        let g = distinct_degree_graph(seed);
        let deg = argsort(&centrality::degree(&g));
        let katz = centrality::evaluate(&g, Measure::Katz, Some(1e-6)).unwrap();
        let nbtw = centrality::evaluate(&g, Measure::Nbtw, Some(1e-6)).unwrap();
        assert_eq!(argsort(&katz.scores), deg, "katz seed {seed}");
        assert_eq!(argsort(&nbtw.scores), deg, "nbtw seed {seed}");
    }
}

#[test]
fn katz_min_uses_spectral_radius() {
    for seed in 0..20 {
        let g = distinct_degree_graph(seed);
        let cv = centrality::evaluate(&g, Measure::KatzMin, None).unwrap();
        let rho =
            g.a.clone()
                .symmetric_eigenvalues()
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
        let expected = (1.0 - (-rho).exp()) / rho;
        assert!((cv.alpha.unwrap() - expected).abs() < 1e-12);
        assert!(cv.alpha.unwrap() < cv.alpha_max.unwrap());
    }
}

fn permuted(a: &DMatrix<f64>, p: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(p[i], p[j])])
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scores_are_permutation_equivariant(seed in any::<u64>(), frac in 1u8..10) {
        let g = random_graph(seed);
        let mut r = rng(seed ^ 0x5eed);
        let mut p: Vec<usize> = (0..g.n()).collect();
        p.shuffle(&mut r);
        let h = graph(permuted(&g.a, &p));
        for m in Measure::ALL {
            let f = m.takes_alpha_fraction().then_some(frac as f64 / 10.0);
            let a = centrality::evaluate(&g, m, f).unwrap();
            let b = centrality::evaluate(&h, m, f).unwrap();
            let expect: Vec<f64> = p.iter().map(|&i| a.scores[i]).collect();
            prop_assert!(close(&b.scores, &expect, 1e-12), "{m:?}: {:?} vs {:?}", b.scores, expect);
        }
    }

    #[test]
    fn scores_are_finite_and_nonnegative(seed in any::<u64>(), frac in 1u8..10) {
        let g = random_graph(seed);
        for m in Measure::ALL {
            let f = m.takes_alpha_fraction().then_some(frac as f64 / 10.0);
            let cv = centrality::evaluate(&g, m, f).unwrap();
            prop_assert_eq!(cv.scores.len(), g.n());
            prop_assert!(cv.scores.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn resolvent_identity(seed in any::<u64>(), frac in 1u8..10) {
        let g = random_graph(seed);
        prop_assume!(g.a.iter().any(|&v| v != 0.0));
        let n = g.n();
        let alpha = frac as f64 / 10.0 * centrality::alpha_max(&g, Family::Walk);
        let m = DMatrix::identity(n, n) - &g.a * alpha;
        let inv = m.clone().try_inverse().unwrap();
        let res = (&m * &inv - DMatrix::identity(n, n)).abs().max();
        prop_assert!(res < 1e-10);
        let sub = centrality::subgraph(&g, alpha).unwrap();
        let katz = centrality::katz(&g, alpha).unwrap();
        for i in 0..n {
            prop_assert!((sub[i] - inv[(i, i)]).abs() <= 1e-10 * inv[(i, i)].abs().max(1.0));
            prop_assert!((katz[i] - inv.row(i).sum()).abs() <= 1e-10 * katz[i].abs().max(1.0));
        }
    }

    #[test]
    fn nbtw_routes_agree(seed in any::<u64>(), frac in 1u8..10) {
        let mut r = rng(seed);
        let n = r.random_range(3..=12);
        let g = graph(random_adjacency(&mut r, n, 0.5, false, false));
        prop_assume!(g.a.iter().any(|&v| v != 0.0));
        let alpha = frac as f64 / 10.0 * centrality::alpha_max(&g, Family::Nbtw);
        let closed = centrality::nbtw(&g, alpha).unwrap();
        let psi = centrality::nbtw_psi_route(&g, alpha).unwrap();
        prop_assert!(close(&closed, &psi, 1e-10));
    }

    #[test]
    fn subgraph_scores_at_least_one(seed in any::<u64>(), frac in 1u8..10) {
        let g = random_graph(seed);
        let f = Some(frac as f64 / 10.0);
        for m in [Measure::Subgraph, Measure::ExpSubgraph] {
            let cv = centrality::evaluate(&g, m, f).unwrap();
            prop_assert!(cv.scores.iter().all(|&v| v >= 1.0 - 1e-12));
        }
    }
}
