mod oracle;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use walkfolio_core::corrmat::{apply_transform, Transform};
use walkfolio_core::graphbuild::{self, AdjacencyOption};

use oracle::*;

fn thetas() -> Vec<f64> {
    (0..10).map(|k| k as f64 / 10.0).collect()
}

fn edge_set(a: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = a.nrows();
    (0..n)
        .flat_map(|i| (i..n).map(move |j| (i, j)))
        .filter(|&(i, j)| a[(i, j)] != 0.0)
        .collect()
}

fn is_tree(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut root: Vec<usize> = (0..n).collect();
    fn find(r: &mut [usize], x: usize) -> usize {
        if r[x] != x {
            let top = find(r, r[x]);
            r[x] = top;
        }
        r[x]
    }
    for &(i, j) in edges {
        let (a, b) = (find(&mut root, i), find(&mut root, j));
        if a == b {
            return false;
        }
        root[a] = b;
    }
    edges.len() == n - 1
}

#[test]
fn spanning_tree_count_is_cayley() {
    for n in 2..=6 {
        assert_eq!(spanning_trees(n).len(), n.pow(n as u32 - 2));
    }
}

#[test]
fn mst_matches_exhaustive_search() {
    for seed in 0..60u64 {
        let mut r = rng(seed);
        let n = r.random_range(2..=7);
        let c = random_correlation(&mut r, n, 30);
        let tag = Transform::ALL[seed as usize % 4];
        let c = apply_transform(&c, tag);
        let got = graphbuild::spanning_tree(&c).unwrap();
        let (_, winners) = max_spanning_trees(&c);
        assert!(
            winners.contains(&got),
            "seed {seed}: {got:?} not among {winners:?}"
        );
        assert!(is_tree(n, &got));
        let g = graphbuild::build_mst(&c).unwrap();
        for i in 0..n {
            for j in 0..n {
                let on_tree = got.contains(&(i.min(j), i.max(j)));
                assert_eq!(g.a[(i, j)], if on_tree { c[(i, j)].abs() } else { 0.0 });
            }
        }
    }
}

#[test]
fn two_node_tree() {
    let c = DMatrix::from_row_slice(2, 2, &[1.0, -0.3, -0.3, 1.0]);
    let g = graphbuild::build_mst(&c).unwrap();
    assert_eq!(edge_set(&g.a), vec![(0, 1)]);
    assert_eq!(g.a[(0, 1)], 0.3);
    assert!(graphbuild::build_mst(&DMatrix::identity(1, 1)).is_err());
}

#[test]
fn raw_construction_of_identity() {
    let i = DMatrix::<f64>::identity(4, 4);
    assert_eq!(graphbuild::build_raw(&i, true).a, i);
    assert_eq!(graphbuild::build_raw(&i, false).a, DMatrix::zeros(4, 4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjacency_is_symmetric_and_nonnegative(seed in any::<u64>(), k in 1u8..=8, t in 0usize..10, tag in 0usize..4) {
        let mut r = rng(seed);
        let n = r.random_range(2..=9);
        let c = apply_transform(&random_correlation(&mut r, n, 20), Transform::ALL[tag]);
        let g = graphbuild::build(&c, AdjacencyOption::Threshold(k), thetas()[t]).unwrap();
        prop_assert_eq!(&g.a, &g.a.transpose());
        prop_assert!(g.a.iter().all(|&v| v >= 0.0));
        if k <= 4 {
            prop_assert!(g.a.iter().all(|&v| v == 0.0 || v == 1.0));
        }
        if !g.has_loops {
            prop_assert!((0..n).all(|i| g.a[(i, i)] == 0.0));
        }
    }

    #[test]
    fn unweighted_options_indicate_weighted(seed in any::<u64>(), k in 1u8..=4, t in 0usize..10) {
        let mut r = rng(seed);
        let n = r.random_range(2..=9);
        let c = random_correlation(&mut r, n, 20);
        let theta = thetas()[t];
        let u = graphbuild::build(&c, AdjacencyOption::Threshold(k), theta).unwrap();
        let w = graphbuild::build(&c, AdjacencyOption::Threshold(k + 4), theta).unwrap();
        prop_assert_eq!(u.a, w.a.map(|v| if v > 0.0 { 1.0 } else { 0.0 }));
    }

    #[test]
    fn raising_theta_never_adds_edges(seed in any::<u64>(), k in 1u8..=8) {
        let mut r = rng(seed);
        let n = r.random_range(2..=9);
        let c = random_correlation(&mut r, n, 20);
        let sets: Vec<Vec<(usize, usize)>> = thetas()
            .iter()
            .map(|&t| edge_set(&graphbuild::build(&c, AdjacencyOption::Threshold(k), t).unwrap().a))
            .collect();
        for w in sets.windows(2) {
            prop_assert!(w[1].iter().all(|e| w[0].contains(e)));
        }
    }

    #[test]
    fn options_two_and_six_share_sparsity(seed in any::<u64>(), t in 0usize..10) {
        let mut r = rng(seed);
        let n = r.random_range(2..=9);
        let c = random_correlation(&mut r, n, 20);
        let theta = thetas()[t];
        let a = graphbuild::build(&c, AdjacencyOption::Threshold(2), theta).unwrap();
        let b = graphbuild::build(&c, AdjacencyOption::Threshold(6), theta).unwrap();
        prop_assert_eq!(edge_set(&a.a), edge_set(&b.a));
    }

    #[test]
    fn mst_is_a_tree(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(2..=40);
        let c = random_correlation(&mut r, n, 60);
        prop_assert!(is_tree(n, &graphbuild::spanning_tree(&c).unwrap()));
    }

    #[test]
    fn theta_outside_range_is_rejected(k in 1u8..=8, theta in prop_oneof![-1.0..-1e-9, 1.0..2.0]) {
        let c = DMatrix::<f64>::identity(3, 3);
        prop_assert!(graphbuild::build(&c, AdjacencyOption::Threshold(k), theta).is_err());
    }
}
