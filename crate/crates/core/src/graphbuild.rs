//! Market graphs from correlation matrices.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;

use crate::math;
use crate::{Error, Result};

/// How a correlation matrix becomes an adjacency matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AdjacencyOption {
    /// Threshold construction `(1)`–`(8)`. Odd-numbered options threshold
    /// the signed matrix, even-numbered ones its absolute value; `(1)`,
    /// `(2)`, `(5)`, `(6)` keep loops; `(5)`–`(8)` keep the weights.
    Threshold(u8),
    /// `|C|`, loops included.
    Raw,
    /// `|C| - I`.
    RawNoLoops,
    /// Maximum spanning tree of the correlations.
    Mst,
}

impl AdjacencyOption {
    pub fn threshold(k: u8) -> Result<Self> {
        if (1..=8).contains(&k) {
            Ok(AdjacencyOption::Threshold(k))
        } else {
            Err(Error::InvalidParameter(format!(
                "adjacency option must be 1..=8, got {k}"
            )))
        }
    }

    pub fn weighted(self) -> bool {
        match self {
            AdjacencyOption::Threshold(k) => k >= 5,
            _ => true,
        }
    }

    pub fn has_loops(self) -> bool {
        match self {
            AdjacencyOption::Threshold(k) => matches!(k, 1 | 2 | 5 | 6),
            AdjacencyOption::Raw => true,
            _ => false,
        }
    }

    pub fn uses_theta(self) -> bool {
        matches!(self, AdjacencyOption::Threshold(_))
    }

    /// Short tag used in report tables.
    pub fn graph_tag(self) -> &'static str {
        match self {
            AdjacencyOption::Threshold(_) => "ANV",
            AdjacencyOption::Raw | AdjacencyOption::RawNoLoops => "RAW",
            AdjacencyOption::Mst => "MST",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" => Ok(AdjacencyOption::Raw),
            "raw-noloops" | "raw_noloops" => Ok(AdjacencyOption::RawNoLoops),
            "mst" => Ok(AdjacencyOption::Mst),
            other => other
                .parse::<u8>()
                .map_err(|_| Error::InvalidParameter(format!("unknown adjacency option '{s}'")))
                .and_then(Self::threshold),
        }
    }
}

impl fmt::Display for AdjacencyOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdjacencyOption::Threshold(k) => write!(f, "{k}"),
            AdjacencyOption::Raw => f.write_str("raw"),
            AdjacencyOption::RawNoLoops => f.write_str("raw-noloops"),
            AdjacencyOption::Mst => f.write_str("mst"),
        }
    }
}

/// A symmetric nonnegative adjacency matrix with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketGraph {
    pub a: DMatrix<f64>,
    pub weighted: bool,
    pub has_loops: bool,
    pub option: AdjacencyOption,
    pub theta: f64,
}

impl MarketGraph {
    /// Wraps an arbitrary symmetric nonnegative matrix.
    pub fn from_adjacency(a: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidParameter(
                "adjacency matrix must be square".into(),
            ));
        }
        for j in 0..n {
            for i in 0..n {
                let v = a[(i, j)];
                if !(v >= 0.0) || !v.is_finite() || v != a[(j, i)] {
                    return Err(Error::InvalidParameter(format!(
                        "adjacency must be symmetric, finite and nonnegative (entry {i},{j})"
                    )));
                }
            }
        }
        let weighted = a.iter().any(|&v| v != 0.0 && v != 1.0);
        let has_loops = (0..n).any(|i| a[(i, i)] != 0.0);
        let option = if has_loops {
            AdjacencyOption::Raw
        } else {
            AdjacencyOption::RawNoLoops
        };
        Ok(MarketGraph {
            a,
            weighted,
            has_loops,
            option,
            theta: 0.0,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// True when the graph is unweighted and has no loops.
    pub fn is_simple(&self) -> bool {
        !self.weighted && !self.has_loops
    }

    /// Upper-triangle edges `(i, j, weight)` with `i <= j`, row-major.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i..n {
                if self.a[(i, j)] != 0.0 {
                    out.push((i, j, self.a[(i, j)]));
                }
            }
        }
        out
    }

    /// Edge list as `i,j,weight` lines.
    pub fn edge_list_text(&self) -> String {
        let mut s = String::new();
        for (i, j, w) in self.edges() {
            s.push_str(&format!("{i},{j},{w}\n"));
        }
        s
    }
}

/// Builds the graph for any [`AdjacencyOption`]. `theta` is ignored by the
/// raw and tree constructions.
pub fn build(c: &DMatrix<f64>, option: AdjacencyOption, theta: f64) -> Result<MarketGraph> {
    match option {
        AdjacencyOption::Threshold(_) => build_adjacency(c, option, theta),
        AdjacencyOption::Raw => Ok(build_raw(c, true)),
        AdjacencyOption::RawNoLoops => Ok(build_raw(c, false)),
        AdjacencyOption::Mst => build_mst(c),
    }
}

/// Threshold constructions `(1)`–`(8)` with strict inequality.
pub fn build_adjacency(
    c: &DMatrix<f64>,
    option: AdjacencyOption,
    theta: f64,
) -> Result<MarketGraph> {
    let AdjacencyOption::Threshold(k) = option else {
        return Err(Error::InvalidParameter(format!(
            "option {option} is not a threshold construction"
        )));
    };
    AdjacencyOption::threshold(k)?;
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!(
            "threshold {theta} outside [0, 1)"
        )));
    }
    let absolute = k % 2 == 0;
    let subtract_identity = matches!(k, 3 | 4 | 7 | 8);
    let weighted = k >= 5;
    let a = DMatrix::from_fn(c.nrows(), c.ncols(), |i, j| {
        let mut v = c[(i, j)];
        if absolute {
            v = math::abs(v);
        }
        if subtract_identity && i == j {
            v -= 1.0;
        }
        if v > theta {
            if weighted {
                v
            } else {
                1.0
            }
        } else {
            0.0
        }
    });
    debug_assert!(a.iter().all(|&v| v >= 0.0));
    Ok(MarketGraph {
        a,
        weighted,
        has_loops: option.has_loops(),
        option,
        theta,
    })
}

/// `|C|`, or `|C|` with a zero diagonal (`|C| - I` for a unit diagonal)
/// when `loops` is false.
pub fn build_raw(c: &DMatrix<f64>, loops: bool) -> MarketGraph {
    let mut a = c.map(math::abs);
    if !loops {
        a.fill_diagonal(0.0);
    }
    let option = if loops {
        AdjacencyOption::Raw
    } else {
        AdjacencyOption::RawNoLoops
    };
    MarketGraph {
        a,
        weighted: true,
        has_loops: loops,
        option,
        theta: 0.0,
    }
}

/// Edges `(i, j)`, `i < j`, of the maximum spanning tree by Prim's
/// algorithm on edge length `1 - C_ij`.
///
/// Equal lengths are resolved by the lexicographic order of `(min, max)`
/// node pairs, so the tree is unique.
pub fn spanning_tree(c: &DMatrix<f64>) -> Result<Vec<(usize, usize)>> {
    let n = c.nrows();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "spanning tree needs at least 2 nodes, got {n}"
        )));
    }
    let key = |u: usize, v: usize| (1.0 - c[(u, v)], u.min(v), u.max(v));
    let better = |x: (f64, usize, usize), y: (f64, usize, usize)| {
        x.0 < y.0 || (x.0 == y.0 && (x.1, x.2) < (y.1, y.2))
    };
    let mut in_tree = vec![false; n];
    let mut best: Vec<(f64, usize, usize)> = (0..n).map(|v| key(0, v)).collect();
    let mut parent = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    in_tree[0] = true;
    for _ in 1..n {
        let mut pick: Option<usize> = None;
        for v in 0..n {
            if !in_tree[v] && pick.is_none_or(|p| better(best[v], best[p])) {
                pick = Some(v);
            }
        }
        let v = pick.expect("tree grows by one node per step");
        in_tree[v] = true;
        edges.push((parent[v].min(v), parent[v].max(v)));
        for x in 0..n {
            if !in_tree[x] {
                let cand = key(v, x);
                if better(cand, best[x]) {
                    best[x] = cand;
                    parent[x] = v;
                }
            }
        }
    }
    edges.sort_unstable();
    Ok(edges)
}

/// The maximum spanning tree as a weighted graph with edge weights
/// `|C_ij|`.
pub fn build_mst(c: &DMatrix<f64>) -> Result<MarketGraph> {
    let n = c.nrows();
    let mut a = DMatrix::zeros(n, n);
    for (i, j) in spanning_tree(c)? {
        let w = math::abs(c[(i, j)]);
        a[(i, j)] = w;
        a[(j, i)] = w;
    }
    Ok(MarketGraph {
        a,
        weighted: true,
        has_loops: false,
        option: AdjacencyOption::Mst,
        theta: 0.0,
    })
}
