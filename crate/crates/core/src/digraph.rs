//! Directed communication graphs, their stochastic weight matrices, and
//! Perron eigenvectors.
//!
//! Nodes are stored 0-based. The edge-list text format and all user-facing
//! messages are 1-based. An edge `(i, j)` means node `j` receives from node
//! `i`; every node implicitly belongs to its own in- and out-neighborhood.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_open_unit, Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Digraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Digraph {
    /// Builds a graph from 0-based edges. Self-loops are implied and dropped.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("node count must be at least 1".into()));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) has an endpoint outside 1..={n}",
                    i + 1,
                    j + 1
                )));
            }
            if i == j {
                continue;
            }
            if !set.insert((i, j)) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    i + 1,
                    j + 1
                )));
            }
        }
        Ok(Self { n, edges: set })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        from == to || self.edges.contains(&(from, to))
    }

    /// `N_i^in`: nodes `i` receives from, including `i`.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_edge(j, i)).collect()
    }

    /// `N_i^out`: nodes that receive from `i`, including `i`.
    pub fn out_neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_edge(i, j)).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|&(i, j)| self.edges.contains(&(j, i)))
    }

    /// Directed ring `1 → 2 → … → n → 1`.
    pub fn ring(n: usize) -> Result<Self> {
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(
            n,
            (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))),
        )
    }

    /// Random strongly connected digraph: a shuffled Hamiltonian cycle plus
    /// each remaining ordered pair independently with probability `p`.
    pub fn random_strongly_connected(n: usize, p: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut edges = BTreeSet::new();
        for k in 0..n {
            let (a, b) = (order[k], order[(k + 1) % n]);
            if a != b {
                edges.insert((a, b));
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && !edges.contains(&(i, j)) && rng.random::<f64>() < p {
                    edges.insert((i, j));
                }
            }
        }
        Self::new(n, edges)
    }

    /// The 10-node unbalanced directed network used by the sensor-fusion
    /// experiments: a directed ring with six chords.
    pub fn default_fixture() -> Self {
        let mut edges: Vec<(usize, usize)> = (0..10).map(|i| (i, (i + 1) % 10)).collect();
        edges.extend([(0, 4), (2, 7), (5, 1), (8, 3), (9, 6), (3, 0)]);
        Self::new(10, edges).expect("fixture graph is valid")
    }

    /// Parses the edge-list format: a header `n <count>` followed by one
    /// 1-based `i j` pair per line. Blank lines and `#` comments are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut n: Option<usize> = None;
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: &str| Error::Parse {
                line: lineno + 1,
                msg: msg.to_string(),
            };
            let mut tok = line.split_whitespace();
            let first = tok.next().unwrap();
            if n.is_none() {
                if first != "n" {
                    return Err(parse_err("expected header `n <count>`"));
                }
                let count = tok
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| parse_err("bad node count"))?;
                n = Some(count);
                continue;
            }
            let i: usize = first.parse().map_err(|_| parse_err("bad source index"))?;
            let j: usize = tok
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("bad target index"))?;
            if tok.next().is_some() {
                return Err(parse_err("trailing tokens"));
            }
            if i == 0 || j == 0 {
                return Err(parse_err("node indices are 1-based"));
            }
            if i == j {
                continue;
            }
            edges.push((i - 1, j - 1));
        }
        let n = n.ok_or(Error::Parse {
            line: 0,
            msg: "missing header".into(),
        })?;
        Self::new(n, edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("n {}\n", self.n);
        for (i, j) in self.edges() {
            let _ = writeln!(s, "{} {}", i + 1, j + 1);
        }
        s
    }
}

/// True iff every node reaches every other node.
///
/// Kosaraju's two-pass SCC decomposition; passes iff there is exactly one
/// component.
pub fn strongly_connected(g: &Digraph) -> bool {
    scc_count(g) == 1
}

pub fn scc_count(g: &Digraph) -> usize {
    let n = g.n;
    let mut fwd = vec![Vec::new(); n];
    let mut rev = vec![Vec::new(); n];
    for (i, j) in g.edges() {
        fwd[i].push(j);
        rev[j].push(i);
    }

    // first pass: finishing order on the forward graph
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for root in 0..n {
        if visited[root] {
            continue;
        }
        visited[root] = true;
        let mut stack = vec![(root, 0usize)];
        while let Some(&mut (v, ref mut next)) = stack.last_mut() {
            if *next < fwd[v].len() {
                let w = fwd[v][*next];
                *next += 1;
                if !visited[w] {
                    visited[w] = true;
                    stack.push((w, 0));
                }
            } else {
                order.push(v);
                stack.pop();
            }
        }
    }

    // second pass: reverse graph in decreasing finishing time
    let mut comp = vec![usize::MAX; n];
    let mut count = 0;
    for &root in order.iter().rev() {
        if comp[root] != usize::MAX {
            continue;
        }
        comp[root] = count;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for &w in &rev[v] {
                if comp[w] == usize::MAX {
                    comp[w] = count;
                    stack.push(w);
                }
            }
        }
        count += 1;
    }
    count
}

/// Row-stochastic `A`, column-stochastic `B`, and their smoothed forms
/// `A_α = (1-α)I + αA`, `B_β = (1-β)I + βB`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPair {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub a_alpha: DMatrix<f64>,
    pub b_beta: DMatrix<f64>,
}

impl WeightPair {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Wraps user-supplied matrices after checking them against `g`.
    pub fn from_matrices(
        g: &Digraph,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        check_open_unit("alpha", alpha)?;
        check_open_unit("beta", beta)?;
        let n = g.n();
        if a.shape() != (n, n) || b.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "weight matrices must be {n}x{n}, got {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                // a_ij > 0 iff j ∈ N_i^in; b_ij > 0 iff i ∈ N_j^out
                let allowed = g.has_edge(j, i);
                for (name, v) in [("A", a[(i, j)]), ("B", b[(i, j)])] {
                    if v < 0.0 || (v > 0.0) != allowed {
                        return Err(Error::InvalidGraph(format!(
                            "{name}[{},{}] = {v} does not match the graph support",
                            i + 1,
                            j + 1
                        )));
                    }
                }
            }
        }
        for i in 0..n {
            let rs: f64 = a.row(i).sum();
            let cs: f64 = b.column(i).sum();
            if (rs - 1.0).abs() > ROW_SUM_TOL || (cs - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidGraph(format!(
                    "row {} of A sums to {rs}, column {} of B sums to {cs}",
                    i + 1,
                    i + 1
                )));
            }
        }
        let eye = DMatrix::<f64>::identity(n, n);
        let a_alpha = &eye * (1.0 - alpha) + &a * alpha;
        let b_beta = &eye * (1.0 - beta) + &b * beta;
        Ok(Self {
            a,
            b,
            alpha,
            beta,
            a_alpha,
            b_beta,
        })
    }

    /// Same matrices with new smoothing factors.
    pub fn with_smoothing(&self, alpha: f64, beta: f64) -> Result<Self> {
        check_open_unit("alpha", alpha)?;
        check_open_unit("beta", beta)?;
        let n = self.n();
        let eye = DMatrix::<f64>::identity(n, n);
        Ok(Self {
            a: self.a.clone(),
            b: self.b.clone(),
            alpha,
            beta,
            a_alpha: &eye * (1.0 - alpha) + &self.a * alpha,
            b_beta: &eye * (1.0 - beta) + &self.b * beta,
        })
    }
}

/// Uniform weights: `a_ij = 1/|N_i^in|`, `b_ij = 1/|N_j^out|`.
pub fn build_weights(g: &Digraph, alpha: f64, beta: f64) -> Result<WeightPair> {
    check_open_unit("alpha", alpha)?;
    check_open_unit("beta", beta)?;
    if !strongly_connected(g) {
        return Err(Error::NotStronglyConnected);
    }
    let n = g.n();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        let ins = g.in_neighbors(i);
        let w = 1.0 / ins.len() as f64;
        for j in ins {
            a[(i, j)] = w;
        }
    }
    for j in 0..n {
        let outs = g.out_neighbors(j);
        let w = 1.0 / outs.len() as f64;
        for i in outs {
            b[(i, j)] = w;
        }
    }
    WeightPair::from_matrices(g, a, b, alpha, beta)
}

/// A doubly stochastic mixing matrix for the single-matrix baselines, when
/// one follows from the graph: Metropolis–Hastings weights on symmetric
/// graphs, otherwise the uniform in-neighbor weights if they happen to be
/// column-stochastic as well (e.g. directed rings).
pub fn doubly_stochastic(g: &Digraph) -> Result<DMatrix<f64>> {
    let n = g.n();
    if g.is_symmetric() {
        let deg: Vec<usize> = (0..n).map(|i| g.in_neighbors(i).len() - 1).collect();
        let mut w = DMatrix::zeros(n, n);
        for (i, j) in g.edges() {
            w[(i, j)] = 1.0 / (1 + deg[i].max(deg[j])) as f64;
        }
        for i in 0..n {
            w[(i, i)] = 1.0 - w.row(i).sum();
        }
        return Ok(w);
    }
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let ins = g.in_neighbors(i);
        let wt = 1.0 / ins.len() as f64;
        for j in ins {
            a[(i, j)] = wt;
        }
    }
    let balanced = (0..n).all(|j| (a.column(j).sum() - 1.0).abs() <= ROW_SUM_TOL);
    if balanced {
        Ok(a)
    } else {
        Err(Error::InvalidGraph(
            "graph admits no doubly stochastic uniform weights".into(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerronVectors {
    /// Left eigenvector of `A` at eigenvalue 1, unit sum.
    pub pi_a: DVector<f64>,
    /// Right eigenvector of `B` at eigenvalue 1, unit sum.
    pub pi_b: DVector<f64>,
}

impl PerronVectors {
    /// `π_Aᵀ π_B`, the effective step-size scaling.
    pub fn inner(&self) -> f64 {
        self.pi_a.dot(&self.pi_b)
    }
}

const DIRECT_SOLVE_MAX_N: usize = 50;
const POWER_TOL: f64 = 1e-13;
const POWER_MAX_ITERS: usize = 1_000_000;
const RESIDUAL_TOL: f64 = 1e-10;

pub fn perron_vectors(w: &WeightPair) -> Result<PerronVectors> {
    // π_Aᵀ A = π_Aᵀ  ⇔  Aᵀ π_A = π_A
    let pi_a = stationary_right(&w.a.transpose())?;
    let pi_b = stationary_right(&w.b)?;
    Ok(PerronVectors { pi_a, pi_b })
}

/// Unit-sum nonnegative `v` with `M v = v` for a column-stochastic `M`.
fn stationary_right(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = m.nrows();
    if n <= DIRECT_SOLVE_MAX_N {
        if let Some(v) = direct_stationary(m) {
            return Ok(v);
        }
    }
    power_stationary(m)
}

fn direct_stationary(m: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = m.nrows();
    let mut sys = m - DMatrix::<f64>::identity(n, n);
    for j in 0..n {
        sys[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let mut v = sys.lu().solve(&rhs)?;
    if v.iter().any(|&x| x < -1e-12 || !x.is_finite()) {
        return None;
    }
    v.apply(|x| *x = x.max(0.0));
    let s = v.sum();
    v /= s;
    ((m * &v - &v).norm() <= RESIDUAL_TOL).then_some(v)
}

fn power_stationary(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = m.nrows();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..POWER_MAX_ITERS {
        let mut next = m * &v;
        let s = next.sum();
        next /= s;
        let delta = (&next - &v).norm();
        v = next;
        if delta < POWER_TOL {
            if (m * &v - &v).norm() <= RESIDUAL_TOL {
                return Ok(v);
            }
            break;
        }
    }
    Err(Error::NoConvergence {
        what: "Perron power iteration",
        iterations: POWER_MAX_ITERS,
    })
}
