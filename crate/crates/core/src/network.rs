//! Network topology, combination matrices and per-node noise levels.
//!
//! A [`Topology`] is an undirected connected graph in which every node is its
//! own neighbor. The [`CombinationMatrix`] `A` holds the diffusion weights:
//! entry `a[(l, k)]` is the weight node `k` applies to the intermediate
//! estimate received from neighbor `l`, so every column sums to one.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column sums of a valid combination matrix must match one within this bound.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Ring,
    RandomGeometric { radius: f64, seed: u64 },
    Explicit { edges: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    node_count: usize,
    adjacency: Vec<bool>,
}

impl Topology {
    /// Builds a topology from an undirected edge list. Self-loops are added
    /// implicitly and duplicate edges are ignored.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if node_count < 2 {
            return Err(Error::InvalidArgument(format!(
                "a network needs at least 2 nodes, got {node_count}"
            )));
        }
        let mut adjacency = vec![false; node_count * node_count];
        for k in 0..node_count {
            adjacency[k * node_count + k] = true;
        }
        for &(a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) references a node outside 0..{node_count}"
                )));
            }
            adjacency[a * node_count + b] = true;
            adjacency[b * node_count + a] = true;
        }
        let topo = Topology {
            node_count,
            adjacency,
        };
        let components = topo.components();
        if components.len() > 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(topo)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn is_neighbor(&self, l: usize, k: usize) -> bool {
        self.adjacency[l * self.node_count + k]
    }

    /// Closed neighborhood of `k`, including `k` itself, in ascending order.
    pub fn neighbors(&self, k: usize) -> Vec<usize> {
        (0..self.node_count)
            .filter(|&l| self.is_neighbor(l, k))
            .collect()
    }

    /// Size of the closed neighborhood `|N_k|`.
    pub fn degree(&self, k: usize) -> usize {
        (0..self.node_count)
            .filter(|&l| self.is_neighbor(l, k))
            .count()
    }

    /// Undirected edges `(a, b)` with `a < b`, self-loops omitted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.node_count {
            for b in (a + 1)..self.node_count {
                if self.is_neighbor(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Mean number of neighbors, self excluded.
    pub fn mean_degree(&self) -> f64 {
        2.0 * self.edges().len() as f64 / self.node_count as f64
    }

    /// Connected components found by breadth-first search.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.node_count;
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(v) = queue.pop_front() {
                comp.push(v);
                for (u, flag) in seen.iter_mut().enumerate() {
                    if !*flag && self.is_neighbor(v, u) {
                        *flag = true;
                        queue.push_back(u);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

pub fn build_topology(kind: &TopologyKind, node_count: usize) -> Result<Topology> {
    if node_count < 2 {
        return Err(Error::InvalidArgument(format!(
            "a network needs at least 2 nodes, got {node_count}"
        )));
    }
    match kind {
        TopologyKind::Ring => {
            let edges: Vec<_> = (0..node_count).map(|k| (k, (k + 1) % node_count)).collect();
            Topology::from_edges(node_count, &edges)
        }
        TopologyKind::RandomGeometric { radius, seed } => {
            if !(radius.is_finite() && *radius > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "connectivity radius must be positive, got {radius}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let points: Vec<(f64, f64)> = (0..node_count)
                .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
                .collect();
            let mut edges = Vec::new();
            for a in 0..node_count {
                for b in (a + 1)..node_count {
                    let (dx, dy) = (points[a].0 - points[b].0, points[a].1 - points[b].1);
                    if dx.hypot(dy) <= *radius {
                        edges.push((a, b));
                    }
                }
            }
            Topology::from_edges(node_count, &edges)
        }
        TopologyKind::Explicit { edges } => Topology::from_edges(node_count, edges),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinationRule {
    /// `a_lk = 1/|N_k|` over the closed neighborhood.
    Uniform,
    /// `a_lk = 1/max(|N_k|, |N_l|)` off the diagonal, residual mass on `a_kk`.
    Metropolis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinationMatrix {
    weights: DMatrix<f64>,
    neighbors: Vec<Vec<usize>>,
}

impl CombinationMatrix {
    /// Validates an explicit matrix against a topology.
    pub fn from_matrix(weights: DMatrix<f64>, topo: &Topology) -> Result<Self> {
        let k = topo.node_count();
        if weights.nrows() != k || weights.ncols() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: weights.nrows().max(weights.ncols()),
            });
        }
        for col in 0..k {
            for row in 0..k {
                if weights[(row, col)] != 0.0 && !topo.is_neighbor(row, col) {
                    return Err(Error::InvalidCombination(format!(
                        "a[{row},{col}] = {} but nodes {row} and {col} are not linked",
                        weights[(row, col)]
                    )));
                }
            }
        }
        let report = validate_left_stochastic(&weights);
        if !report.is_valid(STOCHASTIC_TOLERANCE) {
            return Err(Error::InvalidCombination(report.to_string()));
        }
        Ok(Self::from_validated(weights))
    }

    fn from_validated(weights: DMatrix<f64>) -> Self {
        let k = weights.ncols();
        let neighbors = (0..k)
            .map(|col| (0..k).filter(|&row| weights[(row, col)] != 0.0).collect())
            .collect();
        CombinationMatrix { weights, neighbors }
    }

    pub fn identity(node_count: usize) -> Self {
        Self::from_validated(DMatrix::identity(node_count, node_count))
    }

    pub fn node_count(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weight(&self, l: usize, k: usize) -> f64 {
        self.weights[(l, k)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Nodes `l` with `a_lk != 0`, i.e. the ones whose estimates node `k` mixes.
    pub fn contributors(&self, k: usize) -> &[usize] {
        &self.neighbors[k]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.weights
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

pub fn build_combination_matrix(topo: &Topology, rule: CombinationRule) -> CombinationMatrix {
    let n = topo.node_count();
    let mut a = DMatrix::zeros(n, n);
    match rule {
        CombinationRule::Uniform => {
            for k in 0..n {
                let nbrs = topo.neighbors(k);
                let w = 1.0 / nbrs.len() as f64;
                for l in nbrs {
                    a[(l, k)] = w;
                }
            }
        }
        CombinationRule::Metropolis => {
            let degrees: Vec<usize> = (0..n).map(|k| topo.degree(k)).collect();
            for k in 0..n {
                let mut off = 0.0;
                for l in topo.neighbors(k) {
                    if l != k {
                        let w = 1.0 / degrees[k].max(degrees[l]) as f64;
                        a[(l, k)] = w;
                        off += w;
                    }
                }
                a[(k, k)] = 1.0 - off;
            }
        }
    }
    CombinationMatrix::from_validated(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticityReport {
    pub max_column_deviation: f64,
    pub worst_column: Option<usize>,
    pub negative_entries: Vec<(usize, usize, f64)>,
}

impl StochasticityReport {
    pub fn is_valid(&self, tolerance: f64) -> bool {
        self.negative_entries.is_empty() && self.max_column_deviation <= tolerance
    }
}

impl std::fmt::Display for StochasticityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "max column-sum deviation {:e}",
            self.max_column_deviation
        )?;
        if let Some(c) = self.worst_column {
            write!(f, " (column {c})")?;
        }
        if !self.negative_entries.is_empty() {
            write!(f, "; negative entries at {:?}", self.negative_entries)?;
        }
        Ok(())
    }
}

/// Reports how far a square matrix is from being left-stochastic.
pub fn validate_left_stochastic(a: &DMatrix<f64>) -> StochasticityReport {
    let mut report = StochasticityReport {
        max_column_deviation: 0.0,
        worst_column: None,
        negative_entries: Vec::new(),
    };
    for (col, column) in a.column_iter().enumerate() {
        let dev = (column.sum() - 1.0).abs();
        if dev > report.max_column_deviation || (dev.is_nan() && report.worst_column.is_none()) {
            report.max_column_deviation = dev;
            report.worst_column = Some(col);
        }
        for (row, &v) in column.iter().enumerate() {
            if v < 0.0 {
                report.negative_entries.push((row, col, v));
            }
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProfile {
    variances: Vec<f64>,
}

impl NoiseProfile {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if let Some((k, v)) = variances
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::InvalidArgument(format!(
                "noise variance at node {k} must be positive, got {v}"
            )));
        }
        Ok(NoiseProfile { variances })
    }

    /// Draws each variance uniformly from `[low, high]`.
    pub fn uniform_random(node_count: usize, low: f64, high: f64, seed: u64) -> Result<Self> {
        if !(low > 0.0 && high >= low) {
            return Err(Error::InvalidArgument(format!(
                "noise range must satisfy 0 < low <= high, got [{low}, {high}]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let variances = (0..node_count)
            .map(|_| low + (high - low) * rng.random::<f64>())
            .collect();
        Self::new(variances)
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn variance(&self, k: usize) -> f64 {
        self.variances[k]
    }

    pub fn len(&self) -> usize {
        self.variances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variances.is_empty()
    }
}
