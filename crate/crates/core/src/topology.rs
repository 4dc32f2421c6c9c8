//! Static radar communication graph, κ-hop neighborhoods and the
//! network-coverage function `g(κ, R)`.
//!
//! Agents are indexed `0..n`. Every neighborhood is kept in ascending order so
//! anything serialized from it is byte-stable.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("network must contain at least one radar")]
    Empty,
    #[error("communication radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("kappa must be at least 1")]
    BadKappa,
    #[error("radars {0} and {1} share the same position")]
    DuplicatePosition(usize, usize),
    #[error("agent id {id} out of range for {n} agents")]
    UnknownAgent { id: usize, n: usize },
    #[error("invalid coverage function: {0}")]
    BadCoverage(String),
    #[error("coverage table has no entry for kappa = {0}")]
    KappaOutsideTable(usize),
}

/// A planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from(p: [f64; 2]) -> Self {
        Self::new(p[0], p[1])
    }
}

/// Immutable undirected communication graph with precomputed κ-hop
/// neighborhoods `N_κ(i)` and their complements `N_κ^{-1}(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    n: usize,
    kappa: usize,
    adjacency: Vec<Vec<usize>>,
    neighborhoods: Vec<Vec<usize>>,
    complements: Vec<Vec<usize>>,
}

impl CommGraph {
    /// Connects every pair of distinct radars at Euclidean distance `<= radius`
    /// and precomputes neighborhoods for the given `kappa`.
    pub fn build(positions: &[Point], radius: f64, kappa: usize) -> Result<Self, TopologyError> {
        if positions.is_empty() {
            return Err(TopologyError::Empty);
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(TopologyError::BadRadius(radius));
        }
        if kappa == 0 {
            return Err(TopologyError::BadKappa);
        }
        let n = positions.len();
        let mut adjacency = vec![Vec::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = positions[i].distance(&positions[j]);
                if d == 0.0 {
                    return Err(TopologyError::DuplicatePosition(i, j));
                }
                if d <= radius {
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        let mut graph = Self {
            n,
            kappa,
            adjacency,
            neighborhoods: Vec::new(),
            complements: Vec::new(),
        };
        graph.neighborhoods = (0..n).map(|i| graph.bfs(i, kappa)).collect();
        graph.complements = graph
            .neighborhoods
            .iter()
            .map(|hood| (0..n).filter(|j| hood.binary_search(j).is_err()).collect())
            .collect();
        Ok(graph)
    }

    /// Same adjacency, neighborhoods recomputed for another κ.
    pub fn with_kappa(&self, kappa: usize) -> Result<Self, TopologyError> {
        if kappa == 0 {
            return Err(TopologyError::BadKappa);
        }
        let neighborhoods: Vec<Vec<usize>> = (0..self.n).map(|i| self.bfs(i, kappa)).collect();
        let complements = neighborhoods
            .iter()
            .map(|hood| (0..self.n).filter(|j| hood.binary_search(j).is_err()).collect())
            .collect();
        Ok(Self {
            n: self.n,
            kappa,
            adjacency: self.adjacency.clone(),
            neighborhoods,
            complements,
        })
    }

    fn bfs(&self, source: usize, kappa: usize) -> Vec<usize> {
        let mut hops = vec![usize::MAX; self.n];
        hops[source] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            if hops[u] == kappa {
                continue;
            }
            for &v in &self.adjacency[u] {
                if hops[v] == usize::MAX {
                    hops[v] = hops[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        (0..self.n).filter(|&j| hops[j] != usize::MAX).collect()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    /// Unordered edge list `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, adj) in self.adjacency.iter().enumerate() {
            out.extend(adj.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    pub fn adjacent(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// `N_κ(i)` for the graph's own κ, ascending, always containing `i`.
    pub fn neighborhood(&self, i: usize) -> &[usize] {
        &self.neighborhoods[i]
    }

    /// `N_κ^{-1}(i)`, ascending.
    pub fn complement(&self, i: usize) -> &[usize] {
        &self.complements[i]
    }

    /// `max_j |N_κ^{-1}(j)|`.
    pub fn max_complement_size(&self) -> usize {
        self.complements.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighborhoods[i].binary_search(&j).is_ok()
    }

    /// Plain-text adjacency listing, one line per agent: `i: j1 j2 ...`.
    pub fn adjacency_listing(&self) -> String {
        listing(&self.adjacency)
    }

    /// Same format as [`adjacency_listing`](Self::adjacency_listing) but for `N_κ(i)`.
    pub fn neighborhood_listing(&self) -> String {
        listing(&self.neighborhoods)
    }
}

fn listing(rows: &[Vec<usize>]) -> String {
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let _ = write!(out, "{i}:");
        for j in row {
            let _ = write!(out, " {j}");
        }
        out.push('\n');
    }
    out
}

/// Breadth-first κ-hop neighborhood of `i`, for any κ (not only the graph's).
pub fn kappa_neighborhood(graph: &CommGraph, i: usize, kappa: usize) -> Result<BTreeSet<usize>, TopologyError> {
    if i >= graph.n {
        return Err(TopologyError::UnknownAgent { id: i, n: graph.n });
    }
    if kappa == 0 {
        return Err(TopologyError::BadKappa);
    }
    Ok(graph.bfs(i, kappa).into_iter().collect())
}

/// Certified lower bound `g(κ, R)` on the distance from any radar to every
/// radar outside its κ-hop neighborhood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum CoverageFunction {
    /// `g(κ, R) = κ R`.
    Linear { radius: f64 },
    /// Explicit `g(1, R), g(2, R), ...` for a fixed `R`.
    Table { radius: f64, values: Vec<f64> },
}

impl CoverageFunction {
    pub fn linear(radius: f64) -> Self {
        Self::Linear { radius }
    }

    pub fn radius(&self) -> f64 {
        match self {
            Self::Linear { radius } | Self::Table { radius, .. } => *radius,
        }
    }

    /// Checks `g >= 1` and strict monotonicity in κ.
    pub fn validate(&self) -> Result<(), TopologyError> {
        match self {
            Self::Linear { radius } => {
                if !(radius.is_finite() && *radius >= 1.0) {
                    return Err(TopologyError::BadCoverage(format!(
                        "linear form needs R >= 1 so that g(k, R) = kR >= 1, got R = {radius}"
                    )));
                }
            }
            Self::Table { values, .. } => {
                if values.is_empty() {
                    return Err(TopologyError::BadCoverage("empty table".into()));
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 1.0)) {
                    return Err(TopologyError::BadCoverage("every entry must be finite and >= 1".into()));
                }
                if values.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(TopologyError::BadCoverage("entries must be strictly increasing in kappa".into()));
                }
            }
        }
        Ok(())
    }

    /// `g(κ, R)`.
    pub fn lower_bound(&self, kappa: usize) -> Result<f64, TopologyError> {
        if kappa == 0 {
            return Err(TopologyError::BadKappa);
        }
        match self {
            Self::Linear { radius } => Ok(kappa as f64 * radius),
            Self::Table { values, .. } => values
                .get(kappa - 1)
                .copied()
                .ok_or(TopologyError::KappaOutsideTable(kappa)),
        }
    }
}

/// A pair `(i, j)` with `j ∈ N_κ^{-1}(i)` closer than `g(κ, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageViolation {
    pub i: usize,
    pub j: usize,
    pub distance: f64,
    pub required: f64,
}

/// Lists every complement pair that breaks the coverage condition, each
/// unordered pair once (`i < j`; the κ-hop relation is symmetric). An empty
/// list means the condition holds on this instance.
pub fn validate_coverage(
    graph: &CommGraph,
    positions: &[Point],
    coverage: &CoverageFunction,
) -> Result<Vec<CoverageViolation>, TopologyError> {
    let required = coverage.lower_bound(graph.kappa())?;
    let mut violations = Vec::new();
    for i in 0..graph.n() {
        for &j in graph.complement(i).iter().filter(|&&j| j > i) {
            let distance = positions[i].distance(&positions[j]);
            if distance < required {
                violations.push(CoverageViolation { i, j, distance, required });
            }
        }
    }
    Ok(violations)
}
