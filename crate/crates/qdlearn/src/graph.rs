//! Communication topologies, per-step link-failure sampling, and the
//! spectral checks behind the mean-connectivity requirement.

use nalgebra::DMatrix;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};

/// A simple undirected graph over `num_agents` nodes: no self-loops, no
/// duplicate edges. Edges are stored as `(low, high)` pairs in sorted order
/// so iteration is deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    num_agents: usize,
    edges: Vec<(usize, usize)>,
}

impl Topology {
    /// Circulant ring: agent `n` talks to `n ± 1, ..., n ± radius` modulo
    /// `num_agents`, giving degree `2 * radius` everywhere.
    pub fn ring(num_agents: usize, radius: usize) -> Result<Self> {
        if num_agents < 2 {
            return Err(Error::Config(format!(
                "ring needs at least 2 agents, got {num_agents}"
            )));
        }
        if radius == 0 || 2 * radius >= num_agents {
            return Err(Error::Config(format!(
                "ring radius {radius} invalid for {num_agents} agents (need 1 <= radius < N/2)"
            )));
        }
        let mut edges = Vec::with_capacity(num_agents * radius);
        for n in 0..num_agents {
            for offset in 1..=radius {
                let m = (n + offset) % num_agents;
                edges.push((n.min(m), n.max(m)));
            }
        }
        Self::from_edges(num_agents, edges)
    }

    /// Builds from an explicit edge list, rejecting self-loops and
    /// out-of-range endpoints; duplicates collapse to one edge.
    pub fn from_edges(
        num_agents: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        if num_agents == 0 {
            return Err(Error::Config("topology needs at least one agent".into()));
        }
        let mut normalized = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Config(format!("self-loop on agent {a}")));
            }
            if a >= num_agents || b >= num_agents {
                return Err(Error::Config(format!(
                    "edge ({a},{b}) out of range for {num_agents} agents"
                )));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        normalized.dedup();
        Ok(Topology {
            num_agents,
            edges: normalized,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree(&self, agent: usize) -> usize {
        self.edges
            .iter()
            .filter(|(a, b)| *a == agent || *b == agent)
            .count()
    }

    /// Laplacian of the full topology (no failures).
    pub fn full_laplacian(&self) -> DMatrix<f64> {
        laplacian_of(self.num_agents, self.edges.iter().copied())
    }
}

fn laplacian_of(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for (a, b) in edges {
        m[(a, a)] += 1.0;
        m[(b, b)] += 1.0;
        m[(a, b)] -= 1.0;
        m[(b, a)] -= 1.0;
    }
    m
}

/// Per-step random thinning of the base topology. Implementations may
/// correlate failures across edges within a step; draws across steps are
/// independent by contract.
pub trait LinkFailureModel {
    /// One survival mask over `topology.edges()`, drawn from the graph stream.
    fn sample_active(&self, topology: &Topology, rng: &mut dyn RngCore) -> Vec<bool>;

    /// Marginal survival probability of each edge; fixes the mean Laplacian
    /// by linearity regardless of spatial correlation.
    fn edge_survival(&self, topology: &Topology) -> Vec<f64>;
}

/// The shipped failure model: each link erased independently per step with
/// probability `erasure_probability`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IidErasure {
    erasure_probability: f64,
}

impl IidErasure {
    pub fn new(erasure_probability: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&erasure_probability) {
            return Err(Error::Config(format!(
                "erasure probability {erasure_probability} outside [0,1]"
            )));
        }
        Ok(IidErasure {
            erasure_probability,
        })
    }

    pub fn erasure_probability(&self) -> f64 {
        self.erasure_probability
    }
}

impl LinkFailureModel for IidErasure {
    fn sample_active(&self, topology: &Topology, rng: &mut dyn RngCore) -> Vec<bool> {
        topology
            .edges()
            .iter()
            .map(|_| rng.gen::<f64>() >= self.erasure_probability)
            .collect()
    }

    fn edge_survival(&self, topology: &Topology) -> Vec<f64> {
        vec![1.0 - self.erasure_probability; topology.edges().len()]
    }
}

/// One step's realized communication graph.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianSample {
    pub matrix: DMatrix<f64>,
    pub active_edges: Vec<(usize, usize)>,
}

impl LaplacianSample {
    /// Neighbor lists of the realized graph, indexed by agent.
    pub fn neighbor_lists(&self, num_agents: usize) -> Vec<Vec<usize>> {
        let mut lists = vec![Vec::new(); num_agents];
        for &(a, b) in &self.active_edges {
            lists[a].push(b);
            lists[b].push(a);
        }
        lists
    }
}

/// Draws one step's surviving edge set and its Laplacian.
pub fn sample_laplacian(
    topology: &Topology,
    failure: &dyn LinkFailureModel,
    rng: &mut dyn RngCore,
) -> LaplacianSample {
    let mask = failure.sample_active(topology, rng);
    let active_edges: Vec<(usize, usize)> = topology
        .edges()
        .iter()
        .zip(&mask)
        .filter(|(_, keep)| **keep)
        .map(|(e, _)| *e)
        .collect();
    let matrix = laplacian_of(topology.num_agents(), active_edges.iter().copied());
    LaplacianSample {
        matrix,
        active_edges,
    }
}

/// Exact expected Laplacian under the failure model's edge marginals.
pub fn mean_laplacian(topology: &Topology, failure: &dyn LinkFailureModel) -> DMatrix<f64> {
    let survival = failure.edge_survival(topology);
    let n = topology.num_agents();
    let mut m = DMatrix::zeros(n, n);
    for (&(a, b), q) in topology.edges().iter().zip(&survival) {
        m[(a, a)] += q;
        m[(b, b)] += q;
        m[(a, b)] -= q;
        m[(b, a)] -= q;
    }
    m
}

/// Sorted eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(matrix: &DMatrix<f64>) -> Vec<f64> {
    let mut eigs: Vec<f64> = matrix
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eigs.sort_by(|a, b| a.total_cmp(b));
    eigs
}

/// Second-smallest eigenvalue of a graph Laplacian (at least 2x2). Positive
/// exactly when the underlying weighted graph is connected.
pub fn algebraic_connectivity(matrix: &DMatrix<f64>) -> f64 {
    assert!(
        matrix.nrows() >= 2 && matrix.nrows() == matrix.ncols(),
        "algebraic connectivity needs a square matrix of size >= 2"
    );
    symmetric_eigenvalues(matrix)[1]
}

/// Spectral norm (largest absolute eigenvalue) of a symmetric matrix.
pub fn spectral_norm_symmetric(matrix: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(matrix)
        .iter()
        .fold(0.0_f64, |m, e| m.max(e.abs()))
}

/// Connectivity threshold separating a genuinely positive second eigenvalue
/// from floating-point zero.
pub const CONNECTIVITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectivityCheck {
    pub lambda2: f64,
    pub connected: bool,
}

/// Tests whether the expected communication graph is connected, i.e. whether
/// the mean Laplacian's second eigenvalue clears [`CONNECTIVITY_TOLERANCE`].
pub fn check_mean_connectivity(
    topology: &Topology,
    failure: &dyn LinkFailureModel,
) -> ConnectivityCheck {
    if topology.num_agents() == 1 {
        // a single agent has nothing to disagree with
        return ConnectivityCheck {
            lambda2: f64::INFINITY,
            connected: true,
        };
    }
    let lambda2 = algebraic_connectivity(&mean_laplacian(topology, failure));
    ConnectivityCheck {
        lambda2,
        connected: lambda2 > CONNECTIVITY_TOLERANCE,
    }
}
