//! The distributed value-learning recursion and its centralized baseline.
//!
//! Each agent keeps a full state-action table. When the shared trajectory
//! visits pair `(i,u)` for the `(k+1)`-th time, every agent synchronously
//! moves that one entry by a consensus term (weighted disagreement with the
//! step's active neighbors) plus an innovation term (its private sampled
//! cost and the discounted next-state value), with weights indexed by the
//! pair's visit count rather than wall-clock time.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::graph::LaplacianSample;
use crate::mdp::MdpModel;
use crate::oracle::QTable;

fn default_epsilon1() -> f64 {
    1.0
}

/// Constants and exponents generating the two step-size sequences:
/// innovation weight `a / (k+1)^tau1` and consensus weight `b / (k+1)^tau2`
/// at a pair's `(k+1)`-th visit, zero elsewhere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSchedule {
    pub a: f64,
    pub b: f64,
    pub tau1: f64,
    pub tau2: f64,
    /// Declared moment surplus of the cost distribution; Gaussian costs have
    /// every moment, so any positive value is admissible. Only used to place
    /// the upper end of the valid `tau2` window.
    #[serde(default = "default_epsilon1")]
    pub epsilon1: f64,
}

impl WeightSchedule {
    /// Innovation weight at a pair's `(k+1)`-th visit.
    pub fn alpha(&self, k: u64) -> f64 {
        self.a / ((k + 1) as f64).powf(self.tau1)
    }

    /// Consensus weight at a pair's `(k+1)`-th visit.
    pub fn beta(&self, k: u64) -> f64 {
        self.b / ((k + 1) as f64).powf(self.tau2)
    }

    /// Exponent window making the innovation weights square-summable and the
    /// consensus potential eventually dominant: `tau1` in `(1/2, 1]` and
    /// `0 < tau2 < tau1 - 1/(2 + epsilon1)`.
    pub fn exponents_valid(&self) -> bool {
        self.tau1 > 0.5
            && self.tau1 <= 1.0
            && self.tau2 > 0.0
            && self.epsilon1 > 0.0
            && self.tau2 < self.tau1 - 1.0 / (2.0 + self.epsilon1)
    }

    /// Sufficient condition for the per-step update matrix to stay
    /// entrywise nonnegative on every realizable graph of `num_agents`
    /// nodes: `a + N b <= 1` (the largest Laplacian eigenvalue is at most N).
    pub fn update_matrix_nonneg_guaranteed(&self, num_agents: usize) -> bool {
        self.a > 0.0 && self.b >= 0.0 && self.a + num_agents as f64 * self.b <= 1.0
    }
}

/// The joint learner state: one table per agent plus the shared per-pair
/// visit counters that index both weight sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentQState {
    tables: Vec<QTable>,
    visit_counts: Vec<u64>,
    step: u64,
}

impl AgentQState {
    pub fn new(num_agents: usize, num_states: usize, num_actions: usize) -> Self {
        AgentQState {
            tables: vec![QTable::zeros(num_states, num_actions); num_agents],
            visit_counts: vec![0; num_states * num_actions],
            step: 0,
        }
    }

    /// Replaces the zero initialization with caller-provided tables.
    pub fn with_initial_tables(mut self, tables: Vec<QTable>) -> Self {
        assert_eq!(tables.len(), self.tables.len(), "one table per agent");
        for (new, old) in tables.iter().zip(&self.tables) {
            assert_eq!(
                (new.num_states(), new.num_actions()),
                (old.num_states(), old.num_actions()),
                "initial table dimensions"
            );
        }
        self.tables = tables;
        self
    }

    pub fn num_agents(&self) -> usize {
        self.tables.len()
    }

    pub fn tables(&self) -> &[QTable] {
        &self.tables
    }

    pub fn table(&self, agent: usize) -> &QTable {
        &self.tables[agent]
    }

    pub fn visit_count(&self, state: usize, action: usize) -> u64 {
        self.visit_counts[state * self.tables[0].num_actions() + action]
    }

    pub fn visit_counts(&self) -> &[u64] {
        &self.visit_counts
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One observed step of the shared trajectory: the visited pair, each
/// agent's private sampled cost there, and the realized successor state.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub costs: Vec<f64>,
    pub next_state: usize,
}

/// What one synchronous update did, for diagnostics and logging.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub pair: (usize, usize),
    pub visit_index: u64,
    pub alpha: f64,
    pub beta: f64,
    /// Raw per-agent innovation `c_n + gamma * min_v Q^n(next, v) - Q^n(i,u)`.
    pub innovations: Vec<f64>,
    /// Raw per-agent neighborhood disagreement `sum_l (Q^n(i,u) - Q^l(i,u))`.
    pub consensus_terms: Vec<f64>,
    /// Martingale residuals, filled by the harness in diagnostic mode.
    pub residuals: Option<Vec<f64>>,
}

/// One synchronous distributed update at the visited pair. Every right-hand
/// side reads the pre-step tables; only the visited entry changes.
pub fn qd_step(
    state: &mut AgentQState,
    model: &MdpModel,
    graph_sample: &LaplacianSample,
    transition: &Transition,
    schedule: &WeightSchedule,
) -> StepOutcome {
    let num_agents = state.num_agents();
    assert_eq!(transition.costs.len(), num_agents, "one cost per agent");
    let (i, u) = (transition.state, transition.action);
    let gamma = model.discount();
    let k = state.visit_count(i, u);
    let alpha = schedule.alpha(k);
    let beta = schedule.beta(k);

    // time-t reads, before any write
    let old: Vec<f64> = state.tables.iter().map(|q| q.get(i, u)).collect();
    let min_next: Vec<f64> = state
        .tables
        .iter()
        .map(|q| q.min_over_actions(transition.next_state).0)
        .collect();
    let neighbors = graph_sample.neighbor_lists(num_agents);

    let mut innovations = Vec::with_capacity(num_agents);
    let mut consensus_terms = Vec::with_capacity(num_agents);
    for n in 0..num_agents {
        let consensus: f64 = neighbors[n].iter().map(|&l| old[n] - old[l]).sum();
        let innovation = transition.costs[n] + gamma * min_next[n] - old[n];
        state.tables[n].set(i, u, old[n] - beta * consensus + alpha * innovation);
        innovations.push(innovation);
        consensus_terms.push(consensus);
    }
    state.visit_counts[i * state.tables[0].num_actions() + u] += 1;
    state.step += 1;

    StepOutcome {
        pair: (i, u),
        visit_index: k,
        alpha,
        beta,
        innovations,
        consensus_terms,
        residuals: None,
    }
}

/// [`qd_step`] plus per-agent martingale residuals computed against the
/// pre-step tables. Needs the true model means, so harness/diagnostic only.
pub fn qd_step_with_residuals(
    state: &mut AgentQState,
    model: &MdpModel,
    graph_sample: &LaplacianSample,
    transition: &Transition,
    schedule: &WeightSchedule,
) -> StepOutcome {
    let residuals: Vec<f64> = (0..state.num_agents())
        .map(|n| residual_nu(model, n, transition, state.table(n)))
        .collect();
    let mut outcome = qd_step(state, model, graph_sample, transition, schedule);
    outcome.residuals = Some(residuals);
    outcome
}

/// Agent `n`'s expected one-step operator at a single entry:
/// `E[c_n(i,u)] + gamma * sum_j p(j|i,u) min_v Q(j,v)`.
pub fn local_g_entry(model: &MdpModel, agent: usize, state: usize, action: usize, q: &QTable) -> f64 {
    let expect: f64 = model
        .kernel_row(state, action)
        .iter()
        .enumerate()
        .map(|(j, p)| p * q.min_over_actions(j).0)
        .sum();
    model.cost_mean(agent, state, action) + model.discount() * expect
}

/// Agent `n`'s expected one-step operator applied to a whole table.
pub fn local_g(model: &MdpModel, agent: usize, q: &QTable) -> QTable {
    let mut out = QTable::zeros(model.num_states(), model.num_actions());
    let next_values: Vec<f64> = (0..model.num_states())
        .map(|j| q.min_over_actions(j).0)
        .collect();
    for i in 0..model.num_states() {
        for u in 0..model.num_actions() {
            let expect: f64 = model
                .kernel_row(i, u)
                .iter()
                .zip(&next_values)
                .map(|(p, v)| p * v)
                .sum();
            out.set(i, u, model.cost_mean(agent, i, u) + model.discount() * expect);
        }
    }
    out
}

/// The martingale part of agent `n`'s sampled update: the realized target
/// minus its conditional expectation given the pre-step table. Requires the
/// true model means, so this is diagnostic-only and never feeds the learner.
pub fn residual_nu(
    model: &MdpModel,
    agent: usize,
    transition: &Transition,
    q_before: &QTable,
) -> f64 {
    let sampled = transition.costs[agent]
        + model.discount() * q_before.min_over_actions(transition.next_state).0;
    sampled - local_g_entry(model, agent, transition.state, transition.action, q_before)
}

/// The baseline learner that sees every agent's instantaneous cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedQState {
    table: QTable,
    visit_counts: Vec<u64>,
    step: u64,
}

impl CentralizedQState {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        CentralizedQState {
            table: QTable::zeros(num_states, num_actions),
            visit_counts: vec![0; num_states * num_actions],
            step: 0,
        }
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }

    pub fn visit_count(&self, state: usize, action: usize) -> u64 {
        self.visit_counts[state * self.table.num_actions() + action]
    }
}

/// One step of centralized tabular learning on the shared trajectory, with
/// the same visit-count weight indexing as the distributed update.
pub fn centralized_step(
    state: &mut CentralizedQState,
    model: &MdpModel,
    transition: &Transition,
    schedule: &WeightSchedule,
) -> f64 {
    let (i, u) = (transition.state, transition.action);
    let k = state.visit_count(i, u);
    let alpha = schedule.alpha(k);
    let avg_cost = transition.costs.iter().sum::<f64>() / transition.costs.len() as f64;
    let old = state.table.get(i, u);
    let min_next = state.table.min_over_actions(transition.next_state).0;
    let innovation = avg_cost + model.discount() * min_next - old;
    state.table.set(i, u, old + alpha * innovation);
    state.visit_counts[i * state.table.num_actions() + u] += 1;
    state.step += 1;
    alpha
}

/// The linear map one synchronous update applies to the agent stack at the
/// visited entry: `I - beta L - alpha I`.
pub fn update_matrix(graph_sample: &LaplacianSample, alpha: f64, beta: f64) -> DMatrix<f64> {
    let n = graph_sample.matrix.nrows();
    DMatrix::identity(n, n) - &graph_sample.matrix * beta - DMatrix::identity(n, n) * alpha
}

/// Entrywise nonnegativity of the step-`k` update matrix, the property that
/// makes the update order-preserving. Pass means every entry `>= -1e-12`.
pub fn update_matrix_nonneg(
    schedule: &WeightSchedule,
    graph_sample: &LaplacianSample,
    k: u64,
) -> bool {
    let m = update_matrix(graph_sample, schedule.alpha(k), schedule.beta(k));
    m.iter().all(|v| *v >= -1e-12)
}
