//! Exact ground truth for the learning runs: the fixed point `Q*` of the
//! network-averaged Q operator, the value function it induces, and the
//! dynamic-programming operator on state values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::MdpModel;

/// A dense state-action value table, row-major over `(state, action)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        QTable {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::Config(format!(
                "table has {} entries, expected {}x{}",
                values.len(),
                num_states,
                num_actions
            )));
        }
        Ok(QTable {
            num_states,
            num_actions,
            values,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.num_actions + action] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Minimum over actions in `state` and its argmin; ties break toward the
    /// lowest action index.
    pub fn min_over_actions(&self, state: usize) -> (f64, usize) {
        let row = &self.values[state * self.num_actions..(state + 1) * self.num_actions];
        let mut best = row[0];
        let mut arg = 0;
        for (u, v) in row.iter().enumerate().skip(1) {
            if *v < best {
                best = *v;
                arg = u;
            }
        }
        (best, arg)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn sup_norm_diff(&self, other: &QTable) -> f64 {
        assert_eq!(
            (self.num_states, self.num_actions),
            (other.num_states, other.num_actions),
            "table dimensions disagree"
        );
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Output of the fixed-point solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub q_star: QTable,
    pub v_star: Vec<f64>,
    #[serde(rename = "policy")]
    pub greedy_policy: Vec<usize>,
    #[serde(rename = "residual")]
    pub sup_norm_residual: f64,
    pub iterations: u64,
}

/// Default solve tolerance; far below every learning-error threshold the
/// harness measures against.
pub const DEFAULT_ORACLE_TOLERANCE: f64 = 1e-10;

/// Applies the network-averaged Q operator: entry `(i,u)` becomes the
/// network-average expected cost at `(i,u)` plus the discounted expected
/// next-state value under `q`.
pub fn apply_g_bar(model: &MdpModel, q: &QTable) -> QTable {
    let avg_costs = model.average_cost_means();
    apply_g_with_costs(model, &avg_costs, q)
}

pub(crate) fn apply_g_with_costs(model: &MdpModel, costs: &[f64], q: &QTable) -> QTable {
    let (m, u_count) = (model.num_states(), model.num_actions());
    let gamma = model.discount();
    let next_values: Vec<f64> = (0..m).map(|j| q.min_over_actions(j).0).collect();
    let mut out = QTable::zeros(m, u_count);
    for i in 0..m {
        for u in 0..u_count {
            let expect: f64 = model
                .kernel_row(i, u)
                .iter()
                .zip(&next_values)
                .map(|(p, v)| p * v)
                .sum();
            out.set(i, u, costs[i * u_count + u] + gamma * expect);
        }
    }
    out
}

/// Applies the dynamic-programming operator to a state-value vector:
/// `T(V)_i = min_u { avg_cost(i,u) + gamma * sum_j p(j|i,u) V_j }`.
pub fn apply_t(model: &MdpModel, v: &[f64]) -> Vec<f64> {
    assert_eq!(v.len(), model.num_states(), "value vector dimension");
    let avg_costs = model.average_cost_means();
    let gamma = model.discount();
    (0..model.num_states())
        .map(|i| {
            (0..model.num_actions())
                .map(|u| {
                    let expect: f64 = model
                        .kernel_row(i, u)
                        .iter()
                        .zip(v)
                        .map(|(p, vj)| p * vj)
                        .sum();
                    avg_costs[i * model.num_actions() + u] + gamma * expect
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Iterates the averaged Q operator from zero until the a-posteriori
/// contraction bound guarantees `sup |Q - Q*| <= tol`.
pub fn solve_q_star(model: &MdpModel, tol: f64) -> Result<OracleSolution> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Config(format!("solve tolerance {tol} must be positive")));
    }
    let gamma = model.discount();
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Config(format!(
            "discount {gamma} outside [0,1); the fixed point is not guaranteed"
        )));
    }
    // With contraction modulus gamma, a step of size d bounds the remaining
    // error by d * gamma / (1 - gamma).
    let threshold = if gamma > 0.0 {
        tol * (1.0 - gamma) / gamma
    } else {
        tol
    };
    let avg_costs = model.average_cost_means();
    let mut q = QTable::zeros(model.num_states(), model.num_actions());
    let mut iterations = 0u64;
    loop {
        let next = apply_g_with_costs(model, &avg_costs, &q);
        let step = next.sup_norm_diff(&q);
        q = next;
        iterations += 1;
        if step <= threshold || iterations >= 100_000_000 {
            break;
        }
    }
    let sup_norm_residual = apply_g_with_costs(model, &avg_costs, &q).sup_norm_diff(&q);
    let (v_star, greedy_policy) = extract_v(&q);
    Ok(OracleSolution {
        q_star: q,
        v_star,
        greedy_policy,
        sup_norm_residual,
        iterations,
    })
}

/// Componentwise minimum and argmin over actions; ties break toward the
/// lowest action index.
pub fn extract_v(q: &QTable) -> (Vec<f64>, Vec<usize>) {
    let mut values = Vec::with_capacity(q.num_states());
    let mut policy = Vec::with_capacity(q.num_states());
    for i in 0..q.num_states() {
        let (v, u) = q.min_over_actions(i);
        values.push(v);
        policy.push(u);
    }
    (values, policy)
}
