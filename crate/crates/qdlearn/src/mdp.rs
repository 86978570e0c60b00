//! The controlled Markov chain, per-agent random one-stage costs, and the
//! uniform behavior policy that generates state-action trajectories.

use rand::Rng;
use rand_distr::{Dirichlet, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Standard deviation of the Gaussian one-stage cost noise, either shared by
/// every `(agent, state, action)` triple or given per triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostNoise {
    Shared(f64),
    /// Flattened `[agent][state][action]`, row-major.
    PerEntry(Vec<f64>),
}

/// A finite controlled Markov chain with `num_states` states, `num_actions`
/// actions shared by every state, a row-stochastic transition kernel, and
/// per-agent Gaussian one-stage costs with means `cost_means[n][i][u]`.
///
/// The number of agents is carried implicitly by the first axis of
/// `cost_means`; the communication topology must agree with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpModel {
    num_states: usize,
    num_actions: usize,
    num_agents: usize,
    /// Flattened `[state][action][next_state]`, row-major.
    kernel: Vec<f64>,
    /// Flattened `[agent][state][action]`, row-major.
    cost_means: Vec<f64>,
    cost_noise_std: CostNoise,
    discount: f64,
}

impl MdpModel {
    /// Builds a model, checking dimensions only. Value-level invariants
    /// (row stochasticity, discount range, noise sign) are the business of
    /// [`MdpModel::validate`], which reports instead of failing.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        num_agents: usize,
        kernel: Vec<f64>,
        cost_means: Vec<f64>,
        cost_noise_std: CostNoise,
        discount: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || num_agents == 0 {
            return Err(Error::Config(
                "state, action and agent counts must all be positive".into(),
            ));
        }
        let want_kernel = num_states * num_actions * num_states;
        if kernel.len() != want_kernel {
            return Err(Error::Config(format!(
                "kernel has {} entries, expected {} ({}x{}x{})",
                kernel.len(),
                want_kernel,
                num_states,
                num_actions,
                num_states
            )));
        }
        let want_means = num_agents * num_states * num_actions;
        if cost_means.len() != want_means {
            return Err(Error::Config(format!(
                "cost_means has {} entries, expected {} ({}x{}x{})",
                cost_means.len(),
                want_means,
                num_agents,
                num_states,
                num_actions
            )));
        }
        if let CostNoise::PerEntry(stds) = &cost_noise_std {
            if stds.len() != want_means {
                return Err(Error::Config(format!(
                    "cost_noise_std has {} entries, expected {}",
                    stds.len(),
                    want_means
                )));
            }
        }
        Ok(MdpModel {
            num_states,
            num_actions,
            num_agents,
            kernel,
            cost_means,
            cost_noise_std,
            discount,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// The transition distribution over successor states for `(state, action)`.
    pub fn kernel_row(&self, state: usize, action: usize) -> &[f64] {
        let base = (state * self.num_actions + action) * self.num_states;
        &self.kernel[base..base + self.num_states]
    }

    pub fn cost_mean(&self, agent: usize, state: usize, action: usize) -> f64 {
        self.cost_means[(agent * self.num_states + state) * self.num_actions + action]
    }

    pub fn cost_noise_std(&self, agent: usize, state: usize, action: usize) -> f64 {
        match &self.cost_noise_std {
            CostNoise::Shared(s) => *s,
            CostNoise::PerEntry(v) => {
                v[(agent * self.num_states + state) * self.num_actions + action]
            }
        }
    }

    /// Network-averaged expected one-stage cost per `(state, action)`,
    /// flattened row-major.
    pub fn average_cost_means(&self) -> Vec<f64> {
        let pairs = self.num_states * self.num_actions;
        let mut avg = vec![0.0; pairs];
        for n in 0..self.num_agents {
            for (slot, value) in avg.iter_mut().zip(&self.cost_means[n * pairs..(n + 1) * pairs])
            {
                *slot += value;
            }
        }
        let scale = self.num_agents as f64;
        for slot in &mut avg {
            *slot /= scale;
        }
        avg
    }

    pub fn max_cost_mean(&self) -> f64 {
        self.cost_means.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    pub fn max_cost_noise_std(&self) -> f64 {
        match &self.cost_noise_std {
            CostNoise::Shared(s) => *s,
            CostNoise::PerEntry(v) => v.iter().fold(0.0_f64, |m, s| m.max(*s)),
        }
    }

    /// Checks every value-level invariant and returns the violations, each
    /// with the indices that triggered it. Empty means pass.
    pub fn validate(&self) -> Vec<String> {
        self.validate_inner(false)
    }

    /// Like [`MdpModel::validate`], but admits a zero discount: the fixed
    /// point still exists and the solver handles it, even though learning
    /// runs require a strictly positive discount.
    pub fn validate_for_solve(&self) -> Vec<String> {
        self.validate_inner(true)
    }

    fn validate_inner(&self, allow_zero_discount: bool) -> Vec<String> {
        let mut violations = Vec::new();
        for i in 0..self.num_states {
            for u in 0..self.num_actions {
                let row = self.kernel_row(i, u);
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    violations.push(format!("kernel row (state {i}, action {u}): row sum {sum}"));
                }
                for (j, p) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(p) {
                        violations.push(format!(
                            "kernel entry (state {i}, action {u}, next {j}): {p} out of [0,1]"
                        ));
                    }
                }
            }
        }
        let lower_ok = if allow_zero_discount {
            self.discount >= 0.0
        } else {
            self.discount > 0.0
        };
        if !(lower_ok && self.discount < 1.0) {
            violations.push(format!("discount {} outside (0,1)", self.discount));
        }
        for n in 0..self.num_agents {
            for i in 0..self.num_states {
                for u in 0..self.num_actions {
                    let std = self.cost_noise_std(n, i, u);
                    // NaN must fail too
                    if std.is_nan() || std < 0.0 {
                        violations.push(format!(
                            "cost noise std (agent {n}, state {i}, action {u}): {std} negative"
                        ));
                    }
                }
            }
        }
        violations
    }

    /// Draws the successor of `(state, action)`, consuming exactly one
    /// uniform draw from `rng`.
    pub fn sample_next_state(&self, state: usize, action: usize, rng: &mut StreamRng) -> usize {
        assert!(
            state < self.num_states && action < self.num_actions,
            "state-action ({state},{action}) out of range"
        );
        let draw: f64 = rng.gen();
        let row = self.kernel_row(state, action);
        let mut acc = 0.0;
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if draw < acc {
                return j;
            }
        }
        // Rounding can leave acc fractionally below 1; the draw then belongs
        // to the last state with positive mass.
        row.iter().rposition(|p| *p > 0.0).unwrap_or(row.len() - 1)
    }

    /// Draws agent `n`'s random one-stage cost at `(state, action)` from its
    /// private cost stream.
    pub fn sample_cost(&self, agent: usize, state: usize, action: usize, rng: &mut StreamRng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.cost_mean(agent, state, action) + self.cost_noise_std(agent, state, action) * z
    }
}

/// Cursor of the single exploration trajectory driving a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectoryState {
    pub current_state: usize,
    pub last_action: Option<usize>,
    pub step: u64,
    /// Stream id of the generator this trajectory consumes; bookkeeping only.
    pub rng_stream_id: u64,
}

impl TrajectoryState {
    pub fn new(initial_state: usize, rng_stream_id: u64) -> Self {
        TrajectoryState {
            current_state: initial_state,
            last_action: None,
            step: 0,
            rng_stream_id,
        }
    }
}

/// Draws an action uniformly from the action set.
pub fn sample_uniform_action(num_actions: usize, rng: &mut StreamRng) -> usize {
    rng.gen_range(0..num_actions)
}

/// One step of the exploration-only behavior policy: a uniform action, then
/// the kernel-sampled successor. Advances the trajectory cursor.
pub fn behavior_step(
    model: &MdpModel,
    traj: &mut TrajectoryState,
    rng: &mut StreamRng,
) -> (usize, usize) {
    let action = sample_uniform_action(model.num_actions(), rng);
    let next = model.sample_next_state(traj.current_state, action, rng);
    traj.last_action = Some(action);
    traj.current_state = next;
    traj.step += 1;
    (action, next)
}

/// Parameters of the random experiment family: flat-Dirichlet kernel rows and
/// uniformly drawn cost means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomModelSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub num_agents: usize,
    /// Inclusive lower / exclusive upper bound on expected one-stage costs.
    pub cost_mean_range: (f64, f64),
    pub cost_noise_std: f64,
    pub discount: f64,
}

/// Generates a model from the random family. Kernel rows are valid
/// probability vectors by construction.
pub fn generate_random_model(spec: &RandomModelSpec, rng: &mut StreamRng) -> Result<MdpModel> {
    if spec.num_states == 0 || spec.num_actions == 0 || spec.num_agents == 0 {
        return Err(Error::Config(
            "random model spec needs positive state, action and agent counts".into(),
        ));
    }
    let (lo, hi) = spec.cost_mean_range;
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(Error::Config(format!(
            "cost mean range ({lo}, {hi}) is inverted"
        )));
    }
    let m = spec.num_states;
    let mut kernel = Vec::with_capacity(m * spec.num_actions * m);
    if m == 1 {
        kernel.extend(std::iter::repeat_n(1.0, spec.num_actions));
    } else {
        let dirichlet = Dirichlet::new(&vec![1.0; m])
            .map_err(|e| Error::Config(format!("dirichlet setup failed: {e}")))?;
        for _ in 0..m * spec.num_actions {
            kernel.extend(rng.sample(&dirichlet));
        }
    }
    let entries = spec.num_agents * m * spec.num_actions;
    let cost_means = (0..entries)
        .map(|_| if lo == hi { lo } else { rng.gen_range(lo..hi) })
        .collect();
    MdpModel::new(
        m,
        spec.num_actions,
        spec.num_agents,
        kernel,
        cost_means,
        CostNoise::Shared(spec.cost_noise_std),
        spec.discount,
    )
}
