//! Seeded experiment orchestration: one shared trajectory drives the
//! distributed learner and the centralized baseline, metrics are measured
//! against the exact fixed point, and the whole record is a pure function
//! of the run configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{check_mean_connectivity, sample_laplacian, IidErasure, Topology};
use crate::learning::{
    centralized_step, qd_step, qd_step_with_residuals, AgentQState, CentralizedQState, Transition,
    WeightSchedule,
};
use crate::mdp::{sample_uniform_action, MdpModel};
use crate::oracle::{solve_q_star, OracleSolution, QTable};
use crate::rng::{derive_stream, StreamLayout};

/// Explicit opt-outs for ablation runs; every waiver used is recorded in the
/// run summary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Waivers {
    pub allow_m5_violation: bool,
    pub allow_disconnected: bool,
}

/// Everything a run depends on. Two equal configs produce bit-identical
/// records.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: MdpModel,
    pub topology: Topology,
    pub failure: IidErasure,
    pub schedule: WeightSchedule,
    pub total_steps: u64,
    pub snapshot_interval: u64,
    pub master_seed: u64,
    pub initial_state: usize,
    pub initial_tables: Option<Vec<QTable>>,
    pub streams: StreamLayout,
    pub oracle_tolerance: f64,
    pub track_residuals: bool,
    pub waivers: Waivers,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationCheck {
    pub name: String,
    pub passed: bool,
    pub waived: bool,
    pub detail: String,
}

/// Outcome of pre-run validation: one entry per check, machine readable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.waived)
    }

    pub fn one_line(&self) -> String {
        let failed: Vec<&str> = self
            .checks
            .iter()
            .filter(|c| !c.passed && !c.waived)
            .map(|c| c.name.as_str())
            .collect();
        if failed.is_empty() {
            "all checks passed".into()
        } else {
            failed.join(", ")
        }
    }
}

impl RunConfig {
    /// Runs every pre-flight check. Waivable checks report `waived` instead
    /// of blocking when the matching flag is set.
    pub fn validate(&self) -> ValidationReport {
        let mut checks = Vec::new();
        let mut push = |name: &str, passed: bool, waived: bool, detail: String| {
            checks.push(ValidationCheck {
                name: name.into(),
                passed,
                waived: waived && !passed,
                detail,
            });
        };

        let violations = self.model.validate();
        push(
            "model",
            violations.is_empty(),
            false,
            if violations.is_empty() {
                "kernel rows stochastic, discount in (0,1), noise admissible".into()
            } else {
                violations.join("; ")
            },
        );

        let dims_ok = self.topology.num_agents() == self.model.num_agents()
            && self.initial_state < self.model.num_states();
        push(
            "dimensions",
            dims_ok,
            false,
            format!(
                "topology agents {} vs model agents {}; initial state {} of {}",
                self.topology.num_agents(),
                self.model.num_agents(),
                self.initial_state,
                self.model.num_states()
            ),
        );
        if let Some(tables) = &self.initial_tables {
            let shape_ok = tables.len() == self.model.num_agents()
                && tables.iter().all(|t| {
                    t.num_states() == self.model.num_states()
                        && t.num_actions() == self.model.num_actions()
                });
            push(
                "initial_tables",
                shape_ok,
                false,
                "initial tables must be one per agent with model dimensions".into(),
            );
        }

        let connectivity = check_mean_connectivity(&self.topology, &self.failure);
        push(
            "mean_connectivity",
            connectivity.connected,
            self.waivers.allow_disconnected,
            format!("lambda2 of the mean Laplacian = {:.6e}", connectivity.lambda2),
        );

        push(
            "exponent_window",
            self.schedule.exponents_valid(),
            self.waivers.allow_m5_violation,
            format!(
                "tau1 = {} must lie in (1/2, 1]; tau2 = {} must lie in (0, tau1 - 1/(2+eps1)) = (0, {})",
                self.schedule.tau1,
                self.schedule.tau2,
                self.schedule.tau1 - 1.0 / (2.0 + self.schedule.epsilon1)
            ),
        );

        push(
            "update_matrix_nonneg",
            self.schedule
                .update_matrix_nonneg_guaranteed(self.topology.num_agents()),
            false,
            format!(
                "a + N b = {} + {} * {} = {} must not exceed 1 (and a must be positive)",
                self.schedule.a,
                self.topology.num_agents(),
                self.schedule.b,
                self.schedule.a + self.topology.num_agents() as f64 * self.schedule.b
            ),
        );

        push(
            "streams",
            self.streams.distinct_for(self.model.num_agents()),
            false,
            "trajectory, graph, model and per-agent cost streams must be pairwise distinct".into(),
        );

        push(
            "run_parameters",
            self.snapshot_interval >= 1 && self.oracle_tolerance > 0.0,
            false,
            format!(
                "snapshot interval {} (>= 1), oracle tolerance {} (> 0)",
                self.snapshot_interval, self.oracle_tolerance
            ),
        );

        ValidationReport { checks }
    }
}

/// Full-table snapshot taken at the logging cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub consensus_distance: f64,
    /// `sup |Q^n - Q*|` per agent.
    pub agent_oracle_errors: Vec<f64>,
    pub centralized_error: f64,
    pub visit_counts: Vec<u64>,
    pub tables: Vec<QTable>,
}

/// Streaming mean/variance accumulator (Welford).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ResidualStats {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl ResidualStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn standard_error(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    /// Combines two accumulators as if their samples had been pushed into
    /// one (parallel-variance merge).
    pub fn merge(&self, other: &ResidualStats) -> ResidualStats {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2
            + other.m2
            + delta * delta * self.count as f64 * other.count as f64 / count as f64;
        ResidualStats { count, mean, m2 }
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub total_steps: u64,
    pub schedule: WeightSchedule,
    pub waivers: Waivers,
    pub snapshots: Vec<Snapshot>,
    pub final_tables: Vec<QTable>,
    pub final_centralized: QTable,
    pub final_visit_counts: Vec<u64>,
    pub oracle: OracleSolution,
    /// Largest `sup |Q^n_t|` seen at any step of the run, over all agents.
    pub max_sup_norm: f64,
    /// The a-priori envelope `2 (max mean cost + 4 sigma) / (1 - gamma)`;
    /// a run exceeding it is flagged.
    pub boundedness_bound: f64,
    /// Per `(agent, pair)` running residual statistics, row-major, present
    /// in diagnostic mode.
    pub residual_stats: Option<Vec<ResidualStats>>,
}

/// The JSON summary written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub total_steps: u64,
    pub num_agents: usize,
    pub final_consensus_distance: f64,
    pub final_oracle_error_max: f64,
    pub final_centralized_error: f64,
    /// Distributed over centralized final error; recorded, not thresholded.
    pub error_ratio_distributed_to_centralized: f64,
    pub q_star_residual: f64,
    pub q_star_sup_norm: f64,
    pub max_sup_norm: f64,
    pub boundedness_bound: f64,
    pub within_bound: bool,
    pub a: f64,
    pub b: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub waivers: Waivers,
}

impl RunRecord {
    pub fn final_consensus_distance(&self) -> f64 {
        consensus_distance(&self.final_tables)
    }

    pub fn final_oracle_error_max(&self) -> f64 {
        self.final_tables
            .iter()
            .map(|t| oracle_error(t, &self.oracle.q_star))
            .fold(0.0, f64::max)
    }

    pub fn summary(&self) -> RunSummary {
        let centralized = oracle_error(&self.final_centralized, &self.oracle.q_star);
        let distributed = self.final_oracle_error_max();
        RunSummary {
            seed: self.seed,
            total_steps: self.total_steps,
            num_agents: self.final_tables.len(),
            final_consensus_distance: self.final_consensus_distance(),
            final_oracle_error_max: distributed,
            final_centralized_error: centralized,
            error_ratio_distributed_to_centralized: distributed / centralized,
            q_star_residual: self.oracle.sup_norm_residual,
            q_star_sup_norm: self.oracle.q_star.sup_norm(),
            max_sup_norm: self.max_sup_norm,
            boundedness_bound: self.boundedness_bound,
            within_bound: self.max_sup_norm <= self.boundedness_bound,
            a: self.schedule.a,
            b: self.schedule.b,
            tau1: self.schedule.tau1,
            tau2: self.schedule.tau2,
            waivers: self.waivers,
        }
    }
}

/// Worst per-agent sup-distance from the agent-average table.
pub fn consensus_distance(tables: &[QTable]) -> f64 {
    assert!(!tables.is_empty(), "consensus distance of an empty network");
    let entries = tables[0].values().len();
    let mut mean = vec![0.0; entries];
    for table in tables {
        for (slot, v) in mean.iter_mut().zip(table.values()) {
            *slot += v;
        }
    }
    let scale = tables.len() as f64;
    for slot in &mut mean {
        *slot /= scale;
    }
    tables
        .iter()
        .map(|table| {
            table
                .values()
                .iter()
                .zip(&mean)
                .fold(0.0_f64, |m, (v, avg)| m.max((v - avg).abs()))
        })
        .fold(0.0, f64::max)
}

/// Sup-norm gap to the exact fixed point.
pub fn oracle_error(table: &QTable, q_star: &QTable) -> f64 {
    table.sup_norm_diff(q_star)
}

/// The run-acceptance envelope on iterate magnitude.
pub fn boundedness_bound(model: &MdpModel) -> f64 {
    2.0 * (model.max_cost_mean() + 4.0 * model.max_cost_noise_std()) / (1.0 - model.discount())
}

/// Runs the full experiment described by `config`.
///
/// Per-step order: uniform action, per-agent costs, communication graph,
/// successor state, then the synchronous distributed update and the
/// centralized baseline on the identical transition.
pub fn run_experiment(config: &RunConfig) -> Result<RunRecord> {
    let report = config.validate();
    if !report.passed() {
        return Err(Error::Validation(report));
    }

    let model = &config.model;
    let (m, u_count, n_agents) = (model.num_states(), model.num_actions(), model.num_agents());
    let oracle = solve_q_star(model, config.oracle_tolerance)?;

    let mut trajectory_rng = derive_stream(config.master_seed, config.streams.trajectory);
    let mut graph_rng = derive_stream(config.master_seed, config.streams.graph);
    let mut cost_rngs: Vec<_> = (0..n_agents)
        .map(|n| derive_stream(config.master_seed, config.streams.cost_stream(n)))
        .collect();

    let mut state = AgentQState::new(n_agents, m, u_count);
    if let Some(tables) = &config.initial_tables {
        state = state.with_initial_tables(tables.clone());
    }
    let mut centralized = CentralizedQState::new(m, u_count);
    let mut residual_stats = config
        .track_residuals
        .then(|| vec![ResidualStats::default(); n_agents * m * u_count]);

    let mut max_sup_norm = state
        .tables()
        .iter()
        .map(QTable::sup_norm)
        .fold(0.0, f64::max);

    let snapshot_of = |step: u64, state: &AgentQState, centralized: &CentralizedQState| Snapshot {
        step,
        consensus_distance: consensus_distance(state.tables()),
        agent_oracle_errors: state
            .tables()
            .iter()
            .map(|t| oracle_error(t, &oracle.q_star))
            .collect(),
        centralized_error: oracle_error(centralized.table(), &oracle.q_star),
        visit_counts: state.visit_counts().to_vec(),
        tables: state.tables().to_vec(),
    };

    let mut snapshots = vec![snapshot_of(0, &state, &centralized)];
    let mut x = config.initial_state;
    for t in 0..config.total_steps {
        let action = sample_uniform_action(u_count, &mut trajectory_rng);
        let costs: Vec<f64> = (0..n_agents)
            .map(|n| model.sample_cost(n, x, action, &mut cost_rngs[n]))
            .collect();
        let graph_sample = sample_laplacian(&config.topology, &config.failure, &mut graph_rng);
        let next_state = model.sample_next_state(x, action, &mut trajectory_rng);
        let transition = Transition {
            state: x,
            action,
            costs,
            next_state,
        };

        if let Some(stats) = residual_stats.as_mut() {
            let outcome =
                qd_step_with_residuals(&mut state, model, &graph_sample, &transition, &config.schedule);
            for (n, nu) in outcome.residuals.as_deref().unwrap().iter().enumerate() {
                stats[(n * m + x) * u_count + action].push(*nu);
            }
        } else {
            qd_step(&mut state, model, &graph_sample, &transition, &config.schedule);
        }
        centralized_step(&mut centralized, model, &transition, &config.schedule);

        for table in state.tables() {
            max_sup_norm = max_sup_norm.max(table.get(x, action).abs());
        }
        x = next_state;

        let now = t + 1;
        if now % config.snapshot_interval == 0 || now == config.total_steps {
            snapshots.push(snapshot_of(now, &state, &centralized));
        }
    }

    Ok(RunRecord {
        seed: config.master_seed,
        total_steps: config.total_steps,
        schedule: config.schedule,
        waivers: config.waivers,
        final_tables: state.tables().to_vec(),
        final_centralized: centralized.table().clone(),
        final_visit_counts: state.visit_counts().to_vec(),
        oracle,
        max_sup_norm,
        boundedness_bound: boundedness_bound(model),
        residual_stats,
        snapshots,
    })
}

/// The slice of a run that the CSV carries: per-snapshot tables and scalar
/// metrics. Import reproduces this view bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSeries {
    pub snapshots: Vec<CsvSnapshot>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvSnapshot {
    pub step: u64,
    pub consensus_distance: f64,
    pub agent_oracle_errors: Vec<f64>,
    pub centralized_error: f64,
    pub tables: Vec<QTable>,
}

impl RunRecord {
    pub fn csv_series(&self) -> CsvSeries {
        CsvSeries {
            snapshots: self
                .snapshots
                .iter()
                .map(|s| CsvSnapshot {
                    step: s.step,
                    consensus_distance: s.consensus_distance,
                    agent_oracle_errors: s.agent_oracle_errors.clone(),
                    centralized_error: s.centralized_error,
                    tables: s.tables.clone(),
                })
                .collect(),
        }
    }
}

pub const CSV_HEADER: &str =
    "step,agent,pair_state,pair_action,q_value,consensus_distance,oracle_error,centralized_error";

/// Renders the record's snapshot series as CSV. Floats print in shortest
/// round-trip form, so re-importing reproduces identical bits.
pub fn render_csv(record: &RunRecord) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for snap in &record.snapshots {
        for (agent, table) in snap.tables.iter().enumerate() {
            for state in 0..table.num_states() {
                for action in 0..table.num_actions() {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        snap.step,
                        agent,
                        state,
                        action,
                        table.get(state, action),
                        snap.consensus_distance,
                        snap.agent_oracle_errors[agent],
                        snap.centralized_error,
                    );
                }
            }
        }
    }
    out
}

pub fn export_csv(record: &RunRecord, path: &Path) -> Result<()> {
    fs::write(path, render_csv(record)).map_err(|e| Error::io(path, e))
}

/// Reads a CSV produced by [`export_csv`] back into its snapshot series.
pub fn import_csv(path: &Path) -> Result<CsvSeries> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text).map_err(|detail| Error::Malformed {
        path: path.to_path_buf(),
        detail,
    })
}

fn parse_csv(text: &str) -> std::result::Result<CsvSeries, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }

    struct Row {
        step: u64,
        agent: usize,
        state: usize,
        action: usize,
        q_value: f64,
        consensus: f64,
        oracle_error: f64,
        centralized: f64,
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(format!("line {}: expected 8 fields, got {}", idx + 2, fields.len()));
        }
        let parse_err = |what: &str| format!("line {}: bad {what}", idx + 2);
        rows.push(Row {
            step: fields[0].parse().map_err(|_| parse_err("step"))?,
            agent: fields[1].parse().map_err(|_| parse_err("agent"))?,
            state: fields[2].parse().map_err(|_| parse_err("pair_state"))?,
            action: fields[3].parse().map_err(|_| parse_err("pair_action"))?,
            q_value: fields[4].parse().map_err(|_| parse_err("q_value"))?,
            consensus: fields[5].parse().map_err(|_| parse_err("consensus_distance"))?,
            oracle_error: fields[6].parse().map_err(|_| parse_err("oracle_error"))?,
            centralized: fields[7].parse().map_err(|_| parse_err("centralized_error"))?,
        });
    }
    if rows.is_empty() {
        return Err("no data rows".into());
    }
    let num_agents = rows.iter().map(|r| r.agent).max().unwrap() + 1;
    let num_states = rows.iter().map(|r| r.state).max().unwrap() + 1;
    let num_actions = rows.iter().map(|r| r.action).max().unwrap() + 1;
    let per_snapshot = num_agents * num_states * num_actions;
    if rows.len() % per_snapshot != 0 {
        return Err(format!(
            "{} rows is not a whole number of {}-row snapshots",
            rows.len(),
            per_snapshot
        ));
    }

    let mut snapshots = Vec::new();
    for chunk in rows.chunks(per_snapshot) {
        let step = chunk[0].step;
        let mut tables = vec![QTable::zeros(num_states, num_actions); num_agents];
        let mut agent_oracle_errors = vec![0.0; num_agents];
        for row in chunk {
            if row.step != step {
                return Err(format!("snapshot at step {step} mixes rows from step {}", row.step));
            }
            tables[row.agent].set(row.state, row.action, row.q_value);
            agent_oracle_errors[row.agent] = row.oracle_error;
        }
        snapshots.push(CsvSnapshot {
            step,
            consensus_distance: chunk[0].consensus,
            agent_oracle_errors,
            centralized_error: chunk[0].centralized,
            tables,
        });
    }
    Ok(CsvSeries { snapshots })
}
