//! The JSON experiment-file schema, embedded presets, and the translation
//! into a runnable [`RunConfig`].
//!
//! Unknown keys are rejected everywhere so a typo'd field name fails loudly
//! instead of silently falling back to a default.

use std::fs;
use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::graph::{IidErasure, Topology};
use crate::harness::{RunConfig, ValidationCheck, ValidationReport, Waivers};
use crate::learning::WeightSchedule;
use crate::mdp::{generate_random_model, CostNoise, MdpModel, RandomModelSpec};
use crate::oracle::{QTable, DEFAULT_ORACLE_TOLERANCE};
use crate::rng::{derive_stream, StreamLayout};

/// Model section: either every parameter spelled out, or a seeded draw from
/// the random experiment family.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelSpec {
    Explicit(ExplicitModel),
    Random(RandomModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitModel {
    pub num_states: usize,
    pub num_actions: usize,
    /// `kernel[state][action]` is the distribution over successor states.
    pub kernel: Vec<Vec<Vec<f64>>>,
    /// `cost_means[agent][state][action]`.
    pub cost_means: Vec<Vec<Vec<f64>>>,
    pub cost_noise_std: NoiseSpec,
    pub discount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Shared(f64),
    PerEntry(Vec<Vec<Vec<f64>>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomModel {
    pub num_states: usize,
    pub num_actions: usize,
    pub num_agents: usize,
    #[serde(default = "default_cost_mean_range")]
    pub cost_mean_range: (f64, f64),
    pub cost_noise_std: f64,
    pub discount: f64,
    /// Master seed for the model draw; defaults to the run's master seed.
    #[serde(default)]
    pub model_seed: Option<u64>,
}

fn default_cost_mean_range() -> (f64, f64) {
    (0.0, 400.0)
}

/// Topology section: a circulant ring or an explicit edge list.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TopologySpec {
    Ring(RingTopology),
    Edges(EdgeTopology),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingTopology {
    /// Defaults to the model's agent count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_agents: Option<usize>,
    pub neighbors_each_side: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeTopology {
    /// Defaults to the model's agent count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_agents: Option<usize>,
    pub edges: Vec<(usize, usize)>,
}

// serde's derived internally-tagged decoding cannot reject unknown keys, so
// the tag dispatch is spelled out: pop "type", then hold the remaining map
// to the variant's deny_unknown_fields schema.
fn tagged_from_map<'de, D>(
    deserializer: D,
    expected: &'static [&'static str],
) -> std::result::Result<(String, serde_json::Value), D::Error>
where
    D: Deserializer<'de>,
{
    let mut map = serde_json::Map::deserialize(deserializer)?;
    let tag = map
        .remove("type")
        .ok_or_else(|| D::Error::custom(format!("missing \"type\" (one of {expected:?})")))?;
    let tag: String = serde_json::from_value(tag)
        .map_err(|_| D::Error::custom("\"type\" must be a string"))?;
    Ok((tag, serde_json::Value::Object(map)))
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let (tag, rest) = tagged_from_map::<D>(deserializer, &["explicit", "random"])?;
        match tag.as_str() {
            "explicit" => serde_json::from_value(rest)
                .map(ModelSpec::Explicit)
                .map_err(D::Error::custom),
            "random" => serde_json::from_value(rest)
                .map(ModelSpec::Random)
                .map_err(D::Error::custom),
            other => Err(D::Error::custom(format!(
                "unknown model type {other:?} (expected \"explicit\" or \"random\")"
            ))),
        }
    }
}

impl<'de> Deserialize<'de> for TopologySpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let (tag, rest) = tagged_from_map::<D>(deserializer, &["ring", "edges"])?;
        match tag.as_str() {
            "ring" => serde_json::from_value(rest)
                .map(TopologySpec::Ring)
                .map_err(D::Error::custom),
            "edges" => serde_json::from_value(rest)
                .map(TopologySpec::Edges)
                .map_err(D::Error::custom),
            other => Err(D::Error::custom(format!(
                "unknown topology type {other:?} (expected \"ring\" or \"edges\")"
            ))),
        }
    }
}

/// Artifact paths a run writes, relative to the output directory unless
/// absolute.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputPaths {
    pub csv: Option<String>,
    pub summary: Option<String>,
    pub oracle: Option<String>,
}

fn default_snapshot_interval() -> u64 {
    100
}

fn default_track_residuals() -> bool {
    true
}

fn default_oracle_tolerance() -> f64 {
    DEFAULT_ORACLE_TOLERANCE
}

/// The on-disk experiment document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfigFile {
    /// Preset name this document encodes, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset_version: Option<u32>,
    pub model: ModelSpec,
    pub topology: TopologySpec,
    pub erasure_probability: f64,
    pub schedule: WeightSchedule,
    pub total_steps: u64,
    #[serde(default = "default_snapshot_interval")]
    pub snapshot_interval: u64,
    pub master_seed: u64,
    #[serde(default)]
    pub initial_state: usize,
    /// Optional per-agent initial tables, `[agent][state][action]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_q: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    pub streams: StreamLayout,
    #[serde(default)]
    pub waivers: Waivers,
    #[serde(default = "default_track_residuals")]
    pub track_residuals: bool,
    #[serde(default = "default_oracle_tolerance")]
    pub oracle_tolerance: f64,
    #[serde(default)]
    pub output: OutputPaths,
}

pub const PRESET_PAPER_SEC6: &str = "paper-sec6";
pub const PRESET_DESK_SCALE: &str = "desk-scale";

/// Names of the presets embedded in the binary.
pub fn preset_names() -> &'static [&'static str] {
    &[PRESET_PAPER_SEC6, PRESET_DESK_SCALE]
}

impl ExperimentConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::json(format!("parsing {}", path.display()), e))
    }

    pub fn from_preset(name: &str) -> Result<Self> {
        let text = match name {
            PRESET_PAPER_SEC6 => include_str!("../presets/paper-sec6.json"),
            PRESET_DESK_SCALE => include_str!("../presets/desk-scale.json"),
            other => {
                return Err(Error::Config(format!(
                    "unknown preset {other:?}; available: {}",
                    preset_names().join(", ")
                )))
            }
        };
        serde_json::from_str(text).map_err(|e| Error::json(format!("parsing preset {name}"), e))
    }

    /// Builds just the model section (used by the oracle solver, which does
    /// not need a topology or a schedule).
    pub fn build_model(&self) -> Result<MdpModel> {
        match &self.model {
            ModelSpec::Explicit(spec) => {
                let kernel = flatten3(&spec.kernel);
                let cost_means = flatten3(&spec.cost_means);
                let num_agents = spec.cost_means.len();
                let noise = match &spec.cost_noise_std {
                    NoiseSpec::Shared(s) => CostNoise::Shared(*s),
                    NoiseSpec::PerEntry(v) => CostNoise::PerEntry(flatten3(v)),
                };
                MdpModel::new(
                    spec.num_states,
                    spec.num_actions,
                    num_agents,
                    kernel,
                    cost_means,
                    noise,
                    spec.discount,
                )
            }
            ModelSpec::Random(spec) => {
                let seed = spec.model_seed.unwrap_or(self.master_seed);
                let mut rng = derive_stream(seed, self.streams.model_generation);
                generate_random_model(
                    &RandomModelSpec {
                        num_states: spec.num_states,
                        num_actions: spec.num_actions,
                        num_agents: spec.num_agents,
                        cost_mean_range: spec.cost_mean_range,
                        cost_noise_std: spec.cost_noise_std,
                        discount: spec.discount,
                    },
                    &mut rng,
                )
            }
        }
    }

    /// Builds the topology; `default_agents` (normally the model's agent
    /// count) applies when the topology section does not name its own.
    pub fn build_topology(&self, default_agents: usize) -> Result<Topology> {
        match &self.topology {
            TopologySpec::Ring(ring) => Topology::ring(
                ring.num_agents.unwrap_or(default_agents),
                ring.neighbors_each_side,
            ),
            TopologySpec::Edges(spec) => Topology::from_edges(
                spec.num_agents.unwrap_or(default_agents),
                spec.edges.iter().copied(),
            ),
        }
    }

    /// Assembles the runnable configuration. Dimension errors surface here;
    /// value-level validation happens in [`RunConfig::validate`].
    pub fn to_run_config(&self) -> Result<RunConfig> {
        let model = self.build_model()?;
        let topology = self.build_topology(model.num_agents())?;
        let failure = IidErasure::new(self.erasure_probability)?;
        let initial_tables = match &self.initial_q {
            None => None,
            Some(per_agent) => {
                let mut tables = Vec::with_capacity(per_agent.len());
                for agent in per_agent {
                    tables.push(QTable::from_values(
                        model.num_states(),
                        model.num_actions(),
                        agent.iter().flatten().copied().collect(),
                    )?);
                }
                Some(tables)
            }
        };
        Ok(RunConfig {
            model,
            topology,
            failure,
            schedule: self.schedule,
            total_steps: self.total_steps,
            snapshot_interval: self.snapshot_interval,
            master_seed: self.master_seed,
            initial_state: self.initial_state,
            initial_tables,
            streams: self.streams,
            oracle_tolerance: self.oracle_tolerance,
            track_residuals: self.track_residuals,
            waivers: self.waivers,
        })
    }

    /// Validation report for the whole document, including a model-only
    /// fallback when the run config cannot even be assembled.
    pub fn validate(&self) -> ValidationReport {
        match self.to_run_config() {
            Ok(config) => config.validate(),
            Err(e) => ValidationReport {
                checks: vec![ValidationCheck {
                    name: "assemble".into(),
                    passed: false,
                    waived: false,
                    detail: e.to_string(),
                }],
            },
        }
    }
}

fn flatten3(v: &[Vec<Vec<f64>>]) -> Vec<f64> {
    v.iter().flatten().flatten().copied().collect()
}
