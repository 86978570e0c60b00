//! Collaborative multi-agent value learning over unreliable networks.
//!
//! A network of agents watches one shared controlled Markov chain but pays
//! private random one-stage costs. Each agent learns the state-action value
//! table of the *network-averaged* cost by mixing two forces at every visit
//! of a state-action pair: agreement with whichever neighbors are reachable
//! this step over a randomly failing communication graph, and its own
//! sampled temporal-difference innovation. The crate provides:
//!
//! - [`mdp`]: the controlled chain, cost sampling, and the uniform
//!   exploration policy generating the shared trajectory;
//! - [`graph`]: ring/edge-list topologies, i.i.d. link-failure thinning,
//!   and the mean-connectivity (Fiedler value) check;
//! - [`oracle`]: the exact fixed point `Q*` via contraction iteration, the
//!   value function, and the greedy policy;
//! - [`learning`]: the distributed consensus + innovations update with
//!   visit-count-indexed step sizes, the local expected operators and the
//!   martingale residual, and the centralized baseline recursion;
//! - [`harness`]: seeded deterministic experiments running both learners on
//!   one trajectory, with consensus/error metrics and CSV/JSON export;
//! - [`config`]: the JSON experiment schema and embedded presets.
//!
//! The `qdlearn` binary exposes `validate`, `run`, `solve`, and `sweep`
//! subcommands over the same machinery.

pub mod config;
pub mod error;
pub mod graph;
pub mod harness;
pub mod learning;
pub mod mdp;
pub mod oracle;
pub mod rng;

pub use config::ExperimentConfigFile;
pub use error::{Error, Result};
pub use graph::{IidErasure, LaplacianSample, LinkFailureModel, Topology};
pub use harness::{run_experiment, RunConfig, RunRecord, RunSummary, ValidationReport};
pub use learning::{AgentQState, CentralizedQState, Transition, WeightSchedule};
pub use mdp::{MdpModel, TrajectoryState};
pub use oracle::{solve_q_star, OracleSolution, QTable};
