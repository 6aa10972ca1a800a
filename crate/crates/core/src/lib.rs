//! Packet-level simulator of a LEO satellite constellation network with
//! multi-agent deep Q-learning routing, baselines and online model alignment.

pub mod analysis;
pub mod config;
pub mod continual;
pub mod drl;
pub mod engine;
pub mod link;
pub mod mlp;
pub mod orbit;
pub mod output;
pub mod policies;
pub mod scenario;
pub mod topology;
pub mod traffic;

pub use analysis::{cka, cka_matrix, latency_cdf, link_heatmap, model_cka, percentile, ProbeSet};
pub use config::{load_config, ScenarioConfig};
pub use continual::{AggregationSchedule, RoundKind};
pub use drl::policy::{DrlConfig, MaDrlPolicy};
pub use engine::{Engine, EngineConfig, Metrics, RoutingPolicy, World};
pub use mlp::QNetwork;
pub use orbit::{ConstellationSpec, NodeId};
pub use policies::{dijkstra_route, QRoutingPolicy, ShortestPathPolicy};
pub use scenario::{run_baseline, run_offline, run_online, Alignment, Baseline, RunOutput, Scenario};
pub use topology::Snapshot;

use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Engine(#[from] engine::EngineError),
    #[error(transparent)]
    Link(#[from] link::LinkError),
    #[error(transparent)]
    Traffic(#[from] traffic::TrafficError),
    #[error(transparent)]
    Mlp(#[from] mlp::MlpError),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
    #[error(transparent)]
    Continual(#[from] continual::ContinualError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// Problems with the inputs rather than with the run itself.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
