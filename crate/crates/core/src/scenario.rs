//! End-to-end runs assembled from a scenario config.

use std::fs;
use std::path::Path;

use crate::config::{rng_stream, ScenarioConfig};
use crate::continual::{schedule_rounds, AggregationSchedule, RoundKind};
use crate::drl::policy::{AggregationRecord, DrlConfig, Exploration, MaDrlPolicy, RewardRecord, TrainStats};
use crate::engine::{Engine, EngineConfig, Metrics, RoutingPolicy, World};
use crate::link::McsTable;
use crate::mlp::{archive_from_json, archive_to_json, QNetwork};
use crate::orbit::gateways;
use crate::output;
use crate::policies::{QRoutingConfig, QRoutingPolicy, ShortestPathPolicy};
use crate::topology::Snapshot;
use crate::traffic::{generate_arrivals, max_supported_load, write_packet_trace, Packet, TrafficConfig};
use crate::Error;

/// World, traffic trace and config shared by every policy run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub world: World,
    pub initial: Snapshot,
    /// Maximum supported load in bits per second.
    pub lambda_star: f64,
    pub packets: Vec<Packet>,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self, Error> {
        config.validate()?;
        let mcs = match &config.radio.mcs_table {
            Some(p) => McsTable::from_csv_path(p)?,
            None => McsTable::default(),
        };
        let world = World {
            spec: config.constellation_spec(),
            gateways: gateways(config.gateways.count),
            radios: config.radio.radio_set(),
            mcs,
            min_elevation_deg: config.gateways.min_elevation_deg,
        };
        let initial = world.snapshot(0.0)?;
        let gw_nodes = world.gateway_nodes();
        let (lambda_star, packets) = if gw_nodes.len() >= 2 {
            let lambda_star = max_supported_load(&initial)?;
            let traffic = TrafficConfig { load_fraction: config.traffic.load_fraction, block_bits: config.traffic.block_bits };
            let rates = traffic.uplink_rates(lambda_star, gw_nodes.len());
            let packets = generate_arrivals(&rates, &gw_nodes, traffic.block_bits, config.seeds.traffic, config.horizon_s);
            (lambda_star, packets)
        } else {
            (0.0, Vec::new())
        };
        Ok(Scenario { config, world, initial, lambda_star, packets })
    }

    pub fn from_preset(preset: &str) -> Result<Self, Error> {
        Self::new(ScenarioConfig::for_preset(preset)?)
    }

    pub fn num_satellites(&self) -> usize {
        self.world.spec.num_satellites()
    }

    pub fn engine_config(&self) -> EngineConfig {
        let e = &self.config.engine;
        EngineConfig {
            q_max: e.q_max,
            position_update_interval_s: e.position_update_interval_s,
            max_hops: (e.max_hops > 0).then_some(e.max_hops),
            record_paths: e.record_paths,
        }
    }

    pub fn new_network(&self) -> Result<QNetwork, Error> {
        let mut rng = rng_stream(&self.config.seeds, "learning")?;
        Ok(QNetwork::new_random(&self.config.learning.dims(), &mut rng))
    }

    /// Parses a model and checks it against the configured layer widths.
    pub fn load_network(&self, json: &str) -> Result<QNetwork, Error> {
        Ok(QNetwork::from_json_with_dims(json, &self.config.learning.dims())?)
    }

    /// A single model document or an agent archive.
    pub fn load_models(&self, json: &str) -> Result<Vec<QNetwork>, Error> {
        let nets = if json.trim_start().starts_with('[') { archive_from_json(json)? } else { vec![QNetwork::from_json(json)?] };
        let dims = self.config.learning.dims();
        for n in &nets {
            if n.dims() != dims {
                return Err(crate::mlp::MlpError::Shape(n.dims(), dims).into());
            }
        }
        Ok(nets)
    }

    pub fn drl_config(&self, phase: Phase) -> DrlConfig {
        let l = &self.config.learning;
        let o = &self.config.output;
        let (buffer_capacity, exploration, learning) = match phase {
            Phase::Offline => (
                l.global_buffer,
                Exploration::Decay { schedule: l.epsilon(), num_gateways: self.config.gateways.count },
                true,
            ),
            Phase::Online { learning } => (l.agent_buffer, Exploration::Fixed(l.online_epsilon), learning),
        };
        DrlConfig {
            train: l.train(),
            reward: l.reward,
            state: l.state(),
            buffer_capacity,
            exploration,
            learning,
            reward_log_stride: o.reward_log_stride,
            epsilon_log_interval_s: o.epsilon_log_interval_s,
            log_cka: o.log_cka,
            probe_count: o.probe_count,
            learning_seed: self.config.seeds.learning,
            probe_seed: self.config.seeds.probes,
        }
    }

    /// Runs the engine to the horizon under `policy`.
    pub fn run_policy(&self, policy: &mut dyn RoutingPolicy, rounds: &[(f64, RoundKind)]) -> Result<Metrics, Error> {
        let mut engine = Engine::new(self.world.clone(), self.engine_config(), self.packets.clone(), rounds)?;
        engine.step(self.config.horizon_s, policy)?;
        if !engine.conservation_holds() {
            return Err(Error::Invariant("packet conservation violated".into()));
        }
        Ok(engine.into_metrics())
    }

    /// Aggregation periods for the chosen mechanisms. Anticipation defaults
    /// to one in-plane slot spacing, `T_o/S_o`.
    pub fn alignment_schedule(&self, alignment: Alignment) -> Result<AggregationSchedule, Error> {
        let s = &self.config.schedule;
        let spec = &self.world.spec;
        let anticipation = alignment
            .anticipation
            .then(|| s.anticipation_period_s.unwrap_or(spec.period_s() / spec.sats_per_plane as f64));
        let (cluster, global) = if alignment.fl {
            let c = s.cluster_period_s.ok_or_else(|| crate::config::ConfigError::Invalid {
                field: "schedule.cluster_period_s".into(),
                reason: "required when federated aggregation is enabled".into(),
            })?;
            (Some(c), s.global_period_s)
        } else {
            (None, None)
        };
        Ok(AggregationSchedule { anticipation_period_s: anticipation, cluster_period_s: cluster, global_period_s: global })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Offline,
    Online { learning: bool },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Alignment {
    pub anticipation: bool,
    /// Cluster rounds and, when a period is configured, global rounds.
    pub fl: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    ShortestPath,
    QRouting,
}

impl Baseline {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "shortest-path" => Some(Baseline::ShortestPath),
            "q-routing" => Some(Baseline::QRouting),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::ShortestPath => "shortest-path",
            Baseline::QRouting => "q-routing",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub policy: String,
    pub metrics: Metrics,
    pub num_satellites: usize,
    pub rewards: Vec<RewardRecord>,
    pub epsilon: Vec<(f64, f64)>,
    pub aggregation: Vec<AggregationRecord>,
    pub nets: Vec<QNetwork>,
    pub target_nets: Vec<QNetwork>,
    pub train: TrainStats,
}

impl RunOutput {
    fn plain(policy: &str, metrics: Metrics, num_satellites: usize) -> Self {
        RunOutput {
            policy: policy.to_string(),
            metrics,
            num_satellites,
            rewards: Vec::new(),
            epsilon: Vec::new(),
            aggregation: Vec::new(),
            nets: Vec::new(),
            target_nets: Vec::new(),
            train: TrainStats::default(),
        }
    }

    fn from_drl(policy: &str, metrics: Metrics, num_satellites: usize, p: &MaDrlPolicy) -> Self {
        RunOutput {
            policy: policy.to_string(),
            metrics,
            num_satellites,
            rewards: p.rewards().to_vec(),
            epsilon: p.epsilon_log().to_vec(),
            aggregation: p.aggregation_log().to_vec(),
            nets: p.nets(),
            target_nets: p.target_nets(),
            train: p.stats(),
        }
    }

    pub fn latencies(&self) -> Vec<f64> {
        self.metrics.deliveries.iter().map(|d| d.e2e_s()).collect()
    }

    /// Mean latency of the last `fraction` of delivered packets by creation time.
    pub fn tail_mean_latency(&self, fraction: f64) -> Option<f64> {
        let mut d: Vec<_> = self.metrics.deliveries.iter().map(|d| (d.created_t, d.packet_id, d.e2e_s())).collect();
        if d.is_empty() {
            return None;
        }
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let k = ((d.len() as f64 * fraction).ceil() as usize).clamp(1, d.len());
        let tail = &d[d.len() - k..];
        Some(tail.iter().map(|x| x.2).sum::<f64>() / k as f64)
    }

    /// Writes every CSV of the run plus model files into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), Error> {
        fs::create_dir_all(dir)?;
        let m = &self.metrics;
        output::write_latency(&mut output::create(&dir.join("latency.csv"))?, &m.deliveries)?;
        output::write_heatmap(&mut output::create(&dir.join("heatmap.csv"))?, &m.edge_counts)?;
        output::write_drops(&mut output::create(&dir.join("drops.csv"))?, &m.drops)?;
        output::write_cdf(&mut output::create(&dir.join("cdf.csv"))?, &self.latencies())?;
        if !self.nets.is_empty() {
            output::write_rewards(&mut output::create(&dir.join("rewards.csv"))?, &self.rewards)?;
            output::write_epsilon(&mut output::create(&dir.join("epsilon.csv"))?, &self.epsilon)?;
        }
        if self.nets.len() == 1 {
            fs::write(dir.join("model.json"), self.nets[0].to_json())?;
            fs::write(dir.join("target_model.json"), self.target_nets[0].to_json())?;
        } else if self.nets.len() > 1 {
            output::write_aggregation_log(&mut output::create(&dir.join("aggregation_log.csv"))?, &self.aggregation)?;
            fs::write(dir.join("agents.json"), archive_to_json(&self.nets))?;
        }
        Ok(())
    }
}

/// Single shared learner trained from `init` (or a fresh net).
pub fn run_offline(scn: &Scenario, init: Option<QNetwork>) -> Result<(RunOutput, MaDrlPolicy), Error> {
    let net = match init {
        Some(n) => n,
        None => scn.new_network()?,
    };
    let mut policy = MaDrlPolicy::shared(scn.drl_config(Phase::Offline), scn.world.spec, net);
    let metrics = scn.run_policy(&mut policy, &[])?;
    let out = RunOutput::from_drl("ma-drl", metrics, scn.num_satellites(), &policy);
    Ok((out, policy))
}

/// Every satellite becomes an agent seeded from `models` (one model is
/// replicated; otherwise one per satellite).
pub fn run_online(
    scn: &Scenario,
    models: &[QNetwork],
    learning: bool,
    alignment: Alignment,
) -> Result<(RunOutput, MaDrlPolicy), Error> {
    let cfg = scn.drl_config(Phase::Online { learning });
    let spec = scn.world.spec;
    let mut policy = match models {
        [one] => MaDrlPolicy::replicated(cfg, spec, one),
        many => MaDrlPolicy::per_agent(cfg, spec, many.to_vec())?,
    };
    let schedule = scn.alignment_schedule(alignment)?;
    let rounds = schedule_rounds(&schedule, scn.config.horizon_s);
    let metrics = scn.run_policy(&mut policy, &rounds)?;
    let out = RunOutput::from_drl("ma-drl", metrics, scn.num_satellites(), &policy);
    Ok((out, policy))
}

pub fn run_baseline(scn: &Scenario, which: Baseline) -> Result<RunOutput, Error> {
    let metrics = match which {
        Baseline::ShortestPath => scn.run_policy(&mut ShortestPathPolicy::new(), &[])?,
        Baseline::QRouting => {
            let l = &scn.config.learning;
            let mut p = QRoutingPolicy::new(QRoutingConfig {
                alpha: scn.config.qrouting.alpha,
                gamma: scn.config.qrouting.gamma,
                exploration: Exploration::Decay { schedule: l.epsilon(), num_gateways: scn.config.gateways.count },
                reward: l.reward,
                seed: scn.config.seeds.learning,
            });
            scn.run_policy(&mut p, &[])?
        }
    };
    Ok(RunOutput::plain(which.as_str(), metrics, scn.num_satellites()))
}

/// Topology rows at `t = 0` and every position update before the horizon.
pub fn write_topology(scn: &Scenario, dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    let mut w = output::create(&dir.join("topology.csv"))?;
    w.write_record(crate::topology::TOPOLOGY_CSV_HEADER)?;
    let dt = scn.config.engine.position_update_interval_s;
    let mut k = 0u64;
    loop {
        let t = k as f64 * dt;
        if k > 0 && t >= scn.config.horizon_s {
            break;
        }
        scn.world.snapshot(t)?.write_csv_rows(&mut w)?;
        k += 1;
    }
    w.flush()?;
    let mut trace = std::io::BufWriter::new(fs::File::create(dir.join("packets.csv"))?);
    write_packet_trace(&scn.packets, &mut trace)?;
    Ok(())
}
