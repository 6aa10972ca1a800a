//! Engine-driven agents: observe, act, reward the previous hop and learn.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ddqn::{masked_argmax, select_action, EpsilonSchedule, Learner, TrainConfig, TrainOutcome};
use super::replay::Experience;
use super::reward::{compute_reward, unavailable_reward, RewardBreakdown, RewardInputs, RewardWeights};
use super::state::{encode_state, Observation, StateConfig};
use crate::analysis::{cka_matrix, mean_off_diagonal, ProbeSet};
use crate::continual::{anticipation_round, cluster_round, global_round, RoundKind};
use crate::engine::{Decision, EngineError, Outcome, RouteContext, RoutingPolicy};
use crate::mlp::QNetwork;
use crate::orbit::{ConstellationSpec, NodeId};
use crate::topology::Snapshot;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exploration {
    /// Decaying schedule evaluated at simulated time with this many gateways.
    Decay { schedule: EpsilonSchedule, num_gateways: usize },
    Fixed(f64),
}

impl Exploration {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Exploration::Decay { schedule, num_gateways } => schedule.at(t, num_gateways),
            Exploration::Fixed(e) => e,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrlConfig {
    pub train: TrainConfig,
    pub reward: RewardWeights,
    pub state: StateConfig,
    pub buffer_capacity: usize,
    pub exploration: Exploration,
    /// Store experiences and train; off means pure inference.
    pub learning: bool,
    /// Keep every k-th reward in the log; 0 keeps none.
    pub reward_log_stride: u64,
    pub epsilon_log_interval_s: f64,
    /// Compute mean pairwise CKA before and after each aggregation.
    pub log_cka: bool,
    pub probe_count: usize,
    pub learning_seed: u64,
    pub probe_seed: u64,
}

impl Default for DrlConfig {
    fn default() -> Self {
        DrlConfig {
            train: TrainConfig::default(),
            reward: RewardWeights::default(),
            state: StateConfig::default(),
            buffer_capacity: 200_000,
            exploration: Exploration::Fixed(0.0),
            learning: true,
            reward_log_stride: 1,
            epsilon_log_interval_s: 0.1,
            log_cka: true,
            probe_count: 512,
            learning_seed: 0,
            probe_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardRecord {
    pub t: f64,
    pub agent: usize,
    pub reward: RewardBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregationRecord {
    pub t: f64,
    pub kind: RoundKind,
    pub participants: usize,
    pub pre_mean_cka: Option<f64>,
    pub post_mean_cka: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrainStats {
    pub steps: u64,
    pub target_updates: u64,
    pub last_loss: f64,
}

#[derive(Debug, Clone)]
struct Pending {
    agent: usize,
    obs: Observation,
    action: usize,
    dist_i_d_m: f64,
    dist_i_j_m: f64,
    d_max_m: f64,
}

/// Routing by Q-networks over local observations. A single shared learner
/// makes every satellite's decision offline; online each satellite owns one.
pub struct MaDrlPolicy {
    cfg: DrlConfig,
    spec: ConstellationSpec,
    learners: Vec<Learner>,
    pending: HashMap<u64, Pending>,
    rng: ChaCha8Rng,
    probe_rng: ChaCha8Rng,
    probes: Option<ProbeSet>,
    rewards: Vec<RewardRecord>,
    reward_count: u64,
    epsilon_log: Vec<(f64, f64)>,
    next_epsilon_log: f64,
    aggregation_log: Vec<AggregationRecord>,
    stats: TrainStats,
}

impl std::fmt::Debug for MaDrlPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MaDrlPolicy")
            .field("agents", &self.learners.len())
            .field("pending", &self.pending.len())
            .field("stats", &self.stats)
            .finish_non_exhaustive()
    }
}

fn policy_err(e: impl std::fmt::Display) -> EngineError {
    EngineError::Policy(e.to_string())
}

impl MaDrlPolicy {
    /// One learner whose net decides for every satellite.
    pub fn shared(cfg: DrlConfig, spec: ConstellationSpec, net: QNetwork) -> Self {
        let learners = vec![Learner::new(net, cfg.buffer_capacity)];
        Self::with_learners(cfg, spec, learners)
    }

    /// Independent agents, one per satellite, each with its own buffer.
    pub fn per_agent(cfg: DrlConfig, spec: ConstellationSpec, nets: Vec<QNetwork>) -> Result<Self, EngineError> {
        if nets.len() != spec.num_satellites() {
            return Err(EngineError::Policy(format!("{} agent models for {} satellites", nets.len(), spec.num_satellites())));
        }
        let learners = nets.into_iter().map(|n| Learner::new(n, cfg.buffer_capacity)).collect();
        Ok(Self::with_learners(cfg, spec, learners))
    }

    /// Copies of one model for every satellite.
    pub fn replicated(cfg: DrlConfig, spec: ConstellationSpec, net: &QNetwork) -> Self {
        let learners = (0..spec.num_satellites()).map(|_| Learner::new(net.clone(), cfg.buffer_capacity)).collect();
        Self::with_learners(cfg, spec, learners)
    }

    fn with_learners(cfg: DrlConfig, spec: ConstellationSpec, learners: Vec<Learner>) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.learning_seed);
        rng.set_stream(1);
        let mut probe_rng = ChaCha8Rng::seed_from_u64(cfg.probe_seed);
        probe_rng.set_stream(2);
        MaDrlPolicy {
            cfg,
            spec,
            learners,
            pending: HashMap::new(),
            rng,
            probe_rng,
            probes: None,
            rewards: Vec::new(),
            reward_count: 0,
            epsilon_log: Vec::new(),
            next_epsilon_log: 0.0,
            aggregation_log: Vec::new(),
            stats: TrainStats::default(),
        }
    }

    pub fn config(&self) -> &DrlConfig {
        &self.cfg
    }

    pub fn learners(&self) -> &[Learner] {
        &self.learners
    }

    pub fn nets(&self) -> Vec<QNetwork> {
        self.learners.iter().map(|l| l.online.clone()).collect()
    }

    pub fn target_nets(&self) -> Vec<QNetwork> {
        self.learners.iter().map(|l| l.target.clone()).collect()
    }

    pub fn rewards(&self) -> &[RewardRecord] {
        &self.rewards
    }

    pub fn epsilon_log(&self) -> &[(f64, f64)] {
        &self.epsilon_log
    }

    pub fn aggregation_log(&self) -> &[AggregationRecord] {
        &self.aggregation_log
    }

    pub fn stats(&self) -> TrainStats {
        self.stats
    }

    pub fn set_learning(&mut self, on: bool) {
        self.cfg.learning = on;
        if !on {
            self.pending.clear();
        }
    }

    pub fn set_exploration(&mut self, e: Exploration) {
        self.cfg.exploration = e;
    }

    fn agent_of(&self, node: NodeId) -> usize {
        if self.learners.len() == 1 {
            0
        } else {
            node.0
        }
    }

    /// Probe states drawn once from the buffers and reused for the run.
    pub fn probes(&mut self) -> &ProbeSet {
        if self.probes.is_none() {
            let buffers: Vec<_> = self.learners.iter().map(|l| &l.buffer).collect();
            let p = ProbeSet::from_buffers(&buffers, self.cfg.probe_count, &self.cfg.state, self.cfg.probe_seed, &mut self.probe_rng);
            self.probes = Some(p);
        }
        self.probes.as_ref().unwrap()
    }

    pub fn mean_cka(&mut self) -> Result<f64, EngineError> {
        let nets = self.nets();
        let probes = self.probes().clone();
        let m = cka_matrix(&nets, &probes).map_err(policy_err)?;
        Ok(mean_off_diagonal(&m))
    }

    fn store(&mut self, agent: usize, e: Experience) -> Result<(), EngineError> {
        let out = self.learners[agent].store(e, &self.cfg.train, &mut self.rng).map_err(policy_err)?;
        if let Some(TrainOutcome::Trained { loss, target_updated }) = out {
            self.stats.steps += 1;
            self.stats.last_loss = loss;
            if target_updated {
                self.stats.target_updates += 1;
            }
        }
        Ok(())
    }

    fn log_reward(&mut self, t: f64, agent: usize, reward: RewardBreakdown) {
        let stride = self.cfg.reward_log_stride;
        if stride > 0 && self.reward_count.is_multiple_of(stride) {
            self.rewards.push(RewardRecord { t, agent, reward });
        }
        self.reward_count += 1;
    }

    /// Closes the experience of the hop that brought the packet here.
    fn complete_hop(&mut self, ctx: &RouteContext, obs_here: Option<&Observation>) -> Result<(), EngineError> {
        let Some(arrival) = ctx.arrival else { return Ok(()) };
        let Some(p) = self.pending.remove(&ctx.packet.id) else { return Ok(()) };
        let delivered = ctx.outcome == Outcome::Deliver;
        let inputs = RewardInputs {
            queue_time_s: arrival.queue_time_s,
            dist_i_d_m: p.dist_i_d_m,
            dist_j_d_m: ctx.snapshot.distance(ctx.node, ctx.packet.dst),
            dist_i_j_m: p.dist_i_j_m,
            d_max_m: p.d_max_m,
            looped: arrival.looped,
            delivered,
            unavailable: false,
        };
        let reward = compute_reward(&self.cfg.reward, &inputs);
        let s_next = match obs_here {
            Some(o) => *o,
            None => self.observe(ctx)?,
        };
        self.log_reward(ctx.t, p.agent, reward);
        self.store(p.agent, Experience { s: p.obs, a: p.action, r: reward.total, s_next, terminal: delivered })
    }

    fn observe(&self, ctx: &RouteContext) -> Result<Observation, EngineError> {
        encode_state(ctx.node, ctx.packet.dst, ctx.snapshot, ctx.counters, ctx.q_max, &self.cfg.state).map_err(policy_err)
    }

    fn log_epsilon(&mut self, t: f64) {
        if t >= self.next_epsilon_log {
            self.epsilon_log.push((t, self.cfg.exploration.at(t)));
            let step = self.cfg.epsilon_log_interval_s;
            self.next_epsilon_log = if step > 0.0 { (t / step).floor() * step + step } else { f64::INFINITY };
        }
    }
}

impl RoutingPolicy for MaDrlPolicy {
    fn route(&mut self, ctx: &RouteContext) -> Result<Decision, EngineError> {
        let learning = self.cfg.learning;
        if ctx.outcome != Outcome::Forward {
            if learning {
                self.complete_hop(ctx, None)?;
            }
            return Ok(Decision::NoRoute);
        }
        let obs = self.observe(ctx)?;
        if learning {
            self.complete_hop(ctx, Some(&obs))?;
        }
        self.log_epsilon(ctx.t);
        let agent = self.agent_of(ctx.node);
        let q = self.learners[agent].q_values(&obs).map_err(policy_err)?;
        let eps = self.cfg.exploration.at(ctx.t);
        let mask = ctx.snapshot.available_slots(ctx.node);
        let mut action = select_action(&q, eps, &mut self.rng);
        if !mask[action] {
            if learning {
                let reward = unavailable_reward(&self.cfg.reward);
                self.log_reward(ctx.t, agent, reward);
                self.store(agent, Experience { s: obs, a: action, r: reward.total, s_next: obs, terminal: false })?;
            }
            match masked_argmax(&q, &mask) {
                Some(a) => action = a,
                None => {
                    self.pending.remove(&ctx.packet.id);
                    return Ok(Decision::NoRoute);
                }
            }
        }
        if learning {
            let link = ctx.snapshot.slot_link(ctx.node, action).expect("masked action has a live link");
            let d_max_m = self.cfg.reward.d_max_m.unwrap_or(ctx.snapshot.max_isl_distance_m);
            self.pending.insert(
                ctx.packet.id,
                Pending {
                    agent,
                    obs,
                    action,
                    dist_i_d_m: ctx.snapshot.distance(ctx.node, ctx.packet.dst),
                    dist_i_j_m: link.distance_m,
                    d_max_m,
                },
            );
        }
        Ok(Decision::Forward(action))
    }

    fn on_learning_round(&mut self, kind: RoundKind, t: f64, snapshot: &Snapshot) -> Result<(), EngineError> {
        if self.learners.len() < 2 {
            return Ok(());
        }
        let pre = if self.cfg.log_cka { Some(self.mean_cka()?) } else { None };
        let mut nets = self.nets();
        let participants = match kind {
            RoundKind::Anticipation => anticipation_round(&self.spec, &mut nets),
            RoundKind::Cluster => cluster_round(&self.spec, snapshot, &mut nets),
            RoundKind::Global => global_round(&self.spec, snapshot, &mut nets).map(|g| if g.is_some() { nets.len() } else { 0 }),
        }
        .map_err(policy_err)?;
        for (l, n) in self.learners.iter_mut().zip(nets) {
            l.online = n;
            l.sync_target();
        }
        let post = if self.cfg.log_cka { Some(self.mean_cka()?) } else { None };
        self.aggregation_log.push(AggregationRecord { t, kind, participants, pre_mean_cka: pre, post_mean_cka: post });
        Ok(())
    }
}
