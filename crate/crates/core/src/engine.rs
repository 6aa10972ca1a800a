//! Discrete-event forwarding core.
//!
//! Every node owns a single FIFO served one packet at a time. The next hop is
//! chosen when a packet enters a satellite's queue and stored with the entry,
//! which also feeds per-direction occupancy counters that neighbours observe.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use thiserror::Error;

use crate::continual::RoundKind;
use crate::link::{LinkError, McsTable};
use crate::orbit::{ConstellationSpec, Gateway, NodeId, SPEED_OF_LIGHT};
use crate::topology::{RadioSet, Snapshot};
use crate::traffic::Packet;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("policy returned action {action} at node {node}, valid range is 0..4")]
    InvalidAction { node: NodeId, action: usize },
    #[error("policy chose unavailable action {action} at node {node}")]
    UnavailableAction { node: NodeId, action: usize },
    #[error("zero-rate link scheduled for transmission")]
    DeadLink,
    #[error("policy failure: {0}")]
    Policy(String),
}

/// `t_q + B/R + d/c`.
pub fn one_hop_delay(queue_time_s: f64, block_bits: f64, rate_bps: f64, distance_m: f64) -> Result<f64, EngineError> {
    if !(rate_bps > 0.0) {
        return Err(EngineError::DeadLink);
    }
    Ok(queue_time_s + block_bits / rate_bps + distance_m / SPEED_OF_LIGHT)
}

/// Static description of the simulated system.
#[derive(Debug, Clone)]
pub struct World {
    pub spec: ConstellationSpec,
    pub gateways: Vec<Gateway>,
    pub radios: RadioSet,
    pub mcs: McsTable,
    pub min_elevation_deg: Option<f64>,
}

impl World {
    pub fn snapshot(&self, t: f64) -> Result<Snapshot, LinkError> {
        Snapshot::build(&self.spec, &self.gateways, &self.radios, &self.mcs, t, self.min_elevation_deg)
    }

    pub fn gateway_nodes(&self) -> Vec<NodeId> {
        let n = self.spec.num_satellites();
        (0..self.gateways.len()).map(|g| NodeId(n + g)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub q_max: usize,
    pub position_update_interval_s: f64,
    /// Drop packets after this many transmissions; `None` disables the limit.
    pub max_hops: Option<u32>,
    pub record_paths: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { q_max: 100, position_update_interval_s: 15.0, max_hops: None, record_paths: false }
    }
}

/// What happens to a packet that just reached a satellite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// The policy's decision will be used.
    Forward,
    /// The satellite serves the destination gateway; the packet goes down.
    Deliver,
    /// Full queue or hop limit; the packet is discarded here.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalInfo {
    pub from: NodeId,
    /// Waiting time the packet faces in this node's queue.
    pub queue_time_s: f64,
    /// The node was already on the packet's path.
    pub looped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// Transmit over the ISL in this slot.
    Forward(usize),
    /// No usable next hop; the packet is dropped.
    NoRoute,
}

#[derive(Debug, Clone)]
pub struct PacketState {
    pub id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub size_bits: f64,
    pub created_t: f64,
    pub visited: Vec<NodeId>,
    pub hops: u32,
    pub propagation_s: f64,
    pub status: PacketStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketStatus {
    Pending,
    InFlight,
    Delivered,
    Dropped,
}

pub struct RouteContext<'a> {
    pub t: f64,
    pub node: NodeId,
    pub packet: &'a PacketState,
    /// `None` when a queued packet is re-routed after its link vanished.
    pub arrival: Option<ArrivalInfo>,
    pub outcome: Outcome,
    pub snapshot: &'a Snapshot,
    /// Per satellite, queued packets bound to each slot.
    pub counters: &'a [[u32; 4]],
    pub q_max: usize,
}

pub trait RoutingPolicy {
    /// Called for every packet reaching a satellite and for re-routes. The
    /// returned decision is only used when `ctx.outcome` is `Forward`.
    fn route(&mut self, ctx: &RouteContext) -> Result<Decision, EngineError>;

    fn on_topology_change(&mut self, _snapshot: &Snapshot) -> Result<(), EngineError> {
        Ok(())
    }

    fn on_learning_round(&mut self, _kind: RoundKind, _t: f64, _snapshot: &Snapshot) -> Result<(), EngineError> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryRecord {
    pub packet_id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub created_t: f64,
    pub delivered_t: f64,
    pub hops: u32,
    pub propagation_s: f64,
    pub path: Vec<NodeId>,
}

impl DeliveryRecord {
    pub fn e2e_s(&self) -> f64 {
        self.delivered_t - self.created_t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    QueueFull,
    HopLimit,
    NoRoute,
    Misrouted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropRecord {
    pub packet_id: u64,
    pub node: NodeId,
    pub t: f64,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    pub generated: u64,
    pub deliveries: Vec<DeliveryRecord>,
    pub drops: Vec<DropRecord>,
    /// Transmissions per undirected edge `(min, max)`.
    pub edge_counts: BTreeMap<(NodeId, NodeId), u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepSummary {
    pub events: u64,
    pub delivered: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    packet: u64,
    next: NodeId,
    slot: Option<usize>,
    rate_bps: f64,
    distance_m: f64,
    /// The chosen link disappeared; re-route at head of line.
    stale: bool,
}

#[derive(Debug, Default)]
struct NodeQueue {
    waiting: VecDeque<Entry>,
    serving: Option<(Entry, f64)>,
}

impl NodeQueue {
    fn len(&self) -> usize {
        self.waiting.len() + usize::from(self.serving.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    PositionUpdate,
    LearningRound(RoundKind),
    TxComplete { node: NodeId },
    HopComplete { node: NodeId, from: NodeId },
    Arrival,
}

impl EventKind {
    fn rank(&self) -> u8 {
        match self {
            EventKind::PositionUpdate => 0,
            EventKind::LearningRound(_) => 1,
            EventKind::TxComplete { .. } => 2,
            EventKind::HopComplete { .. } => 3,
            EventKind::Arrival => 4,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    t: f64,
    kind: EventKind,
    /// Packet id, or the round order for learning rounds.
    key: u64,
    seq: u64,
}

impl Event {
    fn order(&self, other: &Self) -> Ordering {
        self.t
            .total_cmp(&other.t)
            .then(self.kind.rank().cmp(&other.kind.rank()))
            .then(self.key.cmp(&other.key))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.order(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // reversed so the std max-heap pops the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        other.order(self)
    }
}

pub struct Engine {
    world: World,
    cfg: EngineConfig,
    snapshot: Snapshot,
    now: f64,
    heap: BinaryHeap<Event>,
    seq: u64,
    packets: Vec<PacketState>,
    next_arrival: usize,
    queues: Vec<NodeQueue>,
    counters: Vec<[u32; 4]>,
    metrics: Metrics,
}

impl Engine {
    /// `packets` must be sorted by creation time with ids `0..n`.
    pub fn new(world: World, cfg: EngineConfig, packets: Vec<Packet>, rounds: &[(f64, RoundKind)]) -> Result<Self, EngineError> {
        let snapshot = world.snapshot(0.0)?;
        let n_nodes = snapshot.num_nodes();
        let n_sats = snapshot.num_satellites;
        let packets = packets
            .into_iter()
            .enumerate()
            .map(|(k, p)| {
                assert_eq!(p.id, k as u64, "packet ids must be 0..n in order");
                PacketState {
                    id: p.id,
                    src: p.src,
                    dst: p.dst,
                    size_bits: p.size_bits,
                    created_t: p.created_t,
                    visited: Vec::new(),
                    hops: 0,
                    propagation_s: 0.0,
                    status: PacketStatus::Pending,
                }
            })
            .collect();
        let mut engine = Engine {
            world,
            cfg,
            snapshot,
            now: 0.0,
            heap: BinaryHeap::new(),
            seq: 0,
            packets,
            next_arrival: 0,
            queues: (0..n_nodes).map(|_| NodeQueue::default()).collect(),
            counters: vec![[0; 4]; n_sats],
            metrics: Metrics::default(),
        };
        engine.push(cfg.position_update_interval_s, EventKind::PositionUpdate, 0);
        for &(t, kind) in rounds {
            engine.push(t, EventKind::LearningRound(kind), kind.order() as u64);
        }
        Ok(engine)
    }

    fn push(&mut self, t: f64, kind: EventKind, key: u64) {
        self.seq += 1;
        self.heap.push(Event { t, kind, key, seq: self.seq });
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn snapshot(&self) -> &Snapshot {
        &self.snapshot
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    pub fn into_metrics(self) -> Metrics {
        self.metrics
    }

    pub fn packets(&self) -> &[PacketState] {
        &self.packets
    }

    pub fn counters(&self) -> &[[u32; 4]] {
        &self.counters
    }

    pub fn queue_len(&self, node: NodeId) -> usize {
        self.queues[node.0].len()
    }

    pub fn in_flight(&self) -> u64 {
        self.packets.iter().filter(|p| p.status == PacketStatus::InFlight).count() as u64
    }

    /// Waiting time a packet joining `node`'s queue now would face: the
    /// residual of the packet in service plus `B/R` of every packet ahead on
    /// its own chosen link.
    pub fn queue_time(&self, node: NodeId) -> f64 {
        let q = &self.queues[node.0];
        let residual = q.serving.map_or(0.0, |(_, end)| (end - self.now).max(0.0));
        residual + q.waiting.iter().map(|e| self.packets[e.packet as usize].size_bits / e.rate_bps).sum::<f64>()
    }

    fn peek_time(&self) -> Option<(f64, bool)> {
        let heap_t = self.heap.peek().map(|e| (e.t, e.kind.rank(), e.key));
        let arr_t = self.packets.get(self.next_arrival).map(|p| (p.created_t, EventKind::Arrival.rank(), p.id));
        match (heap_t, arr_t) {
            (None, None) => None,
            (Some(h), None) => Some((h.0, false)),
            (None, Some(a)) => Some((a.0, true)),
            (Some(h), Some(a)) => {
                let heap_first = h.0.total_cmp(&a.0).then(h.1.cmp(&a.1)).then(h.2.cmp(&a.2)) != Ordering::Greater;
                Some(if heap_first { (h.0, false) } else { (a.0, true) })
            }
        }
    }

    /// Processes every event with time `<= until_t`, then sets the clock to `until_t`.
    pub fn step(&mut self, until_t: f64, policy: &mut dyn RoutingPolicy) -> Result<StepSummary, EngineError> {
        let before = (self.metrics.deliveries.len(), self.metrics.drops.len());
        let mut events = 0;
        while let Some((t, is_arrival)) = self.peek_time() {
            if t > until_t {
                break;
            }
            events += 1;
            self.now = t;
            if is_arrival {
                let id = self.next_arrival as u64;
                self.next_arrival += 1;
                self.metrics.generated += 1;
                self.packets[id as usize].status = PacketStatus::InFlight;
                let src = self.packets[id as usize].src;
                self.admit(src, id, None, policy)?;
                continue;
            }
            let ev = self.heap.pop().unwrap();
            match ev.kind {
                EventKind::PositionUpdate => {
                    self.update_positions(policy)?;
                    let next = self.now + self.cfg.position_update_interval_s;
                    self.push(next, EventKind::PositionUpdate, 0);
                }
                EventKind::LearningRound(kind) => policy.on_learning_round(kind, self.now, &self.snapshot)?,
                EventKind::TxComplete { node } => self.finish_tx(node, policy)?,
                EventKind::HopComplete { node, from } => self.admit(node, ev.key, Some(from), policy)?,
                EventKind::Arrival => unreachable!("arrivals are merged lazily"),
            }
        }
        self.now = self.now.max(until_t);
        Ok(StepSummary {
            events,
            delivered: (self.metrics.deliveries.len() - before.0) as u64,
            dropped: (self.metrics.drops.len() - before.1) as u64,
        })
    }

    fn drop_packet(&mut self, id: u64, node: NodeId, reason: DropReason) {
        self.packets[id as usize].status = PacketStatus::Dropped;
        self.metrics.drops.push(DropRecord { packet_id: id, node, t: self.now, reason });
    }

    fn admit(&mut self, node: NodeId, id: u64, from: Option<NodeId>, policy: &mut dyn RoutingPolicy) -> Result<(), EngineError> {
        let idx = id as usize;
        if !self.snapshot.is_satellite(node) {
            let p = &self.packets[idx];
            if node == p.dst {
                let p = &mut self.packets[idx];
                p.status = PacketStatus::Delivered;
                self.metrics.deliveries.push(DeliveryRecord {
                    packet_id: id,
                    src: p.src,
                    dst: p.dst,
                    created_t: p.created_t,
                    delivered_t: self.now,
                    hops: p.hops,
                    propagation_s: p.propagation_s,
                    path: if self.cfg.record_paths { p.visited.clone() } else { Vec::new() },
                });
            } else if from.is_none() {
                let sat = self.snapshot.serving_sat(node);
                let link = self.snapshot.link(node, sat).ok_or(EngineError::DeadLink)?;
                if link.rate_bps <= 0.0 {
                    self.drop_packet(id, node, DropReason::NoRoute);
                } else if self.queues[node.0].len() >= self.cfg.q_max {
                    self.drop_packet(id, node, DropReason::QueueFull);
                } else {
                    self.enqueue(node, Entry { packet: id, next: sat, slot: None, rate_bps: link.rate_bps, distance_m: link.distance_m, stale: false }, policy)?;
                }
            } else {
                self.drop_packet(id, node, DropReason::Misrouted);
            }
            return Ok(());
        }

        let looped = self.packets[idx].visited.contains(&node);
        self.packets[idx].visited.push(node);
        let dst = self.packets[idx].dst;
        let full = self.queues[node.0].len() >= self.cfg.q_max;
        let hop_limited = self.cfg.max_hops.is_some_and(|m| self.packets[idx].hops >= m);
        let outcome = if full || hop_limited {
            Outcome::Drop
        } else if self.snapshot.serving_sat(dst) == node {
            Outcome::Deliver
        } else {
            Outcome::Forward
        };
        let arrival = from.map(|from| ArrivalInfo { from, queue_time_s: self.queue_time(node), looped });
        let decision = policy.route(&RouteContext {
            t: self.now,
            node,
            packet: &self.packets[idx],
            arrival,
            outcome,
            snapshot: &self.snapshot,
            counters: &self.counters,
            q_max: self.cfg.q_max,
        })?;
        match outcome {
            Outcome::Drop => {
                let reason = if full { DropReason::QueueFull } else { DropReason::HopLimit };
                self.drop_packet(id, node, reason);
            }
            Outcome::Deliver => {
                let link = self.snapshot.link(node, dst).ok_or(EngineError::DeadLink)?;
                if link.rate_bps <= 0.0 {
                    self.drop_packet(id, node, DropReason::NoRoute);
                } else {
                    self.enqueue(node, Entry { packet: id, next: dst, slot: None, rate_bps: link.rate_bps, distance_m: link.distance_m, stale: false }, policy)?;
                }
            }
            Outcome::Forward => match self.resolve(node, decision)? {
                Some(entry) => self.enqueue(node, Entry { packet: id, ..entry }, policy)?,
                None => self.drop_packet(id, node, DropReason::NoRoute),
            },
        }
        Ok(())
    }

    fn resolve(&self, node: NodeId, decision: Decision) -> Result<Option<Entry>, EngineError> {
        match decision {
            Decision::NoRoute => Ok(None),
            Decision::Forward(action) => {
                if action >= 4 {
                    return Err(EngineError::InvalidAction { node, action });
                }
                let link = self.snapshot.slot_link(node, action).ok_or(EngineError::UnavailableAction { node, action })?;
                Ok(Some(Entry { packet: 0, next: link.to, slot: Some(action), rate_bps: link.rate_bps, distance_m: link.distance_m, stale: false }))
            }
        }
    }

    fn enqueue(&mut self, node: NodeId, entry: Entry, policy: &mut dyn RoutingPolicy) -> Result<(), EngineError> {
        if let Some(s) = entry.slot {
            self.counters[node.0][s] += 1;
        }
        self.queues[node.0].waiting.push_back(entry);
        if self.queues[node.0].serving.is_none() {
            self.start_service(node, policy)?;
        }
        Ok(())
    }

    fn start_service(&mut self, node: NodeId, policy: &mut dyn RoutingPolicy) -> Result<(), EngineError> {
        while let Some(mut entry) = self.queues[node.0].waiting.pop_front() {
            if entry.stale {
                match self.reroute(node, entry, policy)? {
                    Some(e) => entry = e,
                    None => continue,
                }
            }
            let size = self.packets[entry.packet as usize].size_bits;
            let end = self.now + size / entry.rate_bps;
            self.queues[node.0].serving = Some((entry, end));
            self.push(end, EventKind::TxComplete { node }, entry.packet);
            break;
        }
        Ok(())
    }

    /// Asks the policy again for a head-of-line packet whose link vanished.
    fn reroute(&mut self, node: NodeId, entry: Entry, policy: &mut dyn RoutingPolicy) -> Result<Option<Entry>, EngineError> {
        let id = entry.packet;
        let dst = self.packets[id as usize].dst;
        if self.snapshot.serving_sat(dst) == node {
            if let Some(link) = self.snapshot.link(node, dst).filter(|l| l.rate_bps > 0.0) {
                return Ok(Some(Entry { next: dst, slot: None, rate_bps: link.rate_bps, distance_m: link.distance_m, stale: false, ..entry }));
            }
        }
        let decision = policy.route(&RouteContext {
            t: self.now,
            node,
            packet: &self.packets[id as usize],
            arrival: None,
            outcome: Outcome::Forward,
            snapshot: &self.snapshot,
            counters: &self.counters,
            q_max: self.cfg.q_max,
        })?;
        match self.resolve(node, decision)? {
            Some(e) => {
                // counted as in the buffer while it is served
                self.counters[node.0][e.slot.unwrap()] += 1;
                Ok(Some(Entry { packet: id, ..e }))
            }
            None => {
                self.drop_packet(id, node, DropReason::NoRoute);
                Ok(None)
            }
        }
    }

    fn finish_tx(&mut self, node: NodeId, policy: &mut dyn RoutingPolicy) -> Result<(), EngineError> {
        let (entry, _) = self.queues[node.0].serving.take().expect("tx completion without a packet in service");
        if let Some(s) = entry.slot {
            self.counters[node.0][s] -= 1;
        }
        let key = if node < entry.next { (node, entry.next) } else { (entry.next, node) };
        *self.metrics.edge_counts.entry(key).or_insert(0) += 1;
        let prop = entry.distance_m / SPEED_OF_LIGHT;
        let p = &mut self.packets[entry.packet as usize];
        p.hops += 1;
        p.propagation_s += prop;
        self.push(self.now + prop, EventKind::HopComplete { node: entry.next, from: node }, entry.packet);
        self.start_service(node, policy)
    }

    fn update_positions(&mut self, policy: &mut dyn RoutingPolicy) -> Result<(), EngineError> {
        self.snapshot = self.world.snapshot(self.now)?;
        let snap = &self.snapshot;
        for (n, q) in self.queues.iter_mut().enumerate() {
            let node = NodeId(n);
            for e in q.waiting.iter_mut() {
                refresh_entry(snap, node, e);
            }
            if let Some((e, _)) = q.serving.as_mut() {
                // the transmission in progress completes on the old geometry
                e.slot = if snap.is_satellite(node) && snap.is_satellite(e.next) { snap.slot_of(node, e.next) } else { None };
            }
        }
        for (n, c) in self.counters.iter_mut().enumerate() {
            *c = [0; 4];
            let q = &self.queues[n];
            for e in q.waiting.iter().chain(q.serving.iter().map(|(e, _)| e)) {
                if let Some(s) = e.slot {
                    c[s] += 1;
                }
            }
        }
        policy.on_topology_change(&self.snapshot)
    }

    /// `generated == delivered + dropped + in flight`.
    pub fn conservation_holds(&self) -> bool {
        let m = &self.metrics;
        m.generated == m.deliveries.len() as u64 + m.drops.len() as u64 + self.in_flight()
    }
}

fn refresh_entry(snap: &Snapshot, node: NodeId, e: &mut Entry) {
    if !snap.is_satellite(node) {
        let sat = snap.serving_sat(node);
        if let Some(l) = snap.link(node, sat).filter(|l| l.rate_bps > 0.0) {
            *e = Entry { next: sat, rate_bps: l.rate_bps, distance_m: l.distance_m, ..*e };
        }
        return;
    }
    if e.stale {
        return;
    }
    let fresh = if snap.is_satellite(e.next) {
        snap.slot_of(node, e.next).and_then(|s| snap.slot_link(node, s).map(|l| (Some(s), l)))
    } else if snap.serving_sat(e.next) == node {
        snap.link(node, e.next).filter(|l| l.rate_bps > 0.0).map(|l| (None, l))
    } else {
        None
    };
    match fresh {
        Some((slot, l)) => {
            e.slot = slot;
            e.rate_bps = l.rate_bps;
            e.distance_m = l.distance_m;
        }
        None => {
            // keep the old rate as the queue-time estimate until re-routed
            e.stale = true;
            e.slot = None;
        }
    }
}
