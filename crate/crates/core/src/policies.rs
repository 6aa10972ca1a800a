//! Baseline routing: genie shortest path and tabular Q-routing.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::drl::ddqn::masked_argmax;
use crate::drl::policy::Exploration;
use crate::drl::reward::{compute_reward, RewardInputs, RewardWeights};
use crate::engine::{Decision, EngineError, Outcome, RouteContext, RoutingPolicy};
use crate::mlp::NUM_ACTIONS;
use crate::orbit::NodeId;
use crate::topology::{LinkKind, Snapshot, WeightedGraph};

#[derive(Debug, Clone, PartialEq)]
struct Frontier {
    dist: f64,
    path: Vec<usize>,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then_with(|| self.path.cmp(&other.path))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sum of edge weights along the path, in path order. `None` if an edge is missing.
pub fn path_weight(graph: &WeightedGraph, path: &[usize]) -> Option<f64> {
    let mut total = 0.0;
    for w in path.windows(2) {
        let e = graph.adjacency[w[0]].iter().filter(|(to, _)| *to == w[1]).map(|&(_, wt)| wt).fold(f64::INFINITY, f64::min);
        if !e.is_finite() {
            return None;
        }
        total += e;
    }
    Some(total)
}

/// Minimum-weight path; among equal weights the lexicographically smallest
/// node sequence. `None` when `dst` is unreachable.
pub fn dijkstra_route(graph: &WeightedGraph, src: usize, dst: usize) -> Option<Vec<usize>> {
    let n = graph.num_nodes();
    if src >= n || dst >= n {
        return None;
    }
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    heap.push(Reverse(Frontier { dist: 0.0, path: vec![src] }));
    while let Some(Reverse(f)) = heap.pop() {
        let u = *f.path.last().unwrap();
        if settled[u] {
            continue;
        }
        settled[u] = true;
        if u == dst {
            return Some(f.path);
        }
        for &(v, w) in &graph.adjacency[u] {
            if !settled[v] {
                let mut path = f.path.clone();
                path.push(v);
                heap.push(Reverse(Frontier { dist: f.dist + w, path }));
            }
        }
    }
    None
}

/// Graph of live links with `1/R` weights where gateways only receive, so
/// no path transits the ground.
pub fn routing_graph(snapshot: &Snapshot) -> WeightedGraph {
    let mut g = WeightedGraph::with_nodes(snapshot.num_nodes());
    for node in 0..snapshot.num_nodes() {
        for (link, kind) in snapshot.links_from(NodeId(node)) {
            if kind != LinkKind::Uplink && link.rate_bps > 0.0 {
                g.add_edge(node, link.to.0, 1.0 / link.rate_bps);
            }
        }
    }
    g
}

/// Full-knowledge baseline recomputed at every position update.
#[derive(Debug, Default)]
pub struct ShortestPathPolicy {
    graph: Option<WeightedGraph>,
    graph_t: f64,
    next_hop: HashMap<(NodeId, NodeId), Option<NodeId>>,
}

impl ShortestPathPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure_graph(&mut self, snapshot: &Snapshot) {
        if self.graph.is_none() || self.graph_t != snapshot.t {
            self.graph = Some(routing_graph(snapshot));
            self.graph_t = snapshot.t;
            self.next_hop.clear();
        }
    }

    pub fn next_hop(&mut self, snapshot: &Snapshot, node: NodeId, dst: NodeId) -> Option<NodeId> {
        self.ensure_graph(snapshot);
        let graph = self.graph.as_ref().unwrap();
        *self
            .next_hop
            .entry((node, dst))
            .or_insert_with(|| dijkstra_route(graph, node.0, dst.0).and_then(|p| p.get(1).map(|&v| NodeId(v))))
    }
}

impl RoutingPolicy for ShortestPathPolicy {
    fn route(&mut self, ctx: &RouteContext) -> Result<Decision, EngineError> {
        if ctx.outcome != Outcome::Forward {
            return Ok(Decision::NoRoute);
        }
        let slot = self.next_hop(ctx.snapshot, ctx.node, ctx.packet.dst).and_then(|next| ctx.snapshot.slot_of(ctx.node, next));
        Ok(slot.map_or(Decision::NoRoute, Decision::Forward))
    }

    fn on_topology_change(&mut self, snapshot: &Snapshot) -> Result<(), EngineError> {
        self.ensure_graph(snapshot);
        Ok(())
    }
}

/// `(1−α)·Q + α·(r + γ·max Q')`.
pub fn qrouting_update(q: f64, r: f64, next_max: f64, alpha: f64, gamma: f64) -> f64 {
    (1.0 - alpha) * q + alpha * (r + gamma * next_max)
}

/// Action values keyed by (state, destination); missing entries read as 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable {
    values: HashMap<(usize, usize), [f64; NUM_ACTIONS]>,
}

impl QTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, state: usize, dst: usize) -> [f64; NUM_ACTIONS] {
        self.values.get(&(state, dst)).copied().unwrap_or([0.0; NUM_ACTIONS])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest value among the actions allowed by `mask`, 0 if none is.
    pub fn max_value(&self, state: usize, dst: usize, mask: &[bool; NUM_ACTIONS]) -> f64 {
        let q = self.get(state, dst);
        masked_argmax(&q, mask).map_or(0.0, |a| q[a])
    }

    /// One tabular update with a bootstrapped `next_max`.
    pub fn update(&mut self, state: usize, dst: usize, action: usize, r: f64, next_max: f64, alpha: f64, gamma: f64) {
        let e = self.values.entry((state, dst)).or_insert([0.0; NUM_ACTIONS]);
        e[action] = qrouting_update(e[action], r, next_max, alpha, gamma);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QRoutingConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub exploration: Exploration,
    pub reward: RewardWeights,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
struct QPending {
    sat: usize,
    action: usize,
    dist_i_d_m: f64,
    dist_i_j_m: f64,
    d_max_m: f64,
}

/// Tabular agent per satellite, retained across topology changes.
#[derive(Debug)]
pub struct QRoutingPolicy {
    cfg: QRoutingConfig,
    table: QTable,
    pending: HashMap<u64, QPending>,
    rng: ChaCha8Rng,
    updates: u64,
}

impl QRoutingPolicy {
    pub fn new(cfg: QRoutingConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(3);
        QRoutingPolicy { cfg, table: QTable::new(), pending: HashMap::new(), rng, updates: 0 }
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }
}

impl RoutingPolicy for QRoutingPolicy {
    fn route(&mut self, ctx: &RouteContext) -> Result<Decision, EngineError> {
        let dst = ctx.packet.dst;
        if let (Some(arrival), Some(p)) = (ctx.arrival, self.pending.remove(&ctx.packet.id)) {
            let delivered = ctx.outcome == Outcome::Deliver;
            let r = compute_reward(
                &self.cfg.reward,
                &RewardInputs {
                    queue_time_s: arrival.queue_time_s,
                    dist_i_d_m: p.dist_i_d_m,
                    dist_j_d_m: ctx.snapshot.distance(ctx.node, dst),
                    dist_i_j_m: p.dist_i_j_m,
                    d_max_m: p.d_max_m,
                    looped: arrival.looped,
                    delivered,
                    unavailable: false,
                },
            )
            .total;
            let next_max = if delivered { 0.0 } else { self.table.max_value(ctx.node.0, dst.0, &ctx.snapshot.available_slots(ctx.node)) };
            let gamma = if delivered { 0.0 } else { self.cfg.gamma };
            self.table.update(p.sat, dst.0, p.action, r, next_max, self.cfg.alpha, gamma);
            self.updates += 1;
        }
        if ctx.outcome != Outcome::Forward {
            return Ok(Decision::NoRoute);
        }
        let mask = ctx.snapshot.available_slots(ctx.node);
        let live: Vec<usize> = (0..NUM_ACTIONS).filter(|&a| mask[a]).collect();
        if live.is_empty() {
            self.pending.remove(&ctx.packet.id);
            return Ok(Decision::NoRoute);
        }
        let eps = self.cfg.exploration.at(ctx.t);
        let action = if eps > 0.0 && self.rng.random::<f64>() < eps {
            live[self.rng.random_range(0..live.len())]
        } else {
            masked_argmax(&self.table.get(ctx.node.0, dst.0), &mask).unwrap()
        };
        let link = ctx.snapshot.slot_link(ctx.node, action).expect("masked action has a live link");
        self.pending.insert(
            ctx.packet.id,
            QPending {
                sat: ctx.node.0,
                action,
                dist_i_d_m: ctx.snapshot.distance(ctx.node, dst),
                dist_i_j_m: link.distance_m,
                d_max_m: self.cfg.reward.d_max_m.unwrap_or(ctx.snapshot.max_isl_distance_m),
            },
        );
        Ok(Decision::Forward(action))
    }
}
