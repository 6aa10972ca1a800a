//! Time-varying constellation graph: greedy inter-satellite matching,
//! closest-satellite ground links, link rates and the weighted routing graph.

use std::io::Write;

use crate::link::{select_rate, LinkError, McsTable, RadioParams};
use crate::orbit::{distance, propagate, ConstellationSpec, Gateway, NodeId, NodePosition};

/// Neighbour slot of a satellite; also the action index of a routing decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    /// In-plane successor (direction of motion).
    Ahead = 0,
    /// In-plane predecessor.
    Behind = 1,
    East = 2,
    West = 3,
}

impl Slot {
    pub const ALL: [Slot; 4] = [Slot::Ahead, Slot::Behind, Slot::East, Slot::West];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IslKind {
    IntraPlane,
    InterPlane,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IslEdge {
    pub a: NodeId,
    pub b: NodeId,
    pub kind: IslKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSet {
    /// Undirected ISLs, each stored once with `a < b`.
    pub isl_edges: Vec<IslEdge>,
    /// `(gateway, satellite)` pairs, one per gateway in gateway order.
    pub gsl_edges: Vec<(NodeId, NodeId)>,
    /// Per satellite, the neighbour in each [`Slot`].
    pub neighbors: Vec<[Option<NodeId>; 4]>,
}

impl EdgeSet {
    pub fn isl_degree(&self, sat: NodeId) -> usize {
        self.isl_edges.iter().filter(|e| e.a == sat || e.b == sat).count()
    }
}

/// In-plane rings plus greedy east/west inter-plane matching.
///
/// Satellites are visited by ascending id. Each claims the closest satellite
/// of the adjacent plane whose opposite pitch antenna is still free, first to
/// the east and then to the west. Plane adjacency wraps around.
pub fn greedy_isl_match(spec: &ConstellationSpec, positions: &[NodePosition]) -> EdgeSet {
    let n = spec.num_satellites();
    let per = spec.sats_per_plane;
    let mut neighbors = vec![[None; 4]; n];
    let mut isl_edges = Vec::new();

    if per >= 2 {
        for plane in 0..spec.planes {
            for slot in 0..per {
                let me = spec.satellite_id(plane, slot);
                let ahead = spec.satellite_id(plane, (slot + 1) % per);
                let behind = spec.satellite_id(plane, (slot + per - 1) % per);
                neighbors[me.0][Slot::Ahead as usize] = Some(ahead);
                neighbors[me.0][Slot::Behind as usize] = Some(behind);
                // a two-satellite ring has a single edge
                if per > 2 || slot == 0 {
                    isl_edges.push(ordered(me, ahead, IslKind::IntraPlane));
                }
            }
        }
    }

    if spec.planes >= 2 {
        let linked = |nb: &[Option<NodeId>; 4], other: NodeId| nb.iter().any(|x| *x == Some(other));
        for id in 0..n {
            let me = NodeId(id);
            let (plane, _) = spec.plane_slot(me);
            let east_plane = (plane + 1) % spec.planes;
            let west_plane = (plane + spec.planes - 1) % spec.planes;
            for (my_slot, their_slot, target_plane) in [
                (Slot::East, Slot::West, east_plane),
                (Slot::West, Slot::East, west_plane),
            ] {
                if neighbors[id][my_slot as usize].is_some() {
                    continue;
                }
                let mut best: Option<(f64, NodeId)> = None;
                for s in 0..per {
                    let cand = spec.satellite_id(target_plane, s);
                    if neighbors[cand.0][their_slot as usize].is_some() || linked(&neighbors[id], cand) {
                        continue;
                    }
                    let d = distance(positions[id].ecef, positions[cand.0].ecef);
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, cand));
                    }
                }
                if let Some((_, cand)) = best {
                    neighbors[id][my_slot as usize] = Some(cand);
                    neighbors[cand.0][their_slot as usize] = Some(me);
                    isl_edges.push(ordered(me, cand, IslKind::InterPlane));
                }
            }
        }
    }

    EdgeSet { isl_edges, gsl_edges: Vec::new(), neighbors }
}

fn ordered(a: NodeId, b: NodeId, kind: IslKind) -> IslEdge {
    if a < b {
        IslEdge { a, b, kind }
    } else {
        IslEdge { a: b, b: a, kind }
    }
}

/// Elevation angle of `sat` seen from a ground point, in degrees.
pub fn elevation_deg(ground: [f64; 3], sat: [f64; 3]) -> f64 {
    let los = [sat[0] - ground[0], sat[1] - ground[1], sat[2] - ground[2]];
    let g = crate::orbit::norm(ground);
    let l = crate::orbit::norm(los);
    let cos_zenith = (los[0] * ground[0] + los[1] * ground[1] + los[2] * ground[2]) / (g * l);
    90.0 - cos_zenith.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Links every gateway to its closest satellite (lowest id on ties).
///
/// With an elevation mask, satellites below the mask are skipped unless none
/// is visible, in which case the plain argmin is used.
pub fn gsl_assign(positions: &[NodePosition], num_sats: usize, min_elevation_deg: Option<f64>) -> Vec<(NodeId, NodeId)> {
    assert!(num_sats >= 1);
    positions[num_sats..]
        .iter()
        .map(|gw| {
            let pick = |mask: Option<f64>| {
                let mut best: Option<(f64, usize)> = None;
                for (s, sat) in positions[..num_sats].iter().enumerate() {
                    if let Some(m) = mask {
                        if elevation_deg(gw.ecef, sat.ecef) < m {
                            continue;
                        }
                    }
                    let d = distance(gw.ecef, sat.ecef);
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, s));
                    }
                }
                best.map(|(_, s)| s)
            };
            let sat = min_elevation_deg.and_then(|m| pick(Some(m))).or_else(|| pick(None)).unwrap();
            (gw.node_id, NodeId(sat))
        })
        .collect()
}

/// Floor applied to ranges before the link budget.
pub const MIN_RANGE_M: f64 = 1.0;

/// Radio parameters per link family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioSet {
    pub isl: RadioParams,
    pub uplink: RadioParams,
    pub downlink: RadioParams,
}

impl Default for RadioSet {
    /// 10 W satellites and 20 W gateways, 26 cm satellite and 33 cm gateway
    /// dishes, 26 GHz ISL, 30 GHz uplink, 20 GHz downlink, 500 MHz everywhere.
    fn default() -> Self {
        let isl = RadioParams {
            tx_power_w: 10.0,
            carrier_hz: 26e9,
            tx_antenna_diameter_m: 0.26,
            rx_antenna_diameter_m: 0.26,
            antenna_efficiency: 0.6,
            bandwidth_hz: 500e6,
            system_noise_temp_k: 290.0,
        };
        RadioSet {
            isl,
            uplink: RadioParams { tx_power_w: 20.0, carrier_hz: 30e9, tx_antenna_diameter_m: 0.33, ..isl },
            downlink: RadioParams { carrier_hz: 20e9, rx_antenna_diameter_m: 0.33, ..isl },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub to: NodeId,
    pub rate_bps: f64,
    pub distance_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    IntraPlane,
    InterPlane,
    Uplink,
    Downlink,
}

impl LinkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkKind::IntraPlane => "intra",
            LinkKind::InterPlane => "inter",
            LinkKind::Uplink => "gsl-up",
            LinkKind::Downlink => "gsl-down",
        }
    }
}

/// Everything the engine and policies need about one position epoch.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub num_satellites: usize,
    pub positions: Vec<NodePosition>,
    /// Geocentric (lat, lon) in degrees per node.
    pub lat_lon: Vec<(f64, f64)>,
    pub edges: EdgeSet,
    /// Satellite serving each gateway, indexed by gateway order.
    pub gateway_sat: Vec<NodeId>,
    /// Gateways attached to each satellite.
    pub sat_gateways: Vec<Vec<NodeId>>,
    pub max_isl_distance_m: f64,
    links: Vec<Vec<(Link, LinkKind)>>,
}

impl Snapshot {
    pub fn build(
        spec: &ConstellationSpec,
        gateways: &[Gateway],
        radios: &RadioSet,
        table: &McsTable,
        t: f64,
        min_elevation_deg: Option<f64>,
    ) -> Result<Snapshot, LinkError> {
        let positions = propagate(spec, gateways, t);
        let n = spec.num_satellites();
        let mut edges = greedy_isl_match(spec, &positions);
        edges.gsl_edges = gsl_assign(&positions, n, min_elevation_deg);

        let mut links: Vec<Vec<(Link, LinkKind)>> = vec![Vec::new(); positions.len()];
        let mut max_isl = 0.0f64;
        for e in &edges.isl_edges {
            let d = distance(positions[e.a.0].ecef, positions[e.b.0].ecef);
            max_isl = max_isl.max(d);
            // zero-phased star planes meet over the poles
            let rate = select_rate(&radios.isl, table, d.max(MIN_RANGE_M))?;
            let kind = match e.kind {
                IslKind::IntraPlane => LinkKind::IntraPlane,
                IslKind::InterPlane => LinkKind::InterPlane,
            };
            links[e.a.0].push((Link { to: e.b, rate_bps: rate, distance_m: d }, kind));
            links[e.b.0].push((Link { to: e.a, rate_bps: rate, distance_m: d }, kind));
        }
        let mut gateway_sat = Vec::with_capacity(gateways.len());
        let mut sat_gateways = vec![Vec::new(); n];
        for &(gw, sat) in &edges.gsl_edges {
            let d = distance(positions[gw.0].ecef, positions[sat.0].ecef);
            let up = select_rate(&radios.uplink, table, d.max(MIN_RANGE_M))?;
            let down = select_rate(&radios.downlink, table, d.max(MIN_RANGE_M))?;
            links[gw.0].push((Link { to: sat, rate_bps: up, distance_m: d }, LinkKind::Uplink));
            links[sat.0].push((Link { to: gw, rate_bps: down, distance_m: d }, LinkKind::Downlink));
            gateway_sat.push(sat);
            sat_gateways[sat.0].push(gw);
        }
        let lat_lon = positions.iter().map(NodePosition::lat_lon_deg).collect();
        Ok(Snapshot {
            t,
            num_satellites: n,
            positions,
            lat_lon,
            edges,
            gateway_sat,
            sat_gateways,
            max_isl_distance_m: max_isl,
            links,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn is_satellite(&self, node: NodeId) -> bool {
        node.0 < self.num_satellites
    }

    pub fn gateway_index(&self, node: NodeId) -> usize {
        node.0 - self.num_satellites
    }

    pub fn gateway_node(&self, index: usize) -> NodeId {
        NodeId(self.num_satellites + index)
    }

    pub fn neighbor(&self, sat: NodeId, slot: usize) -> Option<NodeId> {
        self.edges.neighbors[sat.0][slot]
    }

    /// Live ISL in `slot` of a satellite; `None` if absent or zero-rate.
    pub fn slot_link(&self, sat: NodeId, slot: usize) -> Option<Link> {
        let nb = self.neighbor(sat, slot)?;
        self.link(sat, nb).filter(|l| l.rate_bps > 0.0)
    }

    pub fn available_slots(&self, sat: NodeId) -> [bool; 4] {
        std::array::from_fn(|k| self.slot_link(sat, k).is_some())
    }

    /// First slot whose neighbour is `to`.
    pub fn slot_of(&self, sat: NodeId, to: NodeId) -> Option<usize> {
        self.edges.neighbors[sat.0].iter().position(|n| *n == Some(to))
    }

    pub fn link(&self, from: NodeId, to: NodeId) -> Option<Link> {
        self.links[from.0].iter().find(|(l, _)| l.to == to).map(|(l, _)| *l)
    }

    pub fn links_from(&self, node: NodeId) -> impl Iterator<Item = (Link, LinkKind)> + '_ {
        self.links[node.0].iter().copied()
    }

    /// Satellite serving the given gateway node.
    pub fn serving_sat(&self, gateway: NodeId) -> NodeId {
        self.gateway_sat[self.gateway_index(gateway)]
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        distance(self.positions[a.0].ecef, self.positions[b.0].ecef)
    }

    /// Writes `t,node_a,node_b,kind,distance_m,rate_bps`; ISLs once, GSLs per direction.
    pub fn write_csv_rows<W: Write>(&self, out: &mut csv::Writer<W>) -> csv::Result<()> {
        for (from, list) in self.links.iter().enumerate() {
            for (l, kind) in list {
                let isl = matches!(kind, LinkKind::IntraPlane | LinkKind::InterPlane);
                if isl && l.to.0 < from {
                    continue;
                }
                out.write_record([
                    self.t.to_string(),
                    from.to_string(),
                    l.to.to_string(),
                    kind.as_str().to_string(),
                    l.distance_m.to_string(),
                    l.rate_bps.to_string(),
                ])?;
            }
        }
        Ok(())
    }
}

pub const TOPOLOGY_CSV_HEADER: [&str; 6] = ["t", "node_a", "node_b", "kind", "distance_m", "rate_bps"];

/// Directed weighted graph with weight `1/R` seconds per bit.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    pub adjacency: Vec<Vec<(usize, f64)>>,
}

impl WeightedGraph {
    pub fn with_nodes(n: usize) -> Self {
        WeightedGraph { adjacency: vec![Vec::new(); n] }
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn add_edge(&mut self, from: usize, to: usize, weight: f64) {
        self.adjacency[from].push((to, weight));
    }
}

/// Routing graph from a snapshot; zero-rate links are left out.
pub fn build_graph(snapshot: &Snapshot) -> WeightedGraph {
    let mut g = WeightedGraph::with_nodes(snapshot.num_nodes());
    for from in 0..snapshot.num_nodes() {
        for (l, _) in snapshot.links_from(NodeId(from)) {
            if l.rate_bps > 0.0 {
                g.add_edge(from, l.to.0, 1.0 / l.rate_bps);
            }
        }
    }
    g
}
