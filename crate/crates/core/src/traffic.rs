//! Gateway-to-gateway traffic: load normalization and Poisson block arrivals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::orbit::NodeId;
use crate::topology::Snapshot;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("gateway node {0} has a zero-rate ground link")]
    DeadGroundLink(NodeId),
    #[error("at least two gateways are needed to carry traffic")]
    TooFewGateways,
    #[error("invalid traffic parameter: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub size_bits: f64,
    pub created_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficConfig {
    /// Total offered load relative to the maximum supported load.
    pub load_fraction: f64,
    pub block_bits: f64,
}

impl TrafficConfig {
    pub fn validate(&self) -> Result<(), TrafficError> {
        if !(self.load_fraction.is_finite() && self.load_fraction >= 0.0) {
            return Err(TrafficError::Invalid("load_fraction must be >= 0"));
        }
        if !(self.block_bits.is_finite() && self.block_bits > 0.0) {
            return Err(TrafficError::Invalid("block_bits must be > 0"));
        }
        Ok(())
    }

    /// Per-gateway uplink rates under an equal split of `ℓ·λ*`.
    pub fn uplink_rates(&self, lambda_star: f64, num_gateways: usize) -> Vec<f64> {
        vec![self.load_fraction * lambda_star / num_gateways as f64; num_gateways]
    }
}

/// Largest total load for which every gateway's downlink aggregate, with
/// uplinks split equally across the other gateways, fits both GSL directions.
///
/// With equal uplink rates each gateway receives `λ*/|G|`, so the binding
/// gateway is the one with the smallest ground-link rate.
pub fn max_supported_load(snapshot: &Snapshot) -> Result<f64, TrafficError> {
    let num_gw = snapshot.gateway_sat.len();
    let mut tightest = f64::INFINITY;
    for g in 0..num_gw {
        let gw = snapshot.gateway_node(g);
        let sat = snapshot.gateway_sat[g];
        let up = snapshot.link(gw, sat).map_or(0.0, |l| l.rate_bps);
        let down = snapshot.link(sat, gw).map_or(0.0, |l| l.rate_bps);
        let r = up.min(down);
        if r <= 0.0 {
            return Err(TrafficError::DeadGroundLink(gw));
        }
        tightest = tightest.min(r);
    }
    ground_limited_load(&vec![tightest; num_gw])
}

/// `λ*` from explicit per-gateway binding GSL rates.
pub fn ground_limited_load(gsl_rates: &[f64]) -> Result<f64, TrafficError> {
    if gsl_rates.is_empty() {
        return Err(TrafficError::TooFewGateways);
    }
    let min = gsl_rates.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return Err(TrafficError::Invalid("ground-link rate must be > 0"));
    }
    Ok(gsl_rates.len() as f64 * min)
}

/// Downlink aggregate toward each gateway given uplink rates.
pub fn downlink_rates(uplink: &[f64]) -> Vec<f64> {
    let n = uplink.len();
    let total: f64 = uplink.iter().sum();
    uplink.iter().map(|u| (total - u) / (n as f64 - 1.0)).collect()
}

/// Poisson block arrivals, sorted by creation time.
///
/// Each ordered gateway pair is an independent stream with rate
/// `λ_UL/(B(|G|−1))` blocks per second, seeded from `(seed, pair index)`.
/// Ties are ordered by `(src, dst)`; ids are assigned after sorting.
pub fn generate_arrivals(
    uplink_rates: &[f64],
    gateway_nodes: &[NodeId],
    block_bits: f64,
    seed: u64,
    horizon_s: f64,
) -> Vec<Packet> {
    assert_eq!(uplink_rates.len(), gateway_nodes.len());
    let n = gateway_nodes.len();
    let mut out = Vec::new();
    if n < 2 || horizon_s <= 0.0 {
        return out;
    }
    for s in 0..n {
        for d in 0..n {
            if s == d {
                continue;
            }
            let rate = uplink_rates[s] / (block_bits * (n as f64 - 1.0));
            if !(rate > 0.0) {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((s * n + d) as u64);
            let exp = Exp::new(rate).expect("positive rate");
            let mut t = 0.0;
            loop {
                t += exp.sample(&mut rng);
                if t >= horizon_s {
                    break;
                }
                out.push(Packet {
                    id: 0,
                    src: gateway_nodes[s],
                    dst: gateway_nodes[d],
                    size_bits: block_bits,
                    created_t: t,
                });
            }
        }
    }
    out.sort_by(|a, b| a.created_t.total_cmp(&b.created_t).then(a.src.cmp(&b.src)).then(a.dst.cmp(&b.dst)));
    for (k, p) in out.iter_mut().enumerate() {
        p.id = k as u64;
    }
    out
}

pub const PACKET_TRACE_HEADER: [&str; 4] = ["id", "src", "dst", "created_t"];

pub fn write_packet_trace<W: std::io::Write>(packets: &[Packet], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PACKET_TRACE_HEADER)?;
    for p in packets {
        w.write_record([p.id.to_string(), p.src.to_string(), p.dst.to_string(), p.created_t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
