//! Local observation of a satellite holding a packet.

use thiserror::Error;

use crate::mlp::OBS_DIM;
use crate::orbit::NodeId;
use crate::topology::Snapshot;

pub type Observation = [f64; OBS_DIM];

#[derive(Debug, Error, PartialEq)]
pub enum StateError {
    #[error("q_max must be >= 2 for the log encoding, got {0}")]
    QueueCapacity(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateConfig {
    /// Top congestion level `C*`.
    pub c_star: u32,
    /// Coordinate granularity in degrees.
    pub sigma_deg: f64,
}

impl Default for StateConfig {
    fn default() -> Self {
        StateConfig { c_star: 10, sigma_deg: 20.0 }
    }
}

impl StateConfig {
    /// Stand-in for an infinite congestion level.
    pub fn sentinel(&self) -> f64 {
        f64::from(self.c_star + 1)
    }
}

/// `min(C*, ⌊C*·log10(q+1)/log10(q_max)⌋)`.
pub fn encode_congestion(q: usize, q_max: usize, c_star: u32) -> Result<u32, StateError> {
    if q_max < 2 {
        return Err(StateError::QueueCapacity(q_max));
    }
    let level = (f64::from(c_star) * ((q + 1) as f64).log10() / (q_max as f64).log10()).floor();
    Ok((level as u32).min(c_star))
}

/// Longitude difference wrapped to `[-180, 180)`.
pub fn wrap_lon(d: f64) -> f64 {
    (d + 180.0).rem_euclid(360.0) - 180.0
}

/// `(Δlat, Δlon)/σ` from `from` to `to`, latitude clamped to ±90°.
pub fn relative_coords(from: (f64, f64), to: (f64, f64), sigma: f64) -> (f64, f64) {
    ((to.0 - from.0).clamp(-90.0, 90.0) / sigma, wrap_lon(to.1 - from.1) / sigma)
}

/// 16 neighbour congestion levels, 8 relative neighbour coordinates, 2 own
/// coordinates and 2 coordinates of the destination's serving satellite
/// relative to `node`.
pub fn encode_state(
    node: NodeId,
    dst_gateway: NodeId,
    snapshot: &Snapshot,
    counters: &[[u32; 4]],
    q_max: usize,
    cfg: &StateConfig,
) -> Result<Observation, StateError> {
    if q_max < 2 {
        return Err(StateError::QueueCapacity(q_max));
    }
    let mut obs = [0.0; OBS_DIM];
    let here = snapshot.lat_lon[node.0];
    let sentinel = cfg.sentinel();
    for k in 0..4 {
        match snapshot.slot_link(node, k) {
            Some(link) => {
                let j = link.to;
                for m in 0..4 {
                    obs[4 * k + m] = if snapshot.slot_link(j, m).is_some() {
                        f64::from(encode_congestion(counters[j.0][m] as usize, q_max, cfg.c_star)?)
                    } else {
                        sentinel
                    };
                }
                let (dlat, dlon) = relative_coords(here, snapshot.lat_lon[j.0], cfg.sigma_deg);
                obs[16 + 2 * k] = dlat;
                obs[16 + 2 * k + 1] = dlon;
            }
            None => obs[4 * k..4 * k + 4].fill(sentinel),
        }
    }
    obs[24] = (here.0 + 90.0) / cfg.sigma_deg;
    obs[25] = (here.1 + 180.0) / cfg.sigma_deg;
    let target = snapshot.serving_sat(dst_gateway);
    let (dlat, dlon) = relative_coords(here, snapshot.lat_lon[target.0], cfg.sigma_deg);
    obs[26] = dlat;
    obs[27] = dlon;
    Ok(obs)
}

/// Whether every field lies in its declared range or equals the sentinel.
pub fn observation_in_range(obs: &Observation, cfg: &StateConfig) -> bool {
    let s = cfg.sigma_deg;
    let c = f64::from(cfg.c_star);
    let congestion = obs[..16].iter().all(|&v| (v >= 0.0 && v <= c && v.fract() == 0.0) || v == cfg.sentinel());
    let rel = |k: usize| obs[k].abs() <= 90.0 / s + 1e-12 && obs[k + 1] >= -180.0 / s - 1e-12 && obs[k + 1] <= 180.0 / s + 1e-12;
    let own = obs[24] >= 0.0 && obs[24] <= 180.0 / s + 1e-12 && obs[25] >= 0.0 && obs[25] <= 360.0 / s + 1e-12;
    congestion && (16..24).step_by(2).all(rel) && rel(26) && own
}
