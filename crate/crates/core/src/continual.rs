//! Online model alignment: anticipation toward the in-plane predecessor,
//! ring aggregation within a plane, and global averaging of plane models.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mlp::{MeanAccumulator, MlpError, QNetwork};
use crate::orbit::ConstellationSpec;
use crate::topology::{Slot, Snapshot};

#[derive(Debug, Error)]
pub enum ContinualError {
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error("expected {expected} agent networks, got {got}")]
    AgentCount { expected: usize, got: usize },
    #[error("no cluster models to aggregate")]
    NoClusters,
    #[error("invalid schedule: {0}")]
    Schedule(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoundKind {
    Anticipation,
    Cluster,
    Global,
}

impl RoundKind {
    /// Tie order when rounds coincide.
    pub fn order(self) -> u8 {
        match self {
            RoundKind::Anticipation => 0,
            RoundKind::Cluster => 1,
            RoundKind::Global => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RoundKind::Anticipation => "anticipation",
            RoundKind::Cluster => "cluster",
            RoundKind::Global => "global",
        }
    }
}

/// Round periods in seconds; `None` disables a mechanism.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AggregationSchedule {
    pub anticipation_period_s: Option<f64>,
    pub cluster_period_s: Option<f64>,
    pub global_period_s: Option<f64>,
}

impl AggregationSchedule {
    pub fn validate(&self) -> Result<(), ContinualError> {
        for p in [self.anticipation_period_s, self.cluster_period_s, self.global_period_s].into_iter().flatten() {
            if !(p.is_finite() && p > 0.0) {
                return Err(ContinualError::Schedule("periods must be > 0"));
            }
        }
        Ok(())
    }

    /// Human-readable notes when periods are not ordered anticipation ≤ cluster ≤ global.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let pairs = [
            ("anticipation", self.anticipation_period_s, "cluster", self.cluster_period_s),
            ("cluster", self.cluster_period_s, "global", self.global_period_s),
        ];
        for (a, pa, b, pb) in pairs {
            if let (Some(x), Some(y)) = (pa, pb) {
                if x > y {
                    out.push(format!("{a} period {x} s exceeds {b} period {y} s"));
                }
            }
        }
        out
    }
}

/// Round times `k·p < horizon` for `k ≥ 1`, sorted by time then kind order.
pub fn schedule_rounds(schedule: &AggregationSchedule, horizon_s: f64) -> Vec<(f64, RoundKind)> {
    let mut out = Vec::new();
    let limit = horizon_s * (1.0 - 1e-12);
    for (period, kind) in [
        (schedule.anticipation_period_s, RoundKind::Anticipation),
        (schedule.cluster_period_s, RoundKind::Cluster),
        (schedule.global_period_s, RoundKind::Global),
    ] {
        let Some(p) = period else { continue };
        let mut k = 1u64;
        loop {
            let t = k as f64 * p;
            if t >= limit {
                break;
            }
            out.push((t, kind));
            k += 1;
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.order().cmp(&b.1.order())));
    out
}

/// New model for the predecessor: the elementwise mean of both nets.
pub fn anticipate(ahead: &QNetwork, behind: &QNetwork) -> Result<QNetwork, ContinualError> {
    if ahead.dims() != behind.dims() {
        return Err(MlpError::Shape(ahead.dims(), behind.dims()).into());
    }
    let mut out = behind.clone();
    for (o, a) in out.params_mut().zip(ahead.params()) {
        *o = 0.5 * (*o + a);
    }
    Ok(out)
}

fn check_agents(spec: &ConstellationSpec, nets: &[QNetwork]) -> Result<(), ContinualError> {
    if nets.len() != spec.num_satellites() {
        return Err(ContinualError::AgentCount { expected: spec.num_satellites(), got: nets.len() });
    }
    Ok(())
}

/// Every satellite sends its model to its predecessor at once; each
/// predecessor averages it with its own. Returns the number of updated agents.
pub fn anticipation_round(spec: &ConstellationSpec, nets: &mut [QNetwork]) -> Result<usize, ContinualError> {
    check_agents(spec, nets)?;
    let per = spec.sats_per_plane;
    if per < 2 {
        return Ok(0);
    }
    let old = nets.to_vec();
    for plane in 0..spec.planes {
        for slot in 0..per {
            let me = spec.satellite_id(plane, slot).0;
            let behind = spec.satellite_id(plane, (slot + per - 1) % per).0;
            nets[behind] = anticipate(&old[me], &old[behind])?;
        }
    }
    Ok(spec.num_satellites())
}

/// Mean of a plane's models as a running mean passed hop by hop around the ring.
pub fn cluster_aggregate(ring: &[&QNetwork]) -> Result<QNetwork, ContinualError> {
    let mut acc = MeanAccumulator::default();
    for net in ring {
        acc.push(net)?;
    }
    acc.finish().ok_or(ContinualError::NoClusters)
}

fn ring_intact(spec: &ConstellationSpec, snapshot: &Snapshot, plane: usize) -> bool {
    spec.sats_per_plane < 2
        || (0..spec.sats_per_plane).all(|s| snapshot.slot_link(spec.satellite_id(plane, s), Slot::Ahead as usize).is_some())
}

/// Cluster models per plane; `None` for planes whose ring is broken.
pub fn cluster_models(spec: &ConstellationSpec, snapshot: &Snapshot, nets: &[QNetwork]) -> Result<Vec<Option<QNetwork>>, ContinualError> {
    check_agents(spec, nets)?;
    (0..spec.planes)
        .map(|plane| {
            if !ring_intact(spec, snapshot, plane) {
                return Ok(None);
            }
            let ring: Vec<&QNetwork> = (0..spec.sats_per_plane).map(|s| &nets[spec.satellite_id(plane, s).0]).collect();
            cluster_aggregate(&ring).map(Some)
        })
        .collect()
}

/// Replaces each agent's model by its plane's cluster model. Planes with a
/// broken ring keep their models. Returns the number of updated agents.
pub fn cluster_round(spec: &ConstellationSpec, snapshot: &Snapshot, nets: &mut [QNetwork]) -> Result<usize, ContinualError> {
    let clusters = cluster_models(spec, snapshot, nets)?;
    let mut updated = 0;
    for (plane, c) in clusters.iter().enumerate() {
        if let Some(c) = c {
            for s in 0..spec.sats_per_plane {
                nets[spec.satellite_id(plane, s).0].copy_from(c)?;
                updated += 1;
            }
        }
    }
    Ok(updated)
}

pub fn global_fedavg(clusters: &[&QNetwork]) -> Result<QNetwork, ContinualError> {
    if clusters.is_empty() {
        return Err(ContinualError::NoClusters);
    }
    Ok(QNetwork::average(clusters)?)
}

/// Cluster models averaged at the parameter server and sent to every agent.
/// Returns the global model, or `None` when no plane ring is intact.
pub fn global_round(spec: &ConstellationSpec, snapshot: &Snapshot, nets: &mut [QNetwork]) -> Result<Option<QNetwork>, ContinualError> {
    let clusters = cluster_models(spec, snapshot, nets)?;
    let live: Vec<&QNetwork> = clusters.iter().flatten().collect();
    if live.is_empty() {
        return Ok(None);
    }
    let global = global_fedavg(&live)?;
    for n in nets.iter_mut() {
        n.copy_from(&global)?;
    }
    Ok(Some(global))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::McsTable;
    use crate::mlp::DEFAULT_DIMS;
    use crate::orbit::gateways;
    use crate::topology::tests::default_radios;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn nets(n: usize, seed: u64) -> Vec<QNetwork> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| QNetwork::new_random(&DEFAULT_DIMS, &mut r)).collect()
    }

    fn constant(v: f64) -> QNetwork {
        let mut n = QNetwork::zeros(&DEFAULT_DIMS);
        n.params_mut().for_each(|p| *p = v);
        n
    }

    /// Plain per-parameter mean written without the accumulator.
    fn direct_mean(nets: &[&QNetwork]) -> Vec<f64> {
        let mut sum = vec![0.0; nets[0].num_params()];
        for n in nets {
            for (s, p) in sum.iter_mut().zip(n.params()) {
                *s += p;
            }
        }
        sum.iter().map(|s| s / nets.len() as f64).collect()
    }

    fn close(a: &QNetwork, b: &[f64], tol: f64) -> bool {
        a.params().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn anticipation_examples() {
        let a = nets(2, 1);
        assert_eq!(anticipate(&a[0], &a[0]).unwrap(), a[0]);
        assert_eq!(anticipate(&constant(2.0), &constant(0.0)).unwrap(), constant(1.0));
        let got = anticipate(&a[0], &a[1]).unwrap();
        for ((g, x), y) in got.params().zip(a[0].params()).zip(a[1].params()) {
            assert_eq!(g, (x + y) / 2.0);
        }
        assert!(anticipate(&a[0], &QNetwork::zeros(&[28, 8, 4])).is_err());
    }

    #[test]
    fn cluster_examples() {
        let x = nets(1, 2).pop().unwrap();
        assert_eq!(cluster_aggregate(&[&x, &x, &x, &x]).unwrap(), x);
        let mut neg = x.clone();
        neg.scale(-1.0);
        let zero = cluster_aggregate(&[&x, &neg]).unwrap();
        assert!(zero.params().all(|p| p == 0.0));
        let many = nets(20, 3);
        let refs: Vec<&QNetwork> = many.iter().collect();
        assert!(close(&cluster_aggregate(&refs).unwrap(), &direct_mean(&refs), 1e-12));
    }

    #[test]
    fn cluster_is_permutation_invariant() {
        let many = nets(11, 4);
        let refs: Vec<&QNetwork> = many.iter().collect();
        let base = cluster_aggregate(&refs).unwrap();
        for start in 1..11 {
            let rotated: Vec<&QNetwork> = refs[start..].iter().chain(&refs[..start]).copied().collect();
            let other = cluster_aggregate(&rotated).unwrap();
            assert!(base.params().zip(other.params()).all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn global_examples() {
        let c = nets(7, 5);
        assert_eq!(global_fedavg(&[&c[0]]).unwrap(), c[0]);
        let refs: Vec<&QNetwork> = c.iter().collect();
        assert!(close(&global_fedavg(&refs).unwrap(), &direct_mean(&refs), 1e-12));
        assert!(global_fedavg(&[]).is_err());
    }

    #[test]
    fn rounds_on_kepler() {
        let spec = ConstellationSpec::preset("kepler").unwrap();
        let snap = Snapshot::build(&spec, &gateways(2), &default_radios(), &McsTable::default(), 0.0, None).unwrap();
        let mut agents = nets(140, 6);
        cluster_round(&spec, &snap, &mut agents).unwrap();
        for plane in 0..7 {
            let first = &agents[spec.satellite_id(plane, 0).0];
            for s in 1..20 {
                assert_eq!(&agents[spec.satellite_id(plane, s).0], first);
            }
        }
        global_round(&spec, &snap, &mut agents).unwrap().unwrap();
        let text = agents[0].to_json();
        assert!(agents.iter().all(|a| a.to_json() == text));

        // equal models are a fixed point of a full anticipation pass
        let same = vec![agents[0].clone(); 140];
        let mut after = same.clone();
        assert_eq!(anticipation_round(&spec, &mut after).unwrap(), 140);
        assert_eq!(after, same);
    }

    #[test]
    fn anticipation_round_reads_old_models() {
        let spec = ConstellationSpec { planes: 1, sats_per_plane: 3, ..ConstellationSpec::preset("kepler").unwrap() };
        let old = vec![constant(0.0), constant(3.0), constant(6.0)];
        let mut new = old.clone();
        anticipation_round(&spec, &mut new).unwrap();
        // slot k takes the mean of itself and slot k+1 as they were before the round
        assert_eq!(new, vec![constant(1.5), constant(4.5), constant(3.0)]);
    }

    #[test]
    fn broken_ring_aborts_its_plane() {
        let spec = ConstellationSpec::preset("kepler").unwrap();
        let mut radios = default_radios();
        radios.isl.tx_power_w = 0.0;
        let snap = Snapshot::build(&spec, &gateways(2), &radios, &McsTable::default(), 0.0, None).unwrap();
        let mut agents = nets(140, 7);
        let before = agents.clone();
        assert_eq!(cluster_round(&spec, &snap, &mut agents).unwrap(), 0);
        assert_eq!(agents, before);
        assert!(global_round(&spec, &snap, &mut agents).unwrap().is_none());
    }

    #[test]
    fn schedule_examples() {
        assert!(schedule_rounds(&AggregationSchedule::default(), 100.0).is_empty());
        let spec = ConstellationSpec::preset("kepler").unwrap();
        let period = spec.period_s();
        let s = AggregationSchedule { anticipation_period_s: Some(period / 20.0), ..Default::default() };
        assert_eq!(schedule_rounds(&s, period).len(), 19);
        let s = AggregationSchedule { anticipation_period_s: Some(1.0), cluster_period_s: Some(2.0), global_period_s: Some(2.0) };
        let r = schedule_rounds(&s, 3.0);
        assert_eq!(r, vec![(1.0, RoundKind::Anticipation), (2.0, RoundKind::Anticipation), (2.0, RoundKind::Cluster), (2.0, RoundKind::Global)]);
        let bad = AggregationSchedule { anticipation_period_s: Some(5.0), cluster_period_s: Some(1.0), global_period_s: None };
        assert_eq!(bad.warnings().len(), 1);
        assert!(AggregationSchedule { global_period_s: Some(0.0), ..Default::default() }.validate().is_err());
    }
}
