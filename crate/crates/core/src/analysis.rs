//! Model similarity, latency distributions and link-load summaries.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use thiserror::Error;

use crate::drl::replay::ReplayBuffer;
use crate::drl::state::{Observation, StateConfig};
use crate::mlp::{MlpError, QNetwork, OBS_DIM};
use crate::orbit::NodeId;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("representation has zero norm after centering")]
    ZeroNorm,
    #[error("representations differ in row count: {0} vs {1}")]
    Rows(usize, usize),
    #[error("need at least {0} samples")]
    TooFew(usize),
    #[error(transparent)]
    Mlp(#[from] MlpError),
}

/// Column-centered `n × d` representation with its own Gram norm cached.
#[derive(Debug, Clone, PartialEq)]
pub struct Representation {
    n: usize,
    d: usize,
    data: Vec<f64>,
    self_norm: f64,
}

impl Representation {
    /// Centers the rows' columns.
    pub fn new(rows: &[Vec<f64>]) -> Result<Self, AnalysisError> {
        let n = rows.len();
        if n < 2 {
            return Err(AnalysisError::TooFew(2));
        }
        let d = rows[0].len();
        let mut data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        for c in 0..d {
            let mean = (0..n).map(|r| data[r * d + c]).sum::<f64>() / n as f64;
            for r in 0..n {
                data[r * d + c] -= mean;
            }
        }
        let mut rep = Representation { n, d, data, self_norm: 0.0 };
        rep.self_norm = frobenius(&rep.cross(&rep));
        Ok(rep)
    }

    /// `selfᵀ · other` as a `d_self × d_other` matrix.
    fn cross(&self, other: &Representation) -> Vec<f64> {
        let mut m = vec![0.0; self.d * other.d];
        for r in 0..self.n {
            let a = &self.data[r * self.d..(r + 1) * self.d];
            let b = &other.data[r * other.d..(r + 1) * other.d];
            for (i, av) in a.iter().enumerate() {
                for (j, bv) in b.iter().enumerate() {
                    m[i * other.d + j] += av * bv;
                }
            }
        }
        m
    }
}

fn frobenius(m: &[f64]) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Linear CKA `‖YᵀX‖²_F / (‖XᵀX‖_F‖YᵀY‖_F)` on centered representations.
pub fn cka(x: &Representation, y: &Representation) -> Result<f64, AnalysisError> {
    if x.n != y.n {
        return Err(AnalysisError::Rows(x.n, y.n));
    }
    let denom = x.self_norm * y.self_norm;
    if !(denom > 0.0) {
        return Err(AnalysisError::ZeroNorm);
    }
    let c = frobenius(&y.cross(x));
    Ok(c * c / denom)
}

/// Observations fed to every model when comparing them.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub observations: Vec<Observation>,
    pub seed: u64,
}

impl ProbeSet {
    /// Uniformly drawn valid observations.
    pub fn random<R: Rng + ?Sized>(n: usize, cfg: &StateConfig, seed: u64, rng: &mut R) -> Self {
        let s = cfg.sigma_deg;
        let observations = (0..n)
            .map(|_| {
                let mut o = [0.0; OBS_DIM];
                for v in &mut o[..16] {
                    *v = f64::from(rng.random_range(0..=cfg.c_star + 1));
                }
                for k in 0..5 {
                    let idx = if k < 4 { 16 + 2 * k } else { 26 };
                    o[idx] = rng.random_range(-90.0..=90.0) / s;
                    o[idx + 1] = rng.random_range(-180.0..180.0) / s;
                }
                o[24] = rng.random_range(0.0..=180.0) / s;
                o[25] = rng.random_range(0.0..360.0) / s;
                o
            })
            .collect();
        ProbeSet { observations, seed }
    }

    /// Samples states from experience buffers, topping up with random
    /// observations when the buffers hold fewer than `n`.
    pub fn from_buffers<R: Rng + ?Sized>(buffers: &[&ReplayBuffer], n: usize, cfg: &StateConfig, seed: u64, rng: &mut R) -> Self {
        let pool: Vec<&Observation> = buffers.iter().flat_map(|b| b.iter().map(|e| &e.s)).collect();
        let take = n.min(pool.len());
        let mut observations: Vec<Observation> =
            rand::seq::index::sample(rng, pool.len(), take).iter().map(|i| *pool[i]).collect();
        if take < n {
            observations.extend(Self::random(n - take, cfg, seed, rng).observations);
        }
        ProbeSet { observations, seed }
    }
}

/// Output-layer Q-values over the probes, centered.
pub fn model_representation(net: &QNetwork, probes: &ProbeSet) -> Result<Representation, AnalysisError> {
    let rows = probes.observations.iter().map(|o| net.forward(o)).collect::<Result<Vec<_>, _>>()?;
    Representation::new(&rows)
}

pub fn model_cka(a: &QNetwork, b: &QNetwork, probes: &ProbeSet) -> Result<f64, AnalysisError> {
    cka(&model_representation(a, probes)?, &model_representation(b, probes)?)
}

/// Symmetric pairwise CKA matrix with unit diagonal.
pub fn cka_matrix(nets: &[QNetwork], probes: &ProbeSet) -> Result<Vec<Vec<f64>>, AnalysisError> {
    let reps = nets.iter().map(|n| model_representation(n, probes)).collect::<Result<Vec<_>, _>>()?;
    let n = reps.len();
    let mut m = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = if nets[i] == nets[j] { 1.0 } else { cka(&reps[i], &reps[j])? };
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Ok(m)
}

/// Mean over pairs `i < j`.
pub fn mean_off_diagonal(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    if n < 2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += m[i][j];
        }
    }
    sum / (n * (n - 1) / 2) as f64
}

/// Sorted samples paired with their empirical CDF value `(k+1)/n`.
pub fn latency_cdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.into_iter().enumerate().map(|(k, v)| (v, (k + 1) as f64 / n)).collect()
}

/// Percentile by linear interpolation at rank `p/100·(n−1)`.
pub fn percentile(samples: &[f64], p: f64) -> Result<f64, AnalysisError> {
    if samples.is_empty() {
        return Err(AnalysisError::TooFew(1));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&s, p))
}

pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = p.clamp(0.0, 100.0) / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapEntry {
    pub a: NodeId,
    pub b: NodeId,
    pub packets: u64,
    /// Percentage of the busiest ground link's count.
    pub load_pct: f64,
}

/// Per-edge loads relative to the busiest GSL. Nodes at or above
/// `num_satellites` are gateways.
pub fn link_heatmap(counts: &BTreeMap<(NodeId, NodeId), u64>, num_satellites: usize) -> Vec<HeatmapEntry> {
    let is_gsl = |a: NodeId, b: NodeId| a.0 >= num_satellites || b.0 >= num_satellites;
    let max_gsl = counts.iter().filter(|((a, b), _)| is_gsl(*a, *b)).map(|(_, &c)| c).max().unwrap_or(0);
    counts
        .iter()
        .map(|(&(a, b), &packets)| HeatmapEntry {
            a,
            b,
            packets,
            load_pct: if max_gsl == 0 { 0.0 } else { 100.0 * packets as f64 / max_gsl as f64 },
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadSummary {
    pub max_isl_load_pct: f64,
    pub distinct_edges: usize,
    pub distinct_isls: usize,
}

pub fn load_summary(heatmap: &[HeatmapEntry], num_satellites: usize) -> LoadSummary {
    let isls: Vec<&HeatmapEntry> =
        heatmap.iter().filter(|e| e.packets > 0 && e.a.0 < num_satellites && e.b.0 < num_satellites).collect();
    let edges: BTreeSet<(NodeId, NodeId)> = heatmap.iter().filter(|e| e.packets > 0).map(|e| (e.a, e.b)).collect();
    LoadSummary {
        max_isl_load_pct: isls.iter().map(|e| e.load_pct).fold(0.0, f64::max),
        distinct_edges: edges.len(),
        distinct_isls: isls.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::DEFAULT_DIMS;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rows(data: &[[f64; 3]]) -> Vec<Vec<f64>> {
        data.iter().map(|r| r.to_vec()).collect()
    }

    fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect()).collect()
    }

    /// Gram-matrix formulation: `HSIC(K,L)/√(HSIC(K,K)·HSIC(L,L))` with
    /// `K = XXᵀ` on centered data, which equals the feature-space form.
    fn gram_oracle(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
        let center = |m: &[Vec<f64>]| {
            let n = m.len();
            let d = m[0].len();
            let means: Vec<f64> = (0..d).map(|c| m.iter().map(|r| r[c]).sum::<f64>() / n as f64).collect();
            m.iter().map(|r| r.iter().zip(&means).map(|(v, mu)| v - mu).collect::<Vec<f64>>()).collect::<Vec<_>>()
        };
        let gram = |m: &[Vec<f64>]| {
            m.iter().map(|a| m.iter().map(|b| a.iter().zip(b).map(|(p, q)| p * q).sum()).collect::<Vec<f64>>()).collect::<Vec<_>>()
        };
        let (k, l) = (gram(&center(x)), gram(&center(y)));
        let dot = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| -> f64 {
            a.iter().zip(b).map(|(ra, rb)| ra.iter().zip(rb).map(|(p, q)| p * q).sum::<f64>()).sum()
        };
        dot(&k, &l) / (dot(&k, &k) * dot(&l, &l)).sqrt()
    }

    #[test]
    fn identity_and_scale_invariance() {
        let x = random_rows(30, 4, 1);
        let rx = Representation::new(&x).unwrap();
        assert!((cka(&rx, &rx).unwrap() - 1.0).abs() < 1e-12);
        let scaled: Vec<Vec<f64>> = x.iter().map(|r| r.iter().map(|v| -3.5 * v).collect()).collect();
        assert!((cka(&rx, &Representation::new(&scaled).unwrap()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_column_spaces_give_zero() {
        // after centering X lives on rows {0,1} and Y on rows {2,3}
        let x = rows(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
        let y = rows(&[[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, -2.0, 0.0]]);
        let v = cka(&Representation::new(&x).unwrap(), &Representation::new(&y).unwrap()).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn matches_gram_oracle_and_is_symmetric() {
        for seed in 0..10 {
            let x = random_rows(40, 4, seed);
            let y = random_rows(40, 4, seed + 100);
            let (rx, ry) = (Representation::new(&x).unwrap(), Representation::new(&y).unwrap());
            let v = cka(&rx, &ry).unwrap();
            assert!((v - gram_oracle(&x, &y)).abs() < 1e-12);
            assert!((v - cka(&ry, &rx).unwrap()).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn orthogonal_transform_invariance() {
        let x = random_rows(25, 3, 7);
        let y = random_rows(25, 3, 8);
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let rot: Vec<Vec<f64>> = y.iter().map(|r| vec![c * r[0] - s * r[1], s * r[0] + c * r[1], -r[2]]).collect();
        let rx = Representation::new(&x).unwrap();
        let a = cka(&rx, &Representation::new(&y).unwrap()).unwrap();
        let b = cka(&rx, &Representation::new(&rot).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_is_an_error() {
        let x = vec![vec![1.0, 2.0]; 5];
        let rx = Representation::new(&x).unwrap();
        let ry = Representation::new(&random_rows(5, 2, 1)).unwrap();
        assert!(cka(&rx, &ry).is_err());
    }

    #[test]
    fn model_cka_cases() {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        let probes = ProbeSet::random(512, &StateConfig::default(), 9, &mut r);
        let a = QNetwork::new_random(&DEFAULT_DIMS, &mut r);
        let mut b = QNetwork::zeros(&DEFAULT_DIMS);
        b.copy_from(&a).unwrap();
        assert!((model_cka(&a, &b, &probes).unwrap() - 1.0).abs() < 1e-12);
        let c = QNetwork::new_random(&DEFAULT_DIMS, &mut r);
        let v = model_cka(&a, &c, &probes).unwrap();
        assert!(v < 1.0);
        let rows_a: Vec<Vec<f64>> = probes.observations.iter().map(|o| a.forward(o).unwrap()).collect();
        let rows_c: Vec<Vec<f64>> = probes.observations.iter().map(|o| c.forward(o).unwrap()).collect();
        assert!((v - gram_oracle(&rows_a, &rows_c)).abs() < 1e-10);
        let m = cka_matrix(&[a.clone(), c, a], &probes).unwrap();
        assert_eq!(m[0][2], 1.0);
        assert_eq!(m[1][0], m[0][1]);
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(percentile(&[4.2], 50.0).unwrap(), 4.2);
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((percentile(&s, 50.0).unwrap() - 50.5).abs() < 1e-12);
        assert_eq!(percentile(&s, 0.0).unwrap(), 1.0);
        assert_eq!(percentile(&s, 100.0).unwrap(), 100.0);
        let cdf = latency_cdf(&[3.0, 1.0, 2.0]);
        assert_eq!(cdf, vec![(1.0, 1.0 / 3.0), (2.0, 2.0 / 3.0), (3.0, 1.0)]);
        assert!(percentile(&[], 5.0).is_err());
    }

    #[test]
    fn heatmap_normalisation() {
        assert!(link_heatmap(&BTreeMap::new(), 10).is_empty());
        let mut c = BTreeMap::new();
        c.insert((NodeId(1), NodeId(10)), 5);
        c.insert((NodeId(1), NodeId(2)), 5);
        c.insert((NodeId(2), NodeId(11)), 5);
        let h = link_heatmap(&c, 10);
        assert!(h.iter().all(|e| e.load_pct == 100.0));
        let s = load_summary(&h, 10);
        assert_eq!(s.distinct_edges, 3);
        assert_eq!(s.distinct_isls, 1);
        assert_eq!(s.max_isl_load_pct, 100.0);
    }
}
