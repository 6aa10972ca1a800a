//! Double-network Q-learning: exploration schedule, action selection, TD
//! targets and replay training with periodic hard target updates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::replay::{Experience, ReplayBuffer};
use super::state::Observation;
use crate::mlp::{argmax, MlpError, QNetwork, Sample, NUM_ACTIONS};

/// `ε_min + (ε_max − ε_min)·exp(κ·t/n_g²)`.
pub fn epsilon(t: f64, n_g: usize, eps_min: f64, eps_max: f64, kappa: f64) -> f64 {
    let n2 = (n_g * n_g) as f64;
    eps_min + (eps_max - eps_min) * (kappa * t / n2).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub eps_min: f64,
    pub eps_max: f64,
    pub kappa: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule { eps_min: 0.01, eps_max: 1.0, kappa: -5.0 }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, t: f64, n_g: usize) -> f64 {
        epsilon(t, n_g, self.eps_min, self.eps_max, self.kappa)
    }
}

/// ε-greedy over all four actions; greedy ties go to the lowest index.
pub fn select_action<R: Rng + ?Sized>(q_values: &[f64], eps: f64, rng: &mut R) -> usize {
    if eps > 0.0 && rng.random::<f64>() < eps {
        rng.random_range(0..q_values.len())
    } else {
        argmax(q_values)
    }
}

/// Greedy action among the available ones.
pub fn masked_argmax(q_values: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &ok) in mask.iter().enumerate() {
        if ok && best.is_none_or(|b| q_values[k] > q_values[b]) {
            best = Some(k);
        }
    }
    best
}

/// `r` if terminal, else `r + γ·max_a Q⁻(s', a)`.
pub fn td_target(r: f64, gamma: f64, target_net: &QNetwork, s_next: &Observation, terminal: bool) -> Result<f64, MlpError> {
    if terminal || gamma == 0.0 {
        return Ok(r);
    }
    let q = target_net.forward(s_next)?;
    Ok(r + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub batch_size: usize,
    /// Training iterations between hard target updates.
    pub target_update_period: u64,
    /// Stored experiences per training step.
    pub train_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 1e-3, gamma: 0.99, batch_size: 32, target_update_period: 1000, train_every: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct Learner {
    pub online: QNetwork,
    pub target: QNetwork,
    pub buffer: ReplayBuffer,
    pub iterations: u64,
    pub stored: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrainOutcome {
    /// Fewer stored experiences than the batch size.
    Underfull,
    Trained { loss: f64, target_updated: bool },
}

impl Learner {
    pub fn new(net: QNetwork, buffer_capacity: usize) -> Self {
        Learner { target: net.clone(), online: net, buffer: ReplayBuffer::new(buffer_capacity), iterations: 0, stored: 0 }
    }

    pub fn q_values(&self, obs: &Observation) -> Result<Vec<f64>, MlpError> {
        self.online.forward(obs)
    }

    /// Stores an experience and trains every `train_every` stores.
    pub fn store<R: Rng + ?Sized>(&mut self, e: Experience, cfg: &TrainConfig, rng: &mut R) -> Result<Option<TrainOutcome>, MlpError> {
        self.buffer.push(e);
        self.stored += 1;
        if self.stored.is_multiple_of(cfg.train_every.max(1)) {
            return self.train_step(cfg, rng).map(Some);
        }
        Ok(None)
    }

    pub fn train_step<R: Rng + ?Sized>(&mut self, cfg: &TrainConfig, rng: &mut R) -> Result<TrainOutcome, MlpError> {
        let Some(batch) = self.buffer.sample(cfg.batch_size, rng) else {
            return Ok(TrainOutcome::Underfull);
        };
        let mut targets = Vec::with_capacity(batch.len());
        for e in &batch {
            targets.push(td_target(e.r, cfg.gamma, &self.target, &e.s_next, e.terminal)?);
        }
        let samples: Vec<Sample> =
            batch.iter().zip(&targets).map(|(e, &t)| Sample { input: &e.s, action: e.a, target: t }).collect();
        debug_assert!(samples.iter().all(|s| s.action < NUM_ACTIONS));
        let loss = self.online.sgd_step(&samples, cfg.learning_rate)?;
        self.iterations += 1;
        let target_updated = self.iterations.is_multiple_of(cfg.target_update_period.max(1));
        if target_updated {
            self.sync_target();
        }
        Ok(TrainOutcome::Trained { loss, target_updated })
    }

    pub fn sync_target(&mut self) {
        self.target.clone_from(&self.online);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::DEFAULT_DIMS;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn epsilon_endpoints_and_midpoint() {
        assert_eq!(epsilon(0.0, 2, 0.01, 1.0, -5.0), 1.0);
        assert!((epsilon(1e6, 2, 0.01, 1.0, -5.0) - 0.01).abs() < 1e-15);
        let n_g = 8;
        let t = (n_g * n_g) as f64 * 2f64.ln() / 5.0;
        assert!((epsilon(t, n_g, 0.01, 1.0, -5.0) - (0.01 + 0.99 / 2.0)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn epsilon_strictly_decreasing(t in 0.0f64..50.0, dt in 1e-3f64..5.0, n_g in 1usize..9) {
            let a = epsilon(t, n_g, 0.01, 1.0, -5.0);
            let b = epsilon(t + dt, n_g, 0.01, 1.0, -5.0);
            prop_assert!(b < a || (a - 0.01).abs() < 1e-12);
            prop_assert!((0.01..=1.0).contains(&b));
        }
    }

    #[test]
    fn greedy_and_ties() {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&[1.0, 3.0, 2.0, 0.0], 0.0, &mut r), 1);
        assert_eq!(select_action(&[2.0, 2.0, 0.0, 0.0], 0.0, &mut r), 0);
        assert_eq!(masked_argmax(&[5.0, 1.0, 2.0, 0.0], &[false, true, true, false]), Some(2));
        assert_eq!(masked_argmax(&[5.0, 1.0, 2.0, 0.0], &[false; 4]), None);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let n = 40_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[select_action(&[9.0, 0.0, 0.0, 0.0], 1.0, &mut r)] += 1;
        }
        let e = n as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 99.9% quantile of chi-square with 3 degrees of freedom
        assert!(chi2 < 16.27, "{counts:?}");
    }

    #[test]
    fn td_target_cases() {
        let net = QNetwork::zeros(&DEFAULT_DIMS);
        assert_eq!(td_target(3.0, 0.9, &net, &[0.0; 28], true).unwrap(), 3.0);
        let mut biased = QNetwork::zeros(&DEFAULT_DIMS);
        let last = biased.num_params() - 4;
        for (k, p) in biased.params_mut().enumerate() {
            if k >= last {
                *p = [0.5, 2.0, -1.0, 1.0][k - last];
            }
        }
        assert_eq!(td_target(3.0, 0.0, &biased, &[0.0; 28], false).unwrap(), 3.0);
        assert!((td_target(1.0, 0.9, &biased, &[0.0; 28], false).unwrap() - 2.8).abs() < 1e-12);
    }

    fn exp(s: Observation, a: usize, r: f64) -> Experience {
        Experience { s, a, r, s_next: s, terminal: true }
    }

    #[test]
    fn underfull_buffer_is_a_noop() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let mut l = Learner::new(QNetwork::new_random(&DEFAULT_DIMS, &mut r), 10);
        let before = l.online.clone();
        assert_eq!(l.train_step(&TrainConfig::default(), &mut r).unwrap(), TrainOutcome::Underfull);
        assert_eq!(l.online, before);
    }

    #[test]
    fn converged_buffer_leaves_weights() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let net = QNetwork::new_random(&DEFAULT_DIMS, &mut r);
        let s = [0.5; 28];
        let q = net.forward(&s).unwrap();
        let mut l = Learner::new(net.clone(), 64);
        for _ in 0..40 {
            l.buffer.push(exp(s, 1, q[1]));
        }
        match l.train_step(&TrainConfig::default(), &mut r).unwrap() {
            TrainOutcome::Trained { loss, .. } => assert_eq!(loss, 0.0),
            other => panic!("{other:?}"),
        }
        assert_eq!(l.online, net);
    }

    #[test]
    fn single_tuple_loss_decreases() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let mut l = Learner::new(QNetwork::new_random(&DEFAULT_DIMS, &mut r), 8);
        let s = [0.3; 28];
        l.buffer.push(exp(s, 2, 5.0));
        let cfg = TrainConfig { batch_size: 1, learning_rate: 1e-3, ..Default::default() };
        let mut prev = f64::INFINITY;
        for _ in 0..50 {
            let TrainOutcome::Trained { loss, .. } = l.train_step(&cfg, &mut r).unwrap() else { panic!() };
            assert!(loss < prev);
            prev = loss;
        }
    }

    #[test]
    fn hard_update_every_period() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let mut l = Learner::new(QNetwork::new_random(&DEFAULT_DIMS, &mut r), 8);
        l.buffer.push(exp([0.1; 28], 0, 1.0));
        let cfg = TrainConfig { batch_size: 1, target_update_period: 3, ..Default::default() };
        for k in 1..=6 {
            let TrainOutcome::Trained { target_updated, .. } = l.train_step(&cfg, &mut r).unwrap() else { panic!() };
            assert_eq!(target_updated, k % 3 == 0);
            if target_updated {
                assert_eq!(l.online.to_json(), l.target.to_json());
                let x = [0.7; 28];
                assert_eq!(l.online.forward(&x).unwrap(), l.target.forward(&x).unwrap());
            } else {
                assert_ne!(l.online, l.target);
            }
        }
    }
}
