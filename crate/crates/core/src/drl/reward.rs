//! Per-hop reward: queueing penalty, geometric progress and event bonuses.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    /// Divisor of the hop length in the progress term.
    pub w4: f64,
    pub r_deliver: f64,
    pub r_loop: f64,
    pub r_unavailable: f64,
    /// Normaliser of the progress term; the longest ISL of the snapshot when unset.
    pub d_max_m: Option<f64>,
    /// Multiplier turning queue seconds into the exponent's unit.
    pub queue_time_scale: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            w1: 20.0,
            w2: 20.0,
            w3: 1.0,
            w4: 5.0,
            r_deliver: 50.0,
            r_loop: -5.0,
            r_unavailable: -5.0,
            d_max_m: None,
            queue_time_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardInputs {
    /// Queue time the packet faces at the receiver.
    pub queue_time_s: f64,
    /// Sender to destination gateway.
    pub dist_i_d_m: f64,
    /// Receiver to destination gateway.
    pub dist_j_d_m: f64,
    /// Hop length.
    pub dist_i_j_m: f64,
    pub d_max_m: f64,
    pub looped: bool,
    pub delivered: bool,
    pub unavailable: bool,
}

/// Unweighted components and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub r_q: f64,
    pub r_r: f64,
    pub r_star: f64,
    pub total: f64,
}

pub fn compute_reward(w: &RewardWeights, x: &RewardInputs) -> RewardBreakdown {
    let r_q = 1.0 - 10f64.powf(x.queue_time_s * w.queue_time_scale);
    let r_r = (x.dist_i_d_m - x.dist_j_d_m - x.dist_i_j_m / w.w4) / x.d_max_m;
    let mut r_star = 0.0;
    if x.looped {
        r_star += w.r_loop;
    }
    if x.delivered {
        r_star += w.r_deliver;
    }
    if x.unavailable {
        r_star += w.r_unavailable;
    }
    RewardBreakdown { r_q, r_r, r_star, total: w.w1 * r_q + w.w2 * r_r + w.w3 * r_star }
}

/// Reward of choosing a slot with no live link: only the penalty term.
pub fn unavailable_reward(w: &RewardWeights) -> RewardBreakdown {
    RewardBreakdown { r_q: 0.0, r_r: 0.0, r_star: w.r_unavailable, total: w.w3 * w.r_unavailable }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn progress_term_plug_in() {
        let x = RewardInputs { dist_i_d_m: 2000e3, dist_j_d_m: 1000e3, dist_i_j_m: 1000e3, d_max_m: 4000e3, ..Default::default() };
        let r = compute_reward(&RewardWeights::default(), &x);
        assert!((r.r_r - 0.2).abs() < 1e-12);
        assert_eq!(r.r_q, 0.0);
        assert!((r.total - 4.0).abs() < 1e-12);
    }

    #[test]
    fn delivery_and_loop_bonuses() {
        let w = RewardWeights::default();
        let base = RewardInputs { dist_i_d_m: 1500e3, dist_j_d_m: 800e3, dist_i_j_m: 900e3, d_max_m: 3000e3, ..Default::default() };
        let plain = compute_reward(&w, &base);
        let del = compute_reward(&w, &RewardInputs { delivered: true, ..base });
        assert!((del.total - (plain.total + 50.0)).abs() < 1e-12);
        let lp = compute_reward(&w, &RewardInputs { looped: true, ..base });
        assert!((lp.total - (plain.total - 5.0)).abs() < 1e-12);
        assert_eq!(unavailable_reward(&w).total, -5.0);
    }

    #[test]
    fn queue_penalty_is_non_positive() {
        let w = RewardWeights::default();
        let r = compute_reward(&w, &RewardInputs { queue_time_s: 0.01, d_max_m: 1.0, ..Default::default() });
        assert!(r.r_q < 0.0);
        assert!((r.r_q - (1.0 - 10f64.powf(0.01))).abs() < 1e-15);
    }

    proptest! {
        // hop geometry obeys the triangle inequality, so delivery dominates
        #[test]
        fn delivery_is_the_maximum(
            hop in 1e3f64..3e6, jd in 0.0f64..5e6, tq in 0.0f64..0.02, frac in 0.0f64..1.0,
        ) {
            let w = RewardWeights::default();
            let d_max = 3.2e6f64.max(hop);
            let id = (jd - hop).abs() + frac * (jd + hop - (jd - hop).abs());
            let x = RewardInputs { queue_time_s: tq, dist_i_d_m: id, dist_j_d_m: jd, dist_i_j_m: hop, d_max_m: d_max, ..Default::default() };
            let best_plain = w.w2 * (1.0 - 1.0 / w.w4);
            let delivered = compute_reward(&w, &RewardInputs { delivered: true, ..x });
            prop_assert!(delivered.total > best_plain);
            prop_assert!(compute_reward(&w, &x).total <= best_plain + 1e-9);
        }
    }
}
