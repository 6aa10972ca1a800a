//! Fixtures shared by the benchmarks.

use leosim::drl::state::Observation;
use leosim::mlp::{DEFAULT_DIMS, OBS_DIM};
use leosim::orbit::gateways;
use leosim::{QNetwork, Scenario, ScenarioConfig, Snapshot};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn network(seed: u64) -> QNetwork {
    QNetwork::new_random(&DEFAULT_DIMS, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn observations(n: usize, seed: u64) -> Vec<Observation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut o = [0.0; OBS_DIM];
            o.iter_mut().for_each(|v| *v = rng.random_range(-4.0..11.0));
            o
        })
        .collect()
}

/// Kepler at `t = 0` with `n` gateways.
pub fn kepler_snapshot(n: usize) -> Snapshot {
    let scn = Scenario::new(ScenarioConfig::for_preset("kepler").expect("preset")).expect("scenario");
    let mut world = scn.world;
    world.gateways = gateways(n);
    world.snapshot(0.0).expect("snapshot")
}

/// A short Kepler scenario at the given load.
pub fn kepler_scenario(gateways: usize, load: f64, horizon_s: f64) -> Scenario {
    let mut c = ScenarioConfig::for_preset("kepler").expect("preset");
    c.gateways.count = gateways;
    c.traffic.load_fraction = load;
    c.horizon_s = horizon_s;
    c.output.reward_log_stride = 0;
    Scenario::new(c).expect("scenario")
}
