//! Scenario files: parsing, defaults, validation and named RNG streams.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::continual::AggregationSchedule;
use crate::drl::ddqn::{EpsilonSchedule, TrainConfig};
use crate::drl::reward::RewardWeights;
use crate::drl::state::StateConfig;
use crate::orbit::{Architecture, ConstellationSpec, GATEWAY_SITES};
use crate::topology::RadioSet;

/// Generator behind every named stream, recorded in the echoed config.
pub const RNG_ALGORITHM: &str = "chacha8-seed_from_u64-set_stream";

pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown rng stream `{0}`")]
    UnknownStream(String),
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstellationConfig {
    pub preset: Option<String>,
    pub planes: Option<usize>,
    pub sats_per_plane: Option<usize>,
    pub altitude_km: Option<f64>,
    pub inclination_deg: Option<f64>,
    pub architecture: Option<Architecture>,
    pub phasing_offset_rad: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatewayConfig {
    /// The first `count` sites of the fixed list are used.
    pub count: usize,
    pub min_elevation_deg: Option<f64>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig { count: 2, min_elevation_deg: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    /// CSV of (spectral efficiency, minimum SNR dB); built-in table when unset.
    pub mcs_table: Option<PathBuf>,
    pub isl: Option<crate::link::RadioParams>,
    pub uplink: Option<crate::link::RadioParams>,
    pub downlink: Option<crate::link::RadioParams>,
}

impl RadioConfig {
    pub fn radio_set(&self) -> RadioSet {
        let d = RadioSet::default();
        RadioSet { isl: self.isl.unwrap_or(d.isl), uplink: self.uplink.unwrap_or(d.uplink), downlink: self.downlink.unwrap_or(d.downlink) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficSection {
    pub load_fraction: f64,
    pub block_bits: f64,
}

impl Default for TrafficSection {
    fn default() -> Self {
        TrafficSection { load_fraction: 0.1, block_bits: 64_800.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineSection {
    pub q_max: usize,
    pub position_update_interval_s: f64,
    /// Transmissions before a packet is dropped; 0 disables the limit.
    pub max_hops: u32,
    pub record_paths: bool,
}

impl Default for EngineSection {
    fn default() -> Self {
        EngineSection { q_max: 100, position_update_interval_s: 15.0, max_hops: 100, record_paths: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub target_update_period: u64,
    pub train_every: u64,
    pub global_buffer: usize,
    pub agent_buffer: usize,
    pub eps_min: f64,
    pub eps_max: f64,
    pub kappa: f64,
    /// Exploration rate of the online agents.
    pub online_epsilon: f64,
    pub c_star: u32,
    pub sigma_deg: f64,
    pub hidden_layers: Vec<usize>,
    pub reward: RewardWeights,
}

impl Default for LearningConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let e = EpsilonSchedule::default();
        let s = StateConfig::default();
        LearningConfig {
            learning_rate: t.learning_rate,
            gamma: t.gamma,
            batch_size: t.batch_size,
            target_update_period: t.target_update_period,
            train_every: t.train_every,
            global_buffer: 200_000,
            agent_buffer: 20_000,
            eps_min: e.eps_min,
            eps_max: e.eps_max,
            kappa: e.kappa,
            online_epsilon: 0.01,
            c_star: s.c_star,
            sigma_deg: s.sigma_deg,
            hidden_layers: vec![crate::mlp::HIDDEN, crate::mlp::HIDDEN],
            reward: RewardWeights::default(),
        }
    }
}

impl LearningConfig {
    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            gamma: self.gamma,
            batch_size: self.batch_size,
            target_update_period: self.target_update_period,
            train_every: self.train_every,
        }
    }

    pub fn epsilon(&self) -> EpsilonSchedule {
        EpsilonSchedule { eps_min: self.eps_min, eps_max: self.eps_max, kappa: self.kappa }
    }

    pub fn state(&self) -> StateConfig {
        StateConfig { c_star: self.c_star, sigma_deg: self.sigma_deg }
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![crate::mlp::OBS_DIM];
        d.extend(&self.hidden_layers);
        d.push(crate::mlp::NUM_ACTIONS);
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QRoutingSection {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for QRoutingSection {
    fn default() -> Self {
        QRoutingSection { alpha: 0.5, gamma: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Keep every k-th reward; 0 disables the reward log.
    pub reward_log_stride: u64,
    pub epsilon_log_interval_s: f64,
    pub log_cka: bool,
    pub probe_count: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { reward_log_stride: 1, epsilon_log_interval_s: 0.1, log_cka: true, probe_count: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub topology: u64,
    pub traffic: u64,
    pub learning: u64,
    pub probes: u64,
    pub algorithm: String,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { topology: 1, traffic: 2, learning: 3, probes: 4, algorithm: RNG_ALGORITHM.to_string() }
    }
}

impl Seeds {
    /// Every stream reseeded from one base value.
    pub fn set_all(&mut self, seed: u64) {
        self.topology = seed;
        self.traffic = seed.wrapping_add(1);
        self.learning = seed.wrapping_add(2);
        self.probes = seed.wrapping_add(3);
    }
}

pub const STREAM_NAMES: [&str; 4] = ["topology", "traffic", "learning", "probes"];

/// Independent generator for a declared stream.
pub fn rng_stream(seeds: &Seeds, name: &str) -> Result<ChaCha8Rng, ConfigError> {
    let (seed, stream) = match name {
        "topology" => (seeds.topology, 0),
        "traffic" => (seeds.traffic, 1),
        "learning" => (seeds.learning, 2),
        "probes" => (seeds.probes, 3),
        other => return Err(ConfigError::UnknownStream(other.to_string())),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Ok(rng)
}

fn default_horizon() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_horizon")]
    pub horizon_s: f64,
    pub constellation: ConstellationConfig,
    #[serde(default)]
    pub gateways: GatewayConfig,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub traffic: TrafficSection,
    #[serde(default)]
    pub engine: EngineSection,
    #[serde(default)]
    pub learning: LearningConfig,
    #[serde(default)]
    pub qrouting: QRoutingSection,
    #[serde(default)]
    pub schedule: AggregationSchedule,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seeds: Seeds,
}

impl ScenarioConfig {
    /// Defaults for the named preset.
    pub fn for_preset(preset: &str) -> Result<Self, ConfigError> {
        Self::from_toml_str(&format!("[constellation]\npreset = \"{preset}\"\n"))
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.resolve()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fills every constellation field from the preset where unset.
    fn resolve(&mut self) -> Result<(), ConfigError> {
        let c = &mut self.constellation;
        let base = match &c.preset {
            Some(name) => Some(ConstellationSpec::preset(name).map_err(|e| invalid("constellation.preset", e.to_string()))?),
            None => None,
        };
        let need = |field: &str| invalid(field, "required without a preset");
        c.planes = Some(c.planes.or(base.map(|b| b.planes)).ok_or_else(|| need("constellation.planes"))?);
        c.sats_per_plane = Some(c.sats_per_plane.or(base.map(|b| b.sats_per_plane)).ok_or_else(|| need("constellation.sats_per_plane"))?);
        c.altitude_km = Some(c.altitude_km.or(base.map(|b| b.altitude_m / 1e3)).ok_or_else(|| need("constellation.altitude_km"))?);
        c.inclination_deg =
            Some(c.inclination_deg.or(base.map(|b| b.inclination_rad.to_degrees())).ok_or_else(|| need("constellation.inclination_deg"))?);
        c.architecture = Some(c.architecture.or(base.map(|b| b.architecture)).unwrap_or(Architecture::WalkerStar));
        c.phasing_offset_rad = Some(c.phasing_offset_rad.or(base.map(|b| b.phasing_offset)).unwrap_or(0.0));
        Ok(())
    }

    /// Resolved constellation; only valid after loading.
    pub fn constellation_spec(&self) -> ConstellationSpec {
        let c = &self.constellation;
        ConstellationSpec {
            planes: c.planes.unwrap_or(0),
            sats_per_plane: c.sats_per_plane.unwrap_or(0),
            altitude_m: c.altitude_km.unwrap_or(0.0) * 1e3,
            inclination_rad: c.inclination_deg.unwrap_or(0.0).to_radians(),
            architecture: c.architecture.unwrap_or(Architecture::WalkerStar),
            phasing_offset: c.phasing_offset_rad.unwrap_or(0.0),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be a finite number > 0, got {v}")))
            }
        }
        fn non_negative(field: &str, v: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be a finite number >= 0, got {v}")))
            }
        }
        non_negative("horizon_s", self.horizon_s)?;
        let spec = self.constellation_spec();
        if spec.planes == 0 {
            return Err(invalid("constellation.planes", "must be >= 1"));
        }
        if spec.sats_per_plane == 0 {
            return Err(invalid("constellation.sats_per_plane", "must be >= 1"));
        }
        positive("constellation.altitude_km", spec.altitude_m)?;
        let inc = self.constellation.inclination_deg.unwrap_or(0.0);
        if !(inc > 0.0 && inc <= 180.0) {
            return Err(invalid("constellation.inclination_deg", format!("must lie in (0, 180], got {inc}")));
        }
        spec.validate().map_err(|e| invalid("constellation", e.to_string()))?;

        let g = &self.gateways;
        if !(1..=GATEWAY_SITES.len()).contains(&g.count) {
            return Err(invalid("gateways.count", format!("must lie in 1..={}, got {}", GATEWAY_SITES.len(), g.count)));
        }
        if let Some(e) = g.min_elevation_deg {
            if !(e.is_finite() && (0.0..90.0).contains(&e)) {
                return Err(invalid("gateways.min_elevation_deg", format!("must lie in [0, 90), got {e}")));
            }
        }
        let radios = self.radio.radio_set();
        for (field, p) in [("radio.isl", radios.isl), ("radio.uplink", radios.uplink), ("radio.downlink", radios.downlink)] {
            p.validate().map_err(|e| invalid(field, e.to_string()))?;
        }

        non_negative("traffic.load_fraction", self.traffic.load_fraction)?;
        positive("traffic.block_bits", self.traffic.block_bits)?;

        let e = &self.engine;
        if e.q_max < 2 {
            return Err(invalid("engine.q_max", format!("must be >= 2, got {}", e.q_max)));
        }
        positive("engine.position_update_interval_s", e.position_update_interval_s)?;

        let l = &self.learning;
        positive("learning.learning_rate", l.learning_rate)?;
        if !(0.0..=1.0).contains(&l.gamma) {
            return Err(invalid("learning.gamma", format!("must lie in [0, 1], got {}", l.gamma)));
        }
        if l.batch_size == 0 {
            return Err(invalid("learning.batch_size", "must be >= 1"));
        }
        if l.target_update_period == 0 {
            return Err(invalid("learning.target_update_period", "must be >= 1"));
        }
        if l.train_every == 0 {
            return Err(invalid("learning.train_every", "must be >= 1"));
        }
        if l.global_buffer < l.batch_size {
            return Err(invalid("learning.global_buffer", "must hold at least one batch"));
        }
        if l.agent_buffer < l.batch_size {
            return Err(invalid("learning.agent_buffer", "must hold at least one batch"));
        }
        if !(0.0..=1.0).contains(&l.eps_min) {
            return Err(invalid("learning.eps_min", "must lie in [0, 1]"));
        }
        if !(l.eps_min..=1.0).contains(&l.eps_max) {
            return Err(invalid("learning.eps_max", "must lie in [eps_min, 1]"));
        }
        if !(l.kappa.is_finite() && l.kappa < 0.0) {
            return Err(invalid("learning.kappa", format!("must be < 0, got {}", l.kappa)));
        }
        if !(0.0..=1.0).contains(&l.online_epsilon) {
            return Err(invalid("learning.online_epsilon", "must lie in [0, 1]"));
        }
        if l.c_star == 0 {
            return Err(invalid("learning.c_star", "must be >= 1"));
        }
        positive("learning.sigma_deg", l.sigma_deg)?;
        if l.hidden_layers.contains(&0) {
            return Err(invalid("learning.hidden_layers", "widths must be >= 1"));
        }
        let w = &l.reward;
        positive("learning.reward.w4", w.w4)?;
        positive("learning.reward.queue_time_scale", w.queue_time_scale)?;
        if let Some(d) = w.d_max_m {
            positive("learning.reward.d_max_m", d)?;
        }
        for (field, v) in [
            ("learning.reward.w1", w.w1),
            ("learning.reward.w2", w.w2),
            ("learning.reward.w3", w.w3),
            ("learning.reward.r_deliver", w.r_deliver),
            ("learning.reward.r_loop", w.r_loop),
            ("learning.reward.r_unavailable", w.r_unavailable),
        ] {
            if !v.is_finite() {
                return Err(invalid(field, "must be finite"));
            }
        }

        let q = &self.qrouting;
        if !(q.alpha > 0.0 && q.alpha <= 1.0) {
            return Err(invalid("qrouting.alpha", format!("must lie in (0, 1], got {}", q.alpha)));
        }
        if !(0.0..=1.0).contains(&q.gamma) {
            return Err(invalid("qrouting.gamma", format!("must lie in [0, 1], got {}", q.gamma)));
        }

        let s = &self.schedule;
        for (field, p) in [
            ("schedule.anticipation_period_s", s.anticipation_period_s),
            ("schedule.cluster_period_s", s.cluster_period_s),
            ("schedule.global_period_s", s.global_period_s),
        ] {
            if let Some(p) = p {
                positive(field, p)?;
            }
        }

        let o = &self.output;
        non_negative("output.epsilon_log_interval_s", o.epsilon_log_interval_s)?;
        if o.probe_count < 2 {
            return Err(invalid("output.probe_count", "must be >= 2"));
        }
        if self.seeds.algorithm != RNG_ALGORITHM {
            return Err(invalid("seeds.algorithm", format!("only `{RNG_ALGORITHM}` is supported")));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Writes the resolved config next to the run's outputs.
    pub fn echo(&self, out_dir: &Path) -> Result<PathBuf, ConfigError> {
        let path = out_dir.join(EFFECTIVE_CONFIG_FILE);
        fs::write(&path, self.to_toml()).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
        Ok(path)
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    ScenarioConfig::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn minimal_preset_resolves_defaults() {
        let c = ScenarioConfig::from_toml_str("[constellation]\npreset = \"kepler\"\n").unwrap();
        assert_eq!(c.constellation_spec(), ConstellationSpec::preset("kepler").unwrap());
        assert_eq!(c.gateways.count, 2);
        assert_eq!(c.learning, LearningConfig::default());
        assert_eq!(c.horizon_s, 4.0);
    }

    #[test]
    fn negative_load_names_the_field() {
        let err = ScenarioConfig::from_toml_str("[constellation]\npreset = \"kepler\"\n[traffic]\nload_fraction = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("traffic.load_fraction"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "[constellation]\npreset = \"kepler\"\n[traffic]\nload = 1.0\n",
            "[constellation]\npreset = \"kepler\"\nbogus = 1\n",
            "[constellation]\npreset = \"kepler\"\n[learning.reward]\nw9 = 1.0\n",
        ] {
            assert!(matches!(ScenarioConfig::from_toml_str(text), Err(ConfigError::Parse(_))), "{text}");
        }
    }

    #[test]
    fn explicit_constellation_without_preset() {
        let c = ScenarioConfig::from_toml_str(
            "[constellation]\nplanes = 3\nsats_per_plane = 4\naltitude_km = 700.0\ninclination_deg = 80.0\n",
        )
        .unwrap();
        assert_eq!(c.constellation_spec().num_satellites(), 12);
        assert!(ScenarioConfig::from_toml_str("[constellation]\nplanes = 3\n").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ScenarioConfig::for_preset("iridium-next").unwrap();
        c.schedule.anticipation_period_s = Some(0.5);
        c.engine.max_hops = 0;
        c.learning.reward.d_max_m = Some(3e6);
        let path = c.echo(dir.path()).unwrap();
        assert_eq!(load_config(&path).unwrap(), c);
        assert!(fs::read_to_string(&path).unwrap().contains(RNG_ALGORITHM));
    }

    #[test]
    fn streams_are_isolated_and_reproducible() {
        let mut s = Seeds::default();
        let a: Vec<u64> = (0..4).map(|_| rng_stream(&s, "traffic").unwrap().random()).collect();
        let b: u64 = rng_stream(&s, "traffic").unwrap().random();
        assert_eq!(a[0], b);
        s.learning = 999;
        let c: u64 = rng_stream(&s, "traffic").unwrap().random();
        assert_eq!(b, c);
        assert!(rng_stream(&s, "weather").is_err());
        let names: Vec<u64> = STREAM_NAMES.iter().map(|n| rng_stream(&Seeds::default(), n).unwrap().random()).collect();
        assert!(names.windows(2).all(|w| w[0] != w[1]));
    }
}
