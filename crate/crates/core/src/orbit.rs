//! Constellation geometry: Walker star/delta generation and circular-orbit
//! propagation on a spherical, non-rotating Earth.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371.0e3;
/// Geocentric gravitational constant in m³/s².
pub const MU_EARTH: f64 = 3.98e14;
/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, PartialEq)]
pub enum OrbitError {
    #[error("semi-major axis must be finite and above the Earth radius, got {0} m")]
    SemiMajorAxis(f64),
    #[error("invalid constellation: {0}")]
    InvalidSpec(&'static str),
    #[error("unknown constellation preset `{0}`")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// Planes spread over 180° of right ascension.
    WalkerStar,
    /// Planes spread over 360° of right ascension.
    WalkerDelta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstellationSpec {
    pub planes: usize,
    pub sats_per_plane: usize,
    pub altitude_m: f64,
    pub inclination_rad: f64,
    pub architecture: Architecture,
    /// Anomaly offset added per plane index.
    pub phasing_offset: f64,
}

impl ConstellationSpec {
    pub fn validate(&self) -> Result<(), OrbitError> {
        if self.planes == 0 {
            return Err(OrbitError::InvalidSpec("planes must be >= 1"));
        }
        if self.sats_per_plane == 0 {
            return Err(OrbitError::InvalidSpec("sats_per_plane must be >= 1"));
        }
        if !(self.altitude_m.is_finite() && self.altitude_m > 0.0) {
            return Err(OrbitError::InvalidSpec("altitude must be > 0"));
        }
        if !(self.inclination_rad > 0.0 && self.inclination_rad <= PI) {
            return Err(OrbitError::InvalidSpec("inclination must lie in (0, pi]"));
        }
        if !self.phasing_offset.is_finite() {
            return Err(OrbitError::InvalidSpec("phasing offset must be finite"));
        }
        Ok(())
    }

    /// Named constellation presets.
    pub fn preset(name: &str) -> Result<Self, OrbitError> {
        let star = |planes, sats, alt_km: f64| ConstellationSpec {
            planes,
            sats_per_plane: sats,
            altitude_m: alt_km * 1e3,
            inclination_rad: PI / 2.0,
            architecture: Architecture::WalkerStar,
            phasing_offset: 0.0,
        };
        match name {
            "kepler" => Ok(star(7, 20, 600.0)),
            "iridium-next" => Ok(star(6, 11, 780.0)),
            "oneweb" => Ok(star(36, 18, 1200.0)),
            "starlink-550" => Ok(ConstellationSpec {
                planes: 72,
                sats_per_plane: 22,
                altitude_m: 550e3,
                inclination_rad: 53f64.to_radians(),
                architecture: Architecture::WalkerDelta,
                phasing_offset: 0.0,
            }),
            other => Err(OrbitError::UnknownPreset(other.to_string())),
        }
    }

    pub fn num_satellites(&self) -> usize {
        self.planes * self.sats_per_plane
    }

    pub fn radius_m(&self) -> f64 {
        EARTH_RADIUS_M + self.altitude_m
    }

    pub fn period_s(&self) -> f64 {
        // validated specs always have a > R_E
        orbital_period(self.radius_m()).expect("validated constellation")
    }

    /// Right ascension of the ascending node of plane `p`.
    pub fn plane_raan(&self, plane: usize) -> f64 {
        let span = match self.architecture {
            Architecture::WalkerStar => PI,
            Architecture::WalkerDelta => 2.0 * PI,
        };
        span * plane as f64 / self.planes as f64
    }

    pub fn satellite_id(&self, plane: usize, slot: usize) -> NodeId {
        NodeId(plane * self.sats_per_plane + slot)
    }

    pub fn plane_slot(&self, sat: NodeId) -> (usize, usize) {
        (sat.0 / self.sats_per_plane, sat.0 % self.sats_per_plane)
    }
}

/// Index into the combined node list: satellites first, then gateways.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Satellite { plane: usize, slot: usize },
    Gateway { lat_deg: f64, lon_deg: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodePosition {
    pub node_id: NodeId,
    pub kind: NodeKind,
    pub ecef: [f64; 3],
}

impl NodePosition {
    pub fn is_satellite(&self) -> bool {
        matches!(self.kind, NodeKind::Satellite { .. })
    }

    /// Geocentric latitude and longitude in degrees.
    pub fn lat_lon_deg(&self) -> (f64, f64) {
        let [x, y, z] = self.ecef;
        let r = norm(self.ecef);
        ((z / r).asin().to_degrees(), y.atan2(x).to_degrees())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gateway {
    pub name: &'static str,
    pub lat_deg: f64,
    pub lon_deg: f64,
}

/// Gateway sites in the order the simulator draws them.
pub const GATEWAY_SITES: [(&str, f64, f64); 8] = [
    ("Malaga", 36.72, -4.42),
    ("Los Angeles", 34.05, -118.24),
    ("Port Louis", -20.16, 57.50),
    ("Vardo", 70.37, 31.11),
    ("Nuuk", 64.18, -51.72),
    ("Nemea", 37.82, 22.66),
    ("Azores", 37.74, -25.67),
    ("Bangalore", 12.97, 77.59),
];

/// The first `count` gateway sites.
pub fn gateways(count: usize) -> Vec<Gateway> {
    GATEWAY_SITES
        .iter()
        .take(count)
        .map(|&(name, lat_deg, lon_deg)| Gateway { name, lat_deg, lon_deg })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    pub t: f64,
    pub position_update_interval: f64,
}

impl SimClock {
    pub fn new(position_update_interval: f64) -> Self {
        assert!(position_update_interval > 0.0);
        SimClock { t: 0.0, position_update_interval }
    }

    /// Epoch of the position snapshot in force at `t`.
    pub fn snapshot_time(&self, t: f64) -> f64 {
        (t / self.position_update_interval).floor() * self.position_update_interval
    }
}

/// `T = 2π√(a³/μ)`.
pub fn orbital_period(semi_major_axis_m: f64) -> Result<f64, OrbitError> {
    let a = semi_major_axis_m;
    if !a.is_finite() || a <= EARTH_RADIUS_M {
        return Err(OrbitError::SemiMajorAxis(a));
    }
    Ok(2.0 * PI * (a * a * a / MU_EARTH).sqrt())
}

pub fn geodetic_to_ecef(lat_deg: f64, lon_deg: f64, radius_m: f64) -> [f64; 3] {
    let (lat, lon) = (lat_deg.to_radians(), lon_deg.to_radians());
    [
        radius_m * lat.cos() * lon.cos(),
        radius_m * lat.cos() * lon.sin(),
        radius_m * lat.sin(),
    ]
}

/// Satellite and gateway positions at time `t`. Satellites come first,
/// ordered by `(plane, slot)`, followed by the gateways in input order.
pub fn propagate(spec: &ConstellationSpec, gateways: &[Gateway], t: f64) -> Vec<NodePosition> {
    let r = spec.radius_m();
    let period = spec.period_s();
    // Reduce to a fraction of one revolution first so periodicity is exact to rounding.
    let advance = 2.0 * PI * (t / period).fract();
    let (sin_i, cos_i) = spec.inclination_rad.sin_cos();
    let mut out = Vec::with_capacity(spec.num_satellites() + gateways.len());
    for plane in 0..spec.planes {
        let (sin_o, cos_o) = spec.plane_raan(plane).sin_cos();
        for slot in 0..spec.sats_per_plane {
            let u = 2.0 * PI * slot as f64 / spec.sats_per_plane as f64
                + plane as f64 * spec.phasing_offset
                + advance;
            let (sin_u, cos_u) = u.sin_cos();
            let ecef = [
                r * (cos_o * cos_u - sin_o * sin_u * cos_i),
                r * (sin_o * cos_u + cos_o * sin_u * cos_i),
                r * sin_u * sin_i,
            ];
            out.push(NodePosition {
                node_id: spec.satellite_id(plane, slot),
                kind: NodeKind::Satellite { plane, slot },
                ecef,
            });
        }
    }
    let base = spec.num_satellites();
    for (k, gw) in gateways.iter().enumerate() {
        out.push(NodePosition {
            node_id: NodeId(base + k),
            kind: NodeKind::Gateway { lat_deg: gw.lat_deg, lon_deg: gw.lon_deg },
            ecef: geodetic_to_ecef(gw.lat_deg, gw.lon_deg, EARTH_RADIUS_M),
        });
    }
    out
}

pub fn slant_range(a: &NodePosition, b: &NodePosition) -> f64 {
    distance(a.ecef, b.ecef)
}

pub(crate) fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm([a[0] - b[0], a[1] - b[1], a[2] - b[2]])
}

pub(crate) fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kepler() -> ConstellationSpec {
        ConstellationSpec::preset("kepler").unwrap()
    }

    #[test]
    fn kepler_period_is_about_96_minutes() {
        let t = orbital_period(EARTH_RADIUS_M + 600e3).unwrap();
        assert!((t / 60.0 - 96.7).abs() < 0.5, "{t}");
    }

    #[test]
    fn unit_period_inversion() {
        // a = (μ / (2π)²)^(1/3) gives T = 1 s
        let a = (MU_EARTH / (4.0 * PI * PI)).powf(1.0 / 3.0);
        // below the Earth surface, so the closed form is checked without the guard
        assert!((2.0 * PI * (a.powi(3) / MU_EARTH).sqrt() - 1.0).abs() < 1e-12);
        assert_eq!(orbital_period(a), Err(OrbitError::SemiMajorAxis(a)));
    }

    #[test]
    fn iridium_period_matches_scalar_evaluation() {
        let a: f64 = 6371e3 + 780e3;
        let expected = 2.0 * std::f64::consts::PI * (a.powf(3.0) / 3.98e14).powf(0.5);
        let got = orbital_period(a).unwrap();
        assert!((got - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn period_rejects_bad_input() {
        assert!(orbital_period(f64::NAN).is_err());
        assert!(orbital_period(-1.0).is_err());
        assert!(orbital_period(f64::INFINITY).is_err());
    }

    #[test]
    fn epoch_and_periodicity() {
        let spec = kepler();
        let gws = gateways(2);
        let p0 = propagate(&spec, &gws, 0.0);
        // slot 0 of plane 0 starts at the ascending node
        assert_eq!(p0[0].ecef, [spec.radius_m(), 0.0, 0.0]);
        for k in 1..4 {
            let pk = propagate(&spec, &gws, k as f64 * spec.period_s());
            for (a, b) in p0.iter().zip(&pk) {
                assert!(slant_range(a, b) < 1e-6);
            }
        }
    }

    #[test]
    fn quarter_period_polar_reaches_pole() {
        let spec = ConstellationSpec {
            planes: 1,
            sats_per_plane: 4,
            altitude_m: 600e3,
            inclination_rad: PI / 2.0,
            architecture: Architecture::WalkerStar,
            phasing_offset: 0.0,
        };
        let p = propagate(&spec, &[], spec.period_s() / 4.0);
        let r = spec.radius_m();
        assert!(distance(p[0].ecef, [0.0, 0.0, r]) < 1e-3);
        let (lat, _) = p[0].lat_lon_deg();
        assert!((lat - 90.0).abs() < 1e-6);
    }

    #[test]
    fn radii_are_exact() {
        for name in ["kepler", "iridium-next", "oneweb", "starlink-550"] {
            let spec = ConstellationSpec::preset(name).unwrap();
            spec.validate().unwrap();
            for p in propagate(&spec, &gateways(8), 1234.5) {
                let expect = if p.is_satellite() { spec.radius_m() } else { EARTH_RADIUS_M };
                assert!((norm(p.ecef) - expect).abs() < 1.0);
            }
        }
    }

    #[test]
    fn raan_span_depends_on_architecture() {
        let star = kepler();
        assert!((star.plane_raan(star.planes) - PI).abs() < 1e-12);
        let delta = ConstellationSpec::preset("starlink-550").unwrap();
        assert!((delta.plane_raan(delta.planes) - 2.0 * PI).abs() < 1e-12);
        assert!(star.plane_raan(star.planes - 1) < PI);
    }

    #[test]
    fn antipodal_and_overhead_ranges() {
        let spec = kepler();
        let p = propagate(&spec, &[], 0.0);
        // slot 0 and slot 10 of a 20-slot plane are antipodal
        let d = slant_range(&p[0], &p[10]);
        assert!((d - 2.0 * spec.radius_m()).abs() < 1e-6);

        let gw = &gateways(1)[0];
        let overhead = NodePosition {
            node_id: NodeId(0),
            kind: NodeKind::Satellite { plane: 0, slot: 0 },
            ecef: geodetic_to_ecef(gw.lat_deg, gw.lon_deg, EARTH_RADIUS_M + 600e3),
        };
        let ground = propagate(&spec, std::slice::from_ref(gw), 0.0).pop().unwrap();
        assert!((slant_range(&overhead, &ground) - 600e3).abs() < 1e3);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = kepler();
        s.planes = 0;
        assert!(s.validate().is_err());
        let mut s = kepler();
        s.inclination_rad = 0.0;
        assert!(s.validate().is_err());
        assert!(matches!(
            ConstellationSpec::preset("molniya"),
            Err(OrbitError::UnknownPreset(_))
        ));
    }

    #[test]
    fn gateway_order_is_fixed() {
        let g = gateways(8);
        assert_eq!(g[0].name, "Malaga");
        assert_eq!(g[1].name, "Los Angeles");
        assert_eq!(g[7].name, "Bangalore");
        assert_eq!(gateways(3).len(), 3);
    }

    proptest! {
        #[test]
        fn slant_range_is_a_metric(t in 0.0f64..6000.0, i in 0usize..148, j in 0usize..148, k in 0usize..148) {
            let p = propagate(&kepler(), &gateways(8), t);
            let (a, b, c) = (&p[i], &p[j], &p[k]);
            prop_assert!((slant_range(a, b) - slant_range(b, a)).abs() < 1e-9);
            prop_assert!(slant_range(a, c) <= slant_range(a, b) + slant_range(b, c) + 1e-6);
        }

        #[test]
        fn propagation_periodic(t in 0.0f64..6000.0, k in 1u32..5) {
            let spec = kepler();
            let a = propagate(&spec, &[], t);
            let b = propagate(&spec, &[], t + k as f64 * spec.period_s());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(slant_range(x, y) < 1e-6);
            }
        }
    }
}
