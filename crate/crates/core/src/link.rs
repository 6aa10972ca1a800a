//! Free-space link budget and DVB-S2 rate selection.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orbit::SPEED_OF_LIGHT;

/// Boltzmann constant in J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("distance must be positive and finite, got {0} m")]
    Distance(f64),
    #[error("invalid radio parameters: {0}")]
    Params(&'static str),
    #[error("mcs table: {0}")]
    Table(String),
    #[error("mcs table io: {0}")]
    Io(#[from] std::io::Error),
}

/// One direction of a point-to-point radio link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioParams {
    pub tx_power_w: f64,
    pub carrier_hz: f64,
    pub tx_antenna_diameter_m: f64,
    pub rx_antenna_diameter_m: f64,
    pub antenna_efficiency: f64,
    pub bandwidth_hz: f64,
    pub system_noise_temp_k: f64,
}

impl RadioParams {
    pub fn validate(&self) -> Result<(), LinkError> {
        let positive = [
            self.tx_power_w,
            self.carrier_hz,
            self.tx_antenna_diameter_m,
            self.rx_antenna_diameter_m,
            self.antenna_efficiency,
            self.bandwidth_hz,
            self.system_noise_temp_k,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(LinkError::Params("all radio parameters must be positive"));
        }
        if self.antenna_efficiency > 1.0 {
            return Err(LinkError::Params("antenna efficiency must be <= 1"));
        }
        Ok(())
    }

    pub fn snr(&self, distance_m: f64) -> Result<f64, LinkError> {
        let noise = BOLTZMANN * self.system_noise_temp_k * self.bandwidth_hz;
        Ok(received_power(self, distance_m)? / noise)
    }
}

/// Parabolic dish gain `η(πDf/c)²`.
pub fn parabolic_gain(efficiency: f64, diameter_m: f64, carrier_hz: f64) -> f64 {
    let x = PI * diameter_m * carrier_hz / SPEED_OF_LIGHT;
    efficiency * x * x
}

/// `P_r = P_t G_tx G_rx (c / 4πdf)²`.
pub fn received_power(params: &RadioParams, distance_m: f64) -> Result<f64, LinkError> {
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return Err(LinkError::Distance(distance_m));
    }
    let g_tx = parabolic_gain(params.antenna_efficiency, params.tx_antenna_diameter_m, params.carrier_hz);
    let g_rx = parabolic_gain(params.antenna_efficiency, params.rx_antenna_diameter_m, params.carrier_hz);
    let fspl = SPEED_OF_LIGHT / (4.0 * PI * distance_m * params.carrier_hz);
    Ok(params.tx_power_w * g_tx * g_rx * fspl * fspl)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McsEntry {
    /// Spectral efficiency in bit/s/Hz.
    pub rho: f64,
    pub snr_min_db: f64,
}

/// Modulation and coding schemes sorted by strictly increasing efficiency and threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    entries: Vec<McsEntry>,
}

/// Subset of the DVB-S2 MODCODs (EN 302 307, AWGN ideal Es/N0).
pub const DVB_S2_SUBSET: [(f64, f64); 12] = [
    (0.490_243, -2.35), // QPSK 1/4
    (0.656_448, -1.24), // QPSK 1/3
    (0.988_858, 1.00),  // QPSK 1/2
    (1.322_253, 3.10),  // QPSK 2/3
    (1.487_473, 4.03),  // QPSK 3/4
    (1.779_991, 5.50),  // 8PSK 3/5
    (2.228_124, 7.91),  // 8PSK 3/4
    (2.966_728, 10.21), // 16APSK 3/4
    (3.300_184, 11.61), // 16APSK 5/6
    (3.703_295, 12.73), // 32APSK 3/4
    (4.119_540, 14.28), // 32APSK 5/6
    (4.453_027, 16.05), // 32APSK 9/10
];

impl Default for McsTable {
    fn default() -> Self {
        let entries = DVB_S2_SUBSET
            .iter()
            .map(|&(rho, snr_min_db)| McsEntry { rho, snr_min_db })
            .collect();
        McsTable::new(entries).expect("builtin table is sorted")
    }
}

impl McsTable {
    pub fn new(entries: Vec<McsEntry>) -> Result<Self, LinkError> {
        if entries.is_empty() {
            return Err(LinkError::Table("table is empty".into()));
        }
        for (k, e) in entries.iter().enumerate() {
            if !(e.rho.is_finite() && e.rho > 0.0 && e.snr_min_db.is_finite()) {
                return Err(LinkError::Table(format!("row {}: non-finite or non-positive value", k + 1)));
            }
        }
        for (k, w) in entries.windows(2).enumerate() {
            if !(w[1].rho > w[0].rho && w[1].snr_min_db > w[0].snr_min_db) {
                return Err(LinkError::Table(format!(
                    "row {} is not strictly increasing in rho and snr_min_db",
                    k + 2
                )));
            }
        }
        Ok(McsTable { entries })
    }

    /// Parses a CSV with header `rho,snr_min_db`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self, LinkError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| LinkError::Table(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["rho", "snr_min_db"] {
            return Err(LinkError::Table(format!("expected header `rho,snr_min_db`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut entries = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| LinkError::Table(e.to_string()))?;
            let parse = |idx: usize| -> Result<f64, LinkError> {
                rec.get(idx)
                    .ok_or_else(|| LinkError::Table(format!("row {}: missing column", k + 1)))?
                    .parse::<f64>()
                    .map_err(|e| LinkError::Table(format!("row {}: {e}", k + 1)))
            };
            entries.push(McsEntry { rho: parse(0)?, snr_min_db: parse(1)? });
        }
        McsTable::new(entries)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self, LinkError> {
        McsTable::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }

    /// Highest efficiency whose threshold is met, if any.
    pub fn best_rho(&self, snr_linear: f64) -> Option<f64> {
        let snr_db = 10.0 * snr_linear.log10();
        self.entries
            .iter()
            .rev()
            .find(|e| snr_db >= e.snr_min_db)
            .map(|e| e.rho)
    }
}

/// `R = W·max{ρ : SNR ≥ SNR_min(ρ)}`; zero when no scheme closes the link.
pub fn select_rate(params: &RadioParams, table: &McsTable, distance_m: f64) -> Result<f64, LinkError> {
    let snr = params.snr(distance_m)?;
    Ok(table.best_rho(snr).map_or(0.0, |rho| params.bandwidth_hz * rho))
}
