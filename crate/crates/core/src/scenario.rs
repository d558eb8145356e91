//! JSON scenario files in physical units (Gb/s, Mb/s, Mb, ms).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mgf::ThetaGrid;
use crate::service::{Dependence, ServerSpec, TandemScenario};
use crate::traffic::{FlowModel, FlowSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub units: Units,
    pub servers: Vec<ServerEntry>,
    pub through: Vec<FlowEntry>,
    pub epsilon: f64,
    pub horizon_slots: usize,
    #[serde(default)]
    pub theta_grid: GridSpec,
    #[serde(default)]
    pub dependence: Dependence,
    #[serde(default)]
    pub experiment: ExperimentParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub slot_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerEntry {
    #[serde(default)]
    pub label: String,
    pub capacity_gbps: f64,
    #[serde(default)]
    pub cross: Vec<FlowEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowEntry {
    pub model: FlowModel,
    #[serde(default)]
    pub burst_mb: f64,
    pub rate_mbps: f64,
    #[serde(default = "one")]
    pub count: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min_per_bit: f64,
    pub max_per_bit: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            min_per_bit: ThetaGrid::DEFAULT_MIN,
            max_per_bit: ThetaGrid::DEFAULT_MAX,
            points: ThetaGrid::DEFAULT_POINTS,
        }
    }
}

impl GridSpec {
    pub fn to_grid(&self) -> Result<ThetaGrid> {
        ThetaGrid::logspace(self.min_per_bit, self.max_per_bit, self.points)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentParams {
    pub fig2: Option<Fig2Params>,
    pub fig3: Option<Fig3Params>,
    pub fig4: Option<Fig4Params>,
    pub fig5: Option<Fig5Params>,
    pub simcheck: Option<SimcheckParams>,
    pub oracle: Option<OracleParams>,
}

/// Sweeps the count of the first through flow from 1 to `max_flows`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig2Params {
    pub target_delay_ms: f64,
    pub max_flows: u32,
    /// Further slot durations whose admissible utilization is reported.
    #[serde(default)]
    pub sensitivity_slot_ms: Vec<f64>,
}

/// Splits fixed cross totals over `m` flows at the first server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig3Params {
    pub m_values: Vec<u32>,
    pub cross_burst_mb: f64,
    pub cross_rate_mbps: f64,
}

/// `m` through flows and `m` cross flows of identical parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig4Params {
    pub m_values: Vec<u32>,
    pub burst_mb: f64,
    pub rate_mbps: f64,
}

/// Replicates the first server `n` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig5Params {
    pub hops: Vec<u32>,
    #[serde(default = "yes")]
    pub iterative: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimcheckParams {
    pub epsilon: f64,
    pub slots: usize,
    pub replications: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "unit")]
    pub period_factor: f64,
    /// Slots used for the brute-force concatenation check.
    #[serde(default = "small_slots")]
    pub small_instance_slots: usize,
    #[serde(default = "small_runs")]
    pub small_instances: u32,
}

fn default_seed() -> u64 {
    1
}

fn unit() -> f64 {
    1.0
}

fn small_slots() -> usize {
    150
}

fn small_runs() -> u32 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleParams {
    pub instances: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub mgf_replications: u32,
}

impl FlowEntry {
    pub fn to_flow(&self, slot_ms: f64) -> Result<FlowSpec> {
        FlowSpec::new(
            self.model,
            self.burst_mb * 1e6,
            mbps_to_bits_per_slot(self.rate_mbps, slot_ms),
            self.count,
        )
    }
}

pub fn mbps_to_bits_per_slot(mbps: f64, slot_ms: f64) -> f64 {
    mbps * 1e6 * slot_ms * 1e-3
}

pub fn gbps_to_bits_per_slot(gbps: f64, slot_ms: f64) -> f64 {
    gbps * 1e9 * slot_ms * 1e-3
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidScenario(e.to_string()))?;
        file.to_tandem()?;
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Internal units: bits, slots, bits per slot.
    pub fn to_tandem(&self) -> Result<TandemScenario> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidScenario(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let slot = self.units.slot_ms;
        if !(slot > 0.0 && slot.is_finite()) {
            return Err(Error::InvalidScenario(format!("bad slot duration {slot}")));
        }
        let invalid = |e: Error| Error::InvalidScenario(e.to_string());
        let flows = |list: &[FlowEntry]| -> Result<Vec<FlowSpec>> {
            list.iter()
                .map(|f| f.to_flow(slot).map_err(invalid))
                .collect()
        };
        let servers = self
            .servers
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let label = if s.label.is_empty() {
                    format!("server{}", i + 1)
                } else {
                    s.label.clone()
                };
                ServerSpec::new(
                    label,
                    gbps_to_bits_per_slot(s.capacity_gbps, slot),
                    flows(&s.cross)?,
                )
                .map_err(invalid)
            })
            .collect::<Result<Vec<_>>>()?;
        let scenario = TandemScenario {
            servers,
            through: flows(&self.through)?,
            epsilon: self.epsilon,
            slot_ms: slot,
            horizon: self.horizon_slots,
            theta_grid: self.theta_grid.to_grid().map_err(invalid)?,
            dependence: self.dependence,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn with_slot_ms(mut self, slot_ms: f64) -> Self {
        self.units.slot_ms = slot_ms;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_theta_grid(mut self, grid: GridSpec) -> Self {
        self.theta_grid = grid;
        self
    }
}

impl std::str::FromStr for GridSpec {
    type Err = Error;

    /// `min:max:points`, e.g. `1e-8:1e-2:64`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad =
            || Error::InvalidScenario(format!("theta grid must be min:max:points, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let spec = GridSpec {
            min_per_bit: parts[0].trim().parse().map_err(|_| bad())?,
            max_per_bit: parts[1].trim().parse().map_err(|_| bad())?,
            points: parts[2].trim().parse().map_err(|_| bad())?,
        };
        spec.to_grid()
            .map_err(|e| Error::InvalidScenario(e.to_string()))?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "schema_version": 1,
        "units": {"slot_ms": 0.1},
        "servers": [{"capacity_gbps": 2.4,
                     "cross": [{"model": "leaky-bucket", "burst_mb": 20, "rate_mbps": 600}]}],
        "through": [{"model": "leaky-bucket", "burst_mb": 1, "rate_mbps": 30, "count": 20}],
        "epsilon": 1e-6,
        "horizon_slots": 4096
    }"#;

    #[test]
    fn parses_and_converts_units() {
        let f = ScenarioFile::from_json(MINIMAL).unwrap();
        let s = f.to_tandem().unwrap();
        assert_eq!(s.servers[0].capacity, 240_000.0);
        assert_eq!(s.servers[0].label, "server1");
        assert_eq!(s.servers[0].cross[0].burst, 20e6);
        assert!((s.servers[0].cross[0].rate - 60_000.0).abs() < 1e-9);
        assert!((s.through[0].rate - 3_000.0).abs() < 1e-9);
        assert_eq!(s.through[0].count, 20);
        assert_eq!(s.theta_grid, ThetaGrid::default());
        let again = ScenarioFile::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(again, f);
    }

    #[test]
    fn rejects_unknown_fields_and_bad_values() {
        let extra = MINIMAL.replacen("\"epsilon\"", "\"colour\": 3, \"epsilon\"", 1);
        assert!(matches!(
            ScenarioFile::from_json(&extra),
            Err(Error::InvalidScenario(_))
        ));
        let eps = MINIMAL.replace("1e-6", "2.0");
        assert!(matches!(
            ScenarioFile::from_json(&eps),
            Err(Error::InvalidScenario(_))
        ));
        let ver = MINIMAL.replace("\"schema_version\": 1", "\"schema_version\": 7");
        assert!(ScenarioFile::from_json(&ver).is_err());
        let cbr = MINIMAL.replace(
            "\"model\": \"leaky-bucket\", \"burst_mb\": 20",
            "\"model\": \"cbr\", \"burst_mb\": 20",
        );
        assert!(ScenarioFile::from_json(&cbr).is_err());
    }

    #[test]
    fn grid_override_parses() {
        let g: GridSpec = "1e-7:1e-3:16".parse().unwrap();
        assert_eq!(g.points, 16);
        assert!("1e-7:1e-3".parse::<GridSpec>().is_err());
        assert!("1e-3:1e-7:4".parse::<GridSpec>().is_err());
    }
}
