//! Service-curve MGFs for constant-rate servers, leftover service under blind
//! multiplexing, and concatenation of independent servers in tandem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mgf::{conv_star, CurveKind, MgfCurve, TailModel, ThetaGrid};
use crate::traffic::{aggregate_mgf, FlowSpec};

/// A work-conserving constant-rate server and the cross traffic it carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerSpec {
    pub label: String,
    /// bits per slot
    pub capacity: f64,
    #[serde(default)]
    pub cross: Vec<FlowSpec>,
}

impl ServerSpec {
    pub fn new(label: impl Into<String>, capacity: f64, cross: Vec<FlowSpec>) -> Result<Self> {
        let s = Self {
            label: label.into(),
            capacity,
            cross,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.capacity > 0.0 && self.capacity.is_finite()) {
            return Err(Error::param(format!(
                "server {}: capacity must be positive, got {}",
                self.label, self.capacity
            )));
        }
        self.cross.iter().try_for_each(FlowSpec::validate)
    }

    pub fn cross_burst(&self) -> f64 {
        self.cross.iter().map(FlowSpec::total_burst).sum()
    }

    pub fn cross_rate(&self) -> f64 {
        self.cross.iter().map(FlowSpec::total_rate).sum()
    }

    /// Service left to the through traffic at θ.
    pub fn leftover_curve(&self, theta: f64, horizon: usize) -> Result<MgfCurve> {
        let server = constant_rate_service(self.capacity, theta, horizon)?;
        if self.cross.is_empty() {
            return Ok(server);
        }
        leftover_service(&server, &aggregate_mgf(&self.cross, theta, horizon)?)
    }
}

/// How the through arrivals relate to the service they receive.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Dependence {
    #[default]
    Independent,
    /// Arrivals evaluated at `κθ`, service at `νθ` with `1/κ + 1/ν = 1`.
    Holder { kappa: f64 },
}

/// Through traffic crossing an ordered sequence of servers.
#[derive(Debug, Clone, PartialEq)]
pub struct TandemScenario {
    pub servers: Vec<ServerSpec>,
    pub through: Vec<FlowSpec>,
    pub epsilon: f64,
    pub slot_ms: f64,
    /// slots
    pub horizon: usize,
    pub theta_grid: ThetaGrid,
    pub dependence: Dependence,
}

impl TandemScenario {
    pub fn validate(&self) -> Result<()> {
        if self.servers.is_empty() {
            return Err(Error::InvalidScenario(
                "at least one server is required".into(),
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::InvalidScenario(format!(
                "epsilon must lie in (0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.slot_ms > 0.0 && self.slot_ms.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "slot duration must be positive, got {}",
                self.slot_ms
            )));
        }
        if self.horizon < 2 {
            return Err(Error::InvalidScenario(
                "horizon must be at least 2 slots".into(),
            ));
        }
        if let Dependence::Holder { kappa } = self.dependence {
            if !(kappa > 1.0 && kappa.is_finite()) {
                return Err(Error::InvalidScenario(format!(
                    "Hoelder exponent must exceed one, got {kappa}"
                )));
            }
        }
        for s in &self.servers {
            s.validate()
                .map_err(|e| Error::InvalidScenario(e.to_string()))?;
        }
        for f in &self.through {
            f.validate()
                .map_err(|e| Error::InvalidScenario(e.to_string()))?;
        }
        Ok(())
    }

    pub fn hops(&self) -> usize {
        self.servers.len()
    }

    pub fn through_burst(&self) -> f64 {
        self.through.iter().map(FlowSpec::total_burst).sum()
    }

    pub fn through_rate(&self) -> f64 {
        self.through.iter().map(FlowSpec::total_rate).sum()
    }

    /// Arrival curve of the through aggregate.
    pub fn arrival_curve(&self, theta: f64) -> Result<MgfCurve> {
        aggregate_mgf(&self.through, theta, self.horizon)
    }

    pub fn hop_services(&self, theta: f64) -> Result<Vec<MgfCurve>> {
        self.servers
            .iter()
            .map(|s| s.leftover_curve(theta, self.horizon))
            .collect()
    }

    /// End-to-end service curve of the whole tandem.
    pub fn network_service(&self, theta: f64) -> Result<MgfCurve> {
        concatenate(&self.hop_services(theta)?)
    }

    /// Milliseconds to slots.
    pub fn ms_to_slots(&self, ms: f64) -> f64 {
        ms / self.slot_ms
    }

    pub fn slots_to_ms(&self, slots: f64) -> f64 {
        slots * self.slot_ms
    }
}

/// `e^{-θCδ}` for `δ = 0..=horizon`.
pub fn constant_rate_service(capacity: f64, theta: f64, horizon: usize) -> Result<MgfCurve> {
    if !(capacity >= 0.0 && capacity.is_finite()) {
        return Err(Error::param(format!(
            "capacity must be >= 0, got {capacity}"
        )));
    }
    let log_values = (0..=horizon)
        .map(|d| -theta * capacity * d as f64)
        .collect();
    let tail = TailModel::from_log_ratio(-theta * capacity, horizon);
    MgfCurve::with_tail(theta, CurveKind::Service, log_values, tail)
}

/// `min[1, server(δ) · cross(δ)]`: what a flow can count on when the cross
/// traffic may be served first.
///
/// The result is not re-validated for monotonicity; at lags where the
/// product reaches one the clamp can leave rounding-level steps.
pub fn leftover_service(server: &MgfCurve, cross: &MgfCurve) -> Result<MgfCurve> {
    if server.theta() != cross.theta() {
        return Err(Error::ThetaMismatch {
            left: server.theta(),
            right: cross.theta(),
        });
    }
    if server.kind() != CurveKind::Service {
        return Err(Error::KindMismatch {
            expected: CurveKind::Service,
            found: server.kind(),
        });
    }
    if cross.kind() != CurveKind::Arrival {
        return Err(Error::KindMismatch {
            expected: CurveKind::Arrival,
            found: cross.kind(),
        });
    }
    let h = server.horizon().min(cross.horizon());
    let log_values = (0..=h)
        .map(|d| (server.log_at(d) + cross.log_at(d)).min(0.0))
        .collect();
    let tail = TailModel::from_log_ratio(server.tail().log_ratio() + cross.tail().log_ratio(), h);
    MgfCurve::from_log_values_unchecked(server.theta(), CurveKind::Service, log_values, tail)
}

/// Service curve of servers in series: left fold of [`conv_star`].
pub fn concatenate(curves: &[MgfCurve]) -> Result<MgfCurve> {
    let (first, rest) = curves.split_first().ok_or(Error::EmptySequence)?;
    rest.iter()
        .try_fold(first.clone(), |acc, c| conv_star(&acc, c))
}

/// Per-server stability margins at one θ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub theta: f64,
    /// Effective through rate `ρ(θ)` in bits per slot.
    pub through_rate: f64,
    /// `C_i - ρ(θ) - ρ_{c,i}(θ)` per server, bits per slot.
    pub margins: Vec<f64>,
    pub stable: bool,
}

/// Effective rates are the asymptotic log-MGF slopes divided by θ.
pub fn stability_check(scenario: &TandemScenario, theta: f64) -> StabilityReport {
    let rate = |flows: &[FlowSpec]| -> f64 {
        flows
            .iter()
            .map(|f| f.count as f64 * f.log_slope_bound(theta, u64::MAX))
            .sum::<f64>()
            / theta
    };
    let through_rate = rate(&scenario.through);
    let margins: Vec<f64> = scenario
        .servers
        .iter()
        .map(|s| s.capacity - through_rate - rate(&s.cross))
        .collect();
    let stable = margins.iter().all(|m| *m > 0.0);
    StabilityReport {
        theta,
        through_rate,
        margins,
        stable,
    }
}
