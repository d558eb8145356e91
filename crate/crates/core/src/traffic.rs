//! MGF bounds and `(σ(θ), ρ(θ))` envelopes for leaky-bucket, constant-bit-rate
//! and affine traffic, and their independent aggregates.
//!
//! All quantities are in bits and slots.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mgf::{CurveKind, MgfCurve, TailModel};
use crate::numeric::log_add_exp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowModel {
    /// Stationary source conforming to a `(b, r)` leaky bucket with mean rate `r`.
    LeakyBucket,
    /// Deterministic constant bit rate; burst must be zero.
    Cbr,
    /// Affine log-MGF envelope `θ(b + rδ)` valid at every θ.
    SigmaRho,
}

/// `count` independent, identically parameterized flows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    /// bits
    pub burst: f64,
    /// bits per slot
    pub rate: f64,
    pub count: u32,
    pub model: FlowModel,
}

impl FlowSpec {
    pub fn new(model: FlowModel, burst: f64, rate: f64, count: u32) -> Result<Self> {
        let spec = Self {
            burst,
            rate,
            count,
            model,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn leaky_bucket(burst: f64, rate: f64, count: u32) -> Result<Self> {
        Self::new(FlowModel::LeakyBucket, burst, rate, count)
    }

    pub fn cbr(rate: f64, count: u32) -> Result<Self> {
        Self::new(FlowModel::Cbr, 0.0, rate, count)
    }

    pub fn sigma_rho(sigma: f64, rho: f64, count: u32) -> Result<Self> {
        Self::new(FlowModel::SigmaRho, sigma, rho, count)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.burst >= 0.0 && self.burst.is_finite()) {
            return Err(Error::param(format!(
                "burst must be >= 0, got {}",
                self.burst
            )));
        }
        if !(self.rate >= 0.0 && self.rate.is_finite()) {
            return Err(Error::param(format!(
                "rate must be >= 0, got {}",
                self.rate
            )));
        }
        if self.count == 0 {
            return Err(Error::param("flow count must be at least 1"));
        }
        if self.model == FlowModel::Cbr && self.burst != 0.0 {
            return Err(Error::param("constant-bit-rate flows have no burst"));
        }
        Ok(())
    }

    /// Natural log of the single-flow MGF bound at lag `delta`.
    pub fn log_mgf(&self, theta: f64, delta: u64) -> f64 {
        match self.model {
            FlowModel::LeakyBucket => leaky_bucket_log_mgf(self.burst, self.rate, theta, delta),
            FlowModel::Cbr => theta * self.rate * delta as f64,
            FlowModel::SigmaRho => theta * (self.burst + self.rate * delta as f64),
        }
    }

    /// Upper bound on `log_mgf(θ, δ+1) - log_mgf(θ, δ)` for every `δ >= from`.
    ///
    /// For the leaky bucket, `d/dδ ln M ≤ θr + b/(δ(b + rδ))`, which decreases in δ.
    pub fn log_slope_bound(&self, theta: f64, from: u64) -> f64 {
        match self.model {
            FlowModel::Cbr | FlowModel::SigmaRho => theta * self.rate,
            FlowModel::LeakyBucket => {
                if self.rate == 0.0 {
                    0.0
                } else if self.burst == 0.0 {
                    theta * self.rate
                } else if from == 0 {
                    f64::INFINITY
                } else {
                    let d = from as f64;
                    theta * self.rate + self.burst / (d * (self.burst + self.rate * d))
                }
            }
        }
    }

    pub fn total_burst(&self) -> f64 {
        self.burst * self.count as f64
    }

    pub fn total_rate(&self) -> f64 {
        self.rate * self.count as f64
    }
}

/// `ln(1 + p(e^{θ(b+rδ)} - 1))` with `p = rδ/(b+rδ)`, evaluated as
/// `ln((1-p) + p e^{θ(b+rδ)})` so that large exponents stay finite.
pub fn leaky_bucket_log_mgf(burst: f64, rate: f64, theta: f64, delta: u64) -> f64 {
    let mean = rate * delta as f64;
    let peak = burst + mean;
    if delta == 0 || mean == 0.0 || peak == 0.0 {
        return 0.0;
    }
    let log_idle = (burst / peak).ln();
    let log_busy = (mean / peak).ln() + theta * peak;
    log_add_exp(log_idle, log_busy).max(0.0)
}

/// MGF bound of a stationary `(b, r)` leaky-bucket source over an interval of
/// `delta` slots. Overflows to `inf` when `θ(b + rδ)` exceeds about 709; use
/// [`leaky_bucket_log_mgf`] in that regime.
pub fn leaky_bucket_mgf(burst: f64, rate: f64, theta: f64, delta: u64) -> f64 {
    leaky_bucket_log_mgf(burst, rate, theta, delta).exp()
}

/// Exact MGF `e^{θrδ}` of a constant-bit-rate flow.
pub fn cbr_mgf(rate: f64, theta: f64, delta: u64) -> f64 {
    (theta * rate * delta as f64).exp()
}

/// One θ-slice of a `(σ(θ), ρ(θ))` envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaRhoEntry {
    pub theta: f64,
    /// bits
    pub sigma: f64,
    /// bits per slot
    pub rho: f64,
    /// Last lag at which domination was verified, `None` if valid for all lags.
    pub certified_horizon: Option<usize>,
}

/// θ-indexed affine envelope of an arrival log-MGF.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SigmaRhoEnvelope {
    entries: Vec<SigmaRhoEntry>,
}

impl SigmaRhoEnvelope {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces the entry for `entry.theta`.
    pub fn insert(&mut self, entry: SigmaRhoEntry) -> Result<()> {
        if !(entry.theta > 0.0) || !(entry.sigma >= 0.0) || !(entry.rho >= 0.0) {
            return Err(Error::param(format!("invalid envelope entry {entry:?}")));
        }
        match self
            .entries
            .binary_search_by(|e| e.theta.total_cmp(&entry.theta))
        {
            Ok(i) => self.entries[i] = entry,
            Err(i) => self.entries.insert(i, entry),
        }
        Ok(())
    }

    pub fn get(&self, theta: f64) -> Result<SigmaRhoEntry> {
        self.entries
            .binary_search_by(|e| e.theta.total_cmp(&theta))
            .map(|i| self.entries[i])
            .map_err(|_| Error::ThetaNotTabulated(theta))
    }

    pub fn entries(&self) -> &[SigmaRhoEntry] {
        &self.entries
    }
}

impl FromIterator<SigmaRhoEntry> for SigmaRhoEnvelope {
    fn from_iter<I: IntoIterator<Item = SigmaRhoEntry>>(iter: I) -> Self {
        let mut env = SigmaRhoEnvelope::new();
        for e in iter {
            // invalid entries are dropped
            let _ = env.insert(e);
        }
        env
    }
}

/// `e^{θ(σ(θ) + ρ(θ)δ)}` from a tabulated envelope.
pub fn sigma_rho_mgf(env: &SigmaRhoEnvelope, theta: f64, delta: u64) -> Result<f64> {
    let e = env.get(theta)?;
    Ok((theta * (e.sigma + e.rho * delta as f64)).exp())
}

/// Arrival curve of independent flows: the product of per-flow MGFs, each
/// raised to its count.
pub fn aggregate_mgf(flows: &[FlowSpec], theta: f64, horizon: usize) -> Result<MgfCurve> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::param(format!("theta must be positive, got {theta}")));
    }
    for f in flows {
        f.validate()?;
    }
    let log_values: Vec<f64> = (0..=horizon as u64)
        .map(|d| {
            flows
                .iter()
                .map(|f| f.count as f64 * f.log_mgf(theta, d))
                .sum()
        })
        .collect();
    let slope: f64 = flows
        .iter()
        .map(|f| f.count as f64 * f.log_slope_bound(theta, horizon as u64))
        .sum();
    let tail = TailModel::from_log_ratio(slope, horizon);
    MgfCurve::with_tail(theta, CurveKind::Arrival, log_values, tail)
}

/// Arrival curve `e^{θ(σ+ρδ)}` for one envelope entry.
pub fn sigma_rho_curve(entry: &SigmaRhoEntry, horizon: usize) -> Result<MgfCurve> {
    let theta = entry.theta;
    let log_values = (0..=horizon)
        .map(|d| theta * (entry.sigma + entry.rho * d as f64))
        .collect();
    let tail = TailModel::from_log_ratio(theta * entry.rho, horizon);
    MgfCurve::with_tail(theta, CurveKind::Arrival, log_values, tail)
}

/// `(1/(θt)) ln M(θ, t)` in bits per slot.
pub fn effective_bandwidth(curve: &MgfCurve, t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::param("effective bandwidth needs t >= 1"));
    }
    Ok(curve.log_at(t) / (curve.theta() * t as f64))
}

/// Tightest affine envelope of `ln M / θ` on the curve's grid.
///
/// `ρ` is the steepest one-step increment and `σ` the smallest intercept that
/// keeps the line above every tabulated point. The result is certified only
/// up to the curve's horizon.
pub fn fit_sigma_rho(curve: &MgfCurve) -> Result<SigmaRhoEntry> {
    if curve.kind() != CurveKind::Arrival {
        return Err(Error::KindMismatch {
            expected: CurveKind::Arrival,
            found: curve.kind(),
        });
    }
    let theta = curve.theta();
    let lv = curve.log_values();
    let rho = lv
        .windows(2)
        .map(|w| (w[1] - w[0]) / theta)
        .fold(0.0f64, f64::max);
    let sigma = lv
        .iter()
        .enumerate()
        .map(|(d, l)| l / theta - rho * d as f64)
        .fold(0.0f64, f64::max);
    for (d, l) in lv.iter().enumerate() {
        let bound = theta * (sigma + rho * d as f64);
        if *l > bound + 1e-9 * bound.abs().max(1.0) {
            return Err(Error::InvalidCurve(format!(
                "fitted envelope fails to dominate at lag {d}"
            )));
        }
    }
    Ok(SigmaRhoEntry {
        theta,
        sigma,
        rho,
        certified_horizon: Some(curve.horizon()),
    })
}
