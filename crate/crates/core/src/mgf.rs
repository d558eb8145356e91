//! θ-indexed MGF curves over a discrete lag grid and the conventional-algebra
//! operators `∗` and `∘` that stand in for min-plus convolution and
//! de-convolution.
//!
//! Curves are stored as natural logarithms of the bound values. An arrival
//! curve bounds `E exp(θ A(t, t + δ))`, a service curve bounds
//! `E exp(-θ S(t, t + δ))`; both depend only on the lag `δ`.
//!
//! Infinite sums (the `∘` operator) are evaluated up to the grid horizon and
//! closed with a geometric tail bound. The tail ratio is certified from the
//! last [`TAIL_WINDOW`] increments of both operands; if it does not decay the
//! operation fails with [`Error::Unstable`] instead of truncating silently.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{
    log_convolve, log_correlate, log_increment, log_one_minus_exp, log_sum_exp_by,
};

/// Number of trailing increments inspected when certifying geometric decay.
pub const TAIL_WINDOW: usize = 16;

/// A tail ratio at or above this value is treated as non-decaying.
pub const STABILITY_LIMIT: f64 = 1.0 - 1e-9;

const MONOTONE_SLACK: f64 = 1e-12;

/// Strictly increasing, positive values of the free Chernoff parameter (1/bit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ThetaGrid {
    values: Vec<f64>,
}

impl ThetaGrid {
    pub const DEFAULT_MIN: f64 = 1e-8;
    pub const DEFAULT_MAX: f64 = 1e-2;
    pub const DEFAULT_POINTS: usize = 64;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param("theta grid must not be empty"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::param("theta values must be positive and finite"));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("theta values must be strictly increasing"));
        }
        Ok(Self { values })
    }

    /// `points` logarithmically spaced values spanning `[min, max]`.
    pub fn logspace(min: f64, max: f64, points: usize) -> Result<Self> {
        if points == 0 || !(min > 0.0) || !(max >= min) {
            return Err(Error::param(format!(
                "bad theta range [{min}, {max}] with {points} points"
            )));
        }
        if points == 1 {
            return Self::new(vec![min]);
        }
        let (lo, hi) = (min.ln(), max.ln());
        let step = (hi - lo) / (points - 1) as f64;
        let values = (0..points)
            .map(|i| {
                if i == 0 {
                    min
                } else if i == points - 1 {
                    max
                } else {
                    (lo + step * i as f64).exp()
                }
            })
            .collect();
        Self::new(values)
    }

    pub fn single(theta: f64) -> Result<Self> {
        Self::new(vec![theta])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

impl Default for ThetaGrid {
    fn default() -> Self {
        Self::logspace(Self::DEFAULT_MIN, Self::DEFAULT_MAX, Self::DEFAULT_POINTS)
            .expect("default grid is valid")
    }
}

impl TryFrom<Vec<f64>> for ThetaGrid {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ThetaGrid> for Vec<f64> {
    fn from(grid: ThetaGrid) -> Self {
        grid.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveKind {
    Arrival,
    Service,
}

/// Extrapolation rule for lags beyond the stored grid.
///
/// Beyond `start` the curve is bounded by `log[start] + (δ - start) * log_ratio`.
/// A `log_ratio` of `-inf` means the curve is zero past the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailModel {
    log_ratio: f64,
    start: usize,
}

impl TailModel {
    pub fn from_log_ratio(log_ratio: f64, start: usize) -> Self {
        Self { log_ratio, start }
    }

    pub fn finite_support(start: usize) -> Self {
        Self {
            log_ratio: f64::NEG_INFINITY,
            start,
        }
    }

    /// Largest of the trailing increments; finite support if the last value is zero.
    pub fn from_log_values(values: &[f64]) -> Self {
        let start = values.len().saturating_sub(1);
        match values.last() {
            None => Self::finite_support(0),
            Some(&last) if last == f64::NEG_INFINITY => Self::finite_support(start),
            Some(_) if values.len() == 1 => Self::from_log_ratio(0.0, start),
            Some(_) => {
                let first = values.len().saturating_sub(TAIL_WINDOW + 1);
                let log_ratio = values[first..]
                    .windows(2)
                    .map(|w| log_increment(w[0], w[1]))
                    .fold(f64::NEG_INFINITY, f64::max);
                Self::from_log_ratio(log_ratio, start)
            }
        }
    }

    pub fn log_ratio(&self) -> f64 {
        self.log_ratio
    }

    pub fn ratio(&self) -> f64 {
        self.log_ratio.exp()
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn is_finite_support(&self) -> bool {
        self.log_ratio == f64::NEG_INFINITY
    }

    /// True if a sum over this tail alone could not converge.
    pub fn is_unstable(&self) -> bool {
        !(self.log_ratio < STABILITY_LIMIT.ln())
    }
}

/// A bound on the MGF of an arrival or service process at a fixed θ,
/// tabulated over lags `0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct MgfCurve {
    theta: f64,
    kind: CurveKind,
    log_values: Vec<f64>,
    tail: TailModel,
}

impl MgfCurve {
    /// Validated constructor; the tail model is inferred from the trailing values.
    pub fn from_log_values(theta: f64, kind: CurveKind, log_values: Vec<f64>) -> Result<Self> {
        let tail = TailModel::from_log_values(&log_values);
        Self::with_tail(theta, kind, log_values, tail)
    }

    pub fn with_tail(
        theta: f64,
        kind: CurveKind,
        log_values: Vec<f64>,
        tail: TailModel,
    ) -> Result<Self> {
        let curve = Self::from_log_values_unchecked(theta, kind, log_values, tail)?;
        curve.validate()?;
        Ok(curve)
    }

    /// Builds from linear values (not logarithms).
    pub fn from_values(theta: f64, kind: CurveKind, values: &[f64]) -> Result<Self> {
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidCurve("negative or NaN MGF value".into()));
        }
        Self::from_log_values(theta, kind, values.iter().map(|v| v.ln()).collect())
    }

    /// Skips the monotonicity and range invariants of `kind`.
    ///
    /// Intermediate results (a convolution that exceeds one, an arbitrary test
    /// function) are legitimate inputs to the operators; only θ, emptiness and
    /// NaN are checked.
    pub fn from_log_values_unchecked(
        theta: f64,
        kind: CurveKind,
        log_values: Vec<f64>,
        tail: TailModel,
    ) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::param(format!("theta must be positive, got {theta}")));
        }
        if log_values.is_empty() {
            return Err(Error::InvalidCurve("empty lag grid".into()));
        }
        if log_values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::InvalidCurve("NaN or infinite MGF value".into()));
        }
        Ok(Self {
            theta,
            kind,
            log_values,
            tail,
        })
    }

    fn validate(&self) -> Result<()> {
        let slack = |v: f64| MONOTONE_SLACK * v.abs().max(1.0);
        match self.kind {
            CurveKind::Arrival => {
                if let Some((i, v)) = self
                    .log_values
                    .iter()
                    .enumerate()
                    .find(|(_, v)| **v < -MONOTONE_SLACK)
                {
                    return Err(Error::InvalidCurve(format!(
                        "arrival MGF below one at lag {i} (ln = {v})"
                    )));
                }
                if let Some(i) = self
                    .log_values
                    .windows(2)
                    .position(|w| w[1] < w[0] - slack(w[0]))
                {
                    return Err(Error::InvalidCurve(format!(
                        "arrival MGF decreases at lag {}",
                        i + 1
                    )));
                }
            }
            CurveKind::Service => {
                if let Some((i, v)) = self
                    .log_values
                    .iter()
                    .enumerate()
                    .find(|(_, v)| **v > MONOTONE_SLACK)
                {
                    return Err(Error::InvalidCurve(format!(
                        "service MGF above one at lag {i} (ln = {v})"
                    )));
                }
                if let Some(i) = self
                    .log_values
                    .windows(2)
                    .position(|w| w[0].is_finite() && w[1] > w[0] + slack(w[0]))
                {
                    return Err(Error::InvalidCurve(format!(
                        "service MGF increases at lag {}",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn horizon(&self) -> usize {
        self.log_values.len() - 1
    }

    pub fn tail(&self) -> TailModel {
        self.tail
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|v| v.exp()).collect()
    }

    /// Log-value at `lag`, extrapolated with the tail model past the horizon.
    #[inline]
    pub fn log_at(&self, lag: usize) -> f64 {
        let h = self.horizon();
        if lag <= h {
            self.log_values[lag]
        } else if self.tail.is_finite_support() {
            f64::NEG_INFINITY
        } else {
            self.log_values[h] + (lag - h) as f64 * self.tail.log_ratio
        }
    }

    pub fn value_at(&self, lag: usize) -> f64 {
        self.log_at(lag).exp()
    }

    /// Index of the last nonzero value, if any.
    fn last_support(&self) -> Option<usize> {
        self.log_values
            .iter()
            .rposition(|v| *v != f64::NEG_INFINITY)
    }

    /// Largest log-increment at lags `from..` including the tail model.
    fn max_increment_from(&self, from: usize) -> f64 {
        let h = self.horizon();
        let mut m = if self.tail.is_finite_support() {
            f64::NEG_INFINITY
        } else {
            self.tail.log_ratio
        };
        if from < h {
            for k in from..h {
                m = m.max(log_increment(self.log_values[k], self.log_values[k + 1]));
            }
        }
        m
    }

    /// Same values under a different θ label; used to undo rounding after
    /// Hoelder rescaling.
    pub(crate) fn relabel(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    /// The curve `M(κθ)^{1/κ}` re-labelled at θ, from a curve tabulated at `κθ`.
    ///
    /// This is one factor of the Hoelder bound used when independence cannot
    /// be assumed.
    pub fn holder_rescaled(&self, kappa: f64) -> Result<Self> {
        if !(kappa > 1.0 && kappa.is_finite()) {
            return Err(Error::param(format!(
                "Hoelder exponent must exceed one, got {kappa}"
            )));
        }
        let log_values = self.log_values.iter().map(|v| v / kappa).collect();
        let tail = TailModel::from_log_ratio(self.tail.log_ratio / kappa, self.tail.start);
        Self::from_log_values_unchecked(self.theta / kappa, self.kind, log_values, tail)
    }
}

/// Conjugate exponents for Hoelder's inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderPair {
    kappa: f64,
    nu: f64,
}

impl HolderPair {
    pub fn new(kappa: f64, nu: f64) -> Result<Self> {
        let ok = kappa > 1.0
            && nu > 1.0
            && kappa.is_finite()
            && nu.is_finite()
            && (1.0 / kappa + 1.0 / nu - 1.0).abs() <= 1e-12;
        if ok {
            Ok(Self { kappa, nu })
        } else {
            Err(Error::InvalidHolderPair { kappa, nu })
        }
    }

    /// The pair `(κ, κ/(κ-1))`.
    pub fn from_kappa(kappa: f64) -> Result<Self> {
        Self::new(kappa, kappa / (kappa - 1.0))
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
}

/// Result of a `∘` evaluation: the truncated sum plus a certified bound on the
/// remainder, both as natural logarithms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deconvolution {
    pub log_truncated: f64,
    pub log_tail: f64,
}

impl Deconvolution {
    pub const ZERO: Self = Self {
        log_truncated: f64::NEG_INFINITY,
        log_tail: f64::NEG_INFINITY,
    };

    /// `ln(truncated + tail)`: the conservative value.
    pub fn log_value(&self) -> f64 {
        crate::numeric::log_add_exp(self.log_truncated, self.log_tail)
    }

    pub fn value(&self) -> f64 {
        self.log_value().exp()
    }

    pub fn truncated(&self) -> f64 {
        self.log_truncated.exp()
    }

    pub fn tail_bound(&self) -> f64 {
        self.log_tail.exp()
    }

    /// Share of the reported value that comes from the tail bound.
    pub fn tail_fraction(&self) -> f64 {
        if self.log_tail == f64::NEG_INFINITY {
            0.0
        } else {
            (self.log_tail - self.log_value()).exp()
        }
    }
}

fn same_theta(x: &MgfCurve, y: &MgfCurve) -> Result<()> {
    if x.theta == y.theta {
        Ok(())
    } else {
        Err(Error::ThetaMismatch {
            left: x.theta,
            right: y.theta,
        })
    }
}

fn expect_kind(c: &MgfCurve, expected: CurveKind) -> Result<()> {
    if c.kind == expected {
        Ok(())
    } else {
        Err(Error::KindMismatch {
            expected,
            found: c.kind,
        })
    }
}

/// Univariate `(x ∗ y)(δ) = Σ_{τ=0..δ} x(δ-τ) y(τ)` over the common horizon.
///
/// The result may exceed one; clamping is left to the caller.
pub fn conv_star(x: &MgfCurve, y: &MgfCurve) -> Result<MgfCurve> {
    same_theta(x, y)?;
    expect_kind(x, CurveKind::Service)?;
    expect_kind(y, CurveKind::Service)?;
    let h = x.horizon().min(y.horizon());
    let (lx, ly) = (&x.log_values, &y.log_values);
    let out = log_convolve(lx, ly, h + 1);
    let finite = x.tail.is_finite_support()
        && y.tail.is_finite_support()
        && match (x.last_support(), y.last_support()) {
            (Some(a), Some(b)) => a + b <= h,
            _ => true,
        };
    let tail = if finite {
        TailModel::finite_support(h)
    } else {
        let t = TailModel::from_log_values(&out);
        if t.is_finite_support() {
            // zero at the horizon but not beyond it: nothing certifiable
            TailModel::from_log_ratio(f64::INFINITY, h)
        } else {
            let inputs = x.tail.log_ratio.max(y.tail.log_ratio);
            TailModel::from_log_ratio(t.log_ratio.max(inputs), h)
        }
    };
    MgfCurve::from_log_values_unchecked(x.theta, CurveKind::Service, out, tail)
}

/// Univariate `(x ∘ y)(δ) = Σ_{τ ≥ max(0, -δ)} x(δ+τ) y(τ)` with a certified tail.
pub fn deconv_circle(x: &MgfCurve, y: &MgfCurve, delta: i64) -> Result<Deconvolution> {
    same_theta(x, y)?;
    expect_kind(x, CurveKind::Arrival)?;
    expect_kind(y, CurveKind::Service)?;
    deconv_terms(x, y, delta)
}

pub(crate) fn deconv_terms(x: &MgfCurve, y: &MgfCurve, delta: i64) -> Result<Deconvolution> {
    let h = y.horizon();
    let tau0 = if delta < 0 {
        delta.unsigned_abs() as usize
    } else {
        0
    };
    let x_lag = |tau: usize| (delta + tau as i64) as usize;
    let needs_tail = !y.tail.is_finite_support()
        && !(x.tail.is_finite_support() && delta + h as i64 >= x.horizon() as i64);

    if tau0 > h {
        return if needs_tail {
            Err(Error::HorizonTooShort {
                needed: TAIL_WINDOW + 1,
                available: 0,
            })
        } else {
            Ok(Deconvolution::ZERO)
        };
    }
    let count = h - tau0 + 1;
    if needs_tail && count < TAIL_WINDOW + 1 {
        return Err(Error::HorizonTooShort {
            needed: TAIL_WINDOW + 1,
            available: count,
        });
    }

    let ly = &y.log_values;
    let log_truncated = log_sum_exp_by(tau0..=h, |tau| x.log_at(x_lag(tau)) + ly[tau]);
    if !needs_tail {
        return Ok(Deconvolution {
            log_truncated,
            log_tail: f64::NEG_INFINITY,
        });
    }

    // Future term ratios are bounded by the largest x increment still ahead
    // (trailing window, remaining grid, tail model) times the same for y.
    let first = h - TAIL_WINDOW;
    let mut rx = x.max_increment_from(x_lag(h));
    for tau in first..h {
        rx = rx.max(log_increment(
            x.log_at(x_lag(tau)),
            x.log_at(x_lag(tau + 1)),
        ));
    }
    let mut ry = y.tail.log_ratio;
    for tau in first..h {
        ry = ry.max(log_increment(ly[tau], ly[tau + 1]));
    }
    let mut r = rx + ry;
    if r.is_nan() {
        r = f64::INFINITY;
    }
    if !(r < STABILITY_LIMIT.ln()) {
        return Err(Error::Unstable {
            theta: x.theta,
            ratio: r.exp(),
        });
    }
    let last = x.log_at(x_lag(h)) + ly[h];
    let log_tail = if last == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        last + r - log_one_minus_exp(r)
    };
    Ok(Deconvolution {
        log_truncated,
        log_tail,
    })
}

/// `x(δ) · y(δ)` over the common horizon.
///
/// Mixed kinds produce a service-kind curve (the unclamped leftover-service
/// integrand).
pub fn pointwise_product(x: &MgfCurve, y: &MgfCurve) -> Result<MgfCurve> {
    same_theta(x, y)?;
    let h = x.horizon().min(y.horizon());
    let log_values: Vec<f64> = (0..=h).map(|d| x.log_values[d] + y.log_values[d]).collect();
    let kind = if x.kind == y.kind {
        x.kind
    } else {
        CurveKind::Service
    };
    let tail = if x.tail.is_finite_support() || y.tail.is_finite_support() {
        TailModel::finite_support(h)
    } else {
        TailModel::from_log_ratio(x.tail.log_ratio + y.tail.log_ratio, h)
    };
    MgfCurve::from_log_values_unchecked(x.theta, kind, log_values, tail)
}

/// `x(δ)^{1/κ} · y(δ)^{1/ν}` with `x` tabulated at `κθ` and `y` at `νθ`.
pub fn holder_product(x: &MgfCurve, y: &MgfCurve, pair: HolderPair) -> Result<MgfCurve> {
    let theta = x.theta / pair.kappa;
    let expected = pair.nu * theta;
    if (y.theta - expected).abs() > 1e-12 * expected {
        return Err(Error::ThetaMismatch {
            left: expected,
            right: y.theta,
        });
    }
    let xs = x.holder_rescaled(pair.kappa)?;
    let mut ys = y.holder_rescaled(pair.nu)?;
    ys.theta = theta;
    pointwise_product(&xs, &ys)
}

/// The output-bound curve `δ ↦ (x ∘ y)(δ)` for `δ = 0..=min(horizons)`.
///
/// The result is an arrival-kind curve usable as input to a downstream hop.
pub fn output_curve(x: &MgfCurve, y: &MgfCurve) -> Result<MgfCurve> {
    same_theta(x, y)?;
    expect_kind(x, CurveKind::Arrival)?;
    expect_kind(y, CurveKind::Service)?;
    let h = x.horizon().min(y.horizon());
    let hy = y.horizon();
    let ly = &y.log_values;
    let xs: Vec<f64> = (0..=h + hy).map(|k| x.log_at(k)).collect();
    let truncated = log_correlate(&xs, ly, h + 1);
    let y_finite = y.tail.is_finite_support();
    let x_finite = x.tail.is_finite_support();
    let needs_tail = |d: usize| !y_finite && !(x_finite && d + hy >= x.horizon());
    if needs_tail(0) && hy < TAIL_WINDOW {
        return Err(Error::HorizonTooShort {
            needed: TAIL_WINDOW + 1,
            available: hy + 1,
        });
    }
    let ry = (hy - TAIL_WINDOW.min(hy)..hy)
        .map(|t| log_increment(ly[t], ly[t + 1]))
        .fold(y.tail.log_ratio, f64::max);
    // suffix[k] = largest x increment at lags >= k, tail included
    let last_lag = xs.len() - 1;
    let mut suffix = vec![x.max_increment_from(last_lag); xs.len()];
    for k in (0..x.horizon().min(last_lag)).rev() {
        suffix[k] = suffix[k + 1].max(log_increment(xs[k], xs[k + 1]));
    }
    let mut log_values = Vec::with_capacity(h + 1);
    for (d, &log_truncated) in truncated.iter().enumerate() {
        if !needs_tail(d) {
            log_values.push(log_truncated);
            continue;
        }
        let mut r = suffix[d + hy - TAIL_WINDOW] + ry;
        if r.is_nan() {
            r = f64::INFINITY;
        }
        if !(r < STABILITY_LIMIT.ln()) {
            return Err(Error::Unstable {
                theta: x.theta,
                ratio: r.exp(),
            });
        }
        let last = xs[d + hy] + ly[hy];
        let log_tail = if last == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            last + r - log_one_minus_exp(r)
        };
        log_values.push(
            Deconvolution {
                log_truncated,
                log_tail,
            }
            .log_value(),
        );
    }
    // z(k+1)/z(k) ≤ max_{j ≥ k} x(j+1)/x(j) termwise.
    let tail = if log_values[h] == f64::NEG_INFINITY && x.tail.is_finite_support() {
        TailModel::finite_support(h)
    } else {
        TailModel::from_log_ratio(x.max_increment_from(h), h)
    };
    MgfCurve::from_log_values_unchecked(x.theta, CurveKind::Arrival, log_values, tail)
}

/// `(((x ∘ y₁) ∘ y₂) ∘ …)(δ)`.
///
/// Equal to `(x ∘ (y₁ ∗ y₂ ∗ …))(δ)` for `δ >= 0`. For `δ < 0` it omits the
/// splits where an inner hop absorbs part of the negative lag, so it is no
/// larger than the end-to-end value.
pub fn deconv_chain(x: &MgfCurve, ys: &[MgfCurve], delta: i64) -> Result<Deconvolution> {
    let (last, init) = ys.split_last().ok_or(Error::EmptySequence)?;
    let mut z = Cow::Borrowed(x);
    for y in init {
        z = Cow::Owned(output_curve(&z, y)?);
    }
    deconv_circle(&z, last, delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn service(theta: f64, values: &[f64]) -> MgfCurve {
        MgfCurve::from_values(theta, CurveKind::Service, values).unwrap()
    }

    fn arrival(theta: f64, values: &[f64]) -> MgfCurve {
        MgfCurve::from_values(theta, CurveKind::Arrival, values).unwrap()
    }

    fn rate_curve(theta: f64, rate: f64, h: usize) -> MgfCurve {
        let lv = (0..=h).map(|d| -theta * rate * d as f64).collect();
        MgfCurve::from_log_values(theta, CurveKind::Service, lv).unwrap()
    }

    fn ones(theta: f64, h: usize) -> MgfCurve {
        MgfCurve::from_log_values(theta, CurveKind::Arrival, vec![0.0; h + 1]).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(ThetaGrid::new(vec![]).is_err());
        assert!(ThetaGrid::new(vec![1.0, 1.0]).is_err());
        assert!(ThetaGrid::new(vec![-1.0]).is_err());
        let g = ThetaGrid::logspace(1e-8, 1e-2, 64).unwrap();
        assert_eq!(g.len(), 64);
        assert_eq!(g.min(), 1e-8);
        assert_eq!(g.max(), 1e-2);
        assert!(g.values().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn kind_invariants_enforced() {
        assert!(MgfCurve::from_values(1.0, CurveKind::Arrival, &[1.0, 0.5]).is_err());
        assert!(MgfCurve::from_values(1.0, CurveKind::Service, &[1.0, 1.5]).is_err());
        assert!(MgfCurve::from_values(1.0, CurveKind::Service, &[1.0, 0.5, 0.0]).is_ok());
        assert!(MgfCurve::from_values(0.0, CurveKind::Service, &[1.0]).is_err());
    }

    #[test]
    fn conv_star_single_summand_at_zero() {
        let x = service(0.5, &[0.8, 0.3]);
        let y = service(0.5, &[0.6, 0.1]);
        let r = conv_star(&x, &y).unwrap();
        assert!((r.value_at(0) - 0.48).abs() < 1e-15);
    }

    #[test]
    fn conv_star_equal_rates() {
        let (theta, c) = (0.3, 2.0);
        let r = conv_star(&rate_curve(theta, c, 50), &rate_curve(theta, c, 50)).unwrap();
        for d in 0..=50 {
            let expect = (d as f64 + 1.0) * (-theta * c * d as f64).exp();
            assert!((r.value_at(d) - expect).abs() <= 1e-12 * expect, "{d}");
        }
    }

    #[test]
    fn conv_star_brute_force_small() {
        let r = conv_star(&service(1.0, &[1.0, 0.5]), &service(1.0, &[1.0, 0.25])).unwrap();
        let v = r.values();
        assert!((v[0] - 1.0).abs() < 1e-15);
        assert!((v[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn conv_star_rejects_mismatches() {
        let a = service(1.0, &[1.0]);
        let b = service(2.0, &[1.0]);
        assert!(matches!(
            conv_star(&a, &b),
            Err(Error::ThetaMismatch { .. })
        ));
        let c = arrival(1.0, &[1.0]);
        assert!(matches!(conv_star(&a, &c), Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn deconv_geometric_series() {
        let (theta, c) = (0.1, 3.0);
        let y = rate_curve(theta, c, 2000);
        let x = ones(theta, 2000);
        let q = (-theta * c).exp();
        let r = deconv_circle(&x, &y, 0).unwrap();
        assert!((r.value() - 1.0 / (1.0 - q)).abs() < 1e-12 / (1.0 - q));
        let d = 7;
        let r = deconv_circle(&x, &y, -d).unwrap();
        let expect = q.powi(d as i32) / (1.0 - q);
        assert!((r.value() - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn deconv_finite_support_service() {
        let x = arrival(0.2, &[1.0, 2.0, 5.0, 9.0]);
        let y = service(0.2, &[1.0, 0.0, 0.0, 0.0]);
        let r = deconv_circle(&x, &y, 0).unwrap();
        assert_eq!(r.log_tail, f64::NEG_INFINITY);
        assert!((r.value() - 1.0).abs() < 1e-15);
        let r = deconv_circle(&x, &y, 2).unwrap();
        assert!((r.value() - 5.0).abs() < 1e-14);
    }

    #[test]
    fn deconv_tail_is_conservative_and_tight() {
        let (theta, c) = (0.05, 1.0);
        let short = deconv_circle(&ones(theta, 200), &rate_curve(theta, c, 200), -3).unwrap();
        let long = deconv_circle(&ones(theta, 800), &rate_curve(theta, c, 800), -3).unwrap();
        let brute = long.value();
        assert!(short.value() >= brute * (1.0 - 1e-12));
        assert!(short.value() - short.tail_bound() <= brute * (1.0 + 1e-12));
    }

    #[test]
    fn deconv_refuses_non_decaying_tail() {
        let theta = 0.1;
        let x = MgfCurve::from_log_values(
            theta,
            CurveKind::Arrival,
            (0..=100).map(|d| theta * 2.0 * d as f64).collect(),
        )
        .unwrap();
        let y = rate_curve(theta, 2.0, 100);
        assert!(matches!(
            deconv_circle(&x, &y, 0),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn deconv_short_horizon() {
        let theta = 0.1;
        let y = rate_curve(theta, 2.0, 20);
        let x = ones(theta, 20);
        assert!(deconv_circle(&x, &y, 0).is_ok());
        assert!(matches!(
            deconv_circle(&x, &y, -10),
            Err(Error::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn pointwise_product_examples() {
        let x = arrival(1.0, &[1.0, 2.0]);
        let y = arrival(1.0, &[1.0, 3.0]);
        let r = pointwise_product(&x, &y).unwrap();
        assert!((r.value_at(1) - 6.0).abs() < 1e-14);
        assert_eq!(r.kind(), CurveKind::Arrival);
        let one = ones(1.0, 1);
        assert_eq!(
            pointwise_product(&one, &y).unwrap().log_values(),
            y.log_values()
        );
        let (t, r1, r2) = (0.7, 1.5, 2.5);
        let e = |r: f64| {
            MgfCurve::from_log_values(
                t,
                CurveKind::Arrival,
                (0..5).map(|d| t * r * d as f64).collect(),
            )
            .unwrap()
        };
        let p = pointwise_product(&e(r1), &e(r2)).unwrap();
        for d in 0..5 {
            assert!((p.log_at(d) - t * (r1 + r2) * d as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn holder_product_examples() {
        let pair = HolderPair::new(2.0, 2.0).unwrap();
        let x = arrival(2.0, &[1.0, 4.0]);
        let y = arrival(2.0, &[1.0, 9.0]);
        let r = holder_product(&x, &y, pair).unwrap();
        assert_eq!(r.theta(), 1.0);
        assert!((r.value_at(1) - 6.0).abs() < 1e-13);
        let s = holder_product(&x, &x, pair).unwrap();
        assert!((s.value_at(1) - 4.0).abs() < 1e-13);
        assert!(HolderPair::new(2.0, 3.0).is_err());
        assert!(HolderPair::new(1.0, f64::INFINITY).is_err());
        assert!(HolderPair::from_kappa(3.0).is_ok());
    }

    #[test]
    fn deconv_chain_single_element() {
        let theta = 0.2;
        let x = ones(theta, 300);
        let y = rate_curve(theta, 1.0, 300);
        let a = deconv_chain(&x, std::slice::from_ref(&y), -2).unwrap();
        let b = deconv_circle(&x, &y, -2).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            deconv_chain(&x, &[], 0),
            Err(Error::EmptySequence)
        ));
    }

    #[test]
    fn deconv_chain_two_rate_servers() {
        let (theta, c) = (0.2, 1.5);
        let h = 600;
        let x = ones(theta, h);
        let y = rate_curve(theta, c, h);
        let r = deconv_chain(&x, &[y.clone(), y], 0).unwrap();
        let q = (-theta * c).exp();
        // Σ (τ+1) q^τ = 1/(1-q)^2
        let expect = 1.0 / (1.0 - q).powi(2);
        assert!((r.value() - expect).abs() < 1e-9 * expect);
    }
    #[test]
    fn output_curve_matches_pointwise_deconvolution() {
        let theta = 2e-6;
        let h = 256;
        let x = crate::traffic::aggregate_mgf(
            &[crate::traffic::FlowSpec::leaky_bucket(1e6, 3_000.0, 20).unwrap()],
            theta,
            h,
        )
        .unwrap();
        for rate in [1e5, 2.4e5, 5e6] {
            let y = rate_curve(theta, rate, h);
            let z = output_curve(&x, &y).unwrap();
            for d in 0..=h {
                let want = deconv_terms(&x, &y, d as i64).unwrap().log_value();
                let got = z.log_at(d);
                assert!(
                    (got - want).abs() <= 1e-11 * want.abs().max(1.0),
                    "d={d}: {got} vs {want}"
                );
            }
        }
    }
}
