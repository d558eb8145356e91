//! Property suites: operator identities, tail conservativeness, closed-form
//! consistency, the negative-binomial estimate and the Monte-Carlo product bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::{backlog_at_theta, delay_at_theta, DeconvProblem};
use crate::closed_form::{
    backlog_closed_form, default_tau_max, delay_closed_form, negbin_chernoff, negbin_tail_oracle,
    ClosedFormInputs, GammaMode,
};
use crate::error::Result;
use crate::mgf::{conv_star, deconv_chain, deconv_circle, CurveKind, MgfCurve, ThetaGrid};
use crate::service::{Dependence, ServerSpec, TandemScenario};
use crate::sim::{validate_conv_mgf, SamplePath};
use crate::traffic::FlowSpec;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub cases: u64,
    pub failures: u64,
    /// Largest observed violation measure (suite specific; 0 when exact).
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl SuiteResult {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            cases: 0,
            failures: 0,
            max_error: 0.0,
            tolerance,
            passed: true,
        }
    }

    fn record(&mut self, error: f64) {
        self.cases += 1;
        if error.is_nan() || error > self.tolerance {
            self.failures += 1;
        }
        if error.is_nan() || error > self.max_error {
            self.max_error = error;
        }
    }

    fn finish(mut self) -> Self {
        self.passed = self.failures == 0;
        self
    }
}

/// `|a - b|` for log-values, i.e. the relative error of the values to first order.
fn log_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

/// Positive part of `a - b` for log-values: how far `a` exceeds `b`.
fn log_excess(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY || a <= b {
        0.0
    } else {
        a - b
    }
}

fn random_service(
    rng: &mut ChaCha8Rng,
    theta: f64,
    h: usize,
    support: Option<usize>,
) -> Result<MgfCurve> {
    let mut v = -rng.random_range(0.0..1.0);
    let values = (0..=h)
        .map(|d| {
            if support.is_some_and(|s| d > s) {
                return f64::NEG_INFINITY;
            }
            if d > 0 {
                v -= rng.random_range(0.0..3.0);
            }
            v
        })
        .collect();
    MgfCurve::from_log_values(theta, CurveKind::Service, values)
}

fn random_arrival(rng: &mut ChaCha8Rng, theta: f64, h: usize) -> Result<MgfCurve> {
    let mut v = rng.random_range(0.0..1.0);
    let values = (0..=h)
        .map(|d| {
            if d > 0 {
                v += rng.random_range(0.0..2.0);
            }
            v
        })
        .collect();
    MgfCurve::from_log_values(theta, CurveKind::Arrival, values)
}

/// `(x ∘ y) ∘ z = x ∘ (y ∗ z)` at every `δ >= 0` where both sides are exact,
/// on random finite-support service curves; `δ < 0` checks the one-sided
/// inequality `(x ∘ y) ∘ z <= x ∘ (y ∗ z)`.
pub fn deconv_chain_associativity(
    instances: u32,
    seed: u64,
    tolerance: f64,
) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = SuiteResult::new("deconv-chain-associativity", tolerance);
    for _ in 0..instances {
        let h = rng.random_range(16..=40usize);
        let theta = 10f64.powf(rng.random_range(-3.0..0.0));
        let sy = rng.random_range(0..=h / 2);
        let sz = rng.random_range(0..=h / 2);
        let x = random_arrival(&mut rng, theta, 2 * h)?;
        let y = random_service(&mut rng, theta, h, Some(sy))?;
        let z = random_service(&mut rng, theta, h, Some(sz))?;
        let yz = conv_star(&y, &z)?;
        let ys = [y, z];
        for delta in -((h / 2) as i64)..=(h - sz) as i64 {
            let chained = deconv_chain(&x, &ys, delta)?.log_value();
            let direct = deconv_circle(&x, &yz, delta)?.log_value();
            if delta >= 0 {
                suite.record(log_gap(chained, direct));
            } else {
                suite.record(log_excess(chained, direct));
            }
        }
    }
    Ok(suite.finish())
}

/// `y ∗ z = z ∗ y` lag by lag on random service curves.
pub fn conv_commutativity(instances: u32, seed: u64, tolerance: f64) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = SuiteResult::new("conv-commutativity", tolerance);
    for _ in 0..instances {
        let h = rng.random_range(1..=200usize);
        let theta = 10f64.powf(rng.random_range(-3.0..0.0));
        let sy = rng.random_bool(0.5).then(|| rng.random_range(0..=h));
        let sz = rng.random_bool(0.5).then(|| rng.random_range(0..=h));
        let y = random_service(&mut rng, theta, h, sy)?;
        let z = random_service(&mut rng, theta, h, sz)?;
        let a = conv_star(&y, &z)?;
        let b = conv_star(&z, &y)?;
        for (u, v) in a.log_values().iter().zip(b.log_values()) {
            suite.record(log_gap(*u, *v));
        }
    }
    Ok(suite.finish())
}

/// The certified value at horizon `H` is never below the truncated sum at
/// `4H` for leaky-bucket traffic on leftover service.
pub fn deconv_truncation(horizon: usize, tolerance: f64) -> Result<SuiteResult> {
    let mut suite = SuiteResult::new("deconv-truncation", tolerance);
    let through = [FlowSpec::leaky_bucket(1e6, 3_000.0, 20)?];
    let servers = [
        ServerSpec::new(
            "cross",
            240_000.0,
            vec![FlowSpec::leaky_bucket(1e6, 3_000.0, 20)?],
        )?,
        ServerSpec::new(
            "heavy",
            240_000.0,
            vec![FlowSpec::leaky_bucket(0.5e6, 1_500.0, 100)?],
        )?,
        ServerSpec::new("cbr", 240_000.0, vec![FlowSpec::cbr(60_000.0, 1)?])?,
    ];
    let grid = ThetaGrid::logspace(1e-7, 1e-4, 16)?;
    for server in &servers {
        for &theta in grid.values() {
            let x = crate::traffic::aggregate_mgf(&through, theta, 8 * horizon)?;
            let short = server.leftover_curve(theta, horizon)?;
            let long = server.leftover_curve(theta, 4 * horizon)?;
            for delta in [0i64, -1, -5, -20, -50, -100, -(horizon as i64) / 2] {
                let Ok(certified) = deconv_circle(&x, &short, delta) else {
                    continue;
                };
                let brute = deconv_circle(&x, &long, delta)?.log_truncated;
                suite.record(log_excess(brute, certified.log_value()));
            }
        }
    }
    Ok(suite.finish())
}

/// Numeric bounds for `(σ, ρ)` traffic never exceed the closed forms at any
/// grid θ, and the closed forms are affine in `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedFormCheck {
    pub bounds: SuiteResult,
    pub affine: SuiteResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaRhoSetting {
    pub capacity: f64,
    pub sigma: f64,
    pub rho: f64,
    pub sigma_c: f64,
    pub rho_c: f64,
    pub epsilon: f64,
    pub horizon: usize,
}

impl SigmaRhoSetting {
    fn scenario(&self, n: u32, grid: &ThetaGrid) -> Result<TandemScenario> {
        let server = ServerSpec::new(
            "hop",
            self.capacity,
            vec![FlowSpec::sigma_rho(self.sigma_c, self.rho_c, 1)?],
        )?;
        Ok(TandemScenario {
            servers: vec![server; n as usize],
            through: vec![FlowSpec::sigma_rho(self.sigma, self.rho, 1)?],
            epsilon: self.epsilon,
            slot_ms: 1.0,
            horizon: self.horizon,
            theta_grid: grid.clone(),
            dependence: Dependence::Independent,
        })
    }

    fn inputs(&self, n: u32, theta: f64) -> ClosedFormInputs {
        ClosedFormInputs {
            n,
            capacity: self.capacity,
            sigma: self.sigma,
            rho: self.rho,
            sigma_c: self.sigma_c,
            rho_c: self.rho_c,
            theta,
            epsilon: self.epsilon,
            gamma_mode: GammaMode::Bracket,
        }
    }
}

pub fn closed_form_consistency(
    setting: &SigmaRhoSetting,
    hops: &[u32],
    grid: &ThetaGrid,
    tolerance: f64,
) -> Result<ClosedFormCheck> {
    let mut bounds = SuiteResult::new("closed-form-dominates-numeric", tolerance);
    let mut affine = SuiteResult::new("closed-form-affine-in-n", tolerance);
    for &n in hops {
        let scenario = setting.scenario(n, grid)?;
        let problem = DeconvProblem::for_scenario(&scenario);
        for &theta in grid.values() {
            let inputs = setting.inputs(n, theta);
            let (Ok(b_cf), Ok(d_cf)) = (backlog_closed_form(&inputs), delay_closed_form(&inputs))
            else {
                continue;
            };
            if let Some(b) = backlog_at_theta(&problem, theta, setting.epsilon) {
                bounds.record(((b - b_cf) / b_cf.abs().max(1.0)).max(0.0));
            }
            let ceiling = (d_cf * (1.0 + tolerance)).ceil();
            if ceiling < 0.0 || ceiling > setting.horizon as f64 {
                continue;
            }
            match delay_at_theta(&problem, theta, setting.epsilon, setting.horizon as u64) {
                Ok(Some(d)) => bounds.record(((d as f64 - ceiling) / ceiling.max(1.0)).max(0.0)),
                Ok(None) => bounds.record(f64::INFINITY),
                Err(_) => {}
            }
        }
    }
    for &theta in grid.values() {
        let vals: Vec<(f64, f64)> = (1..=4)
            .filter_map(|n| {
                let i = setting.inputs(n, theta);
                Some((backlog_closed_form(&i).ok()?, delay_closed_form(&i).ok()?))
            })
            .collect();
        if vals.len() < 3 {
            continue;
        }
        for w in vals.windows(3) {
            for (a, b, c) in [(w[0].0, w[1].0, w[2].0), (w[0].1, w[1].1, w[2].1)] {
                let scale = a.abs().max(b.abs()).max(c.abs()).max(1.0);
                affine.record((c - 2.0 * b + a).abs() / scale);
            }
        }
    }
    Ok(ClosedFormCheck {
        bounds: bounds.finish(),
        affine: affine.finish(),
    })
}

/// Chernoff estimate `ζ^n q^d` at or above the plain negative-binomial sum,
/// and the `d = 0` identity `Σ C(τ+n-1, n-1) q^τ = (1-q)^{-n}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NegbinCheck {
    pub chernoff: SuiteResult,
    pub identity: SuiteResult,
}

pub fn negbin_suite(ns: &[u32], qs: &[f64], extra_d: u64) -> Result<NegbinCheck> {
    let mut chernoff = SuiteResult::new("negbin-chernoff-dominates", 1e-12);
    let mut identity = SuiteResult::new("negbin-identity", 1e-12);
    for &n in ns {
        for &q in qs {
            let exact = (1.0 - q).powi(-(n as i32));
            let at_zero = negbin_tail_oracle(n, q, 0, default_tau_max(n, q, 0))?;
            identity.record(((at_zero - exact) / exact).abs());
            let d0 = (n as f64 * q / (1.0 - q)).ceil() as u64;
            for d in d0..=d0 + extra_d {
                let oracle = negbin_tail_oracle(n, q, d, default_tau_max(n, q, d))?;
                let estimate = negbin_chernoff(n, q, d);
                chernoff.record(((oracle - estimate) / oracle).max(0.0));
            }
        }
    }
    Ok(NegbinCheck {
        chernoff: chernoff.finish(),
        identity: identity.finish(),
    })
}

/// Monte-Carlo check of the ∗ bound on the MGF of `X ⊗ Y` with i.i.d.
/// uniform per-slot service; passes if at least 99 % of cells hold within
/// three standard errors.
pub fn conv_mgf_suite(
    replications: u32,
    slots: usize,
    theta: f64,
    seed: u64,
) -> Result<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rate: f64| {
        SamplePath::from_increments(
            (0..slots)
                .map(|_| rng.random_range(0.0..rate))
                .collect::<Vec<_>>(),
        )
    };
    let mut xs = Vec::with_capacity(replications as usize);
    let mut ys = Vec::with_capacity(replications as usize);
    for _ in 0..replications {
        xs.push(draw(1.0)?);
        ys.push(draw(2.0)?);
    }
    let report = validate_conv_mgf(&xs, &ys, theta)?;
    let mut suite = SuiteResult::new("conv-mgf-monte-carlo", 0.01);
    suite.cases = report.cells as u64;
    suite.failures = report.exceedances as u64;
    suite.max_error = 1.0 - report.pass_fraction();
    suite.passed = suite.max_error <= suite.tolerance;
    Ok(suite)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        assert!(deconv_chain_associativity(20, 3, 1e-10).unwrap().passed);
        assert!(conv_commutativity(20, 4, 1e-12).unwrap().passed);
        let n = negbin_suite(&[2, 3], &[0.3, 0.5], 20).unwrap();
        assert!(n.chernoff.passed && n.identity.passed);
    }

    #[test]
    fn record_counts_failures() {
        let mut s = SuiteResult::new("t", 0.1);
        s.record(0.05);
        s.record(0.2);
        s.record(f64::NAN);
        let s = s.finish();
        assert_eq!((s.cases, s.failures, s.passed), (3, 2, false));
    }

    #[test]
    fn conv_mgf_holds_for_small_instance() {
        let s = conv_mgf_suite(400, 6, 0.7, 9).unwrap();
        assert!(s.passed, "{s:?}");
    }
}
