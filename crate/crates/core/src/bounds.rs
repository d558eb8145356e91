//! Chernoff backlog, delay and output bounds from arrival and service MGF
//! families, optimized over θ, plus the deterministic (ε = 0) comparison.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mgf::{deconv_circle, output_curve, Deconvolution, HolderPair, MgfCurve, ThetaGrid};
use crate::service::{Dependence, TandemScenario};

/// A θ-indexed family of MGF curves.
pub trait CurveFamily {
    fn curve_at(&self, theta: f64) -> Result<MgfCurve>;
}

impl<F> CurveFamily for F
where
    F: Fn(f64) -> Result<MgfCurve>,
{
    fn curve_at(&self, theta: f64) -> Result<MgfCurve> {
        self(theta)
    }
}

impl<T: CurveFamily + ?Sized> CurveFamily for Rc<T> {
    fn curve_at(&self, theta: f64) -> Result<MgfCurve> {
        (**self).curve_at(theta)
    }
}

/// Memoizes a family by the exact bit pattern of θ.
pub struct Cached<F> {
    family: F,
    cache: RefCell<HashMap<u64, MgfCurve>>,
}

impl<F: CurveFamily> Cached<F> {
    pub fn new(family: F) -> Self {
        Self {
            family,
            cache: RefCell::new(HashMap::new()),
        }
    }
}

impl<F: CurveFamily> CurveFamily for Cached<F> {
    fn curve_at(&self, theta: f64) -> Result<MgfCurve> {
        if let Some(c) = self.cache.borrow().get(&theta.to_bits()) {
            return Ok(c.clone());
        }
        let c = self.family.curve_at(theta)?;
        self.cache.borrow_mut().insert(theta.to_bits(), c.clone());
        Ok(c)
    }
}

/// Departures of one hop: `δ ↦ (input ∘ service)(δ)` at every θ.
pub struct OutputFamily<'a> {
    input: Rc<dyn CurveFamily + 'a>,
    service: Rc<dyn CurveFamily + 'a>,
    cache: RefCell<HashMap<u64, MgfCurve>>,
}

impl<'a> OutputFamily<'a> {
    pub fn new(input: Rc<dyn CurveFamily + 'a>, service: Rc<dyn CurveFamily + 'a>) -> Self {
        Self {
            input,
            service,
            cache: RefCell::new(HashMap::new()),
        }
    }
}

impl CurveFamily for OutputFamily<'_> {
    fn curve_at(&self, theta: f64) -> Result<MgfCurve> {
        if let Some(c) = self.cache.borrow().get(&theta.to_bits()) {
            return Ok(c.clone());
        }
        let c = output_curve(&self.input.curve_at(theta)?, &self.service.curve_at(theta)?)?;
        self.cache.borrow_mut().insert(theta.to_bits(), c.clone());
        Ok(c)
    }
}

/// Output-bound family of `arrival` through `service`.
pub fn output_bound_curve<'a>(
    arrival: Rc<dyn CurveFamily + 'a>,
    service: Rc<dyn CurveFamily + 'a>,
) -> OutputFamily<'a> {
    OutputFamily::new(arrival, service)
}

/// Arrival and service families whose `∘` is bounded with Chernoff.
pub struct DeconvProblem<'a> {
    arrival: Box<dyn CurveFamily + 'a>,
    service: Box<dyn CurveFamily + 'a>,
    dependence: Dependence,
    slices: RefCell<HashMap<u64, Rc<(MgfCurve, MgfCurve)>>>,
}

impl<'a> DeconvProblem<'a> {
    pub fn new(
        arrival: impl CurveFamily + 'a,
        service: impl CurveFamily + 'a,
        dependence: Dependence,
    ) -> Self {
        Self {
            arrival: Box::new(arrival),
            service: Box::new(service),
            dependence,
            slices: RefCell::new(HashMap::new()),
        }
    }

    /// Through traffic against the end-to-end service of the whole tandem.
    pub fn for_scenario(scenario: &'a TandemScenario) -> Self {
        Self::new(
            move |theta| scenario.arrival_curve(theta),
            move |theta| scenario.network_service(theta),
            scenario.dependence,
        )
    }

    /// Arrival and service curves, both labelled θ.
    pub fn slice(&self, theta: f64) -> Result<Rc<(MgfCurve, MgfCurve)>> {
        if let Some(s) = self.slices.borrow().get(&theta.to_bits()) {
            return Ok(s.clone());
        }
        let pair = match self.dependence {
            Dependence::Independent => {
                (self.arrival.curve_at(theta)?, self.service.curve_at(theta)?)
            }
            Dependence::Holder { kappa } => {
                let h = HolderPair::from_kappa(kappa)?;
                let a = self.arrival.curve_at(h.kappa() * theta)?;
                let s = self.service.curve_at(h.nu() * theta)?;
                (
                    a.holder_rescaled(h.kappa())?.relabel(theta),
                    s.holder_rescaled(h.nu())?.relabel(theta),
                )
            }
        };
        let pair = Rc::new(pair);
        self.slices
            .borrow_mut()
            .insert(theta.to_bits(), pair.clone());
        Ok(pair)
    }

    /// `(M_A ∘ M_S)(θ, δ)`; a delay `d` is evaluated at `δ = -d`.
    pub fn deconv(&self, theta: f64, delta: i64) -> Result<Deconvolution> {
        let s = self.slice(theta)?;
        deconv_circle(&s.0, &s.1, delta)
    }

    /// Largest delay that the curves at θ can certify.
    pub fn horizon(&self, theta: f64) -> Result<usize> {
        let s = self.slice(theta)?;
        Ok(s.0.horizon().min(s.1.horizon()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundStatus {
    Bounded,
    /// No θ yields a convergent sum.
    Unstable,
    /// Stable θ exist, but no bound was certified within the horizon.
    NotCertified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub theta: f64,
    /// Objective at θ; `inf` where unstable.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundResult {
    /// bits for backlog, slots for delay, probability for violation queries.
    pub value: f64,
    pub theta_star: Option<f64>,
    /// Fraction of the Chernoff sum at θ* that comes from the certified tail.
    pub tail_error: f64,
    pub status: BoundStatus,
    pub trace: Vec<TracePoint>,
}

impl BoundResult {
    fn unbounded(status: BoundStatus, trace: Vec<TracePoint>) -> Self {
        Self {
            value: f64::INFINITY,
            theta_star: None,
            tail_error: 0.0,
            status,
            trace,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.status == BoundStatus::Bounded
    }
}

/// Search controls for θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchOptions {
    /// How many times the grid may grow past a boundary minimum.
    pub max_extensions: usize,
    pub extension_factor: f64,
    pub golden_iterations: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            max_extensions: 8,
            extension_factor: 4.0,
            golden_iterations: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Optimum {
    pub theta: f64,
    pub value: f64,
    pub trace: Vec<TracePoint>,
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Minimizes `objective` over θ: grid scan, outward extension while the
/// minimum sits on a boundary, then golden-section search in `ln θ` between
/// the neighbours of the best point. `None` marks an unstable θ.
pub fn optimize_theta(
    mut objective: impl FnMut(f64) -> Option<f64>,
    grid: &ThetaGrid,
    opts: &SearchOptions,
) -> Result<Optimum> {
    let mut eval = |theta: f64, trace: &mut Vec<TracePoint>| -> f64 {
        let v = objective(theta)
            .filter(|v| !v.is_nan())
            .unwrap_or(f64::INFINITY);
        trace.push(TracePoint { theta, value: v });
        v
    };
    let mut trace = Vec::with_capacity(grid.len() + 2 * opts.golden_iterations);
    let mut pts: Vec<(f64, f64)> = grid
        .values()
        .iter()
        .map(|&t| (t, eval(t, &mut trace)))
        .collect();
    let argmin = |pts: &[(f64, f64)]| {
        pts.iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    };
    if pts.iter().all(|p| p.1 == f64::INFINITY) {
        return Err(Error::NoStableTheta);
    }
    if pts.len() > 1 {
        for _ in 0..opts.max_extensions {
            let i = argmin(&pts);
            if i == 0 {
                let t = pts[0].0 / opts.extension_factor;
                pts.insert(0, (t, eval(t, &mut trace)));
            } else if i == pts.len() - 1 {
                let t = pts[i].0 * opts.extension_factor;
                pts.push((t, eval(t, &mut trace)));
            } else {
                break;
            }
        }
    }
    let i = argmin(&pts);
    let (mut best_t, mut best_v) = pts[i];
    if i > 0 && i + 1 < pts.len() {
        let (mut a, mut b) = (pts[i - 1].0.ln(), pts[i + 1].0.ln());
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = eval(c.exp(), &mut trace);
        let mut fd = eval(d.exp(), &mut trace);
        for _ in 0..opts.golden_iterations {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = eval(c.exp(), &mut trace);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = eval(d.exp(), &mut trace);
            }
        }
        for (t, v) in [(c.exp(), fc), (d.exp(), fd)] {
            if v < best_v {
                best_t = t;
                best_v = v;
            }
        }
    }
    Ok(Optimum {
        theta: best_t,
        value: best_v,
        trace,
    })
}

/// `(ln (M_A ∘ M_S)(θ, 0) - ln ε) / θ` in bits, `None` if unstable.
pub fn backlog_at_theta(problem: &DeconvProblem, theta: f64, epsilon: f64) -> Option<f64> {
    let m = problem.deconv(theta, 0).ok()?;
    Some((m.log_value() - epsilon.ln()) / theta)
}

/// Probabilistic backlog bound minimized over θ.
pub fn backlog_bound(
    problem: &DeconvProblem,
    epsilon: f64,
    grid: &ThetaGrid,
    opts: &SearchOptions,
) -> Result<BoundResult> {
    check_epsilon(epsilon)?;
    match optimize_theta(|t| backlog_at_theta(problem, t, epsilon), grid, opts) {
        Ok(opt) => {
            let tail_error = problem.deconv(opt.theta, 0)?.tail_fraction();
            Ok(BoundResult {
                value: opt.value.max(0.0),
                theta_star: Some(opt.theta),
                tail_error,
                status: BoundStatus::Bounded,
                trace: opt.trace,
            })
        }
        Err(Error::NoStableTheta) => Ok(BoundResult::unbounded(BoundStatus::Unstable, vec![])),
        Err(e) => Err(e),
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon <= 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!(
            "epsilon must lie in (0, 1], got {epsilon}"
        )))
    }
}

/// Smallest `d <= max_delay` with `ln M(θ, -d) <= ln ε` at a fixed θ.
///
/// `Ok(None)` if no such `d` exists within `max_delay`; `Err` if the sum
/// diverges at θ.
pub fn delay_at_theta(
    problem: &DeconvProblem,
    theta: f64,
    epsilon: f64,
    max_delay: u64,
) -> Result<Option<u64>> {
    let target = epsilon.ln();
    let ok =
        |d: u64| -> Result<bool> { Ok(problem.deconv(theta, -(d as i64))?.log_value() <= target) };
    if ok(0)? {
        return Ok(Some(0));
    }
    // gallop to a passing delay, then bisect on (lo fails, hi passes)
    let mut lo = 0u64;
    let mut hi = 1u64;
    loop {
        let probe = hi.min(max_delay);
        if ok(probe)? {
            hi = probe;
            break;
        }
        if probe == max_delay {
            return Ok(None);
        }
        lo = probe;
        hi = hi.saturating_mul(2);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Probabilistic delay bound in slots minimized over θ.
///
/// Each θ is searched by galloping and bisection on `d`. If the minimum sits
/// on a grid boundary the grid is extended; finally `d - 1` is attempted with
/// a golden-section search over θ between the neighbours of θ*.
pub fn delay_bound(
    problem: &DeconvProblem,
    epsilon: f64,
    grid: &ThetaGrid,
    opts: &SearchOptions,
) -> Result<BoundResult> {
    check_epsilon(epsilon)?;
    let target = epsilon.ln();
    let mut trace = Vec::new();
    let mut any_stable = false;
    // (θ, d, ln M at d); d = u64::MAX when not certified
    let mut eval = |theta: f64, trace: &mut Vec<TracePoint>| -> (u64, f64) {
        let res = problem
            .horizon(theta)
            .and_then(|h| delay_at_theta(problem, theta, epsilon, h as u64));
        let out = match res {
            Ok(Some(d)) => {
                any_stable = true;
                let lm = problem
                    .deconv(theta, -(d as i64))
                    .map(|m| m.log_value())
                    .unwrap_or(f64::INFINITY);
                (d, lm)
            }
            Ok(None) => {
                any_stable = true;
                (u64::MAX, f64::INFINITY)
            }
            Err(_) => (u64::MAX, f64::INFINITY),
        };
        trace.push(TracePoint {
            theta,
            value: if out.0 == u64::MAX {
                f64::INFINITY
            } else {
                out.0 as f64
            },
        });
        out
    };
    let mut pts: Vec<(f64, (u64, f64))> = grid
        .values()
        .iter()
        .map(|&t| (t, eval(t, &mut trace)))
        .collect();
    let better = |a: (u64, f64), b: (u64, f64)| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);
    let argmin = |pts: &[(f64, (u64, f64))]| {
        let mut best = 0;
        for (i, p) in pts.iter().enumerate() {
            if better(p.1, pts[best].1) {
                best = i;
            }
        }
        best
    };
    if pts.len() > 1 {
        for _ in 0..opts.max_extensions {
            let i = argmin(&pts);
            if pts[i].1 .0 == u64::MAX {
                break;
            }
            if i == 0 {
                let t = pts[0].0 / opts.extension_factor;
                pts.insert(0, (t, eval(t, &mut trace)));
            } else if i == pts.len() - 1 {
                let t = pts[i].0 * opts.extension_factor;
                pts.push((t, eval(t, &mut trace)));
            } else {
                break;
            }
        }
    }
    let i = argmin(&pts);
    let (mut theta_star, (mut d, _)) = pts[i];
    if d == u64::MAX {
        let status = if any_stable {
            BoundStatus::NotCertified
        } else {
            BoundStatus::Unstable
        };
        return Ok(BoundResult::unbounded(status, trace));
    }
    if i > 0 && i + 1 < pts.len() {
        let (lo, hi) = (pts[i - 1].0, pts[i + 1].0);
        while d > 0 {
            let candidate = d - 1;
            let f = |t: f64| {
                problem
                    .deconv(t, -(candidate as i64))
                    .ok()
                    .map(|m| m.log_value())
            };
            let opt = optimize_theta(
                f,
                &ThetaGrid::new(vec![lo, theta_star, hi])?,
                &SearchOptions {
                    max_extensions: 0,
                    ..*opts
                },
            );
            match opt {
                Ok(o) if o.value <= target => {
                    d = candidate;
                    theta_star = o.theta;
                    trace.push(TracePoint {
                        theta: o.theta,
                        value: d as f64,
                    });
                }
                _ => break,
            }
        }
    }
    let tail_error = problem.deconv(theta_star, -(d as i64))?.tail_fraction();
    Ok(BoundResult {
        value: d as f64,
        theta_star: Some(theta_star),
        tail_error,
        status: BoundStatus::Bounded,
        trace,
    })
}

/// `inf_θ (M_A ∘ M_S)(θ, -d)`, clamped to at most one.
pub fn violation_probability(
    problem: &DeconvProblem,
    delay: u64,
    grid: &ThetaGrid,
    opts: &SearchOptions,
) -> Result<BoundResult> {
    let f = |t: f64| {
        problem
            .deconv(t, -(delay as i64))
            .ok()
            .map(|m| m.log_value())
    };
    match optimize_theta(f, grid, opts) {
        Ok(opt) => {
            let tail_error = problem.deconv(opt.theta, -(delay as i64))?.tail_fraction();
            Ok(BoundResult {
                value: opt.value.min(0.0).exp(),
                theta_star: Some(opt.theta),
                tail_error,
                status: BoundStatus::Bounded,
                trace: opt.trace,
            })
        }
        Err(Error::NoStableTheta) => Ok(BoundResult {
            value: 1.0,
            ..BoundResult::unbounded(BoundStatus::Unstable, vec![])
        }),
        Err(e) => Err(e),
    }
}

/// Worst-case (ε = 0) bounds from leaky-bucket envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeterministicBounds {
    /// slots
    pub delay: f64,
    /// bits
    pub backlog: f64,
    /// End-to-end service rate, bits per slot.
    pub rate: f64,
    /// End-to-end latency, slots.
    pub latency: f64,
}

impl DeterministicBounds {
    pub fn is_bounded(&self) -> bool {
        self.delay.is_finite()
    }
}

/// Affine arrival curve `Σ N(b + rδ)` against the min-plus convolution of
/// per-hop latency-rate leftover curves `(C_i - ρ_{c,i})(δ - T_i)⁺`.
///
/// Unbounded only if the arrival rate strictly exceeds the service rate.
pub fn deterministic_bounds(scenario: &TandemScenario) -> DeterministicBounds {
    let sigma = scenario.through_burst();
    let rho = scenario.through_rate();
    let mut rate = f64::INFINITY;
    let mut latency = 0.0;
    for s in &scenario.servers {
        let r = s.capacity - s.cross_rate();
        let sc = s.cross_burst();
        rate = rate.min(r);
        latency += if sc == 0.0 {
            0.0
        } else if r > 0.0 {
            sc / r
        } else {
            f64::INFINITY
        };
    }
    let unbounded = DeterministicBounds {
        delay: f64::INFINITY,
        backlog: f64::INFINITY,
        rate,
        latency,
    };
    if rho > rate || !latency.is_finite() {
        return unbounded;
    }
    if rate <= 0.0 {
        // only an empty flow fits through zero service
        return if sigma == 0.0 && rho == 0.0 {
            DeterministicBounds {
                delay: 0.0,
                backlog: 0.0,
                ..unbounded
            }
        } else {
            unbounded
        };
    }
    DeterministicBounds {
        delay: latency + sigma / rate,
        backlog: sigma + rho * latency,
        rate,
        latency,
    }
}

/// Hop-by-hop analysis: the output bound of each hop is the next hop's
/// arrival, every hop gets `ε/n`, and the per-hop delays are added.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterativeResult {
    /// slots
    pub total: f64,
    pub per_hop: Vec<BoundResult>,
}

pub fn iterative_delay(
    scenario: &TandemScenario,
    epsilon: f64,
    grid: &ThetaGrid,
    opts: &SearchOptions,
) -> Result<IterativeResult> {
    check_epsilon(epsilon)?;
    let n = scenario.hops();
    let hop_eps = epsilon / n as f64;
    let mut input: Rc<dyn CurveFamily + '_> =
        Rc::new(Cached::new(move |t| scenario.arrival_curve(t)));
    let mut per_hop = Vec::with_capacity(n);
    for server in &scenario.servers {
        let horizon = scenario.horizon;
        let service: Rc<dyn CurveFamily + '_> =
            Rc::new(Cached::new(move |t| server.leftover_curve(t, horizon)));
        let problem = DeconvProblem::new(input.clone(), service.clone(), Dependence::Independent);
        let r = delay_bound(&problem, hop_eps, grid, opts)?;
        let stop = !r.is_bounded();
        per_hop.push(r);
        if stop {
            break;
        }
        input = Rc::new(output_bound_curve(input, service));
    }
    let total = if per_hop.len() == n && per_hop.iter().all(BoundResult::is_bounded) {
        per_hop.iter().map(|r| r.value).sum()
    } else {
        f64::INFINITY
    };
    Ok(IterativeResult { total, per_hop })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mgf::{CurveKind, TailModel};
    use crate::service::{constant_rate_service, ServerSpec};
    use crate::traffic::FlowSpec;

    fn ones(theta: f64, h: usize) -> Result<MgfCurve> {
        MgfCurve::with_tail(
            theta,
            CurveKind::Arrival,
            vec![0.0; h + 1],
            TailModel::from_log_ratio(0.0, h),
        )
    }

    fn single_server(c: f64, through: Vec<FlowSpec>, cross: Vec<FlowSpec>) -> TandemScenario {
        TandemScenario {
            servers: vec![ServerSpec::new("s", c, cross).unwrap()],
            through,
            epsilon: 1e-6,
            slot_ms: 0.1,
            horizon: 512,
            theta_grid: ThetaGrid::logspace(1e-4, 10.0, 32).unwrap(),
            dependence: Dependence::Independent,
        }
    }

    #[test]
    fn optimize_single_point_and_refinement() {
        let g = ThetaGrid::single(0.3).unwrap();
        let o = optimize_theta(|t| Some(t * t), &g, &SearchOptions::default()).unwrap();
        assert_eq!((o.theta, o.value), (0.3, 0.09));

        // quadratic in ln θ with minimum between grid points
        let g = ThetaGrid::logspace(1e-3, 1.0, 7).unwrap();
        let f = |t: f64| Some((t.ln() - 0.037f64.ln()).powi(2) + 2.0);
        let grid_min = g
            .values()
            .iter()
            .map(|&t| f(t).unwrap())
            .fold(f64::INFINITY, f64::min);
        let o = optimize_theta(f, &g, &SearchOptions::default()).unwrap();
        assert!(o.value < grid_min);
        assert!((o.theta / 0.037 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn optimize_extends_past_boundary() {
        let g = ThetaGrid::logspace(1.0, 10.0, 5).unwrap();
        let o = optimize_theta(
            |t| Some((t.ln() - 50f64.ln()).powi(2)),
            &g,
            &SearchOptions::default(),
        )
        .unwrap();
        assert!((o.theta / 50.0 - 1.0).abs() < 1e-3);
        assert!(optimize_theta(|_| None, &g, &SearchOptions::default()).is_err());
    }

    #[test]
    fn backlog_without_traffic_is_geometric() {
        let (c, eps) = (2.0, 1e-3);
        let p = DeconvProblem::new(
            |t| ones(t, 400),
            move |t| constant_rate_service(c, t, 400),
            Dependence::Independent,
        );
        for theta in [0.05, 0.5, 2.0] {
            let got = backlog_at_theta(&p, theta, eps).unwrap();
            let expect = ((1.0 / (1.0 - (-theta * c).exp())).ln() - eps.ln()) / theta;
            assert!((got - expect).abs() < 1e-9 * expect.abs().max(1.0));
        }
        // ε = 1 removes the -ln ε term
        let got = backlog_at_theta(&p, 0.5, 1.0).unwrap();
        assert!((got - (1.0 / (1.0 - (-1.0f64).exp())).ln() / 0.5).abs() < 1e-12);
        // large θ drives the bound towards zero
        let g = ThetaGrid::logspace(0.01, 1.0, 10).unwrap();
        let r = backlog_bound(&p, eps, &g, &SearchOptions::default()).unwrap();
        assert!(r.value < 0.5 && r.theta_star.unwrap() > 1.0);
    }

    #[test]
    fn delay_without_traffic_matches_geometric_formula() {
        // Σ_{τ≥d} e^{-θCτ} = q^d / (1 - q)
        let (c, theta, eps) = (1.0, 0.3, 1e-4);
        let p = DeconvProblem::new(
            |t| ones(t, 400),
            move |t| constant_rate_service(c, t, 400),
            Dependence::Independent,
        );
        let q = (-theta * c).exp();
        let expect = ((eps * (1.0 - q)).ln() / q.ln()).ceil().max(0.0) as u64;
        assert_eq!(delay_at_theta(&p, theta, eps, 400).unwrap(), Some(expect));
        assert_eq!(delay_at_theta(&p, theta, eps, expect - 1).unwrap(), None);
    }

    #[test]
    fn deterministic_examples() {
        let fig3 = single_server(
            240_000.0,
            vec![FlowSpec::leaky_bucket(1e6, 3_000.0, 20).unwrap()],
            vec![FlowSpec::leaky_bucket(20e6, 60_000.0, 1).unwrap()],
        );
        let d = deterministic_bounds(&fig3);
        assert!((fig3.slots_to_ms(d.delay) - 40e6 / 1.8e9 * 1e3).abs() < 1e-9);

        let iso = single_server(
            100.0,
            vec![FlowSpec::leaky_bucket(30.0, 5.0, 4).unwrap()],
            vec![],
        );
        assert!((deterministic_bounds(&iso).delay - 4.0 * 30.0 / 100.0).abs() < 1e-12);

        let smooth = single_server(100.0, vec![FlowSpec::cbr(10.0, 10).unwrap()], vec![]);
        assert_eq!(deterministic_bounds(&smooth).delay, 0.0);

        let over = single_server(100.0, vec![FlowSpec::cbr(10.0, 11).unwrap()], vec![]);
        assert!(!deterministic_bounds(&over).is_bounded());
        let full = single_server(
            100.0,
            vec![FlowSpec::leaky_bucket(5.0, 10.0, 10).unwrap()],
            vec![],
        );
        assert!(deterministic_bounds(&full).is_bounded());
    }

    #[test]
    fn probabilistic_not_above_deterministic() {
        let s = single_server(
            100.0,
            vec![FlowSpec::leaky_bucket(200.0, 4.0, 10).unwrap()],
            vec![FlowSpec::leaky_bucket(500.0, 20.0, 1).unwrap()],
        );
        let p = DeconvProblem::for_scenario(&s);
        let r = delay_bound(&p, s.epsilon, &s.theta_grid, &SearchOptions::default()).unwrap();
        assert!(r.is_bounded());
        assert!(r.value <= deterministic_bounds(&s).delay.ceil());
        assert!(r.tail_error >= 0.0 && r.tail_error < 1e-3);

        let v = violation_probability(&p, r.value as u64, &s.theta_grid, &SearchOptions::default())
            .unwrap();
        assert!(v.value <= s.epsilon * (1.0 + 1e-9));
        let v0 = violation_probability(
            &p,
            r.value as u64 - 1,
            &s.theta_grid,
            &SearchOptions::default(),
        )
        .unwrap();
        assert!(v0.value >= v.value);
    }

    #[test]
    fn unstable_scenario_reported() {
        let s = single_server(
            100.0,
            vec![FlowSpec::leaky_bucket(10.0, 6.0, 10).unwrap()],
            vec![FlowSpec::leaky_bucket(10.0, 40.0, 1).unwrap()],
        );
        let p = DeconvProblem::for_scenario(&s);
        let r = delay_bound(&p, 1e-3, &s.theta_grid, &SearchOptions::default()).unwrap();
        assert_eq!(r.status, BoundStatus::Unstable);
        assert!(r.value.is_infinite());
        let v = violation_probability(&p, 10, &s.theta_grid, &SearchOptions::default()).unwrap();
        assert_eq!(v.value, 1.0);
    }

    #[test]
    fn holder_bound_is_looser() {
        let mut s = single_server(
            100.0,
            vec![FlowSpec::leaky_bucket(200.0, 4.0, 10).unwrap()],
            vec![FlowSpec::leaky_bucket(500.0, 20.0, 1).unwrap()],
        );
        let opts = SearchOptions::default();
        let ind =
            delay_bound(&DeconvProblem::for_scenario(&s), 1e-6, &s.theta_grid, &opts).unwrap();
        s.dependence = Dependence::Holder { kappa: 2.0 };
        let dep =
            delay_bound(&DeconvProblem::for_scenario(&s), 1e-6, &s.theta_grid, &opts).unwrap();
        assert!(dep.is_bounded() && dep.value >= ind.value);
    }

    #[test]
    fn iterative_not_below_end_to_end() {
        let cross = vec![FlowSpec::leaky_bucket(300.0, 10.0, 2).unwrap()];
        let mut s = single_server(
            100.0,
            vec![FlowSpec::leaky_bucket(200.0, 4.0, 5).unwrap()],
            cross.clone(),
        );
        s.horizon = 256;
        s.servers = (0..3)
            .map(|i| ServerSpec::new(format!("h{i}"), 100.0, cross.clone()).unwrap())
            .collect();
        let opts = SearchOptions::default();
        let e2e =
            delay_bound(&DeconvProblem::for_scenario(&s), 1e-3, &s.theta_grid, &opts).unwrap();
        let it = iterative_delay(&s, 1e-3, &s.theta_grid, &opts).unwrap();
        assert!(e2e.is_bounded());
        assert_eq!(it.per_hop.len(), 3);
        assert!(it.total >= e2e.value, "{} < {}", it.total, e2e.value);
    }
}
