//! Discrete-time fluid simulation of a tandem with per-hop cross traffic,
//! and brute-force min-plus operators for path-wise checks.
//!
//! In every slot arrivals come first, then the server works. Cross traffic
//! is served before the through flow.

use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::service::TandemScenario;
use crate::traffic::{FlowModel, FlowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    /// Burst `b` at the start of every period, the rest of `rP` spread evenly.
    PeriodicOnOff,
    Cbr,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    pub kind: SourceKind,
    /// bits
    pub burst: f64,
    /// bits per slot
    pub rate: f64,
    /// slots
    pub period: u64,
}

impl SourceModel {
    pub fn periodic(burst: f64, rate: f64, period: u64) -> Result<Self> {
        if !(burst >= 0.0 && rate > 0.0) || period == 0 {
            return Err(Error::NonCompliantSource(format!(
                "need b >= 0, r > 0 and a period, got b={burst}, r={rate}, P={period}"
            )));
        }
        if (period as f64) * rate < burst * (1.0 - 1e-12) {
            return Err(Error::NonCompliantSource(format!(
                "period {period} is shorter than b/r = {}",
                burst / rate
            )));
        }
        Ok(Self {
            kind: SourceKind::PeriodicOnOff,
            burst,
            rate,
            period,
        })
    }

    pub fn cbr(rate: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::NonCompliantSource(format!("bad rate {rate}")));
        }
        Ok(Self {
            kind: SourceKind::Cbr,
            burst: 0.0,
            rate,
            period: 1,
        })
    }

    /// Periodic source with `P = ceil(factor · b/r)`, or CBR when there is
    /// no burst.
    pub fn from_flow(flow: &FlowSpec, period_factor: f64) -> Result<Self> {
        if flow.model == FlowModel::Cbr || flow.burst == 0.0 || flow.rate == 0.0 {
            return Self::cbr(flow.rate);
        }
        if period_factor < 1.0 {
            return Err(Error::NonCompliantSource(format!(
                "period factor {period_factor} below one"
            )));
        }
        let period = (period_factor * flow.burst / flow.rate).ceil().max(1.0) as u64;
        Self::periodic(flow.burst, flow.rate, period)
    }

    fn draw_phase(&self, rng: &mut impl Rng) -> u64 {
        match self.kind {
            SourceKind::Cbr => 0,
            SourceKind::PeriodicOnOff => rng.random_range(0..self.period),
        }
    }

    fn slow_rate(&self) -> f64 {
        if self.period <= 1 {
            self.rate
        } else {
            ((self.rate * self.period as f64 - self.burst) / (self.period - 1) as f64).max(0.0)
        }
    }

    /// Bits emitted in slot `t >= 1`.
    fn emit(&self, phase: u64, t: u64) -> f64 {
        match self.kind {
            SourceKind::Cbr => self.rate,
            SourceKind::PeriodicOnOff if self.period == 1 => self.rate,
            SourceKind::PeriodicOnOff => {
                if (t - 1 + phase).is_multiple_of(self.period) {
                    self.burst
                } else {
                    self.slow_rate()
                }
            }
        }
    }
}

/// Cumulative process `A(0, t)` for `t = 0..=slots`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    cumulative: Vec<f64>,
}

impl SamplePath {
    pub fn from_increments(increments: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut cumulative = vec![0.0];
        let mut acc = 0.0;
        for a in increments {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::param(format!(
                    "negative or non-finite increment {a}"
                )));
            }
            acc += a;
            cumulative.push(acc);
        }
        Ok(Self { cumulative })
    }

    pub fn zeros(slots: usize) -> Self {
        Self {
            cumulative: vec![0.0; slots + 1],
        }
    }

    /// Number of slots.
    pub fn slots(&self) -> usize {
        self.cumulative.len() - 1
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn at(&self, t: usize) -> f64 {
        self.cumulative[t]
    }

    /// `A(s, t) = A(0, t) - A(0, s)`.
    pub fn between(&self, s: usize, t: usize) -> f64 {
        self.cumulative[t] - self.cumulative[s]
    }

    /// Arrivals in slot `t >= 1`.
    pub fn increment(&self, t: usize) -> f64 {
        self.cumulative[t] - self.cumulative[t - 1]
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.cumulative.windows(2).map(|w| w[1] - w[0])
    }

    /// `max_{s<=t} [A(s,t) - r(t-s)] - b`: positive if the leaky bucket is violated.
    pub fn leaky_bucket_excess(&self, burst: f64, rate: f64) -> f64 {
        let mut min_prefix = f64::INFINITY;
        let mut worst = f64::NEG_INFINITY;
        for (t, a) in self.cumulative.iter().enumerate() {
            let v = a - rate * t as f64;
            min_prefix = min_prefix.min(v);
            worst = worst.max(v - min_prefix);
        }
        worst - burst
    }

    fn sum(paths: &[SamplePath], slots: usize) -> Self {
        let mut out = Self::zeros(slots);
        for p in paths {
            for (o, v) in out.cumulative.iter_mut().zip(&p.cumulative) {
                *o += v;
            }
        }
        out
    }
}

/// One source over `slots` slots with its phase drawn from `seed`.
pub fn generate_path(model: &SourceModel, slots: usize, seed: u64) -> Result<SamplePath> {
    if slots == 0 {
        return Err(Error::param("a sample path needs at least one slot"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(generate_with_rng(model, slots, &mut rng))
}

fn generate_with_rng(model: &SourceModel, slots: usize, rng: &mut impl Rng) -> SamplePath {
    let phase = model.draw_phase(rng);
    let mut cumulative = Vec::with_capacity(slots + 1);
    cumulative.push(0.0);
    let mut acc = 0.0;
    for t in 1..=slots as u64 {
        acc += model.emit(phase, t);
        cumulative.push(acc);
    }
    SamplePath { cumulative }
}

/// Aggregate of `count` independent copies per flow.
fn aggregate_path(
    flows: &[FlowSpec],
    slots: usize,
    period_factor: f64,
    rng: &mut impl Rng,
) -> Result<SamplePath> {
    let mut paths = Vec::new();
    for f in flows {
        let model = SourceModel::from_flow(f, period_factor)?;
        for _ in 0..f.count {
            paths.push(generate_with_rng(&model, slots, rng));
        }
    }
    Ok(SamplePath::sum(&paths, slots))
}

/// Per-hop record of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct HopTrace {
    pub arrivals: SamplePath,
    pub cross: SamplePath,
    /// Capacity left to the through flow in each slot (index 0 unused).
    pub available: Vec<f64>,
    /// Total bits served in each slot (index 0 unused).
    pub used: Vec<f64>,
    pub departures: SamplePath,
}

impl HopTrace {
    /// Realized service `S(s, t)` offered to the through flow.
    pub fn service_path(&self) -> SamplePath {
        SamplePath::from_increments(self.available[1..].iter().copied())
            .expect("available capacity is nonnegative")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TandemRun {
    pub hops: Vec<HopTrace>,
}

impl TandemRun {
    pub fn through_arrivals(&self) -> &SamplePath {
        &self.hops[0].arrivals
    }

    pub fn departures(&self) -> &SamplePath {
        &self.hops.last().expect("at least one hop").departures
    }
}

/// Work-conserving server of `capacity` bits per slot serving cross traffic
/// first.
pub fn serve(capacity: f64, arrivals: &SamplePath, cross: &SamplePath) -> HopTrace {
    let slots = arrivals.slots();
    let (mut q, mut qc) = (0.0f64, 0.0f64);
    let mut available = vec![0.0; slots + 1];
    let mut used = vec![0.0; slots + 1];
    let mut dep = Vec::with_capacity(slots + 1);
    dep.push(0.0);
    let mut d = 0.0;
    for t in 1..=slots {
        qc += cross.increment(t);
        q += arrivals.increment(t);
        let sc = qc.min(capacity);
        qc -= sc;
        let left = capacity - sc;
        let st = q.min(left);
        q -= st;
        available[t] = left;
        used[t] = sc + st;
        d += st;
        // cumulative departures never overtake cumulative arrivals
        d = d.min(arrivals.at(t));
        dep.push(d);
    }
    HopTrace {
        arrivals: arrivals.clone(),
        cross: cross.clone(),
        available,
        used,
        departures: SamplePath { cumulative: dep },
    }
}

/// Simulates the through aggregate across every hop with fresh cross traffic.
pub fn run_tandem(
    scenario: &TandemScenario,
    slots: usize,
    seed: u64,
    period_factor: f64,
) -> Result<TandemRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut input = aggregate_path(&scenario.through, slots, period_factor, &mut rng)?;
    let mut hops = Vec::with_capacity(scenario.hops());
    for server in &scenario.servers {
        let cross = aggregate_path(&server.cross, slots, period_factor, &mut rng)?;
        let hop = serve(server.capacity, &input, &cross);
        input = hop.departures.clone();
        hops.push(hop);
    }
    Ok(TandemRun { hops })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureOptions {
    /// Delay thresholds (slots) whose exceedances are counted.
    pub thresholds: Vec<u64>,
    /// Width of a backlog histogram bin in bits.
    pub backlog_bin: f64,
    /// Leading slots excluded from the statistics.
    pub warmup: usize,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self {
            thresholds: vec![],
            backlog_bin: 1.0,
            warmup: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    /// Count of slots per virtual delay (index = slots).
    pub delay_histogram: Vec<u64>,
    /// Count of slots per backlog bin.
    pub backlog_histogram: Vec<u64>,
    pub backlog_bin: f64,
    pub thresholds: Vec<u64>,
    /// Slots whose delay exceeds each threshold.
    pub violations: Vec<u64>,
    /// Slots with a completed delay measurement.
    pub observed: u64,
    /// Slots whose data had not left by the end of the run.
    pub censored: u64,
    pub max_delay: u64,
    pub max_backlog: f64,
    pub replications: u32,
    pub seed: u64,
}

impl SimStats {
    fn empty(opts: &MeasureOptions) -> Self {
        Self {
            delay_histogram: vec![],
            backlog_histogram: vec![],
            backlog_bin: opts.backlog_bin,
            thresholds: opts.thresholds.clone(),
            violations: vec![0; opts.thresholds.len()],
            observed: 0,
            censored: 0,
            max_delay: 0,
            max_backlog: 0.0,
            replications: 0,
            seed: 0,
        }
    }

    /// Adds the counts of `other`; thresholds and bins must agree.
    pub fn merge(&mut self, other: &SimStats) {
        fn add(a: &mut Vec<u64>, b: &[u64]) {
            if a.len() < b.len() {
                a.resize(b.len(), 0);
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        add(&mut self.delay_histogram, &other.delay_histogram);
        add(&mut self.backlog_histogram, &other.backlog_histogram);
        add(&mut self.violations, &other.violations);
        self.observed += other.observed;
        self.censored += other.censored;
        self.max_delay = self.max_delay.max(other.max_delay);
        self.max_backlog = self.max_backlog.max(other.max_backlog);
        self.replications += other.replications;
    }

    /// Fraction of observed slots exceeding threshold `i`.
    pub fn violation_frequency(&self, i: usize) -> f64 {
        if self.observed == 0 {
            0.0
        } else {
            self.violations[i] as f64 / self.observed as f64
        }
    }
}

/// Virtual delay and backlog of every slot `t >= 1`.
///
/// The delay at `t` is the least `s` with `A(0,t) <= D(0,t+s)`. Slots whose
/// data has not departed by the end of the run are censored.
pub fn measure(arrivals: &SamplePath, departures: &SamplePath, opts: &MeasureOptions) -> SimStats {
    let slots = arrivals.slots().min(departures.slots());
    let mut stats = SimStats::empty(opts);
    stats.replications = 1;
    let a = arrivals.cumulative();
    let d = departures.cumulative();
    let tol = |x: f64| 1e-9 * x.abs().max(1.0);
    let mut k = 0usize;
    for t in 1.max(opts.warmup + 1)..=slots {
        let backlog = (a[t] - d[t]).max(0.0);
        let bin = if opts.backlog_bin > 0.0 {
            (backlog / opts.backlog_bin) as usize
        } else {
            0
        };
        bump(&mut stats.backlog_histogram, bin);
        stats.max_backlog = stats.max_backlog.max(backlog);

        k = k.max(t);
        while k <= slots && a[t] - d[k] > tol(a[t]) {
            k += 1;
        }
        if k > slots {
            stats.censored += 1;
            continue;
        }
        let delay = (k - t) as u64;
        bump(&mut stats.delay_histogram, delay as usize);
        stats.observed += 1;
        stats.max_delay = stats.max_delay.max(delay);
        for (v, th) in stats.violations.iter_mut().zip(&opts.thresholds) {
            if delay > *th {
                *v += 1;
            }
        }
    }
    stats
}

fn bump(h: &mut Vec<u64>, i: usize) {
    if h.len() <= i {
        h.resize(i + 1, 0);
    }
    h[i] += 1;
}

/// Values `x(s, t)` for `0 <= s <= t <= n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateArray {
    n: usize,
    data: Vec<f64>,
}

impl BivariateArray {
    pub fn new(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = vec![f64::NAN; (n + 1) * (n + 1)];
        for s in 0..=n {
            for t in s..=n {
                data[s * (n + 1) + t] = f(s, t);
            }
        }
        Self { n, data }
    }

    /// `x(s, t) = A(0, t) - A(0, s)` from a cumulative path.
    pub fn from_path(path: &SamplePath, n: usize) -> Self {
        Self::new(n, |s, t| path.between(s, t))
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, s: usize, t: usize) -> f64 {
        debug_assert!(s <= t && t <= self.n);
        self.data[s * (self.n + 1) + t]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinPlusOp {
    /// `inf_{τ∈[s,t]} x(s,τ) + y(τ,t)`
    Conv,
    /// `sup_{τ∈[0,s]} x(τ,t) - y(τ,s)`
    Deconv,
}

/// Brute-force bivariate min-plus operators on the common index range.
pub fn minplus_oracle(x: &BivariateArray, y: &BivariateArray, op: MinPlusOp) -> BivariateArray {
    let n = x.n.min(y.n);
    match op {
        MinPlusOp::Conv => BivariateArray::new(n, |s, t| {
            (s..=t)
                .map(|tau| x.get(s, tau) + y.get(tau, t))
                .fold(f64::INFINITY, f64::min)
        }),
        MinPlusOp::Deconv => BivariateArray::new(n, |s, t| {
            (0..=s)
                .map(|tau| x.get(tau, t) - y.get(tau, s))
                .fold(f64::NEG_INFINITY, f64::max)
        }),
    }
}

/// Largest shortfall `max_t [(A ⊗ S)(0,t) - D(0,t)]`; nonpositive for a
/// dynamic server. `S` is additive, so a running minimum suffices.
pub fn dynamic_server_shortfall(a: &SamplePath, d: &SamplePath, s: &SamplePath) -> f64 {
    let mut best = f64::INFINITY;
    let mut worst = f64::NEG_INFINITY;
    let n = a.slots().min(d.slots()).min(s.slots());
    for t in 0..=n {
        best = best.min(a.at(t) - s.at(t));
        worst = worst.max(best + s.at(t) - d.at(t));
    }
    worst
}

/// `max_t [(A ⊗ S¹ ⊗ … ⊗ Sⁿ)(0,t) - D(0,t)]` with the brute-force oracle.
pub fn concatenation_shortfall(run: &TandemRun, n: usize) -> f64 {
    let n = n.min(run.through_arrivals().slots());
    let mut acc = BivariateArray::from_path(run.through_arrivals(), n);
    for hop in &run.hops {
        let s = BivariateArray::from_path(&hop.service_path(), n);
        acc = minplus_oracle(&acc, &s, MinPlusOp::Conv);
    }
    (0..=n)
        .map(|t| acc.get(0, t) - run.departures().at(t))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvMgfReport {
    pub theta: f64,
    pub cells: usize,
    /// Cells where the estimate of `E e^{-θ(X⊗Y)}` exceeds the bound by more
    /// than three standard errors.
    pub exceedances: usize,
    /// Smallest `rhs - lhs` over all cells.
    pub min_margin: f64,
    pub max_stderr: f64,
}

impl ConvMgfReport {
    pub fn pass_fraction(&self) -> f64 {
        1.0 - self.exceedances as f64 / self.cells.max(1) as f64
    }
}

/// Monte-Carlo check of `M̄_{X⊗Y}(θ,s,t) <= Σ_τ M̄_X(θ,s,τ) M̄_Y(θ,τ,t)`
/// from paired replications of independent processes.
pub fn validate_conv_mgf(
    xs: &[SamplePath],
    ys: &[SamplePath],
    theta: f64,
) -> Result<ConvMgfReport> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::param(
            "need the same positive number of X and Y replications",
        ));
    }
    let n = xs
        .iter()
        .chain(ys)
        .map(SamplePath::slots)
        .min()
        .unwrap_or(0);
    let reps = xs.len() as f64;
    let mean_mgf = |paths: &[SamplePath]| {
        BivariateArray::new(n, |s, t| {
            paths
                .iter()
                .map(|p| (-theta * p.between(s, t)).exp())
                .sum::<f64>()
                / reps
        })
    };
    let mx = mean_mgf(xs);
    let my = mean_mgf(ys);
    let conv: Vec<BivariateArray> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            minplus_oracle(
                &BivariateArray::from_path(x, n),
                &BivariateArray::from_path(y, n),
                MinPlusOp::Conv,
            )
        })
        .collect();
    let mut report = ConvMgfReport {
        theta,
        cells: 0,
        exceedances: 0,
        min_margin: f64::INFINITY,
        max_stderr: 0.0,
    };
    for s in 0..=n {
        for t in s..=n {
            let samples: Vec<f64> = conv.iter().map(|c| (-theta * c.get(s, t)).exp()).collect();
            let lhs = samples.iter().sum::<f64>() / reps;
            let var =
                samples.iter().map(|v| (v - lhs).powi(2)).sum::<f64>() / (reps - 1.0).max(1.0);
            let stderr = (var / reps).sqrt();
            let rhs: f64 = (s..=t).map(|tau| mx.get(s, tau) * my.get(tau, t)).sum();
            report.cells += 1;
            report.min_margin = report.min_margin.min(rhs - lhs);
            report.max_stderr = report.max_stderr.max(stderr);
            if lhs > rhs + 3.0 * stderr + 1e-12 * rhs {
                report.exceedances += 1;
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub slots: usize,
    pub replications: u32,
    pub seed: u64,
    /// Source period as a multiple of `b/r`.
    pub period_factor: f64,
    pub warmup: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            slots: 100_000,
            replications: 100,
            seed: 1,
            period_factor: 1.0,
            warmup: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    /// slots
    pub delay_bound: u64,
    pub epsilon: f64,
    pub frequency: f64,
    /// `sqrt(ε(1-ε)/N)` over the observed slots.
    pub stderr: f64,
    pub pass: bool,
    /// True if too few slots were observed for the test to mean anything.
    pub insufficient: bool,
    /// Path-wise dynamic-server and causality checks over all hops and runs.
    pub max_shortfall: f64,
    pub stats: SimStats,
}

/// Empirical frequency of delays above `delay_bound` over independent
/// replications, against `ε + 3·stderr`.
pub fn validate_bounds(
    scenario: &TandemScenario,
    delay_bound: u64,
    epsilon: f64,
    config: &SimConfig,
) -> Result<BoundCheck> {
    if config.replications == 0 || config.slots == 0 {
        return Err(Error::param("need at least one replication and one slot"));
    }
    let opts = MeasureOptions {
        thresholds: vec![delay_bound],
        backlog_bin: scenario.servers[0].capacity,
        warmup: config.warmup,
    };
    let mut seeds = ChaCha8Rng::seed_from_u64(config.seed);
    let mut total = SimStats::empty(&opts);
    let mut shortfall = f64::NEG_INFINITY;
    for _ in 0..config.replications {
        let run = run_tandem(
            scenario,
            config.slots,
            seeds.next_u64(),
            config.period_factor,
        )?;
        for hop in &run.hops {
            let s = hop.service_path();
            let tol = 1e-9 * hop.arrivals.at(config.slots).max(1.0);
            shortfall =
                shortfall.max(dynamic_server_shortfall(&hop.arrivals, &hop.departures, &s) - tol);
        }
        total.merge(&measure(run.through_arrivals(), run.departures(), &opts));
    }
    total.seed = config.seed;
    let n = total.observed as f64;
    let frequency = total.violation_frequency(0);
    let stderr = if n > 0.0 {
        (epsilon * (1.0 - epsilon) / n).sqrt()
    } else {
        f64::INFINITY
    };
    let insufficient = n * epsilon < 10.0;
    Ok(BoundCheck {
        delay_bound,
        epsilon,
        frequency,
        stderr,
        pass: frequency <= epsilon + 3.0 * stderr && shortfall <= 0.0,
        insufficient,
        max_shortfall: shortfall,
        stats: total,
    })
}

/// One line per slot per hop: slot, through arrivals, cross arrivals,
/// service used, through backlog.
pub fn write_trace<W: Write>(run: &TandemRun, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "hop",
        "slot",
        "through_arrivals",
        "cross_arrivals",
        "service_used",
        "through_backlog",
    ])?;
    for (i, hop) in run.hops.iter().enumerate() {
        for t in 1..=hop.arrivals.slots() {
            w.write_record([
                i.to_string(),
                t.to_string(),
                hop.arrivals.increment(t).to_string(),
                hop.cross.increment(t).to_string(),
                hop.used[t].to_string(),
                (hop.arrivals.at(t) - hop.departures.at(t)).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
