//! Parameter sweeps behind the figures and the validation runs, with CSV output.

use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::bounds::{
    delay_bound, deterministic_bounds, iterative_delay, BoundResult, BoundStatus, DeconvProblem,
    SearchOptions,
};
use crate::error::{Error, Result};
use crate::scenario::{FlowEntry, ScenarioFile};
use crate::service::TandemScenario;
use crate::sim::{
    minplus_oracle, run_tandem, validate_bounds, BivariateArray, BoundCheck, MinPlusOp, SimConfig,
};
use crate::traffic::{FlowModel, FlowSpec};
use crate::validation::{self, SigmaRhoSetting, SuiteResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Simcheck,
    Oracle,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Fig2,
        Experiment::Fig3,
        Experiment::Fig4,
        Experiment::Fig5,
        Experiment::Simcheck,
        Experiment::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig2 => "fig2",
            Experiment::Fig3 => "fig3",
            Experiment::Fig4 => "fig4",
            Experiment::Fig5 => "fig5",
            Experiment::Simcheck => "simcheck",
            Experiment::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::param(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Success,
    /// Some sweep point had no finite probabilistic bound.
    Unstable,
    /// A validation property did not hold.
    PropertyFailure,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Unstable => 3,
            Outcome::PropertyFailure => 4,
        }
    }
}

/// Overrides for the simulation runs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub replications: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub experiment: Experiment,
    pub outcome: Outcome,
    pub files: Vec<PathBuf>,
    /// Human-readable result lines.
    pub summary: Vec<String>,
}

/// A probabilistic delay bound in milliseconds with its audit trail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayPoint {
    pub ms: f64,
    pub theta_star: Option<f64>,
    pub tail_error: f64,
    pub status: BoundStatus,
}

impl DelayPoint {
    fn from_bound(s: &TandemScenario, r: &BoundResult) -> Self {
        Self {
            ms: s.slots_to_ms(r.value),
            theta_star: r.theta_star,
            tail_error: r.tail_error,
            status: r.status,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.status == BoundStatus::Bounded
    }

    fn cells(&self) -> [String; 3] {
        [ms(self.ms), theta(self.theta_star), sci(self.tail_error)]
    }
}

pub fn probabilistic_delay(s: &TandemScenario, epsilon: f64) -> Result<DelayPoint> {
    let problem = DeconvProblem::for_scenario(s);
    let r = delay_bound(&problem, epsilon, &s.theta_grid, &SearchOptions::default())?;
    Ok(DelayPoint::from_bound(s, &r))
}

pub fn deterministic_delay_ms(s: &TandemScenario) -> f64 {
    s.slots_to_ms(deterministic_bounds(s).delay)
}

/// Largest `(through + cross rate) / capacity` over the servers.
pub fn load(s: &TandemScenario) -> f64 {
    let rho = s.through_rate();
    s.servers
        .iter()
        .map(|v| (rho + v.cross_rate()) / v.capacity)
        .fold(0.0, f64::max)
}

fn ms(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else {
        "inf".into()
    }
}

fn sci(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6e}")
    } else {
        "inf".into()
    }
}

fn theta(t: Option<f64>) -> String {
    t.map(sci).unwrap_or_default()
}

fn params<'a, T>(p: &'a Option<T>, name: &str) -> Result<&'a T> {
    p.as_ref()
        .ok_or_else(|| Error::InvalidScenario(format!("scenario has no {name} parameters")))
}

fn with_cross(s: &TandemScenario, cross: &[FlowSpec]) -> TandemScenario {
    let mut s = s.clone();
    for server in &mut s.servers {
        server.cross = cross.to_vec();
    }
    s
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One point of the flow-count sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig2Row {
    pub flows: u32,
    pub utilization: f64,
    pub d_det_ms: f64,
    pub d_prob: DelayPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig2Sweep {
    pub slot_ms: f64,
    pub epsilon: f64,
    pub target_ms: f64,
    pub rows: Vec<Fig2Row>,
    /// Largest flow count below which every count meets the target.
    pub max_flows_det: u32,
    pub max_flows_prob: u32,
    pub max_util_det: f64,
    pub max_util_prob: f64,
}

pub fn fig2_sweep(file: &ScenarioFile) -> Result<Fig2Sweep> {
    let p = params(&file.experiment.fig2, "fig2")?;
    let base = file.to_tandem()?;
    let mut rows = Vec::new();
    for n in 1..=p.max_flows {
        let mut s = base.clone();
        s.through[0].count = n;
        rows.push(Fig2Row {
            flows: n,
            utilization: load(&s),
            d_det_ms: deterministic_delay_ms(&s),
            d_prob: probabilistic_delay(&s, s.epsilon)?,
        });
    }
    let fits = |v: f64| v <= p.target_delay_ms * (1.0 + 1e-12);
    let admissible = |f: &dyn Fn(&Fig2Row) -> bool| {
        let k = rows.iter().take_while(|r| f(r)).count();
        if k == 0 {
            (0, 0.0)
        } else {
            (rows[k - 1].flows, rows[k - 1].utilization)
        }
    };
    let (max_flows_det, max_util_det) = admissible(&|r| fits(r.d_det_ms));
    let (max_flows_prob, max_util_prob) =
        admissible(&|r| r.d_prob.is_bounded() && fits(r.d_prob.ms));
    Ok(Fig2Sweep {
        slot_ms: base.slot_ms,
        epsilon: base.epsilon,
        target_ms: p.target_delay_ms,
        rows,
        max_flows_det,
        max_flows_prob,
        max_util_det,
        max_util_prob,
    })
}

fn run_fig2(file: &ScenarioFile, out: &Path) -> Result<Report> {
    let p = params(&file.experiment.fig2, "fig2")?;
    let main = fig2_sweep(file)?;
    let rows: Vec<Vec<String>> = main
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![
                r.flows.to_string(),
                format!("{:.6}", r.utilization),
                ms(r.d_det_ms),
            ];
            v.extend(r.d_prob.cells());
            v
        })
        .collect();
    let fig = out.join("fig2.csv");
    write_csv(
        &fig,
        &[
            "flows",
            "utilization",
            "d_det_ms",
            "d_prob_ms",
            "theta_star",
            "tail_error",
        ],
        &rows,
    )?;
    let mut sweeps = vec![main];
    for &slot in &p.sensitivity_slot_ms {
        sweeps.push(fig2_sweep(&file.clone().with_slot_ms(slot))?);
    }
    let summary_rows: Vec<Vec<String>> = sweeps
        .iter()
        .map(|s| {
            vec![
                format!("{}", s.slot_ms),
                format!("{}", s.epsilon),
                format!("{}", s.target_ms),
                s.max_flows_det.to_string(),
                format!("{:.4}", s.max_util_det),
                s.max_flows_prob.to_string(),
                format!("{:.4}", s.max_util_prob),
            ]
        })
        .collect();
    let sum = out.join("fig2_utilization.csv");
    write_csv(
        &sum,
        &[
            "slot_ms",
            "epsilon",
            "target_delay_ms",
            "max_flows_det",
            "max_utilization_det",
            "max_flows_prob",
            "max_utilization_prob",
        ],
        &summary_rows,
    )?;
    let summary = sweeps
        .iter()
        .map(|s| {
            format!(
                "slot {} ms: max utilization at {} ms is {:.3} deterministic ({} flows), {:.3} at epsilon {} ({} flows)",
                s.slot_ms, s.target_ms, s.max_util_det, s.max_flows_det, s.max_util_prob, s.epsilon, s.max_flows_prob
            )
        })
        .collect();
    Ok(Report {
        experiment: Experiment::Fig2,
        outcome: Outcome::Success,
        files: vec![fig, sum],
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig3Row {
    pub m: u32,
    pub d_det_ms: f64,
    pub d_prob: DelayPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig3Sweep {
    pub rows: Vec<Fig3Row>,
    pub nocross: DelayPoint,
    pub cbr: DelayPoint,
}

pub fn fig3_sweep(file: &ScenarioFile) -> Result<Fig3Sweep> {
    let p = params(&file.experiment.fig3, "fig3")?;
    let base = file.to_tandem()?;
    let slot = base.slot_ms;
    let eps = base.epsilon;
    let mut rows = Vec::new();
    for &m in &p.m_values {
        let cross = FlowEntry {
            model: FlowModel::LeakyBucket,
            burst_mb: p.cross_burst_mb / m as f64,
            rate_mbps: p.cross_rate_mbps / m as f64,
            count: m,
        }
        .to_flow(slot)?;
        let s = with_cross(&base, &[cross]);
        rows.push(Fig3Row {
            m,
            d_det_ms: deterministic_delay_ms(&s),
            d_prob: probabilistic_delay(&s, eps)?,
        });
    }
    let nocross = probabilistic_delay(&with_cross(&base, &[]), eps)?;
    let cbr_flow = FlowEntry {
        model: FlowModel::Cbr,
        burst_mb: 0.0,
        rate_mbps: p.cross_rate_mbps,
        count: 1,
    }
    .to_flow(slot)?;
    let cbr = probabilistic_delay(&with_cross(&base, &[cbr_flow]), eps)?;
    Ok(Fig3Sweep { rows, nocross, cbr })
}

fn run_fig3(file: &ScenarioFile, out: &Path) -> Result<Report> {
    let sweep = fig3_sweep(file)?;
    let rows: Vec<Vec<String>> = sweep
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![r.m.to_string(), ms(r.d_det_ms)];
            v.extend(r.d_prob.cells());
            v.extend(sweep.nocross.cells());
            v.extend(sweep.cbr.cells());
            v
        })
        .collect();
    let path = out.join("fig3.csv");
    write_csv(
        &path,
        &[
            "m",
            "d_det_ms",
            "d_prob_ms",
            "theta_star",
            "tail_error",
            "d_nocross_ms",
            "nocross_theta_star",
            "nocross_tail_error",
            "d_cbr_ms",
            "cbr_theta_star",
            "cbr_tail_error",
        ],
        &rows,
    )?;
    let mut summary: Vec<String> = sweep
        .rows
        .iter()
        .map(|r| {
            format!(
                "m = {}: d_det {:.2} ms, d_prob {:.2} ms",
                r.m, r.d_det_ms, r.d_prob.ms
            )
        })
        .collect();
    summary.push(format!(
        "references: no cross traffic {:.2} ms, constant-rate cross traffic {:.2} ms",
        sweep.nocross.ms, sweep.cbr.ms
    ));
    let stable = sweep.rows.iter().all(|r| r.d_prob.is_bounded());
    Ok(Report {
        experiment: Experiment::Fig3,
        outcome: if stable {
            Outcome::Success
        } else {
            Outcome::Unstable
        },
        files: vec![path],
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig4Row {
    pub m: u32,
    pub load: f64,
    pub d_det_ms: f64,
    pub d_prob: DelayPoint,
}

pub fn fig4_sweep(file: &ScenarioFile) -> Result<Vec<Fig4Row>> {
    let p = params(&file.experiment.fig4, "fig4")?;
    let base = file.to_tandem()?;
    let mut rows = Vec::new();
    for &m in &p.m_values {
        let flow = FlowEntry {
            model: FlowModel::LeakyBucket,
            burst_mb: p.burst_mb,
            rate_mbps: p.rate_mbps,
            count: m,
        }
        .to_flow(base.slot_ms)?;
        let mut s = with_cross(&base, &[flow]);
        s.through = vec![flow];
        rows.push(Fig4Row {
            m,
            load: load(&s),
            d_det_ms: deterministic_delay_ms(&s),
            d_prob: probabilistic_delay(&s, s.epsilon)?,
        });
    }
    Ok(rows)
}

fn run_fig4(file: &ScenarioFile, out: &Path) -> Result<Report> {
    let rows = fig4_sweep(file)?;
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.m.to_string(), format!("{:.6}", r.load), ms(r.d_det_ms)];
            v.extend(r.d_prob.cells());
            v.push(status_name(r.d_prob.status).into());
            v
        })
        .collect();
    let path = out.join("fig4.csv");
    write_csv(
        &path,
        &[
            "m",
            "load",
            "d_det_ms",
            "d_prob_ms",
            "theta_star",
            "tail_error",
            "status",
        ],
        &cells,
    )?;
    let summary = rows
        .iter()
        .map(|r| {
            format!(
                "m = {} (load {:.3}): d_det {:.2} ms, d_prob {}",
                r.m,
                r.load,
                r.d_det_ms,
                if r.d_prob.is_bounded() {
                    format!("{:.2} ms", r.d_prob.ms)
                } else {
                    status_name(r.d_prob.status).into()
                }
            )
        })
        .collect();
    let stable = rows.iter().all(|r| r.d_prob.is_bounded());
    Ok(Report {
        experiment: Experiment::Fig4,
        outcome: if stable {
            Outcome::Success
        } else {
            Outcome::Unstable
        },
        files: vec![path],
        summary,
    })
}

fn status_name(s: BoundStatus) -> &'static str {
    match s {
        BoundStatus::Bounded => "bounded",
        BoundStatus::Unstable => "unstable",
        BoundStatus::NotCertified => "not-certified",
    }
}

/// Least-squares line `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// `‖residual‖₂ / ‖y‖₂`.
    pub rel_residual: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 || ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::param("a line fit needs at least two finite points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::param("a line fit needs two distinct abscissae"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let norm: f64 = ys.iter().map(|y| y * y).sum();
    Ok(LinearFit {
        slope,
        intercept,
        rel_residual: if norm > 0.0 { (res / norm).sqrt() } else { 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig5Row {
    pub n: u32,
    pub d_det_ms: f64,
    pub d_prob: DelayPoint,
    /// Sum of per-hop bounds at `ε/n` each.
    pub d_iterative_ms: Option<f64>,
    pub iterative_thetas: Vec<Option<f64>>,
    pub iterative_tail_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig5Sweep {
    pub rows: Vec<Fig5Row>,
    pub det_fit: Option<LinearFit>,
    pub prob_fit: Option<LinearFit>,
    pub iterative_fit: Option<LinearFit>,
    /// The first server analysed alone.
    pub single_hop: DelayPoint,
}

impl Fig5Sweep {
    /// Per-hop growth of the end-to-end bound against the one-hop bound.
    pub fn pays_bursts_once(&self) -> bool {
        self.single_hop.is_bounded() && self.prob_fit.is_some_and(|f| f.slope < self.single_hop.ms)
    }
}

pub fn fig5_sweep(file: &ScenarioFile) -> Result<Fig5Sweep> {
    let p = params(&file.experiment.fig5, "fig5")?;
    let base = file.to_tandem()?;
    let template = base.servers[0].clone();
    let opts = SearchOptions::default();
    let chain = |n: u32| {
        let mut s = base.clone();
        s.servers = (1..=n)
            .map(|i| {
                let mut v = template.clone();
                v.label = format!("hop{i}");
                v
            })
            .collect();
        s
    };
    let mut rows = Vec::new();
    for &n in &p.hops {
        if n == 0 {
            return Err(Error::InvalidScenario("hop counts must be positive".into()));
        }
        let s = chain(n);
        let (d_iterative_ms, iterative_thetas, iterative_tail_error) = if p.iterative {
            let it = iterative_delay(&s, s.epsilon, &s.theta_grid, &opts)?;
            (
                Some(s.slots_to_ms(it.total)),
                it.per_hop.iter().map(|r| r.theta_star).collect(),
                it.per_hop.iter().map(|r| r.tail_error).fold(0.0, f64::max),
            )
        } else {
            (None, vec![], 0.0)
        };
        rows.push(Fig5Row {
            n,
            d_det_ms: deterministic_delay_ms(&s),
            d_prob: probabilistic_delay(&s, s.epsilon)?,
            d_iterative_ms,
            iterative_thetas,
            iterative_tail_error,
        });
    }
    let single_hop = probabilistic_delay(&chain(1), base.epsilon)?;
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let fit = |ys: Vec<f64>| linear_fit(&xs, &ys).ok();
    Ok(Fig5Sweep {
        det_fit: fit(rows.iter().map(|r| r.d_det_ms).collect()),
        prob_fit: fit(rows.iter().map(|r| r.d_prob.ms).collect()),
        iterative_fit: if p.iterative {
            fit(rows
                .iter()
                .map(|r| r.d_iterative_ms.unwrap_or(f64::INFINITY))
                .collect())
        } else {
            None
        },
        rows,
        single_hop,
    })
}

fn run_fig5(file: &ScenarioFile, out: &Path) -> Result<Report> {
    let sweep = fig5_sweep(file)?;
    let rows: Vec<Vec<String>> = sweep
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![r.n.to_string(), ms(r.d_det_ms)];
            v.extend(r.d_prob.cells());
            v.push(r.d_iterative_ms.map(ms).unwrap_or_default());
            v.push(
                r.iterative_thetas
                    .iter()
                    .map(|t| theta(*t))
                    .collect::<Vec<_>>()
                    .join(" "),
            );
            v.push(if r.d_iterative_ms.is_some() {
                sci(r.iterative_tail_error)
            } else {
                String::new()
            });
            v
        })
        .collect();
    let path = out.join("fig5.csv");
    write_csv(
        &path,
        &[
            "n",
            "d_det_ms",
            "d_prob_ms",
            "theta_star",
            "tail_error",
            "d_iterative_ms",
            "iterative_theta_stars",
            "iterative_tail_error",
        ],
        &rows,
    )?;
    let fits = [
        ("deterministic", sweep.det_fit),
        ("probabilistic", sweep.prob_fit),
        ("iterative", sweep.iterative_fit),
    ];
    let fit_rows: Vec<Vec<String>> = fits
        .iter()
        .filter_map(|(name, f)| {
            f.map(|f| {
                vec![
                    name.to_string(),
                    format!("{:.6}", f.slope),
                    format!("{:.6}", f.intercept),
                    sci(f.rel_residual),
                ]
            })
        })
        .chain(std::iter::once(
            [
                vec![
                    "single-hop".to_string(),
                    String::new(),
                    ms(sweep.single_hop.ms),
                ],
                vec![String::new()],
            ]
            .concat(),
        ))
        .collect();
    let fit_path = out.join("fig5_fit.csv");
    write_csv(
        &fit_path,
        &["series", "slope_ms_per_hop", "intercept_ms", "rel_residual"],
        &fit_rows,
    )?;
    let mut summary: Vec<String> = fits
        .iter()
        .filter_map(|(name, f)| {
            f.map(|f| {
                format!(
                    "{name}: {:.3} ms per hop + {:.3} ms (relative residual {:.2e})",
                    f.slope, f.intercept, f.rel_residual
                )
            })
        })
        .collect();
    summary.push(format!(
        "single hop alone {:.3} ms; end-to-end growth per hop is {} than that",
        sweep.single_hop.ms,
        if sweep.pays_bursts_once() {
            "smaller"
        } else {
            "not smaller"
        }
    ));
    let stable = sweep.rows.iter().all(|r| r.d_prob.is_bounded());
    Ok(Report {
        experiment: Experiment::Fig5,
        outcome: if stable {
            Outcome::Success
        } else {
            Outcome::Unstable
        },
        files: vec![path, fit_path],
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimcheckResult {
    pub d_prob: DelayPoint,
    pub check: BoundCheck,
    /// Deterministic bound in slots (ceiling) and the delays above it.
    pub det_delay_slots: u64,
    pub det_violations: u64,
    /// Fraction of observed slots with any delay at all.
    pub zero_delay_frequency: f64,
    /// `max_t [(A ⊗ S)(0,t) - D(0,t)]` per hop over the small instances.
    pub max_hop_shortfall: f64,
    /// Same for the whole tandem.
    pub max_tandem_shortfall: f64,
    pub small_instances: u32,
}

impl SimcheckResult {
    pub fn passed(&self) -> bool {
        self.check.pass
            && self.det_violations == 0
            && self.max_hop_shortfall <= 0.0
            && self.max_tandem_shortfall <= 0.0
    }
}

pub fn simcheck(file: &ScenarioFile, opts: RunOptions) -> Result<SimcheckResult> {
    let p = params(&file.experiment.simcheck, "simcheck")?;
    let mut s = file.to_tandem()?;
    s.epsilon = p.epsilon;
    let d_prob = probabilistic_delay(&s, p.epsilon)?;
    if !d_prob.is_bounded() {
        return Err(Error::Unstable {
            theta: f64::NAN,
            ratio: f64::INFINITY,
        });
    }
    let bound = s.ms_to_slots(d_prob.ms).round() as u64;
    let config = SimConfig {
        slots: p.slots,
        replications: opts.replications.unwrap_or(p.replications),
        seed: opts.seed.unwrap_or(p.seed),
        period_factor: p.period_factor,
        warmup: 0,
    };
    let check = validate_bounds(&s, bound, p.epsilon, &config)?;
    let det_delay_slots = deterministic_bounds(&s).delay.ceil() as u64;
    let hist = &check.stats.delay_histogram;
    let above = |k: u64| hist.iter().skip(k as usize + 1).sum::<u64>();
    let det_violations = above(det_delay_slots);
    let zero_delay_frequency = if check.stats.observed > 0 {
        above(0) as f64 / check.stats.observed as f64
    } else {
        0.0
    };

    let n = p.small_instance_slots;
    let mut max_hop_shortfall = f64::NEG_INFINITY;
    let mut max_tandem_shortfall = f64::NEG_INFINITY;
    for i in 0..p.small_instances {
        let run = run_tandem(
            &s,
            n,
            config.seed.wrapping_add(1 + i as u64),
            p.period_factor,
        )?;
        for hop in &run.hops {
            let a = BivariateArray::from_path(&hop.arrivals, n);
            let sv = BivariateArray::from_path(&hop.service_path(), n);
            let bound = minplus_oracle(&a, &sv, MinPlusOp::Conv);
            let tol = 1e-9 * hop.arrivals.at(n).max(1.0);
            for t in 0..=n {
                max_hop_shortfall =
                    max_hop_shortfall.max(bound.get(0, t) - hop.departures.at(t) - tol);
            }
        }
        let tol = 1e-9 * run.through_arrivals().at(n).max(1.0);
        max_tandem_shortfall =
            max_tandem_shortfall.max(crate::sim::concatenation_shortfall(&run, n) - tol);
    }
    Ok(SimcheckResult {
        d_prob,
        check,
        det_delay_slots,
        det_violations,
        zero_delay_frequency,
        max_hop_shortfall,
        max_tandem_shortfall,
        small_instances: p.small_instances,
    })
}

fn run_simcheck(file: &ScenarioFile, out: &Path, opts: RunOptions) -> Result<Report> {
    let r = simcheck(file, opts)?;
    let c = &r.check;
    let path = out.join("simcheck.csv");
    let mut row = vec![format!("{}", c.epsilon), c.delay_bound.to_string()];
    row.extend(r.d_prob.cells());
    row.extend([
        c.stats.replications.to_string(),
        c.stats.observed.to_string(),
        c.stats.censored.to_string(),
        c.stats.violations[0].to_string(),
        sci(c.frequency),
        sci(c.stderr),
        sci(c.epsilon + 3.0 * c.stderr),
        c.pass.to_string(),
        c.insufficient.to_string(),
        r.det_delay_slots.to_string(),
        r.det_violations.to_string(),
        sci(r.zero_delay_frequency),
        sci(c.max_shortfall),
        sci(r.max_hop_shortfall),
        sci(r.max_tandem_shortfall),
        r.small_instances.to_string(),
    ]);
    write_csv(
        &path,
        &[
            "epsilon",
            "delay_bound_slots",
            "delay_bound_ms",
            "theta_star",
            "tail_error",
            "replications",
            "observed_slots",
            "censored_slots",
            "violations",
            "frequency",
            "stderr",
            "limit",
            "pass",
            "insufficient",
            "det_delay_slots",
            "det_violations",
            "zero_delay_frequency",
            "max_path_shortfall",
            "max_hop_shortfall_small",
            "max_tandem_shortfall_small",
            "small_instances",
        ],
        &[row],
    )?;
    let hist_path = out.join("simcheck_delay_histogram.csv");
    let hist: Vec<Vec<String>> = c
        .stats
        .delay_histogram
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(d, k)| vec![d.to_string(), k.to_string()])
        .collect();
    write_csv(&hist_path, &["delay_slots", "count"], &hist)?;
    let summary = vec![
        format!(
            "bound {} slots at epsilon {}: frequency {:.3e} against limit {:.3e} ({} observed slots, {} censored) -> {}",
            c.delay_bound,
            c.epsilon,
            c.frequency,
            c.epsilon + 3.0 * c.stderr,
            c.stats.observed,
            c.stats.censored,
            if c.pass { "PASS" } else { "FAIL" }
        ),
        format!(
            "deterministic bound {} slots: {} violations",
            r.det_delay_slots, r.det_violations
        ),
        format!(
            "path-wise shortfalls (must be <= 0): long runs {:.3e}, hop {:.3e}, tandem {:.3e}",
            c.max_shortfall, r.max_hop_shortfall, r.max_tandem_shortfall
        ),
    ];
    Ok(Report {
        experiment: Experiment::Simcheck,
        outcome: if r.passed() {
            Outcome::Success
        } else {
            Outcome::PropertyFailure
        },
        files: vec![path, hist_path],
        summary,
    })
}

/// The operator, tail, closed-form and Monte-Carlo suites.
pub fn oracle_suites(file: &ScenarioFile, opts: RunOptions) -> Result<Vec<SuiteResult>> {
    let p = params(&file.experiment.oracle, "oracle")?;
    let seed = opts.seed.unwrap_or(p.seed);
    let s = file.to_tandem()?;
    let server = &s.servers[0];
    let setting = SigmaRhoSetting {
        capacity: server.capacity,
        sigma: s.through_burst(),
        rho: s.through_rate(),
        sigma_c: server.cross_burst(),
        rho_c: server.cross_rate(),
        epsilon: s.epsilon,
        horizon: s.horizon,
    };
    let cf = validation::closed_form_consistency(&setting, &[1, 2, 3, 4, 5], &s.theta_grid, 1e-9)?;
    let nb = validation::negbin_suite(&[2, 3, 4, 5], &[0.1, 0.3, 0.5, 0.7], 200)?;
    Ok(vec![
        validation::conv_mgf_suite(
            opts.replications.unwrap_or(p.mgf_replications),
            10,
            1.0,
            seed,
        )?,
        validation::deconv_chain_associativity(p.instances, seed, 1e-10)?,
        validation::conv_commutativity(p.instances, seed.wrapping_add(1), 1e-12)?,
        validation::deconv_truncation(256, 1e-12)?,
        cf.bounds,
        cf.affine,
        nb.chernoff,
        nb.identity,
    ])
}

fn run_oracle(file: &ScenarioFile, out: &Path, opts: RunOptions) -> Result<Report> {
    let suites = oracle_suites(file, opts)?;
    let path = out.join("oracle.csv");
    let rows: Vec<Vec<String>> = suites
        .iter()
        .map(|s| {
            vec![
                s.name.to_string(),
                s.cases.to_string(),
                s.failures.to_string(),
                sci(s.max_error),
                sci(s.tolerance),
                s.passed.to_string(),
            ]
        })
        .collect();
    write_csv(
        &path,
        &[
            "suite",
            "cases",
            "failures",
            "max_error",
            "tolerance",
            "passed",
        ],
        &rows,
    )?;
    let summary = suites
        .iter()
        .map(|s| {
            format!(
                "{}: {} cases, {} failures, max error {:.3e} -> {}",
                s.name,
                s.cases,
                s.failures,
                s.max_error,
                if s.passed { "PASS" } else { "FAIL" }
            )
        })
        .collect();
    Ok(Report {
        experiment: Experiment::Oracle,
        outcome: if suites.iter().all(|s| s.passed) {
            Outcome::Success
        } else {
            Outcome::PropertyFailure
        },
        files: vec![path],
        summary,
    })
}

/// Runs one experiment and writes its CSV files into `out`.
pub fn run_experiment(
    experiment: Experiment,
    file: &ScenarioFile,
    out: &Path,
    opts: RunOptions,
) -> Result<Report> {
    file.to_tandem()?;
    std::fs::create_dir_all(out)?;
    match experiment {
        Experiment::Fig2 => run_fig2(file, out),
        Experiment::Fig3 => run_fig3(file, out),
        Experiment::Fig4 => run_fig4(file, out),
        Experiment::Fig5 => run_fig5(file, out),
        Experiment::Simcheck => run_simcheck(file, out, opts),
        Experiment::Oracle => run_oracle(file, out, opts),
    }
}
