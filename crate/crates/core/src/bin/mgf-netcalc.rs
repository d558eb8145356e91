use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mgf_netcalc::bounds::{
    backlog_bound, delay_bound, deterministic_bounds, DeconvProblem, SearchOptions,
};
use mgf_netcalc::experiments::{run_experiment, Experiment, RunOptions};
use mgf_netcalc::scenario::{GridSpec, ScenarioFile};
use mgf_netcalc::service::stability_check;
use mgf_netcalc::sim::{run_tandem, write_trace};
use mgf_netcalc::Error;

/// Delay and backlog bounds for flows across tandem servers.
#[derive(Parser)]
#[command(name = "mgf-netcalc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a figure sweep or validation suite and write CSV files.
    Run(RunArgs),
    /// Print the bounds of a single scenario as JSON.
    Analyze(ScenarioArgs),
    /// Simulate the scenario once and write a per-slot trace.
    Trace(TraceArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Override the slot duration in ms.
    #[arg(long)]
    slot_ms: Option<f64>,
    /// Override the θ grid as `min:max:points` (per bit).
    #[arg(long)]
    theta_grid: Option<GridSpec>,
    /// Override the violation probability.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// fig2, fig3, fig4, fig5, simcheck or oracle.
    #[arg(long)]
    experiment: Experiment,
    /// Output directory for the CSV files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<u32>,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 10_000)]
    slots: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Source period as a multiple of burst/rate.
    #[arg(long, default_value_t = 1.0)]
    period_factor: f64,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

impl ScenarioArgs {
    fn load(&self) -> mgf_netcalc::Result<ScenarioFile> {
        let mut f = ScenarioFile::load(&self.scenario)?;
        if let Some(s) = self.slot_ms {
            f = f.with_slot_ms(s);
        }
        if let Some(g) = self.theta_grid {
            f = f.with_theta_grid(g);
        }
        if let Some(e) = self.epsilon {
            f = f.with_epsilon(e);
        }
        f.to_tandem()?;
        Ok(f)
    }
}

#[derive(Serialize)]
struct Analysis {
    name: String,
    slot_ms: f64,
    epsilon: f64,
    load: f64,
    stable_at_theta_star: Option<bool>,
    deterministic_delay_ms: f64,
    deterministic_backlog_bits: f64,
    delay_ms: f64,
    delay_theta_star: Option<f64>,
    delay_tail_error: f64,
    delay_status: mgf_netcalc::bounds::BoundStatus,
    backlog_bits: f64,
    backlog_theta_star: Option<f64>,
    backlog_tail_error: f64,
}

fn analyze(args: &ScenarioArgs) -> mgf_netcalc::Result<()> {
    let f = args.load()?;
    let s = f.to_tandem()?;
    let problem = DeconvProblem::for_scenario(&s);
    let opts = SearchOptions::default();
    let d = delay_bound(&problem, s.epsilon, &s.theta_grid, &opts)?;
    let b = backlog_bound(&problem, s.epsilon, &s.theta_grid, &opts)?;
    let det = deterministic_bounds(&s);
    let out = Analysis {
        name: f.name.clone(),
        slot_ms: s.slot_ms,
        epsilon: s.epsilon,
        load: mgf_netcalc::experiments::load(&s),
        stable_at_theta_star: d.theta_star.map(|t| stability_check(&s, t).stable),
        deterministic_delay_ms: s.slots_to_ms(det.delay),
        deterministic_backlog_bits: det.backlog,
        delay_ms: s.slots_to_ms(d.value),
        delay_theta_star: d.theta_star,
        delay_tail_error: d.tail_error,
        delay_status: d.status,
        backlog_bits: b.value,
        backlog_theta_star: b.theta_star,
        backlog_tail_error: b.tail_error,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn trace(args: &TraceArgs) -> mgf_netcalc::Result<()> {
    let s = args.scenario.load()?.to_tandem()?;
    let run = run_tandem(&s, args.slots, args.seed, args.period_factor)?;
    write_trace(&run, std::fs::File::create(&args.out)?)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidScenario(_) | Error::Json(_) | Error::InvalidParameter(_) => 2,
        Error::Unstable { .. } | Error::NoStableTheta => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => args.scenario.load().and_then(|f| {
            let opts = RunOptions {
                seed: args.seed,
                replications: args.replications,
            };
            let report = run_experiment(args.experiment, &f, &args.out, opts)?;
            for line in &report.summary {
                println!("{line}");
            }
            for file in &report.files {
                eprintln!("wrote {}", file.display());
            }
            Ok(report.outcome.exit_code() as u8)
        }),
        Command::Analyze(args) => analyze(args).map(|_| 0),
        Command::Trace(args) => trace(args).map(|_| 0),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
