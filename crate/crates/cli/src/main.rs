//! Batch front end: load a scenario, run the exact analysis and/or the
//! simulator, sweep the priority threshold, and emit tables or CSV.
//!
//! Exit codes: 0 success, 2 scenario/schema errors, 3 model validation or
//! instability, 4 analysis-simulation comparison failure, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pollingkit::analysis::{report, PerformanceReport, ReportOptions};
use pollingkit::branching::ModelTransforms;
use pollingkit::model::Discipline;
use pollingkit::simulator;

use pollingkit_cli::scenario::{Scenario, ScenarioError};
use pollingkit_cli::sweep::{run_sweep, SweepError};

#[derive(Parser)]
#[command(
    name = "pollingkit",
    version,
    about = "Two-queue priority polling analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output file (defaults to the scenario's `out`, else stdout only).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario's service discipline.
    #[arg(long, value_enum)]
    discipline: Option<DisciplineArg>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum DisciplineArg {
    Gated,
    GloballyGated,
    Exhaustive,
}

impl From<DisciplineArg> for Discipline {
    fn from(d: DisciplineArg) -> Self {
        match d {
            DisciplineArg::Gated => Discipline::Gated,
            DisciplineArg::GloballyGated => Discipline::GloballyGated,
            DisciplineArg::Exhaustive => Discipline::Exhaustive,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Exact analysis: waiting-time moments and queue lengths.
    Analyze {
        #[command(flatten)]
        common: Common,
    },
    /// Analytic threshold sweep to CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Grid as min:max:step, overriding the scenario sweep block.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Discrete-event simulation with standard errors.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Override the scenario's simulation seed.
        #[arg(long)]
        seed: Option<u64>,
        /// High priority arrivals preempt low priority service (exhaustive).
        #[arg(long)]
        preemptive: bool,
    },
    /// Run both engines and compare with per-quantity z-scores.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        preemptive: bool,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("POLLINGKIT_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            report_error(&e);
            exit_code_for(&e)
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("analysis failed: {0}")]
    Analysis(String),
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("bad --grid: {0} (expected min:max:step)")]
    Grid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Machine-readable diagnostics on stderr.
fn report_error(e: &CliError) {
    let (kind, pointer) = match e {
        CliError::Scenario(ScenarioError::Schema { pointer, .. }) => {
            ("schema", Some(pointer.clone()))
        }
        CliError::Scenario(ScenarioError::Unstable { .. }) => ("unstable", None),
        CliError::Scenario(_) => ("scenario", None),
        CliError::Sweep(SweepError::Scenario(ScenarioError::Unstable { .. })) => ("unstable", None),
        CliError::Sweep(_) => ("sweep", None),
        CliError::Analysis(_) => ("analysis", None),
        CliError::Simulation(_) => ("simulation", None),
        CliError::Grid(_) => ("arguments", None),
        CliError::Io(_) => ("io", None),
    };
    let diag = serde_json::json!({
        "error": kind,
        "message": e.to_string(),
        "pointer": pointer,
    });
    eprintln!("{diag}");
}

fn exit_code_for(e: &CliError) -> ExitCode {
    match e {
        CliError::Scenario(ScenarioError::Schema { .. })
        | CliError::Scenario(ScenarioError::Io(_))
        | CliError::Scenario(ScenarioError::Invalid(_))
        | CliError::Grid(_) => ExitCode::from(2),
        CliError::Scenario(ScenarioError::Unstable { .. })
        | CliError::Scenario(ScenarioError::Violations(_))
        | CliError::Sweep(SweepError::Scenario(_)) => ExitCode::from(3),
        _ => ExitCode::from(1),
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Analyze { common } => {
            let (scenario, discipline) = load(&common)?;
            let model = scenario.model(discipline)?;
            let tr = ModelTransforms::new(model).map_err(|e| CliError::Analysis(e.to_string()))?;
            let rep = report(&tr, &ReportOptions::default())
                .map_err(|e| CliError::Analysis(e.to_string()))?;
            print_report(&rep);
            write_out(
                &common,
                &scenario,
                &serde_json::to_string_pretty(&rep).unwrap(),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { common, grid } => {
            let (scenario, discipline) = load(&common)?;
            let (t_min, t_max, step) = resolve_grid(&scenario, grid.as_deref())?;
            let outcome = run_sweep(&scenario, discipline, t_min, t_max, step)?;
            println!("rows: {}", outcome.rows.len());
            println!("argmin EW_1_weighted: t = {:.6}", outcome.argmin_mean_t);
            println!("argmin sd_W1_weighted: t = {:.6}", outcome.argmin_sd_t);
            let csv = outcome.to_csv();
            match out_path(&common, &scenario) {
                Some(path) => std::fs::write(path, &csv)?,
                None => print!("{csv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate {
            common,
            seed,
            preemptive,
        } => {
            let (scenario, discipline) = load(&common)?;
            let model = scenario.model(discipline)?;
            let cfg = scenario.sim_config(model, seed, preemptive);
            let est = simulator::run(&cfg).map_err(|e| CliError::Simulation(e.to_string()))?;
            if est.low_precision {
                eprintln!(
                    "warning: low-precision run ({} measured customers)",
                    cfg.measured_customers
                );
            }
            print_estimate(&est);
            write_out(
                &common,
                &scenario,
                &serde_json::to_string_pretty(&est).unwrap(),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare {
            common,
            seed,
            preemptive,
        } => {
            let (scenario, discipline) = load(&common)?;
            let model = scenario.model(discipline)?;
            let tr = ModelTransforms::new(model.clone())
                .map_err(|e| CliError::Analysis(e.to_string()))?;
            let rep = report(&tr, &ReportOptions::default())
                .map_err(|e| CliError::Analysis(e.to_string()))?;
            let cfg = scenario.sim_config(model, seed, preemptive);
            let table =
                simulator::compare(&cfg, &rep).map_err(|e| CliError::Simulation(e.to_string()))?;
            println!("{table}");
            write_out(
                &common,
                &scenario,
                &serde_json::to_string_pretty(&table).unwrap(),
            )?;
            Ok(if table.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            })
        }
    }
}

fn load(common: &Common) -> Result<(Scenario, Discipline), CliError> {
    let scenario = Scenario::load(&common.scenario)?;
    let discipline = common
        .discipline
        .map(Discipline::from)
        .unwrap_or(scenario.discipline);
    Ok((scenario, discipline))
}

fn resolve_grid(scenario: &Scenario, flag: Option<&str>) -> Result<(f64, f64, f64), CliError> {
    if let Some(text) = flag {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Grid(text.into()));
        }
        let nums: Result<Vec<f64>, _> = parts.iter().map(|p| p.parse::<f64>()).collect();
        let nums = nums.map_err(|_| CliError::Grid(text.into()))?;
        if !(nums[0] > 0.0 && nums[2] > 0.0 && nums[1] >= nums[0]) {
            return Err(CliError::Grid(text.into()));
        }
        return Ok((nums[0], nums[1], nums[2]));
    }
    match &scenario.sweep {
        Some(s) => Ok((s.t_min, s.t_max, s.step)),
        None => Err(CliError::Scenario(ScenarioError::Invalid(
            "no sweep block in scenario and no --grid given".into(),
        ))),
    }
}

fn out_path(common: &Common, scenario: &Scenario) -> Option<PathBuf> {
    common
        .out
        .clone()
        .or_else(|| scenario.out.as_ref().map(PathBuf::from))
}

fn write_out(common: &Common, scenario: &Scenario, content: &str) -> Result<(), CliError> {
    if let Some(path) = out_path(common, scenario) {
        std::fs::write(path, content)?;
    }
    Ok(())
}

fn print_report(rep: &PerformanceReport) {
    let d = &rep.derived;
    println!("discipline: {}", rep.discipline);
    println!(
        "loads: rho_H = {:.6}, rho_L = {:.6}, rho_2 = {:.6}, rho = {:.6}",
        d.rho_h, d.rho_l, d.rho_2, d.rho
    );
    println!(
        "cycle: E(C) = {:.6}, E(C^2) = {:.6} at {:?}, residual = {:.6}",
        rep.cycle.mean, rep.cycle.second_moment, rep.cycle.anchor, rep.cycle.residual
    );
    if let Some(i_res) = rep.intervisit_residual {
        println!("intervisit residual: {i_res:.6}");
    }
    println!(
        "{:<22} {:>12} {:>12} {:>12} {:>12}",
        "class", "E(W)", "E(W^2)", "sd(W)", "E(N)"
    );
    let line = |name: &str, c: &pollingkit::analysis::ClassReport| {
        println!(
            "{:<22} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            name, c.mean_wait, c.wait_second_moment, c.std_wait, c.mean_queue_length
        );
    };
    line("high priority", &rep.high);
    line("low priority", &rep.low);
    if let Some(q2) = &rep.queue2 {
        line("queue 2", q2);
    }
    line("queue 1 no priority", &rep.queue1_no_priority);
    println!(
        "{:<22} {:>12.6} {:>12.6} {:>12.6}",
        "queue 1 weighted",
        rep.queue1_weighted_mean_wait,
        rep.queue1_weighted_second_moment,
        rep.queue1_weighted_std_wait
    );
}

fn print_estimate(est: &simulator::SimulationEstimate) {
    println!(
        "simulation: seed = {}, replications = {}, measured = {} (+{} warmup) per replication",
        est.seed, est.replications, est.measured_customers, est.warmup_customers
    );
    if est.empty {
        println!("no arrivals: all estimates missing");
        return;
    }
    println!(
        "{:<14} {:>12} {:>10} {:>12} {:>10} {:>10}",
        "class", "E(W)", "se", "sd(W)", "se", "served"
    );
    let line = |name: &str, w: &simulator::WaitEstimate| {
        if w.missing {
            println!("{name:<14} (no customers observed)");
        } else {
            println!(
                "{:<14} {:>12.6} {:>10.2e} {:>12.6} {:>10.2e} {:>10}",
                name, w.mean, w.se_mean, w.std_dev, w.se_std_dev, w.served
            );
        }
    };
    line("high", &est.high);
    line("low", &est.low);
    line("queue 2", &est.queue2);
    println!(
        "cycle (begin): {:.6} +- {:.2e}; cycle (completion): {:.6} +- {:.2e}; intervisit: {:.6} +- {:.2e}",
        est.cycle_begin_q1.mean,
        est.cycle_begin_q1.se_mean,
        est.cycle_complete_q1.mean,
        est.cycle_complete_q1.se_mean,
        est.intervisit_q1.mean,
        est.intervisit_q1.se_mean
    );
}
