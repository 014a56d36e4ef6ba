mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hems_core::mpc::{self, RunLog, Scenario, ScenarioConfig};
use hems_core::{
    build_p1, check_pair, classify_regime, cost, enumerate, max_simultaneity, repair_until_clean, simultaneous_steps,
    solve, Error, GridSpec, Multipliers, Regime, SolveOptions, SolveStatus, SplitPolicy,
};
use log::{error, info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{num, read_trajectory, soc_end, trajectory_csv, write_atomic, write_json};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  internal error (repair could not complete)
  2  solver failure
  3  configuration or input file error
  4  KKT check failed
  5  repair input trajectory is infeasible

Set HEMS_LOG to error, info or debug to control logging.";

#[derive(Parser)]
#[command(name = "hems", version, about = "LP home energy management", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a receding-horizon scenario and write trajectory.csv, plan.csv,
    /// kkt.json, summary.json and the effective scenario.json.
    #[command(after_help = EXIT_CODES)]
    Run {
        /// Scenario JSON file, or a directory of them (run in parallel, one
        /// output subdirectory each).
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the solar scale factor.
        #[arg(long)]
        solar_scale: Option<f64>,
        /// Allow export to the grid.
        #[arg(long)]
        net_metering: bool,
    },
    /// Check a stored plan against the KKT conditions of the scenario's first
    /// window and print the residual table.
    #[command(after_help = EXIT_CODES)]
    Kkt {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Remove simultaneous charging and discharging from a stored plan.
    #[command(after_help = EXIT_CODES)]
    Repair {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the LP optimum with brute-force enumeration on the first
    /// `n` steps.
    #[command(after_help = EXIT_CODES)]
    Oracle {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        n: u8,
        /// Grid spacing in kW; defaults to 0.05 for n <= 2 and 0.1 for n = 3.
        #[arg(long)]
        step: Option<f64>,
    },
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::StepFailed { .. } | Error::IterationLimit(_) | Error::NotOptimal => 2,
            Error::InfeasibleInput(_) => 5,
            Error::Precondition(_) | Error::SplitInfeasible { .. } | Error::MaxRoundsExceeded(_) | Error::NoSimultaneity(_) => 1,
            _ => 3,
        };
        if let Error::StepFailed { lp_dump, .. } = &e {
            error!("LP at failing step:\n{lp_dump}");
        }
        Failure { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e).into()
    }
}

/// Directory that relative profile paths in `scenario` refer to.
fn base_dir(scenario: &Path) -> std::io::Result<PathBuf> {
    let parent = scenario.parent().filter(|p| !p.as_os_str().is_empty());
    std::path::absolute(parent.unwrap_or(Path::new(".")))
}

fn load_scenario(path: &Path) -> Result<Scenario, Error> {
    let cfg = ScenarioConfig::load(path)?;
    cfg.resolve(&base_dir(path)?)
}

#[derive(Serialize)]
struct Summary {
    objective: f64,
    total_cost: f64,
    simultaneity_steps: Vec<usize>,
    regime: Regime,
    repair_delta: f64,
    kkt_passed: bool,
    steps: usize,
}

#[derive(Serialize)]
struct StepKkt {
    step: usize,
    passed: bool,
    max_residual: f64,
    groups: Vec<hems_core::GroupRecord>,
}

fn write_bundle(log: &RunLog, out: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(out)?;
    let sc = &log.scenario;
    let applied = log.applied();
    let hours: Vec<usize> = (0..log.steps.len()).map(|k| sc.hour_of(k)).collect();
    let soc: Vec<f64> = log.steps.iter().map(|s| s.soc_after).collect();
    write_atomic(&out.join("trajectory.csv"), trajectory_csv(&hours, &applied, &soc).as_bytes())?;

    let first = &log.steps[0];
    let plan_hours: Vec<usize> = (0..first.plan.len()).map(|k| sc.hour_of(k)).collect();
    let plan_soc = soc_end(&first.plan, &sc.params);
    write_atomic(&out.join("plan.csv"), trajectory_csv(&plan_hours, &first.plan, &plan_soc).as_bytes())?;

    let kkt: Vec<StepKkt> = log
        .steps
        .iter()
        .map(|s| StepKkt {
            step: s.step,
            passed: s.kkt.passed,
            max_residual: s.kkt.max_residual(),
            groups: s.kkt.groups(),
        })
        .collect();
    write_json(&out.join("kkt.json"), &kkt)?;

    let tariff = log.realized_tariff();
    let n = applied.len();
    let repaired = repair_until_clean(
        &applied,
        &sc.params,
        &log.realized_profile(),
        &tariff,
        sc.tolerances.feasibility,
        n,
        SplitPolicy::default(),
    )?;
    let summary = Summary {
        objective: first.plan_objective,
        total_cost: log.total_cost(),
        simultaneity_steps: log.simultaneity_steps(),
        regime: classify_regime(&tariff),
        repair_delta: repaired.cost_reduction,
        kkt_passed: log.all_kkt_passed(),
        steps: n,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(())
}

fn run_one(path: &Path, out: &Path, solar_scale: Option<f64>, net_metering: bool) -> Result<(), Failure> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = solar_scale {
        cfg.profiles.solar_scale = s;
    }
    if net_metering {
        cfg.tariff.net_metering = true;
    }
    let base = base_dir(path)?;
    let cfg = cfg.rebased(&base);
    let log = mpc::run_in(&cfg, &base)?;
    if !log.all_kkt_passed() {
        warn!("{}: some plans did not pass the KKT check", path.display());
    }
    write_bundle(&log, out)?;
    write_json(&out.join("scenario.json"), &cfg)?;
    info!("{}: wrote {}", path.display(), out.display());
    Ok(())
}

fn cmd_run(scenario: &Path, out: &Path, solar_scale: Option<f64>, net_metering: bool) -> Result<(), Failure> {
    if !scenario.is_dir() {
        return run_one(scenario, out, solar_scale, net_metering);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(scenario)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure {
            code: 3,
            msg: format!("no .json scenarios in {}", scenario.display()),
        });
    }
    let results: Vec<(PathBuf, Result<(), Failure>)> = files
        .par_iter()
        .map(|f| {
            let stem = f.file_stem().unwrap_or_default();
            (f.clone(), run_one(f, &out.join(stem), solar_scale, net_metering))
        })
        .collect();
    // Report every failure, exit with the first one's code.
    let mut first = None;
    for (f, r) in results {
        if let Err(e) = r {
            eprintln!("{}: {}", f.display(), e.msg);
            first.get_or_insert(e);
        }
    }
    match first {
        Some(e) => Err(Failure {
            code: e.code,
            msg: "one or more scenarios failed".into(),
        }),
        None => Ok(()),
    }
}

fn optimal_lp(sc: &Scenario, n: usize) -> Result<(hems_core::LpF64, hems_core::ConstraintIndex, hems_core::SolveOutcomeF64), Error> {
    let (lp, index) = build_p1(&sc.params, &sc.profile_window(0, n), &sc.tariff_window(0, n))?;
    let outcome = solve(&lp, &SolveOptions::default())?;
    match outcome.status {
        SolveStatus::Optimal => Ok((lp, index, outcome)),
        _ => Err(Error::NotOptimal),
    }
}

fn cmd_kkt(trajectory: &Path, scenario: &Path) -> Result<(), Failure> {
    let sc = load_scenario(scenario)?;
    let x = read_trajectory(trajectory)?;
    let n = x.len();
    // Any optimal dual pairs with any optimal primal, so the duals of a
    // fresh solve certify the stored plan exactly when it is optimal.
    let (lp, index, outcome) = optimal_lp(&sc, n)?;
    let mult = Multipliers::from_outcome(&outcome, &index)?;
    let report = check_pair(
        &x,
        &mult,
        &sc.params,
        &sc.profile_window(0, n),
        &sc.tariff_window(0, n),
        sc.tolerances.kkt,
        lp.data_norm(),
    )?;
    println!("{:<26} {:>18} {:>18}  pass", "group", "residual", "threshold");
    for g in report.groups() {
        println!("{:<26} {:>18} {:>18}  {}", g.group, num(g.residual), num(g.threshold), g.pass);
    }
    if report.passed {
        println!("KKT check passed");
        Ok(())
    } else {
        Err(Failure {
            code: 4,
            msg: format!("KKT check failed: max residual {:e}", report.max_residual()),
        })
    }
}

fn cmd_repair(trajectory: &Path, scenario: &Path, out: &Path) -> Result<(), Failure> {
    let sc = load_scenario(scenario)?;
    let x = read_trajectory(trajectory)?;
    let n = x.len();
    let prof = sc.profile_window(0, n);
    let tariff = sc.tariff_window(0, n);
    let r = repair_until_clean(&x, &sc.params, &prof, &tariff, sc.tolerances.feasibility, n, SplitPolicy::default())?;
    let hours: Vec<usize> = (0..n).map(|k| sc.hour_of(k)).collect();
    let soc = soc_end(&r.trajectory, &sc.params);
    write_atomic(out, trajectory_csv(&hours, &r.trajectory, &soc).as_bytes())?;
    println!("rounds: {}", r.rounds);
    println!("cost before: {}", num(cost(&x, &tariff)));
    println!("cost after: {}", num(cost(&r.trajectory, &tariff)));
    println!("cost delta: {}", num(r.cost_reduction));
    println!("remaining simultaneous steps: {:?}", simultaneous_steps(&r.trajectory, sc.tolerances.feasibility));
    Ok(())
}

fn cmd_oracle(scenario: &Path, n: usize, step: Option<f64>) -> Result<(), Failure> {
    let sc = load_scenario(scenario)?;
    let prof = sc.profile_window(0, n);
    let tariff = sc.tariff_window(0, n);
    let grid = match step {
        Some(s) => GridSpec::new(s)?,
        None => GridSpec::default_for(n),
    };
    let (_, _, lp) = optimal_lp(&sc, n)?;
    let (free, comp) = rayon::join(
        || enumerate(&sc.params, &prof, &tariff, &grid, false),
        || enumerate(&sc.params, &prof, &tariff, &grid, true),
    );
    let (free, comp) = (free?, comp?);
    let bound = grid.error_bound(&tariff);
    println!("horizon: {n}, grid step: {} kW", grid.step);
    println!("lp objective: {}", num(lp.objective));
    println!("oracle objective: {} ({} candidates)", num(free.objective), free.candidates);
    println!(
        "oracle objective with complementarity: {} ({} candidates)",
        num(comp.objective),
        comp.candidates
    );
    println!("lp gap: {}", num(free.objective - lp.objective));
    println!("complementarity gap: {}", num(comp.objective - free.objective));
    println!("error bound: {}", num(bound));
    println!("oracle simultaneity: {}", num(max_simultaneity(&free.trajectory)));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HEMS_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Run {
            scenario,
            out,
            solar_scale,
            net_metering,
        } => cmd_run(scenario, out, *solar_scale, *net_metering),
        Cmd::Kkt { trajectory, scenario } => cmd_kkt(trajectory, scenario),
        Cmd::Repair { trajectory, scenario, out } => cmd_repair(trajectory, scenario, out),
        Cmd::Oracle { scenario, n, step } => cmd_oracle(scenario, *n as usize, *step),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
