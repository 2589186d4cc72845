//! `llg simulate | invariants | optimize`
//!
//! Exit codes: 0 ok, 1 configuration error, 2 blow-up, 3 optimizer failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use llg_core::config::RunConfig;
use llg_core::control::{evaluate_cost, optimize_spsa, realize_control, ControlField};
use llg_core::diagnostics::{check_trajectory, convergence_sweep, SweepAxis, SweepMetric, SweepTable, Thresholds};
use llg_core::integrators::{
    ensemble_path, integrate, monte_carlo, path_seed, with_worker_pool, ControlSource, NoControl, Scheme,
};
use llg_core::output::{trajectory_csv, write_json, write_text};
use llg_core::Error;

#[derive(Parser)]
#[command(name = "llg", version, about = "Stochastic Landau-Lifshitz-Gilbert Galerkin solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one path (plus an ensemble when --paths > 1) and check invariants.
    Simulate(Common),
    /// Self-convergence sweeps in dt and n_modes.
    Invariants(Common),
    /// SPSA minimisation of the control cost.
    Optimize(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, value_parser = ["ito", "heun"])]
    scheme: Option<String>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_json(&fs::read_to_string(p)?)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.to_string_lossy().into_owned();
        }
        if let Some(n) = self.paths {
            cfg.n_paths = n;
        }
        if let Some(s) = &self.scheme {
            cfg.scheme = s.parse::<Scheme>()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::BlowUp { .. } => 2,
        Error::AllPathsFailed { .. } | Error::Optimizer(_) => 3,
        _ => 1,
    }
}

fn prepare(cfg: &RunConfig) -> Result<PathBuf, Error> {
    let dir = PathBuf::from(&cfg.output_dir);
    fs::create_dir_all(&dir)?;
    write_text(&dir.join("config.json"), &(cfg.to_json() + "\n"))?;
    Ok(dir)
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    seed: u64,
    blew_up: Option<BlowUpInfo>,
    report: Option<&'a llg_core::diagnostics::InvariantReport>,
}

#[derive(Serialize)]
struct BlowUpInfo {
    step: usize,
    time: f64,
}

fn simulate(cfg: &RunConfig) -> Result<(), Error> {
    let dir = prepare(cfg)?;
    let sim = cfg.sim_config()?;
    let control: Option<ControlField> = match &cfg.control {
        Some(p) => Some(realize_control(p, sim.basis())?),
        None => None,
    };
    let source: &dyn ControlSource = match &control {
        Some(c) => c,
        None => &NoControl,
    };
    let path = ensemble_path(&sim, cfg.master_seed, 0)?;
    let seed = path_seed(cfg.master_seed, 0);
    let traj = match integrate(&sim, source, &path) {
        Ok(t) => t,
        Err(e) => {
            if let Error::BlowUp { step, time, .. } = e {
                write_json(
                    &dir.join("report.json"),
                    &SimulateSummary {
                        seed,
                        blew_up: Some(BlowUpInfo { step, time }),
                        report: None,
                    },
                )?;
            }
            return Err(e);
        }
    };
    write_text(&dir.join("trajectory.csv"), &trajectory_csv(&traj, sim.basis())?)?;
    let report = check_trajectory(&traj, sim.basis(), &Thresholds::default())?;
    log::info!(
        "initial energy {:.6}, l2 drift {:.3e}, sphere deviation {:.3e}",
        report.initial_energy,
        report.l2_drift,
        report.sphere_deviation
    );
    write_json(
        &dir.join("report.json"),
        &SimulateSummary {
            seed,
            blew_up: None,
            report: Some(&report),
        },
    )?;
    if cfg.n_paths > 1 {
        let stats = monte_carlo(&sim, source, cfg.n_paths, cfg.master_seed)?;
        write_json(&dir.join("ensemble.json"), &stats)?;
        if stats.n_failed > 0 {
            log::warn!("{} of {} paths blew up", stats.n_failed, stats.n_paths);
        }
    }
    Ok(())
}

fn sweep_file(dir: &Path, table: &SweepTable) -> Result<(), Error> {
    let axis = match table.axis {
        SweepAxis::Dt => "dt",
        SweepAxis::NModes => "n",
    };
    let metric = serde_json::to_value(table.metric)?;
    let name = format!("sweep_{axis}_{}.csv", metric.as_str().unwrap_or("metric"));
    write_text(&dir.join(name), &table.to_csv())
}

fn invariants(cfg: &RunConfig) -> Result<(), Error> {
    let dir = prepare(cfg)?;
    let dts = &cfg.sweep.dt_values;
    let ns: Vec<f64> = cfg.sweep.n_values.iter().map(|&n| n as f64).collect();
    let plan = [
        (SweepAxis::Dt, dts.as_slice(), SweepMetric::L2Drift),
        (SweepAxis::Dt, dts.as_slice(), SweepMetric::SchemeGap),
        (SweepAxis::Dt, dts.as_slice(), SweepMetric::ReferenceDistance),
        (SweepAxis::NModes, ns.as_slice(), SweepMetric::SphereDeviation),
    ];
    let mut tables = Vec::new();
    for (axis, values, metric) in plan {
        let table = with_worker_pool(|| convergence_sweep(cfg, axis, values, metric))?;
        log::info!("{axis:?} sweep of {metric:?}: fitted order {:?}", table.fitted_order());
        sweep_file(&dir, &table)?;
        tables.push(table);
    }
    write_json(&dir.join("sweeps.json"), &tables)
}

fn optimize(cfg: &RunConfig) -> Result<(), Error> {
    let dir = prepare(cfg)?;
    let sim = cfg.sim_config()?;
    let p0 = match &cfg.control {
        Some(p) => p.clone(),
        None => cfg.optimizer.initial_control(cfg.t_final)?,
    };
    if cfg.optimizer.iterations == 0 {
        let report = evaluate_cost(&p0, &cfg.cost, &sim, cfg.optimizer.n_paths, cfg.master_seed)?;
        write_json(&dir.join("best_control.json"), &p0)?;
        write_text(&dir.join("trace.csv"), "iteration,j,candidate_j,a_k,c_k,accepted\n")?;
        return write_json(&dir.join("optimize.json"), &report);
    }
    let result = optimize_spsa(&p0, &cfg.cost, &sim, &cfg.optimizer, cfg.master_seed)?;
    log::info!(
        "J(initial) = {:.6}, J(best) = {:.6}",
        result.initial_report.j,
        result.best_report.j
    );
    write_text(&dir.join("trace.csv"), &result.trace_csv())?;
    write_json(&dir.join("best_control.json"), &result.best)?;
    write_json(&dir.join("optimize.json"), &result)
}

type Runner = fn(&RunConfig) -> Result<(), Error>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (common, run): (&Common, Runner) = match &cli.command {
        Command::Simulate(c) => (c, simulate),
        Command::Invariants(c) => (c, invariants),
        Command::Optimize(c) => (c, optimize),
    };
    let result = common.load().and_then(|cfg| run(&cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
