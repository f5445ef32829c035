use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ifuc_core::experiment::{
    self, attach_metrics, emit_report, files, read_comparison_csv, read_dataset_csv, read_json,
    read_traces, run_all, run_cutpoint_sweep, run_reserve_sweep, train_lr, write_comparison_csv,
    write_json, write_sweep, write_traces, ExperimentConfig, ExperimentError, SolveOutcome,
};
use ifuc_core::grid::{load_system, GridError, IslandModel};
use ifuc_core::lr::{LrError, ModelFile};
use ifuc_core::robust::{solve_ed, solve_robust_uc, Dispatch, RobustError, RobustSolution};
use ifuc_core::sfr::{extract_metrics_with, simulate_outage, OperatingPoint, SfrError};
use ifuc_core::solver::{adapter_by_name, SolverError};
use ifuc_core::uc::{CommitmentSchedule, SecurityBlock};

/// Frequency-secure robust unit commitment studies for island systems.
#[derive(Parser)]
#[command(name = "ifuc", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment configuration (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Solver adapter; overrides IFUC_SOLVER and the configuration.
    #[arg(long, global = true)]
    solver: Option<String>,
    /// Seed for the holdout split.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Skip SVG output.
    #[arg(long, global = true)]
    no_plots: bool,
    /// Write master and subproblem LP files of every Benders iteration here.
    #[arg(long, global = true, value_name = "DIR")]
    dump_models: Option<PathBuf>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the robust UC with a reserve or learned security block.
    SolveRuc {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        block: BlockArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dispatch one wind scenario for a solved commitment.
    Ed {
        #[arg(long)]
        model: PathBuf,
        /// Output of `solve-ruc`.
        #[arg(long)]
        commitment: PathBuf,
        /// Scenario label; the first scenario when omitted.
        #[arg(long)]
        scenario: Option<String>,
        #[command(flatten)]
        block: BlockArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the loss of one unit in one hour of a dispatch.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        /// Output of `ed`.
        #[arg(long)]
        dispatch: PathBuf,
        #[arg(long)]
        hour: usize,
        /// Id of the lost unit.
        #[arg(long)]
        unit: String,
        #[arg(long)]
        ufls: bool,
        /// Trace CSV; the metrics go to stdout.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reserve sweep: levels.csv, metrics.csv and dataset.csv.
    BuildDataset {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the logistic model on a dataset.
    TrainLr {
        #[arg(long)]
        dataset: PathBuf,
        /// Island file whose thresholds are stored with the model.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Conventional row plus one robust UC per cut-point.
    CutpointSweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        lr_model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tables and plots from a run directory.
    Report {
        /// Directory holding dataset.csv, metrics.csv, comparison.csv,
        /// model.json and traces.bin.
        #[arg(long)]
        run: PathBuf,
        /// Output directory; the run directory when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The whole study into one directory.
    RunAll {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct BlockArgs {
    /// Reserve multiplier (default 1 when no LR model is given).
    #[arg(long, conflicts_with_all = ["lr_model", "no_security"])]
    multiplier: Option<f64>,
    /// Learned model file; replaces the reserve rows.
    #[arg(long, requires = "psi")]
    lr_model: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    psi: Option<f64>,
    /// No loss-of-unit rows at all.
    #[arg(long)]
    no_security: bool,
}

impl BlockArgs {
    fn block(&self, cfg: &ExperimentConfig) -> Result<SecurityBlock> {
        if self.no_security {
            return Ok(SecurityBlock::None);
        }
        match (&self.lr_model, self.multiplier) {
            (Some(path), _) => {
                let file: ModelFile = read_json(path)?;
                let psi = self.psi.ok_or_else(|| anyhow!("--psi is required with --lr-model"))?;
                Ok(SecurityBlock::Lr {
                    model: file.model.with_psi(psi),
                    big_m: cfg.big_m,
                })
            }
            (None, m) => Ok(SecurityBlock::Reserve {
                multiplier: m.unwrap_or(cfg.conventional_multiplier),
            }),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SolveReport {
    block: String,
    outcome: SolveOutcome,
    message: String,
    solution: Option<RobustSolution>,
}

#[derive(Serialize, Deserialize)]
struct EdReport {
    scenario: String,
    commitment: CommitmentSchedule,
    dispatch: Dispatch,
}

/// Finished, but the answer is an infeasibility.
struct Infeasible(String);

fn load_model(path: &Path) -> Result<IslandModel> {
    Ok(load_system(path)?)
}

fn config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Ok(name) = std::env::var("IFUC_SOLVER") {
        if !name.is_empty() {
            cfg.solver = name;
        }
    }
    if let Some(s) = &g.solver {
        cfg.solver = s.clone();
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if g.no_plots {
        cfg.plots = false;
    }
    if let Some(d) = &g.dump_models {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        cfg.robust.dump_dir = Some(d.clone());
    }
    Ok(cfg)
}

fn solve_ruc(g: &Global, model: &Path, block: &BlockArgs, out: &Path) -> Result<Option<Infeasible>> {
    let cfg = config(g)?;
    let island = load_model(model)?;
    cfg.validate(&island)?;
    let block = block.block(&cfg)?;
    let mut solver = adapter_by_name(&cfg.solver)?;
    let res = solve_robust_uc(
        &island.generators,
        &island.system,
        &cfg.uncertainty(&island),
        &block,
        &cfg.robust,
        solver.as_mut(),
    );
    let (outcome, message, solution) = match res {
        Ok(s) => (SolveOutcome::Optimal, String::new(), Some(s)),
        Err(RobustError::IterationLimit(s)) => {
            (SolveOutcome::IterationLimit, format!("gap {}", s.gap), Some(*s))
        }
        Err(e @ (RobustError::MasterInfeasible { .. } | RobustError::NoIncumbent(_))) => {
            (SolveOutcome::Infeasible, e.to_string(), None)
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(s) = &solution {
        println!(
            "{}: cost {:.2} EUR (start-up {:.2}), {} iterations, gap {:.3e}",
            block.label(),
            s.total_cost,
            s.startup_cost,
            s.iterations,
            s.gap
        );
    }
    let report = SolveReport {
        block: block.label(),
        outcome,
        message: message.clone(),
        solution,
    };
    write_json(out, &report)?;
    Ok((outcome == SolveOutcome::Infeasible).then(|| Infeasible(message)))
}

fn ed(
    g: &Global,
    model: &Path,
    commitment: &Path,
    scenario: Option<&str>,
    block: &BlockArgs,
    out: &Path,
) -> Result<Option<Infeasible>> {
    let cfg = config(g)?;
    let island = load_model(model)?;
    let report: SolveReport = read_json(commitment)?;
    let Some(sol) = report.solution else {
        bail!("{} holds no commitment ({:?})", commitment.display(), report.outcome);
    };
    let sc = match scenario {
        Some(label) => island
            .wind_scenarios
            .scenarios
            .iter()
            .find(|s| s.label == label)
            .ok_or_else(|| anyhow!("unknown scenario {label}"))?,
        None => &island.wind_scenarios.scenarios[0],
    };
    let block = block.block(&cfg)?;
    let mut solver = adapter_by_name(&cfg.solver)?;
    match solve_ed(
        &island.generators,
        &island.system,
        &sol.commitment,
        &sc.mw,
        &block,
        cfg.robust.n_segments,
        solver.as_mut(),
    ) {
        Ok(d) => {
            println!("scenario {}: cost {:.2} EUR", sc.label, d.cost);
            write_json(
                out,
                &EdReport {
                    scenario: sc.label.clone(),
                    commitment: sol.commitment,
                    dispatch: d,
                },
            )?;
            Ok(None)
        }
        Err(RobustError::EdInfeasible) => Ok(Some(Infeasible(format!(
            "dispatch infeasible for scenario {}",
            sc.label
        )))),
        Err(e) => Err(e.into()),
    }
}

fn simulate(
    g: &Global,
    model: &Path,
    dispatch: &Path,
    hour: usize,
    unit: &str,
    ufls: bool,
    out: &Path,
) -> Result<()> {
    let cfg = config(g)?;
    let island = load_model(model)?;
    let ed: EdReport = read_json(dispatch)?;
    if hour >= ed.dispatch.p.len() {
        return Err(ExperimentError::Config(format!("hour {hour} outside the horizon")).into());
    }
    let lost = island
        .generators
        .iter()
        .position(|g| g.id == unit)
        .ok_or_else(|| ExperimentError::Config(format!("unknown unit {unit}")))?;
    let units = ed.commitment.online(hour);
    let op = OperatingPoint {
        hour,
        demand: island.system.demand[hour],
        wind: ed.dispatch.wg[hour],
        p: units.iter().map(|&i| ed.dispatch.p[hour][i]).collect(),
        units,
    };
    let mut opts = cfg.sim_options(&island, ufls);
    opts.record_governors = true;
    let trace = simulate_outage(&island.system, &island.generators, &op, lost, &opts)?;
    let f = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    trace.write_csv(BufWriter::new(f))?;
    let m = extract_metrics_with(&trace, cfg.windows);
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}

fn build_dataset(g: &Global, model: &Path, out: &Path) -> Result<Option<Infeasible>> {
    let cfg = config(g)?;
    let island = load_model(model)?;
    let sweep = run_reserve_sweep(&island, &cfg)?;
    let data = write_sweep(out, &sweep)?;
    match sweep.first_infeasible {
        Some(m) => println!("first infeasible reserve multiplier: {m}"),
        None => println!("no infeasible reserve multiplier in the sweep"),
    }
    match data {
        Some(d) => {
            println!("{} incidents", d.len());
            Ok(None)
        }
        None => Ok(Some(Infeasible("no feasible reserve level; dataset is empty".into()))),
    }
}

fn train(g: &Global, dataset: &Path, model: &Path, out: &Path) -> Result<()> {
    let cfg = config(g)?;
    let island = load_model(model)?;
    let data = read_dataset_csv(dataset)?;
    let (file, holdout) = train_lr(&data, &cfg, cfg.thresholds(&island))?;
    write_json(out, &file)?;
    let c = file.model.coefficients();
    println!("coefficients {c:?}");
    println!("{}", serde_json::to_string_pretty(&holdout)?);
    Ok(())
}

fn cutpoint_sweep(g: &Global, model: &Path, lr_model: &Path, out: &Path) -> Result<Option<Infeasible>> {
    let cfg = config(g)?;
    let island = load_model(model)?;
    let file: ModelFile = read_json(lr_model)?;
    let sweep = run_cutpoint_sweep(&island, &cfg, &file.model)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_comparison_csv(&out.join(files::COMPARISON), &sweep.rows)?;
    write_traces(&out.join(files::TRACES), &sweep.traces)?;
    for r in &sweep.rows {
        println!(
            "{:>14}  feasible {:5}  acceptable {:>6}  ufls {:>8}  cost {:>12}",
            r.label,
            r.feasible,
            r.acceptable_pct.map_or("-".into(), |v| format!("{v:.1}%")),
            r.avg_ufls_mw.map_or("-".into(), |v| format!("{v:.3}")),
            r.cost_eur.map_or("-".into(), |v| format!("{v:.2}")),
        );
    }
    Ok((!sweep.rows[0].feasible).then(|| Infeasible("conventional row infeasible".into())))
}

fn report(g: &Global, run: &Path, out: Option<&Path>) -> Result<()> {
    let cfg = config(g)?;
    let mut data = read_dataset_csv(&run.join(files::DATASET))?;
    attach_metrics(&mut data, &run.join(files::METRICS))?;
    let rows = read_comparison_csv(&run.join(files::COMPARISON))?;
    let file: ModelFile = read_json(&run.join(files::MODEL))?;
    let traces_path = run.join(files::TRACES);
    let traces = if traces_path.exists() {
        read_traces(&traces_path)?
    } else {
        Vec::new()
    };
    let dir = out.unwrap_or(run);
    for p in emit_report(dir, &rows, &data, &file.model, &traces, cfg.plots)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn all(g: &Global, model: &Path, out: &Path) -> Result<Option<Infeasible>> {
    let cfg = config(g)?;
    let island = load_model(model)?;
    let summary = run_all(&island, &cfg, out)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(rho) = experiment::psi_unacceptable_spearman(&read_comparison_csv(
        &out.join(files::COMPARISON),
    )?) {
        println!("spearman(psi, unacceptable share) = {rho:.3}");
    }
    Ok(None)
}

fn run(cli: &Cli) -> Result<Option<Infeasible>> {
    let g = &cli.global;
    match &cli.command {
        Command::SolveRuc { model, block, out } => solve_ruc(g, model, block, out),
        Command::Ed {
            model,
            commitment,
            scenario,
            block,
            out,
        } => ed(g, model, commitment, scenario.as_deref(), block, out),
        Command::Simulate {
            model,
            dispatch,
            hour,
            unit,
            ufls,
            out,
        } => simulate(g, model, dispatch, *hour, unit, *ufls, out).map(|_| None),
        Command::BuildDataset { model, out } => build_dataset(g, model, out),
        Command::TrainLr {
            dataset,
            model,
            out,
        } => train(g, dataset, model, out).map(|_| None),
        Command::CutpointSweep {
            model,
            lr_model,
            out,
        } => cutpoint_sweep(g, model, lr_model, out),
        Command::Report { run, out } => report(g, run, out.as_deref()).map(|_| None),
        Command::RunAll { model, out } => all(g, model, out),
    }
}

/// 4 for configuration and input errors, 3 for solver failures, 2 for
/// infeasibilities surfacing as errors, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<ExperimentError>() {
            match e {
                ExperimentError::Config(_) | ExperimentError::Grid(_) => return 4,
                ExperimentError::Solver(_) => return 3,
                ExperimentError::Lr(LrError::EmptyDataset | LrError::DegenerateLabels) => return 2,
                ExperimentError::Robust(RobustError::InvalidInput(_)) => return 4,
                ExperimentError::Robust(_) => return 3,
                _ => {}
            }
        }
        if cause.is::<GridError>() {
            return 4;
        }
        if let Some(e) = cause.downcast_ref::<RobustError>() {
            return match e {
                RobustError::InvalidInput(_) => 4,
                RobustError::EdInfeasible | RobustError::MasterInfeasible { .. } => 2,
                _ => 3,
            };
        }
        if cause.is::<SolverError>() {
            return 3;
        }
        if let Some(SfrError::InvalidOptions(_) | SfrError::UnknownUnit(_) | SfrError::LostUnitOffline(_)) =
            cause.downcast_ref::<SfrError>()
        {
            return 4;
        }
        if let Some(LrError::EmptyDataset | LrError::DegenerateLabels) = cause.downcast_ref::<LrError>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(4) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Infeasible(msg))) => {
            eprintln!("infeasible: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
