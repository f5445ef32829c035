//! Study driver: reserve sweep, dataset, logistic fit, cut-point sweep and
//! report files.

pub mod plot;

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, IslandModel, UncertaintyBox};
use crate::lr::{
    self, auc, build_dataset, fit_logistic, incident_features, label_incident, pearson,
    predict_logit, spearman, AcceptabilityThresholds, Dataset, FitOptions, Incident,
    LrError, LrModel, ModelFile, Provenance, NUM_FEATURES,
};
use crate::robust::{solve_ed, solve_robust_uc, RobustError, RobustOptions, RobustSolution};
use crate::sfr::{
    self, extract_metrics_with, simulate_outage, ArchivedTrace, FrequencyMetrics, MetricWindows,
    OperatingPoint, SfrError, SimOptions, UflsStage,
};
use crate::solver::{adapter_by_name, SolverError, DEFAULT_ADAPTER};
use crate::uc::{CommitmentSchedule, SecurityBlock};

use plot::{Chart, Mark, Series};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Robust(#[from] RobustError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Sfr(#[from] SfrError),
    #[error(transparent)]
    Lr(#[from] LrError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Inconsistent(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Reserve multipliers of the sweep, non-negative and ascending.
    pub multipliers: Vec<f64>,
    /// Cut-points of the LR rows of the comparison.
    pub psi: Vec<f64>,
    /// Reserve multiplier of the conventional comparison row.
    pub conventional_multiplier: f64,
    /// Overrides the thresholds stored with the island.
    pub thresholds: Option<AcceptabilityThresholds>,
    /// Overrides the UFLS table stored with the island.
    pub ufls_stages: Option<Vec<UflsStage>>,
    /// Uncertainty budget; `None` lets every hour move.
    pub gamma: Option<usize>,
    pub robust: RobustOptions,
    /// Solver adapter name.
    pub solver: String,
    /// Seeds the holdout split.
    pub seed: u64,
    pub sim_dt: f64,
    pub sim_horizon: f64,
    pub windows: MetricWindows,
    pub fit: FitOptions,
    /// Share of incidents kept out of the fit.
    pub holdout_fraction: f64,
    /// Big-M of the LR rows; `None` derives it from the model.
    pub big_m: Option<f64>,
    /// Hours whose largest-outage traces are plotted; hours past the
    /// horizon are skipped.
    pub trace_hours: Vec<usize>,
    pub plots: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            multipliers: (0..=15).map(|k| k as f64 / 10.0).collect(),
            psi: vec![2.12, 0.0, -2.12, -4.95, -5.0, -6.91, -9.21, -10.0, -11.51],
            conventional_multiplier: 1.0,
            thresholds: None,
            ufls_stages: None,
            gamma: None,
            robust: RobustOptions::default(),
            solver: DEFAULT_ADAPTER.to_string(),
            seed: 0,
            sim_dt: 1e-3,
            sim_horizon: 15.0,
            windows: MetricWindows::default(),
            fit: FitOptions::default(),
            holdout_fraction: 0.2,
            big_m: None,
            trace_hours: vec![19],
            plots: true,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self, model: &IslandModel) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.multipliers.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return bad("reserve multipliers must be finite and >= 0".into());
        }
        if self.multipliers.windows(2).any(|w| w[1] <= w[0]) {
            return bad("reserve multipliers must be strictly ascending".into());
        }
        if self.psi.iter().any(|p| !p.is_finite()) {
            return bad("cut-points must be finite".into());
        }
        if !(self.conventional_multiplier.is_finite() && self.conventional_multiplier >= 0.0) {
            return bad("conventional_multiplier must be finite and >= 0".into());
        }
        if let Some(th) = &self.thresholds {
            th.validate(model.system.f_nominal).map_err(ExperimentError::Config)?;
        }
        if let Some(st) = &self.ufls_stages {
            sfr::validate_stages(st).map_err(ExperimentError::Config)?;
        }
        if !(self.sim_dt > 0.0 && self.sim_dt.is_finite()) {
            return bad("sim_dt must be > 0".into());
        }
        if !(self.sim_horizon > self.windows.qss_window && self.sim_horizon.is_finite()) {
            return bad("sim_horizon must exceed the qss window".into());
        }
        if !(self.windows.rocof_window > 0.0 && self.windows.qss_window > 0.0) {
            return bad("metric windows must be > 0".into());
        }
        if !(0.0..0.9).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must lie in [0, 0.9)".into());
        }
        if let Some(b) = self.big_m {
            if !(b.is_finite() && b >= 0.0) {
                return bad("big_m must be finite and >= 0".into());
            }
        }
        if let Some(&h) = self.trace_hours.iter().find(|&&h| h >= model.horizon()) {
            log::warn!("trace hour {h} lies outside the horizon and is skipped");
        }
        adapter_by_name(&self.solver).map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn thresholds(&self, model: &IslandModel) -> AcceptabilityThresholds {
        self.thresholds.unwrap_or(model.thresholds)
    }

    pub fn stages(&self, model: &IslandModel) -> Vec<UflsStage> {
        match &self.ufls_stages {
            Some(s) => s.clone(),
            None if model.ufls_stages.is_empty() => sfr::default_stages(),
            None => model.ufls_stages.clone(),
        }
    }

    pub fn uncertainty(&self, model: &IslandModel) -> UncertaintyBox {
        model.envelope(self.gamma.unwrap_or(model.horizon()))
    }

    pub fn sim_options(&self, model: &IslandModel, ufls: bool) -> SimOptions {
        SimOptions {
            dt: self.sim_dt,
            horizon: self.sim_horizon,
            ufls,
            stages: if ufls { self.stages(model) } else { Vec::new() },
            record_governors: false,
            ..SimOptions::default()
        }
    }
}

/// Outcome of one robust solve in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveOutcome {
    Optimal,
    /// Benders stopped at the iteration limit; the incumbent is used.
    IterationLimit,
    Infeasible,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub multiplier: f64,
    pub outcome: SolveOutcome,
    pub cost: Option<f64>,
    pub iterations: usize,
    pub gap: Option<f64>,
    /// Scenarios whose dispatch was infeasible for the commitment.
    pub ed_failures: usize,
    pub incidents: usize,
    pub note: String,
}

/// One simulated outage with its metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedIncident {
    pub provenance: Provenance,
    pub features: [f64; NUM_FEATURES],
    pub metrics: FrequencyMetrics,
    pub label: u8,
}

impl SimulatedIncident {
    pub fn to_incident(&self) -> Incident {
        Incident {
            features: self.features,
            label: self.label,
            provenance: self.provenance.clone(),
            metrics: Some(self.metrics),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub levels: Vec<LevelReport>,
    pub incidents: Vec<SimulatedIncident>,
    pub first_infeasible: Option<f64>,
}

impl SweepResult {
    pub fn dataset(&self) -> Result<Dataset, LrError> {
        build_dataset(self.incidents.iter().map(SimulatedIncident::to_incident))
    }
}

struct Solved {
    outcome: SolveOutcome,
    solution: Option<RobustSolution>,
    note: String,
}

fn robust_solve(
    model: &IslandModel,
    cfg: &ExperimentConfig,
    uset: &UncertaintyBox,
    block: &SecurityBlock,
) -> Result<Solved, ExperimentError> {
    let mut solver = adapter_by_name(&cfg.solver)?;
    let mut opts = cfg.robust.clone();
    if let Some(dir) = &opts.dump_dir {
        let sub = dir.join(block.label().replace(['@', '.'], "_"));
        fs::create_dir_all(&sub).map_err(io_err(&sub))?;
        opts.dump_dir = Some(sub);
    }
    let res = solve_robust_uc(
        &model.generators,
        &model.system,
        uset,
        block,
        &opts,
        solver.as_mut(),
    );
    Ok(match res {
        Ok(sol) => Solved {
            outcome: SolveOutcome::Optimal,
            solution: Some(sol),
            note: String::new(),
        },
        Err(RobustError::IterationLimit(sol)) => Solved {
            outcome: SolveOutcome::IterationLimit,
            note: format!("iteration limit, gap {}", sol.gap),
            solution: Some(*sol),
        },
        Err(e @ (RobustError::MasterInfeasible { .. } | RobustError::NoIncumbent(_))) => Solved {
            outcome: SolveOutcome::Infeasible,
            solution: None,
            note: e.to_string(),
        },
        Err(e @ RobustError::InvalidInput(_)) => return Err(e.into()),
        Err(e) => {
            log::error!("{}: {e}", block.label());
            Solved {
                outcome: SolveOutcome::Failed,
                solution: None,
                note: e.to_string(),
            }
        }
    })
}

/// Hourly operating points of every scenario for a commitment, in scenario
/// order. Scenarios without a feasible dispatch are skipped and counted.
fn scenario_points(
    model: &IslandModel,
    cfg: &ExperimentConfig,
    sched: &CommitmentSchedule,
    block: &SecurityBlock,
) -> Result<(Vec<(String, Vec<OperatingPoint>)>, usize), ExperimentError> {
    let mut solver = adapter_by_name(&cfg.solver)?;
    let mut out = Vec::new();
    let mut failures = 0;
    for sc in &model.wind_scenarios.scenarios {
        let d = match solve_ed(
            &model.generators,
            &model.system,
            sched,
            &sc.mw,
            block,
            cfg.robust.n_segments,
            solver.as_mut(),
        ) {
            Ok(d) => d,
            Err(RobustError::EdInfeasible) => {
                log::warn!("{}: dispatch infeasible for scenario {}", block.label(), sc.label);
                failures += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let points = (0..model.horizon())
            .map(|t| {
                let units = sched.online(t);
                let p = units.iter().map(|&i| d.p[t][i]).collect();
                OperatingPoint {
                    hour: t,
                    demand: model.system.demand[t],
                    wind: d.wg[t],
                    units,
                    p,
                }
            })
            .collect();
        out.push((sc.label.clone(), points));
    }
    Ok((out, failures))
}

struct Job<'a> {
    scenario: &'a str,
    op: &'a OperatingPoint,
    lost: usize,
}

fn jobs<'a>(points: &'a [(String, Vec<OperatingPoint>)]) -> Vec<Job<'a>> {
    let mut out = Vec::new();
    for (label, ops) in points {
        for op in ops {
            for &lost in &op.units {
                out.push(Job {
                    scenario: label,
                    op,
                    lost,
                });
            }
        }
    }
    out
}

/// Simulates every job with UFLS off, in parallel, keeping job order.
fn simulate_jobs(
    model: &IslandModel,
    cfg: &ExperimentConfig,
    reserve: f64,
    jobs: &[Job],
) -> Result<Vec<SimulatedIncident>, ExperimentError> {
    let opts = cfg.sim_options(model, false);
    let th = cfg.thresholds(model);
    jobs.par_iter()
        .map(|j| {
            let trace = simulate_outage(&model.system, &model.generators, j.op, j.lost, &opts)?;
            let metrics = extract_metrics_with(&trace, cfg.windows);
            Ok(SimulatedIncident {
                provenance: Provenance {
                    reserve,
                    scenario: j.scenario.to_string(),
                    hour: j.op.hour,
                    unit: model.generators[j.lost].id.clone(),
                },
                features: incident_features(&model.generators, model.system.s_base, j.op, j.lost),
                label: label_incident(&metrics, &th),
                metrics,
            })
        })
        .collect()
}

/// Conventional robust UC per reserve multiplier, dispatch per scenario and
/// a UFLS-off simulation of every (hour, online unit) loss.
pub fn run_reserve_sweep(
    model: &IslandModel,
    cfg: &ExperimentConfig,
) -> Result<SweepResult, ExperimentError> {
    cfg.validate(model)?;
    let uset = cfg.uncertainty(model);
    let mut levels = Vec::new();
    let mut incidents = Vec::new();
    let mut first_infeasible = None;
    for &m in &cfg.multipliers {
        let block = SecurityBlock::Reserve { multiplier: m };
        let solved = robust_solve(model, cfg, &uset, &block)?;
        let mut report = LevelReport {
            multiplier: m,
            outcome: solved.outcome,
            cost: None,
            iterations: 0,
            gap: None,
            ed_failures: 0,
            incidents: 0,
            note: solved.note,
        };
        if solved.outcome == SolveOutcome::Infeasible && first_infeasible.is_none() {
            first_infeasible = Some(m);
        }
        if let Some(sol) = solved.solution {
            report.cost = Some(sol.total_cost);
            report.iterations = sol.iterations;
            report.gap = Some(sol.gap);
            let (points, failures) = scenario_points(model, cfg, &sol.commitment, &block)?;
            report.ed_failures = failures;
            let level = simulate_jobs(model, cfg, m, &jobs(&points))?;
            report.incidents = level.len();
            incidents.extend(level);
        }
        log::info!(
            "reserve {m}: {:?}, cost {:?}, {} incidents",
            report.outcome,
            report.cost,
            report.incidents
        );
        levels.push(report);
    }
    Ok(SweepResult {
        levels,
        incidents,
        first_infeasible,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    pub training_rows: usize,
    pub holdout_rows: usize,
    pub holdout_accuracy: Option<f64>,
    pub holdout_auc: Option<f64>,
}

/// Seeded split into (training, holdout) row indices, each ascending.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_hold = ((n as f64) * fraction).floor() as usize;
    let mut hold = idx[..n_hold].to_vec();
    let mut train = idx[n_hold..].to_vec();
    hold.sort_unstable();
    train.sort_unstable();
    (train, hold)
}

/// Fits the logit on the training part of the dataset; the returned model
/// has ψ = 0.
pub fn train_lr(
    data: &Dataset,
    cfg: &ExperimentConfig,
    thresholds: AcceptabilityThresholds,
) -> Result<(ModelFile, HoldoutReport), ExperimentError> {
    let (train, hold) = holdout_split(data.len(), cfg.holdout_fraction, cfg.seed);
    let x: Vec<_> = train.iter().map(|&k| data.rows[k].features).collect();
    let y: Vec<u8> = train.iter().map(|&k| data.rows[k].label).collect();
    let fit = match fit_logistic(&x, &y, &cfg.fit) {
        Ok(f) => f,
        Err(LrError::NonConvergence(report)) => {
            log::warn!(
                "logistic fit stopped after {} iterations (gradient {})",
                report.iterations,
                report.grad_norm
            );
            *report
        }
        Err(e) => return Err(e.into()),
    };
    let model = fit.model(0.0);
    let hx: Vec<_> = hold.iter().map(|&k| data.rows[k].features).collect();
    let hy: Vec<u8> = hold.iter().map(|&k| data.rows[k].label).collect();
    let holdout_accuracy = (!hx.is_empty()).then(|| {
        let hits = hx
            .iter()
            .zip(&hy)
            .filter(|(xi, &l)| model.predicts_acceptable(xi) == (l == 1))
            .count();
        hits as f64 / hx.len() as f64
    });
    let scores: Vec<f64> = hx.iter().map(|xi| predict_logit(&model, xi)).collect();
    let report = HoldoutReport {
        training_rows: x.len(),
        holdout_rows: hx.len(),
        holdout_accuracy,
        holdout_auc: auc(&scores, &hy),
    };
    let mut file = ModelFile::new(model, thresholds);
    file.training_rows = x.len();
    file.fit = Some(fit);
    Ok((file, report))
}

/// One line of the comparison table. Percent deltas are relative to the
/// conventional row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub psi: Option<f64>,
    pub feasible: bool,
    pub incidents: usize,
    pub acceptable_pct: Option<f64>,
    pub unacceptable_pct: Option<f64>,
    pub avg_qss_hz: Option<f64>,
    pub avg_nadir_hz: Option<f64>,
    pub avg_rocof_hz_s: Option<f64>,
    pub avg_ufls_mw: Option<f64>,
    pub cost_eur: Option<f64>,
    pub ufls_delta_pct: Option<f64>,
    pub cost_delta_pct: Option<f64>,
    pub note: String,
}

/// Frequency trace of the largest outage in one hour, per comparison row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSpec {
    pub hour: usize,
    pub row: String,
    pub unit: String,
    pub trace: ArchivedTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutpointSweep {
    pub rows: Vec<ComparisonRow>,
    pub traces: Vec<TraceSpec>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn pct_delta(value: Option<f64>, base: Option<f64>) -> Option<f64> {
    match (value, base) {
        (Some(v), Some(b)) if b.abs() > 0.0 => Some((v - b) / b.abs() * 100.0),
        _ => None,
    }
}

fn evaluate_case(
    model: &IslandModel,
    cfg: &ExperimentConfig,
    uset: &UncertaintyBox,
    label: String,
    psi: Option<f64>,
    block: &SecurityBlock,
    traces: &mut Vec<TraceSpec>,
) -> Result<ComparisonRow, ExperimentError> {
    let mut row = ComparisonRow {
        label: label.clone(),
        psi,
        feasible: false,
        incidents: 0,
        acceptable_pct: None,
        unacceptable_pct: None,
        avg_qss_hz: None,
        avg_nadir_hz: None,
        avg_rocof_hz_s: None,
        avg_ufls_mw: None,
        cost_eur: None,
        ufls_delta_pct: None,
        cost_delta_pct: None,
        note: String::new(),
    };
    let solved = robust_solve(model, cfg, uset, block)?;
    row.note = solved.note;
    let Some(sol) = solved.solution else {
        log::info!("{label}: {:?}", solved.outcome);
        return Ok(row);
    };
    row.feasible = true;
    row.cost_eur = Some(sol.total_cost);
    let (points, failures) = scenario_points(model, cfg, &sol.commitment, block)?;
    if failures > 0 {
        let msg = format!("{failures} scenario dispatches infeasible");
        row.note = if row.note.is_empty() { msg } else { format!("{}; {msg}", row.note) };
    }
    let jobs = jobs(&points);
    let reserve = match block {
        SecurityBlock::Reserve { multiplier } => *multiplier,
        _ => 0.0,
    };
    let off = simulate_jobs(model, cfg, reserve, &jobs)?;
    let on_opts = cfg.sim_options(model, true);
    let top = on_opts
        .stages
        .iter()
        .map(|s| s.f_threshold)
        .fold(f64::NEG_INFINITY, f64::max);
    let rocof_relays = on_opts.stages.iter().any(|s| s.rocof_threshold.is_some());
    // Without a crossed frequency stage and without RoCoF relays the UFLS-on
    // trace equals the UFLS-off one and sheds nothing.
    let shed: Vec<f64> = jobs
        .par_iter()
        .zip(&off)
        .map(|(j, inc)| {
            if !rocof_relays && !inc.metrics.unstable && inc.metrics.nadir > top {
                return Ok(0.0);
            }
            let tr = simulate_outage(&model.system, &model.generators, j.op, j.lost, &on_opts)?;
            Ok(extract_metrics_with(&tr, cfg.windows).ufls_total)
        })
        .collect::<Result<_, SfrError>>()?;
    let n = off.len();
    row.incidents = n;
    if n > 0 {
        let ok = off.iter().filter(|i| i.label == 1).count();
        let acc = ok as f64 / n as f64 * 100.0;
        row.acceptable_pct = Some(acc);
        row.unacceptable_pct = Some(100.0 - acc);
        row.avg_qss_hz = mean(off.iter().map(|i| i.metrics.qss));
        row.avg_nadir_hz = mean(off.iter().map(|i| i.metrics.nadir));
        row.avg_rocof_hz_s = mean(off.iter().map(|i| i.metrics.rocof));
        row.avg_ufls_mw = mean(shed.iter().copied());
    }
    for &h in &cfg.trace_hours {
        let pick = jobs
            .iter()
            .filter(|j| j.op.hour == h && points.first().is_some_and(|p| p.0 == j.scenario))
            .max_by(|a, b| {
                let pa = a.op.output_of(a.lost).unwrap_or(0.0);
                let pb = b.op.output_of(b.lost).unwrap_or(0.0);
                pa.total_cmp(&pb).then(b.lost.cmp(&a.lost))
            });
        if let Some(j) = pick {
            let tr = simulate_outage(&model.system, &model.generators, j.op, j.lost, &on_opts)?;
            traces.push(TraceSpec {
                hour: h,
                row: label.clone(),
                unit: model.generators[j.lost].id.clone(),
                trace: ArchivedTrace {
                    label: format!("hour{h}|{label}|{}", model.generators[j.lost].id),
                    dt: tr.dt,
                    f_nominal: tr.f_nominal,
                    unstable: tr.unstable,
                    f: tr.f,
                },
            });
        }
    }
    log::info!(
        "{label}: cost {:?}, acceptable {:?} %, ufls {:?} MW",
        row.cost_eur,
        row.acceptable_pct,
        row.avg_ufls_mw
    );
    Ok(row)
}

/// Conventional row at `conventional_multiplier`, then one LR row per ψ with
/// the reserve rows replaced by the learned rows.
pub fn run_cutpoint_sweep(
    model: &IslandModel,
    cfg: &ExperimentConfig,
    lr_model: &LrModel,
) -> Result<CutpointSweep, ExperimentError> {
    cfg.validate(model)?;
    if !lr_model.coefficients().iter().all(|c| c.is_finite()) {
        return Err(ExperimentError::Config("LR coefficients must be finite".into()));
    }
    let uset = cfg.uncertainty(model);
    let mut traces = Vec::new();
    let mut rows = vec![evaluate_case(
        model,
        cfg,
        &uset,
        "conventional".into(),
        None,
        &SecurityBlock::Reserve {
            multiplier: cfg.conventional_multiplier,
        },
        &mut traces,
    )?];
    for &psi in &cfg.psi {
        let block = SecurityBlock::Lr {
            model: lr_model.with_psi(psi),
            big_m: cfg.big_m,
        };
        rows.push(evaluate_case(
            model,
            cfg,
            &uset,
            format!("LR@{psi}"),
            Some(psi),
            &block,
            &mut traces,
        )?);
    }
    let (base_ufls, base_cost) = (rows[0].avg_ufls_mw, rows[0].cost_eur);
    for r in &mut rows {
        r.ufls_delta_pct = pct_delta(r.avg_ufls_mw, base_ufls);
        r.cost_delta_pct = pct_delta(r.cost_eur, base_cost);
    }
    Ok(CutpointSweep { rows, traces })
}

/// Features paired with the metric columns of the correlation table.
pub const CORRELATION_FEATURES: [(usize, &str); 5] = [
    (0, "sum_h_mws"),
    (1, "sum_k_pu"),
    (4, "sum_r_mw"),
    (2, "p_loss_mw"),
    (3, "p_loss_over_d"),
];
pub const CORRELATION_METRICS: [&str; 3] = ["nadir", "qss", "rocof"];

/// Pearson correlation of each feature with nadir, qss and RoCoF over the
/// incidents that carry metrics. `None` where a column has no variance.
pub fn correlation_table(data: &Dataset) -> Vec<(String, [Option<f64>; 3])> {
    let rows: Vec<(&[f64; NUM_FEATURES], FrequencyMetrics)> = data
        .rows
        .iter()
        .filter_map(|r| r.metrics.map(|m| (&r.features, m)))
        .collect();
    let metric = |k: usize| -> Vec<f64> {
        rows.iter()
            .map(|(_, m)| match k {
                0 => m.nadir,
                1 => m.qss,
                _ => m.rocof,
            })
            .collect()
    };
    let cols = [metric(0), metric(1), metric(2)];
    CORRELATION_FEATURES
        .iter()
        .map(|&(j, name)| {
            let x: Vec<f64> = rows.iter().map(|(f, _)| f[j]).collect();
            let c = [0, 1, 2].map(|k| pearson(&x, &cols[k]).ok());
            (name.to_string(), c)
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_comparison_csv(path: &Path, rows: &[ComparisonRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_comparison_csv(path: &Path) -> Result<Vec<ComparisonRow>, ExperimentError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(csv_err(path))
}

pub fn write_correlations_csv(path: &Path, data: &Dataset) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["feature".to_string()];
    header.extend(CORRELATION_METRICS.iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(csv_err(path))?;
    for (name, c) in correlation_table(data) {
        let mut rec = vec![name];
        rec.extend(c.iter().map(|v| fmt_opt(*v)));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_levels_csv(path: &Path, levels: &[LevelReport]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for l in levels {
        w.serialize(l).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_levels_csv(path: &Path) -> Result<Vec<LevelReport>, ExperimentError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(csv_err(path))
}

const METRICS_HEADER: [&str; 9] = [
    "reserve_level",
    "scenario",
    "hour",
    "lost_unit",
    "nadir",
    "qss",
    "rocof",
    "ufls_mw",
    "label",
];

/// Per-incident metrics, one line per dataset row in the same order.
pub fn write_metrics_csv(path: &Path, data: &Dataset) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(METRICS_HEADER).map_err(csv_err(path))?;
    for r in &data.rows {
        let m = r.metrics.ok_or_else(|| {
            ExperimentError::Inconsistent("incident without metrics".into())
        })?;
        w.write_record([
            r.provenance.reserve.to_string(),
            r.provenance.scenario.clone(),
            r.provenance.hour.to_string(),
            r.provenance.unit.clone(),
            m.nadir.to_string(),
            m.qss.to_string(),
            m.rocof.to_string(),
            m.ufls_total.to_string(),
            r.label.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Attaches the metrics file to a dataset read back from CSV. Rows must
/// match one to one by provenance.
pub fn attach_metrics(data: &mut Dataset, path: &Path) -> Result<(), ExperimentError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut k = 0;
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let bad = |what: &str| ExperimentError::Inconsistent(format!("{}: line {}: {what}", path.display(), k + 2));
        let row = data.rows.get_mut(k).ok_or_else(|| bad("more rows than the dataset"))?;
        let num = |i: usize| rec.get(i).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| bad("bad number"));
        let p = &row.provenance;
        if num(0)?.to_bits() != p.reserve.to_bits()
            || rec.get(1) != Some(p.scenario.as_str())
            || rec.get(2).and_then(|s| s.parse::<usize>().ok()) != Some(p.hour)
            || rec.get(3) != Some(p.unit.as_str())
        {
            return Err(bad("provenance differs from the dataset row"));
        }
        row.metrics = Some(FrequencyMetrics {
            nadir: num(4)?,
            qss: num(5)?,
            rocof: num(6)?,
            ufls_total: num(7)?,
            unstable: false,
        });
        k += 1;
    }
    if k != data.rows.len() {
        return Err(ExperimentError::Inconsistent(format!(
            "{}: {k} rows for {} dataset rows",
            path.display(),
            data.rows.len()
        )));
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| ExperimentError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ExperimentError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|source| ExperimentError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<(), ExperimentError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    data.write_csv(BufWriter::new(f))?;
    Ok(())
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset, ExperimentError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    Ok(Dataset::read_csv(BufReader::new(f))?)
}

fn write_text(path: &Path, text: &str) -> Result<(), ExperimentError> {
    fs::write(path, text).map_err(io_err(path))
}

/// At most `cap` rows, evenly spaced, for scatter plots.
fn thin<T>(v: &[T], cap: usize) -> impl Iterator<Item = &T> {
    let step = v.len().div_ceil(cap.max(1)).max(1);
    v.iter().step_by(step)
}

fn cost_chart(rows: &[ComparisonRow]) -> Chart {
    let mut conv = Vec::new();
    let mut lr_pts = Vec::new();
    let mut annotations = Vec::new();
    for r in rows.iter().filter(|r| r.feasible) {
        if let (Some(u), Some(c)) = (r.avg_ufls_mw, r.cost_eur) {
            if r.psi.is_none() {
                conv.push((u, c / 1e3));
            } else {
                annotations.push((1, lr_pts.len(), format!("ψ={}", r.psi.unwrap_or_default())));
                lr_pts.push((u, c / 1e3));
            }
        }
    }
    Chart {
        title: "Operation cost vs average UFLS".into(),
        x_label: "average UFLS (MW)".into(),
        y_label: "cost (kEUR)".into(),
        series: vec![
            Series {
                name: "conventional".into(),
                points: conv,
                mark: Mark::Dots,
            },
            Series {
                name: "LR rows".into(),
                points: lr_pts,
                mark: Mark::Line,
            },
        ],
        annotations,
    }
}

fn logit_chart(data: &Dataset, lr_model: &LrModel) -> Chart {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    let rows: Vec<&Incident> = data.rows.iter().collect();
    for r in thin(&rows, 4000) {
        let z = predict_logit(lr_model, &r.features);
        if r.label == 1 {
            ok.push((z, 1.0));
        } else {
            bad.push((z, 0.0));
        }
    }
    let (lo, hi) = ok
        .iter()
        .chain(&bad)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let curve = if lo.is_finite() {
        (0..=200)
            .map(|k| {
                let z = lo + (hi - lo) * k as f64 / 200.0;
                (z, lr::logistic(z))
            })
            .collect()
    } else {
        Vec::new()
    };
    Chart {
        title: "Incidents vs fitted logit".into(),
        x_label: "logit".into(),
        y_label: "probability / label".into(),
        series: vec![
            Series {
                name: "acceptable".into(),
                points: ok,
                mark: Mark::Dots,
            },
            Series {
                name: "unacceptable".into(),
                points: bad,
                mark: Mark::Dots,
            },
            Series {
                name: "logistic".into(),
                points: curve,
                mark: Mark::Line,
            },
        ],
        annotations: Vec::new(),
    }
}

fn trace_chart(hour: usize, traces: &[&TraceSpec]) -> Chart {
    Chart {
        title: format!("Largest outage at hour {hour}, UFLS on"),
        x_label: "time (s)".into(),
        y_label: "frequency (Hz)".into(),
        series: traces
            .iter()
            .map(|t| {
                let step = (0.01 / t.trace.dt).round().max(1.0) as usize;
                Series {
                    name: format!("{} ({})", t.row, t.unit),
                    points: t
                        .trace
                        .f
                        .iter()
                        .enumerate()
                        .step_by(step)
                        .map(|(k, &f)| (k as f64 * t.trace.dt, f))
                        .collect(),
                    mark: Mark::Line,
                }
            })
            .collect(),
        annotations: Vec::new(),
    }
}

/// Writes the comparison and correlation tables and, with `plots`, the SVG
/// figures into `dir`.
pub fn emit_report(
    dir: &Path,
    rows: &[ComparisonRow],
    data: &Dataset,
    lr_model: &LrModel,
    traces: &[TraceSpec],
    plots: bool,
) -> Result<Vec<PathBuf>, ExperimentError> {
    if rows.is_empty() {
        return Err(ExperimentError::Inconsistent("no comparison rows".into()));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let p = dir.join(files::COMPARISON);
    write_comparison_csv(&p, rows)?;
    written.push(p);
    let p = dir.join(files::CORRELATIONS);
    write_correlations_csv(&p, data)?;
    written.push(p);
    if plots {
        let p = dir.join("cost_vs_ufls.svg");
        write_text(&p, &cost_chart(rows).render())?;
        written.push(p);
        let p = dir.join("logit_scatter.svg");
        write_text(&p, &logit_chart(data, lr_model).render())?;
        written.push(p);
        let mut hours: Vec<usize> = traces.iter().map(|t| t.hour).collect();
        hours.sort_unstable();
        hours.dedup();
        for h in hours {
            let set: Vec<&TraceSpec> = traces.iter().filter(|t| t.hour == h).collect();
            let p = dir.join(format!("traces_hour{h}.svg"));
            write_text(&p, &trace_chart(h, &set).render())?;
            written.push(p);
        }
    }
    Ok(written)
}

pub fn write_traces(path: &Path, traces: &[TraceSpec]) -> Result<(), ExperimentError> {
    let archived: Vec<ArchivedTrace> = traces.iter().map(|t| t.trace.clone()).collect();
    sfr::write_archive_file(path, &archived).map_err(io_err(path))
}

/// Reads traces written by [`write_traces`].
pub fn read_traces(path: &Path) -> Result<Vec<TraceSpec>, ExperimentError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let archived = sfr::read_archive(BufReader::new(f)).map_err(io_err(path))?;
    archived
        .into_iter()
        .map(|trace| {
            let parts: Vec<&str> = trace.label.splitn(3, '|').collect();
            let hour = parts
                .first()
                .and_then(|h| h.strip_prefix("hour"))
                .and_then(|h| h.parse().ok());
            match (hour, parts.get(1), parts.get(2)) {
                (Some(hour), Some(row), Some(unit)) => Ok(TraceSpec {
                    hour,
                    row: row.to_string(),
                    unit: unit.to_string(),
                    trace,
                }),
                _ => Err(ExperimentError::Inconsistent(format!(
                    "{}: bad trace label {:?}",
                    path.display(),
                    trace.label
                ))),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub incidents: usize,
    pub acceptable_share: Option<f64>,
    pub first_infeasible_multiplier: Option<f64>,
    pub holdout: HoldoutReport,
    pub comparison_rows: usize,
    pub infeasible_cutpoints: Vec<f64>,
}

/// File names of a run directory.
pub mod files {
    pub const LEVELS: &str = "levels.csv";
    pub const METRICS: &str = "metrics.csv";
    pub const DATASET: &str = "dataset.csv";
    pub const MODEL: &str = "model.json";
    pub const TRACES: &str = "traces.bin";
    pub const SUMMARY: &str = "summary.json";
    pub const CONFIG: &str = "config.json";
    pub const COMPARISON: &str = "comparison.csv";
    pub const CORRELATIONS: &str = "correlations.csv";
}

/// Writes the sweep outputs (levels, metrics, dataset) into `dir` and
/// returns the dataset. An empty sweep writes headers only.
pub fn write_sweep(dir: &Path, sweep: &SweepResult) -> Result<Option<Dataset>, ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_levels_csv(&dir.join(files::LEVELS), &sweep.levels)?;
    match sweep.dataset() {
        Ok(data) => {
            write_metrics_csv(&dir.join(files::METRICS), &data)?;
            write_dataset_csv(&dir.join(files::DATASET), &data)?;
            Ok(Some(data))
        }
        Err(LrError::EmptyDataset) => {
            let empty = Dataset::default();
            write_metrics_csv(&dir.join(files::METRICS), &empty)?;
            write_dataset_csv(&dir.join(files::DATASET), &empty)?;
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

/// Full study into `dir`.
pub fn run_all(
    model: &IslandModel,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<RunSummary, ExperimentError> {
    cfg.validate(model)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join(files::CONFIG), cfg)?;
    let sweep = run_reserve_sweep(model, cfg)?;
    let data = write_sweep(dir, &sweep)?.ok_or(LrError::EmptyDataset)?;
    if data.degenerate {
        return Err(LrError::DegenerateLabels.into());
    }
    let th = cfg.thresholds(model);
    let (file, holdout) = train_lr(&data, cfg, th)?;
    write_json(&dir.join(files::MODEL), &file)?;
    let cut = run_cutpoint_sweep(model, cfg, &file.model)?;
    write_traces(&dir.join(files::TRACES), &cut.traces)?;
    emit_report(dir, &cut.rows, &data, &file.model, &cut.traces, cfg.plots)?;
    let ok = data.rows.iter().filter(|r| r.label == 1).count();
    let summary = RunSummary {
        incidents: data.len(),
        acceptable_share: Some(ok as f64 / data.len() as f64),
        first_infeasible_multiplier: sweep.first_infeasible,
        holdout,
        comparison_rows: cut.rows.len(),
        infeasible_cutpoints: cut
            .rows
            .iter()
            .filter(|r| !r.feasible)
            .filter_map(|r| r.psi)
            .collect(),
    };
    write_json(&dir.join(files::SUMMARY), &summary)?;
    Ok(summary)
}

/// Spearman correlation between ψ and the unacceptable share over the
/// feasible LR rows.
pub fn psi_unacceptable_spearman(rows: &[ComparisonRow]) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.feasible)
        .filter_map(|r| Some((r.psi?, r.unacceptable_pct?)))
        .unzip();
    spearman(&x, &y).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_matches_documented_lists() {
        let c = ExperimentConfig::default();
        assert_eq!(c.multipliers.len(), 16);
        assert_eq!(c.multipliers[15], 1.5);
        assert_eq!(c.psi.len(), 9);
        assert_eq!(c.conventional_multiplier, 1.0);
    }

    #[test]
    fn holdout_split_is_seeded_partition() {
        let (a, b) = holdout_split(100, 0.2, 7);
        assert_eq!(b.len(), 20);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(holdout_split(100, 0.2, 7), (a, b.clone()));
        assert_ne!(holdout_split(100, 0.2, 8).1, b);
        assert!(holdout_split(10, 0.0, 1).1.is_empty());
    }

    #[test]
    fn pct_delta_examples() {
        assert_eq!(pct_delta(Some(2.0), Some(4.0)), Some(-50.0));
        assert_eq!(pct_delta(Some(2.0), Some(0.0)), None);
        assert_eq!(pct_delta(None, Some(1.0)), None);
    }

    #[test]
    fn thin_caps_length() {
        let v: Vec<usize> = (0..10_001).collect();
        assert!(thin(&v, 4000).count() <= 4000);
        assert_eq!(thin(&v[..3], 4000).count(), 3);
    }
}
