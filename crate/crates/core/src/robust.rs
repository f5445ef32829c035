//! Two-stage robust UC by Benders decomposition, the extensive-form oracle,
//! the deterministic UC and the fixed-commitment economic dispatch.
//!
//! The recourse is an elastic dispatch LP whose dual is built explicitly.
//! For fixed commitment the worst-case wind is found by alternating between
//! the dual LP at a fixed wind profile and the best budgeted-box vertex for
//! fixed duals.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GeneratorSpec, SystemSpec, UncertaintyBox};
use crate::lp::{
    write_lp, AffineValue, Direction, DualError, DualProgram, LinearModel, Param, RowFamily,
    Sense, VarId,
};
use crate::solver::{SolveResult, SolveStatus, SolverAdapter, SolverError};
use crate::uc::{
    build_commitment_block, build_dispatch_block, build_security_block, CommitRef, CommitVars,
    CommitmentSchedule, DispatchOptions, DispatchVars, SecurityBlock, UcError, WindRef,
};

#[derive(Debug, Error)]
pub enum RobustError {
    #[error("master problem infeasible after {feasibility_cuts} feasibility cuts (iteration {iteration})")]
    MasterInfeasible {
        iteration: usize,
        feasibility_cuts: usize,
    },
    #[error("no convergence in {} iterations (gap {})", .0.iterations, .0.gap)]
    IterationLimit(Box<RobustSolution>),
    #[error("no feasible commitment found in {0} iterations")]
    NoIncumbent(usize),
    #[error("dispatch infeasible for the given commitment and wind")]
    EdInfeasible,
    #[error("vertex list is empty")]
    EmptyVertexList,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unexpected {status:?} from the {what}")]
    Unexpected { what: &'static str, status: SolveStatus },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Uc(#[from] UcError),
    #[error(transparent)]
    Dual(#[from] DualError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustOptions {
    /// Absolute convergence tolerance on upper − lower bound (EUR).
    pub eps: f64,
    pub max_iters: usize,
    /// Relative improvement below which the worst-case alternation stops.
    pub inner_tol: f64,
    pub max_inner_iters: usize,
    /// Penalty on elastic slacks (EUR/MWh).
    pub penalty: f64,
    /// Total slack (MW) above which a worst case counts as infeasible.
    pub slack_tol: f64,
    pub n_segments: usize,
    /// Add the implied capacity rows `Σ Pmax·x_t ≥ d_t − w_t^worst` to the
    /// master.
    pub capacity_rows: bool,
    /// Keep a hard dispatch copy at the budgeted-low wind profile in the
    /// master, so `φ` is bounded by that profile's dispatch cost.
    pub master_copy: bool,
    /// Write master and subproblem LP files per iteration here.
    pub dump_dir: Option<PathBuf>,
}

impl Default for RobustOptions {
    fn default() -> Self {
        Self {
            eps: 1.0,
            max_iters: 200,
            inner_tol: 1e-6,
            max_inner_iters: 50,
            penalty: 1e6,
            slack_tol: 1e-6,
            n_segments: 3,
            capacity_rows: true,
            master_copy: true,
            dump_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutKind {
    Optimality,
    Feasibility,
}

/// `kind = Optimality`: `φ ≥ constant + Σ coeffs·x`.
/// `kind = Feasibility`: `0 ≥ constant + Σ coeffs·x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BendersCut {
    pub kind: CutKind,
    /// Coefficients on x, indexed `[t][i]`.
    pub coeffs: Vec<Vec<f64>>,
    pub constant: f64,
    /// Wind profile the cut was generated at.
    pub w_star: Vec<f64>,
    /// Non-zero dual values keyed by row tag.
    pub duals: Vec<(String, f64)>,
    pub iteration: usize,
}

impl BendersCut {
    pub fn eval(&self, sched: &CommitmentSchedule) -> f64 {
        let mut v = self.constant;
        for (t, row) in self.coeffs.iter().enumerate() {
            for (i, c) in row.iter().enumerate() {
                v += c * sched.value(t, i);
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lower: f64,
    pub upper: f64,
    pub kind: CutKind,
    pub sub_value: f64,
    pub master_nodes: usize,
    pub inner_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustSolution {
    pub commitment: CommitmentSchedule,
    /// Worst-case recourse cost of the commitment.
    pub phi: f64,
    pub startup_cost: f64,
    /// `startup_cost + phi`.
    pub total_cost: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub gap: f64,
    pub iterations: usize,
    pub worst_case_wind: Vec<f64>,
    pub cut_pool: Vec<BendersCut>,
    pub history: Vec<IterationRecord>,
    /// Subproblem solves whose alternation hit `max_inner_iters`.
    pub inner_nonconvergent: usize,
}

/// Master MILP: commitment logic, `φ ≥ 0` and the cut pool.
pub struct Master {
    pub model: LinearModel,
    pub commit: CommitVars,
    pub phi: VarId,
    gens: Vec<GeneratorSpec>,
    cuts: usize,
}

impl Master {
    pub fn new(gens: &[GeneratorSpec], system: &SystemSpec) -> Self {
        let mut model = LinearModel::new("master", Direction::Minimize);
        let commit = build_commitment_block(&mut model, gens, system.horizon);
        for t in 0..system.horizon {
            for (i, g) in gens.iter().enumerate() {
                model.add_objective(commit.y[t][i], g.startup_cost);
            }
        }
        let phi = model.continuous("phi", 0.0, f64::INFINITY);
        model.add_objective(phi, 1.0);
        Self {
            model,
            commit,
            phi,
            gens: gens.to_vec(),
            cuts: 0,
        }
    }

    /// Valid rows `Σ Pmax·x_t ≥ d_t − w_t` at the lowest wind the set allows.
    pub fn add_capacity_rows(&mut self, system: &SystemSpec, uset: &UncertaintyBox) {
        for t in 0..system.horizon {
            let w = if uset.budget_gamma > 0 {
                uset.w_lo[t]
            } else {
                uset.w_nom[t]
            };
            let terms = self
                .gens
                .iter()
                .enumerate()
                .map(|(i, g)| (self.commit.x[t][i], g.p_max))
                .collect();
            self.model.add_row(
                format!("capacity[{t}]"),
                RowFamily::FeasibilityCut,
                terms,
                vec![],
                Sense::Ge,
                system.demand[t] - w,
            );
        }
    }

    /// Hard dispatch at wind `w` tied to the master commitment, with
    /// `φ ≥` its generation cost. Valid when `w` lies in the uncertainty set.
    pub fn add_dispatch_copy(
        &mut self,
        system: &SystemSpec,
        w: &[f64],
        block: &SecurityBlock,
        n_segments: usize,
    ) -> Result<(), RobustError> {
        let dopts = DispatchOptions {
            n_segments,
            prefix: "copy:".into(),
            add_objective: false,
            ..DispatchOptions::default()
        };
        let commit = CommitRef::Vars(&self.commit);
        let mut dv = build_dispatch_block(&mut self.model, &self.gens, system, commit, WindRef::Fixed(w), &dopts)?;
        build_security_block(&mut self.model, &self.gens, system, commit, &mut dv, block)?;
        let mut terms: Vec<(VarId, f64)> = dv.cost_terms.iter().map(|(v, c)| (*v, -c)).collect();
        terms.push((self.phi, 1.0));
        self.model
            .add_row("copy:epigraph", RowFamily::Epigraph, terms, vec![], Sense::Ge, 0.0);
        Ok(())
    }

    pub fn add_cut(&mut self, cut: &BendersCut) {
        let mut terms = Vec::new();
        for (t, row) in cut.coeffs.iter().enumerate() {
            for (i, c) in row.iter().enumerate() {
                terms.push((self.commit.x[t][i], -c));
            }
        }
        self.cuts += 1;
        match cut.kind {
            CutKind::Optimality => {
                terms.push((self.phi, 1.0));
                self.model.add_row(
                    format!("opt_cut[{}]", self.cuts),
                    RowFamily::OptimalityCut,
                    terms,
                    vec![],
                    Sense::Ge,
                    cut.constant,
                );
            }
            CutKind::Feasibility => {
                self.model.add_row(
                    format!("feas_cut[{}]", self.cuts),
                    RowFamily::FeasibilityCut,
                    terms,
                    vec![],
                    Sense::Ge,
                    cut.constant,
                );
            }
        }
    }
}

/// Result of one master solve.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterSolution {
    pub commitment: CommitmentSchedule,
    pub phi: f64,
    pub objective: f64,
    pub nodes: usize,
}

pub fn solve_master(
    master: &Master,
    hint: Option<&CommitmentSchedule>,
    solver: &mut dyn SolverAdapter,
) -> Result<MasterSolution, RobustError> {
    let hint = hint
        .map(|s| master.commit.hint(s, &master.gens))
        .unwrap_or_default();
    let r = solver.solve_with_hint(&master.model, &hint)?;
    match r.status {
        SolveStatus::Optimal => Ok(MasterSolution {
            commitment: master.commit.schedule(&r.values),
            phi: r.values[master.phi.0],
            objective: r.objective,
            nodes: r.nodes,
        }),
        SolveStatus::Infeasible => Err(RobustError::MasterInfeasible {
            iteration: 0,
            feasibility_cuts: master.cuts,
        }),
        status => Err(RobustError::Unexpected {
            what: "master",
            status,
        }),
    }
}

/// Worst-case oracle for a fixed commitment.
pub struct Subproblem {
    pub primal: LinearModel,
    pub dispatch: DispatchVars,
    pub dual: DualProgram,
    /// Dual of the phase-one model (unit slack cost, no generation cost).
    pub phase_one: DualProgram,
    horizon: usize,
    units: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemResult {
    /// Worst-case penalised recourse cost.
    pub value: f64,
    /// Total elastic slack at the worst case (MW).
    pub slack: f64,
    pub cut: BendersCut,
    pub w_star: Vec<f64>,
    pub inner_iters: usize,
    pub converged: bool,
}

impl Subproblem {
    pub fn new(
        gens: &[GeneratorSpec],
        system: &SystemSpec,
        block: &SecurityBlock,
        opts: &RobustOptions,
    ) -> Result<Self, RobustError> {
        let (primal, dispatch) = elastic_model(gens, system, block, opts, opts.penalty, 1.0)?;
        let (phase_one, _) = elastic_model(gens, system, block, opts, 1.0, 0.0)?;
        Ok(Self {
            dual: DualProgram::dualize(&primal)?,
            phase_one: DualProgram::dualize(&phase_one)?,
            primal,
            dispatch,
            horizon: system.horizon,
            units: gens.len(),
        })
    }

    fn cut_from(
        &self,
        kind: CutKind,
        dual: &DualProgram,
        lambda: &[f64],
        w: &[f64],
        iteration: usize,
    ) -> BendersCut {
        let affine = dual.objective_affine(lambda);
        let mut coeffs = vec![vec![0.0; self.units]; self.horizon];
        let mut constant = affine.constant;
        for (p, c) in &affine.coeffs {
            match *p {
                Param::Commit { t, unit } => coeffs[t][unit] += c,
                Param::Wind { t } => constant += c * w[t],
            }
        }
        let duals = dual
            .info
            .iter()
            .zip(lambda)
            .filter(|(_, l)| **l != 0.0)
            .map(|(d, l)| (d.tag.clone(), *l))
            .collect();
        BendersCut {
            kind,
            coeffs,
            constant,
            w_star: w.to_vec(),
            duals,
            iteration,
        }
    }

    fn dual_at(
        &self,
        dual: &DualProgram,
        sched: &CommitmentSchedule,
        w: &[f64],
        solver: &mut dyn SolverAdapter,
    ) -> Result<SolveResult, RobustError> {
        let model = dual.instantiate(&|p| bind(sched, w, p));
        let r = solver.solve(&model)?;
        if r.status != SolveStatus::Optimal {
            return Err(RobustError::Unexpected {
                what: "dual subproblem",
                status: r.status,
            });
        }
        Ok(r)
    }

    /// Worst-case recourse for `sched` over `uset` and the resulting cut.
    pub fn solve(
        &self,
        sched: &CommitmentSchedule,
        uset: &UncertaintyBox,
        opts: &RobustOptions,
        iteration: usize,
        solver: &mut dyn SolverAdapter,
    ) -> Result<SubproblemResult, RobustError> {
        let mut starts = vec![uset.w_nom.clone(), budgeted_low(uset)];
        starts.dedup();
        let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        let mut total_inner = 0;
        let mut converged = true;
        for start in starts {
            let mut w = start;
            let mut done = false;
            for _ in 0..opts.max_inner_iters {
                total_inner += 1;
                let r = self.dual_at(&self.dual, sched, &w, solver)?;
                let affine = self.dual.objective_affine(&r.values);
                let next = best_response(&affine, uset);
                let v_next = affine.eval(&|p| bind(sched, &next, p));
                if best.as_ref().is_none_or(|(v, _, _)| r.objective > *v) {
                    best = Some((r.objective, w.clone(), r.values.clone()));
                }
                if v_next - r.objective <= opts.inner_tol * r.objective.abs().max(1.0) || next == w
                {
                    done = true;
                    break;
                }
                w = next;
            }
            converged &= done;
        }
        if !converged {
            log::warn!("worst-case alternation hit {} iterations", opts.max_inner_iters);
        }
        let (value, w_star, lambda) = best.expect("at least one start");

        let primal = self.primal.bind(&|p| bind(sched, &w_star, p));
        let pr = solver.solve(&primal)?;
        if pr.status != SolveStatus::Optimal {
            return Err(RobustError::Unexpected {
                what: "elastic dispatch",
                status: pr.status,
            });
        }
        let slack = self.dispatch.total_slack(&pr.values);
        let cut = if slack > opts.slack_tol {
            let r = self.dual_at(&self.phase_one, sched, &w_star, solver)?;
            self.cut_from(CutKind::Feasibility, &self.phase_one, &r.values, &w_star, iteration)
        } else {
            self.cut_from(CutKind::Optimality, &self.dual, &lambda, &w_star, iteration)
        };
        Ok(SubproblemResult {
            value,
            slack,
            cut,
            w_star,
            inner_iters: total_inner,
            converged,
        })
    }
}

fn elastic_model(
    gens: &[GeneratorSpec],
    system: &SystemSpec,
    block: &SecurityBlock,
    opts: &RobustOptions,
    penalty: f64,
    cost_weight: f64,
) -> Result<(LinearModel, DispatchVars), RobustError> {
    let mut m = LinearModel::new("recourse", Direction::Minimize);
    let dopts = DispatchOptions {
        n_segments: opts.n_segments,
        elastic_penalty: Some(penalty),
        cost_weight,
        ..DispatchOptions::default()
    };
    let mut dv = build_dispatch_block(&mut m, gens, system, CommitRef::Params, WindRef::Params, &dopts)?;
    build_security_block(&mut m, gens, system, CommitRef::Params, &mut dv, block)?;
    Ok((m, dv))
}

fn bind(sched: &CommitmentSchedule, w: &[f64], p: Param) -> f64 {
    match p {
        Param::Commit { t, unit } => sched.value(t, unit),
        Param::Wind { t } => w[t],
    }
}

/// Γ hours with the largest downward range at their lower bound, the rest
/// nominal (ties: earliest hour).
fn budgeted_low(uset: &UncertaintyBox) -> Vec<f64> {
    let mut hours: Vec<usize> = uset.uncertain_hours();
    hours.sort_by(|&a, &b| {
        let da = uset.w_nom[a] - uset.w_lo[a];
        let db = uset.w_nom[b] - uset.w_lo[b];
        db.total_cmp(&da).then(a.cmp(&b))
    });
    let mut w = uset.w_nom.clone();
    for &t in hours.iter().take(uset.budget_gamma) {
        w[t] = uset.w_lo[t];
    }
    w
}

/// Maximiser of the affine dual objective over the budgeted box: each hour
/// moves to the bound its wind coefficient favours (ties to the lower
/// bound); under a budget only the Γ hours with the largest gain move
/// (ties: earliest hour).
fn best_response(affine: &AffineValue, uset: &UncertaintyBox) -> Vec<f64> {
    let mut w = uset.w_nom.clone();
    let mut gains: Vec<(f64, usize, f64)> = Vec::new();
    for t in 0..uset.horizon() {
        let g = affine
            .coeffs
            .get(&Param::Wind { t })
            .copied()
            .unwrap_or(0.0);
        let target = if g > 0.0 { uset.w_hi[t] } else { uset.w_lo[t] };
        gains.push((g * (target - uset.w_nom[t]), t, target));
    }
    if uset.budget_gamma >= uset.horizon() {
        for (_, t, target) in gains {
            w[t] = target;
        }
        return w;
    }
    gains.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (gain, t, target) in gains.into_iter().take(uset.budget_gamma) {
        if gain > 0.0 {
            w[t] = target;
        }
    }
    w
}

fn check_inputs(
    gens: &[GeneratorSpec],
    system: &SystemSpec,
    uset: &UncertaintyBox,
) -> Result<(), RobustError> {
    if gens.is_empty() {
        return Err(RobustError::InvalidInput("no generators".into()));
    }
    if uset.horizon() != system.horizon || system.demand.len() != system.horizon {
        return Err(RobustError::InvalidInput(format!(
            "horizon mismatch: system {}, demand {}, uncertainty {}",
            system.horizon,
            system.demand.len(),
            uset.horizon()
        )));
    }
    Ok(())
}

fn dump(opts: &RobustOptions, name: &str, model: &LinearModel) -> Result<(), RobustError> {
    if let Some(dir) = &opts.dump_dir {
        std::fs::create_dir_all(dir)?;
        write_lp(model, dir.join(name))?;
    }
    Ok(())
}

/// Benders loop: master MILP over commitments, worst-case subproblem per
/// incumbent, cuts retained across iterations.
pub fn solve_robust_uc(
    gens: &[GeneratorSpec],
    system: &SystemSpec,
    uset: &UncertaintyBox,
    block: &SecurityBlock,
    opts: &RobustOptions,
    solver: &mut dyn SolverAdapter,
) -> Result<RobustSolution, RobustError> {
    check_inputs(gens, system, uset)?;
    if !(opts.eps > 0.0) {
        return Err(RobustError::InvalidInput("eps must be > 0".into()));
    }
    let sub = Subproblem::new(gens, system, block, opts)?;
    let mut master = Master::new(gens, system);
    if opts.capacity_rows {
        master.add_capacity_rows(system, uset);
    }
    if opts.master_copy {
        master.add_dispatch_copy(system, &budgeted_low(uset), block, opts.n_segments)?;
    }
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    let mut incumbent: Option<(CommitmentSchedule, f64, Vec<f64>)> = None;
    let mut pool = Vec::new();
    let mut history = Vec::new();
    let mut feasibility_cuts = 0;
    let mut inner_nonconvergent = 0;

    let finish = |incumbent: &(CommitmentSchedule, f64, Vec<f64>),
                  lower: f64,
                  upper: f64,
                  iterations: usize,
                  pool: &Vec<BendersCut>,
                  history: &Vec<IterationRecord>,
                  inner_nonconvergent: usize| {
        let (sched, phi, w) = incumbent;
        let suc = sched.startup_cost(gens);
        RobustSolution {
            commitment: sched.clone(),
            phi: *phi,
            startup_cost: suc,
            total_cost: suc + phi,
            lower_bound: lower,
            upper_bound: upper,
            gap: upper - lower,
            iterations,
            worst_case_wind: w.clone(),
            cut_pool: pool.clone(),
            history: history.clone(),
            inner_nonconvergent,
        }
    };

    for it in 1..=opts.max_iters {
        dump(opts, &format!("master_{it:03}.lp"), &master.model)?;
        let ms = match solve_master(&master, incumbent.as_ref().map(|i| &i.0), solver) {
            Err(RobustError::MasterInfeasible { .. }) => {
                return Err(RobustError::MasterInfeasible {
                    iteration: it,
                    feasibility_cuts,
                })
            }
            other => other?,
        };
        lower = lower.max(ms.objective);
        let sr = sub.solve(&ms.commitment, uset, opts, it, solver)?;
        if opts.dump_dir.is_some() {
            let sched = &ms.commitment;
            let w = &sr.w_star;
            dump(opts, &format!("subproblem_{it:03}.lp"), &sub.dual.instantiate(&|p| bind(sched, w, p)))?;
        }
        if !sr.converged {
            inner_nonconvergent += 1;
        }
        match sr.cut.kind {
            CutKind::Feasibility => feasibility_cuts += 1,
            CutKind::Optimality => {
                let ub = ms.commitment.startup_cost(gens) + sr.value;
                if ub < upper {
                    upper = ub;
                    incumbent = Some((ms.commitment.clone(), sr.value, sr.w_star.clone()));
                }
            }
        }
        history.push(IterationRecord {
            iteration: it,
            lower,
            upper,
            kind: sr.cut.kind,
            sub_value: sr.value,
            master_nodes: ms.nodes,
            inner_iters: sr.inner_iters,
        });
        log::debug!(
            "benders it {it}: lower {lower:.4} upper {upper:.4} {:?}",
            sr.cut.kind
        );
        master.add_cut(&sr.cut);
        pool.push(sr.cut);
        if let Some(inc) = &incumbent {
            if upper - lower < opts.eps {
                return Ok(finish(inc, lower, upper, it, &pool, &history, inner_nonconvergent));
            }
        }
    }
    match &incumbent {
        Some(inc) => Err(RobustError::IterationLimit(Box::new(finish(
            inc,
            lower,
            upper,
            opts.max_iters,
            &pool,
            &history,
            inner_nonconvergent,
        )))),
        None => Err(RobustError::NoIncumbent(opts.max_iters)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensiveSolution {
    pub objective: f64,
    pub commitment: CommitmentSchedule,
    pub startup_cost: f64,
    /// Dispatch cost per vertex at the optimum.
    pub vertex_costs: Vec<f64>,
    pub nodes: usize,
}

/// One MILP with a hard dispatch copy per wind vertex sharing the
/// commitment, minimising start-up cost plus the largest dispatch cost.
pub fn solve_extensive_oracle(
    gens: &[GeneratorSpec],
    system: &SystemSpec,
    vertices: &[Vec<f64>],
    block: &SecurityBlock,
    n_segments: usize,
    solver: &mut dyn SolverAdapter,
) -> Result<ExtensiveSolution, RobustError> {
    if vertices.is_empty() {
        return Err(RobustError::EmptyVertexList);
    }
    if let Some(v) = vertices.iter().find(|v| v.len() != system.horizon) {
        return Err(RobustError::InvalidInput(format!(
            "vertex length {} differs from horizon {}",
            v.len(),
            system.horizon
        )));
    }
    let mut m = LinearModel::new("extensive", Direction::Minimize);
    let commit = build_commitment_block(&mut m, gens, system.horizon);
    for t in 0..system.horizon {
        for (i, g) in gens.iter().enumerate() {
            m.add_objective(commit.y[t][i], g.startup_cost);
        }
    }
    let theta = m.continuous("theta", 0.0, f64::INFINITY);
    m.add_objective(theta, 1.0);
    let mut copies = Vec::with_capacity(vertices.len());
    for (k, w) in vertices.iter().enumerate() {
        let dopts = DispatchOptions {
            n_segments,
            prefix: format!("v{k}:"),
            add_objective: false,
            ..DispatchOptions::default()
        };
        let mut dv = build_dispatch_block(&mut m, gens, system, CommitRef::Vars(&commit), WindRef::Fixed(w), &dopts)?;
        build_security_block(&mut m, gens, system, CommitRef::Vars(&commit), &mut dv, block)?;
        let mut terms: Vec<(VarId, f64)> = dv.cost_terms.iter().map(|(v, c)| (*v, -c)).collect();
        terms.push((theta, 1.0));
        m.add_row(format!("epigraph[{k}]"), RowFamily::Epigraph, terms, vec![], Sense::Ge, 0.0);
        copies.push(dv);
    }
    let r = solver.solve(&m)?;
    match r.status {
        SolveStatus::Optimal => {
            let commitment = commit.schedule(&r.values);
            Ok(ExtensiveSolution {
                objective: r.objective,
                startup_cost: commitment.startup_cost(gens),
                commitment,
                vertex_costs: copies.iter().map(|dv| dv.generation_cost(&r.values)).collect(),
                nodes: r.nodes,
            })
        }
        SolveStatus::Infeasible => Err(RobustError::EdInfeasible),
        status => Err(RobustError::Unexpected {
            what: "extensive model",
            status,
        }),
    }
}

/// Deterministic UC for one wind profile.
pub fn solve_deterministic_uc(
    gens: &[GeneratorSpec],
    system: &SystemSpec,
    wind: &[f64],
    block: &SecurityBlock,
    n_segments: usize,
    solver: &mut dyn SolverAdapter,
) -> Result<ExtensiveSolution, RobustError> {
    solve_extensive_oracle(gens, system, &[wind.to_vec()], block, n_segments, solver)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispatch {
    /// Output per `[t][i]` (MW).
    pub p: Vec<Vec<f64>>,
    /// Wind used per hour (MW).
    pub wg: Vec<f64>,
    /// Piecewise-linear generation cost (EUR).
    pub cost: f64,
}

/// Dispatch LP for a fixed commitment and wind profile.
pub fn solve_ed(
    gens: &[GeneratorSpec],
    system: &SystemSpec,
    sched: &CommitmentSchedule,
    wind: &[f64],
    block: &SecurityBlock,
    n_segments: usize,
    solver: &mut dyn SolverAdapter,
) -> Result<Dispatch, RobustError> {
    if wind.len() != system.horizon || sched.horizon() != system.horizon {
        return Err(RobustError::InvalidInput("horizon mismatch".into()));
    }
    let mut m = LinearModel::new("ed", Direction::Minimize);
    let dopts = DispatchOptions {
        n_segments,
        ..DispatchOptions::default()
    };
    let mut dv = build_dispatch_block(&mut m, gens, system, CommitRef::Params, WindRef::Fixed(wind), &dopts)?;
    build_security_block(&mut m, gens, system, CommitRef::Params, &mut dv, block)?;
    let bound = m.bind(&|p| sched.param_value(p));
    let r = solver.solve(&bound)?;
    match r.status {
        SolveStatus::Optimal => Ok(Dispatch {
            p: dv
                .p
                .iter()
                .map(|row| row.iter().map(|v| r.values[v.0]).collect())
                .collect(),
            wg: dv.wg.iter().map(|v| r.values[v.0]).collect(),
            cost: r.objective,
        }),
        SolveStatus::Infeasible => Err(RobustError::EdInfeasible),
        status => Err(RobustError::Unexpected {
            what: "dispatch",
            status,
        }),
    }
}

/// Per-family sums of |dual| for a cut, keyed by the family's dual symbol.
pub fn dual_summary(cut: &BendersCut) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (tag, v) in &cut.duals {
        let family = tag.split('[').next().unwrap_or(tag);
        *out.entry(family.to_string()).or_insert(0.0) += v.abs();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::QuadraticCost;
    use crate::solver::BranchAndBound;

    fn unit(id: &str, p_min: f64, p_max: f64, b: f64, su: f64) -> GeneratorSpec {
        GeneratorSpec {
            id: id.into(),
            p_min,
            p_max,
            ramp_up: p_max,
            ramp_down: p_max,
            min_up: 1,
            min_down: 1,
            startup_cost: su,
            cost_quadratic: QuadraticCost { a: 0.0, b, c: 0.0 },
            inertia_h: 3.0,
            m_base: p_max,
            gov_gain: 10.0,
            gov_a1: 1.0,
            gov_a2: 0.0,
            gov_b1: 0.0,
            gov_b2: 0.0,
            dp_min: -0.1,
            dp_max: 0.1,
            initial_on: false,
            initial_p: 0.0,
        }
    }

    fn system(demand: Vec<f64>) -> SystemSpec {
        SystemSpec {
            s_base: 20.0,
            f_nominal: 50.0,
            load_damping: 1.0,
            horizon: demand.len(),
            demand,
        }
    }

    fn on(t: usize, i: usize) -> CommitmentSchedule {
        CommitmentSchedule::all(t, i, true)
    }

    #[test]
    fn subproblem_single_unit_examples() {
        let gens = vec![unit("g", 1.0, 10.0, 10.0, 0.0)];
        let sys = system(vec![5.0]);
        let opts = RobustOptions::default();
        let sub = Subproblem::new(&gens, &sys, &SecurityBlock::None, &opts).unwrap();
        let mut s = BranchAndBound::default();
        let uset = UncertaintyBox {
            w_lo: vec![0.0],
            w_hi: vec![2.0],
            w_nom: vec![1.0],
            budget_gamma: 1,
        };
        let r = sub.solve(&on(1, 1), &uset, &opts, 1, &mut s).unwrap();
        assert_eq!(r.w_star, vec![0.0]);
        assert!((r.value - 50.0).abs() < 1e-6, "{}", r.value);
        assert_eq!(r.cut.kind, CutKind::Optimality);
        assert!((r.cut.eval(&on(1, 1)) - 50.0).abs() < 1e-6);

        let r = sub
            .solve(&on(1, 1), &UncertaintyBox::fixed(&[5.0]), &opts, 1, &mut s)
            .unwrap();
        assert!((r.value - 10.0).abs() < 1e-6, "{}", r.value);

        let off = CommitmentSchedule::all(1, 1, false);
        let r = sub.solve(&off, &uset, &opts, 1, &mut s).unwrap();
        assert_eq!(r.cut.kind, CutKind::Feasibility);
        assert!(r.cut.eval(&off) > 0.0);
        assert!(r.cut.eval(&on(1, 1)) <= 1e-9);
    }

    #[test]
    fn master_examples() {
        let gens = vec![unit("g", 1.0, 10.0, 10.0, 5.0)];
        let sys = system(vec![5.0]);
        let mut s = BranchAndBound::default();
        let mut master = Master::new(&gens, &sys);
        let ms = solve_master(&master, None, &mut s).unwrap();
        assert_eq!(ms.commitment, CommitmentSchedule::all(1, 1, false));
        assert_eq!(ms.phi, 0.0);

        let cut = |c: f64, k: f64, kind| BendersCut {
            kind,
            coeffs: vec![vec![k]],
            constant: c,
            w_star: vec![0.0],
            duals: vec![],
            iteration: 1,
        };
        master.add_cut(&cut(100.0, -10.0, CutKind::Optimality));
        let ms = solve_master(&master, None, &mut s).unwrap();
        assert_eq!(ms.commitment, on(1, 1));
        assert!((ms.objective - 95.0).abs() < 1e-9);

        master.add_cut(&cut(1.0, -2.0, CutKind::Feasibility));
        master.add_cut(&cut(-1.0, 2.0, CutKind::Feasibility));
        assert!(matches!(
            solve_master(&master, None, &mut s),
            Err(RobustError::MasterInfeasible { .. })
        ));
    }

    #[test]
    fn ed_examples() {
        let gens = vec![unit("g", 1.0, 10.0, 10.0, 0.0)];
        let sys = system(vec![5.0]);
        let mut s = BranchAndBound::default();
        let d = solve_ed(&gens, &sys, &on(1, 1), &[0.0], &SecurityBlock::None, 3, &mut s).unwrap();
        assert!((d.p[0][0] - 5.0).abs() < 1e-9);
        let d = solve_ed(&gens, &sys, &on(1, 1), &[8.0], &SecurityBlock::None, 3, &mut s).unwrap();
        assert!((d.p[0][0] - 1.0).abs() < 1e-9);
        assert!((d.wg[0] - 4.0).abs() < 1e-9);
        let off = CommitmentSchedule::all(1, 1, false);
        assert!(matches!(
            solve_ed(&gens, &sys, &off, &[0.0], &SecurityBlock::None, 3, &mut s),
            Err(RobustError::EdInfeasible)
        ));
    }

    #[test]
    fn extensive_requires_vertices() {
        let gens = vec![unit("g", 1.0, 10.0, 10.0, 0.0)];
        let sys = system(vec![5.0]);
        let mut s = BranchAndBound::default();
        assert!(matches!(
            solve_extensive_oracle(&gens, &sys, &[], &SecurityBlock::None, 3, &mut s),
            Err(RobustError::EmptyVertexList)
        ));
    }

    #[test]
    fn small_robust_matches_extensive() {
        let gens = vec![unit("a", 2.0, 10.0, 10.0, 30.0), unit("b", 1.0, 8.0, 25.0, 5.0)];
        let sys = system(vec![9.0, 14.0, 6.0]);
        let uset = UncertaintyBox {
            w_lo: vec![0.0, 1.0, 0.0],
            w_hi: vec![3.0, 5.0, 2.0],
            w_nom: vec![1.5, 3.0, 1.0],
            budget_gamma: 3,
        };
        let mut s = BranchAndBound::default();
        let block = SecurityBlock::Reserve { multiplier: 0.1 };
        let r = solve_robust_uc(&gens, &sys, &uset, &block, &RobustOptions::default(), &mut s).unwrap();
        let verts = uset.vertices(64).unwrap();
        let e = solve_extensive_oracle(&gens, &sys, &verts, &block, 3, &mut s).unwrap();
        assert!(
            (r.total_cost - e.objective).abs() <= 1e-4 * e.objective.abs(),
            "{} vs {}",
            r.total_cost,
            e.objective
        );
        assert!(r.history.windows(2).all(|w| w[1].lower >= w[0].lower - 1e-9));
    }
}
