//! Solver adapters for [`LinearModel`].
//!
//! `bundled` is an exact best-first branch-and-bound over the microlp
//! simplex, with depth-first plunging and warm-started child LPs. `microlp`
//! hands the whole model to microlp's own MIP search. `highs` (cargo feature
//! of the same name, on by default) wraps the HiGHS solver and is the
//! default for full-size instances.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOutcome, Variable};
use thiserror::Error;

use crate::lp::{Direction, LinearModel, Sense, VarId, VarKind};

#[cfg(feature = "highs")]
mod highs;
#[cfg(feature = "highs")]
pub use highs::HighsSolver;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Primal values, one per model variable (empty unless optimal).
    pub values: Vec<f64>,
    /// Objective including the model constant (NaN unless optimal).
    pub objective: f64,
    /// Branch-and-bound nodes explored (0 for pure LPs).
    pub nodes: usize,
}

impl SolveResult {
    fn status_only(status: SolveStatus) -> Self {
        Self {
            status,
            values: Vec::new(),
            objective: f64::NAN,
            nodes: 0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("model {0} still has unbound parameters")]
    Parametric(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("node limit of {limit} reached")]
    NodeLimit {
        limit: usize,
        best: Option<Box<SolveResult>>,
    },
    #[error("solver failure: {0}")]
    Failure(String),
    #[error("unknown solver adapter {0:?}")]
    UnknownAdapter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub milp: bool,
    pub lp: bool,
}

/// Primal MILP/LP solve. One solve in flight per instance.
pub trait SolverAdapter: Send {
    fn name(&self) -> &'static str;

    fn capabilities(&self) -> Capabilities;

    fn solve(&mut self, model: &LinearModel) -> Result<SolveResult, SolverError> {
        self.solve_with_hint(model, &[])
    }

    /// Solve with a suggested assignment of binaries, used as a starting
    /// incumbent when it is feasible. Adapters may ignore it.
    fn solve_with_hint(
        &mut self,
        model: &LinearModel,
        hint: &[(VarId, f64)],
    ) -> Result<SolveResult, SolverError>;
}

pub const ADAPTER_NAMES: &[&str] = &[
    "bundled",
    "microlp",
    #[cfg(feature = "highs")]
    "highs",
];

/// Adapter used when neither `IFUC_SOLVER` nor a config names one.
#[cfg(feature = "highs")]
pub const DEFAULT_ADAPTER: &str = "highs";
#[cfg(not(feature = "highs"))]
pub const DEFAULT_ADAPTER: &str = "bundled";

pub fn adapter_by_name(name: &str) -> Result<Box<dyn SolverAdapter>, SolverError> {
    match name {
        "bundled" => Ok(Box::new(BranchAndBound::default())),
        "microlp" => Ok(Box::new(MicrolpMip::default())),
        #[cfg(feature = "highs")]
        "highs" => Ok(Box::new(HighsSolver::default())),
        other => Err(SolverError::UnknownAdapter(other.to_string())),
    }
}

/// Adapter named by `IFUC_SOLVER`, falling back to `default`.
pub fn adapter_from_env(default: &str) -> Result<Box<dyn SolverAdapter>, SolverError> {
    match std::env::var("IFUC_SOLVER") {
        Ok(name) if !name.trim().is_empty() => adapter_by_name(name.trim()),
        _ => adapter_by_name(default),
    }
}

fn check(model: &LinearModel) -> Result<(), SolverError> {
    if model.has_params() {
        return Err(SolverError::Parametric(model.name.clone()));
    }
    model.validate().map_err(SolverError::InvalidModel)
}

fn op(sense: Sense) -> ComparisonOp {
    match sense {
        Sense::Le => ComparisonOp::Le,
        Sense::Ge => ComparisonOp::Ge,
        Sense::Eq => ComparisonOp::Eq,
    }
}

fn direction(d: Direction) -> OptimizationDirection {
    match d {
        Direction::Minimize => OptimizationDirection::Minimize,
        Direction::Maximize => OptimizationDirection::Maximize,
    }
}

/// Builds the microlp problem. With `relax` binaries become `[lb, ub]`
/// reals; `fixed` overrides bounds of the listed variables.
fn build_problem(
    model: &LinearModel,
    relax: bool,
    fixed: &[(VarId, f64)],
) -> (Problem, Vec<Variable>) {
    let mut problem = Problem::new(direction(model.direction));
    let c = model.dense_objective();
    let mut bounds: Vec<(f64, f64)> = model.vars.iter().map(|v| (v.lb, v.ub)).collect();
    for (v, val) in fixed {
        bounds[v.0] = (*val, *val);
    }
    let vars: Vec<Variable> = model
        .vars
        .iter()
        .enumerate()
        .map(|(j, def)| {
            if !relax && def.kind == VarKind::Binary && bounds[j] == (0.0, 1.0) {
                problem.add_binary_var(c[j])
            } else {
                problem.add_var(c[j], bounds[j])
            }
        })
        .collect();
    for row in &model.rows {
        let expr: Vec<(Variable, f64)> = row.terms.iter().map(|(v, k)| (vars[v.0], *k)).collect();
        problem.add_constraint(expr, op(row.sense), row.rhs);
    }
    (problem, vars)
}

fn map_outcome(outcome: Result<SolveOutcome, microlp::Error>) -> Result<Option<microlp::Solution>, SolveStatus> {
    match outcome {
        Ok(SolveOutcome::Solution(s)) => Ok(Some(s)),
        Ok(SolveOutcome::Interrupted(_)) => Ok(None),
        Err(microlp::Error::Infeasible) => Err(SolveStatus::Infeasible),
        Err(microlp::Error::Unbounded) => Err(SolveStatus::Unbounded),
        Err(_) => Ok(None),
    }
}

fn failure(outcome: &Result<SolveOutcome, microlp::Error>) -> SolverError {
    match outcome {
        Err(e) => SolverError::Failure(e.to_string()),
        Ok(_) => SolverError::Failure("solve interrupted".into()),
    }
}

/// Solves the LP with every binary fixed to its rounded value in `x`.
fn polish(model: &LinearModel, fixed: &[(VarId, f64)]) -> Option<(f64, Vec<f64>)> {
    let (problem, vars) = build_problem(model, true, fixed);
    match problem.solve() {
        Ok(SolveOutcome::Solution(s)) => {
            let values: Vec<f64> = vars.iter().map(|v| s.var_value(*v)).collect();
            Some((model.objective_value(&values), values))
        }
        _ => None,
    }
}

fn binaries(model: &LinearModel) -> Vec<usize> {
    model
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(j, _)| j)
        .collect()
}

fn rounded_binaries(bins: &[usize], values: &[f64]) -> Vec<(VarId, f64)> {
    bins.iter()
        .map(|&j| (VarId(j), values[j].round().clamp(0.0, 1.0)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct BranchAndBound {
    pub node_limit: usize,
    /// Integrality tolerance on binaries.
    pub int_tol: f64,
    /// Nodes whose bound is within `rel_gap·max(1,|incumbent|)` of the
    /// incumbent are pruned.
    pub rel_gap: f64,
}

impl Default for BranchAndBound {
    fn default() -> Self {
        Self {
            node_limit: 2_000_000,
            int_tol: 1e-6,
            rel_gap: 1e-9,
        }
    }
}

/// Where a queued node's LP is re-solved from: the parent's simplex state
/// while few are held, otherwise the fixings replayed on the root solution
/// (each snapshot holds a full factorisation).
enum Start {
    Warm(Rc<microlp::Solution>),
    Replay,
}

const MAX_WARM_NODES: usize = 512;

struct Node {
    bound: f64,
    seq: usize,
    start: Start,
    /// Fixings leading to the parent.
    path: Rc<Vec<(usize, f64)>>,
    var: usize,
    value: f64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: smallest bound first, then oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    model: &'a LinearModel,
    bins: Vec<usize>,
    vars: Vec<Variable>,
    sign: f64,
    opts: &'a BranchAndBound,
    heap: BinaryHeap<Node>,
    root: Option<microlp::Solution>,
    warm: usize,
    seq: usize,
    nodes: usize,
    incumbent: Option<(f64, Vec<f64>)>,
}

impl Search<'_> {
    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            Some((obj, _)) => obj - self.opts.rel_gap * obj.abs().max(1.0),
            None => f64::INFINITY,
        }
    }

    fn offer(&mut self, values: Vec<f64>) {
        let obj = self.sign * self.model.objective_value(&values);
        if self.incumbent.as_ref().is_none_or(|(best, _)| obj < *best) {
            self.incumbent = Some((obj, values));
        }
    }

    fn branch_var(&self, sol: &microlp::Solution) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, (u8, f64))> = None;
        for &j in &self.bins {
            let v = sol.var_value_raw(self.vars[j]);
            let frac = (v - v.floor()).min(v.ceil() - v);
            let key = (self.model.vars[j].priority, frac);
            if frac > self.opts.int_tol && best.is_none_or(|(_, _, k)| key > k) {
                best = Some((j, v, key));
            }
        }
        best.map(|(j, v, _)| (j, v))
    }

    /// Depth-first plunge from `sol`, queueing the sibling of every branch.
    fn plunge(&mut self, mut sol: microlp::Solution, path: Vec<(usize, f64)>) -> Result<(), SolverError> {
        let mut path = Rc::new(path);
        loop {
            let bound = self.sign * (sol.objective() + self.model.obj_constant);
            if bound >= self.cutoff() {
                return Ok(());
            }
            let Some((j, v)) = self.branch_var(&sol) else {
                let values: Vec<f64> = self.vars.iter().map(|x| sol.var_value_raw(*x)).collect();
                let fixed = rounded_binaries(&self.bins, &values);
                match polish(self.model, &fixed) {
                    Some((_, polished)) => self.offer(polished),
                    None => {
                        let mut values = values;
                        for (var, val) in fixed {
                            values[var.0] = val;
                        }
                        self.offer(values);
                    }
                }
                return Ok(());
            };
            self.nodes += 1;
            if self.nodes > self.opts.node_limit {
                return Err(SolverError::NodeLimit {
                    limit: self.opts.node_limit,
                    best: None,
                });
            }
            // Priority binaries (commitments) dive up first: that keeps the
            // plunge feasible far more often than rounding to nearest.
            let first = if v >= 0.5 || self.model.vars[j].priority > 0 {
                1.0
            } else {
                0.0
            };
            self.seq += 1;
            let mut node = Node {
                bound,
                seq: self.seq,
                start: Start::Replay,
                path: Rc::clone(&path),
                var: j,
                value: 1.0 - first,
            };
            let child = if self.warm < MAX_WARM_NODES {
                self.warm += 1;
                let parent = Rc::new(sol);
                node.start = Start::Warm(Rc::clone(&parent));
                self.heap.push(node);
                Rc::try_unwrap(parent)
                    .unwrap_or_else(|rc| (*rc).clone())
                    .fix_var(self.vars[j], first)
            } else {
                self.heap.push(node);
                sol.fix_var(self.vars[j], first)
            };
            let mut next = (*path).clone();
            next.push((j, first));
            path = Rc::new(next);
            match map_outcome(child) {
                Ok(Some(s)) => sol = s,
                Ok(None) => return Err(SolverError::Failure("LP re-solve failed".into())),
                Err(_) => return Ok(()),
            }
        }
    }

    /// Re-solves the parent of a replayed node from the root.
    fn replay(&self, path: &[(usize, f64)]) -> Result<Option<microlp::Solution>, SolverError> {
        let mut sol = self.root.clone().expect("root solved");
        for &(j, v) in path {
            match map_outcome(sol.fix_var(self.vars[j], v)) {
                Ok(Some(s)) => sol = s,
                Ok(None) => return Err(SolverError::Failure("LP re-solve failed".into())),
                Err(_) => return Ok(None),
            }
        }
        Ok(Some(sol))
    }

    fn run(&mut self, root: microlp::Solution) -> Result<(), SolverError> {
        self.root = Some(root.clone());
        self.plunge(root, Vec::new())?;
        while let Some(node) = self.heap.pop() {
            if let Start::Warm(_) = node.start {
                self.warm -= 1;
            }
            if node.bound >= self.cutoff() {
                continue;
            }
            let parent = match node.start {
                Start::Warm(rc) => Rc::try_unwrap(rc).unwrap_or_else(|rc| (*rc).clone()),
                Start::Replay => match self.replay(&node.path)? {
                    Some(s) => s,
                    None => continue,
                },
            };
            let mut path = (*node.path).clone();
            path.push((node.var, node.value));
            match map_outcome(parent.fix_var(self.vars[node.var], node.value)) {
                Ok(Some(s)) => self.plunge(s, path)?,
                Ok(None) => return Err(SolverError::Failure("LP re-solve failed".into())),
                Err(_) => {}
            }
        }
        Ok(())
    }
}

impl BranchAndBound {
    fn solve_impl(
        &self,
        model: &LinearModel,
        hint: &[(VarId, f64)],
    ) -> Result<SolveResult, SolverError> {
        check(model)?;
        let (problem, vars) = build_problem(model, true, &[]);
        let outcome = problem.solve();
        let root = match map_outcome(outcome.clone()) {
            Ok(Some(s)) => s,
            Ok(None) => return Err(failure(&outcome)),
            Err(status) => return Ok(SolveResult::status_only(status)),
        };
        let sign = match model.direction {
            Direction::Minimize => 1.0,
            Direction::Maximize => -1.0,
        };
        let bins = binaries(model);
        if bins.is_empty() {
            let values: Vec<f64> = vars.iter().map(|v| root.var_value_raw(*v)).collect();
            return Ok(SolveResult {
                status: SolveStatus::Optimal,
                objective: root.objective() + model.obj_constant,
                values,
                nodes: 0,
            });
        }
        let mut search = Search {
            model,
            bins,
            vars,
            sign,
            opts: self,
            heap: BinaryHeap::new(),
            root: None,
            warm: 0,
            seq: 0,
            nodes: 0,
            incumbent: None,
        };
        if !hint.is_empty() {
            let fixed: Vec<(VarId, f64)> = hint
                .iter()
                .filter(|(v, _)| model.vars[v.0].kind == VarKind::Binary)
                .map(|(v, x)| (*v, x.round().clamp(0.0, 1.0)))
                .collect();
            if fixed.len() == search.bins.len() {
                if let Some((_, values)) = polish(model, &fixed) {
                    search.offer(values);
                }
            }
        }
        let outcome = search.run(root);
        let nodes = search.nodes;
        let best = search.incumbent.take().map(|(_, values)| SolveResult {
            status: SolveStatus::Optimal,
            objective: model.objective_value(&values),
            values,
            nodes,
        });
        match outcome {
            Ok(()) => Ok(best.unwrap_or(SolveResult {
                nodes,
                ..SolveResult::status_only(SolveStatus::Infeasible)
            })),
            Err(SolverError::NodeLimit { limit, .. }) => Err(SolverError::NodeLimit {
                limit,
                best: best.map(Box::new),
            }),
            Err(e) => Err(e),
        }
    }
}

impl SolverAdapter for BranchAndBound {
    fn name(&self) -> &'static str {
        "bundled"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            milp: true,
            lp: true,
        }
    }

    fn solve_with_hint(
        &mut self,
        model: &LinearModel,
        hint: &[(VarId, f64)],
    ) -> Result<SolveResult, SolverError> {
        self.solve_impl(model, hint)
    }
}

/// microlp's native MIP search.
#[derive(Debug, Clone)]
pub struct MicrolpMip {
    pub node_limit: Option<u64>,
}

impl Default for MicrolpMip {
    fn default() -> Self {
        Self {
            node_limit: Some(2_000_000),
        }
    }
}

impl SolverAdapter for MicrolpMip {
    fn name(&self) -> &'static str {
        "microlp"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            milp: true,
            lp: true,
        }
    }

    fn solve_with_hint(
        &mut self,
        model: &LinearModel,
        hint: &[(VarId, f64)],
    ) -> Result<SolveResult, SolverError> {
        check(model)?;
        let (problem, vars) = build_problem(model, false, &[]);
        let mut options = microlp::SolveOptions::default();
        options.node_limit = self.node_limit;
        if !hint.is_empty() {
            options.warm_start = Some(hint.iter().map(|(v, x)| (vars[v.0], *x)).collect());
        }
        let outcome = problem.solve_with(options);
        match map_outcome(outcome.clone()) {
            Ok(Some(s)) => {
                let mut values: Vec<f64> = vars.iter().map(|v| s.var_value_raw(*v)).collect();
                let bins = binaries(model);
                if !bins.is_empty() {
                    let fixed = rounded_binaries(&bins, &values);
                    match polish(model, &fixed) {
                        Some((_, polished)) => values = polished,
                        None => {
                            for (var, val) in fixed {
                                values[var.0] = val;
                            }
                        }
                    }
                }
                Ok(SolveResult {
                    status: SolveStatus::Optimal,
                    objective: model.objective_value(&values),
                    values,
                    nodes: s.stats().nodes_solved as usize,
                })
            }
            Ok(None) => match outcome {
                Ok(SolveOutcome::Interrupted(_)) => Err(SolverError::NodeLimit {
                    limit: self.node_limit.unwrap_or(0) as usize,
                    best: None,
                }),
                _ => Err(failure(&outcome)),
            },
            Err(status) => Ok(SolveResult::status_only(status)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::RowFamily;

    /// Knapsack: max 5a + 4b + 3c  s.t. 2a + 3b + c ≤ 4 → a = c = 1, value 8.
    fn knapsack() -> LinearModel {
        let mut m = LinearModel::new("knap", Direction::Maximize);
        let a = m.binary("a");
        let b = m.binary("b");
        let c = m.binary("c");
        m.add_objective(a, 5.0);
        m.add_objective(b, 4.0);
        m.add_objective(c, 3.0);
        m.add_row(
            "cap",
            RowFamily::Bound,
            vec![(a, 2.0), (b, 3.0), (c, 1.0)],
            vec![],
            Sense::Le,
            4.0,
        );
        m
    }

    #[test]
    fn adapters_agree_on_knapsack() {
        for &name in ADAPTER_NAMES {
            let mut s = adapter_by_name(name).unwrap();
            let r = s.solve(&knapsack()).unwrap();
            assert_eq!(r.status, SolveStatus::Optimal, "{name}");
            assert!((r.objective - 8.0).abs() < 1e-9, "{name}");
            assert_eq!(r.values, vec![1.0, 0.0, 1.0], "{name}");
        }
    }

    #[test]
    fn reports_infeasible_and_unbounded() {
        let mut m = LinearModel::new("inf", Direction::Minimize);
        let x = m.binary("x");
        m.add_row("r", RowFamily::Bound, vec![(x, 1.0)], vec![], Sense::Ge, 2.0);
        let mut u = LinearModel::new("unb", Direction::Minimize);
        let y = u.continuous("y", f64::NEG_INFINITY, 0.0);
        u.add_objective(y, 1.0);
        for &name in ADAPTER_NAMES {
            let mut s = adapter_by_name(name).unwrap();
            assert_eq!(s.solve(&m).unwrap().status, SolveStatus::Infeasible);
            assert_eq!(s.solve(&u).unwrap().status, SolveStatus::Unbounded);
        }
    }

    #[test]
    fn hint_does_not_change_optimum() {
        let m = knapsack();
        let mut s = BranchAndBound::default();
        let hint = [(VarId(0), 0.0), (VarId(1), 1.0), (VarId(2), 1.0)];
        let r = s.solve_with_hint(&m, &hint).unwrap();
        assert!((r.objective - 8.0).abs() < 1e-9);
    }

    #[test]
    fn unknown_adapter_is_an_error() {
        assert!(matches!(
            adapter_by_name("gurobi"),
            Err(SolverError::UnknownAdapter(_))
        ));
    }
}
