//! Adapter over the HiGHS MILP/LP solver (`highs` feature).

use std::num::NonZeroU32;

use highs::{HighsModelStatus, RowProblem};

use super::{check, Capabilities, SolveResult, SolveStatus, SolverAdapter, SolverError};
use crate::lp::{Direction, LinearModel, Sense, VarId, VarKind};

/// Single-threaded HiGHS with a tight MIP gap, so runs are reproducible and
/// optima match the bundled search.
#[derive(Debug, Clone)]
pub struct HighsSolver {
    pub mip_rel_gap: f64,
    pub presolve: bool,
}

impl Default for HighsSolver {
    fn default() -> Self {
        Self {
            mip_rel_gap: 1e-9,
            presolve: true,
        }
    }
}

impl HighsSolver {
    fn run(&self, model: &LinearModel, presolve: bool) -> Result<(HighsModelStatus, Vec<f64>, usize), SolverError> {
        let mut pb = RowProblem::default();
        let cost = model.dense_objective();
        let cols: Vec<_> = model
            .vars
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let integer = v.kind == VarKind::Binary;
                pb.add_column_with_integrality(cost[j], v.lb..=v.ub, integer)
            })
            .collect();
        for row in &model.rows {
            let terms: Vec<_> = row.terms.iter().map(|(v, k)| (cols[v.0], *k)).collect();
            match row.sense {
                Sense::Le => pb.add_row(..=row.rhs, terms),
                Sense::Ge => pb.add_row(row.rhs.., terms),
                Sense::Eq => pb.add_row(row.rhs..=row.rhs, terms),
            }
        }
        let sense = match model.direction {
            Direction::Minimize => highs::Sense::Minimise,
            Direction::Maximize => highs::Sense::Maximise,
        };
        let mut m = pb
            .try_optimise(sense)
            .map_err(|e| SolverError::Failure(format!("HiGHS load: {e:?}")))?;
        m.make_quiet();
        m.set_threads(NonZeroU32::MIN);
        m.set_option("random_seed", 0);
        m.set_option("mip_rel_gap", self.mip_rel_gap);
        m.set_option("mip_abs_gap", 1e-9);
        m.set_option("presolve", if presolve { "on" } else { "off" });
        let solved = m
            .try_solve()
            .map_err(|e| SolverError::Failure(format!("HiGHS run: {e:?}")))?;
        let status = solved.status();
        let nodes = solved
            .int_info_value(c"mip_node_count")
            .map_or(0, |n| n.max(0) as usize);
        let values = solved.get_solution().columns().to_vec();
        Ok((status, values, nodes))
    }
}

impl SolverAdapter for HighsSolver {
    fn name(&self) -> &'static str {
        "highs"
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
        _hint: &[(VarId, f64)],
    ) -> Result<SolveResult, SolverError> {
        check(model)?;
        let (mut status, mut values, mut nodes) = self.run(model, self.presolve)?;
        if status == HighsModelStatus::UnboundedOrInfeasible && self.presolve {
            (status, values, nodes) = self.run(model, false)?;
        }
        match status {
            HighsModelStatus::Optimal | HighsModelStatus::ModelEmpty => {
                if values.len() != model.num_vars() {
                    values = vec![0.0; model.num_vars()];
                }
                for (j, v) in model.vars.iter().enumerate() {
                    if v.kind == VarKind::Binary {
                        values[j] = values[j].round();
                    }
                }
                Ok(SolveResult {
                    status: SolveStatus::Optimal,
                    objective: model.objective_value(&values),
                    values,
                    nodes,
                })
            }
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => {
                Ok(SolveResult::status_only(SolveStatus::Infeasible))
            }
            HighsModelStatus::Unbounded => Ok(SolveResult::status_only(SolveStatus::Unbounded)),
            other => Err(SolverError::Failure(format!("HiGHS status {other:?}"))),
        }
    }
}
