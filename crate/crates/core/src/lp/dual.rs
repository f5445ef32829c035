//! Explicit LP dualisation of a parametric minimisation model.
//!
//! The primal is `min cᵀv + c₀  s.t.  A v (≤,≥,=) b(θ)` with
//! `b(θ) = rhs − Σ a_p θ_p`. Finite non-zero variable bounds become explicit
//! rows so every primal variable is either non-negative or free. The dual is
//! `max Σ λ_k b_k(θ) + c₀` subject to `Aᵀλ ≤ c` (non-negative columns) or
//! `Aᵀλ = c` (free columns), with `λ ≥ 0` on `≥` rows, `λ ≤ 0` on `≤` rows and
//! `λ` free on equalities. Its feasible region does not depend on θ.

use std::collections::BTreeMap;

use thiserror::Error;

use super::model::{Direction, LinearModel, Param, RowFamily, RowId, Sense, VarId, VarKind};

#[derive(Debug, Error, PartialEq)]
pub enum DualError {
    #[error("only minimisation models can be dualised")]
    NotMinimize,
    #[error("variable {0} is integer; dualise the continuous relaxation only")]
    IntegerVariable(String),
}

/// Where a dual variable comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DualSource {
    Row(RowId),
    UpperBound(VarId),
    LowerBound(VarId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualVarInfo {
    pub source: DualSource,
    pub tag: String,
    pub family: RowFamily,
    pub sense: Sense,
    pub rhs: f64,
    pub params: Vec<(Param, f64)>,
}

/// Dual value as an affine function of the parameters:
/// `constant + Σ coeffs[p]·θ_p`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineValue {
    pub constant: f64,
    pub coeffs: BTreeMap<Param, f64>,
}

impl AffineValue {
    pub fn eval(&self, value: &dyn Fn(Param) -> f64) -> f64 {
        self.constant + self.coeffs.iter().map(|(p, c)| c * value(*p)).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct DualProgram {
    /// Dual LP with a zero objective; use [`DualProgram::instantiate`].
    pub model: LinearModel,
    pub info: Vec<DualVarInfo>,
    primal_constant: f64,
    /// Primal cost vector and column kinds, for residual checks.
    costs: Vec<f64>,
    free_cols: Vec<bool>,
    columns: Vec<Vec<(usize, f64)>>,
}

impl DualProgram {
    pub fn dualize(primal: &LinearModel) -> Result<Self, DualError> {
        if primal.direction != Direction::Minimize {
            return Err(DualError::NotMinimize);
        }
        if let Some(v) = primal.vars.iter().find(|v| v.kind != VarKind::Continuous) {
            return Err(DualError::IntegerVariable(v.name.clone()));
        }
        let n = primal.num_vars();
        let mut info = Vec::new();
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (k, row) in primal.rows.iter().enumerate() {
            for (v, c) in &row.terms {
                columns[v.0].push((info.len(), *c));
            }
            info.push(DualVarInfo {
                source: DualSource::Row(RowId(k)),
                tag: row.tag.clone(),
                family: row.family,
                sense: row.sense,
                rhs: row.rhs,
                params: row.params.clone(),
            });
        }
        let mut free_cols = vec![false; n];
        for (j, def) in primal.vars.iter().enumerate() {
            if def.lb == 0.0 {
                free_cols[j] = false;
            } else {
                free_cols[j] = true;
                if def.lb.is_finite() {
                    columns[j].push((info.len(), 1.0));
                    info.push(DualVarInfo {
                        source: DualSource::LowerBound(VarId(j)),
                        tag: format!("lb:{}", def.name),
                        family: RowFamily::Bound,
                        sense: Sense::Ge,
                        rhs: def.lb,
                        params: vec![],
                    });
                }
            }
            if def.ub.is_finite() {
                columns[j].push((info.len(), 1.0));
                info.push(DualVarInfo {
                    source: DualSource::UpperBound(VarId(j)),
                    tag: format!("ub:{}", def.name),
                    family: RowFamily::Bound,
                    sense: Sense::Le,
                    rhs: def.ub,
                    params: vec![],
                });
            }
        }

        let mut model = LinearModel::new(format!("dual:{}", primal.name), Direction::Maximize);
        for d in &info {
            let (lb, ub) = match d.sense {
                Sense::Ge => (0.0, f64::INFINITY),
                Sense::Le => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (f64::NEG_INFINITY, f64::INFINITY),
            };
            model.continuous(format!("dual:{}", d.tag), lb, ub);
        }
        let costs = primal.dense_objective();
        for (j, def) in primal.vars.iter().enumerate() {
            let sense = if free_cols[j] { Sense::Eq } else { Sense::Le };
            model.add_row(
                format!("col:{}", def.name),
                RowFamily::Bound,
                columns[j].iter().map(|(k, c)| (VarId(*k), *c)).collect(),
                vec![],
                sense,
                costs[j],
            );
        }
        model.obj_constant = primal.obj_constant;
        Ok(Self {
            model,
            info,
            primal_constant: primal.obj_constant,
            costs,
            free_cols,
            columns,
        })
    }

    pub fn num_duals(&self) -> usize {
        self.info.len()
    }

    /// Dual LP with the objective `Σ λ_k b_k(θ) + c₀` for the given parameters.
    pub fn instantiate(&self, value: &dyn Fn(Param) -> f64) -> LinearModel {
        let mut m = self.model.clone();
        m.objective.clear();
        for (k, d) in self.info.iter().enumerate() {
            let b = d.rhs - d.params.iter().map(|(p, c)| c * value(*p)).sum::<f64>();
            m.add_objective(VarId(k), b);
        }
        m
    }

    /// Dual objective at `lambda` as an affine function of the parameters.
    pub fn objective_affine(&self, lambda: &[f64]) -> AffineValue {
        let mut out = AffineValue {
            constant: self.primal_constant,
            coeffs: BTreeMap::new(),
        };
        for (d, l) in self.info.iter().zip(lambda) {
            if *l == 0.0 {
                continue;
            }
            out.constant += l * d.rhs;
            for (p, c) in &d.params {
                *out.coeffs.entry(*p).or_insert(0.0) -= l * c;
            }
        }
        out.coeffs.retain(|_, c| *c != 0.0);
        out
    }

    /// Largest violation of dual feasibility (sign restrictions and column
    /// rows) at `lambda`.
    pub fn max_residual(&self, lambda: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (d, l) in self.info.iter().zip(lambda) {
            worst = worst.max(match d.sense {
                Sense::Ge => -l,
                Sense::Le => *l,
                Sense::Eq => 0.0,
            });
        }
        for (j, col) in self.columns.iter().enumerate() {
            let reduced = self.costs[j] - col.iter().map(|(k, c)| c * lambda[*k]).sum::<f64>();
            worst = worst.max(if self.free_cols[j] { reduced.abs() } else { -reduced });
        }
        worst
    }

    /// Multiplier in the non-negative sign convention of the formulation:
    /// `λ` on `≥` rows, `−λ` on `≤` and equality rows.
    pub fn formulation_multiplier(&self, k: usize, lambda: &[f64]) -> f64 {
        match self.info[k].sense {
            Sense::Ge => lambda[k],
            Sense::Le | Sense::Eq => -lambda[k],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{BranchAndBound, SolverAdapter};

    /// min 2a + 3b  s.t. a + b ≥ θ, a ≤ 4, b ≥ 0.
    fn tiny() -> LinearModel {
        let mut m = LinearModel::new("tiny", Direction::Minimize);
        let a = m.continuous("a", 0.0, 4.0);
        let b = m.continuous("b", 0.0, f64::INFINITY);
        m.add_objective(a, 2.0);
        m.add_objective(b, 3.0);
        m.add_row(
            "cover",
            RowFamily::Balance,
            vec![(a, 1.0), (b, 1.0)],
            vec![(Param::Wind { t: 0 }, -1.0)],
            Sense::Ge,
            0.0,
        );
        m
    }

    #[test]
    fn strong_duality_on_tiny_lp() {
        let primal = tiny();
        let dual = DualProgram::dualize(&primal).unwrap();
        let mut solver = BranchAndBound::default();
        for theta in [0.0, 1.0, 4.0, 6.5] {
            let val = |_: Param| theta;
            let p = solver.solve(&primal.bind(&val)).unwrap();
            let d = solver.solve(&dual.instantiate(&val)).unwrap();
            let expected = if theta <= 4.0 { 2.0 * theta } else { 8.0 + 3.0 * (theta - 4.0) };
            assert!((p.objective - expected).abs() < 1e-9);
            assert!((d.objective - expected).abs() < 1e-9);
            assert!(dual.max_residual(&d.values) < 1e-9);
            let affine = dual.objective_affine(&d.values);
            assert!((affine.eval(&val) - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn affine_value_is_a_lower_bound_elsewhere() {
        let primal = tiny();
        let dual = DualProgram::dualize(&primal).unwrap();
        let mut solver = BranchAndBound::default();
        let d = solver.solve(&dual.instantiate(&|_| 1.0)).unwrap();
        let affine = dual.objective_affine(&d.values);
        for theta in [0.0, 2.0, 5.0, 9.0] {
            let p = solver.solve(&primal.bind(&|_| theta)).unwrap();
            assert!(affine.eval(&|_| theta) <= p.objective + 1e-9);
        }
    }

    #[test]
    fn rejects_integer_models() {
        let mut m = LinearModel::new("mip", Direction::Minimize);
        m.binary("x");
        assert!(matches!(
            DualProgram::dualize(&m),
            Err(DualError::IntegerVariable(_))
        ));
    }
}
