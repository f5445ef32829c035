use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarDef {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
    /// Branching priority for binaries; higher is branched first.
    #[serde(default)]
    pub priority: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Minimize,
    Maximize,
}

/// A right-hand-side parameter: a first-stage commitment held fixed, or the
/// available wind of one hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Param {
    Commit { t: usize, unit: usize },
    Wind { t: usize },
}

/// Row families of the UC model. Dispatch rows also carry the name of their
/// dual multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowFamily {
    /// x_t − x_{t−1} = y_t − z_t
    CommitLogic,
    /// y_t + z_t ≤ 1
    StartStopExclusive,
    MinUp,
    MinDown,
    /// α: p ≥ Pmin·x
    MinOutput,
    /// β: p + r ≤ Pmax·x
    MaxOutput,
    /// γ: p_{t−1} − p_t ≤ RD
    RampDown,
    /// δ: p_t − p_{t−1} ≤ RU
    RampUp,
    /// ζ: Σp + wg = d
    Balance,
    /// η: wg ≤ w
    WindLimit,
    /// μ: headroom of the other units covers the loss of this one
    Reserve,
    /// ρ: learned frequency-security row
    LrSecurity,
    /// Secant of the piecewise-linear generation cost.
    CostSegment,
    /// Robust epigraph θ ≥ cost of one wind vertex.
    Epigraph,
    OptimalityCut,
    FeasibilityCut,
    /// Explicit variable bound (introduced by dualisation).
    Bound,
}

impl RowFamily {
    /// Short label and dual symbol of the family.
    pub fn label(self) -> (&'static str, Option<&'static str>) {
        match self {
            RowFamily::CommitLogic => ("commit_logic", None),
            RowFamily::StartStopExclusive => ("start_stop", None),
            RowFamily::MinUp => ("min_up", None),
            RowFamily::MinDown => ("min_down", None),
            RowFamily::MinOutput => ("min_output", Some("alpha")),
            RowFamily::MaxOutput => ("max_output", Some("beta")),
            RowFamily::RampDown => ("ramp_down", Some("gamma")),
            RowFamily::RampUp => ("ramp_up", Some("delta")),
            RowFamily::Balance => ("balance", Some("zeta")),
            RowFamily::WindLimit => ("wind_limit", Some("eta")),
            RowFamily::Reserve => ("reserve", Some("mu")),
            RowFamily::LrSecurity => ("lr_security", Some("rho")),
            RowFamily::CostSegment => ("cost_segment", None),
            RowFamily::Epigraph => ("epigraph", None),
            RowFamily::OptimalityCut => ("optimality_cut", None),
            RowFamily::FeasibilityCut => ("feasibility_cut", None),
            RowFamily::Bound => ("bound", None),
        }
    }
}

/// `Σ terms·v + Σ params·θ  (sense)  rhs`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub tag: String,
    pub family: RowFamily,
    pub terms: Vec<(VarId, f64)>,
    pub params: Vec<(Param, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    /// Right-hand side with the parameters moved across.
    pub fn bound_rhs(&self, value: &dyn Fn(Param) -> f64) -> f64 {
        self.rhs - self.params.iter().map(|(p, c)| c * value(*p)).sum::<f64>()
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * x[v.0]).sum()
    }

    /// Signed violation of the row at `x` (0 when satisfied).
    pub fn violation(&self, x: &[f64], rhs: f64) -> f64 {
        let a = self.activity(x);
        match self.sense {
            Sense::Le => (a - rhs).max(0.0),
            Sense::Ge => (rhs - a).max(0.0),
            Sense::Eq => (a - rhs).abs(),
        }
    }
}

/// Solver-agnostic linear or mixed-integer model.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub name: String,
    pub direction: Direction,
    pub vars: Vec<VarDef>,
    pub rows: Vec<Row>,
    pub objective: Vec<(VarId, f64)>,
    pub obj_constant: f64,
    tags: HashSet<String>,
}

impl LinearModel {
    pub fn new(name: impl Into<String>, direction: Direction) -> Self {
        Self {
            name: name.into(),
            direction,
            vars: Vec::new(),
            rows: Vec::new(),
            objective: Vec::new(),
            obj_constant: 0.0,
            tags: HashSet::new(),
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lb: f64, ub: f64) -> VarId {
        let (lb, ub) = match kind {
            VarKind::Binary => (lb.max(0.0), ub.min(1.0)),
            VarKind::Continuous => (lb, ub),
        };
        self.vars.push(VarDef {
            name: name.into(),
            kind,
            lb,
            ub,
            priority: 0,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    pub fn continuous(&mut self, name: impl Into<String>, lb: f64, ub: f64) -> VarId {
        self.add_var(name, VarKind::Continuous, lb, ub)
    }

    pub fn set_priority(&mut self, v: VarId, priority: u8) {
        self.vars[v.0].priority = priority;
    }

    /// Appends a row. Zero coefficients are dropped and repeated variables
    /// merged.
    ///
    /// Panics on a duplicate tag or an undeclared variable: both are bugs in
    /// the caller's builder.
    pub fn add_row(
        &mut self,
        tag: impl Into<String>,
        family: RowFamily,
        terms: Vec<(VarId, f64)>,
        params: Vec<(Param, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> RowId {
        let tag = tag.into();
        assert!(self.tags.insert(tag.clone()), "duplicate row tag {tag}");
        let terms = merge_terms(terms);
        for (v, _) in &terms {
            assert!(v.0 < self.vars.len(), "row {tag} references undeclared var");
        }
        let mut params: Vec<(Param, f64)> = params.into_iter().filter(|(_, c)| *c != 0.0).collect();
        params.sort_by_key(|a| a.0);
        params.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        self.rows.push(Row {
            tag,
            family,
            terms,
            params,
            sense,
            rhs,
        });
        RowId(self.rows.len() - 1)
    }

    pub fn add_objective(&mut self, var: VarId, coeff: f64) {
        if coeff != 0.0 {
            self.objective.push((var, coeff));
        }
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn has_params(&self) -> bool {
        self.rows.iter().any(|r| !r.params.is_empty())
    }

    pub fn has_integers(&self) -> bool {
        self.vars.iter().any(|v| v.kind == VarKind::Binary)
    }

    pub fn row_by_tag(&self, tag: &str) -> Option<RowId> {
        self.rows.iter().position(|r| r.tag == tag).map(RowId)
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    /// Objective coefficients as a dense vector (repeated entries summed).
    pub fn dense_objective(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.vars.len()];
        for (v, k) in &self.objective {
            c[v.0] += k;
        }
        c
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.obj_constant + self.objective.iter().map(|(v, c)| c * x[v.0]).sum::<f64>()
    }

    /// Copy with all parameters substituted into the right-hand sides.
    pub fn bind(&self, value: &dyn Fn(Param) -> f64) -> LinearModel {
        let mut out = self.clone();
        for row in &mut out.rows {
            row.rhs = row.bound_rhs(value);
            row.params.clear();
        }
        out
    }

    /// Largest bound or row violation of `x` (parameters must be bound).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, def) in x.iter().zip(&self.vars) {
            worst = worst.max(def.lb - v).max(v - def.ub);
            if def.kind == VarKind::Binary {
                worst = worst.max((v - v.round()).abs());
            }
        }
        for row in &self.rows {
            debug_assert!(row.params.is_empty());
            worst = worst.max(row.violation(x, row.rhs));
        }
        worst
    }

    /// Checks the structural invariants: declared variables, unique tags,
    /// finite data and consistent bounds.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = HashSet::new();
        for row in &self.rows {
            if !seen.insert(row.tag.as_str()) {
                return Err(format!("duplicate tag {}", row.tag));
            }
            if !row.rhs.is_finite() {
                return Err(format!("row {} has non-finite rhs", row.tag));
            }
            for (v, c) in &row.terms {
                if v.0 >= self.vars.len() {
                    return Err(format!("row {} references undeclared var", row.tag));
                }
                if !c.is_finite() {
                    return Err(format!("row {} has non-finite coefficient", row.tag));
                }
            }
        }
        for v in &self.vars {
            if v.lb > v.ub || v.lb.is_nan() || v.ub.is_nan() {
                return Err(format!("var {} has inconsistent bounds", v.name));
            }
        }
        for (v, c) in &self.objective {
            if v.0 >= self.vars.len() || !c.is_finite() {
                return Err("bad objective entry".into());
            }
        }
        Ok(())
    }
}

fn merge_terms(mut terms: Vec<(VarId, f64)>) -> Vec<(VarId, f64)> {
    terms.sort_by_key(|t| t.0);
    let mut out: Vec<(VarId, f64)> = Vec::with_capacity(terms.len());
    for (v, c) in terms {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += c,
            _ => out.push((v, c)),
        }
    }
    out.retain(|(_, c)| *c != 0.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_repeated_terms_and_drops_zeros() {
        let mut m = LinearModel::new("t", Direction::Minimize);
        let a = m.continuous("a", 0.0, 1.0);
        let b = m.continuous("b", 0.0, 1.0);
        m.add_row(
            "r",
            RowFamily::Balance,
            vec![(b, 1.0), (a, 2.0), (b, -1.0), (a, 1.0)],
            vec![],
            Sense::Le,
            1.0,
        );
        assert_eq!(m.rows[0].terms, vec![(a, 3.0)]);
    }

    #[test]
    #[should_panic(expected = "duplicate row tag")]
    fn duplicate_tags_rejected() {
        let mut m = LinearModel::new("t", Direction::Minimize);
        let a = m.continuous("a", 0.0, 1.0);
        m.add_row("r", RowFamily::Balance, vec![(a, 1.0)], vec![], Sense::Le, 1.0);
        m.add_row("r", RowFamily::Balance, vec![(a, 1.0)], vec![], Sense::Le, 1.0);
    }

    #[test]
    fn bind_moves_params_to_rhs() {
        let mut m = LinearModel::new("t", Direction::Minimize);
        let a = m.continuous("a", 0.0, 10.0);
        m.add_row(
            "r",
            RowFamily::MinOutput,
            vec![(a, 1.0)],
            vec![(Param::Commit { t: 0, unit: 0 }, -3.0)],
            Sense::Ge,
            0.0,
        );
        let bound = m.bind(&|_| 1.0);
        assert_eq!(bound.rows[0].rhs, 3.0);
        assert!(bound.rows[0].params.is_empty());
        assert!(!bound.has_params());
    }
}
