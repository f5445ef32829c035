//! Builders for the UC constraint system: commitment logic, dispatch limits,
//! the conventional reserve rows and the learned frequency-security rows.
//!
//! Builders append to a [`LinearModel`]. Dispatch-side builders take the
//! commitment either as master variables ([`CommitRef::Vars`]) or as
//! right-hand-side parameters ([`CommitRef::Params`]); the wind is either a
//! fixed profile or a parameter per hour.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GeneratorSpec, SystemSpec};
pub use crate::lr::LrModel;
use crate::lp::{LinearModel, Param, RowFamily, Sense, VarId};

#[derive(Debug, Error, PartialEq)]
pub enum UcError {
    #[error("unit {unit} has p_min = p_max; cost reduces to the single point {cost}")]
    DegenerateRange { unit: String, cost: f64 },
    #[error("need at least one cost segment")]
    NoSegments,
    #[error(
        "big-M {big_m} too small for unit {unit}: the row needs {required} \
         (left-hand side provably >= {lower_bound})"
    )]
    BigMTooSmall {
        unit: String,
        big_m: f64,
        required: f64,
        lower_bound: f64,
    },
    #[error("model coefficients must be finite")]
    NonFiniteModel,
    #[error("reserve multiplier must be >= 0, got {0}")]
    NegativeMultiplier(f64),
}

/// Piecewise-linear interpolation of a generation cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwlCost {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl PwlCost {
    /// A single cost point, used when the output range is degenerate.
    pub fn point(p: f64, value: f64) -> Self {
        Self {
            breakpoints: vec![p],
            values: vec![value],
        }
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.breakpoints
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(b, v)| (v[1] - v[0]) / (b[1] - b[0]))
            .collect()
    }

    /// `(slope, intercept)` of every segment's line. A single point yields
    /// one flat line.
    pub fn segments(&self) -> Vec<(f64, f64)> {
        if self.breakpoints.len() < 2 {
            return vec![(0.0, self.values[0])];
        }
        self.slopes()
            .into_iter()
            .zip(self.breakpoints.iter().zip(&self.values))
            .map(|(s, (b, v))| (s, v - s * b))
            .collect()
    }

    /// Linear interpolation, clamped to the breakpoint range.
    pub fn eval(&self, p: f64) -> f64 {
        let b = &self.breakpoints;
        if b.len() < 2 || p <= b[0] {
            return self.values[0];
        }
        let k = b.partition_point(|x| *x < p).clamp(1, b.len() - 1);
        let w = (p - b[k - 1]) / (b[k] - b[k - 1]);
        self.values[k - 1] + w.min(1.0) * (self.values[k] - self.values[k - 1])
    }
}

/// Secant interpolation of the quadratic cost on `n_segments` equal-width
/// pieces of `[p_min, p_max]`.
pub fn piecewise_cost(gen: &GeneratorSpec, n_segments: usize) -> Result<PwlCost, UcError> {
    if n_segments == 0 {
        return Err(UcError::NoSegments);
    }
    let q = gen.cost_quadratic;
    if gen.p_min == gen.p_max {
        return Err(UcError::DegenerateRange {
            unit: gen.id.clone(),
            cost: q.eval(gen.p_min),
        });
    }
    let width = (gen.p_max - gen.p_min) / n_segments as f64;
    let breakpoints: Vec<f64> = (0..=n_segments)
        .map(|k| {
            if k == n_segments {
                gen.p_max
            } else {
                gen.p_min + k as f64 * width
            }
        })
        .collect();
    let values = breakpoints.iter().map(|&p| q.eval(p)).collect();
    Ok(PwlCost {
        breakpoints,
        values,
    })
}

fn cost_curve(gen: &GeneratorSpec, n_segments: usize) -> Result<PwlCost, UcError> {
    match piecewise_cost(gen, n_segments) {
        Err(UcError::DegenerateRange { cost, .. }) => Ok(PwlCost::point(gen.p_min, cost)),
        other => other,
    }
}

/// On/off state per hour and unit, indexed `[t][i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitmentSchedule {
    pub on: Vec<Vec<bool>>,
}

impl CommitmentSchedule {
    pub fn all(horizon: usize, units: usize, on: bool) -> Self {
        Self {
            on: vec![vec![on; units]; horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.on.len()
    }

    pub fn is_on(&self, t: usize, i: usize) -> bool {
        self.on[t][i]
    }

    pub fn value(&self, t: usize, i: usize) -> f64 {
        if self.on[t][i] {
            1.0
        } else {
            0.0
        }
    }

    /// Binder for `Param::Commit`; other parameters evaluate to 0.
    pub fn param_value(&self, p: Param) -> f64 {
        match p {
            Param::Commit { t, unit } => self.value(t, unit),
            Param::Wind { .. } => 0.0,
        }
    }

    /// Start-ups implied by the schedule and the initial states.
    pub fn startups(&self, gens: &[GeneratorSpec]) -> Vec<Vec<bool>> {
        let mut prev: Vec<bool> = gens.iter().map(|g| g.initial_on).collect();
        self.on
            .iter()
            .map(|row| {
                let s = row.iter().zip(&prev).map(|(&on, &was)| on && !was).collect();
                prev = row.clone();
                s
            })
            .collect()
    }

    pub fn startup_cost(&self, gens: &[GeneratorSpec]) -> f64 {
        self.startups(gens)
            .iter()
            .map(|row| {
                row.iter()
                    .zip(gens)
                    .filter(|(s, _)| **s)
                    .map(|(_, g)| g.startup_cost)
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn online(&self, t: usize) -> Vec<usize> {
        (0..self.on[t].len()).filter(|&i| self.on[t][i]).collect()
    }

    /// Schedule as rows of 0/1 per hour.
    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        self.on
            .iter()
            .map(|r| r.iter().map(|&b| b as u8).collect())
            .collect()
    }
}

/// Commitment variables, indexed `[t][i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommitVars {
    pub x: Vec<Vec<VarId>>,
    pub y: Vec<Vec<VarId>>,
    pub z: Vec<Vec<VarId>>,
}

impl CommitVars {
    pub fn schedule(&self, values: &[f64]) -> CommitmentSchedule {
        CommitmentSchedule {
            on: self
                .x
                .iter()
                .map(|row| row.iter().map(|v| values[v.0] > 0.5).collect())
                .collect(),
        }
    }

    /// `(var, value)` pairs fixing x, y and z to a schedule.
    pub fn hint(&self, sched: &CommitmentSchedule, gens: &[GeneratorSpec]) -> Vec<(VarId, f64)> {
        let mut prev: Vec<bool> = gens.iter().map(|g| g.initial_on).collect();
        let mut out = Vec::new();
        for t in 0..self.x.len() {
            for i in 0..gens.len() {
                let on = sched.on[t][i];
                out.push((self.x[t][i], on as u8 as f64));
                out.push((self.y[t][i], (on && !prev[i]) as u8 as f64));
                out.push((self.z[t][i], (!on && prev[i]) as u8 as f64));
                prev[i] = on;
            }
        }
        out
    }
}

fn tag(prefix: &str, family: RowFamily, idx: impl std::fmt::Display) -> String {
    format!("{prefix}{}[{idx}]", family.label().0)
}

/// Commitment logic, start/stop exclusivity and minimum up/down windows
/// (truncated at the start of the horizon). The state before the first
/// hour comes from `GeneratorSpec::initial_on`.
pub fn build_commitment_block(
    m: &mut LinearModel,
    gens: &[GeneratorSpec],
    horizon: usize,
) -> CommitVars {
    let mut x = Vec::with_capacity(horizon);
    let mut y = Vec::with_capacity(horizon);
    let mut z = Vec::with_capacity(horizon);
    for t in 0..horizon {
        x.push(
            gens.iter()
                .map(|g| {
                    let v = m.binary(format!("x[{t},{}]", g.id));
                    m.set_priority(v, 1);
                    v
                })
                .collect::<Vec<_>>(),
        );
        y.push(gens.iter().map(|g| m.binary(format!("y[{t},{}]", g.id))).collect::<Vec<_>>());
        z.push(gens.iter().map(|g| m.binary(format!("z[{t},{}]", g.id))).collect::<Vec<_>>());
    }
    for t in 0..horizon {
        for (i, g) in gens.iter().enumerate() {
            let idx = format!("{t},{}", g.id);
            let mut terms = vec![(x[t][i], 1.0), (y[t][i], -1.0), (z[t][i], 1.0)];
            let mut rhs = 0.0;
            if t == 0 {
                rhs = if g.initial_on { 1.0 } else { 0.0 };
            } else {
                terms.push((x[t - 1][i], -1.0));
            }
            m.add_row(tag("", RowFamily::CommitLogic, &idx), RowFamily::CommitLogic, terms, vec![], Sense::Eq, rhs);
            m.add_row(
                tag("", RowFamily::StartStopExclusive, &idx),
                RowFamily::StartStopExclusive,
                vec![(y[t][i], 1.0), (z[t][i], 1.0)],
                vec![],
                Sense::Le,
                1.0,
            );
            let up_from = (t + 1).saturating_sub(g.min_up as usize);
            let mut terms: Vec<(VarId, f64)> = (up_from..=t).map(|s| (y[s][i], 1.0)).collect();
            terms.push((x[t][i], -1.0));
            m.add_row(tag("", RowFamily::MinUp, &idx), RowFamily::MinUp, terms, vec![], Sense::Le, 0.0);
            let down_from = (t + 1).saturating_sub(g.min_down as usize);
            let mut terms: Vec<(VarId, f64)> = (down_from..=t).map(|s| (z[s][i], 1.0)).collect();
            terms.push((x[t][i], 1.0));
            m.add_row(tag("", RowFamily::MinDown, &idx), RowFamily::MinDown, terms, vec![], Sense::Le, 1.0);
        }
    }
    CommitVars { x, y, z }
}

/// How dispatch rows see the commitment.
#[derive(Debug, Clone, Copy)]
pub enum CommitRef<'a> {
    Vars(&'a CommitVars),
    /// `Param::Commit { t, unit }` on the right-hand side.
    Params,
}

/// How dispatch rows see the available wind.
#[derive(Debug, Clone, Copy)]
pub enum WindRef<'a> {
    Fixed(&'a [f64]),
    /// `Param::Wind { t }` on the right-hand side.
    Params,
}

/// Terms of a row under construction; constants are moved to the rhs.
#[derive(Default)]
struct RowBuf {
    terms: Vec<(VarId, f64)>,
    params: Vec<(Param, f64)>,
    constant: f64,
}

impl RowBuf {
    fn var(&mut self, v: VarId, c: f64) -> &mut Self {
        self.terms.push((v, c));
        self
    }

    fn commit(&mut self, cr: CommitRef, t: usize, i: usize, c: f64) -> &mut Self {
        match cr {
            CommitRef::Vars(cv) => self.terms.push((cv.x[t][i], c)),
            CommitRef::Params => self.params.push((Param::Commit { t, unit: i }, c)),
        }
        self
    }

    fn wind(&mut self, wr: WindRef, t: usize, c: f64) -> &mut Self {
        match wr {
            WindRef::Fixed(w) => self.constant += c * w[t],
            WindRef::Params => self.params.push((Param::Wind { t }, c)),
        }
        self
    }

    fn add(
        &mut self,
        m: &mut LinearModel,
        tag: String,
        family: RowFamily,
        sense: Sense,
        rhs: f64,
    ) {
        let b = std::mem::take(self);
        m.add_row(tag, family, b.terms, b.params, sense, rhs - b.constant);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispatchOptions {
    pub n_segments: usize,
    /// Penalty (EUR/MWh) of the elastic slacks on balance, reserve and
    /// security rows; `None` keeps every row hard.
    pub elastic_penalty: Option<f64>,
    /// Prefix of every name and tag, for several copies in one model.
    pub prefix: String,
    /// Add generation cost and penalties to the model objective.
    pub add_objective: bool,
    /// Scale applied to generation cost in the objective (0 for a pure
    /// feasibility model).
    pub cost_weight: f64,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        Self {
            n_segments: 3,
            elastic_penalty: None,
            prefix: String::new(),
            add_objective: true,
            cost_weight: 1.0,
        }
    }
}

impl DispatchOptions {
    pub fn elastic(penalty: f64) -> Self {
        Self {
            elastic_penalty: Some(penalty),
            ..Self::default()
        }
    }
}

/// Dispatch variables, indexed `[t][i]` or `[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchVars {
    pub p: Vec<Vec<VarId>>,
    pub r: Vec<Vec<VarId>>,
    pub gc: Vec<Vec<VarId>>,
    pub wg: Vec<VarId>,
    /// Unserved demand and surplus generation (elastic only).
    pub shed: Vec<Option<VarId>>,
    pub spill: Vec<Option<VarId>>,
    /// Elastic slacks of reserve or security rows.
    pub slacks: Vec<VarId>,
    /// Generation cost expression `Σ gc`.
    pub cost_terms: Vec<(VarId, f64)>,
    pub prefix: String,
    pub penalty: Option<f64>,
    pub cost_weight: f64,
    add_objective: bool,
}

impl DispatchVars {
    /// Every elastic slack variable.
    pub fn all_slacks(&self) -> Vec<VarId> {
        self.shed
            .iter()
            .chain(&self.spill)
            .flatten()
            .copied()
            .chain(self.slacks.iter().copied())
            .collect()
    }

    pub fn total_slack(&self, values: &[f64]) -> f64 {
        self.all_slacks().iter().map(|v| values[v.0]).sum()
    }

    pub fn generation_cost(&self, values: &[f64]) -> f64 {
        self.cost_terms.iter().map(|(v, c)| c * values[v.0]).sum()
    }

    fn new_slack(&mut self, m: &mut LinearModel, name: String) -> Option<VarId> {
        let penalty = self.penalty?;
        let s = m.continuous(name, 0.0, f64::INFINITY);
        if self.add_objective {
            m.add_objective(s, penalty);
        }
        self.slacks.push(s);
        Some(s)
    }
}

/// Output limits, ramps, power balance, wind limit and the piecewise cost
/// epigraph. `r` is kept in the max-output rows with bounds `[0, 0]`.
pub fn build_dispatch_block(
    m: &mut LinearModel,
    gens: &[GeneratorSpec],
    system: &SystemSpec,
    commit: CommitRef,
    wind: WindRef,
    opts: &DispatchOptions,
) -> Result<DispatchVars, UcError> {
    let horizon = system.horizon;
    let pre = opts.prefix.as_str();
    let curves: Vec<PwlCost> = gens
        .iter()
        .map(|g| cost_curve(g, opts.n_segments))
        .collect::<Result<_, _>>()?;
    let mut dv = DispatchVars {
        p: Vec::with_capacity(horizon),
        r: Vec::with_capacity(horizon),
        gc: Vec::with_capacity(horizon),
        wg: Vec::with_capacity(horizon),
        shed: Vec::with_capacity(horizon),
        spill: Vec::with_capacity(horizon),
        slacks: Vec::new(),
        cost_terms: Vec::new(),
        prefix: opts.prefix.clone(),
        penalty: opts.elastic_penalty,
        cost_weight: opts.cost_weight,
        add_objective: opts.add_objective,
    };
    for t in 0..horizon {
        dv.p.push(gens.iter().map(|g| m.continuous(format!("{pre}p[{t},{}]", g.id), 0.0, f64::INFINITY)).collect());
        dv.r.push(gens.iter().map(|g| m.continuous(format!("{pre}r[{t},{}]", g.id), 0.0, 0.0)).collect());
        dv.gc.push(gens.iter().map(|g| m.continuous(format!("{pre}gc[{t},{}]", g.id), 0.0, f64::INFINITY)).collect());
        dv.wg.push(m.continuous(format!("{pre}wg[{t}]"), 0.0, f64::INFINITY));
        match opts.elastic_penalty {
            Some(pen) => {
                let shed = m.continuous(format!("{pre}shed[{t}]"), 0.0, f64::INFINITY);
                let spill = m.continuous(format!("{pre}spill[{t}]"), 0.0, f64::INFINITY);
                if opts.add_objective {
                    m.add_objective(shed, pen);
                    m.add_objective(spill, pen);
                }
                dv.shed.push(Some(shed));
                dv.spill.push(Some(spill));
            }
            None => {
                dv.shed.push(None);
                dv.spill.push(None);
            }
        }
    }
    let mut row = RowBuf::default();
    for t in 0..horizon {
        for (i, g) in gens.iter().enumerate() {
            let idx = format!("{t},{}", g.id);
            let (p, r, gc) = (dv.p[t][i], dv.r[t][i], dv.gc[t][i]);
            row.var(p, 1.0).commit(commit, t, i, -g.p_min);
            row.add(m, tag(pre, RowFamily::MinOutput, &idx), RowFamily::MinOutput, Sense::Ge, 0.0);
            row.var(p, 1.0).var(r, 1.0).commit(commit, t, i, -g.p_max);
            row.add(m, tag(pre, RowFamily::MaxOutput, &idx), RowFamily::MaxOutput, Sense::Le, 0.0);
            if t == 0 {
                row.var(p, -1.0);
                row.add(m, tag(pre, RowFamily::RampDown, &idx), RowFamily::RampDown, Sense::Le, g.ramp_down - g.initial_p);
                row.var(p, 1.0);
                row.add(m, tag(pre, RowFamily::RampUp, &idx), RowFamily::RampUp, Sense::Le, g.ramp_up + g.initial_p);
            } else {
                let prev = dv.p[t - 1][i];
                row.var(prev, 1.0).var(p, -1.0);
                row.add(m, tag(pre, RowFamily::RampDown, &idx), RowFamily::RampDown, Sense::Le, g.ramp_down);
                row.var(p, 1.0).var(prev, -1.0);
                row.add(m, tag(pre, RowFamily::RampUp, &idx), RowFamily::RampUp, Sense::Le, g.ramp_up);
            }
            for (k, (slope, intercept)) in curves[i].segments().into_iter().enumerate() {
                row.var(gc, 1.0).var(p, -slope).commit(commit, t, i, -intercept);
                row.add(m, tag(pre, RowFamily::CostSegment, format!("{idx},{k}")), RowFamily::CostSegment, Sense::Ge, 0.0);
            }
            dv.cost_terms.push((gc, 1.0));
            if opts.add_objective {
                m.add_objective(gc, opts.cost_weight);
            }
        }
        for &p in &dv.p[t] {
            row.var(p, 1.0);
        }
        row.var(dv.wg[t], 1.0);
        if let (Some(shed), Some(spill)) = (dv.shed[t], dv.spill[t]) {
            row.var(shed, 1.0).var(spill, -1.0);
        }
        row.add(m, tag(pre, RowFamily::Balance, t), RowFamily::Balance, Sense::Eq, system.demand[t]);
        row.var(dv.wg[t], 1.0).wind(wind, t, -1.0);
        row.add(m, tag(pre, RowFamily::WindLimit, t), RowFamily::WindLimit, Sense::Le, 0.0);
    }
    Ok(dv)
}

/// Loss-of-unit headroom rows
/// `Σ_{ii≠i}(Pmax_ii·x_ii − p_ii) ≥ multiplier·p_i` for every (t, i).
pub fn build_reserve_block(
    m: &mut LinearModel,
    gens: &[GeneratorSpec],
    commit: CommitRef,
    dv: &mut DispatchVars,
    multiplier: f64,
) -> Result<(), UcError> {
    if !(multiplier >= 0.0) {
        return Err(UcError::NegativeMultiplier(multiplier));
    }
    let pre = dv.prefix.clone();
    let mut row = RowBuf::default();
    for t in 0..dv.p.len() {
        for (i, g) in gens.iter().enumerate() {
            let idx = format!("{t},{}", g.id);
            for ii in (0..gens.len()).filter(|&ii| ii != i) {
                row.commit(commit, t, ii, gens[ii].p_max).var(dv.p[t][ii], -1.0);
            }
            row.var(dv.p[t][i], -multiplier);
            if let Some(s) = dv.new_slack(m, format!("{pre}s_res[{idx}]")) {
                row.var(s, 1.0);
            }
            row.add(m, tag(&pre, RowFamily::Reserve, &idx), RowFamily::Reserve, Sense::Ge, 0.0);
        }
    }
    Ok(())
}

/// Lower bound on the ungated left-hand side of unit `i`'s security row
/// when `i` is offline, with the big-M that makes the row vacuous there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BigMCertificate {
    pub unit: usize,
    pub lower_bound: f64,
    /// Smallest big-M that deactivates the row: `max(ψ − lower_bound, 0)`.
    pub required: f64,
}

/// Coefficient of `x_ii` in the rows of the other units:
/// `c1·H·M + c2·K + c5·Pmax`.
fn lr_commit_coeff(g: &GeneratorSpec, s_base: f64, lr: &LrModel) -> f64 {
    lr.c1 * g.stored_energy() + lr.c2 * g.normalized_gain(s_base) + lr.c5 * g.p_max
}

pub fn lr_big_m_certificates(
    gens: &[GeneratorSpec],
    system: &SystemSpec,
    lr: &LrModel,
) -> Vec<BigMCertificate> {
    (0..gens.len())
        .map(|i| {
            let mut lb = lr.c0;
            for (ii, g) in gens.iter().enumerate() {
                if ii == i {
                    continue;
                }
                let on = lr_commit_coeff(g, system.s_base, lr)
                    - (lr.c5 * g.p_max).max(lr.c5 * g.p_min);
                lb += on.min(0.0);
            }
            BigMCertificate {
                unit: i,
                lower_bound: lb,
                required: (lr.psi - lb).max(0.0),
            }
        })
        .collect()
}

/// Default big-M: one above the largest certified requirement.
pub fn default_big_m(gens: &[GeneratorSpec], system: &SystemSpec, lr: &LrModel) -> f64 {
    lr_big_m_certificates(gens, system, lr)
        .iter()
        .map(|c| c.required)
        .fold(0.0, f64::max)
        + 1.0
}

/// Learned security rows, one per (t, i):
/// `c0 + c1·Σ_{ii≠i} H·M·x + c2·Σ_{ii≠i} K·x + c3·p_i + (c4/d_t)·p_i
///  + c5·Σ_{ii≠i}(Pmax·x − p) + big_m·(1 − x_i) ≥ ψ`
/// with `K = k·M/S`. `big_m = None` uses [`default_big_m`].
pub fn build_lr_block(
    m: &mut LinearModel,
    gens: &[GeneratorSpec],
    system: &SystemSpec,
    commit: CommitRef,
    dv: &mut DispatchVars,
    lr: &LrModel,
    big_m: Option<f64>,
) -> Result<f64, UcError> {
    if !lr.is_finite() {
        return Err(UcError::NonFiniteModel);
    }
    let big_m = match big_m {
        Some(b) => {
            if let Some(c) = lr_big_m_certificates(gens, system, lr)
                .into_iter()
                .find(|c| b < c.required)
            {
                return Err(UcError::BigMTooSmall {
                    unit: gens[c.unit].id.clone(),
                    big_m: b,
                    required: c.required,
                    lower_bound: c.lower_bound,
                });
            }
            b
        }
        None => default_big_m(gens, system, lr),
    };
    let pre = dv.prefix.clone();
    let a: Vec<f64> = gens
        .iter()
        .map(|g| lr_commit_coeff(g, system.s_base, lr))
        .collect();
    let mut row = RowBuf::default();
    for t in 0..dv.p.len() {
        let d = system.demand[t];
        for (i, g) in gens.iter().enumerate() {
            let idx = format!("{t},{}", g.id);
            row.var(dv.p[t][i], lr.c3 + lr.c4 / d);
            for ii in (0..gens.len()).filter(|&ii| ii != i) {
                row.var(dv.p[t][ii], -lr.c5).commit(commit, t, ii, a[ii]);
            }
            row.commit(commit, t, i, -big_m);
            if let Some(s) = dv.new_slack(m, format!("{pre}s_lr[{idx}]")) {
                row.var(s, 1.0);
            }
            row.add(
                m,
                tag(&pre, RowFamily::LrSecurity, &idx),
                RowFamily::LrSecurity,
                Sense::Ge,
                lr.psi - lr.c0 - big_m,
            );
        }
    }
    Ok(big_m)
}

/// Which loss-of-unit protection accompanies the dispatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SecurityBlock {
    None,
    Reserve { multiplier: f64 },
    Lr { model: LrModel, big_m: Option<f64> },
}

impl SecurityBlock {
    pub fn label(&self) -> String {
        match self {
            SecurityBlock::None => "none".into(),
            SecurityBlock::Reserve { multiplier } => format!("reserve@{multiplier}"),
            SecurityBlock::Lr { model, .. } => format!("lr@{}", model.psi),
        }
    }
}

pub fn build_security_block(
    m: &mut LinearModel,
    gens: &[GeneratorSpec],
    system: &SystemSpec,
    commit: CommitRef,
    dv: &mut DispatchVars,
    block: &SecurityBlock,
) -> Result<(), UcError> {
    match block {
        SecurityBlock::None => Ok(()),
        SecurityBlock::Reserve { multiplier } => {
            build_reserve_block(m, gens, commit, dv, *multiplier)
        }
        SecurityBlock::Lr { model, big_m } => {
            build_lr_block(m, gens, system, commit, dv, model, *big_m).map(|_| ())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::QuadraticCost;

    fn gen(p_min: f64, p_max: f64, c: QuadraticCost) -> GeneratorSpec {
        GeneratorSpec {
            id: "g".into(),
            p_min,
            p_max,
            ramp_up: p_max,
            ramp_down: p_max,
            min_up: 1,
            min_down: 1,
            startup_cost: 0.0,
            cost_quadratic: c,
            inertia_h: 1.0,
            m_base: p_max.max(1.0),
            gov_gain: 1.0,
            gov_a1: 1.0,
            gov_a2: 0.0,
            gov_b1: 0.0,
            gov_b2: 0.0,
            dp_min: -1.0,
            dp_max: 1.0,
            initial_on: false,
            initial_p: 0.0,
        }
    }

    #[test]
    fn pwl_examples() {
        let sq = QuadraticCost { a: 0.0, b: 0.0, c: 1.0 };
        let pwl = piecewise_cost(&gen(0.0, 10.0, sq), 2).unwrap();
        assert_eq!(pwl.breakpoints, vec![0.0, 5.0, 10.0]);
        assert_eq!(pwl.values, vec![0.0, 25.0, 100.0]);
        assert_eq!(pwl.eval(2.5), 12.5);
        let lin = QuadraticCost { a: 3.0, b: 2.0, c: 0.0 };
        let pwl = piecewise_cost(&gen(1.0, 9.0, lin), 5).unwrap();
        for k in 0..=80 {
            let p = 1.0 + k as f64 * 0.1;
            assert!((pwl.eval(p) - lin.eval(p)).abs() < 1e-12);
        }
        assert!(matches!(
            piecewise_cost(&gen(4.0, 4.0, lin), 3),
            Err(UcError::DegenerateRange { .. })
        ));
    }

    #[test]
    fn segments_reproduce_interpolation() {
        let q = QuadraticCost { a: 5.0, b: 1.0, c: 0.3 };
        let pwl = piecewise_cost(&gen(2.0, 12.0, q), 3).unwrap();
        for k in 0..=100 {
            let p = 2.0 + k as f64 * 0.1;
            let top = pwl
                .segments()
                .iter()
                .map(|(s, b)| s * p + b)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((top - pwl.eval(p)).abs() < 1e-9);
        }
    }

    #[test]
    fn reference_coefficients_big_m_gates_row() {
        let lr = LrModel::from_coefficients([26.577, -0.366, 0.102, 1.484, -173.995, 2.356], 2.12);
        let mut gens = vec![
            gen(1.0, 10.0, QuadraticCost { a: 0.0, b: 1.0, c: 0.0 }),
            gen(1.0, 20.0, QuadraticCost { a: 0.0, b: 1.0, c: 0.0 }),
        ];
        gens[1].id = "h".into();
        let system = SystemSpec {
            s_base: 30.0,
            f_nominal: 50.0,
            load_damping: 1.0,
            demand: vec![12.0],
            horizon: 1,
        };
        let certs = lr_big_m_certificates(&gens, &system, &lr);
        let big_m = default_big_m(&gens, &system, &lr);
        for c in &certs {
            assert!(big_m >= c.required);
        }
        let mut m = LinearModel::new("lr", crate::lp::Direction::Minimize);
        let mut dv = build_dispatch_block(
            &mut m,
            &gens,
            &system,
            CommitRef::Params,
            WindRef::Fixed(&[0.0]),
            &DispatchOptions::default(),
        )
        .unwrap();
        let too_small = build_lr_block(
            &mut m.clone(),
            &gens,
            &system,
            CommitRef::Params,
            &mut dv.clone(),
            &lr.with_psi(1e6),
            Some(1.0),
        );
        assert!(matches!(too_small, Err(UcError::BigMTooSmall { .. })));
        build_lr_block(&mut m, &gens, &system, CommitRef::Params, &mut dv, &lr, None).unwrap();
        let row = &m.rows[m.row_by_tag("lr_security[0,g]").unwrap().0];
        // Unit g offline, h online at full output: the row must hold.
        let x = |p: Param| match p {
            Param::Commit { unit: 0, .. } => 0.0,
            _ => 1.0,
        };
        let mut vals = vec![0.0; m.num_vars()];
        vals[dv.p[0][1].0] = 20.0;
        assert!(row.activity(&vals) >= row.bound_rhs(&x) - 1e-9);
    }
}
