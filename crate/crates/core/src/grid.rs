//! Typed data model of the island system and ingestion of configuration
//! and wind-scenario files.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lr::AcceptabilityThresholds;
use crate::sfr::UflsStage;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed input: {0}")]
    Parse(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },
}

impl GridError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        GridError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Quadratic generation cost `a + b·p + c·p²` in EUR/h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCost {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuadraticCost {
    pub fn eval(&self, p: f64) -> f64 {
        self.a + self.b * p + self.c * p * p
    }
}

/// Static data of one thermal unit.
///
/// Powers are in MW, ramps in MW/h, up/down times in hours. The governor
/// transfer function is `k·(b2·s² + b1·s + 1)/(a2·s² + a1·s + 1)` and its
/// output deviation `Δp` is expressed in p.u. of `m_base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub id: String,
    pub p_min: f64,
    pub p_max: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    pub min_up: u32,
    pub min_down: u32,
    pub startup_cost: f64,
    pub cost_quadratic: QuadraticCost,
    pub inertia_h: f64,
    pub m_base: f64,
    pub gov_gain: f64,
    pub gov_a1: f64,
    pub gov_a2: f64,
    pub gov_b1: f64,
    pub gov_b2: f64,
    pub dp_min: f64,
    pub dp_max: f64,
    /// Commitment state before the first hour.
    #[serde(default)]
    pub initial_on: bool,
    /// Output before the first hour; only meaningful when `initial_on`.
    #[serde(default)]
    pub initial_p: f64,
}

impl GeneratorSpec {
    /// Kinetic energy contribution `H·M` in MW·s.
    pub fn stored_energy(&self) -> f64 {
        self.inertia_h * self.m_base
    }

    /// Governor gain normalised to the system base, `k·M/S`.
    pub fn normalized_gain(&self, s_base: f64) -> f64 {
        self.gov_gain * self.m_base / s_base
    }

    fn validate(&self) -> Result<(), GridError> {
        let f = |name: &str| format!("generators[{}].{name}", self.id);
        let finite = [
            ("p_min", self.p_min),
            ("p_max", self.p_max),
            ("ramp_up", self.ramp_up),
            ("ramp_down", self.ramp_down),
            ("startup_cost", self.startup_cost),
            ("cost_quadratic.a", self.cost_quadratic.a),
            ("cost_quadratic.b", self.cost_quadratic.b),
            ("cost_quadratic.c", self.cost_quadratic.c),
            ("inertia_h", self.inertia_h),
            ("m_base", self.m_base),
            ("gov_gain", self.gov_gain),
            ("gov_a1", self.gov_a1),
            ("gov_a2", self.gov_a2),
            ("gov_b1", self.gov_b1),
            ("gov_b2", self.gov_b2),
            ("dp_min", self.dp_min),
            ("dp_max", self.dp_max),
            ("initial_p", self.initial_p),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(GridError::invalid(f(name), "must be finite"));
            }
        }
        if self.p_min < 0.0 {
            return Err(GridError::invalid(f("p_min"), "must be >= 0"));
        }
        if self.p_min > self.p_max {
            return Err(GridError::invalid(
                f("p_min"),
                format!("p_min {} exceeds p_max {}", self.p_min, self.p_max),
            ));
        }
        if self.ramp_up <= 0.0 {
            return Err(GridError::invalid(f("ramp_up"), "must be > 0"));
        }
        if self.ramp_down <= 0.0 {
            return Err(GridError::invalid(f("ramp_down"), "must be > 0"));
        }
        // Ramp limits also apply across start-up and shut-down hours.
        if self.ramp_up < self.p_min {
            return Err(GridError::invalid(
                f("ramp_up"),
                "must be >= p_min so the unit can start",
            ));
        }
        if self.ramp_down < self.p_min {
            return Err(GridError::invalid(
                f("ramp_down"),
                "must be >= p_min so the unit can stop",
            ));
        }
        if self.min_up < 1 {
            return Err(GridError::invalid(f("min_up"), "must be >= 1"));
        }
        if self.min_down < 1 {
            return Err(GridError::invalid(f("min_down"), "must be >= 1"));
        }
        if self.startup_cost < 0.0 {
            return Err(GridError::invalid(f("startup_cost"), "must be >= 0"));
        }
        let QuadraticCost { a, b, c } = self.cost_quadratic;
        if a < 0.0 || b < 0.0 || c < 0.0 {
            return Err(GridError::invalid(
                f("cost_quadratic"),
                "coefficients must be >= 0",
            ));
        }
        if self.inertia_h <= 0.0 {
            return Err(GridError::invalid(f("inertia_h"), "must be > 0"));
        }
        if self.m_base <= 0.0 {
            return Err(GridError::invalid(f("m_base"), "must be > 0"));
        }
        if self.gov_gain < 0.0 {
            return Err(GridError::invalid(f("gov_gain"), "must be >= 0"));
        }
        if self.gov_a1 < 0.0 {
            return Err(GridError::invalid(f("gov_a1"), "must be >= 0"));
        }
        if self.gov_a2 < 0.0 {
            return Err(GridError::invalid(f("gov_a2"), "must be >= 0"));
        }
        if self.gov_b2 != 0.0 && self.gov_a2 == 0.0 {
            return Err(GridError::invalid(
                f("gov_b2"),
                "improper governor transfer: b2 != 0 requires a2 > 0",
            ));
        }
        if self.gov_a2 == 0.0 && self.gov_a1 == 0.0 && self.gov_b1 != 0.0 {
            return Err(GridError::invalid(
                f("gov_b1"),
                "improper governor transfer: b1 != 0 requires a1 > 0 or a2 > 0",
            ));
        }
        if self.dp_min > 0.0 {
            return Err(GridError::invalid(f("dp_min"), "must be <= 0"));
        }
        if self.dp_max < 0.0 {
            return Err(GridError::invalid(f("dp_max"), "must be >= 0"));
        }
        if self.initial_on {
            if self.initial_p < self.p_min || self.initial_p > self.p_max {
                return Err(GridError::invalid(
                    f("initial_p"),
                    "must lie in [p_min, p_max] for an initially online unit",
                ));
            }
            if self.initial_p > self.ramp_down {
                return Err(GridError::invalid(
                    f("initial_p"),
                    "must be <= ramp_down so a first-hour shut-down stays feasible",
                ));
            }
        } else if self.initial_p != 0.0 {
            return Err(GridError::invalid(
                f("initial_p"),
                "must be 0 for an initially offline unit",
            ));
        }
        Ok(())
    }
}

/// System-wide data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    /// System base power S (MW).
    pub s_base: f64,
    /// Nominal frequency (Hz).
    pub f_nominal: f64,
    /// Load damping D (p.u.).
    pub load_damping: f64,
    /// Hourly demand d_t (MW).
    pub demand: Vec<f64>,
    /// Number of hourly periods.
    pub horizon: usize,
}

impl SystemSpec {
    fn validate(&self) -> Result<(), GridError> {
        if !(self.s_base.is_finite() && self.s_base > 0.0) {
            return Err(GridError::invalid("system.s_base", "must be > 0"));
        }
        if !(self.f_nominal.is_finite() && self.f_nominal > 0.0) {
            return Err(GridError::invalid("system.f_nominal", "must be > 0"));
        }
        if !(self.load_damping.is_finite() && self.load_damping >= 0.0) {
            return Err(GridError::invalid("system.load_damping", "must be >= 0"));
        }
        if self.horizon < 1 {
            return Err(GridError::invalid("system.horizon", "must be >= 1"));
        }
        if self.demand.len() != self.horizon {
            return Err(GridError::invalid(
                "system.demand",
                format!(
                    "has {} entries but horizon is {}",
                    self.demand.len(),
                    self.horizon
                ),
            ));
        }
        if let Some(t) = self
            .demand
            .iter()
            .position(|d| !(d.is_finite() && *d > 0.0))
        {
            return Err(GridError::invalid(
                format!("system.demand[{t}]"),
                "must be > 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindScenario {
    pub label: String,
    /// Available wind power per hour (MW).
    pub mw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WindScenarioSet {
    pub scenarios: Vec<WindScenario>,
}

impl WindScenarioSet {
    pub fn horizon(&self) -> usize {
        self.scenarios.first().map_or(0, |s| s.mw.len())
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    fn validate(&self) -> Result<(), GridError> {
        if self.scenarios.is_empty() {
            return Err(GridError::Schema(
                "wind_scenarios must contain at least one scenario".into(),
            ));
        }
        let horizon = self.horizon();
        let mut labels = HashSet::new();
        for s in &self.scenarios {
            if !labels.insert(s.label.as_str()) {
                return Err(GridError::invalid(
                    format!("wind_scenarios[{}]", s.label),
                    "duplicate scenario label",
                ));
            }
            if s.mw.len() != horizon {
                return Err(GridError::invalid(
                    format!("wind_scenarios[{}].mw", s.label),
                    format!("has {} entries, expected {horizon}", s.mw.len()),
                ));
            }
            if let Some(t) = s.mw.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(GridError::invalid(
                    format!("wind_scenarios[{}].mw[{t}]", s.label),
                    "must be >= 0",
                ));
            }
        }
        Ok(())
    }
}

/// Per-hour wind box `[w_lo, w_hi]` around a nominal profile, with a
/// cardinality budget on the number of hours allowed away from nominal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBox {
    pub w_lo: Vec<f64>,
    pub w_hi: Vec<f64>,
    pub w_nom: Vec<f64>,
    pub budget_gamma: usize,
}

impl UncertaintyBox {
    /// Box with no uncertainty at all.
    pub fn fixed(w: &[f64]) -> Self {
        Self {
            w_lo: w.to_vec(),
            w_hi: w.to_vec(),
            w_nom: w.to_vec(),
            budget_gamma: w.len(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.w_nom.len()
    }

    pub fn contains(&self, w: &[f64], tol: f64) -> bool {
        w.len() == self.horizon()
            && w.iter()
                .enumerate()
                .all(|(t, v)| *v >= self.w_lo[t] - tol && *v <= self.w_hi[t] + tol)
    }

    /// Hours whose bounds differ.
    pub fn uncertain_hours(&self) -> Vec<usize> {
        (0..self.horizon())
            .filter(|&t| self.w_hi[t] > self.w_lo[t])
            .collect()
    }

    /// Enumerates the extreme points of the budgeted box: exactly
    /// `min(Γ, #uncertain hours)` hours sit at one of their bounds, the rest
    /// at nominal. Returns `None` when there would be more than `limit`.
    pub fn vertices(&self, limit: usize) -> Option<Vec<Vec<f64>>> {
        let hours = self.uncertain_hours();
        let k = self.budget_gamma.min(hours.len());
        let mut out = Vec::new();
        let mut subset = Vec::with_capacity(k);
        if !enumerate_subsets(&hours, k, 0, &mut subset, &mut |chosen| {
            for signs in 0..(1u64 << chosen.len()) {
                if out.len() >= limit {
                    return false;
                }
                let mut w = self.w_nom.clone();
                for (bit, &t) in chosen.iter().enumerate() {
                    w[t] = if signs >> bit & 1 == 0 {
                        self.w_lo[t]
                    } else {
                        self.w_hi[t]
                    };
                }
                out.push(w);
            }
            true
        }) {
            return None;
        }
        out.dedup();
        Some(out)
    }

    fn validate(&self) -> Result<(), GridError> {
        let n = self.w_nom.len();
        if self.w_lo.len() != n || self.w_hi.len() != n {
            return Err(GridError::invalid("uncertainty", "bound lengths differ"));
        }
        for t in 0..n {
            if !(self.w_lo[t] <= self.w_nom[t] && self.w_nom[t] <= self.w_hi[t]) {
                return Err(GridError::invalid(
                    format!("uncertainty[{t}]"),
                    "requires w_lo <= w_nom <= w_hi",
                ));
            }
        }
        if self.budget_gamma > n {
            return Err(GridError::invalid("uncertainty.budget_gamma", "exceeds horizon"));
        }
        Ok(())
    }
}

fn enumerate_subsets(
    items: &[usize],
    k: usize,
    start: usize,
    current: &mut Vec<usize>,
    visit: &mut dyn FnMut(&[usize]) -> bool,
) -> bool {
    if current.len() == k {
        return visit(current);
    }
    for idx in start..items.len() {
        if items.len() - idx < k - current.len() {
            break;
        }
        current.push(items[idx]);
        let keep_going = enumerate_subsets(items, k, idx + 1, current, visit);
        current.pop();
        if !keep_going {
            return false;
        }
    }
    true
}

/// Per-hour minimum, maximum and mean of the scenario set. `gamma` is
/// clipped to `[0, T]`.
pub fn scenario_envelope(ws: &WindScenarioSet, gamma: usize) -> UncertaintyBox {
    let horizon = ws.horizon();
    let n = ws.scenarios.len() as f64;
    let mut w_lo = vec![f64::INFINITY; horizon];
    let mut w_hi = vec![f64::NEG_INFINITY; horizon];
    let mut w_nom = vec![0.0; horizon];
    for s in &ws.scenarios {
        for (t, &w) in s.mw.iter().enumerate() {
            w_lo[t] = w_lo[t].min(w);
            w_hi[t] = w_hi[t].max(w);
            w_nom[t] += w / n;
        }
    }
    // The mean can drift outside [lo, hi] by one ulp.
    for t in 0..horizon {
        w_nom[t] = w_nom[t].clamp(w_lo[t], w_hi[t]);
    }
    UncertaintyBox {
        w_lo,
        w_hi,
        w_nom,
        budget_gamma: gamma.min(horizon),
    }
}

/// Complete island description as stored in the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandModel {
    pub system: SystemSpec,
    pub generators: Vec<GeneratorSpec>,
    pub wind_scenarios: WindScenarioSet,
    #[serde(default)]
    pub ufls_stages: Vec<UflsStage>,
    #[serde(default)]
    pub thresholds: AcceptabilityThresholds,
}

impl IslandModel {
    pub fn horizon(&self) -> usize {
        self.system.horizon
    }

    pub fn validate(&self) -> Result<(), GridError> {
        self.system.validate()?;
        if self.generators.is_empty() {
            return Err(GridError::Schema(
                "generators must contain at least one unit".into(),
            ));
        }
        let mut ids = HashSet::new();
        for g in &self.generators {
            if !ids.insert(g.id.as_str()) {
                return Err(GridError::invalid(
                    format!("generators[{}].id", g.id),
                    "duplicate unit id",
                ));
            }
            g.validate()?;
        }
        self.wind_scenarios.validate()?;
        if self.wind_scenarios.horizon() != self.system.horizon {
            return Err(GridError::invalid(
                "wind_scenarios",
                format!(
                    "scenario horizon {} differs from system horizon {}",
                    self.wind_scenarios.horizon(),
                    self.system.horizon
                ),
            ));
        }
        crate::sfr::validate_stages(&self.ufls_stages)
            .map_err(|m| GridError::invalid("ufls_stages", m))?;
        self.thresholds
            .validate(self.system.f_nominal)
            .map_err(|m| GridError::invalid("thresholds", m))?;
        Ok(())
    }

    pub fn envelope(&self, gamma: usize) -> UncertaintyBox {
        let b = scenario_envelope(&self.wind_scenarios, gamma);
        debug_assert!(b.validate().is_ok());
        b
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, GridError> {
        let model: IslandModel = serde_json::from_str(text).map_err(|e| {
            use serde_json::error::Category;
            match e.classify() {
                Category::Data => GridError::Schema(e.to_string()),
                _ => GridError::Parse(e.to_string()),
            }
        })?;
        model.validate()?;
        Ok(model)
    }
}

/// Reads and validates an island configuration file.
pub fn load_system(path: impl AsRef<Path>) -> Result<IslandModel, GridError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| GridError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    IslandModel::from_json(&text)
}

#[derive(Debug, Deserialize)]
struct WindCsvRow {
    hour: usize,
    scenario_label: String,
    mw: f64,
}

/// Reads wind scenarios from a `hour,scenario_label,mw` CSV file. Hours are
/// zero-based and every scenario must cover the same contiguous range.
pub fn load_wind_csv(path: impl AsRef<Path>) -> Result<WindScenarioSet, GridError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| GridError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_wind_csv(file)
}

pub fn parse_wind_csv(reader: impl std::io::Read) -> Result<WindScenarioSet, GridError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    // Preserves first-appearance order of labels.
    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    for rec in rdr.deserialize::<WindCsvRow>() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::Deserialize { .. } => GridError::Schema(e.to_string()),
            _ => GridError::Parse(e.to_string()),
        })?;
        let entry = rows.entry(rec.scenario_label.clone()).or_insert_with(|| {
            order.push(rec.scenario_label.clone());
            BTreeMap::new()
        });
        if entry.insert(rec.hour, rec.mw).is_some() {
            return Err(GridError::invalid(
                format!("wind[{}][{}]", rec.scenario_label, rec.hour),
                "duplicate hour",
            ));
        }
    }
    let mut scenarios = Vec::with_capacity(order.len());
    for label in order {
        let hours = &rows[&label];
        if hours.keys().enumerate().any(|(i, h)| i != *h) {
            return Err(GridError::invalid(
                format!("wind[{label}]"),
                "hours must be contiguous from 0",
            ));
        }
        scenarios.push(WindScenario {
            label,
            mw: hours.values().copied().collect(),
        });
    }
    let set = WindScenarioSet { scenarios };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f64]]) -> WindScenarioSet {
        WindScenarioSet {
            scenarios: rows
                .iter()
                .enumerate()
                .map(|(k, r)| WindScenario {
                    label: format!("s{k}"),
                    mw: r.to_vec(),
                })
                .collect(),
        }
    }

    #[test]
    fn envelope_of_single_scenario_is_identity() {
        let b = scenario_envelope(&set(&[&[1.0, 2.5, 0.0]]), 3);
        assert_eq!(b.w_lo, vec![1.0, 2.5, 0.0]);
        assert_eq!(b.w_hi, b.w_lo);
        assert_eq!(b.w_nom, b.w_lo);
    }

    #[test]
    fn envelope_min_max_mean() {
        let b = scenario_envelope(&set(&[&[1.0, 2.0], &[3.0, 4.0]]), 2);
        assert_eq!(b.w_lo, vec![1.0, 2.0]);
        assert_eq!(b.w_hi, vec![3.0, 4.0]);
        assert_eq!(b.w_nom, vec![2.0, 3.0]);
        assert_eq!(b.budget_gamma, 2);
    }

    #[test]
    fn envelope_clips_budget() {
        let b = scenario_envelope(&set(&[&[1.0; 24]]), 99);
        assert_eq!(b.budget_gamma, 24);
    }

    #[test]
    fn box_vertices_full_budget() {
        let b = scenario_envelope(&set(&[&[1.0, 5.0, 2.0], &[3.0, 5.0, 4.0]]), 3);
        let v = b.vertices(64).unwrap();
        assert_eq!(v.len(), 4);
        assert!(v.contains(&vec![1.0, 5.0, 2.0]));
        assert!(v.contains(&vec![3.0, 5.0, 4.0]));
        assert!(b.vertices(3).is_none());
    }

    #[test]
    fn box_vertices_with_budget_keep_other_hours_nominal() {
        let b = scenario_envelope(&set(&[&[0.0, 0.0], &[2.0, 4.0]]), 1);
        let v = b.vertices(64).unwrap();
        assert_eq!(
            v,
            vec![
                vec![0.0, 2.0],
                vec![2.0, 2.0],
                vec![1.0, 0.0],
                vec![1.0, 4.0]
            ]
        );
    }

    #[test]
    fn csv_ingest() {
        let text = "hour,scenario_label,mw\n0,a,1.5\n1,a,2\n0,b,0\n1,b,3\n";
        let ws = parse_wind_csv(text.as_bytes()).unwrap();
        assert_eq!(ws.len(), 2);
        assert_eq!(ws.scenarios[0].label, "a");
        assert_eq!(ws.scenarios[0].mw, vec![1.5, 2.0]);
        assert_eq!(ws.scenarios[1].mw, vec![0.0, 3.0]);
    }

    #[test]
    fn csv_rejects_gaps_and_bad_values() {
        let gap = "hour,scenario_label,mw\n0,a,1\n2,a,1\n";
        assert!(matches!(
            parse_wind_csv(gap.as_bytes()),
            Err(GridError::Validation { .. })
        ));
        let neg = "hour,scenario_label,mw\n0,a,-1\n";
        assert!(matches!(
            parse_wind_csv(neg.as_bytes()),
            Err(GridError::Validation { .. })
        ));
        let bad = "hour,scenario_label,mw\n0,a,abc\n";
        assert!(matches!(
            parse_wind_csv(bad.as_bytes()),
            Err(GridError::Schema(_))
        ));
    }
}
