//! Incident labelling, dataset assembly, correlation diagnostics and the
//! logistic model that becomes the frequency-security row of the UC.

use std::collections::HashSet;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::GeneratorSpec;
use crate::sfr::{FrequencyMetrics, OperatingPoint};

pub const NUM_FEATURES: usize = 5;

/// Column names of the features, with units.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = ["xi1_mws", "xi2_pu", "xi3_mw", "xi4", "xi5_mw"];

#[derive(Debug, Error)]
pub enum LrError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset contains a single class")]
    DegenerateLabels,
    #[error("zero variance in a correlation input")]
    ZeroVariance,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("probability {0} outside (0, 1)")]
    InvalidProbability(f64),
    #[error("Newton iterations did not converge in {} steps (gradient {})", .0.iterations, .0.grad_norm)]
    NonConvergence(Box<FitReport>),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed dataset: {0}")]
    Malformed(String),
}

/// Limits separating acceptable from unacceptable incidents. Values
/// strictly below a limit are unacceptable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptabilityThresholds {
    pub nadir_min: f64,
    pub rocof_min: f64,
    pub qss_min: f64,
}

impl Default for AcceptabilityThresholds {
    fn default() -> Self {
        Self {
            nadir_min: 47.5,
            rocof_min: -0.5,
            qss_min: 49.6,
        }
    }
}

impl AcceptabilityThresholds {
    pub fn validate(&self, f_nominal: f64) -> Result<(), String> {
        if !(self.nadir_min.is_finite() && self.rocof_min.is_finite() && self.qss_min.is_finite()) {
            return Err("thresholds must be finite".into());
        }
        if !(self.nadir_min < self.qss_min && self.qss_min < f_nominal) {
            return Err(format!(
                "need nadir_min < qss_min < f_nominal, got {} / {} / {f_nominal}",
                self.nadir_min, self.qss_min
            ));
        }
        Ok(())
    }
}

/// 1 when the incident is acceptable, 0 otherwise. Unstable or non-finite
/// responses are always 0.
pub fn label_incident(m: &FrequencyMetrics, th: &AcceptabilityThresholds) -> u8 {
    if m.unstable || !(m.nadir.is_finite() && m.rocof.is_finite() && m.qss.is_finite()) {
        return 0;
    }
    (m.nadir >= th.nadir_min && m.rocof >= th.rocof_min && m.qss >= th.qss_min) as u8
}

/// Features of the outage of `lost` at `op`:
/// ξ1 = Σ_{other online} H·M (MW·s), ξ2 = Σ_{other online} k·M/S (p.u.),
/// ξ3 = p_lost (MW), ξ4 = p_lost/d, ξ5 = Σ_{other online} (Pmax − p) (MW).
pub fn incident_features(
    gens: &[GeneratorSpec],
    s_base: f64,
    op: &OperatingPoint,
    lost: usize,
) -> [f64; NUM_FEATURES] {
    let mut xi = [0.0; NUM_FEATURES];
    for (&u, &p) in op.units.iter().zip(&op.p) {
        let g = &gens[u];
        if u == lost {
            xi[2] = p;
        } else {
            xi[0] += g.stored_energy();
            xi[1] += g.normalized_gain(s_base);
            xi[4] += g.p_max - p;
        }
    }
    xi[3] = xi[2] / op.demand;
    xi
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub reserve: f64,
    pub scenario: String,
    pub hour: usize,
    pub unit: String,
}

impl Provenance {
    fn key(&self) -> (u64, &str, usize, &str) {
        (self.reserve.to_bits(), &self.scenario, self.hour, &self.unit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Incident {
    pub features: [f64; NUM_FEATURES],
    pub label: u8,
    pub provenance: Provenance,
    /// Simulated metrics, when known.
    pub metrics: Option<FrequencyMetrics>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub rows: Vec<Incident>,
    /// Only one class present; the data cannot train a classifier.
    pub degenerate: bool,
}

/// Collects incidents in input order, keeping the first of each provenance
/// key.
pub fn build_dataset(incidents: impl IntoIterator<Item = Incident>) -> Result<Dataset, LrError> {
    let mut seen: HashSet<(u64, String, usize, String)> = HashSet::new();
    let mut rows = Vec::new();
    for inc in incidents {
        let (r, s, h, u) = inc.provenance.key();
        if seen.insert((r, s.to_string(), h, u.to_string())) {
            rows.push(inc);
        }
    }
    if rows.is_empty() {
        return Err(LrError::EmptyDataset);
    }
    let ones = rows.iter().filter(|r| r.label == 1).count();
    let degenerate = ones == 0 || ones == rows.len();
    if degenerate {
        log::warn!("dataset has a single class ({} rows)", rows.len());
    }
    Ok(Dataset { rows, degenerate })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn features(&self) -> Vec<[f64; NUM_FEATURES]> {
        self.rows.iter().map(|r| r.features).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.features[j]).collect()
    }

    pub fn write_csv(&self, out: impl Write) -> Result<(), LrError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "xi1_mws", "xi2_pu", "xi3_mw", "xi4", "xi5_mw", "label", "reserve", "scenario",
            "hour", "unit",
        ])?;
        for r in &self.rows {
            let mut rec: Vec<String> = r.features.iter().map(|v| v.to_string()).collect();
            rec.push(r.label.to_string());
            rec.push(r.provenance.reserve.to_string());
            rec.push(r.provenance.scenario.clone());
            rec.push(r.provenance.hour.to_string());
            rec.push(r.provenance.unit.clone());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(input: impl Read) -> Result<Dataset, LrError> {
        let mut r = csv::Reader::from_reader(input);
        let mut rows = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != 10 {
                return Err(LrError::Malformed(format!(
                    "row {}: expected 10 fields, got {}",
                    line + 1,
                    rec.len()
                )));
            }
            let num = |k: usize| -> Result<f64, LrError> {
                rec[k].trim().parse::<f64>().map_err(|e| {
                    LrError::Malformed(format!("row {} field {}: {e}", line + 1, k + 1))
                })
            };
            let mut features = [0.0; NUM_FEATURES];
            for (j, f) in features.iter_mut().enumerate() {
                *f = num(j)?;
            }
            let label = match rec[5].trim() {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(LrError::Malformed(format!(
                        "row {}: label {other:?} is not 0 or 1",
                        line + 1
                    )))
                }
            };
            let hour = rec[8]
                .trim()
                .parse::<usize>()
                .map_err(|e| LrError::Malformed(format!("row {} hour: {e}", line + 1)))?;
            rows.push(Incident {
                features,
                label,
                provenance: Provenance {
                    reserve: num(6)?,
                    scenario: rec[7].to_string(),
                    hour,
                    unit: rec[9].to_string(),
                },
                metrics: None,
            });
        }
        build_dataset(rows)
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), LrError> {
    if x.len() != y.len() {
        return Err(LrError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(LrError::ZeroVariance);
    }
    Ok(())
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, LrError> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(LrError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties receiving their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Rank correlation (Pearson on average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, LrError> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Area under the ROC curve by the Mann–Whitney statistic, ties averaged.
/// `None` when one class is absent.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 || scores.len() != labels.len() {
        return None;
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == 1)
        .map(|(r, _)| r)
        .sum();
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Logistic model `logit = c0 + Σ c_j ξ_j` with cut-point ψ: an incident is
/// predicted acceptable when `logit ≥ ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub psi: f64,
}

impl LrModel {
    pub fn from_coefficients(c: [f64; NUM_FEATURES + 1], psi: f64) -> Self {
        Self {
            c0: c[0],
            c1: c[1],
            c2: c[2],
            c3: c[3],
            c4: c[4],
            c5: c[5],
            psi,
        }
    }

    pub fn coefficients(&self) -> [f64; NUM_FEATURES + 1] {
        [self.c0, self.c1, self.c2, self.c3, self.c4, self.c5]
    }

    pub fn with_psi(mut self, psi: f64) -> Self {
        self.psi = psi;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.coefficients().iter().all(|c| c.is_finite()) && self.psi.is_finite()
    }

    pub fn predicts_acceptable(&self, xi: &[f64; NUM_FEATURES]) -> bool {
        predict_logit(self, xi) >= self.psi
    }
}

pub fn predict_logit(lr: &LrModel, xi: &[f64; NUM_FEATURES]) -> f64 {
    let c = lr.coefficients();
    c[0] + c[1..].iter().zip(xi).map(|(a, b)| a * b).sum::<f64>()
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn predict_prob(lr: &LrModel, xi: &[f64; NUM_FEATURES]) -> f64 {
    logistic(predict_logit(lr, xi))
}

/// Cut-point `ψ = ln(p/(1−p))` for a target probability.
pub fn cutpoint_from_probability(p: f64) -> Result<f64, LrError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(LrError::InvalidProbability(p));
    }
    Ok((p / (1.0 - p)).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Ridge weight on c1..c5 (c0 is never penalised).
    pub ridge: f64,
    pub max_iters: usize,
    /// Convergence limit on the scaled gradient
    /// `max_j |g_j| / max(1, Σ_i |x_ij|)`.
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            ridge: 1e-6,
            max_iters: 200,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub coefficients: [f64; NUM_FEATURES + 1],
    pub iterations: usize,
    /// Unpenalised negative log-likelihood at the returned coefficients.
    pub nll: f64,
    /// Penalised objective after each accepted iterate, starting at zero.
    pub loss_history: Vec<f64>,
    pub grad_norm: f64,
    pub accuracy_at_zero: f64,
    pub auc: Option<f64>,
    pub converged: bool,
}

impl FitReport {
    pub fn model(&self, psi: f64) -> LrModel {
        LrModel::from_coefficients(self.coefficients, psi)
    }
}

fn log1pexp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

struct Problem<'a> {
    x: &'a [[f64; NUM_FEATURES]],
    y: &'a [u8],
    ridge: f64,
}

impl Problem<'_> {
    fn logit(&self, c: &[f64; 6], i: usize) -> f64 {
        c[0] + (0..NUM_FEATURES).map(|j| c[j + 1] * self.x[i][j]).sum::<f64>()
    }

    fn nll(&self, c: &[f64; 6]) -> f64 {
        (0..self.x.len())
            .map(|i| {
                let z = self.logit(c, i);
                log1pexp(z) - self.y[i] as f64 * z
            })
            .sum()
    }

    fn loss(&self, c: &[f64; 6]) -> f64 {
        self.nll(c) + 0.5 * self.ridge * c[1..].iter().map(|v| v * v).sum::<f64>()
    }

    fn grad_hess(&self, c: &[f64; 6]) -> (DVector<f64>, DMatrix<f64>) {
        let mut g = DVector::zeros(6);
        let mut h = DMatrix::zeros(6, 6);
        let mut row = [1.0; 6];
        for i in 0..self.x.len() {
            row[1..].copy_from_slice(&self.x[i]);
            let pr = logistic(self.logit(c, i));
            let r = pr - self.y[i] as f64;
            let w = pr * (1.0 - pr);
            for a in 0..6 {
                g[a] += r * row[a];
                for b in a..6 {
                    h[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..6 {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        for j in 1..6 {
            g[j] += self.ridge * c[j];
            h[(j, j)] += self.ridge;
        }
        (g, h)
    }
}

/// Newton direction `H d = −g`, solved on the Jacobi-scaled system.
fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = g.len();
    let d: Vec<f64> = (0..n)
        .map(|j| {
            let v = h[(j, j)];
            if v > 0.0 {
                1.0 / v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let mut hs = h.clone();
    for a in 0..n {
        for b in 0..n {
            hs[(a, b)] *= d[a] * d[b];
        }
    }
    let gs = DVector::from_iterator(n, (0..n).map(|j| -g[j] * d[j]));
    let mut shift = 0.0;
    for _ in 0..12 {
        let mut m = hs.clone();
        for j in 0..n {
            m[(j, j)] += shift;
        }
        if let Some(ch) = m.cholesky() {
            let s = ch.solve(&gs);
            return Some(DVector::from_iterator(n, (0..n).map(|j| s[j] * d[j])));
        }
        shift = if shift == 0.0 { 1e-12 } else { shift * 100.0 };
    }
    None
}

/// Ridge-penalised maximum likelihood by Newton iterations with step
/// halving, from zero coefficients, on raw features.
pub fn fit_logistic(
    x: &[[f64; NUM_FEATURES]],
    y: &[u8],
    opts: &FitOptions,
) -> Result<FitReport, LrError> {
    if x.len() != y.len() {
        return Err(LrError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(LrError::EmptyDataset);
    }
    let ones = y.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == y.len() {
        return Err(LrError::DegenerateLabels);
    }
    let prob = Problem {
        x,
        y,
        ridge: opts.ridge,
    };
    let mut scale = [0.0f64; 6];
    scale[0] = x.len() as f64;
    for row in x {
        for j in 0..NUM_FEATURES {
            scale[j + 1] += row[j].abs();
        }
    }
    let scaled_norm = |g: &DVector<f64>| -> f64 {
        (0..6)
            .map(|j| g[j].abs() / scale[j].max(1.0))
            .fold(0.0, f64::max)
    };

    let mut c = [0.0; 6];
    let mut loss = prob.loss(&c);
    let mut history = vec![loss];
    let mut iterations = 0;
    let mut converged = false;
    let (mut g, mut h) = prob.grad_hess(&c);
    let mut gnorm = scaled_norm(&g);
    while iterations < opts.max_iters {
        if gnorm <= opts.tol {
            converged = true;
            break;
        }
        let Some(dir) = newton_direction(&g, &h) else {
            break;
        };
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = c;
            for j in 0..6 {
                trial[j] += step * dir[j];
            }
            let l = prob.loss(&trial);
            if l.is_finite() && l <= loss {
                accepted = Some((trial, l));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, l)) = accepted else {
            break;
        };
        iterations += 1;
        let stalled = trial == c;
        c = trial;
        loss = l;
        history.push(loss);
        (g, h) = prob.grad_hess(&c);
        gnorm = scaled_norm(&g);
        if stalled {
            break;
        }
    }
    if !converged && gnorm <= opts.tol {
        converged = true;
    }
    let logits: Vec<f64> = (0..x.len()).map(|i| prob.logit(&c, i)).collect();
    let correct = logits
        .iter()
        .zip(y)
        .filter(|(z, &l)| (**z >= 0.0) == (l == 1))
        .count();
    let report = FitReport {
        coefficients: c,
        iterations,
        nll: prob.nll(&c),
        loss_history: history,
        grad_norm: gnorm,
        accuracy_at_zero: correct as f64 / x.len() as f64,
        auc: auc(&logits, y),
        converged,
    };
    if converged {
        Ok(report)
    } else {
        Err(LrError::NonConvergence(Box::new(report)))
    }
}

/// Model file: coefficients, cut-point, thresholds and fit metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(flatten)]
    pub model: LrModel,
    pub thresholds: AcceptabilityThresholds,
    pub feature_units: [String; NUM_FEATURES],
    #[serde(default)]
    pub fit: Option<FitReport>,
    #[serde(default)]
    pub training_rows: usize,
}

impl ModelFile {
    pub fn new(model: LrModel, thresholds: AcceptabilityThresholds) -> Self {
        Self {
            model,
            thresholds,
            feature_units: [
                "MW*s".into(),
                "p.u.".into(),
                "MW".into(),
                "-".into(),
                "MW".into(),
            ],
            fit: None,
            training_rows: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(nadir: f64, qss: f64, rocof: f64) -> FrequencyMetrics {
        FrequencyMetrics {
            nadir,
            qss,
            rocof,
            ufls_total: 0.0,
            unstable: false,
        }
    }

    #[test]
    fn label_examples() {
        let th = AcceptabilityThresholds::default();
        assert_eq!(label_incident(&metrics(48.29, 49.61, -0.39), &th), 1);
        assert_eq!(label_incident(&metrics(47.4, 49.7, -0.1), &th), 0);
        assert_eq!(label_incident(&metrics(47.5, 49.7, -0.1), &th), 1);
        let mut m = metrics(49.9, 49.9, -0.1);
        m.unstable = true;
        assert_eq!(label_incident(&m, &th), 0);
    }

    #[test]
    fn correlation_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(
            pearson(&[1.0, 1.0], &[1.0, 2.0]),
            Err(LrError::ZeroVariance)
        ));
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 8.0, 27.0, 64.0]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]), Some(0.75));
        assert_eq!(auc(&[0.5, 0.5], &[0, 1]), Some(0.5));
        assert_eq!(auc(&[0.5, 0.5], &[1, 1]), None);
    }

    #[test]
    fn reference_coefficients_logit() {
        let lr = LrModel::from_coefficients([26.577, -0.366, 0.102, 1.484, -173.995, 2.356], 2.12);
        let z = predict_logit(&lr, &[30.0, 50.0, 4.0, 0.125, 10.0]);
        assert!((z - 28.443625).abs() < 1e-9, "{z}");
        assert_eq!((z * 1000.0).round() / 1000.0, 28.444);
        assert!(lr.predicts_acceptable(&[30.0, 50.0, 4.0, 0.125, 10.0]));
    }

    #[test]
    fn cutpoints() {
        assert_eq!(cutpoint_from_probability(0.5).unwrap(), 0.0);
        assert!((cutpoint_from_probability(0.001).unwrap() + 6.906754778648554).abs() < 1e-12);
        assert!((cutpoint_from_probability(0.1).unwrap() - (1.0f64 / 9.0).ln()).abs() < 1e-15);
        assert!(cutpoint_from_probability(1.0).is_err());
        assert!(cutpoint_from_probability(0.0).is_err());
    }

    #[test]
    fn dataset_dedupes_and_round_trips() {
        let inc = |hour: usize, label: u8| Incident {
            features: [1.5, 0.25, 3.0, 0.1, 7.0],
            label,
            provenance: Provenance {
                reserve: 0.3,
                scenario: "s1".into(),
                hour,
                unit: "g1".into(),
            },
            metrics: None,
        };
        let ds = build_dataset(vec![inc(0, 1), inc(0, 0), inc(1, 0)]).unwrap();
        assert_eq!(ds.len(), 2);
        assert!(!ds.degenerate);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("xi1_mws,xi2_pu,xi3_mw,xi4,xi5_mw,label,reserve,scenario,hour,unit\n"));
        assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), ds);
        assert!(build_dataset(vec![inc(0, 1)]).unwrap().degenerate);
        assert!(matches!(build_dataset(vec![]), Err(LrError::EmptyDataset)));
    }

    #[test]
    fn separable_data_converges() {
        let x: Vec<[f64; 5]> = (0..40)
            .map(|i| [i as f64 / 10.0, 0.0, 0.0, 0.0, 0.0])
            .collect();
        let y: Vec<u8> = (0..40).map(|i| (i >= 20) as u8).collect();
        let r = fit_logistic(&x, &y, &FitOptions::default()).unwrap();
        assert!(r.coefficients.iter().all(|c| c.is_finite()));
        assert_eq!(r.auc, Some(1.0));
        assert_eq!(r.accuracy_at_zero, 1.0);
        assert!(r.loss_history.windows(2).all(|w| w[1] <= w[0]));
    }
}
