//! Uniform-frequency system frequency response after a single-unit outage.
//!
//! State: the per-unit speed deviation Δw plus a controllable canonical
//! realisation of every governor. The outage is a load step Δd = p_lost/S
//! and the swing equation is
//! `2H̃·dΔw/dt = Σ Δp_i·M_i/S − Δd − D·Δw`.

use std::io::{self, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GeneratorSpec, SystemSpec};

#[derive(Debug, Error, PartialEq)]
pub enum SfrError {
    #[error("no unit online")]
    EmptyIsland,
    #[error("unit index {0} out of range")]
    UnknownUnit(usize),
    #[error("lost unit {0} is not online")]
    LostUnitOffline(String),
    #[error("invalid operating point: {0}")]
    InvalidOperatingPoint(String),
    #[error("invalid simulation options: {0}")]
    InvalidOptions(String),
}

/// One under-frequency load-shedding stage. The stage picks up when the
/// frequency is at or below `f_threshold`, or when the measured RoCoF is at
/// or below `rocof_threshold` (if set), and trips once the condition has
/// held for `delay` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UflsStage {
    pub f_threshold: f64,
    #[serde(default)]
    pub rocof_threshold: Option<f64>,
    /// Share of the load still connected that is shed on trip.
    pub shed_fraction: f64,
    pub delay: f64,
}

pub fn validate_stages(stages: &[UflsStage]) -> Result<(), String> {
    for (k, s) in stages.iter().enumerate() {
        if !s.f_threshold.is_finite() || s.f_threshold <= 0.0 {
            return Err(format!("stage {k}: f_threshold must be finite and > 0"));
        }
        if let Some(r) = s.rocof_threshold {
            if !r.is_finite() || r >= 0.0 {
                return Err(format!("stage {k}: rocof_threshold must be finite and < 0"));
            }
        }
        if !(s.shed_fraction > 0.0 && s.shed_fraction <= 1.0) {
            return Err(format!("stage {k}: shed_fraction must lie in (0, 1]"));
        }
        if !(s.delay.is_finite() && s.delay >= 0.0) {
            return Err(format!("stage {k}: delay must be >= 0"));
        }
    }
    for (k, w) in stages.windows(2).enumerate() {
        if w[1].f_threshold > w[0].f_threshold {
            return Err(format!(
                "stage {}: frequency thresholds must be non-increasing",
                k + 1
            ));
        }
        if let (Some(a), Some(b)) = (w[0].rocof_threshold, w[1].rocof_threshold) {
            if b > a {
                return Err(format!(
                    "stage {}: rocof thresholds must be non-increasing",
                    k + 1
                ));
            }
        }
    }
    Ok(())
}

/// Authored three-stage table for the fixture island: 49.0/48.7/48.4 Hz,
/// 10 % each, 150 ms pick-up delay.
pub fn default_stages() -> Vec<UflsStage> {
    [49.0, 48.7, 48.4]
        .into_iter()
        .map(|f| UflsStage {
            f_threshold: f,
            rocof_threshold: None,
            shed_fraction: 0.1,
            delay: 0.15,
        })
        .collect()
}

/// Online units and their dispatch in one hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub hour: usize,
    pub demand: f64,
    pub wind: f64,
    /// Indices into the generator list.
    pub units: Vec<usize>,
    /// Output of each listed unit (MW).
    pub p: Vec<f64>,
}

impl OperatingPoint {
    /// Checks `Σp + wind = demand` and `p_i ∈ [Pmin, Pmax]` within `tol` MW.
    pub fn validate(&self, gens: &[GeneratorSpec], tol: f64) -> Result<(), SfrError> {
        if self.units.len() != self.p.len() {
            return Err(SfrError::InvalidOperatingPoint(
                "units and p differ in length".into(),
            ));
        }
        for (&i, &p) in self.units.iter().zip(&self.p) {
            let g = gens.get(i).ok_or(SfrError::UnknownUnit(i))?;
            if p < g.p_min - tol || p > g.p_max + tol {
                return Err(SfrError::InvalidOperatingPoint(format!(
                    "unit {} output {p} outside [{}, {}]",
                    g.id, g.p_min, g.p_max
                )));
            }
        }
        let total: f64 = self.p.iter().sum::<f64>() + self.wind;
        if (total - self.demand).abs() > tol {
            return Err(SfrError::InvalidOperatingPoint(format!(
                "generation {total} does not meet demand {}",
                self.demand
            )));
        }
        Ok(())
    }

    pub fn output_of(&self, unit: usize) -> Option<f64> {
        self.units.iter().position(|&u| u == unit).map(|k| self.p[k])
    }
}

/// Equivalent normalised inertia `Σ H_i·M_i / S` over `online`.
pub fn equivalent_inertia(
    gens: &[GeneratorSpec],
    online: &[usize],
    s_base: f64,
) -> Result<f64, SfrError> {
    if online.is_empty() {
        return Err(SfrError::EmptyIsland);
    }
    let mut h = 0.0;
    for &i in online {
        h += gens.get(i).ok_or(SfrError::UnknownUnit(i))?.stored_energy();
    }
    Ok(h / s_base)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub dt: f64,
    pub horizon: f64,
    pub ufls: bool,
    pub stages: Vec<UflsStage>,
    /// Freeze governor states while the output is clamped.
    pub anti_windup: bool,
    /// Trailing window of the RoCoF relay used by UFLS stages (s).
    pub relay_window: f64,
    /// |Δw| beyond which integration stops and the trace is unstable.
    pub blowup: f64,
    /// Keep per-governor Δp series in the trace.
    pub record_governors: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 15.0,
            ufls: false,
            stages: Vec::new(),
            anti_windup: false,
            relay_window: 0.1,
            blowup: 0.5,
            record_governors: true,
        }
    }
}

impl SimOptions {
    fn validate(&self) -> Result<(), SfrError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SfrError::InvalidOptions("dt must be > 0".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SfrError::InvalidOptions("horizon must be > 0".into()));
        }
        if !(self.blowup > 0.0) {
            return Err(SfrError::InvalidOptions("blowup must be > 0".into()));
        }
        if !(self.relay_window > 0.0) {
            return Err(SfrError::InvalidOptions("relay_window must be > 0".into()));
        }
        validate_stages(&self.stages).map_err(SfrError::InvalidOptions)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShedEvent {
    pub time: f64,
    pub mw: f64,
    pub stage: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTrace {
    pub dt: f64,
    pub f_nominal: f64,
    /// Frequency in Hz, one sample per step starting at t = 0.
    pub f: Vec<f64>,
    /// Ids of the responding governors, in the order of `dp`.
    pub units: Vec<String>,
    /// Per-governor Δp in p.u. of its base (empty when not recorded).
    pub dp: Vec<Vec<f64>>,
    pub shed_events: Vec<ShedEvent>,
    pub lost_mw: f64,
    /// Integration aborted on |Δw| above the blow-up limit.
    pub unstable: bool,
}

impl FrequencyTrace {
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn write_csv(&self, out: impl Write) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time_s".to_string(), "f_hz".to_string()];
        if !self.dp.is_empty() {
            header.extend(self.units.iter().map(|u| format!("dp_{u}")));
        }
        w.write_record(&header)?;
        for (k, f) in self.f.iter().enumerate() {
            let mut rec = vec![format!("{:.3}", self.time(k)), format!("{f:.9}")];
            for series in &self.dp {
                rec.push(format!("{:.9}", series[k]));
            }
            w.write_record(&rec)?;
        }
        w.flush()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMetrics {
    pub nadir: f64,
    pub qss: f64,
    /// Most negative slope of a sliding linear fit (Hz/s).
    pub rocof: f64,
    pub ufls_total: f64,
    pub unstable: bool,
}

/// `Δp = d·u + n·z`, `ż = A z + e_last·u` in controllable canonical form.
#[derive(Debug, Clone)]
struct Governor {
    order: usize,
    q: [f64; 2],
    n: [f64; 2],
    d: f64,
    lo: f64,
    hi: f64,
    /// M_i / S.
    weight: f64,
}

impl Governor {
    fn new(g: &GeneratorSpec, p: f64, s_base: f64) -> Self {
        let k = g.gov_gain;
        let (order, q, n, d) = if g.gov_a2 > 0.0 {
            let (q1, q0) = (g.gov_a1 / g.gov_a2, 1.0 / g.gov_a2);
            let d = k * g.gov_b2 / g.gov_a2;
            let n1 = k * g.gov_b1 / g.gov_a2 - d * q1;
            let n0 = k / g.gov_a2 - d * q0;
            (2, [q0, q1], [n0, n1], d)
        } else if g.gov_a1 > 0.0 {
            let q0 = 1.0 / g.gov_a1;
            let d = k * g.gov_b1 / g.gov_a1;
            let n0 = k / g.gov_a1 - d * q0;
            (1, [q0, 0.0], [n0, 0.0], d)
        } else {
            (0, [0.0; 2], [0.0; 2], k)
        };
        let headroom = (g.p_max - p).max(0.0) / g.m_base;
        Self {
            order,
            q,
            n,
            d,
            lo: g.dp_min,
            hi: g.dp_max.min(headroom),
            weight: g.m_base / s_base,
        }
    }

    fn raw_output(&self, z: &[f64], u: f64) -> f64 {
        let mut y = self.d * u;
        for j in 0..self.order {
            y += self.n[j] * z[j];
        }
        y
    }

    fn output(&self, z: &[f64], u: f64) -> f64 {
        self.raw_output(z, u).clamp(self.lo, self.hi)
    }

    fn derivative(&self, z: &[f64], u: f64, anti_windup: bool, dz: &mut [f64]) {
        if self.order == 0 {
            return;
        }
        if anti_windup {
            let y = self.raw_output(z, u);
            if (y > self.hi && u > 0.0) || (y < self.lo && u < 0.0) {
                dz[..self.order].fill(0.0);
                return;
            }
        }
        match self.order {
            1 => dz[0] = -self.q[0] * z[0] + u,
            _ => {
                dz[0] = z[1];
                dz[1] = -self.q[0] * z[0] - self.q[1] * z[1] + u;
            }
        }
    }
}

struct Plant {
    govs: Vec<Governor>,
    offsets: Vec<usize>,
    two_h: f64,
    damping: f64,
    anti_windup: bool,
}

impl Plant {
    fn deriv(&self, x: &[f64], delta_d: f64, dx: &mut [f64]) {
        let w = x[0];
        let u = -w;
        let mut gen = 0.0;
        for (g, &o) in self.govs.iter().zip(&self.offsets) {
            let z = &x[o..o + g.order];
            gen += g.weight * g.output(z, u);
            g.derivative(z, u, self.anti_windup, &mut dx[o..o + g.order]);
        }
        dx[0] = (gen - delta_d - self.damping * w) / self.two_h;
    }

    fn outputs<'a>(&'a self, x: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
        let u = -x[0];
        self.govs
            .iter()
            .zip(&self.offsets)
            .map(move |(g, &o)| g.output(&x[o..o + g.order], u))
    }
}

/// Simulates the loss of generator `lost` from the operating point.
pub fn simulate_outage(
    system: &SystemSpec,
    gens: &[GeneratorSpec],
    op: &OperatingPoint,
    lost: usize,
    opts: &SimOptions,
) -> Result<FrequencyTrace, SfrError> {
    opts.validate()?;
    if op.units.len() != op.p.len() {
        return Err(SfrError::InvalidOperatingPoint(
            "units and p differ in length".into(),
        ));
    }
    let lost_gen = gens.get(lost).ok_or(SfrError::UnknownUnit(lost))?;
    let lost_mw = op
        .output_of(lost)
        .ok_or_else(|| SfrError::LostUnitOffline(lost_gen.id.clone()))?;
    let remaining: Vec<(usize, f64)> = op
        .units
        .iter()
        .copied()
        .zip(op.p.iter().copied())
        .filter(|(u, _)| *u != lost)
        .collect();
    let online: Vec<usize> = remaining.iter().map(|(u, _)| *u).collect();
    let h_eq = equivalent_inertia(gens, &online, system.s_base)?;

    let s = system.s_base;
    let govs: Vec<Governor> = remaining
        .iter()
        .map(|&(u, p)| Governor::new(&gens[u], p, s))
        .collect();
    let mut offsets = Vec::with_capacity(govs.len());
    let mut n_states = 1;
    for g in &govs {
        offsets.push(n_states);
        n_states += g.order;
    }
    let plant = Plant {
        govs,
        offsets,
        two_h: 2.0 * h_eq,
        damping: system.load_damping,
        anti_windup: opts.anti_windup,
    };

    let dt = opts.dt;
    let steps = (opts.horizon / dt).round() as usize;
    let f0 = system.f_nominal;
    let mut delta_d = lost_mw / s;
    let mut connected_load = op.demand;
    let relay_lag = ((opts.relay_window / dt).round() as usize).max(1);

    let mut x = vec![0.0; n_states];
    let mut k1 = vec![0.0; n_states];
    let mut k2 = vec![0.0; n_states];
    let mut k3 = vec![0.0; n_states];
    let mut k4 = vec![0.0; n_states];
    let mut tmp = vec![0.0; n_states];

    let mut f = Vec::with_capacity(steps + 1);
    let record = opts.record_governors;
    let mut dp: Vec<Vec<f64>> = if record {
        (0..plant.govs.len())
            .map(|_| Vec::with_capacity(steps + 1))
            .collect()
    } else {
        Vec::new()
    };
    let push = |x: &[f64], f: &mut Vec<f64>, dp: &mut Vec<Vec<f64>>| {
        f.push(f0 * (1.0 + x[0]));
        if record {
            for (series, y) in dp.iter_mut().zip(plant.outputs(x)) {
                series.push(y);
            }
        }
    };
    push(&x, &mut f, &mut dp);

    let stages = if opts.ufls { opts.stages.as_slice() } else { &[] };
    let mut timers = vec![0.0; stages.len()];
    let mut tripped = vec![false; stages.len()];
    let mut shed_events = Vec::new();
    let mut unstable = false;

    for step in 1..=steps {
        plant.deriv(&x, delta_d, &mut k1);
        for j in 0..n_states {
            tmp[j] = x[j] + 0.5 * dt * k1[j];
        }
        plant.deriv(&tmp, delta_d, &mut k2);
        for j in 0..n_states {
            tmp[j] = x[j] + 0.5 * dt * k2[j];
        }
        plant.deriv(&tmp, delta_d, &mut k3);
        for j in 0..n_states {
            tmp[j] = x[j] + dt * k3[j];
        }
        plant.deriv(&tmp, delta_d, &mut k4);
        for j in 0..n_states {
            x[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if !x[0].is_finite() || x[0].abs() > opts.blowup {
            unstable = true;
            if x[0].is_finite() {
                push(&x, &mut f, &mut dp);
            }
            break;
        }
        push(&x, &mut f, &mut dp);

        if !stages.is_empty() {
            let now = f[step];
            let back = step.saturating_sub(relay_lag);
            let relay_rocof = (now - f[back]) / ((step - back) as f64 * dt);
            for (k, st) in stages.iter().enumerate() {
                if tripped[k] {
                    continue;
                }
                let pickup = now <= st.f_threshold
                    || st.rocof_threshold.is_some_and(|r| relay_rocof <= r);
                if pickup {
                    timers[k] += dt;
                } else {
                    timers[k] = 0.0;
                }
                if pickup && timers[k] >= st.delay - 1e-12 {
                    tripped[k] = true;
                    let mw = st.shed_fraction * connected_load;
                    connected_load -= mw;
                    delta_d -= mw / s;
                    shed_events.push(ShedEvent {
                        time: step as f64 * dt,
                        mw,
                        stage: k,
                    });
                }
            }
        }
    }

    Ok(FrequencyTrace {
        dt,
        f_nominal: f0,
        f,
        units: remaining.iter().map(|(u, _)| gens[*u].id.clone()).collect(),
        dp,
        shed_events,
        lost_mw,
        unstable,
    })
}

/// Window lengths used by [`extract_metrics_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWindows {
    pub rocof_window: f64,
    pub qss_window: f64,
}

impl Default for MetricWindows {
    fn default() -> Self {
        Self {
            rocof_window: 0.5,
            qss_window: 1.0,
        }
    }
}

pub fn extract_metrics(trace: &FrequencyTrace) -> FrequencyMetrics {
    extract_metrics_with(trace, MetricWindows::default())
}

pub fn extract_metrics_with(trace: &FrequencyTrace, win: MetricWindows) -> FrequencyMetrics {
    let ufls_total = trace.shed_events.iter().map(|e| e.mw).sum();
    let f = &trace.f;
    if f.is_empty() {
        return FrequencyMetrics {
            nadir: trace.f_nominal,
            qss: trace.f_nominal,
            rocof: 0.0,
            ufls_total,
            unstable: trace.unstable,
        };
    }
    let nadir = f.iter().copied().fold(f64::INFINITY, f64::min);
    let qss = if trace.unstable {
        *f.last().unwrap()
    } else {
        let n = ((win.qss_window / trace.dt).round() as usize).clamp(1, f.len());
        f[f.len() - n..].iter().sum::<f64>() / n as f64
    };
    FrequencyMetrics {
        nadir,
        qss,
        rocof: min_windowed_slope(f, trace.dt, trace.f_nominal, win.rocof_window),
        ufls_total,
        unstable: trace.unstable,
    }
}

/// Most negative least-squares slope over every window of `window` seconds
/// (the whole series when it is shorter). Uses prefix sums of the deviation
/// from `offset` so each window costs O(1).
fn min_windowed_slope(f: &[f64], dt: f64, offset: f64, window: f64) -> f64 {
    if f.len() < 2 {
        return 0.0;
    }
    let n = (((window / dt).round() as usize) + 1).clamp(2, f.len());
    let mut s0 = vec![0.0; f.len() + 1];
    let mut s1 = vec![0.0; f.len() + 1];
    for (j, v) in f.iter().enumerate() {
        let g = v - offset;
        s0[j + 1] = s0[j] + g;
        s1[j + 1] = s1[j] + j as f64 * g;
    }
    let nf = n as f64;
    let den = nf * (nf * nf - 1.0) / 12.0;
    let mut best = f64::INFINITY;
    for start in 0..=f.len() - n {
        let end = start + n;
        let sum0 = s0[end] - s0[start];
        let sum1 = s1[end] - s1[start];
        let centre = start as f64 + (nf - 1.0) / 2.0;
        let slope = (sum1 - centre * sum0) / den / dt;
        best = best.min(slope);
    }
    best
}

const ARCHIVE_MAGIC: &[u8; 4] = b"IFTR";
const ARCHIVE_VERSION: u32 = 1;

/// A labelled trace as stored in the binary run archive.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchivedTrace {
    pub label: String,
    pub dt: f64,
    pub f_nominal: f64,
    pub unstable: bool,
    pub f: Vec<f64>,
}

/// Writes traces as: magic, version, count, then per trace the label
/// (u32 length + UTF-8), dt, f_nominal, unstable flag, sample count and
/// samples, all little-endian.
pub fn write_archive(mut out: impl Write, traces: &[ArchivedTrace]) -> io::Result<()> {
    out.write_all(ARCHIVE_MAGIC)?;
    out.write_u32::<LittleEndian>(ARCHIVE_VERSION)?;
    out.write_u64::<LittleEndian>(traces.len() as u64)?;
    for t in traces {
        out.write_u32::<LittleEndian>(t.label.len() as u32)?;
        out.write_all(t.label.as_bytes())?;
        out.write_f64::<LittleEndian>(t.dt)?;
        out.write_f64::<LittleEndian>(t.f_nominal)?;
        out.write_u8(t.unstable as u8)?;
        out.write_u64::<LittleEndian>(t.f.len() as u64)?;
        for v in &t.f {
            out.write_f64::<LittleEndian>(*v)?;
        }
    }
    out.flush()
}

pub fn read_archive(mut input: impl Read) -> io::Result<Vec<ArchivedTrace>> {
    let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != ARCHIVE_MAGIC {
        return Err(bad("not a trace archive"));
    }
    if input.read_u32::<LittleEndian>()? != ARCHIVE_VERSION {
        return Err(bad("unsupported archive version"));
    }
    let count = input.read_u64::<LittleEndian>()?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = input.read_u32::<LittleEndian>()? as usize;
        let mut label = vec![0u8; len];
        input.read_exact(&mut label)?;
        let label = String::from_utf8(label).map_err(|_| bad("label is not UTF-8"))?;
        let dt = input.read_f64::<LittleEndian>()?;
        let f_nominal = input.read_f64::<LittleEndian>()?;
        let unstable = input.read_u8()? != 0;
        let n = input.read_u64::<LittleEndian>()? as usize;
        let mut f = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            f.push(input.read_f64::<LittleEndian>()?);
        }
        out.push(ArchivedTrace {
            label,
            dt,
            f_nominal,
            unstable,
            f,
        });
    }
    Ok(out)
}

pub fn write_archive_file(path: impl AsRef<Path>, traces: &[ArchivedTrace]) -> io::Result<()> {
    let file = std::fs::File::create(path)?;
    write_archive(io::BufWriter::new(file), traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::QuadraticCost;

    fn unit(id: &str, h: f64, m: f64, k: f64) -> GeneratorSpec {
        GeneratorSpec {
            id: id.into(),
            p_min: 0.0,
            p_max: m,
            ramp_up: m,
            ramp_down: m,
            min_up: 1,
            min_down: 1,
            startup_cost: 0.0,
            cost_quadratic: QuadraticCost {
                a: 0.0,
                b: 1.0,
                c: 0.0,
            },
            inertia_h: h,
            m_base: m,
            gov_gain: k,
            gov_a1: 2.0,
            gov_a2: 0.5,
            gov_b1: 1.0,
            gov_b2: 0.0,
            dp_min: -1.0,
            dp_max: 1.0,
            initial_on: false,
            initial_p: 0.0,
        }
    }

    #[test]
    fn equivalent_inertia_examples() {
        let g = vec![unit("a", 2.0, 10.0, 1.0), unit("b", 4.0, 20.0, 1.0)];
        assert_eq!(equivalent_inertia(&g[..1], &[0], 10.0).unwrap(), 2.0);
        let h = equivalent_inertia(&g, &[0, 1], 30.0).unwrap();
        assert!((h - 100.0 / 30.0).abs() < 1e-12);
        assert_eq!(
            equivalent_inertia(&g, &[0, 0], 10.0).unwrap(),
            2.0 * equivalent_inertia(&g, &[0], 10.0).unwrap()
        );
        assert_eq!(equivalent_inertia(&g, &[], 10.0), Err(SfrError::EmptyIsland));
    }

    #[test]
    fn constant_trace_metrics() {
        let t = FrequencyTrace {
            dt: 1e-3,
            f_nominal: 50.0,
            f: vec![50.0; 2001],
            units: vec![],
            dp: vec![],
            shed_events: vec![],
            lost_mw: 0.0,
            unstable: false,
        };
        let m = extract_metrics(&t);
        assert_eq!((m.nadir, m.qss, m.rocof), (50.0, 50.0, 0.0));
    }

    #[test]
    fn ramp_rocof_is_exact() {
        let dt = 1e-3;
        let f: Vec<f64> = (0..=3000)
            .map(|k| {
                let t = k as f64 * dt;
                if t <= 1.0 {
                    50.0 - 0.4 * t
                } else {
                    49.6
                }
            })
            .collect();
        let r = min_windowed_slope(&f, dt, 50.0, 0.5);
        assert!((r + 0.4).abs() < 1e-6, "{r}");
    }

    #[test]
    fn archive_round_trip() {
        let traces = vec![
            ArchivedTrace {
                label: "s1/h3/u2".into(),
                dt: 1e-3,
                f_nominal: 50.0,
                unstable: false,
                f: vec![50.0, 49.9, 49.85],
            },
            ArchivedTrace {
                label: String::new(),
                dt: 0.01,
                f_nominal: 60.0,
                unstable: true,
                f: vec![],
            },
        ];
        let mut buf = Vec::new();
        write_archive(&mut buf, &traces).unwrap();
        assert_eq!(read_archive(buf.as_slice()).unwrap(), traces);
        assert!(read_archive(&b"nope"[..]).is_err());
    }

    #[test]
    fn stage_table_validation() {
        assert!(validate_stages(&default_stages()).is_ok());
        let mut s = default_stages();
        s.swap(0, 2);
        assert!(validate_stages(&s).is_err());
        let mut s = default_stages();
        s[1].shed_fraction = 0.0;
        assert!(validate_stages(&s).is_err());
    }
}
