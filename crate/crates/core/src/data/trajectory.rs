//! Synthetic post-fault voltage trajectories and heuristic labeling.
//!
//! The generator is a piecewise phenomenological model, not a power-flow
//! simulation: each grid cell gets a stress score from its load level, motor
//! share, fault proximity and clearing time; cells are ranked by stress and
//! the least stressed become stable, the most stressed unstable and the rest
//! ambiguous. Within a trajectory every monitored bus follows
//!
//! * pre-fault: `U = 1`;
//! * fault: an immediate drop (deeper for close faults) followed by a linear
//!   sag whose rate grows with motor load and with the hidden outcome;
//! * post-fault: a partial jump on clearing, then first-order recovery toward
//!   a settling level (>= 0.95 stable, <= 0.65 unstable, around 0.8 with a
//!   slow oscillation for ambiguous cases).
//!
//! `P` and `Q` follow `U` through a static load model (constant-impedance
//! share for `P`, motor reactive demand rising as voltage falls for `Q`).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SeededRng};

/// Tail voltage at or above this level everywhere means stable.
pub const STABLE_U: f64 = 0.9;
/// Tail voltage at or below this level everywhere means unstable.
pub const UNSTABLE_U: f64 = 0.7;
/// Channels per bus, in feature order.
pub const CHANNELS_PER_BUS: usize = 3;

pub const STABLE: usize = 0;
pub const UNSTABLE: usize = 1;

/// Scenario axes; every combination is one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioGrid {
    /// Fraction of nominal load.
    pub load_levels: Vec<f64>,
    /// Induction-motor share of the load.
    pub motor_ratios: Vec<f64>,
    /// Fault position along the line, 0 = at the monitored end.
    pub fault_locations: Vec<f64>,
    /// Seconds; 0 means no disturbance.
    pub clearing_times: Vec<f64>,
    /// Number of least-stressed cells that recover cleanly.
    pub n_stable_cells: usize,
    /// Number of most-stressed cells that collapse.
    pub n_unstable_cells: usize,
}

impl Default for ScenarioGrid {
    fn default() -> Self {
        Self {
            load_levels: vec![0.8, 0.9, 1.0, 1.1, 1.2],
            motor_ratios: vec![0.7, 0.8, 0.9],
            fault_locations: vec![0.0, 0.25, 0.5, 0.75],
            clearing_times: vec![0.05, 0.1],
            n_stable_cells: 11,
            n_unstable_cells: 41,
        }
    }
}

impl ScenarioGrid {
    pub fn n_cells(&self) -> usize {
        self.load_levels.len() * self.motor_ratios.len() * self.fault_locations.len() * self.clearing_times.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells() == 0 {
            return Err(Error::InvalidArgument("scenario grid has an empty axis".into()));
        }
        if self.n_stable_cells + self.n_unstable_cells > self.n_cells() {
            return Err(Error::InvalidArgument(format!(
                "{} stable + {} unstable cells exceed the {} grid cells",
                self.n_stable_cells,
                self.n_unstable_cells,
                self.n_cells()
            )));
        }
        let all = self.load_levels.iter().chain(&self.motor_ratios).chain(&self.fault_locations).chain(&self.clearing_times);
        if let Some(v) = all.clone().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!("scenario grid values must be finite and >= 0, got {}", v)));
        }
        Ok(())
    }

    /// Cells in axis order (load, motor, location, clearing).
    pub fn cells(&self) -> Vec<Scenario> {
        let mut out = Vec::with_capacity(self.n_cells());
        for &load_level in &self.load_levels {
            for &motor_ratio in &self.motor_ratios {
                for &fault_location in &self.fault_locations {
                    for &clearing_time in &self.clearing_times {
                        out.push(Scenario { cell: out.len(), load_level, motor_ratio, fault_location, clearing_time });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub cell: usize,
    pub load_level: f64,
    pub motor_ratio: f64,
    pub fault_location: f64,
    pub clearing_time: f64,
}

impl Scenario {
    pub fn has_fault(&self) -> bool {
        self.clearing_time > 0.0
    }

    /// Monotone severity score used to rank cells.
    pub fn stress(&self) -> f64 {
        if !self.has_fault() {
            return 0.0;
        }
        self.load_level * self.motor_ratio * (1.0 - 0.5 * self.fault_location) * (1.0 + 2.0 * self.clearing_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Stable,
    Unstable,
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub rate_hz: f64,
    pub duration_s: f64,
    pub fault_onset_s: f64,
    pub n_buses: usize,
    /// Measurement noise on `U` in p.u.
    pub noise_std: f64,
    /// Measurement noise on `P` and `Q` in p.u.
    pub pq_noise_std: f64,
    /// Relative spread of the per-trajectory load baseline behind `P` and `Q`.
    pub load_jitter: f64,
    /// Extra fault-on sag rate of trajectories that end unstable, p.u./s.
    pub outcome_sag: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { rate_hz: 100.0, duration_s: 2.0, fault_onset_s: 0.1, n_buses: 3, noise_std: 0.002, pq_noise_std: 0.01, load_jitter: 0.0, outcome_sag: 0.8 }
    }
}

impl GeneratorConfig {
    pub fn n_samples(&self) -> usize {
        libm::round(self.duration_s * self.rate_hz) as usize
    }

    pub fn onset_index(&self) -> usize {
        libm::round(self.fault_onset_s * self.rate_hz) as usize
    }

    pub fn feature_dim(&self) -> usize {
        self.n_buses * CHANNELS_PER_BUS
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz > 0.0 && self.duration_s > 0.0 && self.fault_onset_s >= 0.0 && self.noise_std >= 0.0 && self.pq_noise_std >= 0.0 && self.load_jitter >= 0.0 && self.outcome_sag >= 0.0) {
            return Err(Error::InvalidArgument(format!("invalid generator settings {:?}", self)));
        }
        if self.n_buses == 0 || self.onset_index() >= self.n_samples() {
            return Err(Error::InvalidArgument("need at least one bus and a fault onset inside the record".into()));
        }
        Ok(())
    }
}

/// One simulated event: `P`, `Q`, `U` per monitored bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: usize,
    pub rate_hz: f64,
    pub onset_index: usize,
    pub scenario: Scenario,
    pub kind: CellKind,
    /// Outcome the generator built in (equal to the cell class for
    /// stable/unstable cells, drawn per trajectory for ambiguous ones).
    pub latent: usize,
    pub label: Option<usize>,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn n_buses(&self) -> usize {
        self.u.len()
    }

    pub fn len(&self) -> usize {
        self.u.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[l, 3 * n_buses]` window starting at fault onset, channels `[P, Q, U]`
    /// per bus.
    pub fn window(&self, l: usize) -> Result<Vec<f64>> {
        let start = self.onset_index;
        if l == 0 || start + l > self.len() {
            return Err(Error::InvalidArgument(format!(
                "window of {} steps from index {} exceeds trajectory length {}",
                l,
                start,
                self.len()
            )));
        }
        let mut out = Vec::with_capacity(l * self.n_buses() * CHANNELS_PER_BUS);
        for t in start..start + l {
            for b in 0..self.n_buses() {
                out.extend([self.p[b][t], self.q[b][t], self.u[b][t]]);
            }
        }
        Ok(out)
    }
}

/// Bus coupling to the fault: deeper dips at electrically closer buses.
fn bus_factor(b: usize) -> f64 {
    1.0 / (1.0 + 0.18 * b as f64)
}

/// Intended kind per cell and, for ambiguous cells, the probability that a
/// trajectory turns out unstable.
pub fn cell_kinds(grid: &ScenarioGrid, cells: &[Scenario]) -> (Vec<CellKind>, Vec<f64>) {
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&a, &b| cells[a].stress().total_cmp(&cells[b].stress()).then(a.cmp(&b)));
    let n = cells.len();
    let mut kinds = vec![CellKind::Ambiguous; n];
    let n_amb = n - grid.n_stable_cells - grid.n_unstable_cells;
    for (r, &c) in order.iter().enumerate() {
        kinds[c] = if r < grid.n_stable_cells || !cells[c].has_fault() {
            CellKind::Stable
        } else if r >= n - grid.n_unstable_cells {
            CellKind::Unstable
        } else {
            CellKind::Ambiguous
        };
    }
    // Probability that an ambiguous trajectory ends up unstable rises with
    // its rank among the ambiguous cells.
    let mut amb_rank = vec![0.0; n];
    for (i, &c) in order.iter().filter(|&&c| kinds[c] == CellKind::Ambiguous).enumerate() {
        amb_rank[c] = if n_amb > 1 { i as f64 / (n_amb - 1) as f64 } else { 0.5 };
    }
    (kinds, amb_rank.iter().map(|r| 0.05 + 0.53 * r).collect())
}

/// Deterministic trajectories for every grid cell, `n_per_cell` each.
/// Every cell draws from its own stream derived from `seed`.
pub fn simulate_trajectories(grid: &ScenarioGrid, gen: &GeneratorConfig, n_per_cell: usize, seed: u64) -> Result<Vec<Trajectory>> {
    grid.validate()?;
    gen.validate()?;
    let cells = grid.cells();
    let (kinds, p_unstable) = cell_kinds(grid, &cells);
    let base = derive_seed(seed, "datagen");
    let mut out = Vec::with_capacity(cells.len() * n_per_cell);
    for (c, sc) in cells.iter().enumerate() {
        let mut rng = SeededRng::new(derive_seed(base, &format!("cell-{}", c)));
        for k in 0..n_per_cell {
            let latent = match kinds[c] {
                CellKind::Stable => STABLE,
                CellKind::Unstable => UNSTABLE,
                CellKind::Ambiguous => usize::from(rng.uniform() < p_unstable[c]),
            };
            out.push(simulate_one(c * n_per_cell + k, sc, kinds[c], latent, gen, &mut rng));
        }
    }
    Ok(out)
}

fn simulate_one(id: usize, sc: &Scenario, kind: CellKind, latent: usize, gen: &GeneratorConfig, rng: &mut SeededRng) -> Trajectory {
    let n = gen.n_samples();
    let onset = gen.onset_index();
    let dt = 1.0 / gen.rate_hz;
    let t_f = onset as f64 * dt;
    let t_c = t_f + sc.clearing_time;
    let y = latent as f64;
    let load = sc.load_level * sc.motor_ratio;

    // Outcome-level settling behaviour shared by all buses.
    let (u_inf, tau, osc_amp, osc_freq, drift) = match kind {
        CellKind::Stable => (0.96 + 0.03 * rng.uniform(), 0.06 + 0.08 * rng.uniform(), 0.0, 0.0, 0.0),
        CellKind::Unstable => (0.52 + 0.12 * rng.uniform(), 0.05 + 0.05 * rng.uniform(), 0.0, 0.0, 0.0),
        CellKind::Ambiguous => {
            let m = if latent == STABLE { 0.82 + 0.04 * rng.uniform() } else { 0.72 + 0.04 * rng.uniform() };
            let d = if latent == STABLE { 0.01 } else { -0.01 };
            (m, 0.15 + 0.1 * rng.uniform(), 0.05 + 0.04 * rng.uniform(), 1.5 + 1.5 * rng.uniform(), d)
        }
    };
    let phase = rng.uniform_range(0.0, 2.0 * core::f64::consts::PI);
    let sag_base = 0.3 + 0.4 * load + gen.outcome_sag * y;
    let depth_base = 0.30 + 0.25 * (1.0 - sc.fault_location) + 0.04 * y;

    let mut p = Vec::with_capacity(gen.n_buses);
    let mut q = Vec::with_capacity(gen.n_buses);
    let mut u = Vec::with_capacity(gen.n_buses);
    for b in 0..gen.n_buses {
        let e = bus_factor(b);
        let depth = e * depth_base * (1.0 + 0.04 * rng.normal());
        let sag = e * sag_base * (1.0 + 0.1 * rng.normal());
        let p0 = sc.load_level * (0.8 - 0.1 * b as f64) * (1.0 + gen.load_jitter * rng.normal());
        let q0 = 0.35 * p0;
        let (mut pb, mut qb, mut ub) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        let u_clear_end = 1.0 - depth - sag * sc.clearing_time;
        let u_jump = u_clear_end + 0.4 * (u_inf - u_clear_end).max(0.0);
        for k in 0..n {
            let t = k as f64 * dt;
            let clean = if !sc.has_fault() || t < t_f {
                1.0
            } else if t < t_c {
                1.0 - depth - sag * (t - t_f)
            } else {
                let s = t - t_c;
                let settle = u_inf + drift * s + osc_amp * (1.0 - libm::exp(-s / 0.2)) * libm::sin(2.0 * core::f64::consts::PI * osc_freq * s + phase);
                settle + (u_jump - u_inf) * libm::exp(-s / tau)
            };
            let uv = (clean + gen.noise_std * rng.normal()).max(0.0);
            let pv = p0 * (0.5 + 0.5 * clean * clean) + gen.pq_noise_std * rng.normal();
            let qv = q0 * (1.0 + 2.0 * sc.motor_ratio * (1.0 - clean)) + gen.pq_noise_std * rng.normal();
            ub.push(uv);
            pb.push(pv);
            qb.push(qv);
        }
        p.push(pb);
        q.push(qb);
        u.push(ub);
    }
    Trajectory { id, rate_hz: gen.rate_hz, onset_index: onset, scenario: *sc, kind, latent, label: None, p, q, u }
}

/// Number of samples covering `seconds` at `rate_hz`.
pub fn steps_for(seconds: f64, rate_hz: f64) -> usize {
    libm::round(seconds * rate_hz) as usize
}

/// Stable if every bus stays at or above 0.9 p.u. over the last `tail`
/// samples, unstable if every bus stays at or below 0.7 p.u., otherwise
/// undecided. A tail longer than the record uses the whole record.
pub fn heuristic_label(traj: &Trajectory, tail: usize) -> Option<usize> {
    let n = traj.len();
    let start = n - tail.min(n);
    let tails = || traj.u.iter().flat_map(|ub| ub[start..].iter());
    if n == 0 {
        return None;
    }
    if tails().all(|&v| v >= STABLE_U) {
        Some(STABLE)
    } else if tails().all(|&v| v <= UNSTABLE_U) {
        Some(UNSTABLE)
    } else {
        None
    }
}

/// Heuristic label, falling back to a final-sample threshold of 0.8 p.u. on
/// the bus-averaged voltage for undecided cases.
pub fn naive_label(traj: &Trajectory, tail: usize) -> usize {
    heuristic_label(traj, tail).unwrap_or_else(|| {
        let last = traj.u.iter().map(|ub| ub[ub.len() - 1]).sum::<f64>() / traj.n_buses() as f64;
        if last >= 0.8 {
            STABLE
        } else {
            UNSTABLE
        }
    })
}

/// Clustering features per trajectory: tail mean, min and max of `U` for each
/// bus, then the least-squares slope (p.u./s) of the bus-averaged tail.
pub fn cluster_features(trajs: &[Trajectory], tail: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for tr in trajs {
        let n = tr.len();
        let start = n - tail.min(n);
        let len = n - start;
        for ub in &tr.u {
            let s = &ub[start..];
            let mean = s.iter().sum::<f64>() / len as f64;
            let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            out.extend([mean, min, max]);
        }
        let avg: Vec<f64> = (start..n).map(|k| tr.u.iter().map(|ub| ub[k]).sum::<f64>() / tr.n_buses() as f64).collect();
        out.push(slope(&avg, tr.rate_hz));
    }
    out
}

fn slope(ys: &[f64], rate_hz: f64) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let tm = (n - 1.0) / 2.0;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, y) in ys.iter().enumerate() {
        let dx = k as f64 - tm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    sxy / sxx * rate_hz
}

/// Columnwise z-scores of a `[n, d]` matrix; constant columns map to 0.
pub fn standardize_columns(xs: &[f64], d: usize) -> Vec<f64> {
    let n = xs.len() / d;
    let mut out = xs.to_vec();
    for j in 0..d {
        let mean = (0..n).map(|i| xs[i * d + j]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| libm::pow(xs[i * d + j] - mean, 2.0)).sum::<f64>() / n as f64;
        let sd = libm::sqrt(var);
        for i in 0..n {
            out[i * d + j] = if sd > 1e-12 { (xs[i * d + j] - mean) / sd } else { 0.0 };
        }
    }
    out
}

/// Model-ready windows of `l` steps from fault onset with the given labels.
pub fn windows_dataset(trajs: &[Trajectory], labels: &[usize], l: usize) -> Result<Dataset> {
    if trajs.len() != labels.len() {
        return Err(Error::Shape { op: "windows_dataset", detail: format!("{} trajectories, {} labels", trajs.len(), labels.len()) });
    }
    let f = trajs.first().map_or(0, |t| t.n_buses() * CHANNELS_PER_BUS);
    let mut xs = Vec::with_capacity(trajs.len() * l * f);
    for t in trajs {
        if t.n_buses() * CHANNELS_PER_BUS != f {
            return Err(Error::Shape { op: "windows_dataset", detail: "trajectories disagree on bus count".into() });
        }
        xs.extend(t.window(l)?);
    }
    Dataset::new(l, f, xs, labels.to_vec())
}
