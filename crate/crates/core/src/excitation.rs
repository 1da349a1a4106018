//! Periodic Fourier excitation trajectories and their optimization.
//!
//! `qᵢ(t) = q₀ᵢ + Σₖ (aᵢₖ/(kω))·sin(kωt) − (bᵢₖ/(kω))·cos(kωt)`, so `aᵢₖ` and
//! `bᵢₖ` carry velocity units. The optimizer minimizes the condition number of
//! the stacked regressor restricted to the identifiable subspace.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{base_parameter_analysis, fill_regressor, IdentifiableSubspace, ParamLayout};
use crate::kinematics::RobotState;
use crate::model::ChainModel;
use crate::{JointVector, N_JOINTS};

/// Relative margin kept from every limit while optimizing.
pub const LIMIT_MARGIN: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExcitationError {
    #[error("time {t} s outside [0, {duration}] s")]
    OutOfRange { t: f64, duration: f64 },
    #[error("joint {joint}: {detail}")]
    InvalidLimits { joint: usize, detail: String },
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("no feasible trajectory within budget (violation {violation:.3e})")]
    Infeasible {
        best: Box<FourierTrajectory>,
        violation: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierTrajectory {
    /// Fundamental angular frequency ω (rad/s).
    pub base_freq: f64,
    pub offsets: [f64; N_JOINTS],
    /// `sin_coeffs[i][k-1]` is aᵢₖ.
    pub sin_coeffs: Vec<Vec<f64>>,
    /// `cos_coeffs[i][k-1]` is bᵢₖ.
    pub cos_coeffs: Vec<Vec<f64>>,
    pub duration: f64,
}

impl FourierTrajectory {
    pub fn zero(base_freq: f64, harmonics: usize, offsets: [f64; N_JOINTS]) -> Self {
        Self {
            base_freq,
            offsets,
            sin_coeffs: vec![vec![0.0; harmonics]; N_JOINTS],
            cos_coeffs: vec![vec![0.0; harmonics]; N_JOINTS],
            duration: 2.0 * PI / base_freq,
        }
    }

    pub fn harmonics(&self) -> usize {
        self.sin_coeffs.first().map_or(0, Vec::len)
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.base_freq
    }

    pub fn validate(&self) -> Result<(), ExcitationError> {
        let n = self.harmonics();
        let shapes_ok = self.sin_coeffs.len() == N_JOINTS
            && self.cos_coeffs.len() == N_JOINTS
            && self.sin_coeffs.iter().chain(&self.cos_coeffs).all(|c| c.len() == n);
        if !shapes_ok {
            return Err(ExcitationError::InvalidOption("coefficient table must be 7 × N for both terms".into()));
        }
        if !(self.base_freq.is_finite() && self.base_freq > 0.0) {
            return Err(ExcitationError::InvalidOption("base frequency must be positive".into()));
        }
        if !(self.duration >= self.period() * (1.0 - 1e-12)) {
            return Err(ExcitationError::InvalidOption("duration shorter than one period".into()));
        }
        Ok(())
    }

    /// Sets the last sine coefficient of each joint so that q̇ vanishes at
    /// the start and at every whole period.
    pub fn enforce_rest_ends(&mut self) {
        for coeffs in &mut self.sin_coeffs {
            if let Some((last, rest)) = coeffs.split_last_mut() {
                let sum = rest.iter().fold(0.0, |acc, v| acc + v);
                *last = -sum;
            }
        }
    }

    /// Phase within the current period, snapped to zero at period boundaries.
    fn phase_time(&self, t: f64) -> f64 {
        let period = self.period();
        let mut tau = t - period * (t / period).floor();
        if (period - tau).abs() <= 1e-12 * period.max(t) {
            tau = 0.0;
        }
        tau
    }

    /// Analytic state at `t`.
    pub fn evaluate(&self, t: f64) -> Result<RobotState, ExcitationError> {
        if !(t >= 0.0 && t <= self.duration * (1.0 + 1e-12)) {
            return Err(ExcitationError::OutOfRange {
                t,
                duration: self.duration,
            });
        }
        Ok(self.evaluate_unchecked(t))
    }

    pub(crate) fn evaluate_unchecked(&self, t: f64) -> RobotState {
        let tau = self.phase_time(t);
        let mut s = RobotState::at_rest(JointVector::from_column_slice(&self.offsets));
        for i in 0..N_JOINTS {
            let (mut q, mut qd, mut qdd) = (0.0, 0.0, 0.0);
            for k in 0..self.harmonics() {
                let kw = (k + 1) as f64 * self.base_freq;
                let (sn, cs) = (kw * tau).sin_cos();
                let (a, b) = (self.sin_coeffs[i][k], self.cos_coeffs[i][k]);
                q += a / kw * sn - b / kw * cs;
                qd += a * cs + b * sn;
                qdd += -a * kw * sn + b * kw * cs;
            }
            s.q[i] += q;
            s.qd[i] = qd;
            s.qdd[i] = qdd;
        }
        s
    }

    /// `n` uniformly spaced times over one duration, endpoint excluded.
    pub fn sample_times(&self, n: usize) -> Vec<f64> {
        (0..n).map(|k| self.duration * k as f64 / n as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub q_min: [f64; N_JOINTS],
    pub q_max: [f64; N_JOINTS],
    pub qd_max: [f64; N_JOINTS],
    pub qdd_max: [f64; N_JOINTS],
}

impl Default for JointLimits {
    /// Conservative placeholder ranges (rad, rad/s, rad/s²; joint 3 in m).
    fn default() -> Self {
        Self {
            q_min: [-1.2, -0.8, 0.0, -2.0, -1.2, -1.2, -1.2],
            q_max: [1.2, 0.8, 0.24, 2.0, 1.2, 1.2, 1.2],
            qd_max: [1.0, 1.0, 0.1, 2.0, 2.0, 2.0, 2.0],
            qdd_max: [3.0, 3.0, 0.4, 8.0, 8.0, 8.0, 8.0],
        }
    }
}

impl JointLimits {
    pub fn validate(&self) -> Result<(), ExcitationError> {
        for j in 0..N_JOINTS {
            let bad = |detail: String| Err(ExcitationError::InvalidLimits { joint: j + 1, detail });
            let vals = [self.q_min[j], self.q_max[j], self.qd_max[j], self.qdd_max[j]];
            if vals.iter().any(|v| !v.is_finite()) {
                return bad("non-finite limit".into());
            }
            if self.q_min[j] >= self.q_max[j] {
                return bad(format!("position min {} is not below max {}", self.q_min[j], self.q_max[j]));
            }
            if self.qd_max[j] <= 0.0 || self.qdd_max[j] <= 0.0 {
                return bad("rate limits must be positive".into());
            }
        }
        Ok(())
    }

    pub fn mid_range(&self) -> [f64; N_JOINTS] {
        std::array::from_fn(|j| 0.5 * (self.q_min[j] + self.q_max[j]))
    }

    fn shrunk(&self, margin: f64) -> JointLimits {
        let mut out = self.clone();
        for j in 0..N_JOINTS {
            let w = (self.q_max[j] - self.q_min[j]) * margin;
            out.q_min[j] += w;
            out.q_max[j] -= w;
            out.qd_max[j] *= 1.0 - margin;
            out.qdd_max[j] *= 1.0 - margin;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointFeasibility {
    pub joint: usize,
    pub q_min: f64,
    pub q_max: f64,
    pub qd_abs_max: f64,
    pub qdd_abs_max: f64,
    pub position_ok: bool,
    pub velocity_ok: bool,
    pub acceleration_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub n_check: usize,
    pub joints: Vec<JointFeasibility>,
}

impl FeasibilityReport {
    pub fn passed(&self) -> bool {
        self.joints.iter().all(|j| j.position_ok && j.velocity_ok && j.acceleration_ok)
    }

    /// Human-readable list of failing constraints, naming joints 1-based.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for j in &self.joints {
            if !j.position_ok {
                out.push(format!("joint {}: position range [{:.6}, {:.6}]", j.joint, j.q_min, j.q_max));
            }
            if !j.velocity_ok {
                out.push(format!("joint {}: velocity {:.6}", j.joint, j.qd_abs_max));
            }
            if !j.acceleration_ok {
                out.push(format!("joint {}: acceleration {:.6}", j.joint, j.qdd_abs_max));
            }
        }
        out
    }
}

/// Extremes over `n_check` grid points spanning [0, duration] inclusive. The
/// grid is raised to 100 points per period when coarser.
pub fn feasibility(traj: &FourierTrajectory, limits: &JointLimits, n_check: usize) -> FeasibilityReport {
    let per_period = (100.0 * traj.duration / traj.period()).ceil() as usize;
    let n = n_check.max(per_period).max(2);
    let mut joints: Vec<JointFeasibility> = (0..N_JOINTS)
        .map(|j| JointFeasibility {
            joint: j + 1,
            q_min: f64::INFINITY,
            q_max: f64::NEG_INFINITY,
            qd_abs_max: 0.0,
            qdd_abs_max: 0.0,
            position_ok: true,
            velocity_ok: true,
            acceleration_ok: true,
        })
        .collect();
    for k in 0..n {
        let t = traj.duration * k as f64 / (n - 1) as f64;
        let s = traj.evaluate_unchecked(t);
        for (j, r) in joints.iter_mut().enumerate() {
            r.q_min = r.q_min.min(s.q[j]);
            r.q_max = r.q_max.max(s.q[j]);
            r.qd_abs_max = r.qd_abs_max.max(s.qd[j].abs());
            r.qdd_abs_max = r.qdd_abs_max.max(s.qdd[j].abs());
        }
    }
    for (j, r) in joints.iter_mut().enumerate() {
        r.position_ok = r.q_min >= limits.q_min[j] && r.q_max <= limits.q_max[j];
        r.velocity_ok = r.qd_abs_max <= limits.qd_max[j];
        r.acceleration_ok = r.qdd_abs_max <= limits.qdd_max[j];
    }
    FeasibilityReport { n_check: n, joints }
}

/// Regressor stacked over `n_samples` uniform times; returns W and the times.
pub fn stack_regressor(
    model: &ChainModel,
    layout: &ParamLayout,
    traj: &FourierTrajectory,
    n_samples: usize,
) -> (DMatrix<f64>, Vec<f64>) {
    let times = traj.sample_times(n_samples.max(1));
    let states: Vec<RobotState> = times.iter().map(|&t| traj.evaluate_unchecked(t)).collect();
    (stack_states(model, layout, &states), times)
}

pub(crate) fn stack_states(model: &ChainModel, layout: &ParamLayout, states: &[RobotState]) -> DMatrix<f64> {
    let p = layout.dim();
    let blocks: Vec<DMatrix<f64>> = states
        .par_iter()
        .map(|s| {
            let mut h = DMatrix::zeros(N_JOINTS, p);
            fill_regressor(model, layout, s, &mut h, 0, true);
            h
        })
        .collect();
    let mut w = DMatrix::zeros(N_JOINTS * states.len(), p);
    for (k, h) in blocks.iter().enumerate() {
        w.view_mut((k * N_JOINTS, 0), (N_JOINTS, p)).copy_from(h);
    }
    w
}

/// `σ_max / σ_min` of `W·B` (infinite when rank deficient).
pub fn condition_number(w: &DMatrix<f64>, basis: &DMatrix<f64>) -> f64 {
    let wb = w * basis;
    let r = wb.ncols();
    if r == 0 {
        return f64::INFINITY;
    }
    let square = if wb.nrows() > r { wb.qr().r() } else { wb };
    let sv = square.singular_values();
    let max = sv.max();
    let min = if sv.len() < r { 0.0 } else { sv.min() };
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Identifiable subspace of the model from broadly sampled random states.
pub fn structural_subspace(model: &ChainModel, layout: &ParamLayout, limits: &JointLimits, seed: u64) -> IdentifiableSubspace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (3 * layout.dim()).div_ceil(N_JOINTS).max(40);
    let states: Vec<RobotState> = (0..n)
        .map(|_| {
            let mut s = RobotState::at_rest(JointVector::zeros());
            for j in 0..N_JOINTS {
                s.q[j] = rng.random_range(limits.q_min[j]..limits.q_max[j]);
                s.qd[j] = rng.random_range(-limits.qd_max[j]..limits.qd_max[j]);
                s.qdd[j] = rng.random_range(-limits.qdd_max[j]..limits.qdd_max[j]);
            }
            s
        })
        .collect();
    base_parameter_analysis(model, layout, &states).expect("enough states by construction")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationOptions {
    pub base_freq: f64,
    pub harmonics: usize,
    /// Regressor samples over the whole duration.
    pub n_samples: usize,
    /// Objective evaluations shared by all starts.
    pub budget: usize,
    pub starts: usize,
    pub seed: u64,
    pub rest_ends: bool,
}

impl Default for ExcitationOptions {
    fn default() -> Self {
        Self {
            base_freq: 2.0 * PI * 0.1,
            harmonics: 5,
            n_samples: 100,
            budget: 2000,
            starts: 4,
            seed: 0,
            rest_ends: true,
        }
    }
}

impl ExcitationOptions {
    fn validate(&self) -> Result<(), ExcitationError> {
        if !(self.base_freq.is_finite() && self.base_freq > 0.0) {
            return Err(ExcitationError::InvalidOption("base_freq must be positive".into()));
        }
        if self.harmonics == 0 || self.n_samples == 0 || self.starts == 0 {
            return Err(ExcitationError::InvalidOption("harmonics, n_samples and starts must be positive".into()));
        }
        if self.rest_ends && self.harmonics < 2 {
            return Err(ExcitationError::InvalidOption("rest_ends needs at least two harmonics".into()));
        }
        Ok(())
    }
}

/// Precomputed trigonometric tables on a time grid.
struct Grid {
    sin: Vec<Vec<f64>>,
    cos: Vec<Vec<f64>>,
}

impl Grid {
    fn new(traj: &FourierTrajectory, times: &[f64]) -> Self {
        let n = traj.harmonics();
        let mut sin = vec![vec![0.0; times.len()]; n];
        let mut cos = vec![vec![0.0; times.len()]; n];
        for (j, &t) in times.iter().enumerate() {
            let tau = traj.phase_time(t);
            for k in 0..n {
                let (s, c) = (((k + 1) as f64) * traj.base_freq * tau).sin_cos();
                sin[k][j] = s;
                cos[k][j] = c;
            }
        }
        Self { sin, cos }
    }

    /// Per joint: (min q − q₀, max q − q₀, max |q̇|, max |q̈|).
    fn extremes(&self, traj: &FourierTrajectory, joint: usize) -> [f64; 4] {
        let (mut lo, mut hi, mut vmax, mut amax) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, 0.0f64);
        let m = self.sin.first().map_or(0, Vec::len);
        for j in 0..m {
            let (mut q, mut qd, mut qdd) = (0.0, 0.0, 0.0);
            for k in 0..traj.harmonics() {
                let kw = (k + 1) as f64 * traj.base_freq;
                let (a, b) = (traj.sin_coeffs[joint][k], traj.cos_coeffs[joint][k]);
                let (s, c) = (self.sin[k][j], self.cos[k][j]);
                q += a / kw * s - b / kw * c;
                qd += a * c + b * s;
                qdd += -a * kw * s + b * kw * c;
            }
            lo = lo.min(q);
            hi = hi.max(q);
            vmax = vmax.max(qd.abs());
            amax = amax.max(qdd.abs());
        }
        [lo, hi, vmax, amax]
    }
}

/// Normalized squared constraint violation.
fn violation(grid: &Grid, traj: &FourierTrajectory, limits: &JointLimits) -> f64 {
    let mut v = 0.0;
    for j in 0..N_JOINTS {
        let [lo, hi, vmax, amax] = grid.extremes(traj, j);
        let q0 = traj.offsets[j];
        let range = limits.q_max[j] - limits.q_min[j];
        let terms = [
            (limits.q_min[j] - (q0 + lo)) / range,
            ((q0 + hi) - limits.q_max[j]) / range,
            (vmax - limits.qd_max[j]) / limits.qd_max[j],
            (amax - limits.qdd_max[j]) / limits.qdd_max[j],
        ];
        v += terms.iter().map(|t| t.max(0.0).powi(2)).sum::<f64>();
    }
    v
}

/// Largest factor by which the oscillating part may be scaled while staying feasible.
fn feasible_scale(grid: &Grid, traj: &FourierTrajectory, limits: &JointLimits) -> f64 {
    let mut s = f64::INFINITY;
    for j in 0..N_JOINTS {
        let [lo, hi, vmax, amax] = grid.extremes(traj, j);
        let q0 = traj.offsets[j];
        if hi > 0.0 {
            s = s.min((limits.q_max[j] - q0) / hi);
        }
        if lo < 0.0 {
            s = s.min((limits.q_min[j] - q0) / lo);
        }
        if vmax > 0.0 {
            s = s.min(limits.qd_max[j] / vmax);
        }
        if amax > 0.0 {
            s = s.min(limits.qdd_max[j] / amax);
        }
    }
    s.max(0.0)
}

fn scale_coefficients(traj: &mut FourierTrajectory, s: f64) {
    for c in traj.sin_coeffs.iter_mut().chain(traj.cos_coeffs.iter_mut()).flatten() {
        *c *= s;
    }
}

fn random_candidate<R: Rng>(limits: &JointLimits, opts: &ExcitationOptions, grid_times: &[f64], rng: &mut R) -> FourierTrajectory {
    let mid = limits.mid_range();
    let offsets = std::array::from_fn(|j| {
        let half = 0.5 * (limits.q_max[j] - limits.q_min[j]);
        mid[j] + rng.random_range(-0.25..0.25) * half
    });
    let mut traj = FourierTrajectory::zero(opts.base_freq, opts.harmonics, offsets);
    for j in 0..N_JOINTS {
        for k in 0..opts.harmonics {
            traj.sin_coeffs[j][k] = rng.random_range(-1.0..1.0) * limits.qd_max[j];
            traj.cos_coeffs[j][k] = rng.random_range(-1.0..1.0) * limits.qd_max[j];
        }
    }
    if opts.rest_ends {
        traj.enforce_rest_ends();
    }
    let grid = Grid::new(&traj, grid_times);
    let s = feasible_scale(&grid, &traj, limits);
    scale_coefficients(&mut traj, if s.is_finite() { 0.95 * s } else { 1.0 });
    if opts.rest_ends {
        traj.enforce_rest_ends();
    }
    traj
}

/// A random trajectory scaled into the limits (with the optimizer's margin).
pub fn random_feasible_trajectory<R: Rng>(
    limits: &JointLimits,
    opts: &ExcitationOptions,
    rng: &mut R,
) -> Result<FourierTrajectory, ExcitationError> {
    limits.validate()?;
    opts.validate()?;
    let inner = limits.shrunk(LIMIT_MARGIN);
    let proto = FourierTrajectory::zero(opts.base_freq, opts.harmonics, limits.mid_range());
    let times = constraint_times(&proto, opts.n_samples);
    Ok(random_candidate(&inner, opts, &times, rng))
}

fn constraint_times(traj: &FourierTrajectory, n_samples: usize) -> Vec<f64> {
    let n = (10 * n_samples).max(200);
    (0..n).map(|k| traj.duration * k as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedTrajectory {
    pub trajectory: FourierTrajectory,
    pub cond: f64,
    /// Objective of the first start's initial candidate.
    pub initial_cond: f64,
    pub evaluations: usize,
}

struct Search<'a> {
    model: &'a ChainModel,
    layout: &'a ParamLayout,
    basis: &'a DMatrix<f64>,
    limits: JointLimits,
    grid: Grid,
    n_samples: usize,
}

impl Search<'_> {
    fn objective(&self, traj: &FourierTrajectory) -> (f64, f64) {
        let v = violation(&self.grid, traj, &self.limits);
        let (w, _) = stack_regressor(self.model, self.layout, traj, self.n_samples);
        let c = condition_number(&w, self.basis);
        (c, v)
    }
}

const PENALTY: f64 = 1e4;

fn penalized(cond: f64, viol: f64) -> f64 {
    cond.ln() + PENALTY * viol
}

struct StartResult {
    best: Option<(FourierTrajectory, f64)>,
    least_violating: (FourierTrajectory, f64),
    initial: f64,
    evaluations: usize,
}

fn run_start(search: &Search<'_>, opts: &ExcitationOptions, start: usize, budget: usize, times: &[f64]) -> StartResult {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(start as u64 + 1);
    let mut cur = random_candidate(&search.limits, opts, times, &mut rng);
    let (c0, v0) = search.objective(&cur);
    let mut cur_f = penalized(c0, v0);
    let mut best = (v0 == 0.0).then(|| (cur.clone(), c0));
    let mut least_violating = (cur.clone(), v0);
    let mut step = 0.1;
    let n = opts.harmonics;
    let free_sin = if opts.rest_ends { n - 1 } else { n };
    let n_coords = N_JOINTS * (1 + free_sin + n);
    let mut evaluations = 1;
    while evaluations < budget {
        let mut cand = cur.clone();
        let coord = rng.random_range(0..n_coords);
        let joint = coord % N_JOINTS;
        let slot = coord / N_JOINTS;
        let z: f64 = StandardNormal.sample(&mut rng);
        let vel_scale = search.limits.qd_max[joint];
        if slot == 0 {
            let range = search.limits.q_max[joint] - search.limits.q_min[joint];
            cand.offsets[joint] += z * step * 0.5 * range;
        } else if slot <= free_sin {
            cand.sin_coeffs[joint][slot - 1] += z * step * vel_scale;
        } else {
            cand.cos_coeffs[joint][slot - 1 - free_sin] += z * step * vel_scale;
        }
        if opts.rest_ends {
            cand.enforce_rest_ends();
        }
        let (c, v) = search.objective(&cand);
        evaluations += 1;
        let f = penalized(c, v);
        if v < least_violating.1 {
            least_violating = (cand.clone(), v);
        }
        if f < cur_f {
            cur = cand;
            cur_f = f;
            step = (step * 1.3).min(0.5);
            if v == 0.0 && best.as_ref().is_none_or(|(_, bc)| c < *bc) {
                best = Some((cur.clone(), c));
            }
        } else {
            step = (step * 0.97).max(1e-3);
        }
    }
    StartResult {
        best,
        least_violating,
        initial: c0,
        evaluations,
    }
}

/// Multi-start greedy coordinate search on `ln cond(W·B)` plus an exterior
/// penalty on the limits, checked on a grid ten times denser than the
/// regressor samples with a 1 % margin. Deterministic for a given seed.
pub fn optimize_trajectory(
    model: &ChainModel,
    layout: &ParamLayout,
    limits: &JointLimits,
    opts: &ExcitationOptions,
) -> Result<OptimizedTrajectory, ExcitationError> {
    limits.validate()?;
    opts.validate()?;
    let subspace = structural_subspace(model, layout, limits, opts.seed);
    optimize_with_basis(model, layout, limits, opts, &subspace.basis)
}

pub fn optimize_with_basis(
    model: &ChainModel,
    layout: &ParamLayout,
    limits: &JointLimits,
    opts: &ExcitationOptions,
    basis: &DMatrix<f64>,
) -> Result<OptimizedTrajectory, ExcitationError> {
    limits.validate()?;
    opts.validate()?;
    let proto = FourierTrajectory::zero(opts.base_freq, opts.harmonics, limits.mid_range());
    let times = constraint_times(&proto, opts.n_samples);
    let search = Search {
        model,
        layout,
        basis,
        limits: limits.shrunk(LIMIT_MARGIN),
        grid: Grid::new(&proto, &times),
        n_samples: opts.n_samples,
    };
    let per_start = (opts.budget / opts.starts).max(1);
    let results: Vec<StartResult> = (0..opts.starts)
        .into_par_iter()
        .map(|s| run_start(&search, opts, s, per_start, &times))
        .collect();
    let evaluations = results.iter().map(|r| r.evaluations).sum();
    let initial_cond = results[0].initial;
    let mut best: Option<(FourierTrajectory, f64)> = None;
    for r in &results {
        if let Some((t, c)) = &r.best {
            if best.as_ref().is_none_or(|(_, bc)| c < bc) {
                best = Some((t.clone(), *c));
            }
        }
    }
    match best {
        Some((trajectory, cond)) => Ok(OptimizedTrajectory {
            trajectory,
            cond,
            initial_cond,
            evaluations,
        }),
        None => {
            let (t, v) = results
                .into_iter()
                .map(|r| r.least_violating)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("at least one start");
            Err(ExcitationError::Infeasible {
                best: Box::new(t),
                violation: v,
            })
        }
    }
}
