//! Gravity-compensation command, a forward simulator with Karnopp stiction and
//! the drift-test protocol: PD positioning, an open-loop hold on the
//! compensation effort and the non-drift effort bracket per joint.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    coulomb_level, friction_efforts, gravity_torque, gravity_torque_unchecked, inverse_dynamics_unchecked,
    kinetic_energy, potential_energy, sign0, DynamicsError, EffortTerms, ParamVector,
};
use crate::excitation::JointLimits;
use crate::kinematics::{rcm_pose, Pose6, RobotState};
use crate::model::{ChainModel, InertialMode, ModelError};
use crate::{JointVector, INSERTION_JOINT, N_JOINTS};

/// Length of the open-loop hold (s).
pub const HOLD_SECONDS: f64 = 5.0;
pub const DRIFT_DEG: f64 = 1.0;
pub const DRIFT_MM: f64 = 1.0;
/// Default breakaway as a multiple of the Coulomb level.
pub const BREAKAWAY_FACTOR: f64 = 1.5;
/// Diagonal added to point-mass inertias synthesized from gravity-mode δ (kg·m²).
pub const SIM_INERTIA_REGULARIZATION: f64 = 1e-6;
pub const MAX_MASS_CONDITION: f64 = 1e12;
/// Bisection resolution of the bracket search (N·m or N).
pub const BRACKET_RESOLUTION: f64 = 1e-3;
/// Joints listed in drift reports (the first three).
pub const REPORTED_JOINTS: usize = 3;
/// Window over which the PD effort is averaged (s).
const PD_TAU_WINDOW: f64 = 0.5;

const BIAS_TERMS: EffortTerms = EffortTerms {
    gravity: true,
    friction: false,
    stiffness: true,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GravsimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("mass matrix condition {cond:.3e} exceeds {MAX_MASS_CONDITION:e} at t = {t} s")]
    SingularMass { t: f64, cond: f64 },
    #[error("state became non-finite at t = {0} s")]
    NonFinite(f64),
    #[error("PD phase did not settle within {0} s")]
    NotSettled(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Step (s), in (0, 1e-2].
    pub dt: f64,
    pub duration: f64,
    /// Breakaway effort per joint; `None` means 1.5× the plant's Coulomb level.
    pub breakaway: Option<[f64; N_JOINTS]>,
    /// Dead-band half width (rad/s, m/s for joint 3).
    pub stiction_velocity: f64,
    /// Log every n-th step.
    pub log_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            duration: HOLD_SECONDS,
            breakaway: None,
            stiction_velocity: 2e-3,
            log_every: 10,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), GravsimError> {
        if !(self.dt > 0.0 && self.dt <= 1e-2) {
            return Err(GravsimError::Config(format!("dt = {} outside (0, 1e-2]", self.dt)));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(GravsimError::Config(format!("duration = {} must be positive", self.duration)));
        }
        if !(self.stiction_velocity >= 0.0 && self.stiction_velocity.is_finite()) {
            return Err(GravsimError::Config("stiction velocity must be non-negative".into()));
        }
        if self.log_every == 0 {
            return Err(GravsimError::Config("log_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Breakaway efforts for `plant`, checked against its Coulomb level.
    pub fn breakaway_for(&self, model: &ChainModel, plant: &ParamVector) -> Result<JointVector, GravsimError> {
        let coulomb = coulomb_level(model, plant);
        let Some(b) = self.breakaway else {
            return Ok(coulomb * BREAKAWAY_FACTOR);
        };
        let b = JointVector::from_row_slice(&b);
        for j in 0..N_JOINTS {
            if !(b[j] >= 0.0 && b[j].is_finite()) {
                return Err(GravsimError::Config(format!("joint {}: breakaway must be non-negative", j + 1)));
            }
            if b[j] < coulomb[j] * (1.0 - 1e-12) {
                return Err(GravsimError::Config(format!(
                    "joint {}: breakaway {} below Coulomb level {}",
                    j + 1,
                    b[j],
                    coulomb[j]
                )));
            }
        }
        Ok(b)
    }

    fn steps(&self, duration: f64) -> usize {
        (duration / self.dt).round() as usize
    }
}

/// Effort source for the simulator.
pub trait Controller {
    fn effort(&mut self, t: f64, state: &RobotState) -> JointVector;

    /// True when the effort depends on (q, q̇) only. Lets a simulation stop
    /// integrating once every joint is stuck.
    fn autonomous(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantEffort(pub JointVector);

impl Controller for ConstantEffort {
    fn effort(&mut self, _t: f64, _state: &RobotState) -> JointVector {
        self.0
    }

    fn autonomous(&self) -> bool {
        true
    }
}

/// `τ = K_p·(q* − q) − K_d·q̇` without feedforward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdController {
    pub target: JointVector,
    pub kp: JointVector,
    pub kd: JointVector,
}

impl Controller for PdController {
    fn effort(&mut self, _t: f64, state: &RobotState) -> JointVector {
        self.kp.component_mul(&(self.target - state.q)) - self.kd.component_mul(&state.qd)
    }

    fn autonomous(&self) -> bool {
        true
    }
}

/// Open-loop hold on [`gc_torque`].
#[derive(Debug, Clone)]
pub struct GravityCompensation<'a> {
    model: &'a ChainModel,
    params: &'a ParamVector,
}

impl<'a> GravityCompensation<'a> {
    pub fn new(model: &'a ChainModel, params: &'a ParamVector) -> Result<Self, DynamicsError> {
        params.check_layout(model)?;
        Ok(Self { model, params })
    }
}

impl Controller for GravityCompensation<'_> {
    fn effort(&mut self, _t: f64, state: &RobotState) -> JointVector {
        gravity_torque_unchecked(self.model, &state.q, self.params, true)
    }

    fn autonomous(&self) -> bool {
        true
    }
}

/// Compensation command `G(q)` of the given parameters, spring included.
pub fn gc_torque(model: &ChainModel, params: &ParamVector, q: &JointVector) -> Result<JointVector, DynamicsError> {
    gravity_torque(model, q, params, true)
}

/// Sampled simulation log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimLog {
    pub t: Vec<f64>,
    pub q: Vec<JointVector>,
    pub qd: Vec<JointVector>,
    pub tau: Vec<JointVector>,
}

impl SimLog {
    fn push(&mut self, t: f64, s: &RobotState, tau: &JointVector) {
        self.t.push(t);
        self.q.push(s.q);
        self.qd.push(s.qd);
        self.tau.push(*tau);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Per-joint max |q − reference| over the log.
    pub fn max_deviation(&self, reference: &JointVector) -> JointVector {
        self.q.iter().fold(JointVector::zeros(), |m, q| m.sup(&(q - reference).abs()))
    }
}

/// Total mechanical energy `T + V` (J).
pub fn total_energy(model: &ChainModel, params: &ParamVector, state: &RobotState) -> Result<f64, DynamicsError> {
    Ok(kinetic_energy(model, &state.q, &state.qd, params)? + potential_energy(model, &state.q, params)?)
}

/// Drift threshold of a joint: 1° for revolute joints, 1 mm for insertion.
pub fn drift_threshold(joint: usize) -> f64 {
    if joint == INSERTION_JOINT {
        DRIFT_MM * 1e-3
    } else {
        DRIFT_DEG.to_radians()
    }
}

/// The drift rule on per-joint deviations (rad, m).
pub fn is_drift(deviation: &JointVector) -> bool {
    (0..N_JOINTS).any(|j| deviation[j].abs() > drift_threshold(j))
}

/// Joint deviation in report units: degrees, or mm for insertion.
pub fn display_units(joint: usize, value: f64) -> f64 {
    if joint == INSERTION_JOINT {
        value * 1e3
    } else {
        value.to_degrees()
    }
}

struct Plant<'a> {
    model: &'a ChainModel,
    params: ParamVector,
    breakaway: JointVector,
    coulomb: JointVector,
    stiction_velocity: f64,
    dt: f64,
    active: Vec<usize>,
}

impl<'a> Plant<'a> {
    fn new(model: &'a ChainModel, params: &ParamVector, cfg: &SimConfig, clamped: [bool; N_JOINTS]) -> Result<Self, GravsimError> {
        cfg.validate()?;
        params.check_layout(model)?;
        let params = match params.layout.mode {
            InertialMode::Full => params.clone(),
            InertialMode::Gravity => params.to_full_mode(model, SIM_INERTIA_REGULARIZATION),
        };
        Ok(Self {
            model,
            breakaway: cfg.breakaway_for(model, &params)?,
            coulomb: coulomb_level(model, &params),
            params,
            stiction_velocity: cfg.stiction_velocity,
            dt: cfg.dt,
            // Joints no frame couples to carry no mass and are left out.
            active: (0..N_JOINTS)
                .filter(|j| !clamped[*j] && model.frames().iter().any(|f| f.coupling[*j] != 0.0))
                .collect(),
        })
    }

    fn mass_matrix(&self, q: &JointVector) -> DMatrix<f64> {
        let n = self.active.len();
        let mut m = DMatrix::zeros(n, n);
        for (k, &j) in self.active.iter().enumerate() {
            let mut s = RobotState::at_rest(*q);
            s.qdd[j] = 1.0;
            let col = inverse_dynamics_unchecked(self.model, &s, &self.params, EffortTerms::INERTIAL);
            for (i, &r) in self.active.iter().enumerate() {
                m[(i, k)] = col[r];
            }
        }
        (&m + m.transpose()) * 0.5
    }

    /// Static effort that makes the net effort zero at rest.
    fn holding_effort(&self, q: &JointVector) -> JointVector {
        let rest = RobotState::at_rest(*q);
        inverse_dynamics_unchecked(self.model, &rest, &self.params, BIAS_TERMS)
            + friction_efforts(self.model, &JointVector::zeros(), &self.params)
    }

    /// One semi-implicit Euler step. Returns true when every active joint is stuck.
    fn step(&self, t: f64, state: &mut RobotState, tau: &JointVector) -> Result<bool, GravsimError> {
        let n = self.active.len();
        let mut band = [true; N_JOINTS];
        for &j in &self.active {
            band[j] = state.qd[j].abs() < self.stiction_velocity;
        }
        let mut qd_eff = state.qd;
        for j in 0..N_JOINTS {
            if band[j] {
                qd_eff[j] = 0.0;
            }
        }
        let moving = RobotState::new(state.q, qd_eff, JointVector::zeros());
        let mut r = tau
            - inverse_dynamics_unchecked(self.model, &moving, &self.params, BIAS_TERMS)
            - friction_efforts(self.model, &qd_eff, &self.params);

        let m = self.mass_matrix(&state.q);
        let eig = m.clone().symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(cond <= MAX_MASS_CONDITION) {
            return Err(GravsimError::SingularMass { t, cond });
        }

        let mut locked: Vec<bool> = self.active.iter().map(|&j| band[j]).collect();
        let mut accel = DVector::zeros(n);
        loop {
            let free: Vec<usize> = (0..n).filter(|k| !locked[*k]).collect();
            accel.fill(0.0);
            if !free.is_empty() {
                let mff = DMatrix::from_fn(free.len(), free.len(), |a, b| m[(free[a], free[b])]);
                let rf = DVector::from_fn(free.len(), |a, _| r[self.active[free[a]]]);
                let chol = mff.cholesky().ok_or(GravsimError::SingularMass { t, cond })?;
                let af = chol.solve(&rf);
                for (a, &k) in free.iter().enumerate() {
                    accel[k] = af[a];
                }
            }
            // Holding effort each stuck joint needs, and the worst overshoot.
            let mut worst: Option<(usize, f64, f64)> = None;
            for k in (0..n).filter(|k| locked[*k]) {
                let j = self.active[k];
                let hold = (0..n).map(|c| m[(k, c)] * accel[c]).sum::<f64>() - r[j];
                let excess = hold.abs() - self.breakaway[j];
                if excess > 0.0 && worst.is_none_or(|w| excess > w.1) {
                    worst = Some((k, excess, hold));
                }
            }
            match worst {
                Some((k, _, hold)) => {
                    locked[k] = false;
                    let j = self.active[k];
                    r[j] += self.coulomb[j] * sign0(hold);
                }
                None => break,
            }
        }

        let mut qd = state.qd;
        let mut qdd = JointVector::zeros();
        let mut stuck = [true; N_JOINTS];
        for (k, &j) in self.active.iter().enumerate() {
            stuck[j] = locked[k];
        }
        for j in 0..N_JOINTS {
            if stuck[j] {
                qd[j] = 0.0;
            }
        }
        for (k, &j) in self.active.iter().enumerate() {
            if !locked[k] {
                qdd[j] = accel[k];
                qd[j] += self.dt * accel[k];
            }
        }
        state.q += qd * self.dt;
        state.qd = qd;
        state.qdd = qdd;
        if !state.is_finite() {
            return Err(GravsimError::NonFinite(t));
        }
        Ok(locked.iter().all(|l| *l))
    }
}

/// Integrates the plant under `controller` from `x0` for `cfg.duration`.
///
/// Rows are logged every `cfg.log_every` steps and at the final time. Once an
/// autonomous controller leaves every joint stuck at rest the state is a fixed
/// point and the remaining rows are filled without integrating.
pub fn simulate(
    model: &ChainModel,
    plant_params: &ParamVector,
    controller: &mut dyn Controller,
    x0: &RobotState,
    cfg: &SimConfig,
) -> Result<SimLog, GravsimError> {
    let plant = Plant::new(model, plant_params, cfg, [false; N_JOINTS])?;
    let steps = cfg.steps(cfg.duration);
    let mut log = SimLog::default();
    let mut state = *x0;
    state.qdd = JointVector::zeros();
    let mut fixed = false;
    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let tau = controller.effort(t, &state);
        if k % cfg.log_every == 0 || k == steps {
            log.push(t, &state, &tau);
        }
        if k == steps || fixed {
            continue;
        }
        let at_rest = state.qd.iter().all(|v| *v == 0.0);
        let q_before = state.q;
        let stuck = plant.step(t, &mut state, &tau)?;
        fixed = stuck && at_rest && controller.autonomous() && state.q == q_before;
    }
    Ok(log)
}

/// Critically damped gains `K_p = M_ii·ω²`, `K_d = 2·M_ii·ω` from the diagonal
/// of `params`'s mass matrix at `q`.
pub fn critical_gains(
    model: &ChainModel,
    params: &ParamVector,
    q: &JointVector,
    natural_freq_hz: f64,
) -> Result<(JointVector, JointVector), GravsimError> {
    let cfg = SimConfig {
        breakaway: Some([0.0; N_JOINTS]),
        ..SimConfig::default()
    };
    let mut frictionless = params.clone();
    for b in params.layout.blocks_of(crate::model::ParamGroup::Friction) {
        frictionless.values[b.offset] = 0.0;
    }
    let plant = Plant::new(model, &frictionless, &cfg, [false; N_JOINTS])?;
    let m = plant.mass_matrix(q);
    let w = 2.0 * std::f64::consts::PI * natural_freq_hz;
    let diag = JointVector::from_fn(|j, _| m[(j, j)]);
    Ok((diag * (w * w), diag * (2.0 * w)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PdGains {
    /// Critically damped on the identified diagonal mass at each target.
    Critical { natural_freq_hz: f64 },
    Fixed { kp: [f64; N_JOINTS], kd: [f64; N_JOINTS] },
}

impl Default for PdGains {
    fn default() -> Self {
        PdGains::Critical { natural_freq_hz: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    /// Plant settings; `duration` is ignored, the hold lasts 5 s.
    pub sim: SimConfig,
    pub pd: PdGains,
    /// Minimum PD time before settling is checked (s).
    pub settle_min: f64,
    pub settle_timeout: f64,
    /// Settled once every |q̇| stays below this for 0.5 s.
    pub settle_velocity: f64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            pd: PdGains::default(),
            settle_min: 1.0,
            settle_timeout: 20.0,
            settle_velocity: 1e-4,
        }
    }
}

/// One reported joint of a drift test. Positions in rad or m, efforts in N·m or N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointDrift {
    /// 1-based joint number.
    pub joint: usize,
    pub pd_pos_err: f64,
    pub gc_pos_err: f64,
    pub pd_tau: f64,
    pub gc_tau: f64,
    pub lb_tau: f64,
    pub ub_tau: f64,
}

impl JointDrift {
    pub fn bracket_contains(&self, tau: f64, tol: f64) -> bool {
        let (lo, hi) = if self.lb_tau <= self.ub_tau {
            (self.lb_tau, self.ub_tau)
        } else {
            (self.ub_tau, self.lb_tau)
        };
        tau >= lo - tol && tau <= hi + tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// 1-based pose number.
    pub pose_id: usize,
    pub target: JointVector,
    pub pose: Pose6,
    pub joints: Vec<JointDrift>,
    /// Max deviation of every joint over the hold (rad, m).
    pub gc_deviation: JointVector,
    pub drifted: bool,
    #[serde(skip)]
    pub pd_log: SimLog,
    #[serde(skip)]
    pub gc_log: SimLog,
}

/// Runs the drift protocol at every target; poses are independent and run in parallel.
pub fn drift_test(
    model: &ChainModel,
    delta_plant: &ParamVector,
    delta_ident: &ParamVector,
    targets: &[JointVector],
    cfg: &DriftConfig,
) -> Vec<Result<DriftReport, GravsimError>> {
    targets
        .par_iter()
        .enumerate()
        .map(|(i, q)| drift_pose(model, delta_plant, delta_ident, i + 1, q, cfg))
        .collect()
}

fn drift_pose(
    model: &ChainModel,
    delta_plant: &ParamVector,
    delta_ident: &ParamVector,
    pose_id: usize,
    target: &JointVector,
    cfg: &DriftConfig,
) -> Result<DriftReport, GravsimError> {
    let sim = &cfg.sim;
    let plant = Plant::new(model, delta_plant, sim, [false; N_JOINTS])?;
    let (kp, kd) = match cfg.pd {
        PdGains::Critical { natural_freq_hz } => critical_gains(model, delta_ident, target, natural_freq_hz)?,
        PdGains::Fixed { kp, kd } => (JointVector::from_row_slice(&kp), JointVector::from_row_slice(&kd)),
    };
    let mut pd = PdController {
        target: *target,
        kp,
        kd,
    };

    // PD phase from rest at the target.
    let window = ((PD_TAU_WINDOW / sim.dt).round() as usize).max(1);
    let min_steps = sim.steps(cfg.settle_min);
    let max_steps = sim.steps(cfg.settle_timeout);
    let mut efforts: VecDeque<JointVector> = VecDeque::with_capacity(window + 1);
    let mut quiet = 0usize;
    let mut state = RobotState::at_rest(*target);
    let mut pd_log = SimLog::default();
    let mut pd_tau = None;
    for k in 0..=max_steps {
        let t = k as f64 * sim.dt;
        let tau = pd.effort(t, &state);
        if k % sim.log_every == 0 {
            pd_log.push(t, &state, &tau);
        }
        efforts.push_back(tau);
        if efforts.len() > window {
            efforts.pop_front();
        }
        quiet = if state.qd.amax() < cfg.settle_velocity { quiet + 1 } else { 0 };
        if k >= min_steps && quiet >= window {
            pd_tau = Some(efforts.iter().sum::<JointVector>() / efforts.len() as f64);
            pd_log.push(t, &state, &tau);
            break;
        }
        let at_rest = state.qd.iter().all(|v| *v == 0.0);
        let q_before = state.q;
        let stuck = plant.step(t, &mut state, &tau)?;
        if stuck && at_rest && state.q == q_before {
            // Fixed point: the effort stays `tau` from here on.
            pd_tau = Some(tau);
            pd_log.push(t, &state, &tau);
            break;
        }
    }
    let pd_tau = pd_tau.ok_or(GravsimError::NotSettled(cfg.settle_timeout))?;
    let q_switch = state.q;
    let pd_err = (target - q_switch).abs();

    // Open-loop hold on the identified compensation.
    let mut gc = GravityCompensation::new(model, delta_ident)?;
    let steps = sim.steps(HOLD_SECONDS);
    let mut gc_log = SimLog::default();
    let mut deviation = JointVector::zeros();
    let mut tau_sum = JointVector::zeros();
    let mut k = 0;
    while k <= steps {
        let t = k as f64 * sim.dt;
        let tau = gc.effort(t, &state);
        deviation = deviation.sup(&(state.q - q_switch).abs());
        if k % sim.log_every == 0 || k == steps {
            gc_log.push(t, &state, &tau);
        }
        tau_sum += tau;
        if k == steps {
            break;
        }
        let at_rest = state.qd.iter().all(|v| *v == 0.0);
        let q_before = state.q;
        let stuck = plant.step(t, &mut state, &tau)?;
        k += 1;
        if stuck && at_rest && state.q == q_before {
            tau_sum += tau * (steps + 1 - k) as f64;
            gc_log.push(steps as f64 * sim.dt, &state, &tau);
            break;
        }
    }
    let gc_tau = tau_sum / (steps + 1) as f64;

    let mut joints = Vec::with_capacity(REPORTED_JOINTS);
    for j in 0..REPORTED_JOINTS {
        let (lb, ub) = lb_ub_search(model, delta_plant, &q_switch, j, sim)?;
        joints.push(JointDrift {
            joint: j + 1,
            pd_pos_err: pd_err[j],
            gc_pos_err: deviation[j],
            pd_tau: pd_tau[j],
            gc_tau: gc_tau[j],
            lb_tau: lb,
            ub_tau: ub,
        });
    }
    Ok(DriftReport {
        pose_id,
        target: *target,
        pose: rcm_pose(model, target)?,
        joints,
        gc_deviation: deviation,
        drifted: is_drift(&deviation),
        pd_log,
        gc_log,
    })
}

/// Non-drift bracket of constant efforts on `joint` at `q_hold`, other joints
/// clamped. Returned as (lb, ub) with lb the bound nearer zero.
pub fn lb_ub_search(
    model: &ChainModel,
    delta_plant: &ParamVector,
    q_hold: &JointVector,
    joint: usize,
    cfg: &SimConfig,
) -> Result<(f64, f64), GravsimError> {
    if joint >= N_JOINTS {
        return Err(GravsimError::Config(format!("joint index {joint} out of range")));
    }
    let mut clamped = [true; N_JOINTS];
    clamped[joint] = false;
    let plant = Plant::new(model, delta_plant, cfg, clamped)?;
    let center = plant.holding_effort(q_hold)[joint];
    let stiction = plant.breakaway[joint];
    if stiction == 0.0 {
        return Ok((center, center));
    }
    let steps = cfg.steps(HOLD_SECONDS);
    let threshold = drift_threshold(joint);
    let holds = |effort: f64| -> Result<bool, GravsimError> {
        let mut tau = JointVector::zeros();
        tau[joint] = effort;
        let mut state = RobotState::at_rest(*q_hold);
        for k in 0..steps {
            let at_rest = state.qd[joint] == 0.0;
            let stuck = plant.step(k as f64 * cfg.dt, &mut state, &tau)?;
            if (state.q[joint] - q_hold[joint]).abs() > threshold {
                return Ok(false);
            }
            if stuck && at_rest {
                return Ok(true);
            }
        }
        Ok(true)
    };
    let mut bounds = [0.0; 2];
    for (b, dir) in bounds.iter_mut().zip([-1.0, 1.0]) {
        let (mut lo, mut hi) = (0.0, 2.0 * stiction + BRACKET_RESOLUTION);
        while holds(center + dir * hi)? {
            lo = hi;
            hi *= 2.0;
            if hi > 1e6 {
                return Err(GravsimError::Config("no drifting effort found below 1e6".into()));
            }
        }
        while hi - lo > 0.5 * BRACKET_RESOLUTION {
            let mid = 0.5 * (lo + hi);
            if holds(center + dir * mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        *b = center + dir * lo;
    }
    let [a, b] = bounds;
    Ok(if a.abs() <= b.abs() { (a, b) } else { (b, a) })
}

/// Random joint targets in the middle 60 % of each joint range.
pub fn random_targets<R: Rng + ?Sized>(limits: &JointLimits, n: usize, rng: &mut R) -> Vec<JointVector> {
    (0..n)
        .map(|_| {
            JointVector::from_fn(|j, _| {
                let mid = 0.5 * (limits.q_min[j] + limits.q_max[j]);
                let half = 0.3 * (limits.q_max[j] - limits.q_min[j]);
                mid + rng.random_range(-half..=half)
            })
        })
        .collect()
}
