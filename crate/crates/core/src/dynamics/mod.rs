//! Inverse dynamics, the linear regressor `τ = H(q, q̇, q̈)·δ` and gravity torques.
//!
//! Rigid-body terms are evaluated on the frame tree in base-frame coordinates
//! and projected to the actuated coordinates with `τ_q = Cᵀ·τ_frames`. Friction
//! (`F_c·sign(v) + F_v·v + F_o`), rotor inertia and the joint-4 spring act on
//! each flagged row's own coordinate and are projected the same way.
//!
//! In [`InertialMode::Gravity`] the second moments about each frame origin are
//! zero, which keeps the model exactly linear in (m, m·c).

mod base;
mod oracle;

pub use base::{base_parameter_analysis, identifiable_subspace, IdentifiableSubspace};
pub use oracle::{kinetic_energy, lagrangian_oracle, potential_energy, OracleOptions};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::model::{InertialMode, ParamGroup, ParamLayout};

use crate::kinematics::{motion_recursion, FrameMotion, RobotState};
use crate::model::{ChainModel, JointKind};
use crate::{JointVector, N_JOINTS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("parameter layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("need at least {needed} sample states, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("finite-difference step {0} underflows")]
    StepUnderflow(f64),
}

/// Flat dynamic-parameter vector δ with its layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub layout: ParamLayout,
    pub values: DVector<f64>,
}

impl ParamVector {
    pub fn new(layout: ParamLayout, values: DVector<f64>) -> Result<Self, DynamicsError> {
        if values.len() != layout.dim() {
            return Err(DynamicsError::LayoutMismatch(format!(
                "{} values for a {}-dimensional layout",
                values.len(),
                layout.dim()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn zeros(layout: ParamLayout) -> Self {
        let n = layout.dim();
        Self {
            layout,
            values: DVector::zeros(n),
        }
    }

    pub fn get(&self, frame: &str, group: ParamGroup, index: usize) -> Option<f64> {
        self.layout.find(frame, group, index).map(|i| self.values[i])
    }

    /// Fails unless the layout is the one `model` produces for its mode.
    pub fn check_layout(&self, model: &ChainModel) -> Result<(), DynamicsError> {
        let expected = ParamLayout::for_model(model, self.layout.mode);
        if expected != self.layout {
            return Err(DynamicsError::LayoutMismatch(
                "parameter layout does not match the model flags".into(),
            ));
        }
        if self.values.len() != self.layout.dim() {
            return Err(DynamicsError::LayoutMismatch("length differs from layout".into()));
        }
        Ok(())
    }

    /// Copy in full mode. Missing second moments are those of a point mass at
    /// the CoM plus `regularization`·I (kg·m²).
    pub fn to_full_mode(&self, model: &ChainModel, regularization: f64) -> ParamVector {
        if self.layout.mode == InertialMode::Full {
            return self.clone();
        }
        let layout = ParamLayout::for_model(model, InertialMode::Full);
        let mut values = DVector::zeros(layout.dim());
        for (j, e) in layout.entries.iter().enumerate() {
            if e.group == ParamGroup::Inertial && e.index >= 4 {
                continue;
            }
            let src = self
                .layout
                .find(&e.frame, e.group, e.index)
                .expect("gravity layout holds every non second-moment entry");
            values[j] = self.values[src];
        }
        for b in layout.blocks_of(ParamGroup::Inertial) {
            let m = values[b.offset];
            let l = Vector3::new(values[b.offset + 1], values[b.offset + 2], values[b.offset + 3]);
            let mut inertia = Matrix3::identity() * regularization;
            if m > 0.0 {
                let c = l / m;
                inertia += (Matrix3::identity() * c.norm_squared() - c * c.transpose()) * m;
            }
            let pack = [
                inertia[(0, 0)],
                inertia[(0, 1)],
                inertia[(0, 2)],
                inertia[(1, 1)],
                inertia[(1, 2)],
                inertia[(2, 2)],
            ];
            for (k, v) in pack.into_iter().enumerate() {
                values[b.offset + 4 + k] = v;
            }
        }
        ParamVector { layout, values }
    }

    /// Random physically consistent parameters: masses in [0.2, 2] kg with the
    /// CoM inside the inner 80 % of the link hull, positive friction, rotor
    /// inertia and stiffness, small offsets.
    pub fn sample_physical<R: Rng + ?Sized>(model: &ChainModel, mode: InertialMode, rng: &mut R) -> Self {
        let layout = ParamLayout::for_model(model, mode);
        let mut values = DVector::zeros(layout.dim());
        for b in layout.blocks().collect::<Vec<_>>() {
            let o = b.offset;
            match b.group {
                ParamGroup::Inertial => {
                    let hull = &model.frame(b.frame_index).hull;
                    let centroid = hull.iter().fold(Vector3::zeros(), |a, v| a + v) / hull.len() as f64;
                    let weights: Vec<f64> = hull.iter().map(|_| rng.random::<f64>() + 1e-3).collect();
                    let wsum: f64 = weights.iter().sum();
                    let inside = hull
                        .iter()
                        .zip(&weights)
                        .fold(Vector3::zeros(), |a, (v, w)| a + v * (*w / wsum));
                    let c = centroid + (inside - centroid) * 0.8;
                    let m = rng.random_range(0.2..2.0);
                    values[o] = m;
                    values[o + 1] = m * c.x;
                    values[o + 2] = m * c.y;
                    values[o + 3] = m * c.z;
                    if mode == InertialMode::Full {
                        let extra = rng.random_range(1e-4..1e-2);
                        let inertia = (Matrix3::identity() * c.norm_squared() - c * c.transpose()) * m
                            + Matrix3::identity() * extra;
                        let pack = [
                            inertia[(0, 0)],
                            inertia[(0, 1)],
                            inertia[(0, 2)],
                            inertia[(1, 1)],
                            inertia[(1, 2)],
                            inertia[(2, 2)],
                        ];
                        for (k, v) in pack.into_iter().enumerate() {
                            values[o + 4 + k] = v;
                        }
                    }
                }
                ParamGroup::Friction => {
                    values[o] = rng.random_range(0.05..0.5);
                    values[o + 1] = rng.random_range(0.01..0.2);
                    values[o + 2] = rng.random_range(-0.03..0.03);
                }
                ParamGroup::Motor => values[o] = rng.random_range(2e-3..2e-2),
                ParamGroup::Stiffness => values[o] = rng.random_range(0.01..0.1),
            }
        }
        ParamVector { layout, values }
    }
}

/// Which effort contributions to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EffortTerms {
    pub gravity: bool,
    pub friction: bool,
    pub stiffness: bool,
}

impl EffortTerms {
    pub const ALL: EffortTerms = EffortTerms {
        gravity: true,
        friction: true,
        stiffness: true,
    };
    /// Inertial terms only (rigid bodies and rotors).
    pub const INERTIAL: EffortTerms = EffortTerms {
        gravity: false,
        friction: false,
        stiffness: false,
    };
}

/// sign with sign(0) = 0.
pub fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

struct LinkInertia {
    mass: f64,
    first_moment: Vector3<f64>,
    second_moment: Matrix3<f64>,
}

fn link_inertia(values: &DVector<f64>, offset: usize, mode: InertialMode) -> LinkInertia {
    let v = |k: usize| values[offset + k];
    let second_moment = match mode {
        InertialMode::Gravity => Matrix3::zeros(),
        InertialMode::Full => Matrix3::new(v(4), v(5), v(6), v(5), v(7), v(8), v(6), v(8), v(9)),
    };
    LinkInertia {
        mass: v(0),
        first_moment: Vector3::new(v(1), v(2), v(3)),
        second_moment,
    }
}

/// Wrench (force, moment about the frame origin) in base axes.
fn link_wrench(m: &FrameMotion, inertia: &LinkInertia) -> (Vector3<f64>, Vector3<f64>) {
    let l = m.rotation * inertia.first_moment;
    let iw = m.rotation * inertia.second_moment * m.rotation.transpose();
    let f = m.accel * inertia.mass + m.alpha.cross(&l) + m.omega.cross(&m.omega.cross(&l));
    let n = iw * m.alpha + m.omega.cross(&(iw * m.omega)) + l.cross(&m.accel);
    (f, n)
}

fn project(model: &ChainModel, frame: usize, effort: f64, tau: &mut JointVector) {
    *tau += model.frame(frame).coupling * effort;
}

/// Rigid-body efforts from the backward wrench recursion.
fn rigid_body_efforts(model: &ChainModel, motions: &[Option<FrameMotion>], params: &ParamVector) -> JointVector {
    let n = model.frames().len();
    let mut force = vec![Vector3::zeros(); n];
    let mut moment = vec![Vector3::zeros(); n];
    for b in params.layout.blocks_of(ParamGroup::Inertial) {
        if let Some(m) = &motions[b.frame_index] {
            let (f, nn) = link_wrench(m, &link_inertia(&params.values, b.offset, params.layout.mode));
            force[b.frame_index] += f;
            moment[b.frame_index] += nn;
        }
    }
    let mut tau = JointVector::zeros();
    for &i in model.traversal_order().iter().rev() {
        let mi = motions[i].as_ref().expect("spatial frame");
        let z = mi.axis();
        match model.frame(i).kind {
            JointKind::Revolute => project(model, i, z.dot(&moment[i]), &mut tau),
            JointKind::Prismatic => project(model, i, z.dot(&force[i]), &mut tau),
            _ => {}
        }
        if let Some(p) = model.parent(i) {
            let r = mi.origin - motions[p].as_ref().expect("spatial frame").origin;
            let (f, nn) = (force[i], moment[i]);
            force[p] += f;
            moment[p] += nn + r.cross(&f);
        }
    }
    tau
}

/// Friction, rotor-inertia and spring efforts of the flagged rows.
fn element_efforts(model: &ChainModel, state: &RobotState, params: &ParamVector, terms: EffortTerms) -> JointVector {
    let mut tau = JointVector::zeros();
    for b in params.layout.blocks() {
        let frame = model.frame(b.frame_index);
        let c = &frame.coupling;
        let o = b.offset;
        match b.group {
            ParamGroup::Friction if terms.friction => {
                let v = c.dot(&state.qd);
                let f = params.values[o] * sign0(v) + params.values[o + 1] * v + params.values[o + 2];
                tau += c * f;
            }
            ParamGroup::Motor => tau += c * (params.values[o] * c.dot(&state.qdd)),
            ParamGroup::Stiffness if terms.stiffness => {
                tau += c * (params.values[o] * (c.dot(&state.q) - model.spring_rest()));
            }
            _ => {}
        }
    }
    tau
}

/// Friction efforts alone at the given rates.
pub(crate) fn friction_efforts(model: &ChainModel, qd: &JointVector, params: &ParamVector) -> JointVector {
    let mut tau = JointVector::zeros();
    for b in params.layout.blocks_of(ParamGroup::Friction) {
        let c = &model.frame(b.frame_index).coupling;
        let v = c.dot(qd);
        let o = b.offset;
        tau += c * (params.values[o] * sign0(v) + params.values[o + 1] * v + params.values[o + 2]);
    }
    tau
}

/// Per-joint Coulomb level `Σ |c_j|·F_c` over the friction rows.
pub fn coulomb_level(model: &ChainModel, params: &ParamVector) -> JointVector {
    let mut level = JointVector::zeros();
    for b in params.layout.blocks_of(ParamGroup::Friction) {
        let c = &model.frame(b.frame_index).coupling;
        level += c.abs() * params.values[b.offset].abs();
    }
    level
}

/// Joint efforts of the equations of motion for the given parameters.
pub fn inverse_dynamics(model: &ChainModel, state: &RobotState, params: &ParamVector) -> Result<JointVector, DynamicsError> {
    inverse_dynamics_with(model, state, params, EffortTerms::ALL)
}

/// Inverse dynamics restricted to selected effort terms.
pub fn inverse_dynamics_with(
    model: &ChainModel,
    state: &RobotState,
    params: &ParamVector,
    terms: EffortTerms,
) -> Result<JointVector, DynamicsError> {
    params.check_layout(model)?;
    Ok(inverse_dynamics_unchecked(model, state, params, terms))
}

pub(crate) fn inverse_dynamics_unchecked(
    model: &ChainModel,
    state: &RobotState,
    params: &ParamVector,
    terms: EffortTerms,
) -> JointVector {
    let base_accel = if terms.gravity {
        -model.gravity()
    } else {
        Vector3::zeros()
    };
    let motions = motion_recursion(model, state, base_accel);
    rigid_body_efforts(model, &motions, params) + element_efforts(model, state, params, terms)
}

/// Regressor matrix `H` (7 × p) at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorBlock {
    pub matrix: DMatrix<f64>,
    pub state: RobotState,
}

fn inertial_basis(k: usize) -> Matrix3<f64> {
    let mut e = Matrix3::zeros();
    let (r, c) = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)][k];
    e[(r, c)] = 1.0;
    e[(c, r)] = 1.0;
    e
}

/// `H(q, q̇, q̈)` with columns ordered as `layout`. Column j equals the inverse
/// dynamics evaluated at the j-th unit parameter vector.
pub fn regressor(model: &ChainModel, layout: &ParamLayout, state: &RobotState) -> RegressorBlock {
    let mut h = DMatrix::zeros(N_JOINTS, layout.dim());
    fill_regressor(model, layout, state, &mut h, 0, true);
    RegressorBlock { matrix: h, state: *state }
}

/// Writes `H` into rows `row0..row0+7` of `out`. With `dynamic = false` only
/// the gravity-bearing inertial columns are evaluated at rest.
pub(crate) fn fill_regressor(
    model: &ChainModel,
    layout: &ParamLayout,
    state: &RobotState,
    out: &mut DMatrix<f64>,
    row0: usize,
    dynamic: bool,
) {
    let motions = motion_recursion(model, state, -model.gravity());
    let mut column = |col: usize, tau: JointVector| {
        for j in 0..N_JOINTS {
            out[(row0 + j, col)] = tau[j];
        }
    };
    for b in layout.blocks() {
        let frame = model.frame(b.frame_index);
        let c = frame.coupling;
        let o = b.offset;
        match b.group {
            ParamGroup::Inertial => {
                let Some(mk) = motions[b.frame_index].as_ref() else { continue };
                let ancestors = model.moving_ancestors(b.frame_index);
                let wrench_to_tau = |f: Vector3<f64>, n: Vector3<f64>| {
                    let mut tau = JointVector::zeros();
                    for &i in &ancestors {
                        let mi = motions[i].as_ref().expect("spatial frame");
                        let z = mi.axis();
                        let e = match model.frame(i).kind {
                            JointKind::Prismatic => z.dot(&f),
                            _ => z.dot(&(n + (mk.origin - mi.origin).cross(&f))),
                        };
                        tau += model.frame(i).coupling * e;
                    }
                    tau
                };
                column(o, wrench_to_tau(mk.accel, Vector3::zeros()));
                for axis in 0..3 {
                    let l = mk.rotation.column(axis).into_owned();
                    let f = mk.alpha.cross(&l) + mk.omega.cross(&mk.omega.cross(&l));
                    column(o + 1 + axis, wrench_to_tau(f, l.cross(&mk.accel)));
                }
                if layout.mode == InertialMode::Full {
                    for k in 0..6 {
                        let iw = mk.rotation * inertial_basis(k) * mk.rotation.transpose();
                        let n = iw * mk.alpha + mk.omega.cross(&(iw * mk.omega));
                        column(o + 4 + k, wrench_to_tau(Vector3::zeros(), n));
                    }
                }
            }
            _ if !dynamic => {}
            ParamGroup::Friction => {
                let v = c.dot(&state.qd);
                column(o, c * sign0(v));
                column(o + 1, c * v);
                column(o + 2, c);
            }
            ParamGroup::Motor => column(o, c * c.dot(&state.qdd)),
            ParamGroup::Stiffness => column(o, c * (c.dot(&state.q) - model.spring_rest())),
        }
    }
}

/// Gravity efforts `G(q)`: inertial columns of `H(q, 0, 0)` times δ, optionally
/// with the spring term.
pub fn gravity_torque(
    model: &ChainModel,
    q: &JointVector,
    params: &ParamVector,
    include_stiffness: bool,
) -> Result<JointVector, DynamicsError> {
    params.check_layout(model)?;
    Ok(gravity_torque_unchecked(model, q, params, include_stiffness))
}

pub(crate) fn gravity_torque_unchecked(
    model: &ChainModel,
    q: &JointVector,
    params: &ParamVector,
    include_stiffness: bool,
) -> JointVector {
    let layout = &params.layout;
    let mut h = DMatrix::zeros(N_JOINTS, layout.dim());
    fill_regressor(model, layout, &RobotState::at_rest(*q), &mut h, 0, false);
    let mut tau = JointVector::zeros();
    for b in layout.blocks_of(ParamGroup::Inertial) {
        for k in 0..4 {
            tau += h.column(b.offset + k) * params.values[b.offset + k];
        }
    }
    if include_stiffness {
        for b in layout.blocks_of(ParamGroup::Stiffness) {
            let c = model.frame(b.frame_index).coupling;
            tau += c * (params.values[b.offset] * (c.dot(q) - model.spring_rest()));
        }
    }
    tau
}

/// Debug dump of a regressor as CSV with `frameid.group.param` headers.
pub fn regressor_csv(layout: &ParamLayout, h: &DMatrix<f64>) -> String {
    let mut out = (0..layout.dim()).map(|j| layout.name(j)).collect::<Vec<_>>().join(",");
    out.push('\n');
    for r in 0..h.nrows() {
        let row: Vec<String> = (0..h.ncols()).map(|c| format!("{}", h[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
