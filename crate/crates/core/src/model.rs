//! Declarative description of a coupled serial-tree manipulator.
//!
//! A [`ChainModel`] is an ordered list of [`FrameSpec`] rows in modified
//! Denavit-Hartenberg form. Every row carries an affine map from the seven
//! actuated coordinates to its own variable coordinate, which is how the
//! parallelogram, the half-rate insertion carriage and the wrist motor rows
//! are expressed. [`build_psm_preset`] builds the dVRK-Si PSM frame tree.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::mdh_transform;
use crate::{JointVector, N_JOINTS};

/// Identifier of the implicit base frame.
pub const BASE_FRAME: &str = "0";

/// Names of the link-length constants the PSM preset requires.
pub const PSM_LENGTH_KEYS: [&str; 12] = [
    "l1H", "l1L", "l2L0", "l2H0", "l2L1", "l2H1", "l2L2", "l3L", "l3H", "lRCC", "ltool", "lp2y",
];

/// Upper sanity bound on the gravity magnitude, m/s².
pub const MAX_GRAVITY: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("missing link length `{0}`")]
    MissingLength(String),
    #[error("unknown link length `{0}`")]
    UnknownLength(String),
    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("model has no remote-center frame")]
    NoRcmFrame,
    #[error("invalid model: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
    /// Element without a spatial frame (motor rotors, relative-motion friction).
    Lumped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Right,
    /// Reported frame axes have their Y axis mirrored.
    Left,
}

/// Which parameter blocks a row contributes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamFlags {
    pub link_inertia: bool,
    pub motor_inertia: bool,
    pub friction: bool,
    pub stiffness: bool,
}

impl ParamFlags {
    const fn new(link_inertia: bool, motor_inertia: bool, friction: bool, stiffness: bool) -> Self {
        Self {
            link_inertia,
            motor_inertia,
            friction,
            stiffness,
        }
    }
}

/// One row of the kinematic parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub id: String,
    /// Reference frame, `None` for lumped elements.
    pub reference: Option<String>,
    pub a_prev: f64,
    pub alpha_prev: f64,
    pub d_const: f64,
    pub theta_const: f64,
    pub kind: JointKind,
    /// Coefficients `c` with `coordinate = c·q + constant`.
    pub coupling: JointVector,
    pub flags: ParamFlags,
    /// Convex hull of the link's center of mass, in the frame's own axes (m).
    pub hull: Vec<Vector3<f64>>,
}

impl FrameSpec {
    /// Constant part of the variable coordinate (θ for revolute/lumped, d for prismatic).
    pub fn coordinate_offset(&self) -> f64 {
        match self.kind {
            JointKind::Prismatic => self.d_const,
            _ => self.theta_const,
        }
    }

    /// Frame coordinate `c·q + constant`. For fixed frames this is θ.
    pub fn coordinate(&self, q: &JointVector) -> f64 {
        self.coupling.dot(q) + self.coordinate_offset()
    }

    /// (θ, d) of the modified-DH row at configuration `q`.
    pub fn theta_d(&self, q: &JointVector) -> (f64, f64) {
        match self.kind {
            JointKind::Prismatic => (self.theta_const, self.coordinate(q)),
            JointKind::Revolute | JointKind::Lumped => (self.coordinate(q), self.d_const),
            JointKind::Fixed => (self.theta_const, self.d_const),
        }
    }

    pub fn is_lumped(&self) -> bool {
        self.kind == JointKind::Lumped
    }

    pub fn is_moving(&self) -> bool {
        matches!(self.kind, JointKind::Revolute | JointKind::Prismatic)
    }
}

/// Fixed reporting frame attached to another frame of the chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcmFrame {
    pub id: String,
    pub parent: String,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// Serializable content of a [`ChainModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParts {
    pub frames: Vec<FrameSpec>,
    pub lengths: BTreeMap<String, f64>,
    /// Maps q to the equivalent motor coordinates (q^m_6, q^m_7).
    pub motor_coupling: SMatrix<f64, 2, N_JOINTS>,
    /// Gravity in base-frame axes, m/s².
    pub gravity: Vector3<f64>,
    pub handedness: Handedness,
    /// Rest coordinate of the stiffness element(s).
    pub spring_rest: f64,
    pub rcm_frame: Option<RcmFrame>,
    /// Auxiliary tool-tip frame, evaluated by forward kinematics only.
    pub tip: Option<FrameSpec>,
}

/// Immutable manipulator model with a precomputed traversal order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ModelParts", into = "ModelParts")]
pub struct ChainModel {
    parts: ModelParts,
    /// Indices of spatial frames in parent-before-child order.
    order: Vec<usize>,
    /// Parent index per frame, `None` for base children and lumped rows.
    parent: Vec<Option<usize>>,
    tip_parent: Option<usize>,
}

impl From<ModelParts> for ChainModel {
    fn from(parts: ModelParts) -> Self {
        Self::from_parts(parts)
    }
}

impl From<ChainModel> for ModelParts {
    fn from(model: ChainModel) -> Self {
        model.parts
    }
}

impl ChainModel {
    /// Assembles a model without validating it; see [`validate`].
    pub fn from_parts(parts: ModelParts) -> Self {
        let index: BTreeMap<&str, usize> = parts
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| (f.id.as_str(), i))
            .collect();
        let parent: Vec<Option<usize>> = parts
            .frames
            .iter()
            .map(|f| match &f.reference {
                Some(r) if r != BASE_FRAME => index.get(r.as_str()).copied(),
                _ => None,
            })
            .collect();
        let tip_parent = parts
            .tip
            .as_ref()
            .and_then(|t| t.reference.as_deref())
            .and_then(|r| index.get(r).copied());

        // Kahn-style ordering from the base; frames on cycles never get placed.
        let n = parts.frames.len();
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        loop {
            let before = order.len();
            for i in 0..n {
                let frame = &parts.frames[i];
                if placed[i] || frame.is_lumped() {
                    continue;
                }
                let ready = match (&frame.reference, parent[i]) {
                    (Some(r), None) => r == BASE_FRAME,
                    (Some(_), Some(p)) => placed[p],
                    (None, _) => false,
                };
                if ready {
                    placed[i] = true;
                    order.push(i);
                }
            }
            if order.len() == before {
                break;
            }
        }
        Self {
            parts,
            order,
            parent,
            tip_parent,
        }
    }

    /// Assembles and validates a model.
    pub fn new(parts: ModelParts) -> Result<Self, ModelError> {
        let model = Self::from_parts(parts);
        let violations = validate(&model);
        if violations.is_empty() {
            Ok(model)
        } else {
            Err(ModelError::Invalid(violations))
        }
    }

    pub fn parts(&self) -> &ModelParts {
        &self.parts
    }

    pub fn into_parts(self) -> ModelParts {
        self.parts
    }

    pub fn frames(&self) -> &[FrameSpec] {
        &self.parts.frames
    }

    pub fn frame(&self, i: usize) -> &FrameSpec {
        &self.parts.frames[i]
    }

    pub fn frame_index(&self, id: &str) -> Option<usize> {
        self.parts.frames.iter().position(|f| f.id == id)
    }

    pub fn lengths(&self) -> &BTreeMap<String, f64> {
        &self.parts.lengths
    }

    pub fn length(&self, key: &str) -> Option<f64> {
        self.parts.lengths.get(key).copied()
    }

    pub fn gravity(&self) -> Vector3<f64> {
        self.parts.gravity
    }

    pub fn motor_coupling(&self) -> &SMatrix<f64, 2, N_JOINTS> {
        &self.parts.motor_coupling
    }

    pub fn handedness(&self) -> Handedness {
        self.parts.handedness
    }

    pub fn spring_rest(&self) -> f64 {
        self.parts.spring_rest
    }

    pub fn rcm_frame(&self) -> Option<&RcmFrame> {
        self.parts.rcm_frame.as_ref()
    }

    pub fn tip(&self) -> Option<&FrameSpec> {
        self.parts.tip.as_ref()
    }

    pub(crate) fn tip_parent(&self) -> Option<usize> {
        self.tip_parent
    }

    pub fn n_joints(&self) -> usize {
        N_JOINTS
    }

    /// Spatial frames in parent-before-child order.
    pub fn traversal_order(&self) -> &[usize] {
        &self.order
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    /// Moving frames on the path from the base to `i`, including `i` itself.
    pub fn moving_ancestors(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = Some(i);
        let mut guard = 0;
        while let Some(k) = cur {
            if self.parts.frames[k].is_moving() {
                out.push(k);
            }
            cur = self.parent[k];
            guard += 1;
            if guard > self.parts.frames.len() {
                break;
            }
        }
        out
    }

    /// Returns a copy with a different gravity vector.
    pub fn with_gravity(&self, gravity: Vector3<f64>) -> Self {
        let mut parts = self.parts.clone();
        parts.gravity = gravity;
        Self::from_parts(parts)
    }
}

/// Broken model invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    DuplicateId,
    MissingReference,
    Cycle,
    LumpedReference,
    FixedCoupling,
    HullFlagMismatch,
    LumpedInertia,
    NegativeLength,
    GravityRange,
    MotorCouplingPattern,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub frame: Option<String>,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.frame {
            Some(id) => write!(f, "frame {id}: {:?}: {}", self.rule, self.detail),
            None => write!(f, "{:?}: {}", self.rule, self.detail),
        }
    }
}

fn violation(frame: Option<&str>, rule: Rule, detail: impl Into<String>) -> Violation {
    Violation {
        frame: frame.map(str::to_owned),
        rule,
        detail: detail.into(),
    }
}

/// Checks every structural invariant of the model. An empty list means valid.
pub fn validate(model: &ChainModel) -> Vec<Violation> {
    let parts = model.parts();
    let mut out = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, f) in parts.frames.iter().enumerate() {
        if f.id == BASE_FRAME || seen.insert(f.id.as_str(), i).is_some() {
            out.push(violation(Some(&f.id), Rule::DuplicateId, "identifier used twice"));
        }
    }

    for f in &parts.frames {
        let id = Some(f.id.as_str());
        let finite = [f.a_prev, f.alpha_prev, f.d_const, f.theta_const]
            .iter()
            .chain(f.coupling.iter())
            .all(|v| v.is_finite())
            && f.hull.iter().all(|v| v.iter().all(|x| x.is_finite()));
        if !finite {
            out.push(violation(id, Rule::NonFinite, "non-finite constant"));
        }
        match (&f.reference, f.kind) {
            (Some(_), JointKind::Lumped) => out.push(violation(
                id,
                Rule::LumpedReference,
                "lumped element must not have a reference frame",
            )),
            (None, kind) if kind != JointKind::Lumped => out.push(violation(
                id,
                Rule::MissingReference,
                "spatial frame without reference",
            )),
            (Some(r), _) if r != BASE_FRAME && !seen.contains_key(r.as_str()) => out.push(
                violation(id, Rule::MissingReference, format!("reference `{r}` does not exist")),
            ),
            (Some(r), _) if r != BASE_FRAME => {
                if parts.frames[seen[r.as_str()]].is_lumped() {
                    out.push(violation(
                        id,
                        Rule::MissingReference,
                        format!("reference `{r}` is a lumped element"),
                    ));
                }
            }
            _ => {}
        }
        if f.kind == JointKind::Fixed && f.coupling.iter().any(|&c| c != 0.0) {
            out.push(violation(id, Rule::FixedCoupling, "fixed frame with nonzero coupling"));
        }
        if f.hull.is_empty() == f.flags.link_inertia {
            out.push(violation(
                id,
                Rule::HullFlagMismatch,
                if f.flags.link_inertia {
                    "link inertia flagged but no hull vertices"
                } else {
                    "hull vertices given without link inertia"
                },
            ));
        }
        if f.is_lumped() && f.flags.link_inertia {
            out.push(violation(id, Rule::LumpedInertia, "lumped element cannot carry link inertia"));
        }
    }

    // Cycle detection: walk up from every frame; a walk returning to its start is a cycle.
    let n = parts.frames.len();
    let mut on_cycle = vec![false; n];
    for start in 0..n {
        if on_cycle[start] {
            continue;
        }
        let mut path = vec![start];
        let mut cur = model.parent(start);
        while let Some(k) = cur {
            if k == start {
                for &p in &path {
                    on_cycle[p] = true;
                }
                let mut members: Vec<usize> = path.clone();
                members.sort_unstable();
                let names: Vec<&str> = members.iter().map(|&m| parts.frames[m].id.as_str()).collect();
                out.push(violation(
                    Some(&parts.frames[members[0]].id),
                    Rule::Cycle,
                    format!("reference cycle through {}", names.join(" -> ")),
                ));
                break;
            }
            if path.contains(&k) || path.len() > n {
                break;
            }
            path.push(k);
            cur = model.parent(k);
        }
    }

    for (key, &v) in &parts.lengths {
        if !(v >= 0.0) {
            out.push(violation(None, Rule::NegativeLength, format!("length `{key}` = {v}")));
        }
    }
    let g = parts.gravity.norm();
    if !(g.is_finite() && g <= MAX_GRAVITY) {
        out.push(violation(None, Rule::GravityRange, format!("|gravity| = {g}")));
    }
    for r in 0..2 {
        for c in 0..N_JOINTS {
            let v = parts.motor_coupling[(r, c)];
            if !v.is_finite() {
                out.push(violation(None, Rule::NonFinite, "non-finite motor coupling"));
            } else if v != 0.0 && c != 5 && c != 6 {
                out.push(violation(
                    None,
                    Rule::MotorCouplingPattern,
                    format!("motor coupling row {r} uses joint {}", c + 1),
                ));
            }
        }
    }
    out
}

/// Coupling matrix, one row per frame (n_frames × 7).
pub fn coupling_matrix(model: &ChainModel) -> nalgebra::DMatrix<f64> {
    let frames = model.frames();
    nalgebra::DMatrix::from_fn(frames.len(), N_JOINTS, |i, j| frames[i].coupling[j])
}

/// Inertial parametrization of the link blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InertialMode {
    /// Mass and first moment only (4 per link).
    Gravity,
    /// Adds the six second moments about the frame origin (10 per link).
    Full,
}

impl InertialMode {
    pub fn block_len(self) -> usize {
        match self {
            InertialMode::Gravity => 4,
            InertialMode::Full => 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    Inertial,
    Motor,
    Friction,
    Stiffness,
}

pub const INERTIAL_NAMES: [&str; 10] = ["m", "mx", "my", "mz", "xx", "xy", "xz", "yy", "yz", "zz"];
pub const FRICTION_NAMES: [&str; 3] = ["fc", "fv", "fo"];

impl ParamGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamGroup::Inertial => "inertial",
            ParamGroup::Motor => "motor",
            ParamGroup::Friction => "friction",
            ParamGroup::Stiffness => "stiffness",
        }
    }

    pub fn param_name(self, index: usize) -> &'static str {
        match self {
            ParamGroup::Inertial => INERTIAL_NAMES[index],
            ParamGroup::Friction => FRICTION_NAMES[index],
            ParamGroup::Motor => "im",
            ParamGroup::Stiffness => "ks",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "inertial" => Some(ParamGroup::Inertial),
            "motor" => Some(ParamGroup::Motor),
            "friction" => Some(ParamGroup::Friction),
            "stiffness" => Some(ParamGroup::Stiffness),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub frame: String,
    pub frame_index: usize,
    pub group: ParamGroup,
    pub index: usize,
}

/// Start offset of one parameter block inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub frame_index: usize,
    pub group: ParamGroup,
    pub offset: usize,
}

/// Ordering of the flat dynamic-parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub mode: InertialMode,
    pub entries: Vec<ParamEntry>,
}

impl ParamLayout {
    /// One block per checked flag, rows in table order, groups in column order.
    pub fn for_model(model: &ChainModel, mode: InertialMode) -> Self {
        let mut entries = Vec::new();
        for (fi, f) in model.frames().iter().enumerate() {
            let mut push = |group: ParamGroup, n: usize| {
                for index in 0..n {
                    entries.push(ParamEntry {
                        frame: f.id.clone(),
                        frame_index: fi,
                        group,
                        index,
                    });
                }
            };
            if f.flags.link_inertia {
                push(ParamGroup::Inertial, mode.block_len());
            }
            if f.flags.motor_inertia {
                push(ParamGroup::Motor, 1);
            }
            if f.flags.friction {
                push(ParamGroup::Friction, 3);
            }
            if f.flags.stiffness {
                push(ParamGroup::Stiffness, 1);
            }
        }
        Self { mode, entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn blocks(&self) -> impl Iterator<Item = Block> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.index == 0)
            .map(|(offset, e)| Block {
                frame_index: e.frame_index,
                group: e.group,
                offset,
            })
    }

    pub fn blocks_of(&self, group: ParamGroup) -> impl Iterator<Item = Block> + '_ {
        self.blocks().filter(move |b| b.group == group)
    }

    pub fn find(&self, frame: &str, group: ParamGroup, index: usize) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.frame == frame && e.group == group && e.index == index)
    }

    /// Column label `frameid.group.param`.
    pub fn name(&self, i: usize) -> String {
        let e = &self.entries[i];
        format!("{}.{}.{}", e.frame, e.group.as_str(), e.group.param_name(e.index))
    }

    /// SI unit of entry `i` given the model's joint kinds.
    pub fn unit(&self, model: &ChainModel, i: usize) -> &'static str {
        let e = &self.entries[i];
        let prismatic = model.frame(e.frame_index).kind == JointKind::Prismatic;
        match (e.group, e.index) {
            (ParamGroup::Inertial, 0) => "kg",
            (ParamGroup::Inertial, 1..=3) => "kg*m",
            (ParamGroup::Inertial, _) => "kg*m^2",
            (ParamGroup::Motor, _) if prismatic => "kg",
            (ParamGroup::Motor, _) => "kg*m^2",
            (ParamGroup::Friction, 1) if prismatic => "N*s/m",
            (ParamGroup::Friction, 1) => "N*m*s/rad",
            (ParamGroup::Friction, _) if prismatic => "N",
            (ParamGroup::Friction, _) => "N*m",
            (ParamGroup::Stiffness, _) if prismatic => "N/m",
            (ParamGroup::Stiffness, _) => "N*m/rad",
        }
    }
}

/// Options of the PSM preset beyond the link lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct PsmOptions {
    pub handedness: Handedness,
    pub spring_rest: f64,
    /// Per-frame hull overrides (m, frame axes).
    pub hulls: BTreeMap<String, Vec<Vector3<f64>>>,
}

impl Default for PsmOptions {
    fn default() -> Self {
        Self {
            handedness: Handedness::Right,
            spring_rest: 0.0,
            hulls: BTreeMap::new(),
        }
    }
}

/// Default gravity: 9.81 m/s² along −z of the base frame.
pub fn default_gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -9.81)
}

/// Default motor map: q^m_6 = q_6, q^m_7 = q_7.
pub fn default_motor_coupling() -> SMatrix<f64, 2, N_JOINTS> {
    let mut m = SMatrix::<f64, 2, N_JOINTS>::zeros();
    m[(0, 5)] = 1.0;
    m[(1, 6)] = 1.0;
    m
}

fn unit(j: usize) -> JointVector {
    let mut v = JointVector::zeros();
    v[j] = 1.0;
    v
}

/// Builds the dVRK-Si PSM model with default options.
pub fn build_psm_preset(
    lengths: &BTreeMap<String, f64>,
    gravity: Vector3<f64>,
    motor_coupling: SMatrix<f64, 2, N_JOINTS>,
) -> Result<ChainModel, ModelError> {
    build_psm_preset_with(lengths, gravity, motor_coupling, &PsmOptions::default())
}

/// Builds the dVRK-Si PSM model: 16 frame rows, a tool-tip frame between the
/// jaws and a remote-center reporting frame.
pub fn build_psm_preset_with(
    lengths: &BTreeMap<String, f64>,
    gravity: Vector3<f64>,
    motor_coupling: SMatrix<f64, 2, N_JOINTS>,
    options: &PsmOptions,
) -> Result<ChainModel, ModelError> {
    let mut len = BTreeMap::new();
    for key in PSM_LENGTH_KEYS {
        let v = *lengths
            .get(key)
            .ok_or_else(|| ModelError::MissingLength(key.to_owned()))?;
        len.insert(key.to_owned(), v);
    }
    let l = |k: &str| len[k];
    let lc2 = l("l2H1") - l("lRCC");
    let pi2 = FRAC_PI_2;

    use JointKind::*;
    let row = |id: &str,
               reference: Option<&str>,
               a_prev: f64,
               alpha_prev: f64,
               d_const: f64,
               theta_const: f64,
               kind: JointKind,
               coupling: JointVector,
               flags: ParamFlags| FrameSpec {
        id: id.to_owned(),
        reference: reference.map(str::to_owned),
        a_prev,
        alpha_prev,
        d_const,
        theta_const,
        kind,
        coupling,
        flags,
        hull: Vec::new(),
    };
    let zero = JointVector::zeros();
    let none = ParamFlags::default();
    let lf = ParamFlags::new(true, false, true, false);
    let f_only = ParamFlags::new(false, false, true, false);
    let mf = ParamFlags::new(false, true, true, false);
    let motor_row = |r: usize| JointVector::from_fn(|j, _| motor_coupling[(r, j)]);

    let mut frames = vec![
        row("1", Some("0"), 0.0, pi2, 0.0, pi2, Revolute, unit(0), lf),
        row("1'", Some("1"), -l("l1H"), -pi2, 0.0, pi2, Fixed, zero, none),
        row("2", Some("1'"), l("l1L"), 0.0, 0.0, -pi2, Revolute, unit(1), lf),
        row("2'", Some("2"), l("l2L0"), pi2, l("l2H0"), 0.0, Fixed, zero, none),
        row("2''", Some("2'"), 0.0, -pi2, 0.0, pi2, Revolute, -unit(1), lf),
        row("2'''", Some("2''"), l("l2L1"), pi2, l("l2H1"), 0.0, Fixed, zero, none),
        row("2''''", Some("2'''"), 0.0, -pi2, 0.0, 0.0, Revolute, unit(1), lf),
        row("3", Some("2''''"), l("l2L2"), -pi2, lc2, 0.0, Prismatic, unit(2), lf),
        row("3'", Some("3"), -l("l3L"), 0.0, l("l3H"), 0.0, Prismatic, -0.5 * unit(2), f_only),
        row("4", Some("3"), 0.0, 0.0, l("ltool"), 0.0, Revolute, unit(3), ParamFlags::new(false, true, true, true)),
        row("5", Some("4"), 0.0, pi2, 0.0, pi2, Revolute, unit(4), mf),
        row("6", Some("5"), l("lp2y"), -pi2, 0.0, pi2, Revolute, unit(5), f_only),
        row("7", Some("5"), l("lp2y"), -pi2, 0.0, pi2, Revolute, unit(6), f_only),
        row("M6", None, 0.0, 0.0, 0.0, 0.0, Lumped, motor_row(0), mf),
        row("M7", None, 0.0, 0.0, 0.0, 0.0, Lumped, motor_row(1), mf),
        row("F67", None, 0.0, 0.0, 0.0, 0.0, Lumped, unit(6) - unit(5), f_only),
    ];

    for i in 0..frames.len() {
        if !frames[i].flags.link_inertia {
            continue;
        }
        frames[i].hull = match options.hulls.get(&frames[i].id) {
            Some(h) => h.clone(),
            None => default_hull(&frames, i),
        };
    }

    let tip = row(
        "tip",
        Some("5"),
        l("lp2y"),
        -pi2,
        0.0,
        pi2,
        Revolute,
        0.5 * (unit(5) + unit(6)),
        none,
    );

    let mut parts = ModelParts {
        frames,
        lengths: len,
        motor_coupling,
        gravity,
        handedness: options.handedness,
        spring_rest: options.spring_rest,
        rcm_frame: None,
        tip: Some(tip),
    };
    parts.rcm_frame = Some(psm_rcm_frame(&parts));
    Ok(ChainModel::from_parts(parts))
}

/// Remote-center frame: origin at the insertion-axis pivot, z along the
/// insertion direction at q = 0, y along the joint-1 axis.
fn psm_rcm_frame(parts: &ModelParts) -> RcmFrame {
    let model = ChainModel::from_parts(parts.clone());
    let fk = crate::kinematics::forward_kinematics(&model, &JointVector::zeros());
    let t1p = model.frame_index("1'").map(|i| fk.frame(i).clone()).expect("preset frame");
    let t1 = model.frame_index("1").map(|i| fk.frame(i).clone()).expect("preset frame");
    let t3 = model.frame_index("3").map(|i| fk.frame(i).clone()).expect("preset frame");
    let l = |k: &str| parts.lengths[k];
    let pivot_local = Vector3::new(l("l1L") + l("l2L1"), -l("l2H1"), 0.0);
    let origin = t1p.transform_point(&pivot_local);
    let z = t3.rotation.column(2).into_owned();
    let y = t1.rotation.column(2).into_owned();
    let x = y.cross(&z);
    RcmFrame {
        id: "RCM".to_owned(),
        parent: BASE_FRAME.to_owned(),
        rotation: Matrix3::from_columns(&[x, y, z]),
        translation: origin,
    }
}

/// Axis-aligned box around the frame origin and the origins of the frames the
/// link carries up to the next joint, padded by 2 cm plus 10 % of the extent.
fn default_hull(frames: &[FrameSpec], i: usize) -> Vec<Vector3<f64>> {
    let q0 = JointVector::zeros();
    let mut points = vec![Vector3::zeros()];
    let mut stack = vec![(i, crate::kinematics::HomTransform::identity())];
    while let Some((k, tk)) = stack.pop() {
        for child in frames.iter().filter(|f| f.reference.as_deref() == Some(frames[k].id.as_str())) {
            let (theta, d) = child.theta_d(&q0);
            let t = tk.compose(&mdh_transform(child.a_prev, child.alpha_prev, d, theta));
            points.push(t.translation);
            if child.kind == JointKind::Fixed {
                let ci = frames.iter().position(|f| f.id == child.id).unwrap_or(k);
                stack.push((ci, t));
            }
        }
    }
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in &points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let pad = (hi - lo) * 0.1 + Vector3::repeat(0.02);
    lo -= pad;
    hi += pad;
    let mut out = Vec::with_capacity(8);
    for ix in 0..2 {
        for iy in 0..2 {
            for iz in 0..2 {
                out.push(Vector3::new(
                    if ix == 0 { lo.x } else { hi.x },
                    if iy == 0 { lo.y } else { hi.y },
                    if iz == 0 { lo.z } else { hi.z },
                ));
            }
        }
    }
    out
}

/// Example PSM link lengths (m). Placeholder values: the frame figure is not
/// machine-readable, so these only satisfy the remote-center closure
/// conditions `l2L2 = l2H0` and `l2H1 = l1H`.
pub fn example_psm_lengths() -> BTreeMap<String, f64> {
    [
        ("l1H", 0.180),
        ("l1L", 0.100),
        ("l2L0", 0.080),
        ("l2H0", 0.120),
        ("l2L1", 0.400),
        ("l2H1", 0.180),
        ("l2L2", 0.120),
        ("l3L", 0.060),
        ("l3H", 0.150),
        ("lRCC", 0.4318),
        ("ltool", 0.4162),
        ("lp2y", 0.0091),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v))
    .collect()
}

/// PSM preset built from [`example_psm_lengths`] and default options.
pub fn example_psm() -> ChainModel {
    build_psm_preset(&example_psm_lengths(), default_gravity(), default_motor_coupling())
        .expect("all example lengths present")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preset() -> ChainModel {
        example_psm()
    }

    #[test]
    fn preset_has_sixteen_rows_and_is_valid() {
        let m = preset();
        assert_eq!(m.frames().len(), 16);
        assert!(validate(&m).is_empty(), "{:?}", validate(&m));
        let ids: Vec<&str> = m.frames().iter().map(|f| f.id.as_str()).collect();
        assert_eq!(
            ids,
            ["1", "1'", "2", "2'", "2''", "2'''", "2''''", "3", "3'", "4", "5", "6", "7", "M6", "M7", "F67"]
        );
    }

    #[test]
    fn row_2pp_parameters() {
        let m = preset();
        let f = m.frame(m.frame_index("2''").unwrap());
        assert_eq!(f.reference.as_deref(), Some("2'"));
        assert_eq!(f.a_prev, 0.0);
        assert_eq!(f.alpha_prev, -FRAC_PI_2);
        assert_eq!(f.theta_const, FRAC_PI_2);
        assert_eq!(f.coupling, -unit(1));
        assert_eq!(f.flags, ParamFlags::new(true, false, true, false));
    }

    #[test]
    fn row_3p_parameters() {
        let m = preset();
        let f = m.frame(m.frame_index("3'").unwrap());
        assert_eq!(f.reference.as_deref(), Some("3"));
        assert_eq!(f.a_prev, -m.length("l3L").unwrap());
        assert_eq!(f.kind, JointKind::Prismatic);
        assert_eq!(f.d_const, m.length("l3H").unwrap());
        assert_eq!(f.coupling, -0.5 * unit(2));
        assert_eq!(f.flags, ParamFlags::new(false, false, true, false));
    }

    #[test]
    fn frame_3_carries_lc2() {
        let m = preset();
        let f = m.frame(m.frame_index("3").unwrap());
        assert_eq!(f.d_const, m.length("l2H1").unwrap() - m.length("lRCC").unwrap());
    }

    #[test]
    fn missing_length_names_key() {
        let mut lengths = example_psm_lengths();
        lengths.remove("l2L1");
        let err = build_psm_preset(&lengths, default_gravity(), default_motor_coupling()).unwrap_err();
        assert_eq!(err, ModelError::MissingLength("l2L1".into()));
        assert!(err.to_string().contains("l2L1"));
    }

    #[test]
    fn zero_lengths_still_valid() {
        let lengths = PSM_LENGTH_KEYS.iter().map(|k| (k.to_string(), 0.0)).collect();
        let m = build_psm_preset(&lengths, Vector3::zeros(), default_motor_coupling()).unwrap();
        assert!(validate(&m).is_empty());
    }

    #[test]
    fn cycle_is_reported_on_frame_5() {
        let mut parts = preset().into_parts();
        let i5 = parts.frames.iter().position(|f| f.id == "5").unwrap();
        parts.frames[i5].reference = Some("6".into());
        let v = validate(&ChainModel::from_parts(parts));
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].rule, Rule::Cycle);
        assert_eq!(v[0].frame.as_deref(), Some("5"));
    }

    #[test]
    fn removed_hull_is_reported() {
        let mut parts = preset().into_parts();
        let i2 = parts.frames.iter().position(|f| f.id == "2").unwrap();
        parts.frames[i2].hull.clear();
        let v = validate(&ChainModel::from_parts(parts));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::HullFlagMismatch);
        assert_eq!(v[0].frame.as_deref(), Some("2"));
    }

    #[test]
    fn other_violations() {
        let mut parts = preset().into_parts();
        parts.gravity = Vector3::new(0.0, 0.0, -25.0);
        parts.motor_coupling[(0, 2)] = 1.0;
        parts.lengths.insert("l1H".into(), -0.1);
        let i1p = parts.frames.iter().position(|f| f.id == "1'").unwrap();
        parts.frames[i1p].coupling[0] = 1.0;
        let rules: Vec<Rule> = validate(&ChainModel::from_parts(parts)).iter().map(|v| v.rule).collect();
        for r in [Rule::GravityRange, Rule::MotorCouplingPattern, Rule::NegativeLength, Rule::FixedCoupling] {
            assert!(rules.contains(&r), "{r:?} missing from {rules:?}");
        }
    }

    #[test]
    fn coupling_rows() {
        let m = preset();
        let c = coupling_matrix(&m);
        let row = |id: &str| c.row(m.frame_index(id).unwrap()).clone_owned();
        assert_eq!(row("2''''").transpose(), unit(1));
        assert_eq!(row("F67").transpose(), unit(6) - unit(5));
        for id in ["1'", "2'", "2'''"] {
            assert!(row(id).iter().all(|&x| x == 0.0));
        }
        // Rows other than the motor rows: 11 nonzero rows, 12 entries.
        let non_motor: Vec<usize> = (0..16).filter(|&i| !m.frame(i).id.starts_with('M')).collect();
        let nz_rows = non_motor.iter().filter(|&&i| c.row(i).iter().any(|&x| x != 0.0)).count();
        let nz = non_motor.iter().map(|&i| c.row(i).iter().filter(|&&x| x != 0.0).count()).sum::<usize>();
        assert_eq!(nz_rows, 11);
        assert_eq!(nz, 12);
        assert_eq!(row("M6").transpose(), unit(5));
        assert_eq!(row("M7").transpose(), unit(6));
    }

    #[test]
    fn layout_dimension_is_64_in_gravity_mode() {
        let m = preset();
        let l = ParamLayout::for_model(&m, InertialMode::Gravity);
        assert_eq!(l.dim(), 5 * 4 + 13 * 3 + 4 + 1);
        assert_eq!(l.dim(), 64);
        assert_eq!(ParamLayout::for_model(&m, InertialMode::Full).dim(), 5 * 10 + 13 * 3 + 4 + 1);
        assert_eq!(l.name(0), "1.inertial.m");
        assert_eq!(l.unit(&m, l.find("3", ParamGroup::Friction, 0).unwrap()), "N");
    }

    #[test]
    fn serde_round_trip_is_exact() {
        let m = preset();
        let s = serde_json::to_string(&m).unwrap();
        let back: ChainModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.traversal_order(), m.traversal_order());
    }

    #[test]
    fn traversal_handles_branching() {
        let m = preset();
        let order = m.traversal_order();
        assert_eq!(order.len(), 13);
        let pos = |id: &str| order.iter().position(|&i| m.frame(i).id == id).unwrap();
        assert!(pos("5") < pos("6") && pos("5") < pos("7"));
        assert!(pos("3") < pos("3'") && pos("3") < pos("4"));
    }
}
