//! Forward kinematics of the coupled frame tree.

use std::fmt;
use std::ops::Mul;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::model::{ChainModel, FrameSpec, Handedness, JointKind, ModelError, BASE_FRAME};
use crate::{JointVector, N_JOINTS};

/// Joint positions, velocities and accelerations (joint 3 in m, m/s, m/s²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub q: JointVector,
    pub qd: JointVector,
    pub qdd: JointVector,
}

impl RobotState {
    pub fn new(q: JointVector, qd: JointVector, qdd: JointVector) -> Self {
        Self { q, qd, qdd }
    }

    /// State at rest at `q`.
    pub fn at_rest(q: JointVector) -> Self {
        Self::new(q, JointVector::zeros(), JointVector::zeros())
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qd.iter()).chain(self.qdd.iter()).all(|v| v.is_finite())
    }
}

/// Rigid transform (rotation may be improper when a mirrored frame is reported).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl HomTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn rot_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(
            Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
            Vector3::zeros(),
        )
    }

    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(
            Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            Vector3::zeros(),
        )
    }

    pub fn trans_x(a: f64) -> Self {
        Self::new(Matrix3::identity(), Vector3::new(a, 0.0, 0.0))
    }

    pub fn trans_z(d: f64) -> Self {
        Self::new(Matrix3::identity(), Vector3::new(0.0, 0.0, d))
    }

    pub fn compose(&self, other: &HomTransform) -> HomTransform {
        HomTransform::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    /// Inverse assuming an orthogonal rotation block.
    pub fn inverse(&self) -> HomTransform {
        let rt = self.rotation.transpose();
        HomTransform::new(rt, -(rt * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// ‖RᵀR − I‖∞ (max abs entry).
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max()
    }
}

impl Mul for &HomTransform {
    type Output = HomTransform;

    fn mul(self, rhs: &HomTransform) -> HomTransform {
        self.compose(rhs)
    }
}

/// RotX(α)·TransX(a)·RotZ(θ)·TransZ(d).
pub fn mdh_transform(a_prev: f64, alpha_prev: f64, d: f64, theta: f64) -> HomTransform {
    let (sa, ca) = alpha_prev.sin_cos();
    let (st, ct) = theta.sin_cos();
    HomTransform::new(
        Matrix3::new(
            ct,
            -st,
            0.0,
            st * ca,
            ct * ca,
            -sa,
            st * sa,
            ct * sa,
            ca,
        ),
        Vector3::new(a_prev, -d * sa, d * ca),
    )
}

fn row_transform(frame: &FrameSpec, q: &JointVector) -> HomTransform {
    let (theta, d) = frame.theta_d(q);
    mdh_transform(frame.a_prev, frame.alpha_prev, d, theta)
}

/// Variable coordinate of every row (θ, or d for prismatic rows), in model order.
pub fn frame_coordinates(model: &ChainModel, q: &JointVector) -> Vec<f64> {
    model.frames().iter().map(|f| f.coordinate(q)).collect()
}

/// Base-frame transforms of every spatial frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePoses {
    frames: Vec<Option<HomTransform>>,
    tip: Option<HomTransform>,
    rcm: Option<HomTransform>,
    ids: Vec<String>,
    tip_id: Option<String>,
    rcm_id: Option<String>,
}

impl FramePoses {
    /// Transform of frame `i` (model order). Panics for lumped rows.
    pub fn frame(&self, i: usize) -> &HomTransform {
        self.frames[i].as_ref().expect("lumped elements have no spatial frame")
    }

    pub fn try_frame(&self, i: usize) -> Option<&HomTransform> {
        self.frames[i].as_ref()
    }

    pub fn tip(&self) -> Option<&HomTransform> {
        self.tip.as_ref()
    }

    pub fn rcm(&self) -> Option<&HomTransform> {
        self.rcm.as_ref()
    }

    /// Look up by identifier, including the tip and remote-center frames.
    pub fn get(&self, id: &str) -> Option<&HomTransform> {
        if let Some(i) = self.ids.iter().position(|f| f == id) {
            return self.frames[i].as_ref();
        }
        if self.tip_id.as_deref() == Some(id) {
            return self.tip.as_ref();
        }
        if self.rcm_id.as_deref() == Some(id) {
            return self.rcm.as_ref();
        }
        None
    }

    /// All spatial frames as (id, transform) pairs.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &HomTransform)> {
        self.ids
            .iter()
            .zip(&self.frames)
            .filter_map(|(id, t)| t.as_ref().map(|t| (id.as_str(), t)))
            .chain(self.tip_id.as_deref().zip(self.tip.as_ref()))
            .chain(self.rcm_id.as_deref().zip(self.rcm.as_ref()))
    }
}

/// Right-handed transforms used internally by the dynamics.
pub(crate) fn chain_poses(model: &ChainModel, q: &JointVector) -> FramePoses {
    let frames = model.frames();
    let mut out: Vec<Option<HomTransform>> = vec![None; frames.len()];
    for &i in model.traversal_order() {
        let local = row_transform(&frames[i], q);
        out[i] = Some(match model.parent(i) {
            Some(p) => out[p].as_ref().expect("parent placed first").compose(&local),
            None => local,
        });
    }
    let tip = model.tip().and_then(|t| {
        let local = row_transform(t, q);
        match t.reference.as_deref() {
            Some(BASE_FRAME) => Some(local),
            _ => model.tip_parent().and_then(|p| out[p].as_ref()).map(|pt| pt.compose(&local)),
        }
    });
    let rcm = model.rcm_frame().and_then(|r| {
        let offset = HomTransform::new(r.rotation, r.translation);
        if r.parent == BASE_FRAME {
            Some(offset)
        } else {
            model
                .frame_index(&r.parent)
                .and_then(|p| out[p].as_ref())
                .map(|pt| pt.compose(&offset))
        }
    });
    FramePoses {
        frames: out,
        tip,
        rcm,
        ids: frames.iter().map(|f| f.id.clone()).collect(),
        tip_id: model.tip().map(|t| t.id.clone()),
        rcm_id: model.rcm_frame().map(|r| r.id.clone()),
    }
}

/// Base-frame transform of every non-lumped frame (plus tip and remote center).
/// With left-handed reporting the Y axis of every frame is mirrored.
pub fn forward_kinematics(model: &ChainModel, q: &JointVector) -> FramePoses {
    let mut poses = chain_poses(model, q);
    if model.handedness() == Handedness::Left {
        let mirror = |t: &mut HomTransform| {
            let y = -t.rotation.column(1);
            t.rotation.set_column(1, &y);
        };
        poses.frames.iter_mut().flatten().for_each(mirror);
        poses.tip.iter_mut().for_each(mirror);
        poses.rcm.iter_mut().for_each(mirror);
    }
    poses
}

/// Task-space pose: position in mm, extrinsic XYZ Euler angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose6 {
    pub position_mm: Vector3<f64>,
    /// (r_x, r_y, r_z), each in (−180°, 180°].
    pub euler_deg: Vector3<f64>,
}

/// Wraps an angle in degrees into (−180, 180].
pub fn wrap_deg(a: f64) -> f64 {
    let mut r = a % 360.0;
    if r <= -180.0 {
        r += 360.0;
    } else if r > 180.0 {
        r -= 360.0;
    }
    r
}

impl Pose6 {
    pub fn new(position_mm: Vector3<f64>, euler_deg: Vector3<f64>) -> Self {
        Self {
            position_mm,
            euler_deg,
        }
    }

    /// R = Rz(r_z)·Ry(r_y)·Rx(r_x). Gimbal lock folds the rotation into r_z.
    pub fn from_transform(t: &HomTransform) -> Self {
        let r = &t.rotation;
        let cy = (r[(0, 0)].powi(2) + r[(1, 0)].powi(2)).sqrt();
        let (rx, ry, rz) = if cy > 1e-12 {
            (
                r[(2, 1)].atan2(r[(2, 2)]),
                (-r[(2, 0)]).atan2(cy),
                r[(1, 0)].atan2(r[(0, 0)]),
            )
        } else {
            (0.0, (-r[(2, 0)]).atan2(cy), (-r[(0, 1)]).atan2(r[(1, 1)]))
        };
        Self::new(
            t.translation * 1000.0,
            Vector3::new(wrap_deg(rx.to_degrees()), wrap_deg(ry.to_degrees()), wrap_deg(rz.to_degrees())),
        )
    }

    pub fn to_transform(&self) -> HomTransform {
        let e = self.euler_deg.map(f64::to_radians);
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), e.z)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), e.y)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), e.x);
        HomTransform::new(rot.into_inner(), self.position_mm / 1000.0)
    }

    /// CSV row `x_mm,y_mm,z_mm,rx_deg,ry_deg,rz_deg` with two decimals.
    pub fn to_csv_row(&self) -> String {
        let p = &self.position_mm;
        let e = &self.euler_deg;
        format!("{:.2},{:.2},{:.2},{:.2},{:.2},{:.2}", p.x, p.y, p.z, e.x, e.y, e.z)
    }
}

impl fmt::Display for Pose6 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_csv_row())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("malformed pose row `{0}`")]
pub struct PoseParseError(pub String);

impl FromStr for Pose6 {
    type Err = PoseParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let vals: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().replace(' ', "").parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| PoseParseError(s.to_owned()))?;
        if vals.len() != 6 {
            return Err(PoseParseError(s.to_owned()));
        }
        Ok(Pose6::new(
            Vector3::new(vals[0], vals[1], vals[2]),
            Vector3::new(vals[3], vals[4], vals[5]),
        ))
    }
}

/// Tool-tip pose expressed in the remote-center frame.
pub fn rcm_pose(model: &ChainModel, q: &JointVector) -> Result<Pose6, ModelError> {
    let poses = chain_poses(model, q);
    let rcm = poses.rcm().ok_or(ModelError::NoRcmFrame)?;
    let tip = poses.tip().ok_or(ModelError::UnknownFrame("tip".into()))?;
    Ok(Pose6::from_transform(&rcm.inverse().compose(tip)))
}

/// Base-frame center of mass of a link as an affine map of its local CoM.
#[derive(Debug, Clone, PartialEq)]
pub struct ComMap {
    pub frame_index: usize,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl ComMap {
    pub fn position(&self, local_com: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * local_com + self.translation
    }

    /// Mass-weighted position m·p from (m, m·c): linear in the parameters.
    pub fn first_moment(&self, mass: f64, local_first_moment: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * local_first_moment + self.translation * mass
    }
}

/// One affine CoM map per link-inertia row.
pub fn com_positions_linear(model: &ChainModel, q: &JointVector) -> Vec<ComMap> {
    let poses = chain_poses(model, q);
    model
        .frames()
        .iter()
        .enumerate()
        .filter(|(_, f)| f.flags.link_inertia && !f.is_lumped())
        .map(|(i, _)| {
            let t = poses.frame(i);
            ComMap {
                frame_index: i,
                rotation: t.rotation,
                translation: t.translation,
            }
        })
        .collect()
}

/// Base-frame motion of one spatial frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMotion {
    pub rotation: Matrix3<f64>,
    pub origin: Vector3<f64>,
    pub omega: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub alpha: Vector3<f64>,
    /// Linear acceleration of the origin; includes −g when gravity-biased.
    pub accel: Vector3<f64>,
    /// Rate of the frame's own coordinate (θ̇ or ḋ).
    pub rate: f64,
    pub rate_dot: f64,
}

impl FrameMotion {
    pub fn axis(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }
}

/// Outward recursion for the velocities and accelerations of all spatial
/// frames (`None` for lumped rows), using θ̇ = C·q̇ and θ̈ = C·q̈.
pub fn frame_kinematics_derivatives(
    model: &ChainModel,
    state: &RobotState,
    gravity_bias: bool,
) -> Vec<Option<FrameMotion>> {
    let base_accel = if gravity_bias {
        -model.gravity()
    } else {
        Vector3::zeros()
    };
    motion_recursion(model, state, base_accel)
}

pub(crate) fn motion_recursion(
    model: &ChainModel,
    state: &RobotState,
    base_accel: Vector3<f64>,
) -> Vec<Option<FrameMotion>> {
    let frames = model.frames();
    let mut out: Vec<Option<FrameMotion>> = vec![None; frames.len()];
    let base = FrameMotion {
        rotation: Matrix3::identity(),
        origin: Vector3::zeros(),
        omega: Vector3::zeros(),
        velocity: Vector3::zeros(),
        alpha: Vector3::zeros(),
        accel: base_accel,
        rate: 0.0,
        rate_dot: 0.0,
    };
    for &i in model.traversal_order() {
        let f = &frames[i];
        let parent = match model.parent(i) {
            Some(p) => out[p].as_ref().expect("parent placed first"),
            None => &base,
        };
        let local = row_transform(f, &state.q);
        let rotation = parent.rotation * local.rotation;
        let r = parent.rotation * local.translation;
        let origin = parent.origin + r;
        let z = rotation.column(2).into_owned();
        let (rate, rate_dot) = match f.kind {
            JointKind::Revolute | JointKind::Prismatic => (f.coupling.dot(&state.qd), f.coupling.dot(&state.qdd)),
            _ => (0.0, 0.0),
        };
        let w = parent.omega;
        let mut velocity = parent.velocity + w.cross(&r);
        let mut accel = parent.accel + parent.alpha.cross(&r) + w.cross(&w.cross(&r));
        let (omega, alpha) = if f.kind == JointKind::Prismatic {
            velocity += z * rate;
            accel += z * rate_dot + 2.0 * w.cross(&(z * rate));
            (w, parent.alpha)
        } else {
            (w + z * rate, parent.alpha + z * rate_dot + w.cross(&(z * rate)))
        };
        out[i] = Some(FrameMotion {
            rotation,
            origin,
            omega,
            velocity,
            alpha,
            accel,
            rate,
            rate_dot,
        });
    }
    out
}

/// Geometric Jacobians (linear, angular) of every spatial frame origin with
/// respect to q, assembled from forward-kinematics axes and positions.
pub fn geometric_jacobians(
    model: &ChainModel,
    q: &JointVector,
) -> Vec<Option<(SMatrix<f64, 3, N_JOINTS>, SMatrix<f64, 3, N_JOINTS>)>> {
    let poses = chain_poses(model, q);
    (0..model.frames().len())
        .map(|k| {
            let tk = poses.try_frame(k)?;
            let mut jv = SMatrix::<f64, 3, N_JOINTS>::zeros();
            let mut jw = SMatrix::<f64, 3, N_JOINTS>::zeros();
            for i in model.moving_ancestors(k) {
                let ti = poses.frame(i);
                let z = ti.rotation.column(2).into_owned();
                let frame = model.frame(i);
                for j in 0..N_JOINTS {
                    let c = frame.coupling[j];
                    if c == 0.0 {
                        continue;
                    }
                    if frame.kind == JointKind::Prismatic {
                        jv.set_column(j, &(jv.column(j) + z * c));
                    } else {
                        jv.set_column(j, &(jv.column(j) + z.cross(&(tk.translation - ti.translation)) * c));
                        jw.set_column(j, &(jw.column(j) + z * c));
                    }
                }
            }
            Some((jv, jw))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_psm_preset, default_motor_coupling, example_psm, example_psm_lengths, PSM_LENGTH_KEYS};
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn mdh_identity() {
        let t = mdh_transform(0.0, 0.0, 0.0, 0.0);
        assert_eq!(t, HomTransform::identity());
    }

    #[test]
    fn mdh_matches_product_oracle() {
        // RotX(90°)·RotZ(90°) by direct multiplication.
        let t = mdh_transform(0.0, FRAC_PI_2, 0.0, FRAC_PI_2);
        let expected = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
        assert_relative_eq!(t.rotation, expected, epsilon = 1e-15);
        assert_relative_eq!(t.translation, Vector3::zeros(), epsilon = 1e-15);
        for &(a, al, d, th) in &[(0.3, 0.7, -0.2, 1.1), (0.0, -FRAC_PI_2, 0.4, 2.0)] {
            let prod = &(&(&HomTransform::rot_x(al) * &HomTransform::trans_x(a)) * &HomTransform::rot_z(th))
                * &HomTransform::trans_z(d);
            let t = mdh_transform(a, al, d, th);
            assert_relative_eq!(t.rotation, prod.rotation, epsilon = 1e-14);
            assert_relative_eq!(t.translation, prod.translation, epsilon = 1e-14);
        }
    }

    #[test]
    fn mdh_row_2p() {
        let (l2l0, l2h0) = (0.08, 0.12);
        let t = mdh_transform(l2l0, FRAC_PI_2, l2h0, 0.0);
        assert_relative_eq!(t.rotation, HomTransform::rot_x(FRAC_PI_2).rotation, epsilon = 1e-15);
        assert_relative_eq!(t.translation, Vector3::new(l2l0, -l2h0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn coordinates_at_zero() {
        let m = example_psm();
        let c = frame_coordinates(&m, &JointVector::zeros());
        let at = |id: &str| c[m.frame_index(id).unwrap()];
        assert_eq!(at("1"), FRAC_PI_2);
        assert_eq!(at("2"), -FRAC_PI_2);
        assert_eq!(at("5"), FRAC_PI_2);
        let mut q = JointVector::zeros();
        q[2] = 0.02;
        let c = frame_coordinates(&m, &q);
        assert_relative_eq!(c[m.frame_index("3'").unwrap()], m.length("l3H").unwrap() - 0.01, epsilon = 1e-15);
        for x in [-1.0, 0.3, 2.5] {
            q[5] = x;
            q[6] = x;
            assert_eq!(frame_coordinates(&m, &q)[m.frame_index("F67").unwrap()], 0.0);
        }
    }

    #[test]
    fn degenerate_chain_has_zero_positions() {
        let lengths = PSM_LENGTH_KEYS.iter().map(|k| (k.to_string(), 0.0)).collect();
        let m = build_psm_preset(&lengths, Vector3::zeros(), default_motor_coupling()).unwrap();
        let fk = forward_kinematics(&m, &JointVector::zeros());
        for (_, t) in fk.iter() {
            assert_eq!(t.translation.norm(), 0.0);
        }
    }

    #[test]
    fn rcm_pose_of_identity_and_z_rotation() {
        let p = Pose6::from_transform(&HomTransform::identity());
        assert_eq!(p.position_mm, Vector3::zeros());
        assert_eq!(p.euler_deg, Vector3::zeros());
        let p = Pose6::from_transform(&HomTransform::rot_z(FRAC_PI_2));
        assert_relative_eq!(p.euler_deg, Vector3::new(0.0, 0.0, 90.0), epsilon = 1e-12);
    }

    #[test]
    fn pose_row_round_trips_as_text() {
        let row = "0.00,0.00,113.50,180.00,0.00,-90.00";
        let p: Pose6 = row.parse().unwrap();
        assert_eq!(p.position_mm.z, 113.5);
        assert_eq!(p.to_csv_row(), row);
        let back = Pose6::from_transform(&p.to_transform());
        assert_relative_eq!(back.position_mm, p.position_mm, epsilon = 1e-9);
        assert_relative_eq!(back.euler_deg, p.euler_deg, epsilon = 1e-9);
        // Hand-typed rows may carry a stray space inside a number.
        let p2: Pose6 = "-123.93,101.14,108.87,-126.83,-20.18,-65.27".parse().unwrap();
        assert_eq!(p2.euler_deg.x, -126.83);
        assert!("1,2,3".parse::<Pose6>().is_err());
    }

    #[test]
    fn gimbal_lock_sets_rx_to_zero() {
        let p = Pose6::new(Vector3::zeros(), Vector3::new(30.0, 90.0, 10.0));
        let back = Pose6::from_transform(&p.to_transform());
        assert_eq!(back.euler_deg.x, 0.0);
        assert_relative_eq!(back.euler_deg.y, 90.0, epsilon = 1e-6);
        assert_relative_eq!(back.to_transform().rotation, p.to_transform().rotation, epsilon = 1e-6);
    }

    #[test]
    fn rcm_pose_needs_rcm_frame() {
        let mut parts = example_psm().into_parts();
        parts.rcm_frame = None;
        let m = ChainModel::from_parts(parts);
        assert_eq!(rcm_pose(&m, &JointVector::zeros()), Err(ModelError::NoRcmFrame));
        assert!(rcm_pose(&example_psm(), &JointVector::zeros()).is_ok());
    }

    #[test]
    fn insertion_moves_tip_along_rcm_z() {
        let m = example_psm();
        let mut q = JointVector::zeros();
        let p0 = rcm_pose(&m, &q).unwrap();
        q[2] = 0.05;
        let p1 = rcm_pose(&m, &q).unwrap();
        // The tool shaft passes through the pivot, so the tip stays on the z axis.
        assert!(p0.position_mm.xy().norm() < 1e-9);
        assert!(p0.position_mm.z > 0.0);
        assert_relative_eq!((p1.position_mm - p0.position_mm).norm(), 50.0, epsilon = 1e-9);
        assert_relative_eq!(p1.position_mm.z - p0.position_mm.z, 50.0, epsilon = 1e-9);
    }

    #[test]
    fn com_map_matches_appended_frame() {
        let m = example_psm();
        let q = JointVector::from_column_slice(&[0.3, -0.2, 0.1, 0.5, -0.4, 0.2, 0.1]);
        let c = Vector3::new(0.03, -0.05, 0.02);
        for map in com_positions_linear(&m, &q) {
            let base = chain_poses(&m, &q);
            assert_eq!(map.position(&Vector3::zeros()), base.frame(map.frame_index).translation);
            // Oracle: chain of fixed frames reaching c through (a, d) offsets only.
            let mut parts = m.parts().clone();
            let parent = parts.frames[map.frame_index].id.clone();
            let fixed = |id: &str, r: &str, a: f64, alpha: f64, d: f64| FrameSpec {
                id: id.into(),
                reference: Some(r.into()),
                a_prev: a,
                alpha_prev: alpha,
                d_const: d,
                theta_const: 0.0,
                kind: JointKind::Fixed,
                coupling: JointVector::zeros(),
                flags: Default::default(),
                hull: vec![],
            };
            parts.frames.push(fixed("aux1", &parent, c.x, -FRAC_PI_2, c.y));
            parts.frames.push(fixed("aux2", "aux1", 0.0, FRAC_PI_2, 0.0));
            parts.frames.push(fixed("aux3", "aux2", 0.0, 0.0, c.z));
            let aux = ChainModel::from_parts(parts);
            let expect = forward_kinematics(&aux, &q).get("aux3").unwrap().translation;
            assert_relative_eq!(map.position(&c), expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn parallelogram_rates() {
        let m = example_psm();
        let mut qd = JointVector::zeros();
        qd[1] = 0.7;
        let st = RobotState::new(JointVector::from_element(0.1), qd, JointVector::zeros());
        let mo = frame_kinematics_derivatives(&m, &st, false);
        let rate = |id: &str| mo[m.frame_index(id).unwrap()].as_ref().unwrap().rate;
        assert_eq!(rate("2"), 0.7);
        assert_eq!(rate("2''"), -0.7);
        assert_eq!(rate("2''''"), 0.7);
        // Side link of the parallelogram does not rotate.
        let w = mo[m.frame_index("2''").unwrap()].as_ref().unwrap().omega;
        assert!(w.norm() < 1e-15);
    }

    #[test]
    fn rest_state_has_only_gravity_bias() {
        let m = example_psm();
        let st = RobotState::at_rest(JointVector::from_element(0.2));
        for fm in frame_kinematics_derivatives(&m, &st, true).into_iter().flatten() {
            assert_eq!(fm.omega, Vector3::zeros());
            assert_eq!(fm.velocity, Vector3::zeros());
            assert_relative_eq!(fm.accel, -m.gravity(), epsilon = 1e-15);
        }
    }

    #[test]
    fn left_handed_reporting_mirrors_y() {
        let mut parts = example_psm().into_parts();
        parts.handedness = Handedness::Left;
        let m = ChainModel::from_parts(parts);
        let q = JointVector::from_element(0.1);
        let fk = forward_kinematics(&m, &q);
        let right = chain_poses(&m, &q);
        let t = fk.get("3").unwrap();
        assert_relative_eq!(t.rotation.determinant(), -1.0, epsilon = 1e-12);
        assert_eq!(t.translation, right.get("3").unwrap().translation);
    }

    #[test]
    fn rcm_frame_sits_on_joint_one_axis() {
        let m = example_psm();
        let rcm = m.rcm_frame().unwrap();
        let lengths = example_psm_lengths();
        assert_relative_eq!(rcm.rotation.determinant(), 1.0, epsilon = 1e-12);
        // Joint 1 axis passes through the base origin along base −y.
        assert_relative_eq!(rcm.translation.x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(rcm.translation.z, 0.0, epsilon = 1e-12);
        assert_relative_eq!(rcm.translation.y, lengths["l1L"] + lengths["l2L1"], epsilon = 1e-12);
        let _ = PI;
    }
}
