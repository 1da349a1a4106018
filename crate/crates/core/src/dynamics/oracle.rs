//! Energy-based reference dynamics: Euler-Lagrange equations evaluated by
//! finite differences of kinetic and potential energy built from geometric
//! Jacobians. Shares no code with the recursive formulation beyond forward
//! kinematics and the friction law.

use nalgebra::{Matrix3, SMatrix, Vector3};

use super::{sign0, DynamicsError, InertialMode, ParamGroup, ParamVector};
use crate::kinematics::{chain_poses, geometric_jacobians, RobotState};
use crate::model::ChainModel;
use crate::{JointVector, N_JOINTS};

type Jacobians = Vec<Option<(SMatrix<f64, 3, N_JOINTS>, SMatrix<f64, 3, N_JOINTS>)>>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Step for the derivatives in q and along the trajectory.
    pub step: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { step: 1e-5 }
    }
}

struct Geometry {
    rotations: Vec<Option<Matrix3<f64>>>,
    jacobians: Jacobians,
}

fn geometry(model: &ChainModel, q: &JointVector) -> Geometry {
    let poses = chain_poses(model, q);
    Geometry {
        rotations: (0..model.frames().len())
            .map(|i| poses.try_frame(i).map(|t| t.rotation))
            .collect(),
        jacobians: geometric_jacobians(model, q),
    }
}

fn kinetic(geo: &Geometry, model: &ChainModel, qd: &JointVector, params: &ParamVector) -> f64 {
    let v = &params.values;
    let mut t = 0.0;
    for b in params.layout.blocks() {
        let o = b.offset;
        match b.group {
            ParamGroup::Inertial => {
                let (Some((jv, jw)), Some(r)) = (&geo.jacobians[b.frame_index], geo.rotations[b.frame_index]) else {
                    continue;
                };
                let vel = jv * qd;
                let w = jw * qd;
                let l = r * Vector3::new(v[o + 1], v[o + 2], v[o + 3]);
                t += 0.5 * v[o] * vel.norm_squared() + vel.dot(&w.cross(&l));
                if params.layout.mode == InertialMode::Full {
                    let i_local = Matrix3::new(
                        v[o + 4], v[o + 5], v[o + 6], v[o + 5], v[o + 7], v[o + 8], v[o + 6], v[o + 8], v[o + 9],
                    );
                    t += 0.5 * w.dot(&(r * i_local * r.transpose() * w));
                }
            }
            ParamGroup::Motor => {
                let rate = model.frame(b.frame_index).coupling.dot(qd);
                t += 0.5 * v[o] * rate * rate;
            }
            _ => {}
        }
    }
    t
}

/// Kinetic energy of links and rotors (J).
pub fn kinetic_energy(model: &ChainModel, q: &JointVector, qd: &JointVector, params: &ParamVector) -> Result<f64, DynamicsError> {
    params.check_layout(model)?;
    Ok(kinetic(&geometry(model, q), model, qd, params))
}

pub(crate) fn potential_unchecked(model: &ChainModel, q: &JointVector, params: &ParamVector) -> f64 {
    let poses = chain_poses(model, q);
    let g = model.gravity();
    let v = &params.values;
    let mut u = 0.0;
    for b in params.layout.blocks() {
        let o = b.offset;
        match b.group {
            ParamGroup::Inertial => {
                let Some(t) = poses.try_frame(b.frame_index) else { continue };
                let moment = t.translation * v[o] + t.rotation * Vector3::new(v[o + 1], v[o + 2], v[o + 3]);
                u -= g.dot(&moment);
            }
            ParamGroup::Stiffness => {
                let s = model.frame(b.frame_index).coupling.dot(q) - model.spring_rest();
                u += 0.5 * v[o] * s * s;
            }
            _ => {}
        }
    }
    u
}

/// Gravitational plus spring potential energy (J).
pub fn potential_energy(model: &ChainModel, q: &JointVector, params: &ParamVector) -> Result<f64, DynamicsError> {
    params.check_layout(model)?;
    Ok(potential_unchecked(model, q, params))
}

/// `∂T/∂q̇`. T is quadratic in q̇, so unit central differences are exact.
fn momentum(geo: &Geometry, model: &ChainModel, qd: &JointVector, params: &ParamVector) -> JointVector {
    JointVector::from_fn(|j, _| {
        let mut up = *qd;
        let mut dn = *qd;
        up[j] += 1.0;
        dn[j] -= 1.0;
        0.5 * (kinetic(geo, model, &up, params) - kinetic(geo, model, &dn, params))
    })
}

/// Efforts `d/dt ∂L/∂q̇ − ∂L/∂q` plus friction, with `L = T − V`.
pub fn lagrangian_oracle(
    model: &ChainModel,
    state: &RobotState,
    params: &ParamVector,
    opts: OracleOptions,
) -> Result<JointVector, DynamicsError> {
    params.check_layout(model)?;
    let h = opts.step;
    if !(h.is_finite() && h > 1e-12) {
        return Err(DynamicsError::StepUnderflow(h));
    }
    let (q, qd, qdd) = (state.q, state.qd, state.qdd);

    let fwd = geometry(model, &(q + qd * h));
    let bwd = geometry(model, &(q - qd * h));
    let dp = (momentum(&fwd, model, &(qd + qdd * h), params) - momentum(&bwd, model, &(qd - qdd * h), params)) / (2.0 * h);

    let mut dl = JointVector::zeros();
    for k in 0..N_JOINTS {
        let mut up = q;
        let mut dn = q;
        up[k] += h;
        dn[k] -= h;
        let dt = kinetic(&geometry(model, &up), model, &qd, params) - kinetic(&geometry(model, &dn), model, &qd, params);
        let dv = potential_unchecked(model, &up, params) - potential_unchecked(model, &dn, params);
        dl[k] = (dt - dv) / (2.0 * h);
    }

    let mut friction = JointVector::zeros();
    for b in params.layout.blocks_of(ParamGroup::Friction) {
        let c = model.frame(b.frame_index).coupling;
        let v = c.dot(&qd);
        let o = b.offset;
        friction += c * (params.values[o] * sign0(v) + params.values[o + 1] * v + params.values[o + 2]);
    }
    Ok(dp - dl + friction)
}

#[cfg(test)]
mod tests {
    use super::super::tests::{one_link, random_state};
    use super::super::*;
    use super::*;
    use crate::model::example_psm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn step_underflow() {
        let m = example_psm();
        let d = ParamVector::zeros(ParamLayout::for_model(&m, InertialMode::Gravity));
        let st = RobotState::at_rest(JointVector::zeros());
        for h in [0.0, 1e-300, f64::NAN, -1e-5] {
            assert!(matches!(
                lagrangian_oracle(&m, &st, &d, OracleOptions { step: h }),
                Err(DynamicsError::StepUnderflow(_))
            ));
        }
    }

    #[test]
    fn one_link_pendulum() {
        let g = 9.81;
        let m = one_link(Vector3::new(0.0, 0.0, -g));
        let mut d = ParamVector::zeros(ParamLayout::for_model(&m, InertialMode::Full));
        d.values[0] = 1.0;
        d.values[1] = 0.4; // CoM 0.4 m along local x
        d.values[4 + 5] = 0.16; // point-mass zz about the origin
        let mut st = RobotState::at_rest(JointVector::zeros());
        st.q[0] = 0.3;
        st.qd[0] = 0.7;
        st.qdd[0] = -1.1;
        let expect = 0.16 * st.qdd[0] - 1.0 * g * 0.4 * st.q[0].sin();
        let tau = lagrangian_oracle(&m, &st, &d, OracleOptions::default()).unwrap();
        assert!((tau[0] - expect).abs() < 1e-7, "{} vs {}", tau[0], expect);
        let rne = inverse_dynamics(&m, &st, &d).unwrap();
        assert!((rne[0] - expect).abs() < 1e-12);
    }

    #[test]
    fn matches_recursion_on_psm() {
        let m = example_psm();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for mode in [InertialMode::Gravity, InertialMode::Full] {
            for _ in 0..5 {
                let st = random_state(&mut rng);
                let d = ParamVector::sample_physical(&m, mode, &mut rng);
                let a = lagrangian_oracle(&m, &st, &d, OracleOptions::default()).unwrap();
                let b = inverse_dynamics(&m, &st, &d).unwrap();
                assert!((a - b).amax() <= 1e-6 * (1.0 + b.amax()), "{mode:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn energy_balance_of_gravity_torque() {
        // G = ∂V/∂q for the gravitational part.
        let m = example_psm();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = ParamVector::sample_physical(&m, InertialMode::Gravity, &mut rng);
        let q = random_state(&mut rng).q;
        let g = gravity_torque(&m, &q, &d, true).unwrap();
        let h = 1e-6;
        for k in 0..N_JOINTS {
            let mut up = q;
            let mut dn = q;
            up[k] += h;
            dn[k] -= h;
            let dv = (potential_energy(&m, &up, &d).unwrap() - potential_energy(&m, &dn, &d).unwrap()) / (2.0 * h);
            assert!((dv - g[k]).abs() < 1e-7, "joint {k}: {dv} vs {}", g[k]);
        }
    }
}
