use nalgebra::Quaternion;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math::{normalize_quat, Pose, Quat, Vec3};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error("integration diverged: non-finite state {state:?}")]
    Diverged { state: RigidBodyState },
    #[error("time step {0} s outside (0, 0.01]")]
    InvalidStep(f64),
}

/// Position, velocity (inertial), attitude and body angular rate.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RigidBodyState {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Body to inertial rotation.
    pub orientation: Quat,
    /// Body-frame angular rate.
    pub angular_velocity: Vec3,
}

impl RigidBodyState {
    pub fn at_rest(position: Vec3, orientation: Quat) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            orientation,
            angular_velocity: Vec3::zeros(),
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.position, self.orientation)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.velocity.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
            && self.angular_velocity.iter().all(|v| v.is_finite())
    }

    /// Translational kinetic plus potential plus rotational energy.
    pub fn mechanical_energy(&self, params: &VehicleParams) -> f64 {
        let w = &self.angular_velocity;
        let rot = 0.5
            * (params.inertia.x * w.x * w.x
                + params.inertia.y * w.y * w.y
                + params.inertia.z * w.z * w.z);
        0.5 * params.mass * self.velocity.norm_squared()
            + params.mass * params.gravity * self.position.z
            + rot
    }
}

/// Total force and moment in the body frame.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BodyWrench {
    pub force: Vec3,
    pub moment: Vec3,
}

impl BodyWrench {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_finite(&self) -> bool {
        self.force
            .iter()
            .chain(self.moment.iter())
            .all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct VehicleParams {
    pub mass: f64,
    /// Diagonal of the body inertia matrix.
    pub inertia: Vec3,
    pub gravity: f64,
}

#[derive(Clone, Copy)]
struct Deriv {
    dpos: Vec3,
    dvel: Vec3,
    dq: Quaternion<f64>,
    domega: Vec3,
}

/// Raw integration state; the quaternion is left unnormalized between
/// Runge-Kutta stages.
#[derive(Clone, Copy)]
struct Raw {
    pos: Vec3,
    vel: Vec3,
    q: Quaternion<f64>,
    omega: Vec3,
}

impl Raw {
    fn add(&self, d: &Deriv, h: f64) -> Raw {
        Raw {
            pos: self.pos + d.dpos * h,
            vel: self.vel + d.dvel * h,
            q: self.q + d.dq * h,
            omega: self.omega + d.domega * h,
        }
    }
}

fn gyroscopic(omega: &Vec3, inertia: &Vec3) -> Vec3 {
    let i_omega = inertia.component_mul(omega);
    omega.cross(&i_omega)
}

fn derivative(s: &Raw, wrench: &BodyWrench, p: &VehicleParams) -> Deriv {
    let q = s.q;
    // rotate with the (possibly unnormalized) stage quaternion: q v q* / |q|^2
    let n2 = q.norm_squared();
    let fq = Quaternion::from_imag(wrench.force);
    let f_inertial = (q * fq * q.conjugate()).imag() / n2;
    let dvel = f_inertial / p.mass + Vec3::new(0.0, 0.0, -p.gravity);
    let dq = q * Quaternion::from_imag(s.omega) * 0.5;
    let torque = wrench.moment - gyroscopic(&s.omega, &p.inertia);
    let domega = torque.component_div(&p.inertia);
    Deriv {
        dpos: s.vel,
        dvel,
        dq,
        domega,
    }
}

/// Inertial acceleration produced by `wrench` at `state` (gravity included).
pub fn inertial_acceleration(
    state: &RigidBodyState,
    wrench: &BodyWrench,
    p: &VehicleParams,
) -> Vec3 {
    state.orientation * wrench.force / p.mass + Vec3::new(0.0, 0.0, -p.gravity)
}

/// One classical fourth-order Runge-Kutta step of the rigid-body equations
/// with gravity acting along inertial -z. The wrench is held constant over
/// the step.
pub fn step_dynamics(
    state: &RigidBodyState,
    wrench: &BodyWrench,
    params: &VehicleParams,
    dt: f64,
) -> Result<RigidBodyState, DynamicsError> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(DynamicsError::InvalidStep(dt));
    }
    let s0 = Raw {
        pos: state.position,
        vel: state.velocity,
        q: *state.orientation.quaternion(),
        omega: state.angular_velocity,
    };
    let k1 = derivative(&s0, wrench, params);
    let k2 = derivative(&s0.add(&k1, 0.5 * dt), wrench, params);
    let k3 = derivative(&s0.add(&k2, 0.5 * dt), wrench, params);
    let k4 = derivative(&s0.add(&k3, dt), wrench, params);
    let w = dt / 6.0;
    let next = Raw {
        pos: s0.pos + (k1.dpos + k2.dpos * 2.0 + k3.dpos * 2.0 + k4.dpos) * w,
        vel: s0.vel + (k1.dvel + k2.dvel * 2.0 + k3.dvel * 2.0 + k4.dvel) * w,
        q: s0.q + (k1.dq + k2.dq * 2.0 + k3.dq * 2.0 + k4.dq) * w,
        omega: s0.omega + (k1.domega + k2.domega * 2.0 + k3.domega * 2.0 + k4.domega) * w,
    };
    let out = RigidBodyState {
        position: next.pos,
        velocity: next.vel,
        orientation: normalize_quat(next.q),
        angular_velocity: next.omega,
    };
    if !out.is_finite() {
        return Err(DynamicsError::Diverged { state: out });
    }
    Ok(out)
}
