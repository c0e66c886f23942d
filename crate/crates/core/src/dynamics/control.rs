//! Cascaded position / velocity / attitude / rate controller and the
//! setpoint latch that feeds it.

use nalgebra::Matrix3;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::rigid_body::{BodyWrench, RigidBodyState, VehicleParams};
use crate::math::{normalize_quat, quat_log, tan, wrap_angle, yaw_of, Quat, Vec3, PI};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", content = "value", rename_all = "snake_case")
)]
pub enum SetpointKind {
    Position(Vec3),
    Velocity(Vec3),
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Setpoint {
    pub target: SetpointKind,
    pub yaw: f64,
}

impl Setpoint {
    pub fn position(p: Vec3, yaw: f64) -> Self {
        Self {
            target: SetpointKind::Position(p),
            yaw,
        }
    }

    pub fn velocity(v: Vec3, yaw: f64) -> Self {
        Self {
            target: SetpointKind::Velocity(v),
            yaw,
        }
    }

    /// Returns a copy whose velocity (if any) has norm at most `limit`, and
    /// whether clamping happened.
    pub fn clamped(&self, limit: f64) -> (Setpoint, bool) {
        match self.target {
            SetpointKind::Velocity(v) => {
                let (v, c) = clamp_norm(v, limit);
                (
                    Setpoint {
                        target: SetpointKind::Velocity(v),
                        yaw: self.yaw,
                    },
                    c,
                )
            }
            SetpointKind::Position(_) => (*self, false),
        }
    }
}

pub fn clamp_norm(v: Vec3, limit: f64) -> (Vec3, bool) {
    let n = v.norm();
    if n > limit {
        (v * (limit / n), true)
    } else {
        (v, false)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ControllerGains {
    pub pos_p: f64,
    pub vel_p: f64,
    pub vel_i: f64,
    pub vel_i_limit: f64,
    pub att_p: f64,
    pub yaw_p: f64,
    pub rate_p: f64,
    pub rate_d: f64,
    pub max_rate: f64,
    pub max_yaw_rate: f64,
    /// Maximum tilt from vertical, rad.
    pub max_tilt: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            pos_p: 1.0,
            vel_p: 5.0,
            vel_i: 1.0,
            vel_i_limit: 2.0,
            att_p: 10.0,
            yaw_p: 2.5,
            rate_p: 25.0,
            rate_d: 0.3,
            max_rate: 4.0,
            max_yaw_rate: 1.0,
            max_tilt: 35.0 * PI / 180.0,
        }
    }
}

/// What the control law clipped on a given update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Saturation {
    pub speed: bool,
    pub tilt: bool,
    pub thrust: bool,
}

impl Saturation {
    pub fn any(&self) -> bool {
        self.speed || self.tilt || self.thrust
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ControlOutput {
    pub wrench: BodyWrench,
    pub saturation: Saturation,
    /// Velocity setpoint the outer loop settled on (after clamping).
    pub velocity_setpoint: Vec3,
}

/// Stands in for the autopilot's inner loops.
#[derive(Clone, Debug)]
pub struct CascadeController {
    gains: ControllerGains,
    speed_limit: f64,
    vel_integral: Vec3,
    prev_rate_err: Option<Vec3>,
}

impl CascadeController {
    pub fn new(gains: ControllerGains, speed_limit: f64) -> Self {
        Self {
            gains,
            speed_limit,
            vel_integral: Vec3::zeros(),
            prev_rate_err: None,
        }
    }

    pub fn reset(&mut self) {
        self.vel_integral = Vec3::zeros();
        self.prev_rate_err = None;
    }

    /// One controller update. `position` and `velocity` are the feedback the
    /// caller wants the outer loops to close on; attitude and rate come from
    /// `state`.
    pub fn update(
        &mut self,
        state: &RigidBodyState,
        position: &Vec3,
        velocity: &Vec3,
        setpoint: &Setpoint,
        params: &VehicleParams,
        dt: f64,
    ) -> ControlOutput {
        let g = &self.gains;
        let mut sat = Saturation::default();

        let raw_vsp = match setpoint.target {
            SetpointKind::Position(p) => (p - position) * g.pos_p,
            SetpointKind::Velocity(v) => v,
        };
        let (vsp, clamped) = clamp_norm(raw_vsp, self.speed_limit);
        sat.speed = clamped;

        let verr = vsp - velocity;
        let mut integral = self.vel_integral + verr * dt;
        let (lim, _) = clamp_norm(integral, g.vel_i_limit);
        integral = lim;
        let mut acc = verr * g.vel_p + integral * g.vel_i;

        // thrust vector in the inertial frame, tilt limited
        let mut fz = acc.z + params.gravity;
        if fz < 0.1 * params.gravity {
            fz = 0.1 * params.gravity;
        }
        let max_h = fz * tan(g.max_tilt);
        let h = crate::math::sqrt(acc.x * acc.x + acc.y * acc.y);
        if h > max_h {
            acc.x *= max_h / h;
            acc.y *= max_h / h;
            sat.tilt = true;
        }
        // anti-windup: only integrate while unsaturated
        if !sat.tilt {
            self.vel_integral = integral;
        }
        let f_des = Vec3::new(acc.x, acc.y, fz) * params.mass;

        let body_z = state.orientation * Vec3::z();
        let mut thrust = f_des.dot(&body_z);
        let t_max = 2.0 * params.mass * params.gravity;
        if thrust < 0.0 {
            thrust = 0.0;
            sat.thrust = true;
        } else if thrust > t_max {
            thrust = t_max;
            sat.thrust = true;
        }

        // tilt and yaw are shaped separately: the tilt target keeps the
        // current heading so a large yaw error cannot leak into roll/pitch
        let yaw = yaw_of(&state.orientation);
        let q_des = attitude_from_thrust(&f_des, yaw);
        let q_err = state.orientation.inverse() * q_des;
        let e = quat_log(&q_err);
        let yaw_err = wrap_angle(setpoint.yaw - yaw);
        let body_z_err = Vec3::new(e.x, e.y, 0.0);
        let mut rate_des = body_z_err * g.att_p;
        let (r, _) = clamp_norm(rate_des, g.max_rate);
        rate_des = r;
        let yaw_rate = (yaw_err * g.yaw_p).clamp(-g.max_yaw_rate, g.max_yaw_rate);
        // yaw rate command is about inertial z; express in body
        rate_des += state.orientation.inverse() * Vec3::new(0.0, 0.0, yaw_rate);

        let rate_err = rate_des - state.angular_velocity;
        let d_err = match self.prev_rate_err {
            Some(prev) => (rate_err - prev) / dt,
            None => Vec3::zeros(),
        };
        self.prev_rate_err = Some(rate_err);
        let ang_acc = rate_err * g.rate_p + d_err * g.rate_d;
        let w = &state.angular_velocity;
        let moment =
            params.inertia.component_mul(&ang_acc) + w.cross(&params.inertia.component_mul(w));

        let wrench = BodyWrench {
            force: Vec3::new(0.0, 0.0, thrust),
            moment,
        };
        let wrench = if wrench.is_finite() {
            wrench
        } else {
            BodyWrench::zero()
        };
        ControlOutput {
            wrench,
            saturation: sat,
            velocity_setpoint: vsp,
        }
    }
}

/// Attitude whose body z axis is aligned with `thrust` and whose heading is
/// `yaw`.
pub fn attitude_from_thrust(thrust: &Vec3, yaw: f64) -> Quat {
    let b3 = thrust.normalize();
    let c = Vec3::new(crate::math::cos(yaw), crate::math::sin(yaw), 0.0);
    let mut b2 = b3.cross(&c);
    if b2.norm() < 1e-9 {
        b2 = Vec3::y();
    }
    let b2 = b2.normalize();
    let b1 = b2.cross(&b3);
    let m = Matrix3::from_columns(&[b1, b2, b3]);
    let rot = nalgebra::Rotation3::from_matrix_unchecked(m);
    let q = Quat::from_rotation_matrix(&rot);
    normalize_quat(*q.quaternion())
}

/// Latest-wins setpoint latch with a stale-command failsafe.
#[derive(Clone, Debug)]
pub struct CommandLatch {
    latest: Option<(Setpoint, f64)>,
    hold: Setpoint,
    timeout: f64,
    failsafe_engaged: bool,
}

impl CommandLatch {
    pub const DEFAULT_TIMEOUT: f64 = 0.5;

    /// `initial_hold` is flown until the first setpoint arrives.
    pub fn new(initial_hold: Setpoint, timeout: f64) -> Self {
        Self {
            latest: None,
            hold: initial_hold,
            timeout,
            failsafe_engaged: false,
        }
    }

    pub fn submit(&mut self, setpoint: Setpoint, t: f64) {
        self.latest = Some((setpoint, t));
        self.failsafe_engaged = false;
    }

    pub fn failsafe_engaged(&self) -> bool {
        self.failsafe_engaged
    }

    /// Setpoint to fly at time `t`. In autonomous mode a stream that went
    /// quiet for longer than the timeout is replaced by a position hold at
    /// the position where the failsafe engaged.
    pub fn resolve(&mut self, t: f64, autonomous: bool, position: &Vec3, yaw: f64) -> Setpoint {
        match self.latest {
            None => self.hold,
            Some((sp, stamp)) => {
                let stale = t - stamp > self.timeout;
                let is_velocity = matches!(sp.target, SetpointKind::Velocity(_));
                if autonomous && stale && is_velocity {
                    if !self.failsafe_engaged {
                        self.failsafe_engaged = true;
                        self.hold = Setpoint::position(*position, yaw);
                    }
                    self.hold
                } else {
                    sp
                }
            }
        }
    }
}
