//! Six degree-of-freedom rigid-body model and the cascaded controller that
//! closes the loop around it.

mod control;
mod rigid_body;

pub use control::{
    attitude_from_thrust, clamp_norm, CascadeController, CommandLatch, ControlOutput,
    ControllerGains, Saturation, Setpoint, SetpointKind,
};
pub use rigid_body::{
    inertial_acceleration, step_dynamics, BodyWrench, DynamicsError, RigidBodyState, VehicleParams,
};
