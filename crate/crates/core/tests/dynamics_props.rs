use navsim_core::dynamics::{
    step_dynamics, BodyWrench, CascadeController, ControllerGains, RigidBodyState, Setpoint,
    VehicleParams,
};
use navsim_core::math::{quat_axis_angle, Quat, Vec3};
use proptest::prelude::*;

const DT: f64 = 1.0 / 400.0;

fn vehicle(inertia: Vec3) -> VehicleParams {
    VehicleParams {
        mass: 1.5,
        inertia,
        gravity: 9.81,
    }
}

#[test]
fn force_free_flight_conserves_energy() {
    for inertia in [
        Vec3::new(0.029125, 0.029125, 0.055225),
        Vec3::new(0.02, 0.035, 0.06),
    ] {
        let p = vehicle(inertia);
        let mut s = RigidBodyState {
            position: Vec3::new(0.0, 0.0, 10.0),
            velocity: Vec3::new(1.0, -2.0, 3.0),
            orientation: quat_axis_angle(&Vec3::new(1.0, 2.0, 3.0).normalize(), 0.7),
            angular_velocity: Vec3::new(1.0, 0.5, 2.0),
        };
        let e0 = s.mechanical_energy(&p);
        let mut worst: f64 = 0.0;
        for _ in 0..(10.0 / DT) as usize {
            s = step_dynamics(&s, &BodyWrench::zero(), &p, DT).unwrap();
            worst = worst.max(((s.mechanical_energy(&p) - e0) / e0).abs());
        }
        assert!(
            worst < 1e-6,
            "relative energy error {worst} for inertia {inertia:?}"
        );
    }
}

#[test]
fn hover_equilibrium_holds_for_ten_seconds() {
    let p = vehicle(Vec3::new(0.029125, 0.029125, 0.055225));
    let start = Vec3::new(1.0, -2.0, 1.0);
    let mut s = RigidBodyState::at_rest(start, Quat::identity());
    let hover = BodyWrench {
        force: Vec3::new(0.0, 0.0, p.mass * p.gravity),
        moment: Vec3::zeros(),
    };
    for _ in 0..(10.0 / DT) as usize {
        s = step_dynamics(&s, &hover, &p, DT).unwrap();
    }
    assert!(
        (s.position - start).norm() < 1e-6,
        "drift {}",
        (s.position - start).norm()
    );
}

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quaternion_stays_normalized(
        w0 in vec3(5.0),
        wrenches in proptest::collection::vec((0.0f64..30.0, vec3(0.5)), 1..40),
    ) {
        let p = vehicle(Vec3::new(0.029125, 0.029125, 0.055225));
        let mut s = RigidBodyState::at_rest(Vec3::new(0.0, 0.0, 5.0), Quat::identity());
        s.angular_velocity = w0;
        for (thrust, moment) in wrenches {
            let w = BodyWrench { force: Vec3::new(0.0, 0.0, thrust), moment };
            for _ in 0..10 {
                s = step_dynamics(&s, &w, &p, DT).unwrap();
                prop_assert!((s.orientation.quaternion().norm() - 1.0).abs() < 1e-9);
                prop_assert!(s.is_finite());
            }
        }
    }

    #[test]
    fn commanded_velocity_never_exceeds_limit(
        target in vec3(20.0),
        velocity in vec3(3.0),
        position_mode in any::<bool>(),
        limit in 0.1f64..3.0,
    ) {
        let p = vehicle(Vec3::new(0.029125, 0.029125, 0.055225));
        let mut c = CascadeController::new(ControllerGains::default(), limit);
        let mut s = RigidBodyState::at_rest(Vec3::new(0.0, 0.0, 1.0), Quat::identity());
        s.velocity = velocity;
        let sp = if position_mode { Setpoint::position(target, 0.3) } else { Setpoint::velocity(target, 0.3) };
        let out = c.update(&s, &s.position.clone(), &velocity, &sp, &p, DT);
        prop_assert!(out.velocity_setpoint.norm() <= limit + 1e-12);
        prop_assert!(out.wrench.force.z >= 0.0 && out.wrench.force.z <= 2.0 * p.mass * p.gravity + 1e-9);
    }
}
