use navsim_core::mapping::{
    compute_esdf, CellState, LocalMapParams, ProjectedGrid2D, UnknownPolicy,
};
use navsim_core::math::{Pose, Vec2, Vec3};
use navsim_core::planning::*;
use navsim_core::rng::{SimRng, Stream};
use navsim_core::sensors::PointCloud;
use proptest::prelude::*;

fn random_grid(rng: &mut SimRng, n: usize, density: f64) -> InflatedGrid {
    let blocked = (0..n * n)
        .map(|_| rng.uniform(0.0, 1.0) < density)
        .collect();
    InflatedGrid::from_blocked(Vec2::zeros(), 0.2, n, n, blocked)
}

fn random_free(rng: &mut SimRng, g: &InflatedGrid) -> (i64, i64) {
    loop {
        let c = (rng.below(g.nx as u64) as i64, rng.below(g.ny as u64) as i64);
        if g.free(c.0, c.1) {
            return c;
        }
    }
}

#[test]
fn jps_matches_dijkstra() {
    let mut rng = SimRng::new(77, Stream::Test);
    let mut reachable = 0;
    for trial in 0..150 {
        let n = [20, 50, 100][trial % 3];
        let density = [0.1, 0.3, 0.4][trial % 3];
        let g = random_grid(&mut rng, n, density);
        let s = random_free(&mut rng, &g);
        let e = random_free(&mut rng, &g);
        let oracle = dijkstra_cost(&g, s, e);
        let got = jps_plan(&g, &g.center(s.0, s.1), &g.center(e.0, e.1));
        match (oracle, got) {
            (Some(c), Ok(p)) => {
                assert_eq!(p.cost, c, "trial {trial}");
                reachable += 1;
                // every segment is a straight or diagonal run of free cells
                for w in p.waypoints.windows(2) {
                    let a = g.cell_of(&w[0]);
                    let b = g.cell_of(&w[1]);
                    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
                    assert!(dx == 0 || dy == 0 || dx.abs() == dy.abs());
                    let steps = dx.abs().max(dy.abs());
                    for k in 0..=steps {
                        assert!(g.free(a.0 + dx.signum() * k, a.1 + dy.signum() * k));
                    }
                }
            }
            (None, Err(PlanError::NoPath)) => {}
            (o, g) => panic!("trial {trial}: oracle {o:?} vs jps {g:?}"),
        }
    }
    assert!(reachable > 50);
}

/// Discretised minimum-acceleration problem: acceleration is piecewise
/// linear over `n` knots, the cost and the end constraints are integrated
/// exactly, and the equality-constrained quadratic program is solved through
/// its KKT system.
fn qp_cost(p0: f64, v0: f64, p1: f64, v1: f64, t: f64, n: usize) -> f64 {
    use nalgebra::{DMatrix, DVector};
    let h = t / (n - 1) as f64;
    let mut q = DMatrix::zeros(n, n);
    for k in 0..n - 1 {
        q[(k, k)] += 2.0 * h / 3.0;
        q[(k + 1, k + 1)] += 2.0 * h / 3.0;
        q[(k, k + 1)] += h / 3.0;
        q[(k + 1, k)] += h / 3.0;
    }
    let mut c = DMatrix::zeros(2, n);
    for k in 0..n - 1 {
        let tk = k as f64 * h;
        c[(0, k)] += h / 2.0;
        c[(0, k + 1)] += h / 2.0;
        c[(1, k)] += h * ((t - tk) / 2.0 - h / 6.0);
        c[(1, k + 1)] += h * ((t - tk) / 2.0 - h / 3.0);
    }
    let d = DVector::from_vec(vec![v1 - v0, p1 - p0 - v0 * t]);
    let mut kkt = DMatrix::zeros(n + 2, n + 2);
    kkt.view_mut((0, 0), (n, n)).copy_from(&q);
    kkt.view_mut((0, n), (n, 2)).copy_from(&c.transpose());
    kkt.view_mut((n, 0), (2, n)).copy_from(&c);
    let mut rhs = DVector::zeros(n + 2);
    rhs.rows_mut(n, 2).copy_from(&d);
    let sol = kkt.lu().solve(&rhs).unwrap();
    let a = sol.rows(0, n).into_owned();
    (a.transpose() * &q * &a)[(0, 0)] / 2.0
}

#[test]
fn min_acc_matches_discretised_qp() {
    let mut rng = SimRng::new(31, Stream::Test);
    for trial in 0..50 {
        let p0 = Vec3::new(
            rng.uniform(-2.0, 2.0),
            rng.uniform(-2.0, 2.0),
            rng.uniform(-1.0, 1.0),
        );
        let p1 = Vec3::new(
            rng.uniform(-2.0, 2.0),
            rng.uniform(-2.0, 2.0),
            rng.uniform(-1.0, 1.0),
        );
        let v0 = Vec3::new(
            rng.uniform(-1.0, 1.0),
            rng.uniform(-1.0, 1.0),
            rng.uniform(-0.5, 0.5),
        );
        let v1 = Vec3::new(
            rng.uniform(-1.0, 1.0),
            rng.uniform(-1.0, 1.0),
            rng.uniform(-0.5, 0.5),
        );
        let t = rng.uniform(0.5, 4.0);
        let prim = min_acc_primitive(&p0, &v0, &p1, &v1, t, 0.1, 0.0).unwrap();
        let oracle: f64 = (0..3)
            .map(|ax| qp_cost(p0[ax], v0[ax], p1[ax], v1[ax], t, 100))
            .sum();
        let rel = (prim.cost() - oracle).abs() / oracle.max(1e-12);
        assert!(
            rel <= 1e-4,
            "trial {trial}: closed {} vs qp {oracle} rel {rel}",
            prim.cost()
        );
        let s0 = prim.sample(0.0);
        let s1 = prim.sample(t);
        assert!((s0.position - p0).norm() < 1e-9 && (s0.velocity - v0).norm() < 1e-9);
        assert!((s1.position - p1).norm() < 1e-9 && (s1.velocity - v1).norm() < 1e-9);
    }
}

#[test]
fn has_prefers_smallest_passing_offset() {
    // wall 1.1 m ahead spanning bearings within about 15 degrees
    let pos = Vec3::new(0.0, 0.0, 1.0);
    let mut pts = Vec::new();
    let mut y = -0.35;
    while y <= 0.35 {
        let mut z = -0.8;
        while z <= 0.8 {
            pts.push(Vec3::new(1.1, y, 1.0 + z));
            z += 0.05;
        }
        y += 0.02;
    }
    let local = navsim_core::mapping::rebuild_local_map(
        &PointCloud {
            timestamp: 0.0,
            points: pts,
        },
        &Pose::identity(),
        &Pose::from_translation(pos),
        &LocalMapParams::default(),
    );
    let goal = LocalGoal {
        point: Vec3::new(4.0, 0.0, 1.0),
        heading: 0.0,
    };
    let params = HasParams {
        corridor_radius: 0.2,
        ..HasParams::default()
    };
    let r = heuristic_angular_search(&local, None, &pos, &goal, &params).unwrap();
    assert!(r.offset.0.abs() > 0.0);
    let passing: Vec<_> = has_candidates(&params)
        .into_iter()
        .filter(|o| {
            candidate_passes(
                &local,
                None,
                &pos,
                &candidate_waypoint(&pos, &goal, *o, params.step),
                &params,
            )
        })
        .collect();
    let min_h = passing
        .iter()
        .map(|o| o.0.abs())
        .fold(f64::INFINITY, f64::min);
    assert_eq!(r.offset.0.abs(), min_h);
    assert!(r.offset.0 > 0.0, "ties break toward positive offsets");
}

#[test]
fn has_respects_esdf_clearance() {
    let mut g = ProjectedGrid2D::filled(Vec2::new(-5.0, -5.0), 0.2, 50, 50, CellState::Free);
    // obstacle column right on the straight line, 1 m ahead
    let (i, j) = g.cell_of(&Vec2::new(1.0, 0.0));
    g.set(i as usize, j as usize, CellState::Occupied);
    let e = compute_esdf(&g, UnknownPolicy::Free, 5.0);
    let pos = Vec3::new(0.0, 0.0, 1.0);
    let local = navsim_core::mapping::rebuild_local_map(
        &PointCloud::default(),
        &Pose::identity(),
        &Pose::from_translation(pos),
        &LocalMapParams::default(),
    );
    let goal = LocalGoal {
        point: Vec3::new(3.0, 0.0, 1.0),
        heading: 0.0,
    };
    let r = heuristic_angular_search(&local, Some(&e), &pos, &goal, &HasParams::default()).unwrap();
    assert_ne!(r.offset.0, 0.0);
    for k in 0..=20 {
        let q = pos + (r.waypoint - pos) * (k as f64 / 20.0);
        assert!(e.query(&q.xy()).unwrap().0 >= 0.3 - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn primitive_boundary_conditions(
        p0 in prop::array::uniform3(-5.0f64..5.0), p1 in prop::array::uniform3(-5.0f64..5.0),
        v0 in prop::array::uniform3(-1.0f64..1.0), v1 in prop::array::uniform3(-1.0f64..1.0),
        t in 0.2f64..6.0,
    ) {
        let (p0, p1, v0, v1) = (Vec3::from(p0), Vec3::from(p1), Vec3::from(v0), Vec3::from(v1));
        let m = min_acc_primitive(&p0, &v0, &p1, &v1, t, 0.2, 0.0).unwrap();
        prop_assert!((m.sample(0.0).position - p0).norm() < 1e-9);
        prop_assert!((m.sample(0.0).velocity - v0).norm() < 1e-9);
        prop_assert!((m.sample(t).position - p1).norm() < 1e-9);
        prop_assert!((m.sample(t).velocity - v1).norm() < 1e-9);
    }

    #[test]
    fn closed_form_not_worse_than_perturbed(
        d in -3.0f64..3.0, v0 in -1.0f64..1.0, v1 in -1.0f64..1.0, t in 0.5f64..4.0, bump in -1.0f64..1.0,
    ) {
        // any feasible trajectory: optimum plus a bump vanishing with its derivative at both ends
        let m = min_acc_primitive(&Vec3::zeros(), &Vec3::new(v0, 0.0, 0.0), &Vec3::new(d, 0.0, 0.0), &Vec3::new(v1, 0.0, 0.0), t, 0.1, 0.0).unwrap();
        let n = 4000;
        let h = t / n as f64;
        let mut cost = 0.0;
        for k in 0..n {
            let s = (k as f64 + 0.5) * h / t;
            // bump b(s) = bump * s^2 (1-s)^2, b'' = bump * (2 - 12 s + 12 s^2) / t^2
            let b2 = bump * (2.0 - 12.0 * s + 12.0 * s * s) / (t * t);
            let a = m.sample((k as f64 + 0.5) * h).acceleration.x + b2;
            cost += a * a * h;
        }
        prop_assert!(m.cost() <= cost + 1e-6 * cost.max(1.0));
    }

    #[test]
    fn jps_equals_dijkstra_small(seed in any::<u64>(), density in 0.0f64..0.5) {
        let mut rng = SimRng::new(seed, Stream::Test);
        let g = random_grid(&mut rng, 16, density);
        if g.free_count() < 2 { return Ok(()); }
        let s = random_free(&mut rng, &g);
        let e = random_free(&mut rng, &g);
        let oracle = dijkstra_cost(&g, s, e);
        let got = jps_plan(&g, &g.center(s.0, s.1), &g.center(e.0, e.1)).ok().map(|p| p.cost);
        prop_assert_eq!(oracle, got);
    }
}
