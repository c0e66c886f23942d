use navsim_core::mapping::{
    compute_esdf, query_distance_gradient, CellState, EsdfMap2D, ProjectedGrid2D, UnknownPolicy,
};
use navsim_core::math::Vec2;
use navsim_core::rng::{SimRng, Stream};
use proptest::prelude::*;

const CS: f64 = 0.2;
const DMAX: f64 = 1e6;

fn random_grid(rng: &mut SimRng, n: usize, density: f64) -> ProjectedGrid2D {
    let mut g = ProjectedGrid2D::filled(Vec2::zeros(), CS, n, n, CellState::Free);
    for c in g.cells.iter_mut() {
        if rng.uniform(0.0, 1.0) < density {
            *c = CellState::Occupied;
        }
    }
    g
}

/// Nearest-cell scan: squared cell distance to the closest cell of the
/// requested kind.
fn brute_d2(g: &ProjectedGrid2D, i: usize, j: usize, want_occupied: bool) -> Option<i64> {
    let mut best: Option<i64> = None;
    for jj in 0..g.ny {
        for ii in 0..g.nx {
            let occ = g.cells[jj * g.nx + ii] == CellState::Occupied;
            if occ == want_occupied {
                let d2 = (ii as i64 - i as i64).pow(2) + (jj as i64 - j as i64).pow(2);
                best = Some(best.map_or(d2, |b: i64| b.min(d2)));
            }
        }
    }
    best
}

fn brute_esdf(g: &ProjectedGrid2D) -> Vec<f64> {
    let mut out = Vec::with_capacity(g.nx * g.ny);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let occ = g.cells[j * g.nx + i] == CellState::Occupied;
            let v = if occ {
                match brute_d2(g, i, j, false) {
                    Some(d2) => (CS - (d2 as f64).sqrt() * CS).max(-DMAX),
                    None => -DMAX,
                }
            } else {
                match brute_d2(g, i, j, true) {
                    Some(d2) => ((d2 as f64).sqrt() * CS).min(DMAX),
                    None => DMAX,
                }
            };
            out.push(v);
        }
    }
    out
}

fn assert_lipschitz(e: &EsdfMap2D, pairs: usize, rng: &mut SimRng) {
    let n = e.nx * e.ny;
    for _ in 0..pairs {
        let a = rng.below(n as u64) as usize;
        let b = rng.below(n as u64) as usize;
        let (ai, aj) = (a % e.nx, a / e.nx);
        let (bi, bj) = (b % e.nx, b / e.nx);
        let dist = ((ai as f64 - bi as f64).powi(2) + (aj as f64 - bj as f64).powi(2)).sqrt() * CS;
        let diff = (e.distance[a] - e.distance[b]).abs();
        assert!(
            diff <= dist + 1e-9,
            "cells {a} {b}: |{} - {}| > {dist}",
            e.distance[a],
            e.distance[b]
        );
    }
}

#[test]
fn matches_brute_force_on_random_grids() {
    let mut rng = SimRng::new(2024, Stream::Test);
    for trial in 0..40 {
        let density = [0.01, 0.05, 0.2, 0.5][trial % 4];
        let g = random_grid(&mut rng, 32, density);
        let e = compute_esdf(&g, UnknownPolicy::Occupied, DMAX);
        assert_eq!(e.distance, brute_esdf(&g), "trial {trial}");
    }
}

#[test]
fn lipschitz_exhaustive_small_grids() {
    let mut rng = SimRng::new(5, Stream::Test);
    for trial in 0..300 {
        let g = random_grid(&mut rng, 12, [0.1, 0.3, 0.5, 0.7][trial % 4]);
        let e = compute_esdf(&g, UnknownPolicy::Occupied, DMAX);
        let n = g.nx * g.ny;
        for a in 0..n {
            for b in 0..n {
                let dist = (((a % 12) as f64 - (b % 12) as f64).powi(2)
                    + ((a / 12) as f64 - (b / 12) as f64).powi(2))
                .sqrt()
                    * CS;
                assert!(
                    (e.distance[a] - e.distance[b]).abs() <= dist + 1e-9,
                    "trial {trial} cells {a} {b}: {} {} dist {dist}",
                    e.distance[a],
                    e.distance[b]
                );
            }
        }
    }
}

#[test]
fn gradient_points_away_from_single_obstacle() {
    let mut g = ProjectedGrid2D::filled(Vec2::zeros(), CS, 31, 31, CellState::Free);
    g.set(15, 15, CellState::Occupied);
    let e = compute_esdf(&g, UnknownPolicy::Occupied, 100.0);
    let obstacle = g.center(15, 15);
    let mut rng = SimRng::new(9, Stream::Test);
    let mut checked = 0;
    while checked < 2000 {
        let p = Vec2::new(rng.uniform(0.2, 6.0), rng.uniform(0.2, 6.0));
        if (p - obstacle).norm() <= 2.0 * CS * 2f64.sqrt() + 1e-9 {
            continue;
        }
        let (_, grad) = query_distance_gradient(&e, &p).unwrap();
        let away = (p - obstacle).normalize();
        let cosang = grad.normalize().dot(&away);
        assert!(
            cosang >= 5f64.to_radians().cos(),
            "at {p:?}: angle {}",
            cosang.acos().to_degrees()
        );
        checked += 1;
    }
}

#[test]
fn gradient_matches_finite_difference() {
    let mut rng = SimRng::new(10, Stream::Test);
    let g = random_grid(&mut rng, 40, 0.05);
    let e = compute_esdf(&g, UnknownPolicy::Occupied, 100.0);
    let eps = 1e-4;
    let mut checked = 0;
    while checked < 1000 {
        let p = Vec2::new(rng.uniform(0.2, 7.8), rng.uniform(0.2, 7.8));
        // stay inside one interpolation patch
        let fx = (p.x / CS - 0.5).fract();
        let fy = (p.y / CS - 0.5).fract();
        if !(0.01..=0.99).contains(&fx) || !(0.01..=0.99).contains(&fy) {
            continue;
        }
        let (_, grad) = query_distance_gradient(&e, &p).unwrap();
        let dx = (e.query(&(p + Vec2::new(eps, 0.0))).unwrap().0
            - e.query(&(p - Vec2::new(eps, 0.0))).unwrap().0)
            / (2.0 * eps);
        let dy = (e.query(&(p + Vec2::new(0.0, eps))).unwrap().0
            - e.query(&(p - Vec2::new(0.0, eps))).unwrap().0)
            / (2.0 * eps);
        let fd = Vec2::new(dx, dy);
        assert!(
            (fd - grad).norm() <= 1e-6 * grad.norm().max(1.0),
            "{fd:?} vs {grad:?}"
        );
        checked += 1;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lipschitz_sampled(seed in any::<u64>(), density in 0.0f64..0.8, unknown in 0.0f64..0.3) {
        let mut rng = SimRng::new(seed, Stream::Test);
        let mut g = random_grid(&mut rng, 48, density);
        for c in g.cells.iter_mut() {
            if rng.uniform(0.0, 1.0) < unknown {
                *c = CellState::Unknown;
            }
        }
        for policy in [UnknownPolicy::Occupied, UnknownPolicy::Free] {
            let e = compute_esdf(&g, policy, 3.0);
            assert_lipschitz(&e, 4000, &mut rng);
        }
    }

    #[test]
    fn projection_monotone(seed in any::<u64>()) {
        use navsim_core::mapping::{project_to_2d, GlobalOccupancyMap, OccupancyParams};
        use navsim_core::math::Vec3;
        let mut rng = SimRng::new(seed, Stream::Test);
        let mut m = GlobalOccupancyMap::new(Vec3::zeros(), 0.2, [20, 20, 10], OccupancyParams::default());
        let origin = Vec3::new(2.0, 2.0, 1.0);
        let pts: Vec<Vec3> = (0..30).map(|_| Vec3::new(rng.uniform(0.0, 4.0), rng.uniform(0.0, 4.0), rng.uniform(0.3, 1.9))).collect();
        m.integrate_points(&origin, &pts);
        let before = project_to_2d(&m, [0.3, 2.0], 0.7, 0.3);
        let extra = Vec3::new(rng.uniform(0.0, 4.0), rng.uniform(0.0, 4.0), rng.uniform(0.3, 1.9));
        let mut m2 = m.clone();
        // a lone endpoint from directly above only adds occupancy in its column
        m2.integrate_points(&(extra + Vec3::new(0.0, 0.0, 1e-3)), &[extra]);
        let after = project_to_2d(&m2, [0.3, 2.0], 0.7, 0.3);
        for (b, a) in before.cells.iter().zip(after.cells.iter()) {
            if *b == CellState::Occupied {
                prop_assert_eq!(*a, CellState::Occupied);
            }
        }
    }
}
