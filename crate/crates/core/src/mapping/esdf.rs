use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math::{floor, sqrt, Vec2};

use super::{CellState, ProjectedGrid2D};

/// How unknown cells are treated when building distance fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum UnknownPolicy {
    Occupied,
    #[default]
    Free,
}

impl UnknownPolicy {
    pub fn blocked(&self, s: CellState) -> bool {
        match s {
            CellState::Occupied => true,
            CellState::Free => false,
            CellState::Unknown => *self == UnknownPolicy::Occupied,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EsdfError {
    #[error("query ({x}, {y}) outside the distance field")]
    OutOfBounds { x: f64, y: f64 },
}

/// Signed distance per cell, meters. Free cells hold the distance from
/// their center to the nearest blocked cell center. Blocked cells hold
/// `cell_size` minus the distance to the nearest free cell center, so
/// boundary cells read 0 and values fall linearly inward.
#[derive(Clone, Debug, PartialEq)]
pub struct EsdfMap2D {
    pub origin: Vec2,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
    pub d_max: f64,
    pub distance: Vec<f64>,
}

const FAR: f64 = 1e30;

/// Exact 1-D squared distance transform of the lower envelope of parabolas
/// rooted at finite `f` entries.
fn dt1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k: isize = -1;
    for q in 0..n {
        if f[q] >= FAR {
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        loop {
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                break;
            }
            let p = v[k as usize];
            let s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k as usize] {
                k -= 1;
            } else {
                k += 1;
                v[k as usize] = q;
                z[k as usize] = s;
                break;
            }
        }
    }
    if k < 0 {
        out.iter_mut().for_each(|o| *o = FAR);
        return;
    }
    let mut j = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while (j as isize) < k && z[j + 1] < q as f64 {
            j += 1;
        }
        let p = v[j];
        let dq = q as f64 - p as f64;
        *o = dq * dq + f[p];
    }
}

/// Squared cell-unit distance from every cell to the nearest cell for which
/// `site` is true; `FAR` where there is none.
pub fn squared_distance_transform(nx: usize, ny: usize, site: impl Fn(usize) -> bool) -> Vec<f64> {
    let mut col = vec![0.0; nx * ny];
    let m = nx.max(ny);
    let (mut f, mut out, mut v, mut z) = (
        vec![0.0; m],
        vec![0.0; m],
        vec![0usize; m],
        vec![0.0; m + 1],
    );
    for i in 0..nx {
        for j in 0..ny {
            f[j] = if site(j * nx + i) { 0.0 } else { FAR };
        }
        dt1d(&f[..ny], &mut out[..ny], &mut v, &mut z);
        for j in 0..ny {
            col[j * nx + i] = out[j];
        }
    }
    let mut d2 = vec![0.0; nx * ny];
    for j in 0..ny {
        f[..nx].copy_from_slice(&col[j * nx..(j + 1) * nx]);
        dt1d(&f[..nx], &mut out[..nx], &mut v, &mut z);
        d2[j * nx..(j + 1) * nx].copy_from_slice(&out[..nx]);
    }
    d2
}

/// Euclidean distance field over a projected grid, capped at `±d_max`.
pub fn compute_esdf(grid: &ProjectedGrid2D, unknown_is: UnknownPolicy, d_max: f64) -> EsdfMap2D {
    let (nx, ny) = (grid.nx, grid.ny);
    let blocked: Vec<bool> = grid.cells.iter().map(|c| unknown_is.blocked(*c)).collect();
    let to_occ = squared_distance_transform(nx, ny, |i| blocked[i]);
    let to_free = squared_distance_transform(nx, ny, |i| !blocked[i]);
    let cs = grid.cell_size;
    let distance = (0..nx * ny)
        .map(|i| {
            if blocked[i] {
                if to_free[i] >= FAR {
                    -d_max
                } else {
                    (cs - sqrt(to_free[i]) * cs).max(-d_max)
                }
            } else if to_occ[i] >= FAR {
                d_max
            } else {
                (sqrt(to_occ[i]) * cs).min(d_max)
            }
        })
        .collect();
    EsdfMap2D {
        origin: grid.origin,
        cell_size: cs,
        nx,
        ny,
        d_max,
        distance,
    }
}

impl EsdfMap2D {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.distance[j * self.nx + i]
    }

    pub fn center(&self, i: usize, j: usize) -> Vec2 {
        self.origin + Vec2::new(i as f64 + 0.5, j as f64 + 0.5) * self.cell_size
    }

    pub fn contains(&self, xy: &Vec2) -> bool {
        let w = self.nx as f64 * self.cell_size;
        let h = self.ny as f64 * self.cell_size;
        let r = xy - self.origin;
        r.x >= 0.0 && r.y >= 0.0 && r.x <= w && r.y <= h
    }

    /// Distance sampled at `xy`, `-d_max` outside the grid.
    pub fn distance_or_blocked(&self, xy: &Vec2) -> f64 {
        self.query(xy).map_or(-self.d_max, |(d, _)| d)
    }

    /// Cubic-convolution (Catmull-Rom) interpolation between cell centers
    /// and its analytic gradient. Reproduces stored values at centers.
    /// Queries in the half-cell border clamp to the outermost centers.
    pub fn query(&self, xy: &Vec2) -> Result<(f64, Vec2), EsdfError> {
        if !xy.x.is_finite() || !xy.y.is_finite() || !self.contains(xy) {
            return Err(EsdfError::OutOfBounds { x: xy.x, y: xy.y });
        }
        let cs = self.cell_size;
        let gx = ((xy.x - self.origin.x) / cs - 0.5).clamp(0.0, (self.nx - 1) as f64);
        let gy = ((xy.y - self.origin.y) / cs - 0.5).clamp(0.0, (self.ny - 1) as f64);
        let i0 = (floor(gx) as i64).min(self.nx as i64 - 2).max(0);
        let j0 = (floor(gy) as i64).min(self.ny as i64 - 2).max(0);
        let tx = gx - i0 as f64;
        let ty = gy - j0 as f64;
        let (mut d, mut dx, mut dy) = (0.0, 0.0, 0.0);
        for m in -1..=2i64 {
            let j = (j0 + m).clamp(0, self.ny as i64 - 1) as usize;
            let (wy, dwy) = (
                cubic_weight(ty - m as f64),
                cubic_weight_deriv(ty - m as f64),
            );
            for l in -1..=2i64 {
                let i = (i0 + l).clamp(0, self.nx as i64 - 1) as usize;
                let (wx, dwx) = (
                    cubic_weight(tx - l as f64),
                    cubic_weight_deriv(tx - l as f64),
                );
                let v = self.at(i, j);
                d += v * wx * wy;
                dx += v * dwx * wy;
                dy += v * wx * dwy;
            }
        }
        Ok((d, Vec2::new(dx / cs, dy / cs)))
    }
}

const CUBIC_A: f64 = -0.5;

fn cubic_weight(s: f64) -> f64 {
    let s = s.abs();
    let a = CUBIC_A;
    if s <= 1.0 {
        (a + 2.0) * s * s * s - (a + 3.0) * s * s + 1.0
    } else if s < 2.0 {
        a * s * s * s - 5.0 * a * s * s + 8.0 * a * s - 4.0 * a
    } else {
        0.0
    }
}

fn cubic_weight_deriv(s: f64) -> f64 {
    let sign = if s < 0.0 { -1.0 } else { 1.0 };
    let s = s.abs();
    let a = CUBIC_A;
    let d = if s <= 1.0 {
        3.0 * (a + 2.0) * s * s - 2.0 * (a + 3.0) * s
    } else if s < 2.0 {
        3.0 * a * s * s - 10.0 * a * s + 8.0 * a
    } else {
        0.0
    };
    sign * d
}

/// Distance and gradient at `xy`.
pub fn query_distance_gradient(esdf: &EsdfMap2D, xy: &Vec2) -> Result<(f64, Vec2), EsdfError> {
    esdf.query(xy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(nx: usize, ny: usize) -> ProjectedGrid2D {
        ProjectedGrid2D::filled(Vec2::zeros(), 0.2, nx, ny, CellState::Free)
    }

    #[test]
    fn all_free_is_capped() {
        let e = compute_esdf(&grid(8, 6), UnknownPolicy::Occupied, 5.0);
        assert!(e.distance.iter().all(|d| *d == 5.0));
    }

    #[test]
    fn single_cell_metric() {
        let mut g = grid(9, 9);
        g.set(4, 4, CellState::Occupied);
        let e = compute_esdf(&g, UnknownPolicy::Occupied, 5.0);
        assert_eq!(e.at(4, 4), 0.0);
        assert!((e.at(5, 4) - 0.2).abs() < 1e-9);
        assert!((e.at(5, 5) - 0.2 * 2f64.sqrt()).abs() < 1e-9);
        assert!((e.at(8, 4) - 0.8).abs() < 1e-9);
    }

    #[test]
    fn negative_inside() {
        let mut g = grid(11, 11);
        for j in 2..9 {
            for i in 2..9 {
                g.set(i, j, CellState::Occupied);
            }
        }
        let e = compute_esdf(&g, UnknownPolicy::Occupied, 5.0);
        assert_eq!(e.at(2, 5), 0.0);
        assert!((e.at(5, 5) - (0.2 - 0.8)).abs() < 1e-12);
    }

    #[test]
    fn unknown_policy() {
        let mut g = grid(5, 1);
        g.set(0, 0, CellState::Unknown);
        let occ = compute_esdf(&g, UnknownPolicy::Occupied, 5.0);
        let free = compute_esdf(&g, UnknownPolicy::Free, 5.0);
        assert!((occ.at(2, 0) - 0.4).abs() < 1e-12);
        assert_eq!(free.at(2, 0), 5.0);
    }

    #[test]
    fn query_center_and_bounds() {
        let mut g = grid(9, 9);
        g.set(4, 4, CellState::Occupied);
        let e = compute_esdf(&g, UnknownPolicy::Occupied, 5.0);
        let (d, _) = e.query(&e.center(6, 4)).unwrap();
        assert_eq!(d, e.at(6, 4));
        assert!(e.query(&Vec2::new(-0.1, 0.5)).is_err());
        assert!(e.query(&Vec2::new(0.5, 1.81)).is_err());
    }
}
