use alloc::vec;
use alloc::vec::Vec;

use crate::mapping::{CellState, ProjectedGrid2D, UnknownPolicy};
use crate::math::{ceil, floor, Vec2};

/// Binary planning grid after cropping and obstacle inflation.
#[derive(Clone, Debug, PartialEq)]
pub struct InflatedGrid {
    pub origin: Vec2,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
    pub blocked: Vec<bool>,
    /// Offset of this grid's cell (0, 0) in the source grid.
    pub offset: (usize, usize),
}

impl InflatedGrid {
    pub fn from_blocked(
        origin: Vec2,
        cell_size: f64,
        nx: usize,
        ny: usize,
        blocked: Vec<bool>,
    ) -> Self {
        assert_eq!(blocked.len(), nx * ny);
        Self {
            origin,
            cell_size,
            nx,
            ny,
            blocked,
            offset: (0, 0),
        }
    }

    pub fn in_bounds(&self, i: i64, j: i64) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.nx && (j as usize) < self.ny
    }

    /// In bounds and not blocked.
    pub fn free(&self, i: i64, j: i64) -> bool {
        self.in_bounds(i, j) && !self.blocked[j as usize * self.nx + i as usize]
    }

    pub fn cell_of(&self, p: &Vec2) -> (i64, i64) {
        (
            floor((p.x - self.origin.x) / self.cell_size) as i64,
            floor((p.y - self.origin.y) / self.cell_size) as i64,
        )
    }

    pub fn center(&self, i: i64, j: i64) -> Vec2 {
        self.origin + Vec2::new(i as f64 + 0.5, j as f64 + 0.5) * self.cell_size
    }

    pub fn free_count(&self) -> usize {
        self.blocked.iter().filter(|b| !**b).count()
    }
}

/// Cell offsets of a Euclidean disk of `r` cells.
pub fn disk_offsets(r: i64) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for dj in -r..=r {
        for di in -r..=r {
            if di * di + dj * dj <= r * r {
                out.push((di, dj));
            }
        }
    }
    out
}

/// Crops to the bounding box of observed cells and `keep` points plus a
/// one-cell margin, then dilates occupied cells by a disk of
/// `ceil(inflation_radius / cell_size)` cells. Unknown cells are blocked
/// (without dilation) only under [`UnknownPolicy::Occupied`].
pub fn preprocess_grid(
    grid: &ProjectedGrid2D,
    inflation_radius: f64,
    unknown_is: UnknownPolicy,
    keep: &[Vec2],
) -> InflatedGrid {
    let (nx, ny) = (grid.nx as i64, grid.ny as i64);
    let mut lo = (i64::MAX, i64::MAX);
    let mut hi = (i64::MIN, i64::MIN);
    let mut include = |i: i64, j: i64| {
        lo = (lo.0.min(i), lo.1.min(j));
        hi = (hi.0.max(i), hi.1.max(j));
    };
    for j in 0..ny {
        for i in 0..nx {
            if grid.cells[(j * nx + i) as usize] != CellState::Unknown {
                include(i, j);
            }
        }
    }
    for p in keep {
        let (i, j) = grid.cell_of(p);
        include(i, j);
    }
    if lo.0 > hi.0 {
        return InflatedGrid {
            origin: grid.origin,
            cell_size: grid.cell_size,
            nx: 0,
            ny: 0,
            blocked: Vec::new(),
            offset: (0, 0),
        };
    }
    let i0 = (lo.0 - 1).clamp(0, nx - 1);
    let j0 = (lo.1 - 1).clamp(0, ny - 1);
    let i1 = (hi.0 + 1).clamp(0, nx - 1);
    let j1 = (hi.1 + 1).clamp(0, ny - 1);
    let (cw, ch) = ((i1 - i0 + 1) as usize, (j1 - j0 + 1) as usize);
    let mut blocked = vec![false; cw * ch];
    let r = ceil(inflation_radius / grid.cell_size - 1e-9).max(0.0) as i64;
    let disk = disk_offsets(r);
    for j in j0..=j1 {
        for i in i0..=i1 {
            let s = grid.cells[(j * nx + i) as usize];
            let (li, lj) = (i - i0, j - j0);
            match s {
                CellState::Occupied => {
                    for (di, dj) in &disk {
                        let (a, b) = (li + di, lj + dj);
                        if a >= 0 && b >= 0 && (a as usize) < cw && (b as usize) < ch {
                            blocked[b as usize * cw + a as usize] = true;
                        }
                    }
                }
                CellState::Unknown if unknown_is == UnknownPolicy::Occupied => {
                    blocked[lj as usize * cw + li as usize] = true;
                }
                _ => {}
            }
        }
    }
    // obstacles just outside the crop still inflate into it
    for j in (j0 - r).max(0)..=(j1 + r).min(ny - 1) {
        for i in (i0 - r).max(0)..=(i1 + r).min(nx - 1) {
            if (i0..=i1).contains(&i) && (j0..=j1).contains(&j) {
                continue;
            }
            if grid.cells[(j * nx + i) as usize] == CellState::Occupied {
                for (di, dj) in &disk {
                    let (a, b) = (i - i0 + di, j - j0 + dj);
                    if a >= 0 && b >= 0 && (a as usize) < cw && (b as usize) < ch {
                        blocked[b as usize * cw + a as usize] = true;
                    }
                }
            }
        }
    }
    InflatedGrid {
        origin: grid.origin + Vec2::new(i0 as f64, j0 as f64) * grid.cell_size,
        cell_size: grid.cell_size,
        nx: cw,
        ny: ch,
        blocked,
        offset: (i0 as usize, j0 as usize),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_sizes() {
        assert_eq!(disk_offsets(0).len(), 1);
        assert_eq!(disk_offsets(1).len(), 5);
        assert_eq!(disk_offsets(2).len(), 13);
    }

    #[test]
    fn all_free_no_inflation() {
        let g = ProjectedGrid2D::filled(Vec2::zeros(), 0.2, 10, 10, CellState::Free);
        let p = preprocess_grid(&g, 0.4, UnknownPolicy::Occupied, &[]);
        assert_eq!((p.nx, p.ny), (10, 10));
        assert_eq!(p.free_count(), 100);
    }

    #[test]
    fn single_cell_disk() {
        let mut g = ProjectedGrid2D::filled(Vec2::zeros(), 0.2, 11, 11, CellState::Free);
        g.set(5, 5, CellState::Occupied);
        let p = preprocess_grid(&g, 0.4, UnknownPolicy::Occupied, &[]);
        assert_eq!(p.blocked.iter().filter(|b| **b).count(), 13);
        assert!(!p.free(5, 5) && !p.free(7, 5) && !p.free(6, 6) && p.free(7, 6));
    }

    #[test]
    fn crops_to_observed() {
        let mut g = ProjectedGrid2D::filled(Vec2::zeros(), 0.2, 20, 20, CellState::Unknown);
        for j in 5..8 {
            for i in 4..10 {
                g.set(i, j, CellState::Free);
            }
        }
        let p = preprocess_grid(&g, 0.4, UnknownPolicy::Free, &[]);
        assert_eq!((p.nx, p.ny, p.offset), (8, 5, (3, 4)));
        assert!((p.origin - Vec2::new(0.6, 0.8)).norm() < 1e-12);
        let p = preprocess_grid(&g, 0.4, UnknownPolicy::Free, &[Vec2::new(3.9, 3.9)]);
        assert_eq!((p.nx, p.ny), (17, 16));
    }
}
