use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math::{ceil, floor, logit, Vec2};

use super::GlobalOccupancyMap;
use crate::world::WorldModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
#[repr(u8)]
pub enum CellState {
    Free = 0,
    Occupied = 1,
    Unknown = 2,
}

/// Tri-state 2-D grid with row-major cells (`index = j * nx + i`).
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ProjectedGrid2D {
    pub origin: Vec2,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
    /// Serialized as one digit per cell (`0` free, `1` occupied, `2` unknown).
    #[cfg_attr(feature = "serde", serde(with = "cells_digits"))]
    pub cells: Vec<CellState>,
}

impl CellState {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(CellState::Free),
            1 => Some(CellState::Occupied),
            2 => Some(CellState::Unknown),
            _ => None,
        }
    }
}

#[cfg(feature = "serde")]
mod cells_digits {
    use alloc::string::String;
    use alloc::vec::Vec;

    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use super::CellState;

    pub fn serialize<S: Serializer>(cells: &[CellState], s: S) -> Result<S::Ok, S::Error> {
        let text: String = cells.iter().map(|c| (b'0' + *c as u8) as char).collect();
        s.serialize_str(&text)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CellState>, D::Error> {
        let text = String::deserialize(d)?;
        text.bytes()
            .map(|b| {
                CellState::from_u8(b.wrapping_sub(b'0'))
                    .ok_or_else(|| D::Error::custom("cell digit must be 0, 1 or 2"))
            })
            .collect()
    }
}

impl ProjectedGrid2D {
    pub fn filled(origin: Vec2, cell_size: f64, nx: usize, ny: usize, state: CellState) -> Self {
        Self {
            origin,
            cell_size,
            nx,
            ny,
            cells: vec![state; nx * ny],
        }
    }

    pub fn get(&self, i: i64, j: i64) -> Option<CellState> {
        (i >= 0 && j >= 0 && (i as usize) < self.nx && (j as usize) < self.ny)
            .then(|| self.cells[j as usize * self.nx + i as usize])
    }

    pub fn set(&mut self, i: usize, j: usize, s: CellState) {
        self.cells[j * self.nx + i] = s;
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

    pub fn count(&self, s: CellState) -> usize {
        self.cells.iter().filter(|c| **c == s).count()
    }
}

/// Ground-truth footprint rasterized onto a grid: a cell is occupied when
/// its open square overlaps an obstacle whose height range overlaps
/// `z_band`. Every other cell is free.
pub fn footprint_grid(
    world: &WorldModel,
    origin: Vec2,
    cell_size: f64,
    nx: usize,
    ny: usize,
    z_band: [f64; 2],
) -> ProjectedGrid2D {
    let mut g = ProjectedGrid2D::filled(origin, cell_size, nx, ny, CellState::Free);
    for b in world.obstacles() {
        if b.max.z <= z_band[0] || b.min.z >= z_band[1] {
            continue;
        }
        let lo_i = floor((b.min.x - origin.x) / cell_size).max(0.0) as usize;
        let lo_j = floor((b.min.y - origin.y) / cell_size).max(0.0) as usize;
        let hi_i = (ceil((b.max.x - origin.x) / cell_size).max(0.0) as usize).min(nx);
        let hi_j = (ceil((b.max.y - origin.y) / cell_size).max(0.0) as usize).min(ny);
        for j in lo_j..hi_j {
            for i in lo_i..hi_i {
                let x0 = origin.x + i as f64 * cell_size;
                let y0 = origin.y + j as f64 * cell_size;
                if x0 < b.max.x
                    && x0 + cell_size > b.min.x
                    && y0 < b.max.y
                    && y0 + cell_size > b.min.y
                {
                    g.set(i, j, CellState::Occupied);
                }
            }
        }
    }
    g
}

/// Agreement between a mapped grid and a ground-truth footprint on the
/// same lattice.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct MapFidelity {
    /// Cells occupied in the truth footprint.
    pub truth_occupied: usize,
    /// Cells free in the truth footprint.
    pub truth_free: usize,
    /// Truth-occupied cells mapped as occupied.
    pub true_occupied: usize,
    /// Truth-free cells mapped as occupied.
    pub false_occupied: usize,
    /// Largest Chebyshev distance, in cells, from a mapped occupied cell to
    /// the nearest truth-occupied cell. `None` when that exceeds the search
    /// window or the truth has no occupied cells.
    pub max_dilation: Option<usize>,
}

impl MapFidelity {
    pub fn false_occupied_rate(&self) -> f64 {
        if self.truth_free == 0 {
            0.0
        } else {
            self.false_occupied as f64 / self.truth_free as f64
        }
    }

    /// Fraction of the truth footprint that was mapped as occupied.
    pub fn recall(&self) -> f64 {
        if self.truth_occupied == 0 {
            1.0
        } else {
            self.true_occupied as f64 / self.truth_occupied as f64
        }
    }
}

/// Compares `map` with `truth` cell by cell. Dilation is searched up to
/// `window` cells.
///
/// Panics if the grids do not share dimensions.
pub fn compare_to_footprint(
    map: &ProjectedGrid2D,
    truth: &ProjectedGrid2D,
    window: usize,
) -> MapFidelity {
    assert!(
        map.nx == truth.nx && map.ny == truth.ny,
        "grid dimensions differ"
    );
    let mut f = MapFidelity {
        truth_occupied: 0,
        truth_free: 0,
        true_occupied: 0,
        false_occupied: 0,
        max_dilation: Some(0),
    };
    let w = window as i64;
    for j in 0..map.ny as i64 {
        for i in 0..map.nx as i64 {
            let t = truth.get(i, j) == Some(CellState::Occupied);
            let m = map.get(i, j) == Some(CellState::Occupied);
            if t {
                f.truth_occupied += 1;
            } else {
                f.truth_free += 1;
            }
            if !m {
                continue;
            }
            if t {
                f.true_occupied += 1;
                continue;
            }
            f.false_occupied += 1;
            let d = (1..=w).find(|&r| {
                (-r..=r).any(|dj| {
                    (-r..=r).any(|di| truth.get(i + di, j + dj) == Some(CellState::Occupied))
                })
            });
            f.max_dilation = match (f.max_dilation, d) {
                (Some(a), Some(b)) => Some(a.max(b as usize)),
                _ => None,
            };
        }
    }
    if f.truth_occupied == 0 && f.false_occupied > 0 {
        f.max_dilation = None;
    }
    f
}

/// Collapses the voxel layers whose centres lie in `z_band` into columns. A column
/// is occupied if any voxel exceeds `p_occ`, free if it has observed voxels
/// and all of them are below `p_free`, unknown otherwise.
pub fn project_to_2d(
    map: &GlobalOccupancyMap,
    z_band: [f64; 2],
    p_occ: f64,
    p_free: f64,
) -> ProjectedGrid2D {
    let [nx, ny, nz] = map.dims();
    let vs = map.voxel_size();
    let o = map.origin();
    let k0 = (ceil((z_band[0] - o.z) / vs - 0.5).max(0.0) as usize).min(nz);
    let k1 = ((floor((z_band[1] - o.z) / vs - 0.5) + 1.0).max(0.0) as usize).min(nz);
    let (l_occ, l_free) = (logit(p_occ), logit(p_free));
    let lo = map.log_odds_raw();
    let obs = map.observed_raw();
    let mut grid = ProjectedGrid2D::filled(Vec2::new(o.x, o.y), vs, nx, ny, CellState::Unknown);
    for j in 0..ny {
        for i in 0..nx {
            let mut any_obs = false;
            let mut all_free = true;
            let mut occ = false;
            for k in k0..k1 {
                let idx = (k * ny + j) * nx + i;
                if lo[idx] > l_occ {
                    occ = true;
                    break;
                }
                if obs[idx] {
                    any_obs = true;
                    if lo[idx] >= l_free {
                        all_free = false;
                    }
                }
            }
            let s = if occ {
                CellState::Occupied
            } else if any_obs && all_free {
                CellState::Free
            } else {
                CellState::Unknown
            };
            grid.cells[j * nx + i] = s;
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::OccupancyParams;
    use crate::math::Vec3;

    #[test]
    fn fresh_map_unknown() {
        let m = GlobalOccupancyMap::new(Vec3::zeros(), 0.2, [10, 8, 5], OccupancyParams::default());
        let g = project_to_2d(&m, [0.3, 2.0], 0.7, 0.3);
        assert_eq!((g.nx, g.ny), (10, 8));
        assert_eq!(g.count(CellState::Unknown), 80);
    }

    #[test]
    fn occupied_voxel_in_band() {
        let mut m =
            GlobalOccupancyMap::new(Vec3::zeros(), 0.2, [10, 8, 10], OccupancyParams::default());
        m.integrate_points(&Vec3::new(0.1, 0.1, 1.1), &[Vec3::new(1.3, 0.1, 1.1)]);
        let g = project_to_2d(&m, [0.3, 2.0], 0.7, 0.3);
        assert_eq!(g.get(6, 0), Some(CellState::Occupied));
        assert_eq!(g.count(CellState::Occupied), 1);
        // single free pass is not yet below p_free
        assert_eq!(g.get(3, 0), Some(CellState::Unknown));
        // out of band
        let g = project_to_2d(&m, [1.4, 2.0], 0.7, 0.3);
        assert_eq!(g.count(CellState::Occupied), 0);
    }
}
