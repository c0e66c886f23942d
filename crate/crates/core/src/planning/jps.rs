use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math::{Vec2, SQRT_2};

use super::InflatedGrid;

/// Path cost `straight + diagonal * sqrt(2)` in cells, compared exactly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GridCost {
    pub straight: u64,
    pub diagonal: u64,
}

impl GridCost {
    pub const ZERO: GridCost = GridCost {
        straight: 0,
        diagonal: 0,
    };

    pub fn new(straight: u64, diagonal: u64) -> Self {
        Self { straight, diagonal }
    }

    /// Octile cost of an unobstructed move by `(dx, dy)` cells.
    pub fn octile(dx: i64, dy: i64) -> Self {
        let (a, b) = (dx.unsigned_abs(), dy.unsigned_abs());
        Self {
            straight: a.max(b) - a.min(b),
            diagonal: a.min(b),
        }
    }

    pub fn cells(&self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * SQRT_2
    }
}

impl core::ops::Add for GridCost {
    type Output = GridCost;
    fn add(self, o: GridCost) -> GridCost {
        GridCost {
            straight: self.straight + o.straight,
            diagonal: self.diagonal + o.diagonal,
        }
    }
}

impl Ord for GridCost {
    /// `a1 + b1 r` vs `a2 + b2 r` with `r = sqrt(2)` irrational: compares
    /// `a1 - a2` with `(b2 - b1) r` through squares.
    fn cmp(&self, o: &Self) -> Ordering {
        let da = self.straight as i128 - o.straight as i128;
        let db = o.diagonal as i128 - self.diagonal as i128;
        // sign of da - db * r
        match (da.signum(), db.signum()) {
            (0, 0) => Ordering::Equal,
            (s, 0) => s.cmp(&0),
            (0, s) => 0.cmp(&s),
            (1, -1) => Ordering::Greater,
            (-1, 1) => Ordering::Less,
            (1, 1) => (da * da).cmp(&(2 * db * db)),
            _ => (2 * db * db).cmp(&(da * da)),
        }
    }
}

impl PartialOrd for GridCost {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GlobalPath {
    /// Cell-center waypoints, m.
    pub waypoints: Vec<Vec2>,
    pub length: f64,
    pub cost: GridCost,
    /// Set when the goal (or start) cell was blocked and replaced by the
    /// nearest free cell.
    pub goal_relocated: Option<Vec2>,
    pub start_relocated: Option<Vec2>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PlanError {
    #[error("start ({0}, {1}) outside the planning grid")]
    StartOutside(f64, f64),
    #[error("goal ({0}, {1}) outside the planning grid")]
    GoalOutside(f64, f64),
    #[error("start blocked with no free cell within {0} m")]
    StartBlocked(f64),
    #[error("goal blocked with no free cell within {0} m")]
    GoalBlocked(f64),
    #[error("no path: start and goal lie in disconnected free space")]
    NoPath,
}

/// Radius searched for a free substitute when the goal cell is blocked, m.
pub const RELOCATE_RADIUS: f64 = 1.0;

/// Free cell nearest to `(i, j)` within `radius` m, ties broken by row then
/// column.
pub fn nearest_free(grid: &InflatedGrid, i: i64, j: i64, radius: f64) -> Option<(i64, i64)> {
    let r = (radius / grid.cell_size) as i64;
    let mut best: Option<(i64, (i64, i64))> = None;
    for dj in -r..=r {
        for di in -r..=r {
            let d2 = di * di + dj * dj;
            if d2 > r * r || !grid.free(i + di, j + dj) {
                continue;
            }
            if best.is_none_or(|(b, _)| d2 < b) {
                best = Some((d2, (i + di, j + dj)));
            }
        }
    }
    best.map(|b| b.1)
}

fn allowed_move(g: &InflatedGrid, x: i64, y: i64, dx: i64, dy: i64) -> bool {
    if !g.free(x + dx, y + dy) {
        return false;
    }
    dx == 0 || dy == 0 || (g.free(x + dx, y) && g.free(x, y + dy))
}

/// 8-neighbour moves without corner cutting: a diagonal step needs both
/// orthogonal neighbours free.
pub fn neighbours(
    g: &InflatedGrid,
    x: i64,
    y: i64,
) -> impl Iterator<Item = (i64, i64, GridCost)> + '_ {
    const DIRS: [(i64, i64); 8] = [
        (1, 0),
        (-1, 0),
        (0, 1),
        (0, -1),
        (1, 1),
        (1, -1),
        (-1, 1),
        (-1, -1),
    ];
    DIRS.iter()
        .filter(move |(dx, dy)| allowed_move(g, x, y, *dx, *dy))
        .map(move |(dx, dy)| {
            let c = if *dx != 0 && *dy != 0 {
                GridCost::new(0, 1)
            } else {
                GridCost::new(1, 0)
            };
            (x + dx, y + dy, c)
        })
}

struct Jps<'a> {
    g: &'a InflatedGrid,
    goal: (i64, i64),
}

impl Jps<'_> {
    fn jump(&self, mut x: i64, mut y: i64, dx: i64, dy: i64) -> Option<(i64, i64)> {
        let g = self.g;
        loop {
            if !g.free(x, y) {
                return None;
            }
            if (x, y) == self.goal {
                return Some((x, y));
            }
            if dx != 0 && dy != 0 {
                if self.jump(x + dx, y, dx, 0).is_some() || self.jump(x, y + dy, 0, dy).is_some() {
                    return Some((x, y));
                }
            } else if dx != 0 {
                if (g.free(x, y - 1) && !g.free(x - dx, y - 1))
                    || (g.free(x, y + 1) && !g.free(x - dx, y + 1))
                {
                    return Some((x, y));
                }
            } else if (g.free(x - 1, y) && !g.free(x - 1, y - dy))
                || (g.free(x + 1, y) && !g.free(x + 1, y - dy))
            {
                return Some((x, y));
            }
            if !(g.free(x + dx, y) && g.free(x, y + dy)) {
                return None;
            }
            x += dx;
            y += dy;
        }
    }

    fn successors(&self, x: i64, y: i64, parent: Option<(i64, i64)>, out: &mut Vec<(i64, i64)>) {
        out.clear();
        let g = self.g;
        let Some((px, py)) = parent else {
            out.extend(neighbours(g, x, y).map(|(a, b, _)| (a, b)));
            return;
        };
        let dx = (x - px).signum();
        let dy = (y - py).signum();
        if dx != 0 && dy != 0 {
            let (v, h) = (g.free(x, y + dy), g.free(x + dx, y));
            if v {
                out.push((x, y + dy));
            }
            if h {
                out.push((x + dx, y));
            }
            if v && h {
                out.push((x + dx, y + dy));
            }
        } else if dx != 0 {
            let (next, up, down) = (g.free(x + dx, y), g.free(x, y + 1), g.free(x, y - 1));
            if next {
                out.push((x + dx, y));
                if up {
                    out.push((x + dx, y + 1));
                }
                if down {
                    out.push((x + dx, y - 1));
                }
            }
            if up {
                out.push((x, y + 1));
            }
            if down {
                out.push((x, y - 1));
            }
        } else {
            let (next, right, left) = (g.free(x, y + dy), g.free(x + 1, y), g.free(x - 1, y));
            if next {
                out.push((x, y + dy));
                if right {
                    out.push((x + 1, y + dy));
                }
                if left {
                    out.push((x - 1, y + dy));
                }
            }
            if right {
                out.push((x + 1, y));
            }
            if left {
                out.push((x - 1, y));
            }
        }
    }
}

#[derive(PartialEq, Eq)]
struct Open {
    f: GridCost,
    g: GridCost,
    idx: usize,
}

impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.cmp(&self.f)
            .then_with(|| self.g.cmp(&o.g))
            .then_with(|| o.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Shortest 8-connected path by jump point search. Waypoints are the start,
/// every jump point on the path and the goal.
pub fn jps_plan(grid: &InflatedGrid, start: &Vec2, goal: &Vec2) -> Result<GlobalPath, PlanError> {
    let (si, sj) = grid.cell_of(start);
    if !grid.in_bounds(si, sj) {
        return Err(PlanError::StartOutside(start.x, start.y));
    }
    let (gi, gj) = grid.cell_of(goal);
    if !grid.in_bounds(gi, gj) {
        return Err(PlanError::GoalOutside(goal.x, goal.y));
    }
    let mut start_relocated = None;
    let (si, sj) = if grid.free(si, sj) {
        (si, sj)
    } else {
        let c = nearest_free(grid, si, sj, RELOCATE_RADIUS)
            .ok_or(PlanError::StartBlocked(RELOCATE_RADIUS))?;
        start_relocated = Some(grid.center(c.0, c.1));
        c
    };
    let mut goal_relocated = None;
    let (gi, gj) = if grid.free(gi, gj) {
        (gi, gj)
    } else {
        let c = nearest_free(grid, gi, gj, RELOCATE_RADIUS)
            .ok_or(PlanError::GoalBlocked(RELOCATE_RADIUS))?;
        goal_relocated = Some(grid.center(c.0, c.1));
        c
    };
    let cells = jps_cells(grid, (si, sj), (gi, gj)).ok_or(PlanError::NoPath)?;
    let mut cost = GridCost::ZERO;
    for w in cells.windows(2) {
        cost = cost + GridCost::octile(w[1].0 - w[0].0, w[1].1 - w[0].1);
    }
    let waypoints: Vec<Vec2> = cells.iter().map(|c| grid.center(c.0, c.1)).collect();
    Ok(GlobalPath {
        waypoints,
        length: cost.cells() * grid.cell_size,
        cost,
        goal_relocated,
        start_relocated,
    })
}

/// Jump-point cell sequence between two free cells.
pub fn jps_cells(
    grid: &InflatedGrid,
    start: (i64, i64),
    goal: (i64, i64),
) -> Option<Vec<(i64, i64)>> {
    if start == goal {
        return Some(vec![start]);
    }
    let nx = grid.nx as i64;
    let n = grid.nx * grid.ny;
    let index = |x: i64, y: i64| (y * nx + x) as usize;
    let mut best = vec![None::<GridCost>; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let jps = Jps { g: grid, goal };
    let h = |x: i64, y: i64| GridCost::octile(goal.0 - x, goal.1 - y);
    let s = index(start.0, start.1);
    best[s] = Some(GridCost::ZERO);
    heap.push(Open {
        f: h(start.0, start.1),
        g: GridCost::ZERO,
        idx: s,
    });
    let mut succ = Vec::with_capacity(8);
    while let Some(Open { g: gcost, idx, .. }) = heap.pop() {
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        let (x, y) = ((idx % grid.nx) as i64, (idx / grid.nx) as i64);
        if (x, y) == goal {
            let mut cells = Vec::new();
            let mut c = idx;
            while c != usize::MAX {
                cells.push(((c % grid.nx) as i64, (c / grid.nx) as i64));
                c = parent[c];
            }
            cells.reverse();
            return Some(cells);
        }
        let par = (parent[idx] != usize::MAX).then(|| {
            (
                (parent[idx] % grid.nx) as i64,
                (parent[idx] / grid.nx) as i64,
            )
        });
        jps.successors(x, y, par, &mut succ);
        for &(nx_, ny_) in succ.iter() {
            let Some((jx, jy)) = jps.jump(nx_, ny_, (nx_ - x).signum(), (ny_ - y).signum()) else {
                continue;
            };
            let j = index(jx, jy);
            if closed[j] {
                continue;
            }
            let ng = gcost + GridCost::octile(jx - x, jy - y);
            if best[j].is_none_or(|b| ng < b) {
                best[j] = Some(ng);
                parent[j] = idx;
                heap.push(Open {
                    f: ng + h(jx, jy),
                    g: ng,
                    idx: j,
                });
            }
        }
    }
    None
}

/// Plain 8-connected Dijkstra cost with the same move rules, for
/// verification.
pub fn dijkstra_cost(grid: &InflatedGrid, start: (i64, i64), goal: (i64, i64)) -> Option<GridCost> {
    if !grid.free(start.0, start.1) || !grid.free(goal.0, goal.1) {
        return None;
    }
    let nx = grid.nx as i64;
    let mut best = vec![None::<GridCost>; grid.nx * grid.ny];
    let mut heap = BinaryHeap::new();
    let s = (start.1 * nx + start.0) as usize;
    best[s] = Some(GridCost::ZERO);
    heap.push(Open {
        f: GridCost::ZERO,
        g: GridCost::ZERO,
        idx: s,
    });
    while let Some(Open { g, idx, .. }) = heap.pop() {
        if best[idx].is_some_and(|b| g > b) {
            continue;
        }
        let (x, y) = ((idx % grid.nx) as i64, (idx / grid.nx) as i64);
        if (x, y) == goal {
            return Some(g);
        }
        for (a, b, c) in neighbours(grid, x, y) {
            let j = (b * nx + a) as usize;
            let ng = g + c;
            if best[j].is_none_or(|o| ng < o) {
                best[j] = Some(ng);
                heap.push(Open {
                    f: ng,
                    g: ng,
                    idx: j,
                });
            }
        }
    }
    None
}
