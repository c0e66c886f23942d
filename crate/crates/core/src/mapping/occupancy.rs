use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math::{floor, logistic, logit, Pose, Vec3};
use crate::sensors::PointCloud;

/// Log-odds increments, clamp range and classification thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct OccupancyParams {
    pub l_occ: f64,
    pub l_free: f64,
    pub l_min: f64,
    pub l_max: f64,
    pub p_occ: f64,
    pub p_free: f64,
}

impl Default for OccupancyParams {
    fn default() -> Self {
        Self {
            l_occ: 0.85,
            l_free: -0.4,
            l_min: -3.5,
            l_max: 3.5,
            p_occ: 0.7,
            p_free: 0.3,
        }
    }
}

impl OccupancyParams {
    pub fn is_valid(&self) -> bool {
        self.l_occ > 0.0
            && self.l_free < 0.0
            && self.l_min < 0.0
            && self.l_max > 0.0
            && self.p_free > 0.0
            && self.p_occ < 1.0
            && self.p_free < self.p_occ
    }
}

/// Integer voxel coordinate.
pub type VoxelIndex = [i32; 3];

const UNTOUCHED: u8 = 0;
const MARK_FREE: u8 = 1;
const MARK_HIT: u8 = 2;

/// Probabilistic Cartesian voxel map in log-odds form.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalOccupancyMap {
    origin: Vec3,
    voxel_size: f64,
    dims: [usize; 3],
    params: OccupancyParams,
    log_odds: Vec<f64>,
    observed: Vec<bool>,
    version: u64,
    scratch: Vec<u8>,
    touched: Vec<usize>,
}

impl GlobalOccupancyMap {
    pub fn new(origin: Vec3, voxel_size: f64, dims: [usize; 3], params: OccupancyParams) -> Self {
        let n = dims[0] * dims[1] * dims[2];
        Self {
            origin,
            voxel_size,
            dims,
            params,
            log_odds: vec![0.0; n],
            observed: vec![false; n],
            version: 0,
            scratch: vec![UNTOUCHED; n],
            touched: Vec::new(),
        }
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn params(&self) -> &OccupancyParams {
        &self.params
    }

    /// Incremented on every integration that changed at least one voxel.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.log_odds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_odds.is_empty()
    }

    pub fn voxel_of(&self, p: &Vec3) -> VoxelIndex {
        let g = (p - self.origin) / self.voxel_size;
        [floor(g.x) as i32, floor(g.y) as i32, floor(g.z) as i32]
    }

    pub fn in_bounds(&self, v: VoxelIndex) -> bool {
        (0..3).all(|a| v[a] >= 0 && (v[a] as usize) < self.dims[a])
    }

    pub fn linear(&self, v: VoxelIndex) -> Option<usize> {
        self.in_bounds(v)
            .then(|| (v[2] as usize * self.dims[1] + v[1] as usize) * self.dims[0] + v[0] as usize)
    }

    pub fn center(&self, v: VoxelIndex) -> Vec3 {
        self.origin
            + Vec3::new(v[0] as f64 + 0.5, v[1] as f64 + 0.5, v[2] as f64 + 0.5) * self.voxel_size
    }

    pub fn log_odds(&self, v: VoxelIndex) -> Option<f64> {
        self.linear(v).map(|i| self.log_odds[i])
    }

    pub fn log_odds_raw(&self) -> &[f64] {
        &self.log_odds
    }

    pub fn probability(&self, v: VoxelIndex) -> Option<f64> {
        self.log_odds(v).map(logistic)
    }

    pub fn is_observed(&self, v: VoxelIndex) -> bool {
        self.linear(v).is_some_and(|i| self.observed[i])
    }

    pub fn observed_raw(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_occupied(&self, v: VoxelIndex) -> bool {
        self.log_odds(v)
            .is_some_and(|l| l > logit(self.params.p_occ))
    }

    /// Indices of every voxel above the occupancy threshold.
    pub fn occupied_voxels(&self) -> Vec<VoxelIndex> {
        let th = logit(self.params.p_occ);
        let [nx, ny, _] = self.dims;
        self.log_odds
            .iter()
            .enumerate()
            .filter(|(_, l)| **l > th)
            .map(|(i, _)| {
                [
                    (i % nx) as i32,
                    ((i / nx) % ny) as i32,
                    (i / (nx * ny)) as i32,
                ]
            })
            .collect()
    }

    fn mark(&mut self, i: usize, m: u8) {
        if self.scratch[i] == UNTOUCHED {
            self.touched.push(i);
        }
        if m > self.scratch[i] {
            self.scratch[i] = m;
        }
    }

    /// Integrates one sensor frame. Each voxel is updated at most once per
    /// frame; a voxel holding an endpoint takes the hit update even when
    /// other rays pass through it.
    pub fn integrate_pointcloud(&mut self, sensor_pose: &Pose, cloud: &PointCloud) {
        self.integrate_points(&sensor_pose.position, &cloud.to_world(sensor_pose));
    }

    /// As [`GlobalOccupancyMap::integrate_pointcloud`] with endpoints already
    /// in the map frame.
    pub fn integrate_points(&mut self, origin: &Vec3, endpoints: &[Vec3]) {
        for e in endpoints {
            let dir = e - origin;
            let n = dir.norm();
            let nudged = if n > 0.0 { e + dir * (1e-4 / n) } else { *e };
            if let Some(i) = self.linear(self.voxel_of(&nudged)) {
                self.mark(i, MARK_HIT);
            }
            self.walk_free(origin, &nudged);
        }
        if self.touched.is_empty() {
            return;
        }
        let p = self.params;
        let mut touched = core::mem::take(&mut self.touched);
        touched.sort_unstable();
        for &i in &touched {
            let delta = if self.scratch[i] == MARK_HIT {
                p.l_occ
            } else {
                p.l_free
            };
            self.log_odds[i] = (self.log_odds[i] + delta).clamp(p.l_min, p.l_max);
            self.observed[i] = true;
            self.scratch[i] = UNTOUCHED;
        }
        touched.clear();
        self.touched = touched;
        self.version += 1;
    }

    /// Marks voxels strictly between the sensor voxel and the endpoint voxel
    /// as free, clipped to the map volume.
    fn walk_free(&mut self, start: &Vec3, end: &Vec3) {
        let gs = (start - self.origin) / self.voxel_size;
        let ge = (end - self.origin) / self.voxel_size;
        let d = ge - gs;
        let Some((t0, t1)) = clip_segment(&gs, &d, &self.dims) else {
            return;
        };
        let sensor_voxel = self.voxel_of(start);
        let end_voxel = self.voxel_of(end);
        let a = gs + d * t0;
        let b = gs + d * t1;
        let mut cur = [floor(a.x) as i32, floor(a.y) as i32, floor(a.z) as i32];
        let last = [floor(b.x) as i32, floor(b.y) as i32, floor(b.z) as i32];
        let mut step = [0i32; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        let mut remaining = [0i32; 3];
        let seg = b - a;
        for ax in 0..3 {
            remaining[ax] = (last[ax] - cur[ax]).abs();
            if seg[ax] > 0.0 {
                step[ax] = 1;
                t_delta[ax] = 1.0 / seg[ax];
                t_max[ax] = (cur[ax] as f64 + 1.0 - a[ax]) / seg[ax];
            } else if seg[ax] < 0.0 {
                step[ax] = -1;
                t_delta[ax] = -1.0 / seg[ax];
                t_max[ax] = (cur[ax] as f64 - a[ax]) / seg[ax];
            }
        }
        loop {
            if cur != sensor_voxel && cur != end_voxel {
                if let Some(i) = self.linear(cur) {
                    self.mark(i, MARK_FREE);
                }
            }
            let mut axis = None;
            for ax in 0..3 {
                if remaining[ax] > 0 && axis.is_none_or(|b: usize| t_max[ax] < t_max[b]) {
                    axis = Some(ax);
                }
            }
            let Some(ax) = axis else { break };
            cur[ax] += step[ax];
            t_max[ax] += t_delta[ax];
            remaining[ax] -= 1;
        }
    }
}

/// Parameter interval of `p + t d`, `t` in `[0, 1]`, inside the grid box
/// `[0, dims)` (slightly shrunk so clipped points floor into the grid).
fn clip_segment(p: &Vec3, d: &Vec3, dims: &[usize; 3]) -> Option<(f64, f64)> {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for ax in 0..3 {
        let lo = 0.0;
        let hi = dims[ax] as f64 - 1e-9;
        if d[ax] == 0.0 {
            if p[ax] < lo || p[ax] > hi {
                return None;
            }
        } else {
            let mut ta = (lo - p[ax]) / d[ax];
            let mut tb = (hi - p[ax]) / d[ax];
            if ta > tb {
                core::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
    }
    (t0 <= t1).then_some((t0, t1))
}
