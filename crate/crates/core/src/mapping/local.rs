use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math::{atan2, cos, floor, quat_from_yaw, sin, sqrt, Pose, Vec3, PI};
use crate::sensors::PointCloud;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LocalMapParams {
    pub n_az: usize,
    pub n_ring: usize,
    pub n_z: usize,
    /// Outer radius, m.
    pub radius: f64,
    /// Vertical extent relative to the vehicle, m.
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for LocalMapParams {
    fn default() -> Self {
        Self {
            n_az: 36,
            n_ring: 20,
            n_z: 6,
            radius: 6.0,
            z_min: -0.9,
            z_max: 0.9,
        }
    }
}

impl LocalMapParams {
    pub fn is_valid(&self) -> bool {
        self.n_az >= 1
            && self.n_ring >= 1
            && self.n_z >= 1
            && self.radius > 0.0
            && self.z_max > self.z_min
    }
}

/// Vehicle-centred, yaw-aligned cylindrical hit-count grid, rebuilt from
/// scratch every sensor frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalCylindricalMap {
    pub params: LocalMapParams,
    /// Vehicle position and yaw the map is centred on.
    pub center: Vec3,
    pub yaw: f64,
    /// Index `(iz * n_ring + ir) * n_az + ia`.
    pub counts: Vec<u32>,
}

/// Cell index triple (azimuth, ring, layer).
pub type CylCell = (usize, usize, usize);

impl LocalCylindricalMap {
    pub fn empty(params: LocalMapParams, center: Vec3, yaw: f64) -> Self {
        let n = params.n_az * params.n_ring * params.n_z;
        Self {
            params,
            center,
            yaw,
            counts: vec![0; n],
        }
    }

    fn ring_width(&self) -> f64 {
        self.params.radius / self.params.n_ring as f64
    }

    fn layer_height(&self) -> f64 {
        (self.params.z_max - self.params.z_min) / self.params.n_z as f64
    }

    fn az_width(&self) -> f64 {
        2.0 * PI / self.params.n_az as f64
    }

    /// Point in the yaw-aligned vehicle frame.
    pub fn to_local(&self, world: &Vec3) -> Vec3 {
        quat_from_yaw(-self.yaw) * (world - self.center)
    }

    pub fn to_world(&self, local: &Vec3) -> Vec3 {
        self.center + quat_from_yaw(self.yaw) * local
    }

    /// Bin of a yaw-aligned local point, if inside the cylinder.
    pub fn cell_of(&self, local: &Vec3) -> Option<CylCell> {
        let p = &self.params;
        let r = sqrt(local.x * local.x + local.y * local.y);
        if r >= p.radius || local.z < p.z_min || local.z >= p.z_max {
            return None;
        }
        let az = atan2(local.y, local.x);
        let ia =
            (floor(az * p.n_az as f64 / (2.0 * PI) + p.n_az as f64 / 2.0) as usize).min(p.n_az - 1);
        let ir = (floor(r / self.ring_width()) as usize).min(p.n_ring - 1);
        let iz = (floor((local.z - p.z_min) / self.layer_height()) as usize).min(p.n_z - 1);
        Some((ia, ir, iz))
    }

    fn linear(&self, c: CylCell) -> usize {
        (c.2 * self.params.n_ring + c.1) * self.params.n_az + c.0
    }

    pub fn count(&self, c: CylCell) -> u32 {
        self.counts[self.linear(c)]
    }

    pub fn nonzero_cells(&self) -> Vec<CylCell> {
        let p = &self.params;
        let mut out = Vec::new();
        for iz in 0..p.n_z {
            for ir in 0..p.n_ring {
                for ia in 0..p.n_az {
                    if self.count((ia, ir, iz)) > 0 {
                        out.push((ia, ir, iz));
                    }
                }
            }
        }
        out
    }

    /// Euclidean distance from a yaw-aligned local point to a cell volume
    /// (annular sector times vertical slab).
    pub fn distance_to_cell(&self, local: &Vec3, c: CylCell) -> f64 {
        let rw = self.ring_width();
        let (r0, r1) = (c.1 as f64 * rw, (c.1 + 1) as f64 * rw);
        let a0 = -PI + c.0 as f64 * self.az_width();
        let a1 = a0 + self.az_width();
        let zh = self.layer_height();
        let z0 = self.params.z_min + c.2 as f64 * zh;
        let dz = (z0 - local.z).max(local.z - (z0 + zh)).max(0.0);
        let dxy = sector_distance(local.x, local.y, r0, r1, a0, a1);
        sqrt(dxy * dxy + dz * dz)
    }

    /// Whether every occupied cell keeps at least `radius` from the segment
    /// between two local points. The segment is sampled at `radius / 4`
    /// spacing and the spacing is added as margin.
    pub fn corridor_free(&self, a: &Vec3, b: &Vec3, radius: f64) -> bool {
        let len = (b - a).norm();
        let step = (radius / 4.0).max(0.01);
        let n = (len / step) as usize + 1;
        let occupied = self.nonzero_cells();
        for k in 0..=n {
            let p = a + (b - a) * (k as f64 / n as f64);
            for &c in &occupied {
                if self.distance_to_cell(&p, c) < radius + step / 2.0 {
                    return false;
                }
            }
        }
        true
    }
}

/// Distance from `(x, y)` to the annular sector `r0 <= r <= r1`,
/// `a0 <= angle <= a1` (span at most pi).
fn sector_distance(x: f64, y: f64, r0: f64, r1: f64, a0: f64, a1: f64) -> f64 {
    let r = sqrt(x * x + y * y);
    let ang = atan2(y, x);
    let inside_angle = {
        let mid = 0.5 * (a0 + a1);
        let half = 0.5 * (a1 - a0);
        let mut d = ang - mid;
        while d > PI {
            d -= 2.0 * PI;
        }
        while d < -PI {
            d += 2.0 * PI;
        }
        d.abs() <= half
    };
    if inside_angle {
        return (r0 - r).max(r - r1).max(0.0);
    }
    let edge = |a: f64| {
        let (ux, uy) = (cos(a), sin(a));
        let t = (x * ux + y * uy).clamp(r0, r1);
        let (px, py) = (ux * t, uy * t);
        sqrt((x - px) * (x - px) + (y - py) * (y - py))
    };
    edge(a0).min(edge(a1))
}

/// Bins every in-range point of a sensor frame around the vehicle.
/// `sensor_pose` maps the cloud into the world frame.
pub fn rebuild_local_map(
    cloud: &PointCloud,
    sensor_pose: &Pose,
    vehicle_pose: &Pose,
    params: &LocalMapParams,
) -> LocalCylindricalMap {
    let mut map = LocalCylindricalMap::empty(*params, vehicle_pose.position, vehicle_pose.yaw());
    for p in &cloud.points {
        let local = map.to_local(&sensor_pose.transform_point(p));
        if let Some(c) = map.cell_of(&local) {
            let i = map.linear(c);
            map.counts[i] = map.counts[i].saturating_add(1);
        }
    }
    map
}
