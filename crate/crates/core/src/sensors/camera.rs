//! Pinhole depth camera: intrinsics, extrinsics, raycast rendering and
//! back-projection to a point cloud.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::SensorError;
use crate::math::{tan, Pose, Vec3, PI};
use crate::rng::SimRng;
use crate::world::WorldModel;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CameraIntrinsics {
    pub width: u32,
    pub height: u32,
    pub hfov: f64,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

/// Focal length and principal point from horizontal field of view and
/// resolution: `fx = fy = width / (2 tan(hfov / 2))`, `cx = width / 2`,
/// `cy = height / 2`.
pub fn intrinsics_from_fov(
    width: u32,
    height: u32,
    hfov: f64,
) -> Result<CameraIntrinsics, SensorError> {
    if width < 1 || height < 1 {
        return Err(SensorError::Domain(
            "image dimensions must be at least 1 pixel",
        ));
    }
    if !(hfov > 0.0 && hfov < PI) {
        return Err(SensorError::Domain("hfov must lie in (0, pi)"));
    }
    let f = width as f64 / (2.0 * tan(hfov / 2.0));
    Ok(CameraIntrinsics {
        width,
        height,
        hfov,
        fx: f,
        fy: f,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
    })
}

impl CameraIntrinsics {
    /// Same field of view at `1/factor` of the resolution.
    pub fn decimated(&self, factor: u32) -> Result<CameraIntrinsics, SensorError> {
        let factor = factor.max(1);
        intrinsics_from_fov(self.width / factor, self.height / factor, self.hfov)
    }

    /// Unnormalized viewing ray (z = 1) through pixel coordinates `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Projects a camera-frame point to pixel coordinates.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((p.x * self.fx / p.z + self.cx, p.y * self.fy / p.z + self.cy))
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Stereo rig geometry: right-to-left camera and left-camera-to-IMU.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CameraExtrinsics {
    pub right_to_left: Pose,
    pub left_to_imu: Pose,
}

impl Default for CameraExtrinsics {
    /// 5 cm stereo baseline; left optical frame 12 cm ahead of the IMU with
    /// optical z forward, x right, y down.
    fn default() -> Self {
        Self {
            right_to_left: Pose::from_matrix_rows([
                [1.0, 0.0, 0.0, 0.05],
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
            ]),
            left_to_imu: Pose::from_matrix_rows([
                [0.0, 0.0, 1.0, 0.12],
                [-1.0, 0.0, 0.0, 0.0],
                [0.0, -1.0, 0.0, 0.0],
            ]),
        }
    }
}

impl CameraExtrinsics {
    /// Checks the rotation blocks are orthonormal.
    pub fn is_valid(&self) -> bool {
        [self.right_to_left, self.left_to_imu].iter().all(|p| {
            let m = p.orientation.to_rotation_matrix().into_inner();
            (m.transpose() * m - nalgebra::Matrix3::identity())
                .abs()
                .max()
                < 1e-9
        })
    }
}

/// Range image storing z-depth (distance along the optical axis).
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub timestamp: f64,
    /// Row-major; [`DepthImage::NO_RETURN`] where nothing was hit.
    pub data: Vec<f64>,
}

impl DepthImage {
    pub const NO_RETURN: f64 = f64::INFINITY;

    pub fn at(&self, u: u32, v: u32) -> f64 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    pub fn finite_count(&self) -> usize {
        self.data.iter().filter(|d| d.is_finite()).count()
    }
}

/// Points in the left-camera optical frame.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PointCloud {
    pub timestamp: f64,
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn to_world(&self, camera_pose: &Pose) -> Vec<Vec3> {
        self.points
            .iter()
            .map(|p| camera_pose.transform_point(p))
            .collect()
    }
}

/// Raycasts the world through every pixel centre `(u + 0.5, v + 0.5)`.
pub fn render_depth(
    world: &WorldModel,
    camera_pose: &Pose,
    intr: &CameraIntrinsics,
    max_range: f64,
    timestamp: f64,
) -> DepthImage {
    let (w, h) = (intr.width, intr.height);
    let mut data = vec![DepthImage::NO_RETURN; intr.pixel_count()];
    let origin = camera_pose.position;
    for v in 0..h {
        for u in 0..w {
            let ray_c = intr.ray(u as f64 + 0.5, v as f64 + 0.5);
            let len = ray_c.norm();
            let dir = camera_pose.transform_vector(&(ray_c / len));
            let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
            if let Some(t) = world.ray_hit_inv(&origin, &dir, &inv, max_range) {
                if t > 0.0 {
                    data[(v * w + u) as usize] = t / len;
                }
            }
        }
    }
    DepthImage {
        width: w,
        height: h,
        timestamp,
        data,
    }
}

/// Adds zero-mean Gaussian noise to every return, keeping values inside
/// `(0, max_range]`.
pub fn add_depth_noise(img: &mut DepthImage, sigma: f64, max_range: f64, rng: &mut SimRng) {
    if sigma <= 0.0 {
        return;
    }
    for d in img.data.iter_mut().filter(|d| d.is_finite()) {
        let noisy = *d + rng.normal(sigma);
        *d = if noisy <= 0.0 || noisy > max_range {
            DepthImage::NO_RETURN
        } else {
            noisy
        };
    }
}

/// Back-projects every `stride`-th finite pixel along both axes:
/// `X = (u - cx) z / fx`, `Y = (v - cy) z / fy`, `Z = z`.
pub fn depth_to_pointcloud(img: &DepthImage, intr: &CameraIntrinsics, stride: u32) -> PointCloud {
    let stride = stride.max(1);
    let mut points = Vec::new();
    let mut v = 0;
    while v < img.height {
        let mut u = 0;
        while u < img.width {
            let z = img.at(u, v);
            if z.is_finite() {
                points.push(Vec3::new(
                    (u as f64 - intr.cx) * z / intr.fx,
                    (v as f64 - intr.cy) * z / intr.fy,
                    z,
                ));
            }
            u += stride;
        }
        v += stride;
    }
    PointCloud {
        timestamp: img.timestamp,
        points,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{quat_from_yaw, Quat};
    use crate::world::{Aabb, Bounds2};

    fn forward_camera(position: Vec3, yaw: f64) -> Pose {
        // body at `position` with heading `yaw`, identity IMU, default camera
        Pose::new(position, quat_from_yaw(yaw)).compose(&CameraExtrinsics::default().left_to_imu)
    }

    #[test]
    fn appendix_intrinsics() {
        let k = intrinsics_from_fov(640, 360, 1.5).unwrap();
        assert!((k.fx - 343.4963).abs() < 1e-3);
        assert_eq!(k.fx, k.fy);
        assert_eq!((k.cx, k.cy), (320.0, 180.0));
    }

    #[test]
    fn right_angle_fov() {
        let k = intrinsics_from_fov(2, 2, PI / 2.0).unwrap();
        assert!((k.fx - 1.0).abs() < 1e-12);
        assert_eq!((k.cx, k.cy), (1.0, 1.0));
    }

    #[test]
    fn wide_fov() {
        let k = intrinsics_from_fov(640, 360, 2.0).unwrap();
        // 320 / tan(1.0)
        assert!((k.fx - 205.4694).abs() < 1e-3, "{}", k.fx);
    }

    #[test]
    fn domain_errors() {
        assert!(intrinsics_from_fov(0, 10, 1.0).is_err());
        assert!(intrinsics_from_fov(10, 10, 0.0).is_err());
        assert!(intrinsics_from_fov(10, 10, PI).is_err());
    }

    #[test]
    fn default_extrinsics_are_rigid() {
        let e = CameraExtrinsics::default();
        assert!(e.is_valid());
        // optical axis points along IMU +x
        let axis = e.left_to_imu.transform_vector(&Vec3::z());
        assert!((axis - Vec3::x()).norm() < 1e-12);
        assert!((e.left_to_imu.position - Vec3::new(0.12, 0.0, 0.0)).norm() < 1e-15);
        assert!((e.right_to_left.position - Vec3::new(0.05, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn orthogonal_wall_depth() {
        let world = WorldModel::new(
            Bounds2::square(10.0),
            alloc::vec![Aabb::new(
                Vec3::new(2.12, -5.0, 0.0),
                Vec3::new(3.0, 5.0, 3.0)
            )],
        )
        .unwrap();
        let k = intrinsics_from_fov(64, 36, 1.5).unwrap();
        let cam = forward_camera(Vec3::new(0.0, 0.0, 1.0), 0.0);
        let img = render_depth(&world, &cam, &k, 10.0, 0.0);
        assert!((img.at(32, 18) - 2.0).abs() < 1e-9);
        // z-depth of a fronto-parallel wall is constant
        for d in img.data.iter().filter(|d| d.is_finite()) {
            assert!((d - 2.0).abs() < 1e-9 || *d < 2.0);
        }
    }

    #[test]
    fn horizon_no_return_above_ground_rows() {
        let world = WorldModel::empty(Bounds2::square(10.0));
        let k = intrinsics_from_fov(64, 36, 1.5).unwrap();
        let cam = forward_camera(Vec3::new(0.0, 0.0, 1.0), 0.0);
        let img = render_depth(&world, &cam, &k, 100.0, 0.0);
        for v in 0..36 {
            for u in 0..64 {
                let looks_down = v as f64 + 0.5 > k.cy;
                assert_eq!(img.at(u, v).is_finite(), looks_down, "pixel ({u},{v})");
            }
        }
    }

    #[test]
    fn center_pixel_backprojects_to_axis() {
        let k = intrinsics_from_fov(640, 360, 1.5).unwrap();
        let mut data = vec![DepthImage::NO_RETURN; k.pixel_count()];
        data[180 * 640 + 320] = 2.0;
        let img = DepthImage {
            width: 640,
            height: 360,
            timestamp: 1.5,
            data,
        };
        let pc = depth_to_pointcloud(&img, &k, 1);
        assert_eq!(pc.points, alloc::vec![Vec3::new(0.0, 0.0, 2.0)]);
        assert_eq!(pc.timestamp, 1.5);
    }

    #[test]
    fn full_wall_point_count() {
        let world = WorldModel::new(
            Bounds2::square(10.0),
            alloc::vec![Aabb::new(
                Vec3::new(0.62, -10.0, 0.0),
                Vec3::new(1.0, 10.0, 20.0)
            )],
        )
        .unwrap();
        let k = intrinsics_from_fov(640, 360, 1.5).unwrap();
        let cam = forward_camera(Vec3::new(0.0, 0.0, 5.0), 0.0);
        let img = render_depth(&world, &cam, &k, 10.0, 0.0);
        let pc = depth_to_pointcloud(&img, &k, 1);
        assert_eq!(img.finite_count(), 230_400);
        assert_eq!(pc.points.len(), 230_400);
        for p in &pc.points {
            let (u, v) = k.project(p).unwrap();
            assert!(u > -1e-9 && u < 640.0 && v > -1e-9 && v < 360.0);
        }
    }

    #[test]
    fn stride_subsamples() {
        let k = intrinsics_from_fov(8, 4, 1.0).unwrap();
        let img = DepthImage {
            width: 8,
            height: 4,
            timestamp: 0.0,
            data: vec![1.0; 32],
        };
        assert_eq!(depth_to_pointcloud(&img, &k, 2).points.len(), 8);
        assert_eq!(depth_to_pointcloud(&img, &k, 3).points.len(), 6);
    }

    #[test]
    fn depth_noise_zero_sigma_is_identity() {
        let mut img = DepthImage {
            width: 2,
            height: 1,
            timestamp: 0.0,
            data: vec![1.0, DepthImage::NO_RETURN],
        };
        let before = img.clone();
        let mut rng = SimRng::new(1, crate::rng::Stream::Depth);
        add_depth_noise(&mut img, 0.0, 5.0, &mut rng);
        assert_eq!(img, before);
        add_depth_noise(&mut img, 0.01, 5.0, &mut rng);
        assert!(img.data[0] != 1.0 && img.data[0] > 0.9);
        let _ = Quat::identity();
    }
}
