use alloc::vec::Vec;

use nalgebra::{Matrix3, Rotation3};
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::math::{atan2, quat_from_yaw, sqrt, Pose, Quat, Vec3};

/// Maximum timestamp gap for associating two poses, s.
pub const ASSOCIATION_TOLERANCE: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct StampedPose {
    pub t: f64,
    pub pose: Pose,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrajectoryPair {
    pub estimated: Vec<StampedPose>,
    pub ground_truth: Vec<StampedPose>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Alignment {
    None,
    /// Yaw rotation plus 3-D translation.
    YawXy,
    /// Rotation plus translation, no scale.
    FullSe3,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AteError {
    #[error(
        "trajectory needs at least 2 poses (estimated {estimated}, ground truth {ground_truth})"
    )]
    TooShort {
        estimated: usize,
        ground_truth: usize,
    },
    #[error("no pose pairs within {0} s of each other")]
    EmptyAssociation(f64),
}

/// Nearest-timestamp pairs (estimated, ground truth).
fn associate(pair: &TrajectoryPair) -> Vec<(Vec3, Vec3)> {
    let gt = &pair.ground_truth;
    let mut out = Vec::new();
    for e in &pair.estimated {
        let idx = gt.partition_point(|g| g.t < e.t);
        let mut best: Option<(f64, usize)> = None;
        for j in [idx.wrapping_sub(1), idx] {
            if let Some(g) = gt.get(j) {
                let dt = (g.t - e.t).abs();
                if best.is_none_or(|(d, _)| dt < d) {
                    best = Some((dt, j));
                }
            }
        }
        if let Some((dt, j)) = best {
            if dt <= ASSOCIATION_TOLERANCE {
                out.push((e.pose.position, gt[j].pose.position));
            }
        }
    }
    out
}

fn centroid(points: impl Iterator<Item = Vec3>, n: usize) -> Vec3 {
    points.fold(Vec3::zeros(), |a, p| a + p) / n as f64
}

/// Rigid transform mapping the estimated points onto ground truth in the
/// least-squares sense.
fn align(pairs: &[(Vec3, Vec3)], mode: Alignment) -> Pose {
    let n = pairs.len();
    let ce = centroid(pairs.iter().map(|p| p.0), n);
    let cg = centroid(pairs.iter().map(|p| p.1), n);
    let rotation = match mode {
        Alignment::None => return Pose::identity(),
        Alignment::YawXy => {
            let (mut s, mut c) = (0.0, 0.0);
            for (e, g) in pairs {
                let (e, g) = (e - ce, g - cg);
                s += e.x * g.y - e.y * g.x;
                c += e.x * g.x + e.y * g.y;
            }
            quat_from_yaw(atan2(s, c))
        }
        Alignment::FullSe3 => {
            let mut h = Matrix3::zeros();
            for (e, g) in pairs {
                h += (g - cg) * (e - ce).transpose();
            }
            let svd = h.svd(true, true);
            let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
            let d = (u * v_t).determinant();
            let fix =
                Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, if d < 0.0 { -1.0 } else { 1.0 }));
            Quat::from_rotation_matrix(&Rotation3::from_matrix_unchecked(u * fix * v_t))
        }
    };
    Pose::new(cg - rotation * ce, rotation)
}

/// Translational RMSE between associated poses after optional alignment.
pub fn compute_ate_rmse(pair: &TrajectoryPair, mode: Alignment) -> Result<f64, AteError> {
    if pair.estimated.len() < 2 || pair.ground_truth.len() < 2 {
        return Err(AteError::TooShort {
            estimated: pair.estimated.len(),
            ground_truth: pair.ground_truth.len(),
        });
    }
    let pairs = associate(pair);
    if pairs.is_empty() {
        return Err(AteError::EmptyAssociation(ASSOCIATION_TOLERANCE));
    }
    let t = align(&pairs, mode);
    let sum: f64 = pairs
        .iter()
        .map(|(e, g)| (t.transform_point(e) - g).norm_squared())
        .sum();
    Ok(sqrt(sum / pairs.len() as f64))
}
