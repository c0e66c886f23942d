//! Export formats for external tools: TUM trajectories, grayscale PGM
//! images of the 2-D layers and a plain-text occupancy dump.

use std::fmt::Write as _;
use std::io::{self, BufRead};

use nalgebra::Quaternion;
use navsim_core::localization::StampedPose;
use navsim_core::mapping::{CellState, EsdfMap2D, GlobalOccupancyMap, ProjectedGrid2D};
use navsim_core::math::{Pose, Quat, Vec3};

/// One `timestamp x y z qx qy qz qw` line per pose.
pub fn tum_trajectory(poses: &[StampedPose]) -> String {
    let mut out = String::new();
    for p in poses {
        let (t, q) = (p.pose.position, p.pose.orientation);
        let _ = writeln!(
            out,
            "{:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?}",
            p.t, t.x, t.y, t.z, q.i, q.j, q.k, q.w
        );
    }
    out
}

/// Parses a TUM trajectory. Blank lines and `#` comments are skipped.
pub fn parse_tum<R: BufRead>(input: R) -> io::Result<Vec<StampedPose>> {
    let bad = |n: usize, why: &str| {
        io::Error::new(io::ErrorKind::InvalidData, format!("line {n}: {why}"))
    };
    let mut poses = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(n + 1, &e.to_string()))?;
        if v.len() != 8 {
            return Err(bad(n + 1, "expected 8 fields"));
        }
        let q = Quat::new_normalize(Quaternion::new(v[7], v[4], v[5], v[6]));
        poses.push(StampedPose {
            t: v[0],
            pose: Pose::new(Vec3::new(v[1], v[2], v[3]), q),
        });
    }
    Ok(poses)
}

fn pgm(nx: usize, ny: usize, pixel: impl Fn(usize, usize) -> u8) -> Vec<u8> {
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    // image rows run top to bottom, so +y ends up at the top
    for j in (0..ny).rev() {
        out.extend((0..nx).map(|i| pixel(i, j)));
    }
    out
}

/// Binary PGM of a projected grid: free white, occupied black, unknown grey.
pub fn grid_pgm(grid: &ProjectedGrid2D) -> Vec<u8> {
    pgm(grid.nx, grid.ny, |i, j| match grid.cells[j * grid.nx + i] {
        CellState::Free => 255,
        CellState::Occupied => 0,
        CellState::Unknown => 128,
    })
}

/// Binary PGM of an ESDF, mapping [-d_max, d_max] linearly onto [0, 255].
pub fn esdf_pgm(esdf: &EsdfMap2D) -> Vec<u8> {
    let d = esdf.d_max.max(f64::MIN_POSITIVE);
    pgm(esdf.nx, esdf.ny, |i, j| {
        let v = (esdf.at(i, j) / d).clamp(-1.0, 1.0);
        (127.5 + 127.5 * v).round() as u8
    })
}

/// Text dump of an occupancy map: a header with origin, voxel size and
/// dims, then one occupancy probability per voxel in storage order (x
/// fastest, then y, then z), one x row per line.
pub fn occupancy_dump(map: &GlobalOccupancyMap) -> String {
    let (o, d) = (map.origin(), map.dims());
    let mut out = String::new();
    let _ = writeln!(out, "# navsim occupancy dump");
    let _ = writeln!(out, "origin {:?} {:?} {:?}", o.x, o.y, o.z);
    let _ = writeln!(out, "voxel_size {:?}", map.voxel_size());
    let _ = writeln!(out, "dims {} {} {}", d[0], d[1], d[2]);
    for row in map.log_odds_raw().chunks(d[0]) {
        let line: Vec<String> = row
            .iter()
            .map(|l| format!("{:.4}", 1.0 / (1.0 + (-l).exp())))
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// One digit per cell (`0` free, `1` occupied, `2` unknown), one grid row
/// per line, bottom row first.
pub fn grid_digits(grid: &ProjectedGrid2D) -> String {
    let mut out = String::with_capacity((grid.nx + 1) * grid.ny);
    for row in grid.cells.chunks(grid.nx) {
        out.extend(row.iter().map(|c| (b'0' + *c as u8) as char));
        out.push('\n');
    }
    out
}
