//! Map layers as streamed to clients: a keyframe with the full projected
//! grid and ESDF, then deltas made of per-tile dirty rectangles.

use serde::{Deserialize, Serialize};

use navsim_core::mapping::{EsdfMap2D, ProjectedGrid2D};

/// Deltas are computed per square tile of this many cells.
pub const TILE: usize = 16;

/// Server-side copy of the layers at one instant. `cells` holds one ASCII
/// digit per cell (`0` free, `1` occupied, `2` unknown), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MapLayers {
    /// Increases with every published snapshot; restarts after a reset.
    pub version: u64,
    /// Reset counter; a delta never crosses epochs.
    pub epoch: u64,
    pub t: f64,
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
    pub cells: Vec<u8>,
    pub esdf: Vec<f32>,
    pub d_max: f64,
}

impl MapLayers {
    /// Snapshot of a grid and its ESDF. Without an ESDF every cell reads
    /// `d_max`.
    pub fn capture(
        grid: &ProjectedGrid2D,
        esdf: Option<&EsdfMap2D>,
        d_max: f64,
        version: u64,
        epoch: u64,
        t: f64,
    ) -> Self {
        let n = grid.nx * grid.ny;
        let esdf = match esdf {
            Some(e) if e.nx == grid.nx && e.ny == grid.ny => {
                e.distance.iter().map(|d| *d as f32).collect()
            }
            _ => vec![d_max as f32; n],
        };
        Self {
            version,
            epoch,
            t,
            origin: [grid.origin.x, grid.origin.y],
            cell_size: grid.cell_size,
            nx: grid.nx,
            ny: grid.ny,
            cells: grid.cells.iter().map(|c| b'0' + *c as u8).collect(),
            esdf,
            d_max,
        }
    }

    pub fn keyframe(&self) -> MapKeyframe {
        MapKeyframe {
            version: self.version,
            epoch: self.epoch,
            origin: self.origin,
            cell_size: self.cell_size,
            nx: self.nx,
            ny: self.ny,
            d_max: self.d_max,
            cells: String::from_utf8(self.cells.clone()).expect("cells are ascii digits"),
            esdf: self.esdf.clone(),
        }
    }

    pub fn same_layout(&self, other: &MapLayers) -> bool {
        self.epoch == other.epoch
            && self.nx == other.nx
            && self.ny == other.ny
            && self.origin == other.origin
            && self.cell_size == other.cell_size
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapKeyframe {
    pub version: u64,
    pub epoch: u64,
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
    pub d_max: f64,
    pub cells: String,
    pub esdf: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRect {
    pub i: usize,
    pub j: usize,
    pub w: usize,
    pub h: usize,
    /// Row-major digits of the rectangle.
    pub cells: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EsdfRect {
    pub i: usize,
    pub j: usize,
    pub w: usize,
    pub h: usize,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapDelta {
    /// Version the delta applies on top of.
    pub base: u64,
    pub version: u64,
    pub epoch: u64,
    pub grid: Vec<GridRect>,
    pub esdf: Vec<EsdfRect>,
}

impl MapDelta {
    pub fn is_empty(&self) -> bool {
        self.grid.is_empty() && self.esdf.is_empty()
    }
}

/// Bounding rectangles of changed cells, one per tile with changes.
fn dirty_rects(
    nx: usize,
    ny: usize,
    changed: impl Fn(usize) -> bool,
) -> Vec<(usize, usize, usize, usize)> {
    let mut rects = Vec::new();
    for tj in (0..ny).step_by(TILE) {
        for ti in (0..nx).step_by(TILE) {
            let (mut i0, mut j0, mut i1, mut j1) = (usize::MAX, usize::MAX, 0, 0);
            for j in tj..(tj + TILE).min(ny) {
                for i in ti..(ti + TILE).min(nx) {
                    if changed(j * nx + i) {
                        i0 = i0.min(i);
                        j0 = j0.min(j);
                        i1 = i1.max(i);
                        j1 = j1.max(j);
                    }
                }
            }
            if i0 != usize::MAX {
                rects.push((i0, j0, i1 - i0 + 1, j1 - j0 + 1));
            }
        }
    }
    rects
}

fn cut<T: Copy>(data: &[T], nx: usize, (i, j, w, h): (usize, usize, usize, usize)) -> Vec<T> {
    (j..j + h)
        .flat_map(|r| data[r * nx + i..r * nx + i + w].iter().copied())
        .collect()
}

/// Delta from `old` to `new`. Both must share a layout.
pub fn diff(old: &MapLayers, new: &MapLayers) -> MapDelta {
    assert!(old.same_layout(new), "layers of different layout");
    let (nx, ny) = (new.nx, new.ny);
    let grid = dirty_rects(nx, ny, |k| old.cells[k] != new.cells[k])
        .into_iter()
        .map(|r| GridRect {
            i: r.0,
            j: r.1,
            w: r.2,
            h: r.3,
            cells: String::from_utf8(cut(&new.cells, nx, r)).expect("ascii digits"),
        })
        .collect();
    let esdf = dirty_rects(nx, ny, |k| old.esdf[k].to_bits() != new.esdf[k].to_bits())
        .into_iter()
        .map(|r| EsdfRect {
            i: r.0,
            j: r.1,
            w: r.2,
            h: r.3,
            values: cut(&new.esdf, nx, r),
        })
        .collect();
    MapDelta {
        base: old.version,
        version: new.version,
        epoch: new.epoch,
        grid,
        esdf,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeltaError {
    #[error("delta for version {base} (epoch {epoch}) does not apply to version {have} (epoch {have_epoch})")]
    OutOfSequence {
        base: u64,
        epoch: u64,
        have: u64,
        have_epoch: u64,
    },
    #[error("rectangle outside the grid or of the wrong size")]
    BadRect,
}

impl MapKeyframe {
    /// Applies a delta in place, the way a client reassembles the layers.
    pub fn apply(&mut self, delta: &MapDelta) -> Result<(), DeltaError> {
        if delta.base != self.version || delta.epoch != self.epoch {
            return Err(DeltaError::OutOfSequence {
                base: delta.base,
                epoch: delta.epoch,
                have: self.version,
                have_epoch: self.epoch,
            });
        }
        let nx = self.nx;
        let fits = |i: usize, j: usize, w: usize, h: usize, len: usize| {
            i + w <= nx && j + h <= self.ny && w * h == len
        };
        let digits = |s: &str| s.bytes().all(|b| (b'0'..=b'2').contains(&b));
        if !delta
            .grid
            .iter()
            .all(|r| fits(r.i, r.j, r.w, r.h, r.cells.len()) && digits(&r.cells))
            || !delta
                .esdf
                .iter()
                .all(|r| fits(r.i, r.j, r.w, r.h, r.values.len()))
        {
            return Err(DeltaError::BadRect);
        }
        let mut cells = std::mem::take(&mut self.cells).into_bytes();
        for r in &delta.grid {
            for (row, chunk) in r.cells.as_bytes().chunks(r.w).enumerate() {
                let at = (r.j + row) * nx + r.i;
                cells[at..at + r.w].copy_from_slice(chunk);
            }
        }
        self.cells = String::from_utf8(cells).expect("digits checked above");
        for r in &delta.esdf {
            for (row, chunk) in r.values.chunks(r.w).enumerate() {
                let at = (r.j + row) * nx + r.i;
                self.esdf[at..at + r.w].copy_from_slice(chunk);
            }
        }
        self.version = delta.version;
        Ok(())
    }
}
