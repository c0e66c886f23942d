//! Global occupancy voxels, projected 2-D grid, distance field and the
//! cylindrical local map.

mod esdf;
mod grid2d;
mod local;
mod occupancy;

pub use esdf::{
    compute_esdf, query_distance_gradient, squared_distance_transform, EsdfError, EsdfMap2D,
    UnknownPolicy,
};
pub use grid2d::{
    compare_to_footprint, footprint_grid, project_to_2d, CellState, MapFidelity, ProjectedGrid2D,
};
pub use local::{rebuild_local_map, CylCell, LocalCylindricalMap, LocalMapParams};
pub use occupancy::{GlobalOccupancyMap, OccupancyParams, VoxelIndex};
