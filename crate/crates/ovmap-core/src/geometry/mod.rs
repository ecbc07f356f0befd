//! Geometric substrate: sparse voxel sets, depth-to-point projection,
//! density-based denoising, normal estimation and the AABB/BVH broad phase.

mod bvh;
mod cloud;
mod dbscan;
mod voxel;

pub use bvh::{bvh_build, bvh_query, Aabb, Bvh};
pub use cloud::{estimate_normals, project_depth, PointCloud};
pub use dbscan::{dbscan_filter, dbscan_labels};
pub use voxel::{voxel_overlap, voxelize, OverlapStats, VoxelKey, VoxelSet};
