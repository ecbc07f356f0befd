//! Incremental open-vocabulary 3D instance mapping at desk scale.
//!
//! The crate builds an object-centric voxel map from RGB-D frames with
//! precomputed dense features: segments are projected, denoised and
//! voxelized, associated against the map by exact voxel overlap behind a
//! BVH broad phase, and carry quality-gated semantic embeddings that can be
//! queried with arbitrary embedding vectors. Around that core live the
//! evaluation protocol (dense transfer, Hungarian matching, retrieval
//! metrics), an occupancy-grid trajectory generator with ray-traced coverage
//! analysis, and a deterministic synthetic scene benchmark.

pub mod config;
pub mod error;
pub mod frame;
pub mod geometry;
pub mod ingest;
pub mod instance_map;
pub mod pipeline;
pub mod retrieval;
pub mod semantics;
pub mod synthbench;
pub mod tensor_io;
pub mod trajgen;

// pub use config::RunConfig;
pub use error::{Error, Result};
pub use frame::{DepthImage, DepthRange, FrameRecord, Intrinsics, Pose, SegmentMask};
pub use geometry::{Aabb, PointCloud, VoxelKey, VoxelSet};
// pub use instance_map::{AssociationConfig, Detection, Instance, InstanceMap};
pub use semantics::{PatchFeatureGrid, QualityBreakdown, SemanticFeature};
