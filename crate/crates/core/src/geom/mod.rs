//! Pose algebra, cuboid models and the geometric predicates and metrics the
//! rest of the crate is built on.
//!
//! Everything here is a pure function over immutable values.

mod distance;
mod model;
mod pose;
mod shapes;
mod voxel;

pub use distance::{max_bipartite_matching, pose_distance_symmetric, satisfies_goal, Arrangement};
pub use model::{expand_model, CuboidModel, SurfaceSample, DIM_EQUALITY_TOL, SAMPLE_PITCH};
pub use pose::{axis_rotation, project_to_support_plane, wrap_angle, yaw_rotation, Face, Pose};
pub use shapes::{footprint_pivots, Aabb, ConvexPolygon, Footprint, Obb, Pivot};
pub use voxel::{voxel_unoccupied_fraction, VoxelGrid};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("cuboid dimensions must be positive, got ({0}, {1}, {2})")]
    NonPositiveDims(f64, f64, f64),
    #[error("model expansion must be non-negative, got {0}")]
    NegativeExpansion(f64),
    #[error("voxel resolution must be positive, got {0}")]
    NonPositiveResolution(f64),
    #[error("polygon is degenerate")]
    DegeneratePolygon,
    #[error("polygon is not convex")]
    NonConvexPolygon,
}
