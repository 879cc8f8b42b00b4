//! Exemplar-based hole filling for 3D point clouds.
//!
//! Missing geometry is synthesised by repeatedly picking the highest-priority
//! cube on the hole boundary, finding the best rotated match elsewhere in the
//! cloud, optionally refining it with per-point linear maps, and copying the
//! unmatched points of the match into the hole.

pub mod bench;
pub mod cloud;
pub mod cube;
pub mod error;
pub mod frontier;
pub mod hausdorff;
pub mod holes;
pub mod io;
pub mod kdtree;
pub mod matcher;
pub mod metrics;
pub mod nrt;
pub mod synth;
pub mod transfer;
pub mod voxel;

pub use bench::{run_bench, BenchPlan, BenchReport, CloudSource};
pub use cloud::{Aabb, Point3, PointCloud, Vector3};
pub use cube::{extract_cube, Cube};
pub use error::{Error, Result};
pub use frontier::HoleRegion;
pub use hausdorff::ohd;
pub use holes::{punch_hole, random_hole, HoleSpec};
pub use io::{read_cloud, write_cloud};
pub use metrics::{nshd, nshd_local, EvalPair};
pub use synth::Shape;
pub use transfer::{fill_hole, FillConfig, FillOutcome, FillReport, Termination, Variant};
pub use voxel::{calibrate_voxel_size, Voxel, VoxelGrid, VoxelLabel};
