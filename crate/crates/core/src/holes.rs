//! Artificial holes: punching boxes out of a cloud and describing hole regions.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{Aabb, Point3};
use crate::error::{Error, Result};
use crate::frontier::HoleRegion;
use crate::voxel::{Voxel, VoxelGrid};

/// A hole given either as an axis-aligned box or as explicit voxel indices on
/// the grid anchored at the cloud's bounding-box minimum.
///
/// JSON: `{"box":{"min":[x,y,z],"max":[x,y,z]}}` or `{"voxels":[[i,j,k],...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HoleSpec {
    Box { min: [f64; 3], max: [f64; 3] },
    Voxels(Vec<[i64; 3]>),
}

impl HoleSpec {
    pub fn from_aabb(b: &Aabb) -> Self {
        HoleSpec::Box {
            min: [b.min.x, b.min.y, b.min.z],
            max: [b.max.x, b.max.y, b.max.z],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HoleSpec::Box { min, max } => {
                if min.iter().chain(max).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("hole box has non-finite corners".into()));
                }
                if (0..3).any(|a| min[a] >= max[a]) {
                    return Err(Error::InvalidArgument("hole box needs min < max on every axis".into()));
                }
                Ok(())
            }
            HoleSpec::Voxels(v) if v.is_empty() => Err(Error::InvalidArgument("hole voxel list is empty".into())),
            HoleSpec::Voxels(_) => Ok(()),
        }
    }

    /// The hole as a region on `grid`. Boxes are clipped to `clip` first.
    pub fn region(&self, grid: &VoxelGrid, clip: &Aabb) -> Result<HoleRegion> {
        self.validate()?;
        match self {
            HoleSpec::Box { min, max } => {
                let b = Aabb {
                    min: Point3::from(*min),
                    max: Point3::from(*max),
                };
                HoleRegion::from_box(grid, clip_box(&b, clip)?)
            }
            HoleSpec::Voxels(v) => Ok(HoleRegion::from_voxels(grid, v.iter().map(|ijk| Voxel(*ijk)).collect())),
        }
    }
}

fn clip_box(b: &Aabb, clip: &Aabb) -> Result<Aabb> {
    let out = Aabb {
        min: b.min.sup(&clip.min),
        max: b.max.inf(&clip.max),
    };
    if (0..3).any(|a| out.min[a] >= out.max[a]) {
        return Err(Error::EmptyHole);
    }
    Ok(out)
}

/// Points inside (closed) `hole` removed; returns `(kept, removed)`.
pub fn punch_hole(points: &[Point3], hole: &Aabb) -> (Vec<Point3>, Vec<Point3>) {
    let (removed, kept): (Vec<Point3>, Vec<Point3>) = points.iter().partition(|p| hole.contains(p));
    if removed.is_empty() {
        warn!("hole box removed no points");
    }
    (kept, removed)
}

/// A random box whose extent on each axis is `fraction` of the cloud's range,
/// scaled by a factor drawn from [0.8, 1.2], placed uniformly inside `bbox`.
pub fn random_hole<R: Rng + ?Sized>(bbox: &Aabb, fraction: f64, rng: &mut R) -> Aabb {
    let range = bbox.extent();
    let mut min = Point3::origin();
    let mut max = Point3::origin();
    for a in 0..3 {
        let size = (fraction * rng.random_range(0.8..=1.2) * range[a]).min(range[a]);
        let lo = bbox.min[a] + rng.random::<f64>() * (range[a] - size);
        min[a] = lo;
        max[a] = lo + size;
    }
    Aabb { min, max }
}

/// Draws boxes until one removes at least `min_removed` points.
pub fn random_hole_removing<R: Rng + ?Sized>(
    points: &[Point3],
    bbox: &Aabb,
    fraction: f64,
    min_removed: usize,
    attempts: usize,
    rng: &mut R,
) -> Result<Aabb> {
    for _ in 0..attempts {
        let b = random_hole(bbox, fraction, rng);
        if points.iter().filter(|p| b.contains(p)).count() >= min_removed.max(1) {
            return Ok(b);
        }
    }
    Err(Error::EmptyHole)
}

/// Region filled for a punched box: the box clipped to the original bounds
/// grown by one voxel.
pub fn box_region(grid: &VoxelGrid, hole: &Aabb, original: &Aabb) -> Result<HoleRegion> {
    let clip = original.dilated(grid.voxel_edge());
    HoleRegion::from_box(grid, clip_box(hole, &clip)?)
}

/// Box grown by `k` voxel edges, used for hole-local scoring.
pub fn scoring_region(hole: &Aabb, voxel_edge: f64, k: f64) -> Aabb {
    hole.dilated(k * voxel_edge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::PointCloud;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid_points(n: usize) -> Vec<Point3> {
        let mut v = Vec::new();
        for i in 0..n {
            for j in 0..n {
                v.push(Point3::new(i as f64, j as f64, 0.1 * ((i * 7 + j * 3) % 5) as f64));
            }
        }
        v
    }

    #[test]
    fn spec_json_forms() {
        let b: HoleSpec = serde_json::from_str(r#"{"box":{"min":[0,0,0],"max":[1,2,3]}}"#).unwrap();
        assert_eq!(b, HoleSpec::Box { min: [0.0; 3], max: [1.0, 2.0, 3.0] });
        let v: HoleSpec = serde_json::from_str(r#"{"voxels":[[1,2,3],[4,5,6]]}"#).unwrap();
        assert_eq!(v, HoleSpec::Voxels(vec![[1, 2, 3], [4, 5, 6]]));
        let bad: HoleSpec = serde_json::from_str(r#"{"box":{"min":[1,0,0],"max":[1,2,3]}}"#).unwrap();
        assert!(bad.validate().is_err());
        assert!(serde_json::from_str::<HoleSpec>(r#"{"sphere":1}"#).is_err());
    }

    #[test]
    fn punch_partitions_inclusively() {
        let pts = grid_points(10);
        let hole = Aabb {
            min: Point3::new(2.0, 2.0, -1.0),
            max: Point3::new(4.0, 4.0, 1.0),
        };
        let (kept, removed) = punch_hole(&pts, &hole);
        assert_eq!(removed.len(), 9);
        assert_eq!(kept.len() + removed.len(), pts.len());
        assert!(kept.iter().all(|p| !hole.contains(p)));
    }

    #[test]
    fn random_holes_stay_inside_and_scale() {
        let bbox = Aabb {
            min: Point3::new(-1.0, 0.0, 2.0),
            max: Point3::new(3.0, 10.0, 2.5),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let h = random_hole(&bbox, 0.2, &mut rng);
            for a in 0..3 {
                let r = bbox.extent()[a];
                let size = h.max[a] - h.min[a];
                assert!(size >= 0.16 * r - 1e-12 && size <= 0.24 * r + 1e-12);
                assert!(h.min[a] >= bbox.min[a] && h.max[a] <= bbox.max[a] + 1e-12);
            }
        }
    }

    #[test]
    fn region_covers_emptied_voxels() {
        let pts = grid_points(12);
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let hole = Aabb {
            min: Point3::new(3.5, 3.5, -1.0),
            max: Point3::new(6.5, 6.5, 1.0),
        };
        let (kept, removed) = punch_hole(&pts, &hole);
        let punched = PointCloud::new(kept).unwrap();
        let grid = VoxelGrid::with_origin(&punched, cloud.bbox().min, 1.0).unwrap();
        let region = box_region(&grid, &hole, cloud.bbox()).unwrap();
        for p in &removed {
            assert!(region.voxels.contains(&grid.voxel_of(p)));
        }
        assert!(region.voxels.iter().all(|v| grid.points_in(*v) == 0));
    }
}
