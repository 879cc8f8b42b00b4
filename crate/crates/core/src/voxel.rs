//! Voxel-size calibration and the sparse voxel grid.
//!
//! The voxel edge is the smallest octree leaf obtained by subdividing the
//! cubic bounding box of a cloud until no leaf holds more than one point.

use std::collections::{HashMap, HashSet};

use crate::cloud::{find_duplicate, Point3, PointCloud};
use crate::error::{Error, Result};

pub const DEFAULT_DEPTH_CAP: u32 = 21;

/// Integer lattice coordinates of a voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Voxel(pub [i64; 3]);

impl Voxel {
    /// The 26 lattice neighbours.
    pub fn neighbors(self) -> impl Iterator<Item = Voxel> {
        let [i, j, k] = self.0;
        (-1..=1).flat_map(move |di| {
            (-1..=1).flat_map(move |dj| {
                (-1..=1).filter_map(move |dk| {
                    (di != 0 || dj != 0 || dk != 0).then_some(Voxel([i + di, j + dj, k + dk]))
                })
            })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoxelLabel {
    Source,
    Hole,
    Empty,
}

/// Octree voxel edge with the default depth cap.
pub fn calibrate_voxel_size(cloud: &PointCloud) -> Result<f64> {
    calibrate_voxel_size_with_cap(cloud.points(), DEFAULT_DEPTH_CAP)
}

pub fn calibrate_voxel_size_with_cap(points: &[Point3], depth_cap: u32) -> Result<f64> {
    let bbox = crate::cloud::Aabb::from_points(points)
        .ok_or_else(|| Error::DegenerateCloud("cloud has no points".into()))?;
    calibrate_in_cube(points, bbox.min, bbox.cube_edge(), depth_cap)
}

/// Calibration inside an explicit bounding cube `[origin, origin + edge]^3`.
pub fn calibrate_in_cube(points: &[Point3], origin: Point3, edge: f64, depth_cap: u32) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::DegenerateCloud(format!(
            "voxel calibration needs at least 2 points, got {}",
            points.len()
        )));
    }
    if let Some((first, second)) = find_duplicate(points) {
        return Err(Error::DuplicatePoints { first, second });
    }
    if !(edge > 0.0) {
        return Err(Error::InvalidArgument(format!("bounding cube edge must be positive, got {edge}")));
    }
    let indices: Vec<usize> = (0..points.len()).collect();
    let depth = split_depth(points, &indices, origin, edge, 0, depth_cap)?;
    Ok(edge / 2f64.powi(depth as i32))
}

/// Depth of the deepest leaf below a node at `depth`.
fn split_depth(
    points: &[Point3],
    indices: &[usize],
    origin: Point3,
    edge: f64,
    depth: u32,
    cap: u32,
) -> Result<u32> {
    if indices.len() <= 1 {
        return Ok(depth);
    }
    if depth >= cap {
        return Err(Error::DepthCapReached { cap });
    }
    let half = edge / 2.0;
    let mid = origin + nalgebra::Vector3::repeat(half);
    let mut children: [Vec<usize>; 8] = Default::default();
    for &i in indices {
        let p = &points[i];
        let octant = (p.x >= mid.x) as usize | ((p.y >= mid.y) as usize) << 1 | ((p.z >= mid.z) as usize) << 2;
        children[octant].push(i);
    }
    let mut deepest = depth + 1;
    for (octant, child) in children.iter().enumerate() {
        if child.len() <= 1 {
            continue;
        }
        let child_origin = Point3::new(
            if octant & 1 != 0 { mid.x } else { origin.x },
            if octant & 2 != 0 { mid.y } else { origin.y },
            if octant & 4 != 0 { mid.z } else { origin.z },
        );
        deepest = deepest.max(split_depth(points, child, child_origin, half, depth + 1, cap)?);
    }
    Ok(deepest)
}

/// Sparse voxel lattice over a cloud.
///
/// Voxels holding points are `Source`, voxels in the hole set are `Hole`,
/// everything else inside the tracked extent is `Empty`.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    origin: Point3,
    voxel_edge: f64,
    source: HashMap<Voxel, u32>,
    hole: HashSet<Voxel>,
    lo: [i64; 3],
    hi: [i64; 3],
}

impl VoxelGrid {
    /// Grid anchored at the cloud's bounding-box minimum.
    pub fn new(cloud: &PointCloud, voxel_edge: f64) -> Result<Self> {
        Self::with_origin(cloud, cloud.bbox().min, voxel_edge)
    }

    pub fn with_origin(cloud: &PointCloud, origin: Point3, voxel_edge: f64) -> Result<Self> {
        if !(voxel_edge > 0.0 && voxel_edge.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "voxel edge must be positive, got {voxel_edge}"
            )));
        }
        let mut grid = VoxelGrid {
            origin,
            voxel_edge,
            source: HashMap::new(),
            hole: HashSet::new(),
            lo: [i64::MAX; 3],
            hi: [i64::MIN; 3],
        };
        for p in cloud.points() {
            grid.add_point(p);
        }
        Ok(grid)
    }

    pub fn origin(&self) -> Point3 {
        self.origin
    }

    pub fn voxel_edge(&self) -> f64 {
        self.voxel_edge
    }

    pub fn voxel_of(&self, p: &Point3) -> Voxel {
        let r = (p - self.origin) / self.voxel_edge;
        Voxel([r.x.floor() as i64, r.y.floor() as i64, r.z.floor() as i64])
    }

    /// Minimum corner of a voxel.
    pub fn voxel_min(&self, v: Voxel) -> Point3 {
        self.origin + nalgebra::Vector3::new(v.0[0] as f64, v.0[1] as f64, v.0[2] as f64) * self.voxel_edge
    }

    pub fn voxel_center(&self, v: Voxel) -> Point3 {
        self.voxel_min(v) + nalgebra::Vector3::repeat(self.voxel_edge / 2.0)
    }

    fn grow(&mut self, v: Voxel) {
        for a in 0..3 {
            self.lo[a] = self.lo[a].min(v.0[a]);
            self.hi[a] = self.hi[a].max(v.0[a]);
        }
    }

    /// Marks the voxel holding `p` as `Source`. Returns true if it was `Hole`.
    pub fn add_point(&mut self, p: &Point3) -> bool {
        let v = self.voxel_of(p);
        self.grow(v);
        *self.source.entry(v).or_insert(0) += 1;
        self.hole.remove(&v)
    }

    /// Marks `v` as `Hole`. Voxels holding points are left untouched.
    pub fn mark_hole(&mut self, v: Voxel) -> bool {
        if self.source.contains_key(&v) {
            return false;
        }
        self.grow(v);
        self.hole.insert(v)
    }

    /// Relabels a hole voxel as empty. Returns true if it was a hole voxel.
    pub fn clear_hole(&mut self, v: Voxel) -> bool {
        self.hole.remove(&v)
    }

    pub fn label(&self, v: Voxel) -> VoxelLabel {
        if self.source.contains_key(&v) {
            VoxelLabel::Source
        } else if self.hole.contains(&v) {
            VoxelLabel::Hole
        } else {
            VoxelLabel::Empty
        }
    }

    pub fn hole_voxels(&self) -> &HashSet<Voxel> {
        &self.hole
    }

    pub fn hole_count(&self) -> usize {
        self.hole.len()
    }

    pub fn source_count(&self) -> usize {
        self.source.len()
    }

    pub fn points_in(&self, v: Voxel) -> u32 {
        self.source.get(&v).copied().unwrap_or(0)
    }

    /// Inclusive lattice extent of every voxel seen so far, as (lo, hi).
    pub fn extent(&self) -> ([i64; 3], [i64; 3]) {
        (self.lo, self.hi)
    }

    /// Number of voxels per axis inside the tracked extent.
    pub fn dims(&self) -> [u64; 3] {
        let mut d = [0; 3];
        for a in 0..3 {
            d[a] = if self.hi[a] >= self.lo[a] {
                (self.hi[a] - self.lo[a] + 1) as u64
            } else {
                0
            };
        }
        d
    }

    pub fn total_voxels(&self) -> u64 {
        self.dims().iter().product()
    }

    pub fn empty_count(&self) -> u64 {
        self.total_voxels() - self.source.len() as u64 - self.hole.len() as u64
    }

    /// Inclusive range of voxels overlapped by the half-open box `[min, max)`.
    pub fn voxel_range(&self, min: &Point3, max: &Point3) -> (Voxel, Voxel) {
        let lo = self.voxel_of(min);
        let mut hi = self.voxel_of(max);
        // A box ending exactly on a voxel face does not reach into the next voxel.
        for a in 0..3 {
            if self.voxel_min(hi)[a] >= max[a] && hi.0[a] > lo.0[a] {
                hi.0[a] -= 1;
            }
        }
        (lo, hi)
    }

    /// True if any hole voxel lies in the inclusive voxel range.
    pub fn any_hole_in(&self, lo: Voxel, hi: Voxel) -> bool {
        let volume: i64 = (0..3).map(|a| (hi.0[a] - lo.0[a] + 1).max(0)).product();
        if volume as usize > self.hole.len() {
            self.hole
                .iter()
                .any(|v| (0..3).all(|a| v.0[a] >= lo.0[a] && v.0[a] <= hi.0[a]))
        } else {
            voxels_in(lo, hi).any(|v| self.hole.contains(&v))
        }
    }

    /// Hole voxels in the inclusive voxel range.
    pub fn holes_in(&self, lo: Voxel, hi: Voxel) -> Vec<Voxel> {
        let mut out: Vec<Voxel> = self
            .hole
            .iter()
            .filter(|v| (0..3).all(|a| v.0[a] >= lo.0[a] && v.0[a] <= hi.0[a]))
            .copied()
            .collect();
        out.sort_unstable();
        out
    }
}

/// Iterates the inclusive voxel range in lexicographic order.
pub fn voxels_in(lo: Voxel, hi: Voxel) -> impl Iterator<Item = Voxel> {
    (lo.0[0]..=hi.0[0]).flat_map(move |i| {
        (lo.0[1]..=hi.0[1]).flat_map(move |j| (lo.0[2]..=hi.0[2]).map(move |k| Voxel([i, j, k])))
    })
}
