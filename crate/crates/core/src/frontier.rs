//! Hole region, fill front and fill priorities.
//!
//! Priority of a front point is `P(p) = D(p) * C(p)`: `C` counts the points in
//! the cube around `p`, `D` scores how far the local structure is from a flat
//! sheet, so fronts on ridges and valleys are extended first.

use std::collections::{HashMap, HashSet};

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::cloud::{Aabb, Point3, PointCloud, Vector3};
use crate::cube::{count_in_cube, cube_bounds, extract_cube};
use crate::error::{Error, Result};
use crate::voxel::{Voxel, VoxelGrid};

/// Lower bound of the data term, so flat regions keep a nonzero priority.
pub const DEFAULT_DATA_FLOOR: f64 = 0.05;

/// Surface variation of an isotropic point distribution.
const ISOTROPIC_VARIATION: f64 = 1.0 / 3.0;

/// Refuse to enumerate absurdly large hole boxes.
const MAX_HOLE_VOXELS: u64 = 50_000_000;

/// The voxels making up a hole, and the box that produced them if any.
///
/// Voxel indices refer to the lattice given by `origin` and `voxel_edge`.
#[derive(Debug, Clone)]
pub struct HoleRegion {
    pub origin: Point3,
    pub voxel_edge: f64,
    pub voxels: Vec<Voxel>,
    pub generator: Option<Aabb>,
}

impl HoleRegion {
    /// Every voxel overlapping the half-open box `[min, max)` that holds no point.
    pub fn from_box(grid: &VoxelGrid, bbox: Aabb) -> Result<Self> {
        if (0..3).any(|a| bbox.min[a] >= bbox.max[a]) {
            return Err(Error::InvalidArgument("hole box needs min < max on every axis".into()));
        }
        let (lo, hi) = grid.voxel_range(&bbox.min, &bbox.max);
        let count: u64 = (0..3).map(|a| (hi.0[a] - lo.0[a] + 1) as u64).product();
        if count > MAX_HOLE_VOXELS {
            return Err(Error::InvalidArgument(format!(
                "hole box spans {count} voxels (limit {MAX_HOLE_VOXELS})"
            )));
        }
        let voxels = crate::voxel::voxels_in(lo, hi)
            .filter(|v| grid.points_in(*v) == 0)
            .collect();
        Ok(HoleRegion {
            origin: grid.origin(),
            voxel_edge: grid.voxel_edge(),
            voxels,
            generator: Some(bbox),
        })
    }

    pub fn from_voxels(grid: &VoxelGrid, mut voxels: Vec<Voxel>) -> Self {
        voxels.sort_unstable();
        voxels.dedup();
        HoleRegion {
            origin: grid.origin(),
            voxel_edge: grid.voxel_edge(),
            voxels,
            generator: None,
        }
    }

    /// Labels the region in `grid`; voxels already holding points are skipped.
    /// Returns the number of voxels newly labelled as hole.
    pub fn apply(&self, grid: &mut VoxelGrid) -> usize {
        self.voxels.iter().filter(|v| grid.mark_hole(**v)).count()
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }
}

/// Source points bordering the hole, with their priorities once computed.
#[derive(Debug, Clone, Default)]
pub struct FillFront {
    /// Cloud indices, ascending.
    pub points: Vec<usize>,
    pub priorities: Vec<f64>,
}

impl FillFront {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Position in `points` of the highest priority, lowest index on ties.
    pub fn argmax(&self) -> Option<usize> {
        argmax_where(&self.priorities, |_| true)
    }

    /// Like [`argmax`](Self::argmax) but skipping masked cloud indices.
    pub fn argmax_unmasked(&self, masked: &HashSet<usize>) -> Option<usize> {
        argmax_where(&self.priorities, |slot| !masked.contains(&self.points[slot]))
    }
}

fn argmax_where(values: &[f64], keep: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (slot, v) in values.iter().enumerate() {
        if !keep(slot) {
            continue;
        }
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(slot);
        }
    }
    best
}

/// Cloud points whose voxel is 26-adjacent to at least one hole voxel.
pub fn compute_fill_front(grid: &VoxelGrid, cloud: &PointCloud) -> FillFront {
    let mut border: HashSet<Voxel> = HashSet::new();
    for h in grid.hole_voxels() {
        for v in h.neighbors() {
            if grid.points_in(v) > 0 {
                border.insert(v);
            }
        }
    }
    let points = if border.is_empty() {
        Vec::new()
    } else {
        cloud
            .points()
            .iter()
            .enumerate()
            .filter(|(_, p)| border.contains(&grid.voxel_of(p)))
            .map(|(i, _)| i)
            .collect()
    };
    FillFront {
        points,
        priorities: Vec::new(),
    }
}

/// `C(p)`: number of cloud points in the `n`-voxel cube around `p`.
pub fn confidence(cloud: &PointCloud, p: &Point3, n: u32, voxel_edge: f64) -> usize {
    count_in_cube(cloud, p, n, voxel_edge)
}

/// Value of the data term; `flagged` is set when too few points were
/// available and the floor was returned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataTerm {
    pub value: f64,
    pub flagged: bool,
}

/// Smallest-eigenvalue share of the covariance of `points`.
pub fn surface_variation(points: &[Point3]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints { found: points.len() });
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov).eigenvalues;
    let total = eig.sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    Ok(eig.min().max(0.0) / total)
}

/// Data term rescaled to `[floor, 1]`.
pub fn data_term(cloud: &PointCloud, p: &Point3, n: u32, voxel_edge: f64, floor: f64) -> DataTerm {
    let cube = extract_cube(cloud, *p, n, voxel_edge);
    data_term_of(&cube.points, floor)
}

pub fn data_term_of(points: &[Point3], floor: f64) -> DataTerm {
    match surface_variation(points) {
        Ok(sigma) => DataTerm {
            value: floor + (1.0 - floor) * (sigma / ISOTROPIC_VARIATION).min(1.0),
            flagged: false,
        },
        Err(_) => DataTerm {
            value: floor,
            flagged: true,
        },
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PriorityParams {
    /// Cube size (voxels) for confidence and data term.
    pub n: u32,
    pub voxel_edge: f64,
    pub data_floor: f64,
}

fn priority_of(cloud: &PointCloud, p: &Point3, params: &PriorityParams) -> f64 {
    let cube = extract_cube(cloud, *p, params.n, params.voxel_edge);
    let d = data_term_of(&cube.points, params.data_floor).value;
    d * cube.len() as f64
}

/// Fills `front.priorities` with `D(p) * C(p)` for every front point.
pub fn priorities(front: &mut FillFront, cloud: &PointCloud, params: &PriorityParams) {
    front.priorities = front
        .points
        .par_iter()
        .map(|&i| priority_of(cloud, &cloud.points()[i], params))
        .collect();
}

/// Memoised priorities that are recomputed only where the cloud changed.
#[derive(Debug, Clone)]
pub struct PriorityCache {
    params: PriorityParams,
    values: HashMap<usize, f64>,
}

impl PriorityCache {
    pub fn new(params: PriorityParams) -> Self {
        PriorityCache {
            params,
            values: HashMap::new(),
        }
    }

    /// Drops cached values whose cube may contain any of `added`.
    pub fn invalidate(&mut self, cloud: &PointCloud, added: &[Point3]) {
        let Some(region) = Aabb::from_points(added) else {
            return;
        };
        let (lo, hi) = cube_bounds(&Point3::origin(), self.params.n, self.params.voxel_edge);
        // Cube around p is [p + lo, p + hi); it can hold an added point only
        // if p lies in (region.min - hi, region.max - lo].
        let min = region.min - hi.coords;
        let max = region.max - lo.coords;
        let pts = cloud.points();
        self.values.retain(|&i, _| {
            let p = &pts[i];
            !(0..3).all(|a| p[a] > min[a] && p[a] <= max[a])
        });
    }

    /// Populates `front.priorities`, reusing cached values.
    pub fn fill(&mut self, front: &mut FillFront, cloud: &PointCloud) {
        let missing: Vec<usize> = front
            .points
            .iter()
            .copied()
            .filter(|i| !self.values.contains_key(i))
            .collect();
        let params = self.params;
        let fresh: Vec<f64> = missing
            .par_iter()
            .map(|&i| priority_of(cloud, &cloud.points()[i], &params))
            .collect();
        self.values.extend(missing.into_iter().zip(fresh));
        front.priorities = front.points.iter().map(|i| self.values[i]).collect();
    }
}
