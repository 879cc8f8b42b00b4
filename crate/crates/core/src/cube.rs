//! Axis-aligned cubes of `n x n x n` voxels centred on a point.

use crate::cloud::{Point3, PointCloud, Vector3};

#[derive(Debug, Clone)]
pub struct Cube {
    pub center: Point3,
    pub n: u32,
    pub voxel_edge: f64,
    /// Indices of the resident points in the parent cloud, ascending.
    pub indices: Vec<usize>,
    pub points: Vec<Point3>,
}

impl Cube {
    pub fn edge(&self) -> f64 {
        self.n as f64 * self.voxel_edge
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Half-open box `[min, max)` covered by the cube.
    pub fn bounds(&self) -> (Point3, Point3) {
        cube_bounds(&self.center, self.n, self.voxel_edge)
    }

    pub fn contains(&self, p: &Point3) -> bool {
        let (min, max) = self.bounds();
        crate::kdtree::in_half_open_box(p, &min, &max)
    }

    /// Resident points relative to the cube center.
    pub fn local_points(&self) -> Vec<Vector3> {
        self.points.iter().map(|p| p - self.center).collect()
    }
}

pub fn cube_bounds(center: &Point3, n: u32, voxel_edge: f64) -> (Point3, Point3) {
    let half = Vector3::repeat(n as f64 * voxel_edge / 2.0);
    (center - half, center + half)
}

/// Points of `cloud` inside the half-open cube `[center - h, center + h)`,
/// `h = n * voxel_edge / 2`.
pub fn extract_cube(cloud: &PointCloud, center: Point3, n: u32, voxel_edge: f64) -> Cube {
    let (min, max) = cube_bounds(&center, n, voxel_edge);
    let indices = cloud.index().within_box(&min, &max);
    let points = indices.iter().map(|&i| cloud.points()[i]).collect();
    Cube {
        center,
        n,
        voxel_edge,
        indices,
        points,
    }
}

/// Number of points of `cloud` in the cube without materialising it.
pub fn count_in_cube(cloud: &PointCloud, center: &Point3, n: u32, voxel_edge: f64) -> usize {
    let (min, max) = cube_bounds(center, n, voxel_edge);
    cloud.index().count_in_box(&min, &max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_resident() {
        let c = Point3::new(0.3, -1.0, 2.0);
        let cloud = PointCloud::new(vec![c]).unwrap();
        for n in 1..6 {
            assert_eq!(extract_cube(&cloud, c, n, 0.1).indices, vec![0]);
        }
    }

    #[test]
    fn boundary_is_half_open() {
        let cloud = PointCloud::new(vec![
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
            Point3::new(0.0, 0.99, 0.0),
        ])
        .unwrap();
        let cube = extract_cube(&cloud, Point3::origin(), 4, 0.5);
        // +x face excluded, -x face included.
        assert_eq!(cube.indices, vec![1, 2]);
        assert_eq!(count_in_cube(&cloud, &Point3::origin(), 4, 0.5), 2);
    }
}
