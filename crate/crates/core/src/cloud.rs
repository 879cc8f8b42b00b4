//! Point and cloud types.

use log::warn;

use crate::error::{Error, Result};
use crate::kdtree::{KdTree, Neighbor};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;

/// Axis-aligned bounding box with inclusive corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn from_points(points: &[Point3]) -> Option<Self> {
        let first = points.first()?;
        let mut min = *first;
        let mut max = *first;
        for p in &points[1..] {
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        Some(Aabb { min, max })
    }

    pub fn extent(&self) -> Vector3 {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// Edge of the smallest cube sharing `min` that encloses the box.
    pub fn cube_edge(&self) -> f64 {
        self.extent().max()
    }

    pub fn dilated(&self, margin: f64) -> Aabb {
        let m = Vector3::repeat(margin);
        Aabb {
            min: self.min - m,
            max: self.max + m,
        }
    }
}

/// An immutable set of 3D points with its bounding box and a spatial index.
#[derive(Debug, Clone)]
pub struct PointCloud {
    bbox: Aabb,
    index: KdTree,
}

impl PointCloud {
    /// Builds a cloud, rejecting non-finite coordinates and exact duplicates.
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        check_finite(&points)?;
        if let Some((first, second)) = find_duplicate(&points) {
            return Err(Error::DuplicatePoints { first, second });
        }
        Self::from_checked(points)
    }

    /// Builds a cloud, dropping exact duplicates (first occurrence wins).
    /// Returns the cloud and the number of points dropped.
    pub fn new_dedup(points: Vec<Point3>) -> Result<(Self, usize)> {
        check_finite(&points)?;
        let (points, dropped) = dedup(points);
        if dropped > 0 {
            warn!("dropped {dropped} duplicate points");
        }
        Ok((Self::from_checked(points)?, dropped))
    }

    fn from_checked(points: Vec<Point3>) -> Result<Self> {
        let bbox = Aabb::from_points(&points)
            .ok_or_else(|| Error::DegenerateCloud("cloud has no points".into()))?;
        Ok(PointCloud {
            bbox,
            index: KdTree::new(&points),
        })
    }

    pub fn points(&self) -> &[Point3] {
        self.index.points()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn bbox(&self) -> &Aabb {
        &self.bbox
    }

    pub fn index(&self) -> &KdTree {
        &self.index
    }

    /// A new cloud with `extra` appended after the existing points.
    pub fn extended(&self, extra: &[Point3]) -> Result<Self> {
        check_finite(extra)?;
        let mut points = self.points().to_vec();
        points.extend_from_slice(extra);
        Self::from_checked(points)
    }

    /// The `k` nearest points to `query`, ordered by distance then index.
    pub fn knn(&self, query: &Point3, k: usize) -> Result<Vec<Neighbor>> {
        if k > self.len() {
            return Err(Error::InsufficientPoints {
                requested: k,
                available: self.len(),
            });
        }
        Ok(self.index.knn(query, k))
    }

    pub fn nearest(&self, query: &Point3) -> Neighbor {
        // A cloud always holds at least one point.
        self.index.nearest(query).expect("non-empty cloud")
    }
}

fn check_finite(points: &[Point3]) -> Result<()> {
    match points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

fn sorted_order(points: &[Point3]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (p, q) = (&points[a], &points[b]);
        p.x.total_cmp(&q.x)
            .then(p.y.total_cmp(&q.y))
            .then(p.z.total_cmp(&q.z))
            .then(a.cmp(&b))
    });
    order
}

/// First pair of exactly coincident points, by sorted order.
pub(crate) fn find_duplicate(points: &[Point3]) -> Option<(usize, usize)> {
    let order = sorted_order(points);
    order
        .windows(2)
        .find(|w| points[w[0]] == points[w[1]])
        .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
}

fn dedup(points: Vec<Point3>) -> (Vec<Point3>, usize) {
    let order = sorted_order(&points);
    let mut keep = vec![true; points.len()];
    for w in order.windows(2) {
        if points[w[0]] == points[w[1]] {
            // sorted_order puts the lower index first within a run
            keep[w[1]] = false;
        }
    }
    let before = points.len();
    let kept: Vec<Point3> = points
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_nan() {
        let p = Point3::new(1.0, 2.0, 3.0);
        assert!(matches!(
            PointCloud::new(vec![p, Point3::origin(), p]),
            Err(Error::DuplicatePoints { first: 0, second: 2 })
        ));
        assert!(matches!(
            PointCloud::new(vec![p, Point3::new(f64::NAN, 0.0, 0.0)]),
            Err(Error::NonFinite { index: 1 })
        ));
        assert!(PointCloud::new(vec![]).is_err());
    }

    #[test]
    fn dedup_keeps_first_occurrence() {
        let a = Point3::new(0.0, 0.0, 1.0);
        let b = Point3::new(0.0, 1.0, 0.0);
        let (cloud, dropped) = PointCloud::new_dedup(vec![a, b, a, a]).unwrap();
        assert_eq!(dropped, 2);
        assert_eq!(cloud.points(), &[a, b]);
    }

    #[test]
    fn bbox_tracks_extension() {
        let cloud = PointCloud::new(vec![Point3::origin(), Point3::new(1.0, 1.0, 1.0)]).unwrap();
        let grown = cloud.extended(&[Point3::new(-1.0, 2.0, 0.5)]).unwrap();
        assert_eq!(grown.bbox().min, Point3::new(-1.0, 0.0, 0.0));
        assert_eq!(grown.bbox().max, Point3::new(1.0, 2.0, 1.0));
        assert_eq!(grown.len(), 3);
    }

    #[test]
    fn knn_rejects_oversized_k() {
        let cloud = PointCloud::new(vec![Point3::origin()]).unwrap();
        assert!(matches!(
            cloud.knn(&Point3::origin(), 2),
            Err(Error::InsufficientPoints { requested: 2, available: 1 })
        ));
    }

    #[test]
    fn knn_collinear() {
        let cloud = PointCloud::new(vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(3.0, 0.0, 0.0),
        ])
        .unwrap();
        let got: Vec<usize> = cloud
            .knn(&Point3::new(3.0, 0.0, 0.0), 2)
            .unwrap()
            .iter()
            .map(|n| n.index)
            .collect();
        assert_eq!(got, vec![2, 1]);
        assert_eq!(cloud.knn(&Point3::origin(), 1).unwrap()[0].index, 0);
    }
}
