//! Reconstruction quality: symmetric Hausdorff distance normalised by the
//! volume of the original cloud's bounding box.

use crate::cloud::{Aabb, Point3};
use crate::error::{Error, Result};
use crate::hausdorff::ohd_indexed;
use crate::kdtree::KdTree;

/// Reconstructed and original point sets with the normaliser `volume`.
#[derive(Debug, Clone, Copy)]
pub struct EvalPair<'a> {
    pub reconstructed: &'a [Point3],
    pub original: &'a [Point3],
    pub volume: f64,
}

impl<'a> EvalPair<'a> {
    /// Pair normalised by the bounding-box volume of `original`.
    pub fn new(reconstructed: &'a [Point3], original: &'a [Point3]) -> Result<Self> {
        let bbox = Aabb::from_points(original).ok_or(Error::EmptySet)?;
        Ok(EvalPair {
            reconstructed,
            original,
            volume: bbox.volume(),
        })
    }
}

/// Larger of the two one-sided distances.
pub fn symmetric_hausdorff(a: &[Point3], b: &[Point3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let ta = KdTree::new(a);
    let tb = KdTree::new(b);
    Ok(ohd_indexed(a, &tb)?.max(ohd_indexed(b, &ta)?))
}

/// Symmetric Hausdorff distance divided by the pair's volume.
pub fn nshd(pair: &EvalPair) -> Result<f64> {
    if !(pair.volume > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "normalising volume must be positive, got {}",
            pair.volume
        )));
    }
    Ok(symmetric_hausdorff(pair.reconstructed, pair.original)? / pair.volume)
}

/// Hole-local variant: each one-sided distance only starts from points inside
/// `region`, while the targets stay complete. A side with no points in the
/// region contributes zero.
pub fn nshd_local(pair: &EvalPair, region: &Aabb) -> Result<f64> {
    if pair.reconstructed.is_empty() || pair.original.is_empty() {
        return Err(Error::EmptySet);
    }
    if !(pair.volume > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "normalising volume must be positive, got {}",
            pair.volume
        )));
    }
    let inside = |pts: &[Point3]| -> Vec<Point3> { pts.iter().copied().filter(|p| region.contains(p)).collect() };
    let r_local = inside(pair.reconstructed);
    let o_local = inside(pair.original);
    let one_side = |from: &[Point3], to: &[Point3]| -> Result<f64> {
        if from.is_empty() {
            Ok(0.0)
        } else {
            ohd_indexed(from, &KdTree::new(to))
        }
    };
    let d = one_side(&r_local, pair.original)?.max(one_side(&o_local, pair.reconstructed)?);
    Ok(d / pair.volume)
}
