//! One-sided Hausdorff distance.

use crate::cloud::Point3;
use crate::error::{Error, Result};
use crate::kdtree::KdTree;

/// `max_{a in from} min_{b in to} |a - b|`.
pub fn ohd(from: &[Point3], to: &[Point3]) -> Result<f64> {
    if from.is_empty() || to.is_empty() {
        return Err(Error::EmptySet);
    }
    if to.len() <= 16 {
        return Ok(from
            .iter()
            .map(|a| to.iter().map(|b| (a - b).norm_squared()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
            .sqrt());
    }
    ohd_indexed(from, &KdTree::new(to))
}

/// One-sided distance against a prebuilt index of the target set.
pub fn ohd_indexed(from: &[Point3], to: &KdTree) -> Result<f64> {
    if from.is_empty() || to.is_empty() {
        return Err(Error::EmptySet);
    }
    let worst = from
        .iter()
        .map(|a| to.nearest(a).map_or(f64::INFINITY, |n| n.dist2))
        .fold(0.0, f64::max);
    Ok(worst.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(a: &[Point3], b: &[Point3]) -> f64 {
        let mut worst: f64 = 0.0;
        for p in a {
            let mut best = f64::INFINITY;
            for q in b {
                best = best.min((p - q).norm());
            }
            worst = worst.max(best);
        }
        worst
    }

    #[test]
    fn small_cases() {
        let a = vec![Point3::origin()];
        let b = vec![Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 2.0, 0.0)];
        assert_eq!(ohd(&a, &b).unwrap(), 1.0);
        assert_eq!(ohd(&b, &b).unwrap(), 0.0);
        assert!(matches!(ohd(&[], &b), Err(Error::EmptySet)));
        assert!(matches!(ohd(&a, &[]), Err(Error::EmptySet)));
    }

    fn pts(n: usize) -> impl Strategy<Value = Vec<Point3>> {
        prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 1..n)
            .prop_map(|v| v.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect())
    }

    proptest! {
        #[test]
        fn matches_double_loop(a in pts(60), b in pts(60)) {
            let got = ohd(&a, &b).unwrap();
            prop_assert!((got - brute(&a, &b)).abs() <= 1e-12);
        }

        #[test]
        fn bounded_by_any_fixed_target(a in pts(40), b in pts(40), pick in 0usize..40) {
            let b0 = b[pick % b.len()];
            let bound = a.iter().map(|p| (p - b0).norm()).fold(0.0, f64::max);
            prop_assert!(ohd(&a, &b).unwrap() <= bound + 1e-12);
        }
    }

    #[test]
    fn asymmetric_for_generic_sets() {
        let a = vec![Point3::origin(), Point3::new(0.1, 0.0, 0.0)];
        let b = vec![Point3::origin(), Point3::new(5.0, 0.0, 0.0)];
        assert!((ohd(&a, &b).unwrap() - 0.1).abs() < 1e-15);
        assert!((ohd(&b, &a).unwrap() - 4.9).abs() < 1e-12);
    }
}
