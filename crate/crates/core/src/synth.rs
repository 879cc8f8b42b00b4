//! Seeded synthetic clouds used by tests, benches and the CLI.

use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, Vector3};
use crate::error::{Error, Result};

/// Surface samples per lattice step along each parameter axis.
const OVERSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Plane,
    PlaneWithRidge,
    TorusSection,
    DuplicatedPatch,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Plane, Shape::PlaneWithRidge, Shape::TorusSection, Shape::DuplicatedPatch];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Plane => "plane",
            Shape::PlaneWithRidge => "plane_with_ridge",
            Shape::TorusSection => "torus_section",
            Shape::DuplicatedPatch => "duplicated_patch",
        }
    }

    /// Voxelized on a lattice with `side` cells per unit length.
    pub fn generate(self, side: usize, seed: u64) -> Vec<Point3> {
        match self {
            Shape::Plane => plane(side, seed),
            Shape::PlaneWithRidge => plane_with_ridge(side, seed),
            Shape::TorusSection => torus_section(side, seed),
            Shape::DuplicatedPatch => duplicated_patch(side, seed),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Shape::ALL
            .into_iter()
            .find(|shape| shape.name() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown synthetic shape '{s}'")))
    }
}

pub fn lattice_step(side: usize) -> f64 {
    1.0 / (side.max(3) - 1) as f64
}

/// Sub-cell shift applied to every surface before voxelization.
pub fn lattice_offset(side: usize, seed: u64) -> Vector3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Vector3::new(rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()) * lattice_step(side)
}

/// Surface `f` over the unit parameter square, voxelized on a lattice of
/// step `1 / (side - 1)`: every lattice cell hit by the surface contributes its
/// center. `stretch` bounds how much `f` lengthens parameter distances. The
/// seed shifts the surface by a random sub-cell offset. Points come out
/// sorted by lattice index.
fn voxelized(side: usize, stretch: f64, seed: u64, f: impl Fn(f64, f64) -> Point3) -> Vec<Point3> {
    let h = lattice_step(side);
    let offset = lattice_offset(side, seed);
    let res = (side as f64 * stretch).ceil() as usize * OVERSAMPLE;
    let mut cells = BTreeSet::new();
    for i in 0..=res {
        for j in 0..=res {
            let p = f(i as f64 / res as f64, j as f64 / res as f64) + offset;
            cells.insert([(p.x / h).round() as i64, (p.y / h).round() as i64, (p.z / h).round() as i64]);
        }
    }
    cells
        .into_iter()
        .map(|[i, j, k]| Point3::new(i as f64 * h, j as f64 * h, k as f64 * h))
        .collect()
}

/// Gently tilted unit square.
pub fn plane(side: usize, seed: u64) -> Vec<Point3> {
    voxelized(side, 1.01, seed, |u, v| Point3::new(u, v, plane_height(u, v)))
}

pub fn plane_height(x: f64, y: f64) -> f64 {
    0.1 * x + 0.05 * y
}

/// Height of the analytic ridge surface at `(x, y)`.
pub fn ridge_height(x: f64, y: f64) -> f64 {
    let d = x - 0.5 - 0.1 * (PI * y).sin();
    0.15 * (-(d / 0.08).powi(2)).exp()
}

pub fn plane_with_ridge(side: usize, seed: u64) -> Vec<Point3> {
    voxelized(side, 2.0, seed, |u, v| Point3::new(u, v, ridge_height(u, v)))
}

pub const TORUS_MAJOR: f64 = 1.0 / 1.3;
pub const TORUS_MINOR: f64 = 0.3 / 1.3;

/// Quarter of a torus scaled to unit extent in x and y.
pub fn torus_section(side: usize, seed: u64) -> Vec<Point3> {
    voxelized(side, 1.6, seed, |s, t| {
        let u = s * PI / 2.0;
        let v = t * TAU;
        let ring = TORUS_MAJOR + TORUS_MINOR * v.cos();
        Point3::new(ring * u.cos(), ring * u.sin(), TORUS_MINOR * v.sin())
    })
}

/// Centers of the bumps repeated across the duplicated-patch surface.
pub const PATCH_CENTERS: [(f64, f64); 9] = [
    (0.2, 0.2),
    (0.5, 0.2),
    (0.8, 0.2),
    (0.2, 0.5),
    (0.5, 0.5),
    (0.8, 0.5),
    (0.2, 0.8),
    (0.5, 0.8),
    (0.8, 0.8),
];

/// Height of the duplicated-patch surface: identical bumps on a plane.
pub fn patch_height(x: f64, y: f64) -> f64 {
    PATCH_CENTERS
        .iter()
        .map(|(cx, cy)| {
            let r2 = (x - cx).powi(2) + (y - cy).powi(2);
            0.12 * (-r2 / (2.0 * 0.035f64.powi(2))).exp()
        })
        .sum()
}

pub fn duplicated_patch(side: usize, seed: u64) -> Vec<Point3> {
    voxelized(side, 2.5, seed, |u, v| Point3::new(u, v, patch_height(u, v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::PointCloud;
    use crate::voxel::calibrate_voxel_size;

    #[test]
    fn shapes_are_deterministic_and_valid() {
        for shape in Shape::ALL {
            let a = shape.generate(40, 7);
            assert_eq!(a, shape.generate(40, 7), "{shape}");
            assert_ne!(a, shape.generate(40, 8), "{shape}");
            assert!(a.len() >= 1500, "{shape}: {}", a.len());
            let cloud = PointCloud::new(a).unwrap();
            assert!(cloud.bbox().volume() > 0.0);
            let e = calibrate_voxel_size(&cloud).unwrap();
            assert!(e > 0.0 && e <= 1.0 / 39.0, "{shape}: {e}");
        }
    }

    #[test]
    fn points_sit_on_the_lattice() {
        let h = 1.0 / 39.0;
        for p in duplicated_patch(40, 3) {
            for a in 0..3 {
                let r = p[a] / h;
                assert!((r - r.round()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for shape in Shape::ALL {
            assert_eq!(shape.name().parse::<Shape>().unwrap(), shape);
        }
        assert!("cube".parse::<Shape>().is_err());
    }

    #[test]
    fn surfaces_follow_their_formulas() {
        // within one lattice step of the analytic surface, up to the seed offset
        let h = 1.0 / 29.0;
        for p in plane_with_ridge(30, 1) {
            let near = (-2..=2)
                .flat_map(|i| (-2..=2).map(move |j| (i as f64 * h * 0.5, j as f64 * h * 0.5)))
                .any(|(dx, dy)| (p.z - ridge_height(p.x - dx, p.y - dy)).abs() < 2.0 * h);
            assert!(near, "{p:?}");
        }
        for p in torus_section(30, 1) {
            let ring = (p.x * p.x + p.y * p.y).sqrt() - TORUS_MAJOR;
            let d = ((ring * ring + p.z * p.z).sqrt() - TORUS_MINOR).abs();
            assert!(d < 3.0 * h, "{p:?} {d}");
        }
    }
}
