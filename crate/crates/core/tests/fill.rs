use cloudfill_core::holes::box_region;
use cloudfill_core::synth::{duplicated_patch, lattice_offset, plane, plane_height};
use cloudfill_core::{
    calibrate_voxel_size, fill_hole, nshd, punch_hole, Aabb, EvalPair, FillConfig, HoleRegion, Point3, PointCloud,
    Variant, Voxel, VoxelGrid,
};
use proptest::prelude::*;

struct Punched {
    original: PointCloud,
    punched: PointCloud,
    removed: Vec<Point3>,
    grid: VoxelGrid,
}

fn punch(points: Vec<Point3>, hole: &Aabb) -> Punched {
    let original = PointCloud::new(points).unwrap();
    let (kept, removed) = punch_hole(original.points(), hole);
    let punched = PointCloud::new(kept).unwrap();
    let e = calibrate_voxel_size(&original).unwrap();
    let grid = VoxelGrid::with_origin(&punched, original.bbox().min, e).unwrap();
    Punched {
        original,
        punched,
        removed,
        grid,
    }
}

fn column(x0: f64, y0: f64, x1: f64, y1: f64) -> Aabb {
    Aabb {
        min: Point3::new(x0, y0, -1.0),
        max: Point3::new(x1, y1, 1.0),
    }
}

#[test]
fn two_copy_fill_reduces_nshd() {
    let hole = column(0.42, 0.42, 0.58, 0.58);
    let p = punch(duplicated_patch(48, 1), &hole);
    let region = box_region(&p.grid, &hole, p.original.bbox()).unwrap();
    let out = fill_hole(&p.punched, &region, &FillConfig::default()).unwrap();
    let before = nshd(&EvalPair::new(p.punched.points(), p.original.points()).unwrap()).unwrap();
    let after = nshd(&EvalPair::new(out.cloud.points(), p.original.points()).unwrap()).unwrap();
    assert!(out.report.points_transferred > 0);
    assert!(after < before, "{after} >= {before}");
}

#[test]
fn base_fill_of_plane_hole_stays_on_the_plane() {
    let (side, seed) = (64, 4);
    let hole = column(0.4, 0.45, 0.55, 0.6);
    let p = punch(plane(side, seed), &hole);
    let mut voxels: Vec<[i64; 3]> = p.removed.iter().map(|q| p.grid.voxel_of(q).0).collect();
    voxels.sort_unstable();
    voxels.dedup();
    let region = HoleRegion::from_voxels(&p.grid, voxels.into_iter().map(Voxel).collect());
    let out = fill_hole(&p.punched, &region, &FillConfig::for_variant(Variant::Base)).unwrap();

    assert_eq!(out.report.final_hole_voxels, 0, "{:?}", out.report.termination);
    let e = p.grid.voxel_edge();
    let o = lattice_offset(side, seed);
    let norm = (1.0f64 + 0.01 + 0.0025).sqrt();
    for q in out.transferred_points() {
        let d = (q.z - o.z - plane_height(q.x - o.x, q.y - o.y)).abs() / norm;
        assert!(d <= 2.0 * e, "{q:?} is {} voxels off the plane", d / e);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn fill_is_append_only_deterministic_and_duplicate_free(
        x in 0.1f64..0.7,
        y in 0.1f64..0.7,
        size in 0.15f64..0.25,
        variant in prop::sample::select(Variant::ALL.to_vec()),
    ) {
        let hole = column(x, y, x + size, y + size);
        let p = punch(plane(24, 9), &hole);
        prop_assume!(!p.removed.is_empty());
        let region = box_region(&p.grid, &hole, p.original.bbox()).unwrap();
        let config = FillConfig::for_variant(variant);
        let a = fill_hole(&p.punched, &region, &config).unwrap();
        let b = fill_hole(&p.punched, &region, &config).unwrap();

        prop_assert_eq!(&a.report, &b.report);
        prop_assert_eq!(a.cloud.points(), b.cloud.points());
        prop_assert_eq!(&a.cloud.points()[..a.original_len], p.punched.points());
        prop_assert_eq!(a.report.points_transferred, a.cloud.len() - p.punched.len());
        prop_assert!(a.report.final_hole_voxels <= a.report.initial_hole_voxels);
        let mut seen = std::collections::HashSet::new();
        for q in a.cloud.points() {
            prop_assert!(seen.insert([q.x.to_bits(), q.y.to_bits(), q.z.to_bits()]));
        }
        let counts: Vec<usize> = a.report.iterations.iter().map(|r| r.hole_voxels).collect();
        prop_assert!(counts.windows(2).all(|w| w[1] <= w[0]));
    }
}
