use std::hint::black_box;

use cloudfill_core::hausdorff::ohd;
use cloudfill_core::matcher::{align_rigid, IcpParams};
use cloudfill_core::nrt::{assemble_cost, solve_nrt, NrtProblem, DEFAULT_GRAPH_K};
use cloudfill_core::synth::duplicated_patch;
use cloudfill_core::{calibrate_voxel_size, extract_cube, Point3, PointCloud};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::Rotation3;

fn cloud() -> PointCloud {
    PointCloud::new(duplicated_patch(72, 1)).unwrap()
}

fn knn(c: &mut Criterion) {
    let cloud = cloud();
    let queries: Vec<Point3> = cloud.points().iter().step_by(37).copied().collect();
    let mut group = c.benchmark_group("knn");
    for k in [1, 5, 20] {
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            b.iter(|| {
                for q in &queries {
                    black_box(cloud.knn(q, k).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn hausdorff(c: &mut Criterion) {
    let a = duplicated_patch(60, 1);
    let b = duplicated_patch(60, 2);
    c.bench_function("ohd_3600x3600", |bench| bench.iter(|| ohd(black_box(&a), black_box(&b)).unwrap()));
}

fn rigid(c: &mut Criterion) {
    let cloud = cloud();
    let e = calibrate_voxel_size(&cloud).unwrap();
    let center = cloud.points()[cloud.len() / 2 + 20];
    let mut group = c.benchmark_group("align_rigid");
    for n in [5u32, 10, 15] {
        let template = extract_cube(&cloud, center, n, e);
        let rotation = Rotation3::from_euler_angles(0.2, -0.1, 0.3);
        let mut candidate = template.clone();
        candidate.points = template.points.iter().map(|p| center + rotation * (p - center)).collect();
        let params = IcpParams::for_voxel_edge(e);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| align_rigid(black_box(&template), black_box(&candidate), &params).unwrap())
        });
    }
    group.finish();
}

fn nrt(c: &mut Criterion) {
    let cloud = cloud();
    let e = calibrate_voxel_size(&cloud).unwrap();
    let center = cloud.points()[cloud.len() / 3];
    let mut group = c.benchmark_group("nrt_solve");
    for n in [5u32, 10, 15] {
        let template = extract_cube(&cloud, center, n, e);
        let moved: Vec<Point3> = template.points.iter().map(|p| p + nalgebra::Vector3::new(0.1 * e, 0.0, 0.05 * e)).collect();
        let problem = NrtProblem::new(&template.points, &moved, &center, DEFAULT_GRAPH_K, 1.0, 1e-6);
        group.bench_with_input(BenchmarkId::new("points", template.len()), &n, |b, _| {
            b.iter(|| solve_nrt(&assemble_cost(black_box(&problem)).unwrap()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, knn, hausdorff, rigid, nrt);
criterion_main!(benches);
