//! Template matching: candidate search, rotation-only ICP scored by the
//! one-sided Hausdorff distance, and adaptive cube-size selection.
//!
//! A candidate cube centred at `q` is translated so that `q` lands on the
//! template centre and then rotated about it. The match score is the
//! one-sided distance from the template points to the moved candidate.

use nalgebra::{Matrix3, Rotation3, Vector3 as NVector3};
use rayon::prelude::*;

use crate::cloud::{Point3, PointCloud, Vector3};
use crate::cube::{count_in_cube, cube_bounds, extract_cube, Cube};
use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::voxel::{Voxel, VoxelGrid};

/// Candidates are subsampled above this many points unless a stride is set.
pub const STRIDE_POINT_BUDGET: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Absolute score improvement below which a sweep counts as stalled.
    pub tolerance: f64,
    /// Stalled sweeps tolerated before stopping.
    pub patience: usize,
    /// Also start from 90 degree turns about each axis.
    pub restarts: bool,
}

impl IcpParams {
    pub fn for_voxel_edge(voxel_edge: f64) -> Self {
        IcpParams {
            max_iterations: 30,
            tolerance: 1e-4 * voxel_edge,
            patience: 3,
            restarts: true,
        }
    }
}

/// Rotation about the template centre that best aligns a candidate cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidAlignment {
    pub rotation: Matrix3<f64>,
    /// Template centre; the candidate centre is moved here before rotating.
    pub pivot: Point3,
    /// Centre of the candidate cube before alignment.
    pub source_center: Point3,
    /// One-sided distance from the template to the aligned candidate.
    pub score: f64,
}

impl RigidAlignment {
    /// Moves a candidate point into the template frame.
    pub fn apply(&self, p: &Point3) -> Point3 {
        self.pivot + self.rotation * (p - self.source_center)
    }

    pub fn apply_all(&self, points: &[Point3]) -> Vec<Point3> {
        points.iter().map(|p| self.apply(p)).collect()
    }
}

/// Scores seen by an ICP run: `sweeps` has one entry per evaluated rotation,
/// `accepted` only those that improved on the best so far.
#[derive(Debug, Clone, Default)]
pub struct IcpTrace {
    pub sweeps: Vec<f64>,
    pub accepted: Vec<f64>,
}

/// Rotation minimising `sum |a_i - R b_i|^2`, with reflection correction.
pub fn procrustes_rotation(pairs: &[(Vector3, Vector3)]) -> Matrix3<f64> {
    let mut h = Matrix3::zeros();
    for (a, b) in pairs {
        h += b * a.transpose();
    }
    let svd = h.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Matrix3::identity();
    };
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&NVector3::new(1.0, 1.0, if d < 0.0 { -1.0 } else { 1.0 }));
    v * correction * u.transpose()
}

fn is_collinear(points: &[Vector3]) -> bool {
    if points.len() < 3 {
        return true;
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[0] <= 0.0 || ev[1] <= 1e-12 * ev[0]
}

/// Prepared candidate: local coordinates and their index.
struct LocalCandidate {
    tree: KdTree,
}

impl LocalCandidate {
    fn new(candidate: &Cube) -> Self {
        let local: Vec<Point3> = candidate.local_points().into_iter().map(Point3::from).collect();
        LocalCandidate {
            tree: KdTree::new(&local),
        }
    }

    /// Score of rotation `r` and the template-to-candidate pairs it induces.
    fn sweep(&self, template: &[Vector3], r: &Matrix3<f64>) -> (f64, Vec<(Vector3, Vector3)>) {
        let r_t = r.transpose();
        let mut worst: f64 = 0.0;
        let mut pairs = Vec::with_capacity(template.len());
        for a in template {
            // |a - R b| = |R^T a - b|
            let q = Point3::from(r_t * a);
            let nn = self.tree.nearest(&q).expect("non-empty candidate");
            worst = worst.max(nn.dist2);
            pairs.push((*a, self.tree.points()[nn.index].coords));
        }
        (worst.sqrt(), pairs)
    }

    fn score(&self, template: &[Vector3], r: &Matrix3<f64>) -> f64 {
        let r_t = r.transpose();
        template
            .iter()
            .map(|a| self.tree.nearest(&Point3::from(r_t * a)).map_or(f64::INFINITY, |n| n.dist2))
            .fold(0.0, f64::max)
            .sqrt()
    }

    fn icp(&self, template: &[Vector3], start: Matrix3<f64>, params: &IcpParams, trace: &mut IcpTrace) -> (Matrix3<f64>, f64) {
        let mut r = start;
        let (mut score, mut pairs) = self.sweep(template, &r);
        let mut best = (r, score);
        trace.sweeps.push(score);
        trace.accepted.push(score);
        let mut stalled = 0;
        for _ in 0..params.max_iterations {
            if score == 0.0 {
                break;
            }
            let next = procrustes_rotation(&pairs);
            let step = (next - r).norm();
            r = next;
            let (s, p) = self.sweep(template, &r);
            trace.sweeps.push(s);
            if s < best.1 {
                if best.1 - s < params.tolerance {
                    stalled += 1;
                } else {
                    stalled = 0;
                }
                best = (r, s);
                trace.accepted.push(s);
            } else {
                stalled += 1;
            }
            score = s;
            pairs = p;
            if step < 1e-12 || stalled >= params.patience {
                break;
            }
        }
        best
    }
}

fn restart_rotations() -> [Matrix3<f64>; 4] {
    let quarter = std::f64::consts::FRAC_PI_2;
    [
        Matrix3::identity(),
        *Rotation3::from_axis_angle(&NVector3::x_axis(), quarter).matrix(),
        *Rotation3::from_axis_angle(&NVector3::y_axis(), quarter).matrix(),
        *Rotation3::from_axis_angle(&NVector3::z_axis(), quarter).matrix(),
    ]
}

/// Rotation-only ICP of `candidate` onto `template` about the template centre.
pub fn align_rigid(template: &Cube, candidate: &Cube, params: &IcpParams) -> Result<RigidAlignment> {
    align_rigid_from(template, candidate, params, None, &mut IcpTrace::default())
}

/// [`align_rigid`] with an optional warm start and a score trace.
/// A warm start replaces the restart rotations.
pub fn align_rigid_from(
    template: &Cube,
    candidate: &Cube,
    params: &IcpParams,
    warm_start: Option<Matrix3<f64>>,
    trace: &mut IcpTrace,
) -> Result<RigidAlignment> {
    let tmpl = template.local_points();
    let cand_local = candidate.local_points();
    if is_collinear(&tmpl) || is_collinear(&cand_local) {
        return Err(Error::DegenerateGeometry);
    }
    let local = LocalCandidate::new(candidate);

    let starts: Vec<Matrix3<f64>> = match warm_start {
        Some(r) => vec![r],
        None if params.restarts => restart_rotations().to_vec(),
        None => vec![Matrix3::identity()],
    };
    let mut best: Option<(Matrix3<f64>, f64)> = None;
    for start in starts {
        let (r, s) = local.icp(&tmpl, start, params, trace);
        if best.is_none_or(|b| s < b.1) {
            best = Some((r, s));
        }
        if s == 0.0 {
            break;
        }
    }
    let (rotation, score) = best.expect("at least one start");
    Ok(RigidAlignment {
        rotation,
        pivot: template.center,
        source_center: candidate.center,
        score,
    })
}

/// Score of a fixed rotation, without running ICP.
pub fn alignment_score(template: &Cube, candidate: &Cube, rotation: &Matrix3<f64>) -> Result<f64> {
    if template.is_empty() || candidate.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(LocalCandidate::new(candidate).score(&template.local_points(), rotation))
}

/// Default candidate stride for a cloud of `count` points.
pub fn default_stride(count: usize) -> usize {
    count.div_ceil(STRIDE_POINT_BUDGET).max(1)
}

/// Hole voxel bounds, used to skip the exact overlap test for far cubes.
struct HoleBounds {
    lo: [i64; 3],
    hi: [i64; 3],
}

impl HoleBounds {
    fn of(grid: &VoxelGrid) -> Option<Self> {
        let mut it = grid.hole_voxels().iter();
        let first = it.next()?;
        let mut b = HoleBounds { lo: first.0, hi: first.0 };
        for v in it {
            for a in 0..3 {
                b.lo[a] = b.lo[a].min(v.0[a]);
                b.hi[a] = b.hi[a].max(v.0[a]);
            }
        }
        Some(b)
    }

    fn disjoint(&self, lo: Voxel, hi: Voxel) -> bool {
        (0..3).any(|a| hi.0[a] < self.lo[a] || lo.0[a] > self.hi[a])
    }
}

fn cube_touches_hole(grid: &VoxelGrid, bounds: Option<&HoleBounds>, center: &Point3, n: u32) -> bool {
    let Some(bounds) = bounds else {
        return false;
    };
    let (min, max) = cube_bounds(center, n, grid.voxel_edge());
    let (lo, hi) = grid.voxel_range(&min, &max);
    !bounds.disjoint(lo, hi) && grid.any_hole_in(lo, hi)
}

/// True if the `n`-voxel cube at `center` overlaps a hole voxel.
pub fn overlaps_hole(grid: &VoxelGrid, center: &Point3, n: u32) -> bool {
    cube_touches_hole(grid, HoleBounds::of(grid).as_ref(), center, n)
}

/// Cloud indices of candidate centres for a template at `template_center`.
///
/// A centre qualifies if its cube holds no hole voxel and at least as many
/// points as the template cube. Centres are visited with the given stride.
pub fn enumerate_candidates(
    cloud: &PointCloud,
    grid: &VoxelGrid,
    template_center: &Point3,
    n: u32,
    stride: usize,
) -> Vec<usize> {
    let e = grid.voxel_edge();
    let needed = count_in_cube(cloud, template_center, n, e);
    let bounds = HoleBounds::of(grid);
    let pts = cloud.points();
    let centers: Vec<usize> = (0..pts.len()).step_by(stride.max(1)).collect();
    centers
        .into_par_iter()
        .filter(|&i| {
            let q = &pts[i];
            !cube_touches_hole(grid, bounds.as_ref(), q, n) && count_in_cube(cloud, q, n, e) >= needed
        })
        .collect()
}

/// A scored candidate cube.
#[derive(Debug, Clone)]
pub struct Candidate {
    /// Cloud index of the cube centre.
    pub center_index: usize,
    pub alignment: RigidAlignment,
}

/// Aligns every candidate centre at size `n`; degenerate cubes yield `None`.
fn evaluate(
    cloud: &PointCloud,
    template: &Cube,
    centers: &[usize],
    warm: Option<&[Matrix3<f64>]>,
    params: &IcpParams,
) -> Vec<Option<Candidate>> {
    centers
        .par_iter()
        .enumerate()
        .map(|(slot, &ci)| {
            let q = cloud.points()[ci];
            let cube = extract_cube(cloud, q, template.n, template.voxel_edge);
            let start = warm.map(|w| w[slot]);
            align_rigid_from(template, &cube, params, start, &mut IcpTrace::default())
                .ok()
                .map(|alignment| Candidate {
                    center_index: ci,
                    alignment,
                })
        })
        .collect()
}

/// Lowest score, lowest position on ties.
fn best_of<'a>(cands: impl IntoIterator<Item = &'a Candidate>) -> Option<&'a Candidate> {
    let mut best: Option<&Candidate> = None;
    for c in cands {
        if best.is_none_or(|b| c.alignment.score < b.alignment.score) {
            best = Some(c);
        }
    }
    best
}

/// Best candidate cube at a fixed size.
pub fn best_match_fixed_n(
    cloud: &PointCloud,
    template: &Cube,
    centers: &[usize],
    params: &IcpParams,
) -> Result<Candidate> {
    if centers.is_empty() {
        return Err(Error::NoCandidates);
    }
    let evaluated = evaluate(cloud, template, centers, None, params);
    best_of(evaluated.iter().flatten()).cloned().ok_or(Error::NoCandidates)
}

/// Scores closer than this many voxel edges count as ties, so exact copies
/// survive rounding noise in the alignment.
pub const SCORE_TIE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    pub base_n: u32,
    /// Threshold factor applied to the base-size best score.
    pub threshold_factor: f64,
    pub max_n: u32,
    pub stride: usize,
    pub icp: IcpParams,
}

/// How adaptive matching reached its decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptiveOutcome {
    /// A single candidate survived.
    Unique,
    /// Every candidate was evicted; the previous size's best was kept.
    Fallback,
    /// The size cap was hit with several survivors; the best one was kept.
    SizeCap,
}

#[derive(Debug, Clone)]
pub struct AdaptiveMatch {
    pub candidate: Candidate,
    /// Cube size of the returned match.
    pub n: u32,
    pub threshold: f64,
    pub outcome: AdaptiveOutcome,
    /// Survivor count after each size, starting with the base size.
    pub survivors: Vec<(u32, usize)>,
}

/// Fixed-size matching expressed as an [`AdaptiveMatch`] for uniform reporting.
pub fn match_fixed(cloud: &PointCloud, grid: &VoxelGrid, template_center: &Point3, params: &MatchParams) -> Result<AdaptiveMatch> {
    let n = params.base_n;
    let template = extract_cube(cloud, *template_center, n, grid.voxel_edge());
    let centers = enumerate_candidates(cloud, grid, template_center, n, params.stride);
    let candidate = best_match_fixed_n(cloud, &template, &centers, &params.icp)?;
    Ok(AdaptiveMatch {
        threshold: candidate.alignment.score,
        candidate,
        n,
        outcome: AdaptiveOutcome::Unique,
        survivors: vec![(n, 1)],
    })
}

/// Matching with adaptive cube size.
///
/// Starting at `base_n`, every candidate within `threshold_factor` times the
/// best base score is kept; the template then grows by two voxels at a time
/// and candidates whose score exceeds the threshold are evicted until one
/// remains. If all are evicted the best match of the previous size wins.
pub fn match_adaptive(cloud: &PointCloud, grid: &VoxelGrid, template_center: &Point3, params: &MatchParams) -> Result<AdaptiveMatch> {
    let e = grid.voxel_edge();
    let mut n = params.base_n;
    let template = extract_cube(cloud, *template_center, n, e);
    let centers = enumerate_candidates(cloud, grid, template_center, n, params.stride);
    if centers.is_empty() {
        return Err(Error::NoCandidates);
    }
    let evaluated: Vec<Candidate> = evaluate(cloud, &template, &centers, None, &params.icp)
        .into_iter()
        .flatten()
        .collect();
    let best = best_of(&evaluated).cloned().ok_or(Error::NoCandidates)?;
    let threshold = params.threshold_factor * best.alignment.score + SCORE_TIE * e;
    adaptive_from(cloud, grid, template_center, params, evaluated, best, threshold, &mut n)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_from(
    cloud: &PointCloud,
    grid: &VoxelGrid,
    template_center: &Point3,
    params: &MatchParams,
    evaluated: Vec<Candidate>,
    base_best: Candidate,
    threshold: f64,
    n: &mut u32,
) -> Result<AdaptiveMatch> {
    let e = grid.voxel_edge();
    let bounds = HoleBounds::of(grid);
    let mut members: Vec<Candidate> = evaluated
        .into_iter()
        .filter(|c| c.alignment.score <= threshold)
        .collect();
    let mut survivors = vec![(*n, members.len())];
    let mut previous_best = base_best;

    while members.len() > 1 {
        if *n + 2 > params.max_n {
            let winner = best_of(&members).cloned().expect("non-empty");
            return Ok(AdaptiveMatch {
                candidate: winner,
                n: *n,
                threshold,
                outcome: AdaptiveOutcome::SizeCap,
                survivors,
            });
        }
        *n += 2;
        let template = extract_cube(cloud, *template_center, *n, e);
        let pts = cloud.points();
        // Cubes that grew into the hole are no longer inside the source region.
        let kept: Vec<&Candidate> = members
            .iter()
            .filter(|c| !cube_touches_hole(grid, bounds.as_ref(), &pts[c.center_index], *n))
            .collect();
        let centers: Vec<usize> = kept.iter().map(|c| c.center_index).collect();
        let warm: Vec<Matrix3<f64>> = kept.iter().map(|c| c.alignment.rotation).collect();
        let grown: Vec<Candidate> = evaluate(cloud, &template, &centers, Some(&warm), &params.icp)
            .into_iter()
            .flatten()
            .collect();
        let previous_members = std::mem::take(&mut members);
        members = grown.iter().filter(|c| c.alignment.score <= threshold).cloned().collect();
        survivors.push((*n, members.len()));
        if members.is_empty() {
            // Ties at the previous size go to whoever fit best at this one.
            let tied: Vec<usize> = previous_members
                .iter()
                .filter(|c| c.alignment.score <= previous_best.alignment.score + SCORE_TIE * e)
                .map(|c| c.center_index)
                .collect();
            let chosen = tied
                .iter()
                .filter_map(|ci| grown.iter().position(|g| g.center_index == *ci))
                .min_by(|&a, &b| grown[a].alignment.score.total_cmp(&grown[b].alignment.score).then(a.cmp(&b)))
                .and_then(|slot| previous_members.iter().find(|c| c.center_index == grown[slot].center_index))
                .cloned()
                .unwrap_or(previous_best);
            return Ok(AdaptiveMatch {
                candidate: chosen,
                n: *n - 2,
                threshold,
                outcome: AdaptiveOutcome::Fallback,
                survivors,
            });
        }
        previous_best = best_of(&members).cloned().expect("non-empty");
    }

    let winner = members.into_iter().next().expect("one survivor");
    Ok(AdaptiveMatch {
        candidate: winner,
        n: *n,
        threshold,
        outcome: AdaptiveOutcome::Unique,
        survivors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube_of(points: Vec<Point3>, center: Point3) -> Cube {
        Cube {
            center,
            n: 5,
            voxel_edge: 1.0,
            indices: (0..points.len()).collect(),
            points,
        }
    }

    fn blob(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|_| Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5)))
            .collect()
    }

    fn params() -> IcpParams {
        IcpParams::for_voxel_edge(0.1)
    }

    #[test]
    fn procrustes_recovers_rotation() {
        let r = Rotation3::from_euler_angles(0.3, -0.2, 1.1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pairs: Vec<(Vector3, Vector3)> = blob(&mut rng, 20)
            .into_iter()
            .map(|p| (r * p.coords, p.coords))
            .collect();
        let got = procrustes_rotation(&pairs);
        assert!((got - r.matrix()).norm() < 1e-10);
        assert!((got.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_candidate_scores_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = blob(&mut rng, 60);
        let t = cube_of(pts.clone(), Point3::origin());
        let a = align_rigid(&t, &t, &params()).unwrap();
        assert!((a.rotation - Matrix3::identity()).norm() < 1e-12);
        assert_eq!(a.score, 0.0);
    }

    #[test]
    fn recovers_thirty_degree_turn() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pivot = Point3::new(2.0, -1.0, 0.5);
        let local = blob(&mut rng, 80);
        let rot = Rotation3::from_axis_angle(&NVector3::z_axis(), 30f64.to_radians());
        let template = cube_of(local.iter().map(|p| pivot + p.coords).collect(), pivot);
        // Candidate lives elsewhere, rotated about its own centre.
        let q = Point3::new(-5.0, 4.0, 1.0);
        let candidate = cube_of(local.iter().map(|p| q + rot * p.coords).collect(), q);
        let a = align_rigid(&template, &candidate, &params()).unwrap();
        assert!((a.rotation - rot.inverse().matrix()).norm() < 1e-6);
        assert!(a.score < 1e-9);
        let moved = a.apply_all(&candidate.points);
        assert!(crate::ohd(&template.points, &moved).unwrap() < 1e-9);
    }

    #[test]
    fn noisy_copy_is_within_displacement_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let local = blob(&mut rng, 70);
        let delta = 0.01;
        let template = cube_of(local.clone(), Point3::origin());
        let noisy: Vec<Point3> = local
            .iter()
            .map(|p| p + Vector3::new(rng.random_range(-delta..delta), rng.random_range(-delta..delta), rng.random_range(-delta..delta)))
            .collect();
        let candidate = cube_of(noisy, Point3::origin());
        let a = align_rigid(&template, &candidate, &params()).unwrap();
        assert!(a.score <= delta * 3f64.sqrt());
    }

    #[test]
    fn collinear_is_degenerate() {
        let line: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ok = cube_of(blob(&mut rng, 10), Point3::origin());
        let bad = cube_of(line, Point3::origin());
        assert!(matches!(align_rigid(&ok, &bad, &params()), Err(Error::DegenerateGeometry)));
        assert!(matches!(align_rigid(&bad, &ok, &params()), Err(Error::DegenerateGeometry)));
    }

    #[test]
    fn accepted_scores_never_increase() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for trial in 0..20 {
            let local = blob(&mut rng, 50);
            let rot = Rotation3::from_euler_angles(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8));
            let template = cube_of(local.clone(), Point3::origin());
            let cand = cube_of(local.iter().map(|p| Point3::from(rot * p.coords)).collect(), Point3::origin());
            let mut trace = IcpTrace::default();
            let a = align_rigid_from(&template, &cand, &params(), Some(Matrix3::identity()), &mut trace).unwrap();
            assert!(trace.accepted.windows(2).all(|w| w[1] <= w[0]), "trial {trial}");
            assert_eq!(a.score, *trace.accepted.last().unwrap());
            assert!((a.rotation.transpose() * a.rotation - Matrix3::identity()).norm() < 1e-9);
            assert!((a.rotation.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn default_stride_budget() {
        assert_eq!(default_stride(10), 1);
        assert_eq!(default_stride(50_000), 1);
        assert_eq!(default_stride(50_001), 2);
        assert_eq!(default_stride(200_000), 4);
    }
}
