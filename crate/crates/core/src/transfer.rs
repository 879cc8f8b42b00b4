//! The fill loop: priority, matching, optional refinement, point transfer.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud};
use crate::cube::{cube_bounds, extract_cube};
use crate::error::{Error, Result};
use crate::frontier::{compute_fill_front, HoleRegion, PriorityCache, PriorityParams, DEFAULT_DATA_FLOOR};
use crate::hausdorff::ohd;
use crate::matcher::{default_stride, match_adaptive, match_fixed, AdaptiveOutcome, IcpParams, MatchParams};
use crate::nrt::{match_points, refine, DEFAULT_LAMBDA, DEFAULT_MU};
use crate::voxel::VoxelGrid;

/// Which optional stages run on top of fixed-size exemplar filling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Base,
    BaseAcs,
    BaseNrt,
    BaseAcsNrt,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Base, Variant::BaseAcs, Variant::BaseNrt, Variant::BaseAcsNrt];

    pub fn adaptive(self) -> bool {
        matches!(self, Variant::BaseAcs | Variant::BaseAcsNrt)
    }

    pub fn refines(self) -> bool {
        matches!(self, Variant::BaseNrt | Variant::BaseAcsNrt)
    }

    /// Starting cube size: 10 for fixed-size variants, 5 as the adaptive seed.
    pub fn default_base_n(self) -> u32 {
        if self.adaptive() {
            5
        } else {
            10
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::BaseAcs => "base+acs",
            Variant::BaseNrt => "base+nrt",
            Variant::BaseAcsNrt => "base+acs+nrt",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['-', '_'], "+");
        match norm.as_str() {
            "base" => Ok(Variant::Base),
            "base+acs" | "acs" => Ok(Variant::BaseAcs),
            "base+nrt" | "nrt" => Ok(Variant::BaseNrt),
            "base+acs+nrt" | "acs+nrt" => Ok(Variant::BaseAcsNrt),
            _ => Err(Error::InvalidArgument(format!("unknown variant '{s}'"))),
        }
    }
}

/// Knobs of the fill loop. `None` fields take defaults derived from the
/// variant or the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FillConfig {
    pub variant: Variant,
    pub base_n: Option<u32>,
    pub lambda: f64,
    pub mu: f64,
    pub threshold_factor: f64,
    pub max_n: u32,
    pub icp_iterations: usize,
    /// ICP stall tolerance in voxel edges.
    pub icp_tolerance: f64,
    pub icp_patience: usize,
    pub icp_restarts: bool,
    pub stride: Option<usize>,
    pub max_iterations: Option<usize>,
    pub data_floor: f64,
    /// Only transfer into voxels holding no point, at most one per voxel.
    pub one_point_per_voxel: bool,
}

impl Default for FillConfig {
    fn default() -> Self {
        FillConfig {
            variant: Variant::BaseAcsNrt,
            base_n: None,
            lambda: DEFAULT_LAMBDA,
            mu: DEFAULT_MU,
            threshold_factor: 1.0001,
            max_n: 15,
            icp_iterations: 30,
            icp_tolerance: 1e-4,
            icp_patience: 3,
            icp_restarts: true,
            stride: None,
            max_iterations: None,
            data_floor: DEFAULT_DATA_FLOOR,
            one_point_per_voxel: true,
        }
    }
}

impl FillConfig {
    pub fn for_variant(variant: Variant) -> Self {
        FillConfig {
            variant,
            ..Default::default()
        }
    }

    pub fn base_n(&self) -> u32 {
        self.base_n.unwrap_or_else(|| self.variant.default_base_n())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda >= 0.0),
            ("mu", self.mu > 0.0),
            ("threshold_factor", self.threshold_factor >= 1.0),
            ("base_n", self.base_n() >= 1),
            ("max_n", self.max_n >= self.base_n()),
            ("icp_iterations", self.icp_iterations >= 1),
            ("icp_tolerance", self.icp_tolerance > 0.0),
            ("icp_patience", self.icp_patience >= 1),
            ("stride", self.stride.is_none_or(|s| s >= 1)),
            ("data_floor", self.data_floor > 0.0 && self.data_floor <= 1.0),
        ];
        match positive.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(Error::InvalidArgument(format!("invalid fill setting '{name}'"))),
            None => Ok(()),
        }
    }

    fn match_params(&self, voxel_edge: f64, cloud_len: usize) -> MatchParams {
        MatchParams {
            base_n: self.base_n(),
            threshold_factor: self.threshold_factor,
            max_n: self.max_n,
            stride: self.stride.unwrap_or_else(|| default_stride(cloud_len)),
            icp: IcpParams {
                max_iterations: self.icp_iterations,
                tolerance: self.icp_tolerance * voxel_edge,
                patience: self.icp_patience,
                restarts: self.icp_restarts,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The last template cube contained the whole fill front.
    TemplateCoversFront,
    /// No source point borders a hole voxel.
    FrontEmpty,
    MaxIterations,
    /// Every front point is masked after failing to match or transfer.
    NoCandidates,
}

impl Termination {
    pub fn is_unfillable(self) -> bool {
        matches!(self, Termination::MaxIterations | Termination::NoCandidates)
    }

    pub fn label(self) -> &'static str {
        match self {
            Termination::TemplateCoversFront => "template_covers_front",
            Termination::FrontEmpty => "front_empty",
            Termination::MaxIterations => "max_iterations",
            Termination::NoCandidates => "no_candidates",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One iteration of the fill loop, as written to the JSON-lines log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub front_size: usize,
    pub template_index: usize,
    pub template_center: [f64; 3],
    pub priority: f64,
    /// `None` when no candidate matched.
    pub source_index: Option<usize>,
    pub n: Option<u32>,
    pub acs_outcome: Option<AdaptiveOutcome>,
    pub ohd_before: Option<f64>,
    pub ohd_after: Option<f64>,
    pub transferred: usize,
    pub duplicates_dropped: usize,
    /// Points dropped because their voxel already held a point.
    pub occupied_dropped: usize,
    pub hole_voxels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillReport {
    pub variant: Variant,
    pub voxel_edge: f64,
    pub initial_hole_voxels: usize,
    pub final_hole_voxels: usize,
    pub points_transferred: usize,
    pub termination: Termination,
    pub iterations: Vec<IterationRecord>,
}

impl FillReport {
    /// Writes one JSON object per iteration.
    pub fn write_jsonl<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        for rec in &self.iterations {
            serde_json::to_writer(&mut out, rec)?;
            writeln!(out).map_err(|source| Error::Io {
                path: "<log>".into(),
                source,
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FillOutcome {
    pub cloud: PointCloud,
    /// Index in `cloud` of the first transferred point.
    pub original_len: usize,
    pub report: FillReport,
}

impl FillOutcome {
    pub fn transferred_points(&self) -> &[Point3] {
        &self.cloud.points()[self.original_len..]
    }
}

/// Candidate points that no template point matched, in candidate order.
pub fn transfer_points(refined: &[Point3], matched: &[bool]) -> Vec<Point3> {
    refined
        .iter()
        .zip(matched)
        .filter_map(|(p, m)| (!m).then_some(*p))
        .collect()
}

/// Fills `hole` in `cloud`, appending transferred points after the originals.
pub fn fill_hole(cloud: &PointCloud, hole: &HoleRegion, config: &FillConfig) -> Result<FillOutcome> {
    config.validate()?;
    let e = hole.voxel_edge;
    let mut grid = VoxelGrid::with_origin(cloud, hole.origin, e)?;
    hole.apply(&mut grid);
    let initial_hole = grid.hole_count();
    let max_iterations = config.max_iterations.unwrap_or(10 * initial_hole);
    let base_n = config.base_n();

    let mut cloud = cloud.clone();
    let original_len = cloud.len();
    let mut cache = PriorityCache::new(PriorityParams {
        n: base_n,
        voxel_edge: e,
        data_floor: config.data_floor,
    });
    // front point -> first iteration at which it may be picked again
    let mut masked: HashMap<usize, usize> = HashMap::new();
    let mut records = Vec::new();

    let termination = loop {
        let iteration = records.len();
        if iteration >= max_iterations {
            break Termination::MaxIterations;
        }
        let mut front = compute_fill_front(&grid, &cloud);
        if front.is_empty() {
            break Termination::FrontEmpty;
        }
        cache.fill(&mut front, &cloud);
        masked.retain(|_, until| *until > iteration);
        let blocked: HashSet<usize> = masked.keys().copied().collect();
        let Some(slot) = front.argmax_unmasked(&blocked) else {
            break Termination::NoCandidates;
        };
        let p_index = front.points[slot];
        let p_hat = cloud.points()[p_index];
        let mut record = IterationRecord {
            iteration,
            front_size: front.len(),
            template_index: p_index,
            template_center: [p_hat.x, p_hat.y, p_hat.z],
            priority: front.priorities[slot],
            source_index: None,
            n: None,
            acs_outcome: None,
            ohd_before: None,
            ohd_after: None,
            transferred: 0,
            duplicates_dropped: 0,
            occupied_dropped: 0,
            hole_voxels: grid.hole_count(),
        };

        let params = config.match_params(e, cloud.len());
        let matched = if config.variant.adaptive() {
            match_adaptive(&cloud, &grid, &p_hat, &params)
        } else {
            match_fixed(&cloud, &grid, &p_hat, &params)
        };
        let found = match matched {
            Ok(m) => m,
            Err(Error::NoCandidates) => {
                debug!("iteration {iteration}: no candidate for point {p_index}");
                masked.insert(p_index, iteration + 1 + front.len());
                records.push(record);
                continue;
            }
            Err(err) => return Err(err),
        };

        let n = found.n;
        let alignment = found.candidate.alignment;
        let template = extract_cube(&cloud, p_hat, n, e);
        let source = extract_cube(&cloud, cloud.points()[found.candidate.center_index], n, e);
        let aligned = alignment.apply_all(&source.points);
        record.source_index = Some(found.candidate.center_index);
        record.n = Some(n);
        record.acs_outcome = config.variant.adaptive().then_some(found.outcome);
        record.ohd_before = ohd(&template.points, &aligned).ok();

        let refined = if config.variant.refines() {
            refine(&template.points, &aligned, &p_hat, config.lambda, config.mu)?.points
        } else {
            aligned
        };
        record.ohd_after = ohd(&template.points, &refined).ok();

        let pairs = match_points(&template.points, &refined);
        let candidates = transfer_points(&refined, &pairs.matched);
        let (mut fresh, dropped) = drop_duplicates(&cloud, candidates);
        record.duplicates_dropped = dropped;
        if config.one_point_per_voxel {
            let before = fresh.len();
            fresh = keep_free_voxels(&grid, fresh);
            record.occupied_dropped = before - fresh.len();
        }
        record.transferred = fresh.len();

        let covers_front = front.points.iter().all(|&i| template.contains(&cloud.points()[i]));

        if fresh.is_empty() {
            masked.insert(p_index, iteration + 1 + front.len());
            record.hole_voxels = grid.hole_count();
            records.push(record);
            continue;
        }

        for p in &fresh {
            grid.add_point(p);
        }
        // The template region now counts as filled.
        let (min, max) = cube_bounds(&p_hat, n, e);
        let (lo, hi) = grid.voxel_range(&min, &max);
        for v in grid.holes_in(lo, hi) {
            grid.clear_hole(v);
        }
        cloud = cloud.extended(&fresh)?;
        cache.invalidate(&cloud, &fresh);
        record.hole_voxels = grid.hole_count();
        debug!(
            "iteration {iteration}: p={p_index} q={} n={n} moved {} points, {} hole voxels left",
            found.candidate.center_index,
            fresh.len(),
            grid.hole_count()
        );
        records.push(record);

        if covers_front {
            break Termination::TemplateCoversFront;
        }
    };

    info!(
        "{}: {} iterations, {} points transferred, stopped: {termination}",
        config.variant,
        records.len(),
        cloud.len() - original_len
    );
    Ok(FillOutcome {
        report: FillReport {
            variant: config.variant,
            voxel_edge: e,
            initial_hole_voxels: initial_hole,
            final_hole_voxels: grid.hole_count(),
            points_transferred: cloud.len() - original_len,
            termination,
            iterations: records,
        },
        cloud,
        original_len,
    })
}

/// Drops points that coincide with the cloud or with each other.
fn drop_duplicates(cloud: &PointCloud, points: Vec<Point3>) -> (Vec<Point3>, usize) {
    let before = points.len();
    let mut seen: HashSet<[u64; 3]> = HashSet::new();
    let kept: Vec<Point3> = points
        .into_iter()
        .filter(|p| {
            cloud.nearest(p).dist2 > 0.0 && seen.insert([p.x.to_bits(), p.y.to_bits(), p.z.to_bits()])
        })
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

/// Drops points whose voxel already holds a point, including earlier points
/// of the same batch.
fn keep_free_voxels(grid: &VoxelGrid, points: Vec<Point3>) -> Vec<Point3> {
    let mut taken = HashSet::new();
    points
        .into_iter()
        .filter(|p| {
            let v = grid.voxel_of(p);
            grid.points_in(v) == 0 && taken.insert(v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_parsing() {
        assert_eq!("base".parse::<Variant>().unwrap(), Variant::Base);
        assert_eq!("BASE+ACS".parse::<Variant>().unwrap(), Variant::BaseAcs);
        assert_eq!("base_acs_nrt".parse::<Variant>().unwrap(), Variant::BaseAcsNrt);
        assert!("fancy".parse::<Variant>().is_err());
        assert_eq!(Variant::Base.default_base_n(), 10);
        assert_eq!(Variant::BaseNrt.default_base_n(), 10);
        assert_eq!(Variant::BaseAcs.default_base_n(), 5);
    }

    #[test]
    fn transfer_is_set_difference() {
        let pts: Vec<Point3> = (0..10).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let mut matched = vec![false; 10];
        for i in [1, 4, 5, 8] {
            matched[i] = true;
        }
        let moved = transfer_points(&pts, &matched);
        assert_eq!(moved.len(), 6);
        assert_eq!(moved[0], pts[0]);
        assert_eq!(moved[2], pts[3]);
        assert!(transfer_points(&pts, &[true; 10]).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(FillConfig::default().validate().is_ok());
        let bad = FillConfig {
            mu: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let json = r#"{"variant":"base_nrt","lambda":2.0}"#;
        let cfg: FillConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.variant, Variant::BaseNrt);
        assert_eq!(cfg.lambda, 2.0);
        assert_eq!(cfg.max_n, 15);
    }

    #[test]
    fn duplicates_are_dropped() {
        let cloud = PointCloud::new(vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)]).unwrap();
        let (kept, dropped) = drop_duplicates(
            &cloud,
            vec![Point3::origin(), Point3::new(0.5, 0.0, 0.0), Point3::new(0.5, 0.0, 0.0)],
        );
        assert_eq!(kept, vec![Point3::new(0.5, 0.0, 0.0)]);
        assert_eq!(dropped, 2);
    }

    #[test]
    fn occupied_voxels_are_skipped() {
        let cloud = PointCloud::new(vec![Point3::new(0.5, 0.5, 0.5), Point3::new(3.5, 0.5, 0.5)]).unwrap();
        let grid = VoxelGrid::with_origin(&cloud, Point3::origin(), 1.0).unwrap();
        let kept = keep_free_voxels(
            &grid,
            vec![Point3::new(0.2, 0.2, 0.2), Point3::new(1.5, 0.5, 0.5), Point3::new(1.7, 0.2, 0.9), Point3::new(2.5, 0.5, 0.5)],
        );
        assert_eq!(kept, vec![Point3::new(1.5, 0.5, 0.5), Point3::new(2.5, 0.5, 0.5)]);
    }
}
