//! Seeded benchmark runs: random holes x variants, scored by NSHD.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{Aabb, Point3, PointCloud};
use crate::error::{Error, Result};
use crate::holes::{box_region, punch_hole, random_hole_removing, scoring_region};
use crate::io::read_cloud;
use crate::metrics::{nshd, nshd_local, EvalPair};
use crate::synth::Shape;
use crate::transfer::{fill_hole, FillConfig, Variant};
use crate::voxel::{calibrate_voxel_size, VoxelGrid};

/// Where the benchmark cloud comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CloudSource {
    Path(PathBuf),
    Synthetic { shape: Shape, side: usize, seed: u64 },
}

impl CloudSource {
    pub fn name(&self) -> String {
        match self {
            CloudSource::Path(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
            CloudSource::Synthetic { shape, .. } => shape.name().to_string(),
        }
    }

    pub fn load(&self) -> Result<Vec<Point3>> {
        match self {
            CloudSource::Path(p) => read_cloud(p),
            CloudSource::Synthetic { shape, side, seed } => Ok(shape.generate(*side, *seed)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchPlan {
    pub cloud: CloudSource,
    pub holes: usize,
    /// Mean hole extent per axis as a fraction of the cloud's range.
    pub fraction: f64,
    pub variants: Vec<Variant>,
    pub seed: u64,
    /// Hole boxes are redrawn until they remove at least this fraction of
    /// the points.
    pub min_removed: f64,
    /// Upper bound on redraws per hole.
    pub attempts: usize,
    /// Dilation of the hole box, in voxel edges, for the local metric.
    pub local_margin: f64,
    /// Record wall-clock seconds; when off the column is left empty.
    pub timing: bool,
    /// Fill settings shared by all variants; `fill.variant` is ignored.
    pub fill: FillConfig,
}

impl Default for BenchPlan {
    fn default() -> Self {
        BenchPlan {
            cloud: CloudSource::Synthetic {
                shape: Shape::PlaneWithRidge,
                side: 64,
                seed: 1,
            },
            holes: 15,
            fraction: 0.2,
            variants: Variant::ALL.to_vec(),
            seed: 0,
            min_removed: 0.01,
            attempts: 1000,
            local_margin: 2.0,
            timing: true,
            fill: FillConfig::default(),
        }
    }
}

impl BenchPlan {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("holes", self.holes >= 1),
            ("fraction", self.fraction > 0.0 && self.fraction < 1.0),
            ("variants", !self.variants.is_empty()),
            ("min_removed", (0.0..1.0).contains(&self.min_removed)),
            ("attempts", self.attempts >= 1),
            ("local_margin", self.local_margin >= 0.0),
        ];
        if let Some((name, _)) = checks.iter().find(|(_, ok)| !ok) {
            return Err(Error::InvalidArgument(format!("invalid bench plan setting '{name}'")));
        }
        self.fill.validate()
    }
}

/// One (hole, variant) result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub cloud: String,
    pub variant: Variant,
    pub hole_id: usize,
    pub nshd: f64,
    pub nshd_local: f64,
    pub seconds: Option<f64>,
    pub points_transferred: usize,
    /// Fill termination reason, or `error` when the fill failed.
    pub termination: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub nshd: MeanStd,
    pub nshd_local: MeanStd,
    pub seconds: Option<MeanStd>,
    pub points_transferred: MeanStd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return MeanStd { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        MeanStd { mean, std }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}±{}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub cloud: String,
    pub voxel_edge: f64,
    pub holes: Vec<Aabb>,
    /// Ordered by hole id, then by the plan's variant order.
    pub rows: Vec<BenchRow>,
    pub summaries: Vec<VariantSummary>,
}

const HEADER: [&str; 8] = [
    "cloud",
    "variant",
    "hole_id",
    "nshd",
    "nshd_local",
    "seconds",
    "points_transferred",
    "termination",
];

impl BenchReport {
    pub fn summary(&self, variant: Variant) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.variant == variant)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.cloud.clone(),
                r.variant.label().to_string(),
                r.hole_id.to_string(),
                r.nshd.to_string(),
                r.nshd_local.to_string(),
                r.seconds.map(|s| s.to_string()).unwrap_or_default(),
                r.points_transferred.to_string(),
                r.termination.clone(),
            ])?;
        }
        for s in &self.summaries {
            w.write_record([
                self.cloud.clone(),
                s.variant.label().to_string(),
                "summary".to_string(),
                s.nshd.to_string(),
                s.nshd_local.to_string(),
                s.seconds.map(|m| m.to_string()).unwrap_or_default(),
                s.points_transferred.to_string(),
                String::new(),
            ])?;
        }
        w.flush().map_err(|source| Error::Io {
            path: "<csv>".into(),
            source,
        })
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Hole box for `hole_id`: its own ChaCha stream under the plan seed, so the
/// boxes do not depend on the variant list or on other holes.
pub fn hole_for(plan: &BenchPlan, points: &[Point3], bbox: &Aabb, hole_id: usize) -> Result<Aabb> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    rng.set_stream(hole_id as u64);
    let min_removed = ((plan.min_removed * points.len() as f64).ceil() as usize).max(1);
    random_hole_removing(points, bbox, plan.fraction, min_removed, plan.attempts, &mut rng)
}

struct Prepared {
    punched: PointCloud,
    hole: Aabb,
}

pub fn run_bench(plan: &BenchPlan) -> Result<BenchReport> {
    plan.validate()?;
    let name = plan.cloud.name();
    let (original, dropped) = PointCloud::new_dedup(plan.cloud.load()?)?;
    if dropped > 0 {
        warn!("{name}: {dropped} duplicate points dropped");
    }
    let e = calibrate_voxel_size(&original)?;
    let bbox = *original.bbox();
    let volume = bbox.volume();
    info!("{name}: {} points, voxel edge {e}", original.len());

    let prepared: Vec<Prepared> = (0..plan.holes)
        .map(|id| {
            let hole = hole_for(plan, original.points(), &bbox, id)?;
            let (kept, _) = punch_hole(original.points(), &hole);
            Ok(Prepared {
                punched: PointCloud::new(kept)?,
                hole,
            })
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, Variant)> = (0..plan.holes)
        .flat_map(|h| plan.variants.iter().map(move |v| (h, *v)))
        .collect();
    let rows: Vec<BenchRow> = jobs
        .par_iter()
        .map(|&(hole_id, variant)| {
            let prep = &prepared[hole_id];
            let config = FillConfig {
                variant,
                ..plan.fill.clone()
            };
            let start = Instant::now();
            let filled = VoxelGrid::with_origin(&prep.punched, bbox.min, e)
                .and_then(|grid| box_region(&grid, &prep.hole, &bbox))
                .and_then(|region| fill_hole(&prep.punched, &region, &config));
            let seconds = start.elapsed().as_secs_f64();
            let (points, transferred, termination) = match &filled {
                Ok(out) => (
                    out.cloud.points(),
                    out.report.points_transferred,
                    out.report.termination.label().to_string(),
                ),
                Err(err) => {
                    warn!("{name} hole {hole_id} {variant}: {err}");
                    (prep.punched.points(), 0, "error".to_string())
                }
            };
            let pair = EvalPair {
                reconstructed: points,
                original: original.points(),
                volume,
            };
            let local = scoring_region(&prep.hole, e, plan.local_margin);
            Ok(BenchRow {
                cloud: name.clone(),
                variant,
                hole_id,
                nshd: nshd(&pair)?,
                nshd_local: nshd_local(&pair, &local)?,
                seconds: plan.timing.then_some(seconds),
                points_transferred: transferred,
                termination,
            })
        })
        .collect::<Result<_>>()?;

    let summaries = plan
        .variants
        .iter()
        .map(|&variant| {
            let mine: Vec<&BenchRow> = rows.iter().filter(|r| r.variant == variant).collect();
            let column = |f: fn(&BenchRow) -> f64| MeanStd::of(&mine.iter().map(|r| f(r)).collect::<Vec<_>>());
            VariantSummary {
                variant,
                nshd: column(|r| r.nshd),
                nshd_local: column(|r| r.nshd_local),
                seconds: plan.timing.then(|| column(|r| r.seconds.unwrap_or(0.0))),
                points_transferred: column(|r| r.points_transferred as f64),
            }
        })
        .collect();

    Ok(BenchReport {
        cloud: name,
        voxel_edge: e,
        holes: prepared.iter().map(|p| p.hole).collect(),
        rows,
        summaries,
    })
}
