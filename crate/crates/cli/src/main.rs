use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cloudfill_core::holes::{box_region, scoring_region};
use cloudfill_core::{
    calibrate_voxel_size, fill_hole, nshd, nshd_local, punch_hole, random_hole, read_cloud, run_bench, write_cloud, Aabb,
    BenchPlan, EvalPair, FillConfig, HoleSpec, Point3, PointCloud, Shape, Variant, VoxelGrid,
};
use log::info;

#[derive(Parser)]
#[command(name = "cloudfill", version, about = "Fill holes in 3D point clouds by exemplar transfer")]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill a hole and write the completed cloud.
    Fill(FillArgs),
    /// Remove the points inside a box.
    Punch(PunchArgs),
    /// Run a benchmark plan and write the CSV report.
    Bench(BenchArgs),
    /// Normalised symmetric Hausdorff distance between two clouds.
    Nshd(NshdArgs),
    /// Print the calibrated voxel edge of a cloud.
    Calibrate { cloud: PathBuf },
    /// Write a synthetic test cloud.
    Synth(SynthArgs),
}

#[derive(Args)]
struct FillArgs {
    cloud: PathBuf,
    /// Hole spec JSON file.
    #[arg(long)]
    hole: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    /// Per-iteration JSON-lines log.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Voxel edge; calibrated from the input cloud when absent.
    #[arg(long)]
    voxel_edge: Option<f64>,
    #[command(flatten)]
    fill: FillFlags,
}

#[derive(Args, Default)]
struct FillFlags {
    /// Fill settings JSON; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    base_n: Option<u32>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    t_factor: Option<f64>,
    #[arg(long)]
    n_max: Option<u32>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
}

impl FillFlags {
    fn inputs(&self) -> Vec<&Path> {
        self.config.iter().map(PathBuf::as_path).collect()
    }

    fn apply(&self, mut cfg: FillConfig) -> FillConfig {
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        cfg.base_n = self.base_n.or(cfg.base_n);
        cfg.lambda = self.lambda.unwrap_or(cfg.lambda);
        cfg.threshold_factor = self.t_factor.unwrap_or(cfg.threshold_factor);
        cfg.max_n = self.n_max.unwrap_or(cfg.max_n);
        cfg.stride = self.stride.or(cfg.stride);
        cfg.max_iterations = self.max_iter.or(cfg.max_iterations);
        cfg
    }

    fn resolve(&self) -> Result<FillConfig, Failure> {
        let base = match &self.config {
            Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?,
            None => FillConfig::default(),
        };
        Ok(self.apply(base))
    }
}

#[derive(Args)]
struct PunchArgs {
    cloud: PathBuf,
    /// Hole spec JSON file; a random box is drawn when absent.
    #[arg(long)]
    hole: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
    /// Where to write the removed points.
    #[arg(long)]
    removed: Option<PathBuf>,
    /// Where to write the spec of the punched box.
    #[arg(long)]
    spec_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mean random hole extent per axis, as a fraction of the range.
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,
}

#[derive(Args)]
struct BenchArgs {
    plan: PathBuf,
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Overrides the plan seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the plan's variant list.
    #[arg(long)]
    variant: Vec<Variant>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Full,
    Local,
}

#[derive(Args)]
struct NshdArgs {
    reconstructed: PathBuf,
    original: PathBuf,
    #[arg(long, value_enum, default_value_t = Metric::Full)]
    metric: Metric,
    /// Hole spec (box) for the local metric.
    #[arg(long, required_if_eq("metric", "local"))]
    hole: Option<PathBuf>,
    /// Dilation of the hole box in voxel edges for the local metric.
    #[arg(long, default_value_t = 2.0)]
    margin: f64,
}

#[derive(Args)]
struct SynthArgs {
    shape: Shape,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    side: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: String) -> Self {
        Failure { code: 1, message }
    }
}

impl From<cloudfill_core::Error> for Failure {
    fn from(e: cloudfill_core::Error) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

fn read_text(p: &Path) -> Result<String, Failure> {
    fs::read_to_string(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))
}

fn read_spec(p: &Path) -> Result<HoleSpec, Failure> {
    let spec: HoleSpec =
        serde_json::from_str(&read_text(p)?).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
    spec.validate().map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
    Ok(spec)
}

fn spec_box(spec: &HoleSpec, p: &Path) -> Result<Aabb, Failure> {
    match spec {
        HoleSpec::Box { min, max } => Ok(Aabb {
            min: Point3::from(*min),
            max: Point3::from(*max),
        }),
        HoleSpec::Voxels(_) => Err(Failure::usage(format!("{}: a box hole is required here", p.display()))),
    }
}

fn create(p: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(p)
        .map(BufWriter::new)
        .map_err(|source| cloudfill_core::Error::Io { path: p.into(), source }.into())
}

fn load(p: &Path) -> Result<PointCloud, Failure> {
    Ok(PointCloud::new_dedup(read_cloud(p)?)?.0)
}

/// Missing inputs are usage errors.
fn require(paths: &[&Path]) -> Result<(), Failure> {
    match paths.iter().find(|p| !p.is_file()) {
        Some(p) => Err(Failure::usage(format!("input file not found: {}", p.display()))),
        None => Ok(()),
    }
}

fn fill(args: &FillArgs) -> Result<(), Failure> {
    let mut inputs = vec![args.cloud.as_path(), args.hole.as_path()];
    inputs.extend(args.fill.inputs());
    require(&inputs)?;
    let config = args.fill.resolve()?;
    config.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let spec = read_spec(&args.hole)?;
    let cloud = load(&args.cloud)?;
    let e = match args.voxel_edge {
        Some(e) => e,
        None => calibrate_voxel_size(&cloud)?,
    };
    let bbox = *cloud.bbox();
    let grid = VoxelGrid::with_origin(&cloud, bbox.min, e)?;
    let region = match &spec {
        HoleSpec::Box { .. } => box_region(&grid, &spec_box(&spec, &args.hole)?, &bbox)?,
        HoleSpec::Voxels(_) => spec.region(&grid, &bbox)?,
    };
    let out = fill_hole(&cloud, &region, &config)?;
    write_cloud(&args.out, out.cloud.points())?;
    if let Some(log) = &args.log {
        let mut w = create(log)?;
        out.report.write_jsonl(&mut w)?;
        w.flush().map_err(|source| cloudfill_core::Error::Io { path: log.clone(), source })?;
    }
    let r = &out.report;
    println!(
        "{} points transferred in {} iterations, {} of {} hole voxels left, stopped: {}",
        r.points_transferred,
        r.iterations.len(),
        r.final_hole_voxels,
        r.initial_hole_voxels,
        r.termination
    );
    Ok(())
}

fn punch(args: &PunchArgs) -> Result<(), Failure> {
    let mut inputs = vec![args.cloud.as_path()];
    inputs.extend(args.hole.as_deref());
    require(&inputs)?;
    if !(args.fraction > 0.0 && args.fraction < 1.0) {
        return Err(Failure::usage(format!("--fraction must be in (0, 1), got {}", args.fraction)));
    }
    let points = read_cloud(&args.cloud)?;
    let hole = match &args.hole {
        Some(p) => spec_box(&read_spec(p)?, p)?,
        None => {
            let bbox = Aabb::from_points(&points).ok_or(cloudfill_core::Error::EmptySet)?;
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(args.seed);
            random_hole(&bbox, args.fraction, &mut rng)
        }
    };
    let (kept, removed) = punch_hole(&points, &hole);
    write_cloud(&args.out, &kept)?;
    if let Some(p) = &args.removed {
        write_cloud(p, &removed)?;
    }
    if let Some(p) = &args.spec_out {
        let json = serde_json::to_string(&HoleSpec::from_aabb(&hole)).map_err(cloudfill_core::Error::from)?;
        fs::write(p, json + "\n").map_err(|source| cloudfill_core::Error::Io { path: p.clone(), source })?;
    }
    println!("removed {} of {} points", removed.len(), points.len());
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<(), Failure> {
    require(&[&args.plan])?;
    let mut plan: BenchPlan = serde_json::from_str(&read_text(&args.plan)?)
        .map_err(|e| Failure::usage(format!("{}: {e}", args.plan.display())))?;
    if let Some(seed) = args.seed {
        plan.seed = seed;
    }
    if !args.variant.is_empty() {
        plan.variants = args.variant.clone();
    }
    plan.validate().map_err(|e| Failure::usage(e.to_string()))?;
    if let cloudfill_core::CloudSource::Path(p) = &plan.cloud {
        require(&[p])?;
    }
    let report = run_bench(&plan)?;
    match &args.out {
        Some(p) => {
            let mut w = create(p)?;
            report.write_csv(&mut w)?;
            w.flush().map_err(|source| cloudfill_core::Error::Io { path: p.clone(), source })?;
            info!("wrote {}", p.display());
        }
        None => report.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

fn nshd_cmd(args: &NshdArgs) -> Result<(), Failure> {
    let mut inputs = vec![args.reconstructed.as_path(), args.original.as_path()];
    inputs.extend(args.hole.as_deref());
    require(&inputs)?;
    let r = read_cloud(&args.reconstructed)?;
    let o = load(&args.original)?;
    let pair = EvalPair::new(&r, o.points())?;
    let value = match args.metric {
        Metric::Full => nshd(&pair)?,
        Metric::Local => {
            let p = args.hole.as_deref().expect("clap requires --hole for the local metric");
            let hole = spec_box(&read_spec(p)?, p)?;
            let e = calibrate_voxel_size(&o)?;
            nshd_local(&pair, &scoring_region(&hole, e, args.margin))?
        }
    };
    println!("{value}");
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Fill(a) => fill(a),
        Command::Punch(a) => punch(a),
        Command::Bench(a) => bench(a),
        Command::Nshd(a) => nshd_cmd(a),
        Command::Calibrate { cloud } => {
            require(&[cloud])?;
            println!("{}", calibrate_voxel_size(&load(cloud)?)?);
            Ok(())
        }
        Command::Synth(a) => {
            write_cloud(&a.out, &a.shape.generate(a.side, a.seed))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
