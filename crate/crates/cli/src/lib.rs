//! Command-line front end: runs, comparisons, ablations and debug renders.
//!
//! Exit statuses:
//!
//! | status | meaning |
//! |---|---|
//! | 0 | every episode finished |
//! | 1 | configuration, I/O or runtime error |
//! | 2 | usage error |
//! | 10 | an episode ended in a collision |
//! | 11 | an episode stalled |
//! | 12 | an episode timed out |
//!
//! With several seeds the status reflects the first unfinished episode in
//! seed order.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use furrow::camera::{corrupt_frame, render_frame, render_scene, save_frame_pair, CorruptionModel};
use furrow::experiment::{ablate, compare, run_single, AblationGrid, ExperimentConfig, RunOutcome};
use furrow::guidance::estimate_with_stages;
use furrow::metrics::{aggregate, AggregateReport, GammaMode, MetricsReport};
use furrow::pipeline::{Pipeline, Variant};
use furrow::seed::{self, Stream};
use furrow::sim::{RobotState, Termination};
use furrow::world::Scene;
use rayon::prelude::*;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub fn exit_code(t: Termination) -> i32 {
    match t {
        Termination::Finished => EXIT_OK,
        Termination::Collision => 10,
        Termination::Stalled => 11,
        Termination::Timeout => 12,
    }
}

#[derive(Debug, Parser)]
#[command(name = "furrow", version, about = "Crop-row guidance experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run closed-loop episodes for every configured seed.
    Run(RunArgs),
    /// Run the same configuration with several estimators side by side.
    Compare(CompareArgs),
    /// Sweep depth threshold and confidence with corruption enabled.
    Ablate(AblateArgs),
    /// Dump every pipeline stage for a single pose.
    RenderDebug(RenderDebugArgs),
    /// Combine the metrics of finished run directories.
    Aggregate(AggregateArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Run only this seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides `experiment.output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use the one-signed squared steering law.
    #[arg(long, alias = "literal-eq10")]
    pub literal_square_law: bool,
    /// Heading summary: signed-mean or abs-accumulate.
    #[arg(long)]
    pub gamma_mode: Option<GammaMode>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Override the configured estimator.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Write every inferred frame and its pipeline stages.
    #[arg(long)]
    pub debug_frames: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Estimators to compare (at least two), comma separated.
    #[arg(long = "variant", value_delimiter = ',', default_value = "segmin,segmind,segzeros")]
    pub variants: Vec<Variant>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_delimiter = ',', default_value = "5,8,11")]
    pub depth_thresholds: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.7")]
    pub confidences: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct RenderDebugArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Robot pose; defaults to the episode start pose.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub y: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// Render ground only, without plants.
    #[arg(long)]
    pub empty: bool,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// Run directories, each holding a `metrics.json`.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
}

/// Parses `args` and runs the command, returning the process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Run(a) => cmd_run(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::RenderDebug(a) => cmd_render_debug(&a),
        Command::Aggregate(a) => cmd_aggregate(&a),
    }
}

fn load(common: &CommonArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.experiment.seeds = Some(vec![seed]);
    }
    if common.literal_square_law {
        cfg = cfg.with_literal_omega();
    }
    if let Some(mode) = common.gamma_mode {
        cfg.metrics.gamma_mode = mode;
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.experiment.output_dir.clone());
    cfg.experiment.output_dir = out.clone();
    cfg.validate()?;
    Ok((cfg, out))
}

/// Writes `episode.csv`, `metrics.json`, `metrics.txt` and `manifest.toml`.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, run: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut csv = Vec::new();
    run.log.write_csv(&mut csv)?;
    fs::write(dir.join("episode.csv"), csv)?;
    fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&run.report)? + "\n")?;
    fs::write(dir.join("metrics.txt"), report_text(&run.report))?;
    fs::write(dir.join("manifest.toml"), cfg.manifest(run.seed).to_toml()?)?;
    Ok(())
}

fn report_text(r: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "termination = {}", r.termination);
    for (k, v) in [
        ("clearance_s", r.clearance_s),
        ("mae_m", r.mae_m),
        ("mse_m2", r.mse_m2),
        ("rmse_m", r.rmse_m),
        ("cum_heading_avg_rad", r.cum_heading_avg_rad),
        ("v_avg_mps", r.v_avg_mps),
        ("omega_stddev_radps", r.omega_stddev_radps),
        ("final_cross_track_m", r.final_cross_track_m),
        ("progress_m", r.progress_m),
    ] {
        let _ = writeln!(s, "{k} = {v}");
    }
    let _ = writeln!(s, "samples = {}", r.samples);
    s
}

fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

fn worst_exit(runs: &[RunOutcome]) -> i32 {
    runs.iter()
        .map(|r| exit_code(r.log.termination))
        .find(|&c| c != EXIT_OK)
        .unwrap_or(EXIT_OK)
}

pub fn cmd_run(a: &RunArgs) -> Result<i32> {
    let (mut cfg, out) = load(&a.common)?;
    if let Some(v) = a.variant {
        cfg = cfg.with_variant(v);
    }
    let runs: Vec<RunOutcome> = cfg
        .seeds()
        .into_par_iter()
        .map(|s| {
            let debug = a.debug_frames.then(|| seed_dir(&out, s).join("frames"));
            run_single(&cfg, s, debug)
        })
        .collect::<furrow::Result<_>>()?;
    for run in &runs {
        write_run(&seed_dir(&out, run.seed), &cfg, run)?;
        let r = &run.report;
        println!(
            "seed {:>4}  {:<9}  clearance {:6.2} s  MAE {:.3} m  MSE {:.4} m2  gamma {:+.4}  v {:.3}  omega std {:.4}",
            run.seed, r.termination, r.clearance_s, r.mae_m, r.mse_m2, r.cum_heading_avg_rad, r.v_avg_mps, r.omega_stddev_radps
        );
    }
    if runs.len() > 1 {
        let reports: Vec<MetricsReport> = runs.iter().map(|r| r.report.clone()).collect();
        let agg = aggregate(&reports)?;
        fs::write(out.join("summary.json"), serde_json::to_string_pretty(&agg)? + "\n")?;
        println!("{}", summary_table(&[(cfg.pipeline.variant.to_string(), &agg)]));
    }
    Ok(worst_exit(&runs))
}

/// Side-by-side table, one row per condition.
pub fn summary_table(rows: &[(String, &AggregateReport)]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:>5} {:>16} {:>16} {:>16} {:>18} {:>16} {:>16}",
        "condition", "done", "clearance [s]", "MAE [m]", "MSE [m2]", "cum gamma [rad]", "v_avg [m/s]", "omega std"
    );
    for (name, a) in rows {
        let _ = writeln!(
            s,
            "{:<10} {:>2}/{:<2} {:>16} {:>16} {:>16} {:>18} {:>16} {:>16}",
            name,
            a.finished,
            a.runs,
            format!("{:.2}", a.clearance_s),
            format!("{:.3}", a.mae_m),
            format!("{:.4}", a.mse_m2),
            format!("{:.4}", a.cum_heading_avg_rad),
            format!("{:.3}", a.v_avg_mps),
            format!("{:.4}", a.omega_stddev_radps),
        );
    }
    s
}

pub fn cmd_compare(a: &CompareArgs) -> Result<i32> {
    if a.variants.len() < 2 {
        return Err(UsageError("compare needs at least two variants".into()).into());
    }
    let (cfg, out) = load(&a.common)?;
    let results = compare(&cfg, &a.variants)?;
    let mut rows = Vec::new();
    for (variant, result) in &results {
        let vcfg = cfg.with_variant(*variant);
        for run in &result.runs {
            write_run(&out.join(variant.name()).join(format!("seed_{}", run.seed)), &vcfg, run)?;
        }
        fs::write(
            out.join(variant.name()).join("summary.json"),
            serde_json::to_string_pretty(&result.summary)? + "\n",
        )?;
        rows.push((variant.to_string(), &result.summary));
    }
    let table = summary_table(&rows);
    fs::write(out.join("comparison.txt"), &table)?;
    print!("{table}");
    Ok(EXIT_OK)
}

/// Grid text: one block per metric, confidences as rows.
pub fn ablation_table(grid: &AblationGrid) -> String {
    let mut s = String::new();
    type Metric = fn(&AggregateReport) -> f64;
    let metrics: [(&str, Metric); 4] = [
        ("MAE [m]", |a| a.mae_m.mean),
        ("RMSE [m]", |a| a.rmse_m.mean),
        ("cum gamma [rad]", |a| a.cum_heading_avg_rad.mean),
        ("omega std [rad/s]", |a| a.omega_stddev_radps.mean),
    ];
    let best = grid.best();
    for (name, f) in metrics {
        let _ = write!(s, "{name:<20}");
        for d in &grid.depth_thresholds {
            let _ = write!(s, " {:>10}", format!("d_th {d}"));
        }
        let _ = writeln!(s);
        for (ci, c) in grid.confidences.iter().enumerate() {
            let _ = write!(s, "{:<20}", format!("confidence {c}"));
            for di in 0..grid.depth_thresholds.len() {
                let idx = ci * grid.depth_thresholds.len() + di;
                let mark = if idx == best { "*" } else { " " };
                let _ = write!(s, " {:>9.4}{mark}", f(&grid.cell(ci, di).result.summary));
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s);
    }
    let b = &grid.cells[best];
    let _ = writeln!(s, "best MAE: confidence {} d_th {}", b.confidence, b.depth_threshold);
    s
}

pub fn cmd_ablate(a: &AblateArgs) -> Result<i32> {
    if a.depth_thresholds.is_empty() || a.confidences.is_empty() {
        return Err(UsageError("ablate needs non-empty threshold and confidence lists".into()).into());
    }
    let (cfg, out) = load(&a.common)?;
    let grid = ablate(&cfg, &a.depth_thresholds, &a.confidences)?;
    fs::create_dir_all(&out)?;
    let mut csv = String::from("confidence,depth_threshold,runs,finished,mae_m,rmse_m,cum_heading_avg_rad,omega_stddev_radps\n");
    for c in &grid.cells {
        let s = &c.result.summary;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            c.confidence, c.depth_threshold, s.runs, s.finished, s.mae_m.mean, s.rmse_m.mean, s.cum_heading_avg_rad.mean, s.omega_stddev_radps.mean
        );
    }
    fs::write(out.join("ablation.csv"), csv)?;
    let table = ablation_table(&grid);
    fs::write(out.join("ablation.txt"), &table)?;
    print!("{table}");
    Ok(EXIT_OK)
}

pub fn cmd_render_debug(a: &RenderDebugArgs) -> Result<i32> {
    let (mut cfg, out) = load(&a.common)?;
    if let Some(v) = a.variant {
        cfg = cfg.with_variant(v);
    }
    let seed = cfg.seeds()[0];
    let world = cfg.build_world(seed)?;
    let spec_start = {
        let mut spec = furrow::sim::EpisodeSpec::new(&world, cfg.pipeline.config(), seed);
        spec.lane = cfg.world.params().lane;
        spec.settings = cfg.episode;
        spec.start_pose()?
    };
    let pose = RobotState::new(
        a.x.unwrap_or(spec_start.x),
        a.y.unwrap_or(spec_start.y),
        a.theta.unwrap_or(spec_start.theta),
    );
    let frame = if a.empty {
        let scene = Scene {
            primitives: Vec::new(),
            ground: Some(world.ground),
        };
        render_scene(&scene, &cfg.camera.pose(&pose, &world.ground), &cfg.camera)
    } else {
        render_frame(&world, &pose, &cfg.camera)
    };
    let model = cfg
        .corruption
        .unwrap_or_else(CorruptionModel::none)
        .with_seed(seed::derive(seed, Stream::Corruption, 0));
    let frame = corrupt_frame(&frame, &model);
    let mut pipeline = Pipeline::new(cfg.pipeline.config())?;
    let (est, stages) = estimate_with_stages(&frame, &mut pipeline)?;
    fs::create_dir_all(&out)?;
    save_frame_pair(&frame, &out.join("mask.pgm"), &out.join("depth.pgm"))?;
    stages.write_debug(&out, "stage")?;
    let mut marker = String::new();
    let _ = writeln!(marker, "variant = {}", cfg.pipeline.variant);
    let _ = writeln!(marker, "pose = {} {} {}", pose.x, pose.y, pose.theta);
    let _ = writeln!(marker, "status = {:?}", est.status);
    let _ = writeln!(marker, "center_column = {}", est.center_column);
    let _ = writeln!(marker, "tie_count = {}", est.tie_count);
    fs::write(out.join("estimate.txt"), &marker)?;
    fs::write(out.join("manifest.toml"), cfg.manifest(seed).to_toml()?)?;
    print!("{marker}");
    Ok(EXIT_OK)
}

pub fn cmd_aggregate(a: &AggregateArgs) -> Result<i32> {
    let mut reports = Vec::new();
    for dir in &a.runs {
        let path = dir.join("metrics.json");
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let report: MetricsReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        reports.push(report);
    }
    if reports.is_empty() {
        bail!("no runs given");
    }
    let agg = aggregate(&reports)?;
    print!("{}", summary_table(&[("runs".to_string(), &agg)]));
    Ok(EXIT_OK)
}
