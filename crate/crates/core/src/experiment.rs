//! Experiment configuration files and batch runners.
//!
//! A configuration is a TOML document with these sections (all optional
//! except `[world].preset` and `[pipeline].depth_threshold`):
//!
//! ```toml
//! [world]        # preset plus optional overrides of WorldParams fields
//! preset = "vineyard"
//! [pipeline]     # PipelineConfig
//! variant = "segmin"
//! depth_threshold = 5.0
//! [controller]   # ControllerConfig
//! [camera]       # CameraModel
//! [corruption]   # CorruptionModel; absent means no corruption
//! [rates]        # RateConfig
//! [episode]      # EpisodeSettings
//! [metrics]      # gamma_mode
//! [experiment]   # seed, runs or seeds, output_dir
//! ```

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, CorruptionModel};
use crate::controller::{ControllerConfig, OmegaLaw};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, summarize_with, AggregateReport, GammaMode, HeadingReference, MetricsReport};
use crate::pipeline::{
    PipelineConfig, Variant, DEFAULT_CONFIDENCE, DEFAULT_HISTORY, DEFAULT_SMOOTHING_WINDOW,
};
use crate::sim::{run_episode, EpisodeLog, EpisodeSettings, EpisodeSpec, RateConfig};
use crate::world::{CoverSpec, CropPreset, CropRowWorld, PlantSpec, RowLayout, TerrainModel, WorldParams};

/// Gate distance used by each preset's shipped config.
pub fn preset_depth_threshold(preset: CropPreset) -> f64 {
    match preset {
        CropPreset::Vineyard | CropPreset::CurvedVineyard => 5.0,
        CropPreset::Pergola | CropPreset::Pear => 8.0,
        CropPreset::HighTrees => 10.0,
    }
}

/// Closed-loop steering gain used by experiment configs unless overridden.
///
/// The controller's own default (0.01) reproduces the reference steering
/// values but is far too weak to hold a lane in the simulated kinematics.
pub const DEFAULT_EXPERIMENT_K_OMEGA: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSection {
    pub preset: CropPreset,
    pub row_distance: Option<f64>,
    pub plant_distance: Option<f64>,
    pub row_count: Option<usize>,
    pub lane: Option<usize>,
    pub track_length: Option<f64>,
    pub layout: Option<RowLayout>,
    pub plant: Option<PlantSpec>,
    pub cover: Option<CoverSpec>,
    pub terrain: Option<TerrainModel>,
}

impl WorldSection {
    pub fn params(&self) -> WorldParams {
        let base = WorldParams::preset(self.preset);
        WorldParams {
            preset: self.preset,
            row_distance: self.row_distance.unwrap_or(base.row_distance),
            plant_distance: self.plant_distance.unwrap_or(base.plant_distance),
            row_count: self.row_count.unwrap_or(base.row_count),
            lane: self.lane.unwrap_or(base.lane),
            track_length: self.track_length.unwrap_or(base.track_length),
            layout: self.layout.unwrap_or(base.layout),
            plant: self.plant.unwrap_or(base.plant),
            cover: self.cover.or(base.cover),
            terrain: self.terrain.unwrap_or(base.terrain),
        }
    }

    fn resolved(&self) -> Self {
        let p = self.params();
        Self {
            preset: p.preset,
            row_distance: Some(p.row_distance),
            plant_distance: Some(p.plant_distance),
            row_count: Some(p.row_count),
            lane: Some(p.lane),
            track_length: Some(p.track_length),
            layout: Some(p.layout),
            plant: Some(p.plant),
            cover: p.cover,
            terrain: Some(p.terrain),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    #[serde(default = "default_variant")]
    pub variant: Variant,
    pub depth_threshold: f64,
    #[serde(default = "default_confidence")]
    pub confidence_threshold: f64,
    #[serde(default = "default_history")]
    pub history_n: usize,
    #[serde(default = "default_window")]
    pub smoothing_window: usize,
}

fn default_variant() -> Variant {
    Variant::SegMin
}
fn default_confidence() -> f64 {
    DEFAULT_CONFIDENCE
}
fn default_history() -> usize {
    DEFAULT_HISTORY
}
fn default_window() -> usize {
    DEFAULT_SMOOTHING_WINDOW
}

impl PipelineSection {
    pub fn config(&self) -> PipelineConfig {
        PipelineConfig {
            history_n: self.history_n,
            confidence_threshold: self.confidence_threshold,
            depth_threshold: self.depth_threshold,
            smoothing_window: self.smoothing_window,
            variant: self.variant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub gamma_mode: GammaMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Root seed; run `i` uses `seed + i` unless `seeds` is given.
    pub seed: u64,
    pub runs: usize,
    pub seeds: Option<Vec<u64>>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seed: 1,
            runs: 1,
            seeds: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn default_experiment_controller() -> ControllerConfig {
    ControllerConfig {
        k_omega: DEFAULT_EXPERIMENT_K_OMEGA,
        ..ControllerConfig::default()
    }
}

// A partial `[controller]` table keeps the experiment gain for `k_omega`.
fn deserialize_experiment_controller<'de, D>(d: D) -> std::result::Result<ControllerConfig, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let mut table = toml::Table::deserialize(d)?;
    table
        .entry("k_omega")
        .or_insert(toml::Value::Float(DEFAULT_EXPERIMENT_K_OMEGA));
    ControllerConfig::deserialize(table).map_err(serde::de::Error::custom)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldSection,
    pub pipeline: PipelineSection,
    #[serde(
        default = "default_experiment_controller",
        deserialize_with = "deserialize_experiment_controller"
    )]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub camera: CameraModel,
    pub corruption: Option<CorruptionModel>,
    #[serde(default)]
    pub rates: RateConfig,
    #[serde(default)]
    pub episode: EpisodeSettings,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

impl ExperimentConfig {
    /// A config for `preset` with its shipped gate distance.
    pub fn for_preset(preset: CropPreset, variant: Variant) -> Self {
        Self {
            world: WorldSection {
                preset,
                row_distance: None,
                plant_distance: None,
                row_count: None,
                lane: None,
                track_length: None,
                layout: None,
                plant: None,
                cover: None,
                terrain: None,
            },
            pipeline: PipelineSection {
                variant,
                depth_threshold: preset_depth_threshold(preset),
                confidence_threshold: DEFAULT_CONFIDENCE,
                history_n: DEFAULT_HISTORY,
                smoothing_window: DEFAULT_SMOOTHING_WINDOW,
            },
            controller: default_experiment_controller(),
            camera: CameraModel::default(),
            corruption: None,
            rates: RateConfig::default(),
            episode: EpisodeSettings::default(),
            metrics: MetricsSection::default(),
            experiment: ExperimentSection::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_owned()));
        }
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let params = self.world.params();
        params.validate()?;
        self.pipeline.config().validate()?;
        self.controller.validate()?;
        self.camera.validate()?;
        if let Some(c) = &self.corruption {
            c.validate()?;
        }
        self.rates.validate()?;
        self.episode.validate()?;
        if self.controller.frame_width != self.camera.width {
            return Err(Error::invalid("controller.frame_width", "must equal camera.width"));
        }
        if self.pipeline.smoothing_window > self.camera.width {
            return Err(Error::invalid("pipeline.smoothing_window", "must not exceed camera.width"));
        }
        if self.seeds().is_empty() {
            return Err(Error::invalid("experiment.runs", "at least one run is required"));
        }
        let needed = self.episode.start_inset + self.episode.run_length;
        if params.track_length < needed {
            return Err(Error::invalid(
                "world.track_length",
                format!("{} m is shorter than start_inset + run_length = {needed} m", params.track_length),
            ));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        match &self.experiment.seeds {
            Some(s) => s.clone(),
            None => (0..self.experiment.runs as u64).map(|i| self.experiment.seed + i).collect(),
        }
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        let mut c = self.clone();
        c.pipeline.variant = variant;
        c
    }

    pub fn with_literal_omega(&self) -> Self {
        let mut c = self.clone();
        c.controller.omega_law = OmegaLaw::LiteralSquare;
        c
    }

    /// Fully resolved single-seed config: running it reproduces the run
    /// with that seed exactly.
    pub fn manifest(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.world = self.world.resolved();
        c.experiment.seeds = Some(vec![seed]);
        c.experiment.seed = seed;
        c.experiment.runs = 1;
        c
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build_world(&self, seed: u64) -> Result<CropRowWorld> {
        self.world.params().build(seed)
    }
}

/// One finished episode with its evaluation.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub log: EpisodeLog,
    pub report: MetricsReport,
}

pub fn run_single(cfg: &ExperimentConfig, seed: u64, debug_dir: Option<PathBuf>) -> Result<RunOutcome> {
    cfg.validate()?;
    let world = cfg.build_world(seed)?;
    let spec = EpisodeSpec {
        world: &world,
        lane: cfg.world.params().lane,
        pipeline: cfg.pipeline.config(),
        controller: cfg.controller,
        camera: cfg.camera,
        corruption: cfg.corruption.unwrap_or_else(CorruptionModel::none),
        rates: cfg.rates,
        settings: cfg.episode,
        seed,
        debug_dir,
    };
    let log = run_episode(&spec)?;
    let centerline = world.ground_truth_centerline(spec.lane)?;
    let report = summarize_with(
        &log,
        &centerline,
        &HeadingReference::Layout(world.layout),
        cfg.metrics.gamma_mode,
    )?;
    Ok(RunOutcome { seed, log, report })
}

/// Runs every seed of `cfg` in parallel; results keep seed order.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Vec<RunOutcome>> {
    cfg.validate()?;
    cfg.seeds().into_par_iter().map(|s| run_single(cfg, s, None)).collect()
}

#[derive(Debug, Clone)]
pub struct ConditionResult {
    pub runs: Vec<RunOutcome>,
    pub summary: AggregateReport,
}

fn condition(cfg: &ExperimentConfig) -> Result<ConditionResult> {
    let runs = run_all(cfg)?;
    let reports: Vec<MetricsReport> = runs.iter().map(|r| r.report.clone()).collect();
    Ok(ConditionResult {
        summary: aggregate(&reports)?,
        runs,
    })
}

pub fn compare(cfg: &ExperimentConfig, variants: &[Variant]) -> Result<Vec<(Variant, ConditionResult)>> {
    if variants.len() < 2 {
        return Err(Error::invalid("variants", "compare needs at least two variants"));
    }
    variants
        .iter()
        .map(|&v| Ok((v, condition(&cfg.with_variant(v))?)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct AblationCell {
    pub depth_threshold: f64,
    pub confidence: f64,
    pub result: ConditionResult,
}

#[derive(Debug, Clone)]
pub struct AblationGrid {
    pub depth_thresholds: Vec<f64>,
    pub confidences: Vec<f64>,
    /// Row-major by confidence, then depth threshold.
    pub cells: Vec<AblationCell>,
}

impl AblationGrid {
    pub fn cell(&self, confidence_idx: usize, depth_idx: usize) -> &AblationCell {
        &self.cells[confidence_idx * self.depth_thresholds.len() + depth_idx]
    }

    /// Index of the cell with the lowest mean MAE.
    pub fn best(&self) -> usize {
        let mut best = 0;
        for (i, c) in self.cells.iter().enumerate() {
            if c.result.summary.mae_m.mean < self.cells[best].result.summary.mae_m.mean {
                best = i;
            }
        }
        best
    }
}

/// Sweeps depth threshold and confidence with corruption enabled (the
/// default model when the config has none).
pub fn ablate(cfg: &ExperimentConfig, depth_thresholds: &[f64], confidences: &[f64]) -> Result<AblationGrid> {
    if depth_thresholds.is_empty() {
        return Err(Error::invalid("depth_thresholds", "must not be empty"));
    }
    if confidences.is_empty() {
        return Err(Error::invalid("confidences", "must not be empty"));
    }
    let mut base = cfg.clone();
    base.corruption.get_or_insert_with(CorruptionModel::default);
    let mut cells = Vec::new();
    for &confidence in confidences {
        for &depth_threshold in depth_thresholds {
            let mut c = base.clone();
            c.pipeline.confidence_threshold = confidence;
            c.pipeline.depth_threshold = depth_threshold;
            cells.push(AblationCell {
                depth_threshold,
                confidence,
                result: condition(&c)?,
            });
        }
    }
    Ok(AblationGrid {
        depth_thresholds: depth_thresholds.to_vec(),
        confidences: confidences.to_vec(),
        cells,
    })
}
