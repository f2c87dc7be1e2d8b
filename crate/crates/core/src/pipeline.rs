//! Mask post-processing: binarization, temporal accumulation, depth gating,
//! inverse-depth weighting and the column histogram.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::camera::{save_unit_grid, FramePair};
use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};

/// Which histogram the guidance stage consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Depth-gated binary mask, smoothed, global minimum.
    #[serde(rename = "segmin", alias = "SegMin")]
    SegMin,
    /// As `SegMin` with inverse-depth weighting before the column sum.
    #[serde(rename = "segmind", alias = "SegMinD")]
    SegMinD,
    /// Baseline: widest run of vegetation-free columns.
    #[serde(rename = "segzeros", alias = "SegZeros")]
    SegZeros,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::SegMin, Variant::SegMinD, Variant::SegZeros];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SegMin => "segmin",
            Variant::SegMinD => "segmind",
            Variant::SegZeros => "segzeros",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid("variant", format!("unknown variant {s:?}")))
    }
}

pub const DEFAULT_HISTORY: usize = 3;
pub const DEFAULT_SMOOTHING_WINDOW: usize = 5;
pub const DEFAULT_CONFIDENCE: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub history_n: usize,
    pub confidence_threshold: f64,
    /// Gate distance in metres. Has no default: every preset needs its own.
    pub depth_threshold: f64,
    pub smoothing_window: usize,
    pub variant: Variant,
}

impl PipelineConfig {
    pub fn new(variant: Variant, depth_threshold: f64) -> Self {
        Self {
            history_n: DEFAULT_HISTORY,
            confidence_threshold: DEFAULT_CONFIDENCE,
            depth_threshold,
            smoothing_window: DEFAULT_SMOOTHING_WINDOW,
            variant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.history_n == 0 {
            return Err(Error::invalid("history_n", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::invalid("confidence_threshold", "must lie in [0, 1]"));
        }
        if !(self.depth_threshold.is_finite() && self.depth_threshold > 0.0) {
            return Err(Error::invalid("depth_threshold", "must be positive"));
        }
        if self.smoothing_window == 0 || self.smoothing_window.is_multiple_of(2) {
            return Err(Error::invalid("smoothing_window", "must be odd and at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnHistogram {
    pub values: Vec<f64>,
    pub variant: Variant,
}

impl ColumnHistogram {
    pub fn new(values: Vec<f64>, variant: Variant) -> Self {
        Self { values, variant }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Ring buffer of the most recent binarized masks.
#[derive(Debug, Clone)]
pub struct MaskHistory {
    capacity: usize,
    masks: VecDeque<Mask>,
}

impl MaskHistory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("history_n", "must be at least 1"));
        }
        Ok(Self {
            capacity,
            masks: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn clear(&mut self) {
        self.masks.clear();
    }
}

pub fn binarize(frame: &FramePair, confidence_threshold: f64) -> Mask {
    frame.soft_mask.map(|&c| c >= confidence_threshold)
}

/// Pushes `mask` into the history and returns the OR of everything buffered.
pub fn accumulate(history: &mut MaskHistory, mask: Mask) -> Result<Mask> {
    if let Some(first) = history.masks.front() {
        first.check_shape(&mask)?;
    }
    if history.masks.len() == history.capacity {
        history.masks.pop_front();
    }
    history.masks.push_back(mask);
    let mut out = history.masks.back().expect("just pushed").clone();
    for m in history.masks.iter().rev().skip(1) {
        for (o, &v) in out.as_mut_slice().iter_mut().zip(m.as_slice()) {
            *o |= v;
        }
    }
    Ok(out)
}

/// Keeps mask pixels whose depth is at most `d_th`. Depths at or beyond
/// `no_return` never pass.
pub fn depth_gate(mask: &Mask, depth: &Grid<f64>, d_th: f64, no_return: f64) -> Result<Mask> {
    mask.check_shape(depth)?;
    let data = mask
        .as_slice()
        .iter()
        .zip(depth.as_slice())
        .map(|(&m, &d)| m && d < no_return && d <= d_th)
        .collect();
    Grid::from_vec(mask.width(), mask.height(), data)
}

pub fn weight_inverse_depth(gated: &Mask, depth: &Grid<f64>, d_th: f64) -> Result<Grid<f64>> {
    gated.check_shape(depth)?;
    let data = gated
        .as_slice()
        .iter()
        .zip(depth.as_slice())
        .map(|(&m, &d)| if m { (1.0 - d / d_th).clamp(0.0, 1.0) } else { 0.0 })
        .collect();
    Grid::from_vec(gated.width(), gated.height(), data)
}

/// Cell types that can be summed into a histogram.
pub trait HistogramCell {
    fn weight(&self) -> f64;
}

impl HistogramCell for bool {
    fn weight(&self) -> f64 {
        if *self { 1.0 } else { 0.0 }
    }
}

impl HistogramCell for f64 {
    fn weight(&self) -> f64 {
        *self
    }
}

pub fn column_histogram<T: HistogramCell>(grid: &Grid<T>, variant: Variant) -> ColumnHistogram {
    let mut values = vec![0.0; grid.width()];
    for row in grid.rows() {
        for (v, cell) in values.iter_mut().zip(row) {
            *v += cell.weight();
        }
    }
    ColumnHistogram::new(values, variant)
}

/// Centered moving average; the window is truncated at the borders.
pub fn smooth(hist: &ColumnHistogram, n: usize) -> Result<ColumnHistogram> {
    let w = hist.len();
    if n == 0 || n.is_multiple_of(2) || n > w {
        return Err(Error::invalid(
            "smoothing_window",
            format!("{n} is not an odd width in 1..={w}"),
        ));
    }
    let half = n / 2;
    let mut prefix = Vec::with_capacity(w + 1);
    prefix.push(0.0);
    for v in &hist.values {
        prefix.push(prefix.last().unwrap() + v);
    }
    let values = (0..w)
        .map(|j| {
            let lo = j.saturating_sub(half);
            let hi = (j + half + 1).min(w);
            let mean = (prefix[hi] - prefix[lo]) / (hi - lo) as f64;
            // Prefix differences can dip a hair below zero.
            mean.max(0.0)
        })
        .collect();
    Ok(ColumnHistogram::new(values, hist.variant))
}

/// Intermediate products of one pipeline step.
#[derive(Debug, Clone)]
pub struct Stages {
    pub cumulative: Mask,
    pub gated: Mask,
    pub weighted: Option<Grid<f64>>,
    pub raw: ColumnHistogram,
    pub smoothed: Option<ColumnHistogram>,
}

impl Stages {
    /// The histogram guidance should read.
    pub fn histogram(&self) -> &ColumnHistogram {
        self.smoothed.as_ref().unwrap_or(&self.raw)
    }

    /// Writes `<prefix>_cum.pgm`, `_gated.pgm`, `_weighted.pgm` (SegMinD)
    /// and `_hist.csv` into `dir`.
    pub fn write_debug(&self, dir: &Path, prefix: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        let as_unit = |m: &Mask| m.map(|&b| if b { 1.0 } else { 0.0 });
        save_unit_grid(&as_unit(&self.cumulative), &dir.join(format!("{prefix}_cum.pgm")))?;
        save_unit_grid(&as_unit(&self.gated), &dir.join(format!("{prefix}_gated.pgm")))?;
        if let Some(w) = &self.weighted {
            save_unit_grid(w, &dir.join(format!("{prefix}_weighted.pgm")))?;
        }
        let mut csv = std::io::BufWriter::new(fs::File::create(dir.join(format!("{prefix}_hist.csv")))?);
        writeln!(csv, "column,raw,smoothed")?;
        for (j, raw) in self.raw.values.iter().enumerate() {
            let s = self.smoothed.as_ref().map_or(*raw, |h| h.values[j]);
            writeln!(csv, "{j},{raw},{s}")?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// A configured pipeline with its own mask history.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    history: MaskHistory,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            history: MaskHistory::new(config.history_n)?,
            config,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn history(&self) -> &MaskHistory {
        &self.history
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }

    pub fn process(&mut self, frame: &FramePair) -> Result<Stages> {
        let cfg = self.config;
        let cumulative = accumulate(&mut self.history, binarize(frame, cfg.confidence_threshold))?;
        let gated = depth_gate(&cumulative, &frame.depth, cfg.depth_threshold, frame.max_range)?;
        let (weighted, raw) = match cfg.variant {
            Variant::SegMinD => {
                let w = weight_inverse_depth(&gated, &frame.depth, cfg.depth_threshold)?;
                let raw = column_histogram(&w, cfg.variant);
                (Some(w), raw)
            }
            _ => (None, column_histogram(&gated, cfg.variant)),
        };
        let smoothed = match cfg.variant {
            Variant::SegZeros => None,
            _ => Some(smooth(&raw, cfg.smoothing_window)?),
        };
        Ok(Stages {
            cumulative,
            gated,
            weighted,
            raw,
            smoothed,
        })
    }
}
