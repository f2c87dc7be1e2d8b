//! Row-center extraction from a column histogram.

use serde::{Deserialize, Serialize};

use crate::camera::FramePair;
use crate::error::Result;
use crate::pipeline::{ColumnHistogram, Pipeline, Stages, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    NoPassage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowCenterEstimate {
    /// Fractional column index of the row center.
    pub center_column: f64,
    pub status: Status,
    /// Columns sharing the global minimum (SegMin/SegMinD) or zero-run width
    /// (SegZeros).
    pub tie_count: usize,
}

impl RowCenterEstimate {
    pub fn no_passage() -> Self {
        Self {
            center_column: f64::NAN,
            status: Status::NoPassage,
            tie_count: 0,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

/// Mean of every column attaining the global minimum.
pub fn find_min_center(hist: &ColumnHistogram) -> RowCenterEstimate {
    assert!(!hist.is_empty(), "histogram must be non-empty");
    let min = hist.min();
    let (sum, count) = hist
        .values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == min)
        .fold((0usize, 0usize), |(s, c), (j, _)| (s + j, c + 1));
    RowCenterEstimate {
        center_column: sum as f64 / count as f64,
        status: Status::Ok,
        tie_count: count,
    }
}

/// Midpoint of the widest run of zero columns. Equal widths go to the run
/// closest to the frame center, then to the lowest index.
pub fn find_zero_run_center(hist: &ColumnHistogram) -> RowCenterEstimate {
    assert!(!hist.is_empty(), "histogram must be non-empty");
    let frame_center = (hist.len() - 1) as f64 / 2.0;
    let mut best: Option<(usize, f64)> = None;
    let mut start = None;
    for j in 0..=hist.len() {
        let zero = j < hist.len() && hist.values[j] == 0.0;
        match (zero, start) {
            (true, None) => start = Some(j),
            (false, Some(s)) => {
                let width = j - s;
                let mid = (s + j - 1) as f64 / 2.0;
                let better = match best {
                    None => true,
                    Some((bw, bm)) => {
                        width > bw
                            || (width == bw && (mid - frame_center).abs() < (bm - frame_center).abs())
                    }
                };
                if better {
                    best = Some((width, mid));
                }
                start = None;
            }
            _ => {}
        }
    }
    match best {
        Some((width, mid)) => RowCenterEstimate {
            center_column: mid,
            status: Status::Ok,
            tie_count: width,
        },
        None => RowCenterEstimate::no_passage(),
    }
}

/// Applies the estimator matching the histogram's variant.
pub fn locate(hist: &ColumnHistogram) -> RowCenterEstimate {
    match hist.variant {
        Variant::SegZeros => find_zero_run_center(hist),
        Variant::SegMin | Variant::SegMinD => find_min_center(hist),
    }
}

/// Runs one frame through the pipeline and the matching estimator.
pub fn estimate(frame: &FramePair, pipeline: &mut Pipeline) -> Result<(RowCenterEstimate, ColumnHistogram)> {
    let (est, stages) = estimate_with_stages(frame, pipeline)?;
    Ok((est, stages.histogram().clone()))
}

pub fn estimate_with_stages(frame: &FramePair, pipeline: &mut Pipeline) -> Result<(RowCenterEstimate, Stages)> {
    let stages = pipeline.process(frame)?;
    Ok((locate(stages.histogram()), stages))
}
