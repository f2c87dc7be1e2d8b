//! Trajectory and mask evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::sim::{wrap_angle, EpisodeLog, Termination};
use crate::world::{Centerline, RowLayout};

/// Signed distance from `p` to the polyline, positive to the left of the
/// direction of travel.
pub fn signed_distance(centerline: &Centerline, p: (f64, f64)) -> Result<f64> {
    let pts = &centerline.points;
    if pts.len() < 2 {
        return Err(Error::EmptyInput("centerline"));
    }
    let mut best = (f64::INFINITY, 0.0);
    for seg in pts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        if len2 == 0.0 {
            continue;
        }
        let (px, py) = (p.0 - a.0, p.1 - a.1);
        let u = ((px * dx + py * dy) / len2).clamp(0.0, 1.0);
        let (ex, ey) = (px - u * dx, py - u * dy);
        let dist2 = ex * ex + ey * ey;
        if dist2 < best.0 {
            let side = dx * py - dy * px;
            best = (dist2, if side < 0.0 { -dist2.sqrt() } else { dist2.sqrt() });
        }
    }
    if best.0.is_infinite() {
        return Err(Error::EmptyInput("centerline"));
    }
    Ok(best.1)
}

/// Cross-track error at every logged sample.
pub fn cross_track_errors(log: &EpisodeLog, centerline: &Centerline) -> Result<Vec<f64>> {
    if log.records.is_empty() {
        return Err(Error::EmptyInput("episode log"));
    }
    log.records
        .iter()
        .map(|r| signed_distance(centerline, (r.state.x, r.state.y)))
        .collect()
}

/// How heading deviation is summarized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaMode {
    /// Mean of the wrapped deviation from the row direction.
    #[default]
    SignedMean,
    /// Sum of absolute heading changes between samples.
    AbsAccumulate,
}

impl std::str::FromStr for GammaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed-mean" => Ok(GammaMode::SignedMean),
            "abs-accumulate" => Ok(GammaMode::AbsAccumulate),
            _ => Err(Error::invalid("gamma_mode", format!("unknown mode {s:?}"))),
        }
    }
}

/// Row direction used as the heading reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeadingReference {
    Fixed(f64),
    /// Tangent of the row layout at the sample's station.
    Layout(RowLayout),
}

impl HeadingReference {
    fn at(&self, x: f64, y: f64) -> f64 {
        match self {
            HeadingReference::Fixed(h) => *h,
            HeadingReference::Layout(layout) => layout.heading_at(layout.to_lane(x, y).0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub clearance_s: f64,
    pub mae_m: f64,
    pub mse_m2: f64,
    pub rmse_m: f64,
    pub cum_heading_avg_rad: f64,
    pub v_avg_mps: f64,
    pub omega_stddev_radps: f64,
    pub final_cross_track_m: f64,
    pub progress_m: f64,
    pub samples: usize,
    pub termination: Termination,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

pub fn summarize(log: &EpisodeLog, centerline: &Centerline, row_axis_heading: f64) -> Result<MetricsReport> {
    summarize_with(log, centerline, &HeadingReference::Fixed(row_axis_heading), GammaMode::SignedMean)
}

pub fn summarize_with(
    log: &EpisodeLog,
    centerline: &Centerline,
    reference: &HeadingReference,
    gamma: GammaMode,
) -> Result<MetricsReport> {
    let errors = cross_track_errors(log, centerline)?;
    let records = &log.records;
    let mae = mean(&errors.iter().map(|e| e.abs()).collect::<Vec<_>>());
    let mse = mean(&errors.iter().map(|e| e * e).collect::<Vec<_>>());
    let cum_heading = match gamma {
        GammaMode::SignedMean => mean(
            &records
                .iter()
                .map(|r| wrap_angle(r.state.theta - reference.at(r.state.x, r.state.y)))
                .collect::<Vec<_>>(),
        ),
        GammaMode::AbsAccumulate => records
            .windows(2)
            .map(|w| wrap_angle(w[1].state.theta - w[0].state.theta).abs())
            .sum(),
    };
    let v: Vec<f64> = records.iter().map(|r| r.smoothed.v).collect();
    let omega: Vec<f64> = records.iter().map(|r| r.smoothed.omega).collect();
    let end = log.end_state;
    Ok(MetricsReport {
        clearance_s: end.t - records[0].state.t,
        mae_m: mae,
        mse_m2: mse,
        rmse_m: mse.sqrt(),
        cum_heading_avg_rad: cum_heading,
        v_avg_mps: mean(&v),
        omega_stddev_radps: population_std(&omega),
        final_cross_track_m: signed_distance(centerline, (end.x, end.y))?,
        progress_m: log.progress,
        samples: records.len(),
        termination: log.termination,
    })
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    pub fn of(xs: &[f64]) -> Self {
        let m = mean(xs);
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean: m, std }
    }
}

impl std::fmt::Display for Spread {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = f.precision().unwrap_or(3);
        write!(f, "{:.p$} ± {:.p$}", self.mean, self.std)
    }
}

/// Reports of repeated runs of one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub runs: usize,
    pub finished: usize,
    pub clearance_s: Spread,
    pub mae_m: Spread,
    pub mse_m2: Spread,
    pub rmse_m: Spread,
    pub cum_heading_avg_rad: Spread,
    pub v_avg_mps: Spread,
    pub omega_stddev_radps: Spread,
    pub terminations: Vec<Termination>,
}

pub fn aggregate(reports: &[MetricsReport]) -> Result<AggregateReport> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("reports"));
    }
    let col = |f: fn(&MetricsReport) -> f64| Spread::of(&reports.iter().map(f).collect::<Vec<_>>());
    Ok(AggregateReport {
        runs: reports.len(),
        finished: reports.iter().filter(|r| r.termination == Termination::Finished).count(),
        clearance_s: col(|r| r.clearance_s),
        mae_m: col(|r| r.mae_m),
        mse_m2: col(|r| r.mse_m2),
        rmse_m: col(|r| r.rmse_m),
        cum_heading_avg_rad: col(|r| r.cum_heading_avg_rad),
        v_avg_mps: col(|r| r.v_avg_mps),
        omega_stddev_radps: col(|r| r.omega_stddev_radps),
        terminations: reports.iter().map(|r| r.termination).collect(),
    })
}

/// Intersection over union; 1 when both masks are empty.
pub fn iou(predicted: &Mask, truth: &Mask) -> Result<f64> {
    predicted.check_shape(truth)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in predicted.as_slice().iter().zip(truth.as_slice()) {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Distances from the origin to a line fitted through each of two lateral
/// point clusters, returned as `(left, right)`.
///
/// Points are split at `y = 0`, then refined by two-means on `y`; each cluster
/// is fitted by least squares as `y = a + b x`.
pub fn lidar_style_offset(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let mut left: Vec<bool> = points.iter().map(|p| p.1 > 0.0).collect();
    for _ in 0..100 {
        let (ml, mr) = (cluster_mean_y(points, &left, true), cluster_mean_y(points, &left, false));
        let (Some(ml), Some(mr)) = (ml, mr) else { break };
        let next: Vec<bool> = points.iter().map(|p| (p.1 - ml).abs() < (p.1 - mr).abs()).collect();
        if next == left {
            break;
        }
        left = next;
    }
    let fit = |side: bool| -> Result<f64> {
        let cluster: Vec<(f64, f64)> = points.iter().zip(&left).filter(|(_, &l)| l == side).map(|(p, _)| *p).collect();
        let (a, b) = fit_line(&cluster)?;
        Ok(a.abs() / (1.0 + b * b).sqrt())
    };
    Ok((fit(true)?, fit(false)?))
}

fn cluster_mean_y(points: &[(f64, f64)], left: &[bool], side: bool) -> Option<f64> {
    let ys: Vec<f64> = points.iter().zip(left).filter(|(_, &l)| l == side).map(|(p, _)| p.1).collect();
    (!ys.is_empty()).then(|| mean(&ys))
}

/// Ordinary least squares `y = a + b x`.
fn fit_line(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::DegenerateCluster(points.len()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateCluster(points.len()));
    }
    let b = sxy / sxx;
    Ok((my - b * mx, b))
}
