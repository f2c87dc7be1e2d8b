//! Robot-mounted RGB-D camera stand-in.
//!
//! Pixel `(i, j)` is row `i` (0 at the top) and column `j` (0 at the left).
//! The camera renders a vegetation mask and a range image by casting one ray
//! per pixel center; [`corruption`] perturbs the result the way an imperfect
//! segmentation network and depth sensor would.

mod corruption;
mod frame_io;
mod render;

use serde::{Deserialize, Serialize};

pub use corruption::{corrupt_frame, CorruptionModel};
pub use frame_io::{
    load_frame_pair, load_frame_pair_with_range, save_frame_pair, save_unit_grid,
    DEPTH_NO_RETURN,
};
pub use render::{render_frame, render_scene, CameraPose};

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub horizontal_fov: f64,
    pub vertical_fov: f64,
    /// Optical center ahead of the robot center, along the heading (m).
    pub mount_forward: f64,
    /// Optical center above the ground under the robot center (m).
    pub mount_height: f64,
    /// Upward tilt of the optical axis from the robot's horizontal (rad).
    pub mount_pitch: f64,
    /// Rays hitting nothing closer than this report this value (m).
    pub max_range: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            width: 224,
            height: 224,
            horizontal_fov: 69f64.to_radians(),
            vertical_fov: 69f64.to_radians(),
            mount_forward: 0.20,
            mount_height: 0.5,
            mount_pitch: 15f64.to_radians(),
            max_range: 20.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("camera", "frame must be non-empty"));
        }
        let fov_ok = |f: f64| f > 0.0 && f < std::f64::consts::PI;
        if !fov_ok(self.horizontal_fov) || !fov_ok(self.vertical_fov) {
            return Err(Error::invalid("camera.fov", "must lie in (0, pi)"));
        }
        if !(self.max_range > 0.0) {
            return Err(Error::invalid("camera.max_range", "must be > 0"));
        }
        Ok(())
    }

    /// Tangent-plane extent of one pixel, `(horizontal, vertical)`.
    pub(crate) fn pixel_pitch(&self) -> (f64, f64) {
        (
            (0.5 * self.horizontal_fov).tan() / (0.5 * self.width as f64),
            (0.5 * self.vertical_fov).tan() / (0.5 * self.height as f64),
        )
    }
}

/// Co-registered mask and range image captured at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair {
    /// Vegetation confidence in [0, 1].
    pub soft_mask: Grid<f64>,
    /// Range along each pixel ray (m); `max_range` marks "no return".
    pub depth: Grid<f64>,
    pub max_range: f64,
    pub timestamp: f64,
}

impl FramePair {
    pub fn new(soft_mask: Grid<f64>, depth: Grid<f64>, max_range: f64, timestamp: f64) -> Result<Self> {
        soft_mask.check_shape(&depth)?;
        if soft_mask.as_slice().iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("soft_mask", "confidences must lie in [0, 1]"));
        }
        if depth.as_slice().iter().any(|&d| !(d > 0.0 && d <= max_range)) {
            return Err(Error::invalid("depth", "values must lie in (0, max_range]"));
        }
        Ok(Self {
            soft_mask,
            depth,
            max_range,
            timestamp,
        })
    }

    pub fn width(&self) -> usize {
        self.soft_mask.width()
    }

    pub fn height(&self) -> usize {
        self.soft_mask.height()
    }

    /// Whether the pixel's depth is the no-return sentinel.
    pub fn is_no_return(&self, depth: f64) -> bool {
        depth >= self.max_range
    }
}
