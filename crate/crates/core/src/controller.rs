//! Quadratic velocity law and EMA command smoothing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::RowCenterEstimate;

/// Shape of the steering law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaLaw {
    /// `-k * omega_max * d * |d| / w^2`: quadratic, steers toward the row.
    #[default]
    SignedQuadratic,
    /// `-k * omega_max * d^2 / w^2`: always turns the same way. Kept only to
    /// reproduce the printed law.
    LiteralSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub v_max: f64,
    pub omega_max: f64,
    pub k_omega: f64,
    pub ema_lambda: f64,
    pub frame_width: usize,
    pub omega_law: OmegaLaw,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            v_max: 0.5,
            omega_max: 1.0,
            k_omega: 0.01,
            ema_lambda: lambda_from_buffer(3),
            frame_width: 224,
            omega_law: OmegaLaw::SignedQuadratic,
        }
    }
}

/// Standard period-to-weight conversion, `2 / (n + 1)`.
pub fn lambda_from_buffer(n: usize) -> f64 {
    2.0 / (n as f64 + 1.0)
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, "must be positive"))
            }
        };
        positive("v_max", self.v_max)?;
        positive("omega_max", self.omega_max)?;
        positive("k_omega", self.k_omega)?;
        if !(self.ema_lambda > 0.0 && self.ema_lambda <= 1.0) {
            return Err(Error::invalid("ema_lambda", "must lie in (0, 1]"));
        }
        if self.frame_width < 2 {
            return Err(Error::invalid("frame_width", "must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub v: f64,
    pub omega: f64,
}

impl VelocityCommand {
    pub const STOP: Self = Self { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

/// Last smoothed command; starts at rest.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EmaState {
    pub previous: VelocityCommand,
}

/// Pixel offset of the row center from the frame center; positive to the right.
pub fn center_error(x_h: f64, w: usize) -> f64 {
    x_h - w as f64 / 2.0
}

pub fn raw_command(d: f64, cfg: &ControllerConfig) -> VelocityCommand {
    let w = cfg.frame_width as f64;
    let half = w / 2.0;
    let d = d.clamp(-half, half);
    let v = cfg.v_max * (1.0 - (d * d) / (half * half));
    let shape = match cfg.omega_law {
        OmegaLaw::SignedQuadratic => d * d.abs(),
        OmegaLaw::LiteralSquare => d * d,
    };
    let omega = (-cfg.k_omega * cfg.omega_max * shape / (w * w)).clamp(-cfg.omega_max, cfg.omega_max);
    VelocityCommand { v: v.max(0.0), omega }
}

pub fn smooth_command(raw: VelocityCommand, state: &mut EmaState, lambda: f64) -> VelocityCommand {
    let prev = state.previous;
    let out = VelocityCommand {
        v: (1.0 - lambda) * prev.v + lambda * raw.v,
        omega: (1.0 - lambda) * prev.omega + lambda * raw.omega,
    };
    state.previous = out;
    out
}

/// Decelerates toward rest when no passage is visible.
pub fn no_passage_policy(state: &mut EmaState, lambda: f64) -> VelocityCommand {
    smooth_command(VelocityCommand::STOP, state, lambda)
}

/// Raw and smoothed commands for one estimate.
pub fn command_for(estimate: &RowCenterEstimate, cfg: &ControllerConfig, state: &mut EmaState) -> (VelocityCommand, VelocityCommand) {
    if estimate.is_ok() {
        let raw = raw_command(center_error(estimate.center_column, cfg.frame_width), cfg);
        (raw, smooth_command(raw, state, cfg.ema_lambda))
    } else {
        (VelocityCommand::STOP, no_passage_policy(state, cfg.ema_lambda))
    }
}
