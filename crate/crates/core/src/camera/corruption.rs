use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::FramePair;
use crate::error::{Error, Result};
use crate::seed;

/// Parametric stand-in for segmentation and depth-sensor error.
///
/// Plant pixels (confidence >= 0.5) are dropped with probability
/// `dropout_rate`; survivors lose `|N(0, confidence_noise_std)|` confidence.
/// Background pixels are raised with probability `speckle_rate` to a
/// confidence drawn uniformly from `[0, speckle_max_confidence]`. Ranges get
/// `N(0, depth_noise_std_at_1m * d^2)` noise; no-return pixels are untouched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorruptionModel {
    pub dropout_rate: f64,
    pub speckle_rate: f64,
    pub speckle_max_confidence: f64,
    pub confidence_noise_std: f64,
    pub depth_noise_std_at_1m: f64,
    pub rng_seed: u64,
}

impl CorruptionModel {
    pub fn none() -> Self {
        Self {
            dropout_rate: 0.0,
            speckle_rate: 0.0,
            speckle_max_confidence: 0.0,
            confidence_noise_std: 0.0,
            depth_noise_std_at_1m: 0.0,
            rng_seed: 0,
        }
    }

    pub fn with_seed(self, rng_seed: u64) -> Self {
        Self { rng_seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.dropout_rate) || !unit(self.speckle_rate) || !unit(self.speckle_max_confidence) {
            return Err(Error::invalid("corruption", "rates must lie in [0, 1]"));
        }
        if !(self.confidence_noise_std >= 0.0) || !(self.depth_noise_std_at_1m >= 0.0) {
            return Err(Error::invalid("corruption", "standard deviations must be >= 0"));
        }
        Ok(())
    }
}

impl Default for CorruptionModel {
    fn default() -> Self {
        Self {
            dropout_rate: 0.1,
            speckle_rate: 0.15,
            speckle_max_confidence: 0.8,
            confidence_noise_std: 0.1,
            depth_noise_std_at_1m: 0.01,
            rng_seed: 0,
        }
    }
}

/// Smallest range a noisy depth reading can take (m).
const MIN_DEPTH: f64 = 1e-3;

/// Applies `model` to a frame. Same seed, same output.
pub fn corrupt_frame(frame: &FramePair, model: &CorruptionModel) -> FramePair {
    let mut rng = seed::rng(model.rng_seed, seed::Stream::Corruption, 0);
    let mut out = frame.clone();
    let max_range = frame.max_range;
    for (conf, depth) in out
        .soft_mask
        .as_mut_slice()
        .iter_mut()
        .zip(out.depth.as_mut_slice().iter_mut())
    {
        let u: f64 = rng.random();
        if *conf >= 0.5 {
            if u < model.dropout_rate {
                *conf = 0.0;
            } else {
                let n: f64 = rng.sample(StandardNormal);
                *conf = (*conf - (n * model.confidence_noise_std).abs()).clamp(0.0, 1.0);
            }
        } else if u < model.speckle_rate {
            let c: f64 = rng.random();
            *conf = conf.max(c * model.speckle_max_confidence);
        }
        if *depth < max_range {
            let n: f64 = rng.sample(StandardNormal);
            let noisy = *depth + n * model.depth_noise_std_at_1m * *depth * *depth;
            *depth = noisy.clamp(MIN_DEPTH.min(*depth), max_range);
        }
    }
    out
}
