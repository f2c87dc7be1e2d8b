//! Lane coordinates: along-track station `s` and lateral offset `l`
//! (positive to the left of the direction of travel).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowLayout {
    /// Rows parallel to the world x axis; `(s, l)` maps to `(x, y) = (s, l)`.
    Straight,
    /// Rows on concentric arcs curving left. The reference arc (l = 0) has
    /// the given radius, starts at the origin heading +x, and is centered at
    /// `(0, radius)`.
    Arc { radius: f64 },
}

impl RowLayout {
    pub fn to_world(&self, s: f64, l: f64) -> (f64, f64) {
        match *self {
            RowLayout::Straight => (s, l),
            RowLayout::Arc { radius } => {
                let phi = s / radius;
                let r = radius - l;
                (r * phi.sin(), radius - r * phi.cos())
            }
        }
    }

    pub fn to_lane(&self, x: f64, y: f64) -> (f64, f64) {
        match *self {
            RowLayout::Straight => (x, y),
            RowLayout::Arc { radius } => {
                let dy = radius - y;
                let phi = x.atan2(dy);
                (radius * phi, radius - x.hypot(dy))
            }
        }
    }

    /// Direction of travel of the lane at station `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        match *self {
            RowLayout::Straight => 0.0,
            RowLayout::Arc { radius } => s / radius,
        }
    }
}
