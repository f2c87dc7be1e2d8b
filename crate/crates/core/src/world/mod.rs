//! Parametric crop-row worlds and their ground truth.
//!
//! A world is a set of parallel (or concentric) plant rows laid out in lane
//! coordinates, see [`RowLayout`]. Rows are indexed left to right; lane `i`
//! is the corridor between rows `i` and `i + 1`. The lane selected in
//! [`WorldParams::lane`] is centered on `l = 0`.

mod layout;
mod scene;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use layout::RowLayout;
pub use scene::{HeightField, Primitive, Scene, Vec3};

use crate::error::{Error, Result};
use crate::seed::{self, Stream};
use crate::sim::RobotState;

/// Spacing of centerline vertices unless a caller asks for another.
pub const DEFAULT_CENTERLINE_STEP: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropPreset {
    Vineyard,
    Pergola,
    Pear,
    HighTrees,
    CurvedVineyard,
}

impl CropPreset {
    pub const ALL: [CropPreset; 5] = [
        CropPreset::Vineyard,
        CropPreset::Pergola,
        CropPreset::Pear,
        CropPreset::HighTrees,
        CropPreset::CurvedVineyard,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CropPreset::Vineyard => "vineyard",
            CropPreset::Pergola => "pergola",
            CropPreset::Pear => "pear",
            CropPreset::HighTrees => "high_trees",
            CropPreset::CurvedVineyard => "curved_vineyard",
        }
    }
}

impl fmt::Display for CropPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CropPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CropPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownPreset(s.to_owned()))
    }
}

/// Plant geometry: a trunk cylinder topped by a canopy ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    pub trunk_radius: f64,
    pub trunk_height: f64,
    pub canopy_center_height: f64,
    /// Semi-axes `[along-row, across-row, vertical]`.
    pub canopy_radii: [f64; 3],
    /// Standard deviation of the per-plant placement noise, applied both
    /// along and across the row.
    pub jitter_std: f64,
}

impl PlantSpec {
    /// Top of the canopy above the plant base.
    pub fn height(&self) -> f64 {
        self.canopy_center_height + self.canopy_radii[2]
    }

    pub fn validate(&self) -> Result<()> {
        if self.trunk_radius <= 0.0 || self.canopy_radii.iter().any(|&r| r <= 0.0) {
            return Err(Error::invalid("plant", "all radii must be positive"));
        }
        if self.trunk_height <= 0.0 || self.trunk_height > self.canopy_center_height {
            return Err(Error::invalid(
                "plant.trunk_height",
                "must be positive and at most canopy_center_height",
            ));
        }
        if self.jitter_std < 0.0 || !self.jitter_std.is_finite() {
            return Err(Error::invalid("plant.jitter_std", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainModel {
    pub height_amplitude: f64,
    pub height_wavelength: f64,
    /// Stationary std-dev of the yaw-rate disturbance injected into the
    /// kinematics (rad/s).
    pub heading_disturbance_std: f64,
}

impl TerrainModel {
    pub fn flat() -> Self {
        Self {
            height_amplitude: 0.0,
            height_wavelength: 1.0,
            heading_disturbance_std: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.height_amplitude < 0.0 {
            return Err(Error::invalid("terrain.height_amplitude", "must be >= 0"));
        }
        if self.height_wavelength <= 0.0 {
            return Err(Error::invalid("terrain.height_wavelength", "must be > 0"));
        }
        if self.heading_disturbance_std < 0.0 {
            return Err(Error::invalid("terrain.heading_disturbance_std", "must be >= 0"));
        }
        Ok(())
    }
}

impl Default for TerrainModel {
    fn default() -> Self {
        Self {
            height_amplitude: 0.04,
            height_wavelength: 6.0,
            heading_disturbance_std: 0.02,
        }
    }
}

/// Overhead canopy slab covering the left half of every lane (pergola).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverSpec {
    pub bottom: f64,
    pub top: f64,
}

/// Everything needed to build a world; presets fill it from the crop table
/// and config files may override any field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldParams {
    pub preset: CropPreset,
    pub row_distance: f64,
    pub plant_distance: f64,
    pub row_count: usize,
    /// Lane centered on `l = 0`, the one experiments traverse.
    pub lane: usize,
    pub track_length: f64,
    pub layout: RowLayout,
    pub plant: PlantSpec,
    pub cover: Option<CoverSpec>,
    pub terrain: TerrainModel,
}

impl WorldParams {
    pub fn preset(preset: CropPreset) -> Self {
        // Row distance, plant distance and canopy top come from the crop
        // table; trunk and canopy proportions are modelling choices.
        let (row_distance, plant_distance, plant, cover, layout) = match preset {
            CropPreset::Vineyard | CropPreset::CurvedVineyard => (
                1.8,
                1.3,
                PlantSpec {
                    trunk_radius: 0.05,
                    trunk_height: 0.7,
                    canopy_center_height: 1.35,
                    canopy_radii: [0.68, 0.25, 0.65],
                    jitter_std: 0.0,
                },
                None,
                if preset == CropPreset::CurvedVineyard {
                    RowLayout::Arc { radius: 20.0 }
                } else {
                    RowLayout::Straight
                },
            ),
            CropPreset::Pergola => (
                6.0,
                1.5,
                PlantSpec {
                    trunk_radius: 0.06,
                    trunk_height: 1.8,
                    canopy_center_height: 2.3,
                    canopy_radii: [0.78, 0.5, 0.6],
                    jitter_std: 0.0,
                },
                Some(CoverSpec {
                    bottom: 2.2,
                    top: 2.6,
                }),
                RowLayout::Straight,
            ),
            CropPreset::Pear => (
                2.0,
                1.0,
                PlantSpec {
                    trunk_radius: 0.08,
                    trunk_height: 0.8,
                    canopy_center_height: 1.9,
                    canopy_radii: [0.55, 0.45, 1.0],
                    jitter_std: 0.0,
                },
                None,
                RowLayout::Straight,
            ),
            CropPreset::HighTrees => (
                7.0,
                5.0,
                // Crowns start low and are wider than half the row spacing,
                // so neighbouring rows close over the lane.
                PlantSpec {
                    trunk_radius: 0.25,
                    trunk_height: 2.0,
                    canopy_center_height: 7.25,
                    canopy_radii: [3.4, 4.3, 5.25],
                    jitter_std: 0.0,
                },
                None,
                RowLayout::Straight,
            ),
        };
        let plant = PlantSpec {
            jitter_std: 0.05 * plant_distance,
            ..plant
        };
        Self {
            preset,
            row_distance,
            plant_distance,
            row_count: 4,
            lane: 1,
            track_length: 34.0,
            layout,
            plant,
            cover,
            terrain: TerrainModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.row_distance > 0.0) {
            return Err(Error::invalid("world.row_distance", "must be > 0"));
        }
        if !(self.plant_distance > 0.0) {
            return Err(Error::invalid("world.plant_distance", "must be > 0"));
        }
        if self.row_count < 2 {
            return Err(Error::invalid("world.row_count", "need at least 2 rows"));
        }
        if self.lane + 1 >= self.row_count {
            return Err(Error::LaneOutOfRange {
                index: self.lane,
                lanes: self.row_count - 1,
            });
        }
        if !(self.track_length > 0.0) {
            return Err(Error::invalid("world.track_length", "must be > 0"));
        }
        if let RowLayout::Arc { radius } = self.layout {
            let outer = (self.lane as f64 + 0.5) * self.row_distance;
            if radius <= outer {
                return Err(Error::invalid(
                    "world.curve_radius",
                    "must exceed the lateral extent of the rows",
                ));
            }
            if self.cover.is_some() {
                return Err(Error::invalid("world.cover", "covers need a straight layout"));
            }
        }
        if let Some(cover) = self.cover {
            if !(cover.top > cover.bottom && cover.bottom > 0.0) {
                return Err(Error::invalid("world.cover", "need 0 < bottom < top"));
            }
        }
        self.plant.validate()?;
        self.terrain.validate()
    }

    /// Nominal lateral offset of row `k`.
    pub fn row_lateral(&self, k: usize) -> f64 {
        (self.lane as f64 + 0.5 - k as f64) * self.row_distance
    }

    pub fn build(&self, seed: u64) -> Result<CropRowWorld> {
        self.validate()?;
        let mut rng = seed::rng(seed, Stream::World, 0);
        let jitter = Normal::new(0.0, self.plant.jitter_std).expect("validated std");
        let mut rows = Vec::with_capacity(self.row_count);
        for k in 0..self.row_count {
            let lateral = self.row_lateral(k);
            let stations = self.plant_stations(lateral);
            let mut plants: Vec<Plant> = stations
                .into_iter()
                .map(|s0| {
                    let s = s0 + jitter.sample(&mut rng);
                    let l = lateral + jitter.sample(&mut rng);
                    Plant {
                        s,
                        l,
                        base: Vec3::zeros(),
                        yaw: 0.0,
                    }
                })
                .collect();
            plants.sort_by(|a, b| a.s.total_cmp(&b.s));
            rows.push(Row {
                id: k,
                lateral,
                spec: self.plant,
                plants,
            });
        }

        let mut trng = seed::rng(seed, Stream::Terrain, 0);
        let ground = HeightField {
            amplitude: self.terrain.height_amplitude,
            wavelength: self.terrain.height_wavelength,
            phase_x: trng.random_range(0.0..std::f64::consts::TAU),
            phase_y: trng.random_range(0.0..std::f64::consts::TAU),
        };
        for row in &mut rows {
            for plant in &mut row.plants {
                let (x, y) = self.layout.to_world(plant.s, plant.l);
                plant.base = Vec3::new(x, y, ground.height(x, y));
                plant.yaw = self.layout.heading_at(plant.s);
            }
        }

        let covers = match self.cover {
            Some(spec) => (0..self.row_count - 1)
                .map(|lane| Cover {
                    lane,
                    l_inner: self.row_lateral(lane) - 0.5 * self.row_distance,
                    l_outer: self.row_lateral(lane),
                    bottom: spec.bottom,
                    top: spec.top,
                })
                .collect(),
            None => Vec::new(),
        };

        let mut world = CropRowWorld {
            preset: self.preset,
            row_distance: self.row_distance,
            plant_distance: self.plant_distance,
            track_length: self.track_length,
            layout: self.layout,
            terrain: self.terrain,
            ground,
            rows,
            covers,
            rng_seed: seed,
            scene: Scene::default(),
        };
        world.scene = world.build_scene();
        Ok(world)
    }

    /// Along-track stations of row plants, spaced so consecutive plants are
    /// `plant_distance` apart in a straight line.
    fn plant_stations(&self, lateral: f64) -> Vec<f64> {
        let step = match self.layout {
            RowLayout::Straight => self.plant_distance,
            RowLayout::Arc { radius } => {
                let r = radius - lateral;
                let dphi = 2.0 * (self.plant_distance / (2.0 * r)).asin();
                dphi * radius
            }
        };
        let n = (self.track_length / step).floor() as usize;
        (0..=n).map(|m| m as f64 * step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    /// Lane coordinates after jitter.
    pub s: f64,
    pub l: f64,
    /// World position of the trunk base.
    pub base: Vec3,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub id: usize,
    /// Nominal lateral offset (before jitter).
    pub lateral: f64,
    pub spec: PlantSpec,
    /// Sorted by station.
    pub plants: Vec<Plant>,
}

impl Row {
    /// Lateral position of the row at station `s`, linearly interpolated
    /// between neighbouring plants and held constant past either end.
    pub fn lateral_at(&self, s: f64) -> f64 {
        let plants = &self.plants;
        match plants.partition_point(|p| p.s <= s) {
            0 => plants[0].l,
            k if k == plants.len() => plants[k - 1].l,
            k => {
                let (a, b) = (&plants[k - 1], &plants[k]);
                let u = (s - a.s) / (b.s - a.s);
                a.l + u * (b.l - a.l)
            }
        }
    }

    pub fn station_range(&self) -> (f64, f64) {
        (self.plants[0].s, self.plants[self.plants.len() - 1].s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cover {
    pub lane: usize,
    /// Lateral span of the slab: from the lane middle to the left row.
    pub l_inner: f64,
    pub l_outer: f64,
    pub bottom: f64,
    pub top: f64,
}

/// An immutable crop-row world.
#[derive(Debug, Clone, PartialEq)]
pub struct CropRowWorld {
    pub preset: CropPreset,
    pub row_distance: f64,
    pub plant_distance: f64,
    pub track_length: f64,
    pub layout: RowLayout,
    pub terrain: TerrainModel,
    pub ground: HeightField,
    pub rows: Vec<Row>,
    pub covers: Vec<Cover>,
    pub rng_seed: u64,
    scene: Scene,
}

/// Builds a preset world. Identical `(preset, seed)` give identical worlds.
pub fn build_world(preset: CropPreset, seed: u64) -> Result<CropRowWorld> {
    WorldParams::preset(preset).build(seed)
}

/// An ordered polyline of world points.
#[derive(Debug, Clone, PartialEq)]
pub struct Centerline {
    pub points: Vec<(f64, f64)>,
}

impl CropRowWorld {
    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn lane_count(&self) -> usize {
        self.rows.len() - 1
    }

    fn build_scene(&self) -> Scene {
        let mut primitives = Vec::new();
        for row in &self.rows {
            let spec = &row.spec;
            for plant in &row.plants {
                primitives.push(Primitive::Cylinder {
                    base: plant.base,
                    radius: spec.trunk_radius,
                    height: spec.trunk_height,
                });
                primitives.push(Primitive::Ellipsoid {
                    center: plant.base + Vec3::new(0.0, 0.0, spec.canopy_center_height),
                    radii: Vec3::from(spec.canopy_radii),
                    yaw: plant.yaw,
                });
            }
        }
        for cover in &self.covers {
            let l_mid = 0.5 * (cover.l_inner + cover.l_outer);
            primitives.push(Primitive::Slab {
                center: Vec3::new(
                    0.5 * self.track_length,
                    l_mid,
                    0.5 * (cover.bottom + cover.top),
                ),
                half_extents: Vec3::new(
                    0.5 * self.track_length,
                    0.5 * (cover.l_outer - cover.l_inner),
                    0.5 * (cover.top - cover.bottom),
                ),
                yaw: 0.0,
            });
        }
        Scene {
            primitives,
            ground: Some(self.ground),
        }
    }

    pub fn ground_height(&self, x: f64, y: f64) -> f64 {
        self.ground.height(x, y)
    }

    fn lane_bounds(&self, lane: usize) -> Result<(LaneBound<'_>, LaneBound<'_>)> {
        if lane >= self.lane_count() {
            return Err(Error::LaneOutOfRange {
                index: lane,
                lanes: self.lane_count(),
            });
        }
        let left = match self.covers.iter().find(|c| c.lane == lane) {
            Some(cover) => LaneBound::Fixed(cover.l_inner),
            None => LaneBound::Row(&self.rows[lane]),
        };
        Ok((left, LaneBound::Row(&self.rows[lane + 1])))
    }

    /// Lateral coordinate of the lane middle at station `s`.
    pub fn lane_center_lateral(&self, lane: usize, s: f64) -> Result<f64> {
        let (left, right) = self.lane_bounds(lane)?;
        Ok(0.5 * (left.lateral_at(s) + right.lateral_at(s)))
    }

    /// Ground-truth centerline of `lane` with the default vertex spacing.
    pub fn ground_truth_centerline(&self, lane: usize) -> Result<Centerline> {
        self.centerline_with_step(lane, DEFAULT_CENTERLINE_STEP)
    }

    /// Midpoints of the two lane boundaries at stations `step` apart, over the
    /// stretch where both bounding rows have plants. For a covered lane the
    /// left boundary is the cover's inner edge.
    pub fn centerline_with_step(&self, lane: usize, step: f64) -> Result<Centerline> {
        if !(step > 0.0) {
            return Err(Error::invalid("step", "must be > 0"));
        }
        let (left, right) = self.lane_bounds(lane)?;
        let (mut s0, mut s1) = (f64::NEG_INFINITY, f64::INFINITY);
        for bound in [&left, &right] {
            if let LaneBound::Row(row) = bound {
                let (a, b) = row.station_range();
                s0 = s0.max(a);
                s1 = s1.min(b);
            }
        }
        let n = ((s1 - s0) / step).floor() as usize;
        let points = (0..=n)
            .map(|k| {
                let s = if k == n { s1 } else { s0 + k as f64 * step };
                let (ax, ay) = self.layout.to_world(s, left.lateral_at(s));
                let (bx, by) = self.layout.to_world(s, right.lateral_at(s));
                (0.5 * (ax + bx), 0.5 * (ay + by))
            })
            .collect();
        Ok(Centerline { points })
    }

    /// True iff a robot disc of `footprint_radius` at `pose` overlaps any
    /// trunk footprint.
    pub fn collision_check(&self, pose: &RobotState, footprint_radius: f64) -> bool {
        self.rows.iter().any(|row| {
            let reach = row.spec.trunk_radius + footprint_radius;
            row.plants.iter().any(|p| {
                let dx = p.base.x - pose.x;
                let dy = p.base.y - pose.y;
                dx * dx + dy * dy <= reach * reach
            })
        })
    }

    /// Plant-pose dump, one line per plant.
    pub fn write_plants_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "row_id,x,y,z,trunk_radius,trunk_height,canopy_center_height,\
             canopy_radius_along,canopy_radius_across,canopy_radius_vertical,jitter_std"
        )?;
        for row in &self.rows {
            let sp = &row.spec;
            for p in &row.plants {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    row.id,
                    p.base.x,
                    p.base.y,
                    p.base.z,
                    sp.trunk_radius,
                    sp.trunk_height,
                    sp.canopy_center_height,
                    sp.canopy_radii[0],
                    sp.canopy_radii[1],
                    sp.canopy_radii[2],
                    sp.jitter_std
                )?;
            }
        }
        Ok(())
    }
}

enum LaneBound<'a> {
    Row(&'a Row),
    Fixed(f64),
}

impl LaneBound<'_> {
    fn lateral_at(&self, s: f64) -> f64 {
        match self {
            LaneBound::Row(row) => row.lateral_at(s),
            LaneBound::Fixed(l) => *l,
        }
    }
}
