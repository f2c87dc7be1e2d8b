//! Closed-loop episodes.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::Write;
use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::camera::{corrupt_frame, render_frame, save_frame_pair, CameraModel, CorruptionModel};
use crate::controller::{command_for, ControllerConfig, EmaState, VelocityCommand};
use crate::error::{Error, Result};
use crate::guidance::{estimate_with_stages, RowCenterEstimate, Status};
use crate::pipeline::{Pipeline, PipelineConfig};
use crate::seed::{self, Stream};
use crate::world::CropRowWorld;

/// Planar pose and time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    /// Heading, wrapped to (-pi, pi].
    pub theta: f64,
    pub t: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
            t: 0.0,
        }
    }
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = theta - 2.0 * PI * ((theta - PI) / (2.0 * PI)).ceil();
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

/// Advances the unicycle by `dt` under a constant twist `(v, omega + disturbance)`.
///
/// The twist is integrated exactly (the pose moves along a circular arc), so
/// the result does not depend on how a fixed-command interval is subdivided.
pub fn step_kinematics(state: &RobotState, cmd: &VelocityCommand, dt: f64, disturbance: f64) -> RobotState {
    let omega = cmd.omega + disturbance;
    let dtheta = omega * dt;
    // (sin(a + b) - sin a) / b and (cos a - cos(a + b)) / b, stable as b -> 0.
    let (s0, c0) = state.theta.sin_cos();
    let (chord_x, chord_y) = if dtheta.abs() < 1e-6 {
        let half = 0.5 * dtheta;
        let sinc = 1.0 - dtheta * dtheta / 6.0;
        (c0 * sinc - s0 * half, s0 * sinc + c0 * half)
    } else {
        let (s1, c1) = (state.theta + dtheta).sin_cos();
        ((s1 - s0) / dtheta, (c0 - c1) / dtheta)
    };
    RobotState {
        x: state.x + cmd.v * dt * chord_x,
        y: state.y + cmd.v * dt * chord_y,
        theta: wrap_angle(state.theta + dtheta),
        t: state.t + dt,
    }
}

/// Activity rates. Every rate must divide `physics_hz`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateConfig {
    pub physics_hz: u32,
    pub camera_hz: u32,
    pub inference_hz: u32,
    pub command_hz: u32,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            physics_hz: 120,
            camera_hz: 30,
            inference_hz: 20,
            command_hz: 5,
        }
    }
}

impl RateConfig {
    pub fn validate(&self) -> Result<()> {
        let r = self;
        if r.command_hz == 0 {
            return Err(Error::invalid("command_hz", "must be positive"));
        }
        if !(r.physics_hz >= r.camera_hz && r.camera_hz >= r.inference_hz && r.inference_hz >= r.command_hz) {
            return Err(Error::invalid(
                "rates",
                "need physics_hz >= camera_hz >= inference_hz >= command_hz",
            ));
        }
        for (name, hz) in [("camera_hz", r.camera_hz), ("inference_hz", r.inference_hz), ("command_hz", r.command_hz)] {
            if !r.physics_hz.is_multiple_of(hz) {
                return Err(Error::invalid(name, format!("{hz} does not divide physics_hz {}", r.physics_hz)));
            }
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.physics_hz as f64
    }

    fn period(&self, hz: u32) -> u64 {
        (self.physics_hz / hz) as u64
    }
}

/// Start pose, termination thresholds and disturbance shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeSettings {
    /// Distance along the lane from the first plants to the start pose.
    pub start_inset: f64,
    /// Lateral start offset from the centerline, positive to the left.
    pub initial_offset: f64,
    /// Start heading relative to the lane direction.
    pub initial_heading: f64,
    pub run_length: f64,
    pub footprint_radius: f64,
    pub stall_window: f64,
    pub stall_distance: f64,
    pub timeout: f64,
    /// Correlation time of the yaw-rate disturbance.
    pub disturbance_tau: f64,
}

impl Default for EpisodeSettings {
    fn default() -> Self {
        Self {
            start_inset: 1.0,
            initial_offset: 0.0,
            initial_heading: 0.0,
            run_length: 20.0,
            footprint_radius: 0.3,
            stall_window: 5.0,
            stall_distance: 0.05,
            timeout: 120.0,
            disturbance_tau: 1.0,
        }
    }
}

impl EpisodeSettings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("run_length", self.run_length),
            ("footprint_radius", self.footprint_radius),
            ("stall_window", self.stall_window),
            ("stall_distance", self.stall_distance),
            ("timeout", self.timeout),
            ("disturbance_tau", self.disturbance_tau),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if !(self.start_inset.is_finite() && self.start_inset >= 0.0) {
            return Err(Error::invalid("start_inset", "must be non-negative"));
        }
        if !self.initial_offset.is_finite() || !self.initial_heading.is_finite() {
            return Err(Error::invalid("initial_offset", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Finished,
    Collision,
    Stalled,
    Timeout,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Finished => "finished",
            Termination::Collision => "collision",
            Termination::Stalled => "stalled",
            Termination::Timeout => "timeout",
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// State and controller output at one command tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub state: RobotState,
    pub raw: VelocityCommand,
    pub smoothed: VelocityCommand,
    /// Center column of the estimate used; NaN when there was none.
    pub center_column: f64,
    pub tie_count: usize,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub records: Vec<LogRecord>,
    pub termination: Termination,
    pub end_state: RobotState,
    /// Along-track progress from the start pose at the end.
    pub progress: f64,
    pub frames_captured: usize,
    pub estimates: usize,
    pub commands: usize,
    /// Time of the first `no_passage` estimate, if any.
    pub first_no_passage: Option<f64>,
}

pub const LOG_CSV_HEADER: &str = "t,x,y,theta,v_raw,omega_raw,v,omega,center_column,tie_count,status";

impl EpisodeLog {
    pub fn end_time(&self) -> f64 {
        self.end_state.t
    }

    /// One line per command tick under [`LOG_CSV_HEADER`]. Floats use Rust's
    /// shortest round-trip formatting; a missing center column is `nan`.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{LOG_CSV_HEADER}")?;
        for r in &self.records {
            let s = &r.state;
            let status = match r.status {
                Status::Ok => "ok",
                Status::NoPassage => "no_passage",
            };
            let center = if r.center_column.is_nan() { "nan".to_string() } else { r.center_column.to_string() };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                s.t, s.x, s.y, s.theta, r.raw.v, r.raw.omega, r.smoothed.v, r.smoothed.omega, center, r.tie_count, status
            )?;
        }
        Ok(())
    }
}

/// Everything one closed-loop episode needs.
#[derive(Debug, Clone)]
pub struct EpisodeSpec<'a> {
    pub world: &'a CropRowWorld,
    pub lane: usize,
    pub pipeline: PipelineConfig,
    pub controller: ControllerConfig,
    pub camera: CameraModel,
    pub corruption: CorruptionModel,
    pub rates: RateConfig,
    pub settings: EpisodeSettings,
    pub seed: u64,
    /// When set, every inferred frame and its pipeline stages are written here.
    pub debug_dir: Option<PathBuf>,
}

impl<'a> EpisodeSpec<'a> {
    pub fn new(world: &'a CropRowWorld, pipeline: PipelineConfig, seed: u64) -> Self {
        Self {
            world,
            lane: 1,
            pipeline,
            controller: ControllerConfig::default(),
            camera: CameraModel::default(),
            corruption: CorruptionModel::none(),
            rates: RateConfig::default(),
            settings: EpisodeSettings::default(),
            seed,
            debug_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.controller.validate()?;
        self.camera.validate()?;
        self.corruption.validate()?;
        self.rates.validate()?;
        self.settings.validate()?;
        if self.controller.frame_width != self.camera.width {
            return Err(Error::invalid("frame_width", "must equal the camera width"));
        }
        if self.world.lane_count() <= self.lane {
            return Err(Error::LaneOutOfRange {
                index: self.lane,
                lanes: self.world.lane_count(),
            });
        }
        Ok(())
    }

    /// Start pose on the lane centerline, offset and turned per the settings.
    pub fn start_pose(&self) -> Result<RobotState> {
        let st = &self.settings;
        let layout = &self.world.layout;
        let s0 = self.lane_start() + st.start_inset;
        let l = self.world.lane_center_lateral(self.lane, s0)? + st.initial_offset;
        let (x, y) = layout.to_world(s0, l);
        Ok(RobotState::new(x, y, layout.heading_at(s0) + st.initial_heading))
    }

    fn lane_start(&self) -> f64 {
        let rows = &self.world.rows;
        let a = rows[self.lane].station_range().0;
        let b = rows[self.lane + 1].station_range().0;
        a.max(b)
    }
}

/// Yaw-rate disturbance: a stationary Ornstein-Uhlenbeck process sampled on
/// the physics grid.
struct Disturbance {
    rng: ChaCha8Rng,
    decay: f64,
    innovation: f64,
    value: f64,
}

impl Disturbance {
    fn new(seed: u64, std: f64, tau: f64, dt: f64) -> Self {
        let mut rng = seed::rng(seed, Stream::Disturbance, 0);
        let decay = (-dt / tau).exp();
        let value = if std > 0.0 { std * rng.sample::<f64, _>(StandardNormal) } else { 0.0 };
        Self {
            rng,
            decay,
            innovation: std * (1.0 - decay * decay).sqrt(),
            value,
        }
    }

    fn next(&mut self) -> f64 {
        let current = self.value;
        if self.innovation > 0.0 {
            let z: f64 = self.rng.sample(StandardNormal);
            self.value = self.decay * self.value + self.innovation * z;
        }
        current
    }
}

/// Runs one closed-loop episode on the integer tick grid of `physics_hz`.
///
/// Each tick runs, in order: capture, inference on the freshest capture,
/// command update, physics. Captured frames are rendered only when inference
/// consumes them; rendering is a pure function of the captured pose, so the
/// result is the same as rendering at capture time.
pub fn run_episode(spec: &EpisodeSpec<'_>) -> Result<EpisodeLog> {
    spec.validate()?;
    let rates = spec.rates;
    let st = spec.settings;
    let dt = rates.dt();
    let (cam_period, inf_period, cmd_period) = (
        rates.period(rates.camera_hz),
        rates.period(rates.inference_hz),
        rates.period(rates.command_hz),
    );
    let layout = &spec.world.layout;
    let mut pipeline = Pipeline::new(spec.pipeline)?;
    let mut ema = EmaState::default();
    let mut disturbance = Disturbance::new(
        spec.seed,
        spec.world.terrain.heading_disturbance_std,
        st.disturbance_tau,
        dt,
    );
    if let Some(dir) = &spec.debug_dir {
        std::fs::create_dir_all(dir)?;
    }

    let mut state = spec.start_pose()?;
    let s_start = layout.to_lane(state.x, state.y).0;
    let max_ticks = (st.timeout * rates.physics_hz as f64).round() as u64;
    let stall_ticks = (st.stall_window * rates.physics_hz as f64).round() as u64;

    let mut captured: Option<(usize, RobotState)> = None;
    let mut frames_captured = 0usize;
    let mut estimate: Option<RowCenterEstimate> = None;
    let mut estimates = 0usize;
    let mut first_no_passage = None;
    let mut held = VelocityCommand::STOP;
    let mut records = Vec::new();
    let mut progress_marks: VecDeque<(u64, f64)> = VecDeque::from([(0, 0.0)]);

    let mut tick: u64 = 0;
    let termination = loop {
        if tick.is_multiple_of(cam_period) {
            captured = Some((frames_captured, state));
            frames_captured += 1;
        }
        if tick.is_multiple_of(inf_period) {
            if let Some((idx, pose)) = captured {
                let frame = render_frame(spec.world, &pose, &spec.camera);
                let model = spec
                    .corruption
                    .with_seed(seed::derive(spec.seed, Stream::Corruption, idx as u64));
                let frame = corrupt_frame(&frame, &model);
                let (est, stages) = estimate_with_stages(&frame, &mut pipeline)?;
                if let Some(dir) = &spec.debug_dir {
                    let prefix = format!("frame_{idx:05}");
                    save_frame_pair(
                        &frame,
                        &dir.join(format!("{prefix}_mask.pgm")),
                        &dir.join(format!("{prefix}_depth.pgm")),
                    )?;
                    stages.write_debug(dir, &prefix)?;
                }
                if !est.is_ok() && first_no_passage.is_none() {
                    first_no_passage = Some(state.t);
                }
                estimate = Some(est);
                estimates += 1;
            }
        }
        if tick.is_multiple_of(cmd_period) {
            let est = estimate.unwrap_or_else(RowCenterEstimate::no_passage);
            let (raw, smoothed) = command_for(&est, &spec.controller, &mut ema);
            held = smoothed;
            records.push(LogRecord {
                state,
                raw,
                smoothed,
                center_column: est.center_column,
                tie_count: est.tie_count,
                status: est.status,
            });
        }

        state = step_kinematics(&state, &held, dt, disturbance.next());
        state.t = (tick + 1) as f64 * dt;
        tick += 1;

        let progress = layout.to_lane(state.x, state.y).0 - s_start;
        if spec.world.collision_check(&state, st.footprint_radius) {
            break Termination::Collision;
        }
        if progress >= st.run_length {
            break Termination::Finished;
        }
        progress_marks.push_back((tick, progress));
        if tick >= stall_ticks {
            while progress_marks.front().is_some_and(|&(t0, _)| t0 < tick - stall_ticks) {
                progress_marks.pop_front();
            }
            let (_, earlier) = progress_marks[0];
            if progress - earlier < st.stall_distance {
                break Termination::Stalled;
            }
        }
        if tick >= max_ticks {
            break Termination::Timeout;
        }
    };

    let progress = layout.to_lane(state.x, state.y).0 - s_start;
    Ok(EpisodeLog {
        commands: records.len(),
        records,
        termination,
        end_state: state,
        progress,
        frames_captured,
        estimates,
        first_no_passage,
    })
}
