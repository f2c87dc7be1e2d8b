use approx::assert_abs_diff_eq;
use furrow::controller::VelocityCommand;
use furrow::grid::Grid;
use furrow::guidance::Status;
use furrow::metrics::*;
use furrow::sim::{EpisodeLog, LogRecord, RobotState, Termination};
use furrow::world::{Centerline, CropPreset, RowLayout, TerrainModel, WorldParams};
use furrow::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn straight_centerline() -> Centerline {
    Centerline {
        points: (0..=300).map(|k| (k as f64 * 0.1, 0.0)).collect(),
    }
}

/// A log sampled at 5 Hz from `path(t) -> (x, y, theta)` with commands `cmd(k)`.
fn synthetic_log(
    duration: f64,
    path: impl Fn(f64) -> (f64, f64, f64),
    cmd: impl Fn(usize) -> VelocityCommand,
) -> EpisodeLog {
    let n = (duration * 5.0).round() as usize;
    let state = |t: f64| {
        let (x, y, theta) = path(t);
        RobotState { x, y, theta, t }
    };
    let records = (0..n)
        .map(|k| LogRecord {
            state: state(k as f64 * 0.2),
            raw: cmd(k),
            smoothed: cmd(k),
            center_column: 112.0,
            tie_count: 1,
            status: Status::Ok,
        })
        .collect();
    EpisodeLog {
        records,
        termination: Termination::Finished,
        end_state: state(duration),
        progress: 20.0,
        frames_captured: 0,
        estimates: 0,
        commands: n,
        first_no_passage: None,
    }
}

#[test]
fn perfect_run_metrics() {
    let log = synthetic_log(40.0, |t| (0.5 * t, 0.0, 0.0), |_| VelocityCommand::new(0.5, 0.0));
    let r = summarize(&log, &straight_centerline(), 0.0).unwrap();
    assert_eq!(r.clearance_s, 40.0);
    assert_eq!(r.mae_m, 0.0);
    assert_eq!(r.v_avg_mps, 0.5);
    assert_eq!(r.omega_stddev_radps, 0.0);
    assert_eq!(r.cum_heading_avg_rad, 0.0);
}

#[test]
fn constant_offset_metrics() {
    let log = synthetic_log(10.0, |t| (0.5 * t, 0.2, 0.0), |_| VelocityCommand::new(0.5, 0.0));
    let errors = cross_track_errors(&log, &straight_centerline()).unwrap();
    assert!(errors.iter().all(|e| (e - 0.2).abs() < 1e-12));
    let r = summarize(&log, &straight_centerline(), 0.0).unwrap();
    assert_abs_diff_eq!(r.mae_m, 0.2, epsilon = 1e-12);
    assert_abs_diff_eq!(r.mse_m2, 0.04, epsilon = 1e-12);
    let right = synthetic_log(10.0, |t| (0.5 * t, -0.2, 0.0), |_| VelocityCommand::new(0.5, 0.0));
    assert!(cross_track_errors(&right, &straight_centerline()).unwrap().iter().all(|e| (e + 0.2).abs() < 1e-12));
}

#[test]
fn alternating_omega_statistics() {
    let log = synthetic_log(10.0, |t| (0.5 * t, 0.0, 0.0), |k| {
        VelocityCommand::new(0.5, if k % 2 == 0 { -0.1 } else { 0.1 })
    });
    let r = summarize(&log, &straight_centerline(), 0.0).unwrap();
    assert_abs_diff_eq!(r.omega_stddev_radps, 0.1, epsilon = 1e-12);
    let mean: f64 = log.records.iter().map(|r| r.smoothed.omega).sum::<f64>() / log.records.len() as f64;
    assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
}

#[test]
fn heading_modes() {
    let log = synthetic_log(2.0, |t| (0.5 * t, 0.0, if (t * 5.0).round() as i64 % 2 == 0 { 0.1 } else { -0.1 }), |_| {
        VelocityCommand::new(0.5, 0.0)
    });
    let signed = summarize_with(&log, &straight_centerline(), &HeadingReference::Fixed(0.0), GammaMode::SignedMean).unwrap();
    assert_abs_diff_eq!(signed.cum_heading_avg_rad, 0.0, epsilon = 1e-12);
    let acc = summarize_with(&log, &straight_centerline(), &HeadingReference::Fixed(0.0), GammaMode::AbsAccumulate).unwrap();
    assert_abs_diff_eq!(acc.cum_heading_avg_rad, 9.0 * 0.2, epsilon = 1e-12);
    assert_eq!("abs-accumulate".parse::<GammaMode>().unwrap(), GammaMode::AbsAccumulate);
    assert!("mean".parse::<GammaMode>().is_err());
}

#[test]
fn arc_offsets_match_radial_distance() {
    let mut p = WorldParams::preset(CropPreset::CurvedVineyard);
    p.plant.jitter_std = 0.0;
    p.terrain = TerrainModel::flat();
    let world = p.build(1).unwrap();
    let centerline = world.centerline_with_step(1, 0.005).unwrap();
    let RowLayout::Arc { radius } = world.layout else { panic!("curved preset") };
    for (k, offset) in [(1, 0.3), (2, -0.25), (3, 0.05), (4, 0.6)] {
        let s = 3.0 + 4.0 * k as f64;
        let (x, y) = world.layout.to_world(s, offset);
        let e = signed_distance(&centerline, (x, y)).unwrap();
        let r = (x * x + (y - radius) * (y - radius)).sqrt();
        assert_abs_diff_eq!(e, radius - r, epsilon = 1e-6);
        assert_abs_diff_eq!(e, offset, epsilon = 1e-6);
    }
    // The tangent reference removes the turning of the arc itself.
    let heading_ref = HeadingReference::Layout(world.layout);
    let log = synthetic_log(20.0, |t| {
        let s = 2.0 + 0.5 * t;
        let (x, y) = world.layout.to_world(s, 0.0);
        (x, y, world.layout.heading_at(s))
    }, |_| VelocityCommand::new(0.5, 0.025));
    let r = summarize_with(&log, &centerline, &heading_ref, GammaMode::SignedMean).unwrap();
    assert_abs_diff_eq!(r.cum_heading_avg_rad, 0.0, epsilon = 1e-9);
    assert!(r.mae_m < 1e-6);
}

#[test]
fn empty_inputs_rejected() {
    let mut log = synthetic_log(1.0, |t| (t, 0.0, 0.0), |_| VelocityCommand::STOP);
    assert!(matches!(
        signed_distance(&Centerline { points: vec![(0.0, 0.0)] }, (1.0, 1.0)),
        Err(Error::EmptyInput(_))
    ));
    log.records.clear();
    assert!(cross_track_errors(&log, &straight_centerline()).is_err());
    assert!(aggregate(&[]).is_err());
}

#[test]
fn aggregate_mean_and_std() {
    let reports: Vec<MetricsReport> = [0.1, 0.2, 0.3]
        .iter()
        .map(|&y| {
            let log = synthetic_log(4.0, move |t| (0.5 * t, y, 0.0), |_| VelocityCommand::new(0.5, 0.0));
            summarize(&log, &straight_centerline(), 0.0).unwrap()
        })
        .collect();
    let agg = aggregate(&reports).unwrap();
    assert_eq!((agg.runs, agg.finished), (3, 3));
    assert_abs_diff_eq!(agg.mae_m.mean, 0.2, epsilon = 1e-12);
    assert_abs_diff_eq!(agg.mae_m.std, 0.1, epsilon = 1e-12);
    assert_eq!(format!("{:.2}", agg.mae_m), "0.20 ± 0.10");
}

#[test]
fn iou_examples() {
    let a = Grid::from_vec(4, 1, vec![true, true, false, false]).unwrap();
    let b = Grid::from_vec(4, 1, vec![false, false, true, true]).unwrap();
    let c = Grid::from_vec(4, 1, vec![false, true, true, false]).unwrap();
    assert_eq!(iou(&a, &a).unwrap(), 1.0);
    assert_eq!(iou(&a, &b).unwrap(), 0.0);
    assert_abs_diff_eq!(iou(&a, &c).unwrap(), 1.0 / 3.0, epsilon = 1e-15);
    let empty = Grid::filled(4, 1, false);
    assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
    assert!(matches!(iou(&a, &Grid::filled(2, 2, false)), Err(Error::DimensionMismatch { .. })));
}

fn row_points(left: f64, right: f64, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .flat_map(|k| {
            let x = 0.25 * k as f64 - 2.0;
            [(x, left), (x, -right)]
        })
        .collect()
}

#[test]
fn line_fit_examples() {
    let (l, r) = lidar_style_offset(&row_points(0.9, 0.9, 40)).unwrap();
    assert_abs_diff_eq!(l, 0.9, epsilon = 1e-9);
    assert_abs_diff_eq!(r, 0.9, epsilon = 1e-9);
    let (l, r) = lidar_style_offset(&row_points(1.2, 0.6, 40)).unwrap();
    assert_abs_diff_eq!(l, 1.2, epsilon = 1e-9);
    assert_abs_diff_eq!(r, 0.6, epsilon = 1e-9);
    assert_abs_diff_eq!((l - r) / 2.0, 0.3, epsilon = 1e-9);
}

#[test]
fn line_fit_on_tilted_rows() {
    // Rows seen from a robot yawed by 0.1 rad: y = c + tan(-0.1) x.
    let b = (-0.1f64).tan();
    let pts: Vec<(f64, f64)> = (0..30)
        .flat_map(|k| {
            let x = 0.3 * k as f64 - 3.0;
            [(x, 1.0 + b * x), (x, -0.8 + b * x)]
        })
        .collect();
    let (l, r) = lidar_style_offset(&pts).unwrap();
    let c = (1.0 + b * b).sqrt();
    assert_abs_diff_eq!(l, 1.0 / c, epsilon = 1e-9);
    assert_abs_diff_eq!(r, 0.8 / c, epsilon = 1e-9);
}

#[test]
fn line_fit_with_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let pts: Vec<(f64, f64)> = row_points(0.9, 0.9, 40)
        .into_iter()
        .map(|(x, y)| (x, y + noise.sample(&mut rng)))
        .collect();
    let (l, r) = lidar_style_offset(&pts).unwrap();
    assert!((l - 0.9).abs() < 0.01 && (r - 0.9).abs() < 0.01, "{l} {r}");
}

#[test]
fn degenerate_clusters_rejected() {
    let mut pts = row_points(0.9, 0.9, 5);
    pts.retain(|p| p.1 > 0.0);
    pts.push((0.0, -0.9));
    assert!(matches!(lidar_style_offset(&pts), Err(Error::DegenerateCluster(1))));
}

proptest! {
    #[test]
    fn mae_at_most_rmse(ys in prop::collection::vec(-1.0f64..1.0, 2..60)) {
        let ys2 = ys.clone();
        let log = synthetic_log(ys.len() as f64 / 5.0, move |t| {
            let k = ((t * 5.0).round() as usize).min(ys2.len() - 1);
            (0.5 * t, ys2[k], 0.0)
        }, |_| VelocityCommand::new(0.5, 0.0));
        let r = summarize(&log, &straight_centerline(), 0.0).unwrap();
        prop_assert!(r.mae_m <= r.rmse_m + 1e-12);
    }

    #[test]
    fn rigid_motion_invariance(angle in -3.0f64..3.0, tx in -50.0f64..50.0, ty in -50.0f64..50.0, amp in 0.0f64..0.5) {
        let (s, c) = angle.sin_cos();
        let move_pt = move |(x, y): (f64, f64)| (c * x - s * y + tx, s * x + c * y + ty);
        let path = move |t: f64| (0.5 * t, amp * (0.7 * t).sin(), 0.1 * (0.7 * t).cos());
        let base = synthetic_log(20.0, path, |k| VelocityCommand::new(0.5, 0.01 * k as f64));
        let moved = synthetic_log(20.0, move |t| {
            let (x, y, th) = path(t);
            let (mx, my) = move_pt((x, y));
            (mx, my, th + angle)
        }, |k| VelocityCommand::new(0.5, 0.01 * k as f64));
        let line = straight_centerline();
        let moved_line = Centerline { points: line.points.iter().map(|&p| move_pt(p)).collect() };
        let a = summarize(&base, &line, 0.0).unwrap();
        let b = summarize(&moved, &moved_line, angle).unwrap();
        prop_assert!((a.mae_m - b.mae_m).abs() < 1e-9);
        prop_assert!((a.mse_m2 - b.mse_m2).abs() < 1e-9);
        prop_assert!((a.cum_heading_avg_rad - b.cum_heading_avg_rad).abs() < 1e-9);
        prop_assert_eq!(a.v_avg_mps, b.v_avg_mps);
    }

    #[test]
    fn repeated_log_doubles_clearance(ys in prop::collection::vec(-0.5f64..0.5, 2..30)) {
        let n = ys.len();
        let dur = n as f64 / 5.0;
        let ys2 = ys.clone();
        let path = move |t: f64| {
            let k = ((t * 5.0).round() as usize) % n;
            (0.5 * (t % dur), ys2[k], 0.0)
        };
        let once = synthetic_log(dur, path.clone(), |_| VelocityCommand::new(0.4, 0.0));
        let twice = synthetic_log(2.0 * dur, path, |_| VelocityCommand::new(0.4, 0.0));
        let line = straight_centerline();
        let a = summarize(&once, &line, 0.0).unwrap();
        let b = summarize(&twice, &line, 0.0).unwrap();
        prop_assert!((a.mae_m - b.mae_m).abs() < 1e-12);
        prop_assert!((a.v_avg_mps - b.v_avg_mps).abs() < 1e-12);
        prop_assert!((b.clearance_s - 2.0 * a.clearance_s).abs() < 1e-9);
    }

    #[test]
    fn iou_symmetric_and_identity(a in prop::collection::vec(any::<bool>(), 16), b in prop::collection::vec(any::<bool>(), 16)) {
        let ga = Grid::from_vec(4, 4, a).unwrap();
        let gb = Grid::from_vec(4, 4, b).unwrap();
        let ab = iou(&ga, &gb).unwrap();
        prop_assert_eq!(ab, iou(&gb, &ga).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab == 1.0, ga == gb);
    }
}
