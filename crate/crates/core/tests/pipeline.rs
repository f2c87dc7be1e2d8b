use approx::assert_abs_diff_eq;
use furrow::camera::{render_frame, CameraModel, FramePair};
use furrow::grid::{Grid, Mask};
use furrow::pipeline::*;
use furrow::sim::RobotState;
use furrow::world::{CropPreset, TerrainModel, WorldParams};
use furrow::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Mask {
    Grid::from_fn(w, h, |_, _| rng.random_bool(0.3))
}

fn random_depth(rng: &mut ChaCha8Rng, w: usize, h: usize, max_range: f64) -> Grid<f64> {
    Grid::from_fn(w, h, |_, _| {
        if rng.random_bool(0.1) { max_range } else { rng.random_range(0.01..max_range) }
    })
}

fn frame(soft: Vec<f64>, w: usize, h: usize) -> FramePair {
    FramePair::new(Grid::from_vec(w, h, soft).unwrap(), Grid::filled(w, h, 1.0), 20.0, 0.0).unwrap()
}

// Oracles below index pixels directly instead of reusing the library's loops.

fn oracle_or(masks: &[Mask]) -> Mask {
    let (w, h) = (masks[0].width(), masks[0].height());
    Grid::from_fn(w, h, |i, j| masks.iter().any(|m| *m.get(i, j)))
}

fn oracle_gate(mask: &Mask, depth: &Grid<f64>, d_th: f64, max_range: f64) -> Mask {
    Grid::from_fn(mask.width(), mask.height(), |i, j| {
        let d = *depth.get(i, j);
        *mask.get(i, j) && d != max_range && d <= d_th
    })
}

#[allow(clippy::manual_clamp)]
fn oracle_weight(mask: &Mask, depth: &Grid<f64>, d_th: f64) -> Grid<f64> {
    Grid::from_fn(mask.width(), mask.height(), |i, j| {
        if !*mask.get(i, j) {
            return 0.0;
        }
        let w = 1.0 - *depth.get(i, j) / d_th;
        if w < 0.0 { 0.0 } else if w > 1.0 { 1.0 } else { w }
    })
}

fn oracle_columns(grid: &Grid<f64>) -> Vec<f64> {
    (0..grid.width())
        .map(|j| (0..grid.height()).map(|i| *grid.get(i, j)).sum())
        .collect()
}

fn oracle_smooth(values: &[f64], n: usize) -> Vec<f64> {
    let half = (n / 2) as isize;
    (0..values.len() as isize)
        .map(|j| {
            let window: Vec<f64> = (j - half..=j + half)
                .filter(|&k| k >= 0 && (k as usize) < values.len())
                .map(|k| values[k as usize])
                .collect();
            window.iter().sum::<f64>() / window.len() as f64
        })
        .collect()
}

#[test]
fn stages_match_brute_force_on_random_instances() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (w, h, max_range) = (16, 16, 20.0);
    for _ in 0..200 {
        let n_hist = rng.random_range(1..=4);
        let mut history = MaskHistory::new(n_hist).unwrap();
        let stream: Vec<Mask> = (0..6).map(|_| random_mask(&mut rng, w, h)).collect();
        let mut last = None;
        for (k, m) in stream.iter().enumerate() {
            let got = accumulate(&mut history, m.clone()).unwrap();
            let lo = (k + 1).saturating_sub(n_hist);
            assert_eq!(got, oracle_or(&stream[lo..=k]));
            last = Some(got);
        }
        let cum = last.unwrap();
        let depth = random_depth(&mut rng, w, h, max_range);
        let d_th = rng.random_range(0.5..25.0);
        let gated = depth_gate(&cum, &depth, d_th, max_range).unwrap();
        assert_eq!(gated, oracle_gate(&cum, &depth, d_th, max_range));

        let weighted = weight_inverse_depth(&gated, &depth, d_th).unwrap();
        let expected = oracle_weight(&gated, &depth, d_th);
        for (a, b) in weighted.as_slice().iter().zip(expected.as_slice()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }

        let binary = column_histogram(&gated, Variant::SegMin);
        let as_f = gated.map(|&b| if b { 1.0 } else { 0.0 });
        assert_eq!(binary.values, oracle_columns(&as_f));
        let hist = column_histogram(&weighted, Variant::SegMinD);
        for (a, b) in hist.values.iter().zip(oracle_columns(&weighted)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }

        let n = 2 * rng.random_range(0..8) + 1;
        let smoothed = smooth(&hist, n).unwrap();
        for (a, b) in smoothed.values.iter().zip(oracle_smooth(&hist.values, n)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn binarize_examples() {
    let f = frame(vec![0.2, 0.5, 0.9], 3, 1);
    assert_eq!(binarize(&f, 0.5).as_slice(), &[false, true, true]);
    assert!(binarize(&f, 0.0).as_slice().iter().all(|&b| b));
}

#[test]
fn binarize_rendered_frame_is_geometric_mask() {
    let mut p = WorldParams::preset(CropPreset::Vineyard);
    p.terrain = TerrainModel::flat();
    let world = p.build(4).unwrap();
    let f = render_frame(&world, &RobotState::new(2.0, 0.0, 0.0), &CameraModel::default());
    let geometric = f.soft_mask.map(|&c| c > 0.0);
    for t in [1e-6, 0.3, 0.7, 1.0] {
        assert_eq!(binarize(&f, t), geometric);
    }
}

#[test]
fn accumulate_identity_and_union() {
    let a = Grid::from_vec(2, 1, vec![true, false]).unwrap();
    let b = Grid::from_vec(2, 1, vec![false, true]).unwrap();
    let mut single = MaskHistory::new(1).unwrap();
    assert_eq!(accumulate(&mut single, a.clone()).unwrap(), a);
    assert_eq!(accumulate(&mut single, b.clone()).unwrap(), b);
    let mut two = MaskHistory::new(2).unwrap();
    accumulate(&mut two, a).unwrap();
    assert!(accumulate(&mut two, b).unwrap().as_slice().iter().all(|&x| x));
    assert_eq!(two.len(), 2);
}

#[test]
fn accumulate_rejects_other_shapes() {
    let mut h = MaskHistory::new(3).unwrap();
    accumulate(&mut h, Grid::filled(4, 4, false)).unwrap();
    let err = accumulate(&mut h, Grid::filled(5, 4, false)).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { .. }));
    assert!(MaskHistory::new(0).is_err());
}

#[test]
fn depth_gate_examples() {
    let mask = Grid::from_vec(4, 1, vec![true, true, false, true]).unwrap();
    let depth = Grid::from_vec(4, 1, vec![5.0, 5.000001, 0.1, 20.0]).unwrap();
    let gated = depth_gate(&mask, &depth, 5.0, 20.0).unwrap();
    assert_eq!(gated.as_slice(), &[true, false, false, false]);
    // No-return pixels stay out even with a gate beyond the sensor range.
    let far = depth_gate(&mask, &depth, 50.0, 20.0).unwrap();
    assert_eq!(far.as_slice(), &[true, true, false, false]);
    let all_far = Grid::filled(4, 1, 9.0);
    assert_eq!(depth_gate(&mask, &all_far, 5.0, 20.0).unwrap().count_ones(), 0);
}

#[test]
fn inverse_depth_examples() {
    let mask = Grid::filled(3, 1, true);
    let depth = Grid::from_vec(3, 1, vec![0.0, 8.0, 4.0]).unwrap();
    let w = weight_inverse_depth(&mask, &depth, 8.0).unwrap();
    assert_eq!(w.as_slice(), &[1.0, 0.0, 0.5]);
}

#[test]
fn histogram_examples() {
    let zeros: Grid<f64> = Grid::filled(7, 3, 0.0);
    assert!(column_histogram(&zeros, Variant::SegMin).values.iter().all(|&v| v == 0.0));
    let ones = Grid::filled(7, 3, true);
    assert!(column_histogram(&ones, Variant::SegMin).values.iter().all(|&v| v == 3.0));
}

#[test]
fn smooth_examples() {
    let h = ColumnHistogram::new(vec![0.0, 0.0, 6.0, 0.0, 0.0], Variant::SegMin);
    assert_eq!(smooth(&h, 3).unwrap().values, vec![0.0, 2.0, 2.0, 2.0, 0.0]);
    assert_eq!(smooth(&h, 1).unwrap(), h);
    let c = ColumnHistogram::new(vec![4.0; 9], Variant::SegMin);
    for n in [1, 3, 5, 7, 9] {
        for v in smooth(&c, n).unwrap().values {
            assert_abs_diff_eq!(v, 4.0, epsilon = 1e-12);
        }
    }
    assert!(smooth(&h, 2).is_err());
    assert!(smooth(&h, 7).is_err());
    assert!(smooth(&h, 0).is_err());
}

#[test]
fn config_validation() {
    assert!(PipelineConfig::new(Variant::SegMin, 5.0).validate().is_ok());
    let bad = [
        PipelineConfig { history_n: 0, ..PipelineConfig::new(Variant::SegMin, 5.0) },
        PipelineConfig { smoothing_window: 4, ..PipelineConfig::new(Variant::SegMin, 5.0) },
        PipelineConfig { confidence_threshold: 1.5, ..PipelineConfig::new(Variant::SegMin, 5.0) },
        PipelineConfig::new(Variant::SegMin, 0.0),
    ];
    for c in bad {
        assert!(c.validate().is_err(), "{c:?}");
    }
    assert_eq!("SegMinD".parse::<Variant>().unwrap(), Variant::SegMinD);
    assert!("segmax".parse::<Variant>().is_err());
}

#[test]
fn pipeline_writes_debug_stages() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = Pipeline::new(PipelineConfig::new(Variant::SegMinD, 5.0)).unwrap();
    let f = FramePair::new(Grid::filled(8, 4, 1.0), Grid::filled(8, 4, 2.5), 20.0, 0.0).unwrap();
    let stages = p.process(&f).unwrap();
    stages.write_debug(dir.path(), "f0").unwrap();
    for name in ["f0_cum.pgm", "f0_gated.pgm", "f0_weighted.pgm", "f0_hist.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let csv = std::fs::read_to_string(dir.path().join("f0_hist.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    assert!(csv.lines().nth(1).unwrap().starts_with("0,2,"));
}

fn stream_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, f64)> {
    let (w, h) = (12usize, 6usize);
    (
        prop::collection::vec(prop::collection::vec(0.0f64..1.0, w * h), 1..6),
        prop::collection::vec(0.05f64..20.0, w * h),
        0.5f64..15.0,
    )
}

fn run_stream(variant: Variant, history: usize, soft: &[Vec<f64>], depth: &[f64], d_th: f64) -> Vec<ColumnHistogram> {
    let cfg = PipelineConfig {
        history_n: history,
        confidence_threshold: 0.5,
        depth_threshold: d_th,
        smoothing_window: 1,
        variant,
    };
    let mut p = Pipeline::new(cfg).unwrap();
    soft.iter()
        .map(|s| {
            let f = FramePair::new(
                Grid::from_vec(12, 6, s.clone()).unwrap(),
                Grid::from_vec(12, 6, depth.to_vec()).unwrap(),
                20.0,
                0.0,
            )
            .unwrap();
            p.process(&f).unwrap().raw
        })
        .collect()
}

proptest! {
    #[test]
    fn pipeline_is_deterministic((soft, depth, d_th) in stream_strategy()) {
        for v in Variant::ALL {
            prop_assert_eq!(run_stream(v, 3, &soft, &depth, d_th), run_stream(v, 3, &soft, &depth, d_th));
        }
    }

    #[test]
    fn gate_and_weights_never_add((soft, depth, d_th) in stream_strategy()) {
        let mask = Grid::from_vec(12, 6, soft[0].iter().map(|&c| c >= 0.5).collect()).unwrap();
        let depth = Grid::from_vec(12, 6, depth).unwrap();
        let gated = depth_gate(&mask, &depth, d_th, 20.0).unwrap();
        let weighted = weight_inverse_depth(&gated, &depth, d_th).unwrap();
        for k in 0..mask.as_slice().len() {
            prop_assert!(!gated.as_slice()[k] || mask.as_slice()[k]);
            let g = if gated.as_slice()[k] { 1.0 } else { 0.0 };
            prop_assert!(weighted.as_slice()[k] <= g);
        }
    }

    #[test]
    fn weighted_histogram_below_binary((soft, depth, d_th) in stream_strategy()) {
        let a = run_stream(Variant::SegMin, 2, &soft, &depth, d_th);
        let b = run_stream(Variant::SegMinD, 2, &soft, &depth, d_th);
        for (ha, hb) in a.iter().zip(&b) {
            for (x, y) in ha.values.iter().zip(&hb.values) {
                prop_assert!(y <= x);
                prop_assert!(*x <= 6.0);
            }
        }
    }

    #[test]
    fn longer_history_never_shrinks((soft, depth, d_th) in stream_strategy(), n in 1usize..4) {
        let short = run_stream(Variant::SegMin, n, &soft, &depth, d_th);
        let long = run_stream(Variant::SegMin, n + 1, &soft, &depth, d_th);
        for (s, l) in short.iter().zip(&long) {
            for (x, y) in s.values.iter().zip(&l.values) {
                prop_assert!(y >= x);
            }
        }
    }

    #[test]
    fn smoothing_stays_within_range(values in prop::collection::vec(0.0f64..50.0, 5..40), half in 0usize..3) {
        let h = ColumnHistogram::new(values, Variant::SegMin);
        let n = 2 * half + 1;
        prop_assume!(n <= h.len());
        let s = smooth(&h, n).unwrap();
        prop_assert!(s.min() >= h.min() - 1e-9);
        prop_assert!(s.max() <= h.max() + 1e-9);
    }
}
