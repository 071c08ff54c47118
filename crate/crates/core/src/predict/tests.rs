use super::*;
use crate::model::{AisRecord, Mmsi, Provenance};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn line_track(n: usize, dlon: f64, dlat: f64) -> Track {
    let mmsi = Mmsi::new(366000001).unwrap();
    let t0 = Timestamp::from_ymd_hm(2009, 2, 1, 0, 0).unwrap();
    let recs = (0..n)
        .map(|i| AisRecord {
            mmsi,
            pos: GeoPoint { lon: -123.0 + dlon * i as f64, lat: 40.0 + dlat * i as f64 },
            sog: 12.0,
            cog: 45.0,
            rot: None,
            t: Timestamp(t0.0 + i as i64),
            vessel_type: None,
            provenance: Provenance::Raw,
        })
        .collect();
    Track::new(mmsi, recs).unwrap()
}

// Plain Gaussian elimination with partial pivoting on the normal equations.
fn oracle_solve(h: &[Vec<f64>], t: &[[f64; 2]], ridge: f64) -> Vec<[f64; 2]> {
    let n = h[0].len();
    let mut a = vec![vec![0.0; n + 2]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = h.iter().map(|r| r[i] * r[j]).sum::<f64>();
        }
        a[i][i] += ridge;
        a[i][n] = h.iter().zip(t).map(|(r, y)| r[i] * y[0]).sum();
        a[i][n + 1] = h.iter().zip(t).map(|(r, y)| r[i] * y[1]).sum();
    }
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        a.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n + 2 {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    (0..n).map(|i| [a[i][n] / a[i][i], a[i][n + 1] / a[i][i]]).collect()
}

#[test]
fn ridge_solution_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let (m, n) = (40, 12);
        let h: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
        let t: Vec<[f64; 2]> = (0..m).map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)]).collect();
        let hm = DMatrix::from_fn(m, n, |i, j| h[i][j]);
        let tm = DMatrix::from_fn(m, 2, |i, j| t[i][j]);
        let beta = solve_output_weights(&hm, &tm, 1e-3);
        let want = oracle_solve(&h, &t, 1e-3);
        for i in 0..n {
            for j in 0..2 {
                assert!((beta[(i, j)] - want[i][j]).abs() < 1e-8 * (1.0 + want[i][j].abs()));
            }
        }
    }
}

#[test]
fn duplicated_rows_equal_halved_ridge() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (m, n) = (20, 6);
    let h = DMatrix::from_fn(m, n, |_, _| rng.random::<f64>());
    let t = DMatrix::from_fn(m, 2, |_, _| rng.random::<f64>());
    let h2 = DMatrix::from_fn(2 * m, n, |i, j| h[(i % m, j)]);
    let t2 = DMatrix::from_fn(2 * m, 2, |i, j| t[(i % m, j)]);
    let a = solve_output_weights(&h2, &t2, 0.2);
    let b = solve_output_weights(&h, &t, 0.1);
    assert!((a - b).abs().max() < 1e-10);
}

#[test]
fn min_norm_solution_when_unpenalised() {
    // Two identical columns: min-norm splits the weight evenly.
    let h = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
    let t = DMatrix::from_row_slice(3, 2, &[2.0, 4.0, 4.0, 8.0, 6.0, 12.0]);
    let b = solve_output_weights(&h, &t, 0.0);
    assert!((b[(0, 0)] - 1.0).abs() < 1e-12 && (b[(1, 0)] - 1.0).abs() < 1e-12);
    assert!((b[(0, 1)] - 2.0).abs() < 1e-12 && (b[(1, 1)] - 2.0).abs() < 1e-12);
}

#[test]
fn zero_output_weights_predict_origin() {
    let track = line_track(300, 0.001, 0.0);
    let seg = segment(
        &track,
        &SegmentationConfig { feature_len: 5, horizon: 3, samples: 20, current: 100 },
        FeatureSet::Positions,
    )
    .unwrap();
    let mut m = train_elm(&seg.training, &ElmParams::default()).unwrap();
    m.output_weights.fill(0.0);
    let p = m.predict(&seg.test_features).unwrap();
    assert_eq!((p.lon, p.lat), (0.0, 0.0));
    assert!(matches!(m.predict(&[1.0]), Err(PredictError::Sizing(_))));
}

#[test]
fn constant_targets_are_reproduced() {
    let track = line_track(200, 0.0, 0.0);
    let seg = segment(
        &track,
        &SegmentationConfig { feature_len: 4, horizon: 2, samples: 30, current: 120 },
        FeatureSet::Positions,
    )
    .unwrap();
    let m = train_elm(&seg.training, &ElmParams { ridge: 0.0, ..Default::default() }).unwrap();
    let p = m.predict(&seg.test_features).unwrap();
    assert!((p.lon + 123.0).abs() < 1e-6 && (p.lat - 40.0).abs() < 1e-6, "{p:?}");
}

#[test]
fn segmentation_indices() {
    let track = line_track(100, 0.01, 0.0);
    let cfg = SegmentationConfig { feature_len: 3, horizon: 5, samples: 4, current: 20 };
    let seg = segment(&track, &cfg, FeatureSet::PositionsAndKinematics).unwrap();
    assert_eq!(seg.training.len(), 4);
    assert_eq!(seg.training[0].feature_range, (13, 15));
    assert_eq!(seg.training[0].target_index, 20);
    assert_eq!(seg.training[3].feature_range, (10, 12));
    assert_eq!(seg.training[3].target_index, 17);
    assert_eq!(seg.test_range, (18, 20));
    assert_eq!(seg.test_features.len(), 12);
    assert_eq!(cfg.earliest_index(), 10);

    let short = SegmentationConfig { current: 10, ..cfg };
    match segment(&track, &short, FeatureSet::Positions) {
        Err(PredictError::Sizing(msg)) => assert!(msg.contains("short by 1"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn linear_track_predicts_accurately() {
    let track = line_track(400, 0.002, 0.001);
    let cfg = EvalConfig { stride: 25, ..Default::default() };
    let ev = evaluate_track(&track, &cfg).unwrap();
    assert!(!ev.predictions.is_empty());
    assert!(ev.mean_error_nm() < 0.1, "{}", ev.mean_error_nm());
    assert_eq!(ev.histogram.total() as usize, ev.predictions.len());
}

#[test]
fn evaluation_is_deterministic_across_pools() {
    let track = line_track(300, 0.002, -0.001);
    let cfg = EvalConfig { stride: 7, samples: 50, ..Default::default() };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| evaluate_track(&track, &cfg).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn too_short_track_is_a_sizing_error() {
    let track = line_track(100, 0.001, 0.0);
    assert!(matches!(evaluate_track(&track, &EvalConfig::default()), Err(PredictError::Sizing(_))));
}

#[test]
fn histogram_csv_fills_empty_bins() {
    let h = ErrorHistogram::from_errors([0.1, 1.2, 1.4], 0.5);
    assert_eq!(h.to_csv(), "bin_start_nm,bin_end_nm,count\n0,0.5,1\n0.5,1,0\n1,1.5,2\n");
}

#[test]
fn rank_one_hidden_matrix_is_solved() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let row: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
    let h = DMatrix::from_fn(30, 100, |_, j| row[j]);
    let t = DMatrix::from_fn(30, 2, |_, j| if j == 0 { -123.0 } else { 40.0 });
    let b = solve_output_weights(&h, &t, 0.0);
    assert!((&h * &b - &t).amax() < 1e-9);
}
