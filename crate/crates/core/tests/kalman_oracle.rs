mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use signtutor_core::track::{kf_step, track_measurements, KalmanConfig, TrackFlag, TrackState, TrackStatus};

use common::PlainKalman;

#[test]
fn matches_plain_array_filter() {
    let cfg = KalmanConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let start = (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
        let mut st = TrackState::start(start, &cfg);
        let mut oracle = PlainKalman::new(start, cfg.initial_cov, cfg.process_var, cfg.measurement_var);
        for t in 1..40 {
            let z = (rng.random::<f64>() > 0.2)
                .then(|| (start.0 + 2.0 * t as f64 + rng.random_range(-1.0..1.0), start.1 - t as f64));
            // stay below the loss limit
            let z = if st.frames_missing >= 4 { Some(z.unwrap_or((start.0, start.1))) } else { z };
            st = kf_step(&st, z, &cfg).unwrap();
            oracle.step(z);
            for i in 0..4 {
                assert!((st.state[i] - oracle.x[i]).abs() < 1e-9, "state {i} at {t}");
                for j in 0..4 {
                    assert!((st.covariance[(i, j)] - oracle.p[i][j]).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn constant_velocity_recovered() {
    let cfg = KalmanConfig::default();
    let z: Vec<_> = (0..=20).map(|t| Some((10.0 + 3.0 * t as f64, 50.0 - 1.5 * t as f64))).collect();
    let traj = track_measurements(&z, &cfg);
    let last = traj.points.last().unwrap();
    assert!((last.vx - 3.0).abs() < 1e-3, "{}", last.vx);
    assert!((last.vy + 1.5).abs() < 1e-3, "{}", last.vy);
}

#[test]
fn six_missing_frames_lose_the_track() {
    let cfg = KalmanConfig::default();
    let mut z: Vec<_> = (0..5).map(|t| Some((t as f64, 0.0))).collect();
    z.extend([None; 8]);
    let traj = track_measurements(&z, &cfg);
    assert_eq!(traj.lost_at, Some(10));
    assert!(traj.points[5..].iter().all(|p| p.flag == TrackFlag::Predicted));
    let mut st = TrackState::start((0.0, 0.0), &cfg);
    for _ in 0..6 {
        st = kf_step(&st, None, &cfg).unwrap();
    }
    assert_eq!(st.status, TrackStatus::Lost);
    assert!(kf_step(&st, Some((0.0, 0.0)), &cfg).is_err());
}
