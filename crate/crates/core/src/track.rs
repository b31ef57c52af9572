//! Constant-velocity Kalman tracking of hand centers of mass.
//!
//! State is `(x, y, vx, vy)` in pixels and pixels/frame with a fixed
//! one-frame timestep. Missing measurements advance the filter by prediction
//! only; after `loss_limit` consecutive misses the track is declared lost.

use std::io::Write;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::BinaryMask;

#[derive(Debug, Error, PartialEq)]
pub enum TrackError {
    #[error("kalman step on a lost track")]
    StepAfterLoss,
    #[error("kalman step on a track that was never started")]
    NotStarted,
    #[error("innovation covariance is singular")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanConfig {
    /// White-acceleration variance, px²/frame⁴.
    pub process_var: f64,
    /// Measurement variance per axis, px².
    pub measurement_var: f64,
    /// Diagonal of the initial covariance for (x, y, vx, vy).
    pub initial_cov: [f64; 4],
    pub loss_limit: usize,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            process_var: 1.0,
            measurement_var: 4.0,
            initial_cov: [10.0, 10.0, 100.0, 100.0],
            loss_limit: 6,
        }
    }
}

impl KalmanConfig {
    pub fn transition() -> Matrix4<f64> {
        Matrix4::new(
            1.0, 0.0, 1.0, 0.0, //
            0.0, 1.0, 0.0, 1.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        )
    }

    pub fn observation() -> Matrix2x4<f64> {
        Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
    }

    /// Discrete white-noise acceleration model with dt = 1.
    pub fn process_noise(&self) -> Matrix4<f64> {
        let q = self.process_var;
        Matrix4::new(
            0.25, 0.0, 0.5, 0.0, //
            0.0, 0.25, 0.0, 0.5, //
            0.5, 0.0, 1.0, 0.0, //
            0.0, 0.5, 0.0, 1.0,
        ) * q
    }

    pub fn measurement_noise(&self) -> Matrix2<f64> {
        Matrix2::identity() * self.measurement_var
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    NotStarted,
    Active,
    Lost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub state: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    pub frames_missing: usize,
    pub status: TrackStatus,
}

impl TrackState {
    pub fn not_started() -> Self {
        Self {
            state: Vector4::zeros(),
            covariance: Matrix4::zeros(),
            frames_missing: 0,
            status: TrackStatus::NotStarted,
        }
    }

    /// Starts a track at the first detection with zero velocity.
    pub fn start(at: (f64, f64), cfg: &KalmanConfig) -> Self {
        Self {
            state: Vector4::new(at.0, at.1, 0.0, 0.0),
            covariance: Matrix4::from_diagonal(&Vector4::from(cfg.initial_cov)),
            frames_missing: 0,
            status: TrackStatus::Active,
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.state[0], self.state[1])
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.state[2], self.state[3])
    }
}

/// Arithmetic mean of foreground pixel coordinates.
pub fn center_of_mass(mask: &BinaryMask) -> Option<(f64, f64)> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (x, y) in mask.foreground() {
        sx += x as f64;
        sy += y as f64;
        n += 1;
    }
    (n > 0).then(|| (sx / n as f64, sy / n as f64))
}

/// One predict(/correct) cycle.
pub fn kf_step(
    state: &TrackState,
    measurement: Option<(f64, f64)>,
    cfg: &KalmanConfig,
) -> Result<TrackState, TrackError> {
    match state.status {
        TrackStatus::Lost => return Err(TrackError::StepAfterLoss),
        TrackStatus::NotStarted => return Err(TrackError::NotStarted),
        TrackStatus::Active => {}
    }
    let f = KalmanConfig::transition();
    let x_prior = f * state.state;
    let p_prior = f * state.covariance * f.transpose() + cfg.process_noise();

    let mut next = match measurement {
        Some((mx, my)) => {
            let h = KalmanConfig::observation();
            let innovation = Vector2::new(mx, my) - h * x_prior;
            let s = h * p_prior * h.transpose() + cfg.measurement_noise();
            let s_inv = s.try_inverse().ok_or(TrackError::Singular)?;
            let gain: Matrix4x2<f64> = p_prior * h.transpose() * s_inv;
            let i_kh = Matrix4::identity() - gain * h;
            // Joseph form keeps the covariance symmetric PSD
            let p = i_kh * p_prior * i_kh.transpose()
                + gain * cfg.measurement_noise() * gain.transpose();
            TrackState {
                state: x_prior + gain * innovation,
                covariance: (p + p.transpose()) * 0.5,
                frames_missing: 0,
                status: TrackStatus::Active,
            }
        }
        None => TrackState {
            state: x_prior,
            covariance: (p_prior + p_prior.transpose()) * 0.5,
            frames_missing: state.frames_missing + 1,
            status: TrackStatus::Active,
        },
    };
    if next.frames_missing >= cfg.loss_limit {
        next.status = TrackStatus::Lost;
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackFlag {
    Measured,
    Predicted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub frame: usize,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub flag: TrackFlag,
}

/// Posterior states from first detection until loss or end of input.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// Frame at which the track was declared lost, if it was.
    pub lost_at: Option<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start_frame(&self) -> Option<usize> {
        self.points.first().map(|p| p.frame)
    }

    pub fn at_frame(&self, frame: usize) -> Option<&TrajectoryPoint> {
        let start = self.start_frame()?;
        self.points.get(frame.checked_sub(start)?)
    }

    /// Rows `frame,x,y,vx,vy,flag`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "frame,x,y,vx,vy,flag")?;
        for p in &self.points {
            let flag = match p.flag {
                TrackFlag::Measured => "measured",
                TrackFlag::Predicted => "predicted",
            };
            writeln!(w, "{},{:?},{:?},{:?},{:?},{flag}", p.frame, p.x, p.y, p.vx, p.vy)?;
        }
        Ok(())
    }
}

/// Tracks one hand through a stream of per-frame masks.
pub fn track_sequence(masks: &[BinaryMask], cfg: &KalmanConfig) -> Trajectory {
    track_measurements(&masks.iter().map(center_of_mass).collect::<Vec<_>>(), cfg)
}

pub fn track_measurements(measurements: &[Option<(f64, f64)>], cfg: &KalmanConfig) -> Trajectory {
    let mut traj = Trajectory::default();
    let Some(first) = measurements.iter().position(|m| m.is_some()) else {
        return traj;
    };
    let mut st = TrackState::start(measurements[first].unwrap(), cfg);
    let push = |traj: &mut Trajectory, frame: usize, st: &TrackState, flag| {
        traj.points.push(TrajectoryPoint {
            frame,
            x: st.state[0],
            y: st.state[1],
            vx: st.state[2],
            vy: st.state[3],
            flag,
        })
    };
    push(&mut traj, first, &st, TrackFlag::Measured);
    for (frame, m) in measurements.iter().enumerate().skip(first + 1) {
        st = kf_step(&st, *m, cfg).expect("active track with finite noise");
        let flag = if m.is_some() {
            TrackFlag::Measured
        } else {
            TrackFlag::Predicted
        };
        push(&mut traj, frame, &st, flag);
        if st.status == TrackStatus::Lost {
            traj.lost_at = Some(frame);
            break;
        }
    }
    traj
}

/// Two independent filters, one per hand.
pub fn track_hands(left: &[BinaryMask], right: &[BinaryMask], cfg: &KalmanConfig) -> (Trajectory, Trajectory) {
    (track_sequence(left, cfg), track_sequence(right, cfg))
}
