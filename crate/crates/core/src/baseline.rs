//! Physical-model interception predictor: per-axis least-squares fit of a
//! ballistic curve, solved on the fixed catch plane.
//!
//! Horizontal and depth motion are fitted as straight lines in time. The
//! vertical axis keeps its quadratic term pinned to `-g/2`, so only offset and
//! slope are regressed against the gravity-compensated heights
//! `y + g/2 * tau^2`. A free quadratic fit is available for comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensors::{Detection, DetectionBuffer, Source};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    #[default]
    PinnedGravity,
    FreeQuadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub fit_mode: FitMode,
    pub camera_weight: f64,
    pub radar_weight: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            fit_mode: FitMode::PinnedGravity,
            camera_weight: 1.0,
            radar_weight: 1.0,
        }
    }
}

impl FitOptions {
    fn weight(&self, source: Source) -> f64 {
        match source {
            Source::Camera => self.camera_weight,
            Source::Radar => self.radar_weight,
        }
    }
}

/// Fitted trajectory in local time `tau = t - t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEstimate {
    /// `x(tau) = a + b tau`
    pub x_coeffs: (f64, f64),
    /// `z(tau) = a + b tau`
    pub z_coeffs: (f64, f64),
    /// `y(tau) = a + b tau + y_quadratic tau^2`
    pub y_coeffs: (f64, f64),
    /// `-g/2` when gravity is pinned.
    pub y_quadratic: f64,
    pub t0: f64,
    pub tau_last: f64,
    pub n_points: usize,
    pub gravity: f64,
}

impl TrajectoryEstimate {
    pub fn x_at(&self, tau: f64) -> f64 {
        self.x_coeffs.0 + self.x_coeffs.1 * tau
    }

    pub fn y_at(&self, tau: f64) -> f64 {
        self.y_coeffs.0 + self.y_coeffs.1 * tau + self.y_quadratic * tau * tau
    }

    pub fn z_at(&self, tau: f64) -> f64 {
        self.z_coeffs.0 + self.z_coeffs.1 * tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Ballistic,
    Network,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterceptionPoint {
    pub x: f64,
    pub y: f64,
    pub z_plane: f64,
    /// Absolute simulated time of the predicted crossing, when known.
    pub t_cross: Option<f64>,
    pub source: PredictorKind,
}

/// Weighted least-squares line through `(tau, value)` via the 2x2 normal
/// equations.
fn fit_line(taus: &[f64], values: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    let (mut s0, mut s1, mut s2, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&tau, &v), &w) in taus.iter().zip(values).zip(weights) {
        s0 += w;
        s1 += w * tau;
        s2 += w * tau * tau;
        r0 += w * v;
        r1 += w * tau * v;
    }
    let det = s0 * s2 - s1 * s1;
    if !(det > 1e-14 * s0 * s2) {
        return Err(Error::RankDeficient);
    }
    let a = (s2 * r0 - s1 * r1) / det;
    let b = (s0 * r1 - s1 * r0) / det;
    Ok((a, b))
}

/// Weighted least-squares parabola via the 3x3 normal equations (Cramer).
fn fit_parabola(taus: &[f64], values: &[f64], weights: &[f64]) -> Result<(f64, f64, f64)> {
    let mut s = [0.0f64; 5];
    let mut r = [0.0f64; 3];
    for ((&tau, &v), &w) in taus.iter().zip(values).zip(weights) {
        let mut p = w;
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += p;
            if k < 3 {
                r[k] += p * v;
            }
            p *= tau;
        }
    }
    let m = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det3(&m);
    if !(d.abs() > 1e-14 * s[0] * s[2] * s[4]) {
        return Err(Error::RankDeficient);
    }
    let mut coeffs = [0.0; 3];
    for (col, c) in coeffs.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = r[row];
        }
        *c = det3(&mc) / d;
    }
    Ok((coeffs[0], coeffs[1], coeffs[2]))
}

pub fn fit_trajectory(buffer: &DetectionBuffer, gravity: f64) -> Result<TrajectoryEstimate> {
    fit_trajectory_with(buffer.as_slice(), gravity, &FitOptions::default())
}

pub fn fit_trajectory_with(
    detections: &[Detection],
    gravity: f64,
    options: &FitOptions,
) -> Result<TrajectoryEstimate> {
    let first = detections.first().ok_or(Error::TooFewDetections {
        needed: 3,
        got: 0,
    })?;
    if detections.iter().all(|d| d.t == first.t) {
        return Err(Error::RankDeficient);
    }
    if detections.len() < 3 {
        return Err(Error::TooFewDetections {
            needed: 3,
            got: detections.len(),
        });
    }
    let t0 = first.t;
    let taus: Vec<f64> = detections.iter().map(|d| d.t - t0).collect();
    let weights: Vec<f64> = detections.iter().map(|d| options.weight(d.source)).collect();
    let xs: Vec<f64> = detections.iter().map(|d| d.position.x).collect();
    let zs: Vec<f64> = detections.iter().map(|d| d.position.z).collect();
    let x_coeffs = fit_line(&taus, &xs, &weights)?;
    let z_coeffs = fit_line(&taus, &zs, &weights)?;
    let (y_coeffs, y_quadratic) = match options.fit_mode {
        FitMode::PinnedGravity => {
            let half_g = 0.5 * gravity;
            let compensated: Vec<f64> = detections
                .iter()
                .zip(&taus)
                .map(|(d, &tau)| d.position.y + half_g * tau * tau)
                .collect();
            (fit_line(&taus, &compensated, &weights)?, -half_g)
        }
        FitMode::FreeQuadratic => {
            let ys: Vec<f64> = detections.iter().map(|d| d.position.y).collect();
            let (a, b, c) = fit_parabola(&taus, &ys, &weights)?;
            ((a, b), c)
        }
    };
    Ok(TrajectoryEstimate {
        x_coeffs,
        z_coeffs,
        y_coeffs,
        y_quadratic,
        t0,
        tau_last: *taus.last().expect("non-empty"),
        n_points: detections.len(),
        gravity,
    })
}

/// Solves the fitted trajectory for the crossing of depth `z_plane`.
pub fn predict_interception(estimate: &TrajectoryEstimate, z_plane: f64) -> Result<InterceptionPoint> {
    let (a_z, b_z) = estimate.z_coeffs;
    if !(b_z < 0.0) {
        return Err(Error::NotApproaching(b_z));
    }
    let tau_star = (z_plane - a_z) / b_z;
    if tau_star < estimate.tau_last {
        return Err(Error::PlanePassed {
            tau_star,
            tau_last: estimate.tau_last,
        });
    }
    Ok(InterceptionPoint {
        x: estimate.x_at(tau_star),
        y: estimate.y_at(tau_star),
        z_plane,
        t_cross: Some(estimate.t0 + tau_star),
        source: PredictorKind::Ballistic,
    })
}

/// Fit and solve in one call.
pub fn predict_from_detections(
    detections: &[Detection],
    gravity: f64,
    z_plane: f64,
    options: &FitOptions,
) -> Result<InterceptionPoint> {
    predict_interception(&fit_trajectory_with(detections, gravity, options)?, z_plane)
}
