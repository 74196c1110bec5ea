//! Seeded throw sampling and the sensor stream a throw produces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::ballistics::{
    aim_throw, plane_crossing, simulate_throw, ThrowParams, ThrowSetup, TrueTrajectory, Vec3,
    DEFAULT_DT,
};
use crate::error::{Error, Result};
use crate::models::LocalizerModel;
use crate::sensors::{merge_streams, BlurDirection, Detection, DetectionBuffer, Frame, Source};
use crate::util::derive_seed;

/// Seed streams derived from an episode seed.
pub(crate) mod streams {
    pub const THROW: u64 = 0;
    pub const SCENE: u64 = 1;
    pub const CAMERA_PHASE: u64 = 2;
    pub const RADAR: u64 = 3;
    pub const LATENCY: u64 = 4;
}

/// One sampled throw with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Throw {
    pub params: ThrowParams,
    pub trajectory: TrueTrajectory,
    pub distance: f64,
    pub t_cross: f64,
    pub crossing: Vec3,
    /// Planar distance from the robot home to the crossing.
    pub required_travel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrowDraw {
    pub distance: f64,
    pub tof: f64,
    pub aim_x: f64,
    pub aim_y: f64,
}

/// Draws distance, TOF and aim point for `seed` from the throw distribution.
pub fn draw_throw(cfg: &PipelineConfig, seed: u64) -> Result<ThrowDraw> {
    let dist = &cfg.throws;
    let home = cfg.controller.home;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, streams::THROW));
    for _ in 0..10_000 {
        let i = rng.random_range(0..dist.distances.len());
        let scale = if dist.speed_jitter > 0.0 {
            rng.random_range(1.0 - dist.speed_jitter..=1.0 + dist.speed_jitter)
        } else {
            1.0
        };
        let ox = if dist.aim_jitter_x > 0.0 {
            rng.random_range(-dist.aim_jitter_x..=dist.aim_jitter_x)
        } else {
            0.0
        };
        let oy = if dist.aim_jitter_y > 0.0 {
            rng.random_range(-dist.aim_jitter_y..=dist.aim_jitter_y)
        } else {
            0.0
        };
        let tof = dist.nominal_tofs[i] / scale;
        if dist.max_travel.is_some_and(|m| ox.hypot(oy) > m) {
            continue;
        }
        if dist.min_tof.is_some_and(|m| tof < m) {
            continue;
        }
        return Ok(ThrowDraw {
            distance: dist.distances[i],
            tof,
            aim_x: home.x + ox,
            aim_y: home.y + oy,
        });
    }
    Err(Error::InvalidArgument(
        "throw distribution constraints reject every draw".into(),
    ))
}

/// Solves and integrates the throw for `seed`.
pub fn sample_throw(cfg: &PipelineConfig, seed: u64) -> Result<Throw> {
    let d = draw_throw(cfg, seed)?;
    let setup = ThrowSetup {
        z_plane: cfg.z_plane,
        gravity: cfg.gravity,
        ..cfg.throws.setup
    };
    let params = aim_throw(&setup, d.distance, d.tof, d.aim_x, d.aim_y, cfg.drag_coeff, DEFAULT_DT)?;
    throw_from_params(cfg, params, d.distance)
}

pub fn throw_from_params(cfg: &PipelineConfig, params: ThrowParams, distance: f64) -> Result<Throw> {
    let trajectory = simulate_throw(&params, DEFAULT_DT, cfg.z_plane - 0.05)?;
    let (t_cross, crossing) = plane_crossing(&trajectory, cfg.z_plane)?;
    Ok(Throw {
        params,
        trajectory,
        distance,
        t_cross,
        crossing,
        required_travel: crossing.planar_distance(cfg.controller.home),
    })
}

/// How camera frames become position estimates.
#[derive(Clone, Copy)]
pub enum FrameLocalizer<'a> {
    ColorFilter,
    Cnn(&'a LocalizerModel),
}

/// Snaps a time to the 1 ms control tick.
pub fn snap_to_tick(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}

/// Renders the camera frame at `t`, with vertical blur from the image motion
/// during the exposure.
pub fn render_at(cfg: &PipelineConfig, throw: &Throw, t: f64, scene_seed: u64) -> Result<Frame> {
    let pos = throw.trajectory.state_at(t).position;
    let mut sensors = cfg.sensors;
    if cfg.exposure > 0.0 {
        let earlier = throw.trajectory.state_at((t - cfg.exposure).max(0.0)).position;
        let (_, v_now, _) = sensors.camera.project(pos);
        let (_, v_then, _) = sensors.camera.project(earlier);
        sensors.camera.blur_len = (v_now - v_then).abs().round() as usize;
        sensors.camera.blur_direction = if v_then < v_now {
            BlurDirection::Up
        } else {
            BlurDirection::Down
        };
    }
    sensors.render(pos, scene_seed, t)
}

/// Camera and radar detections of `throw` strictly before its plane
/// crossing, merged by time. Sensor events snap to the control tick.
pub fn observe_throw(
    cfg: &PipelineConfig,
    throw: &Throw,
    localizer: FrameLocalizer<'_>,
    seed: u64,
) -> Result<DetectionBuffer> {
    let sensors = &cfg.sensors;
    let scene_seed = derive_seed(seed, streams::SCENE);
    let mut phase_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, streams::CAMERA_PHASE));
    let cam_period = 1.0 / sensors.camera.rate;
    let radar_period = 1.0 / sensors.radar.rate;
    let cam_phase = phase_rng.random_range(0.0..cam_period);
    let radar_phase = phase_rng.random_range(0.0..radar_period);

    let mut camera = Vec::new();
    for k in 0.. {
        let t = snap_to_tick(cam_phase + k as f64 * cam_period);
        if t >= throw.t_cross {
            break;
        }
        let pos = throw.trajectory.state_at(t).position;
        if !sensors.camera.sees(pos) {
            continue;
        }
        let det = if sensors.ideal_camera {
            Some(Detection {
                position: pos,
                t,
                source: Source::Camera,
            })
        } else {
            let frame = render_at(cfg, throw, t, scene_seed)?;
            match localizer {
                FrameLocalizer::ColorFilter => sensors.color_filter(&frame),
                FrameLocalizer::Cnn(model) => model.localize(&frame, &sensors.camera)?,
            }
        };
        camera.extend(det);
    }

    let radar_seed = derive_seed(seed, streams::RADAR);
    let mut radar = Vec::new();
    for k in 0.. {
        let t = snap_to_tick(radar_phase + k as f64 * radar_period);
        if t >= throw.t_cross {
            break;
        }
        let s = throw.trajectory.state_at(t);
        radar.extend(sensors.radar_detect(s.position, s.velocity, derive_seed(radar_seed, k), t));
    }
    merge_streams(&camera, &radar)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn throws_hit_their_aim() {
        let cfg = PipelineConfig::paper_like();
        for seed in 0..5 {
            let d = draw_throw(&cfg, seed).unwrap();
            let t = sample_throw(&cfg, seed).unwrap();
            assert!((t.t_cross - d.tof).abs() < 1e-6);
            assert!((t.crossing.x - d.aim_x).abs() < 1e-6);
            assert!((t.crossing.y - d.aim_y).abs() < 1e-6);
        }
    }

    #[test]
    fn max_travel_is_respected() {
        let mut cfg = PipelineConfig::noiseless();
        cfg.throws.max_travel = Some(0.2);
        for seed in 0..20 {
            assert!(sample_throw(&cfg, seed).unwrap().required_travel <= 0.2 + 1e-6);
        }
    }

    #[test]
    fn noiseless_stream_is_exact() {
        let cfg = PipelineConfig::noiseless();
        let throw = sample_throw(&cfg, 3).unwrap();
        let buf = observe_throw(&cfg, &throw, FrameLocalizer::ColorFilter, 3).unwrap();
        assert!(buf.count(Source::Camera) > 10);
        assert!(buf.count(Source::Radar) > 5);
        for d in buf.as_slice() {
            let truth = throw.trajectory.state_at(d.t).position;
            assert!((d.position - truth).norm() < 1e-9);
            assert!(d.t < throw.t_cross);
            assert_eq!(d.t, snap_to_tick(d.t));
        }
    }

    #[test]
    fn rendered_stream_is_deterministic() {
        let cfg = PipelineConfig::paper_like();
        let throw = sample_throw(&cfg, 11).unwrap();
        let a = observe_throw(&cfg, &throw, FrameLocalizer::ColorFilter, 11).unwrap();
        let b = observe_throw(&cfg, &throw, FrameLocalizer::ColorFilter, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.count(Source::Camera) > 10);
    }
}
