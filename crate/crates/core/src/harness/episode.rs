use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{LocalizerKind, Pipeline, PipelineConfig};
use super::throws::{observe_throw, sample_throw, FrameLocalizer, Throw};
use crate::ballistics::Vec3;
use crate::baseline::{predict_from_detections, InterceptionPoint, PredictorKind};
use crate::controller::{
    control_step, evaluate_catch, update_goal, CatchOutcome, RobotState, TraceSample, CONTROL_RATE,
};
use crate::error::{Error, Result};
use crate::models::{
    build_interceptor_with, build_localizer_with, nn_predict_interception, InterceptorModel, LocalizerModel,
};
use crate::nn::load_weights;
use crate::sensors::{Detection, DetectionBuffer, Source};
use crate::util::derive_seed;

/// Trained networks available to an episode.
#[derive(Debug, Clone, Default)]
pub struct Networks {
    pub localizer: Option<LocalizerModel>,
    pub interceptor: Option<InterceptorModel>,
}

impl Networks {
    /// Builds the configured architectures and loads whichever weight files
    /// `cfg` names.
    pub fn load(cfg: &PipelineConfig) -> Result<Networks> {
        let mut nets = Networks::default();
        if let Some(path) = &cfg.localizer_weights {
            let cam = &cfg.sensors.camera;
            let mut net = build_localizer_with(&cfg.localizer_arch, cam.height, cam.width)?;
            load_weights(&mut net, path)?;
            nets.localizer = Some(LocalizerModel::new(net));
        }
        if let Some(path) = &cfg.interceptor_weights {
            let mut net = build_interceptor_with(&cfg.interceptor_arch)?;
            load_weights(&mut net, path)?;
            nets.interceptor = Some(InterceptorModel::new(net));
        }
        Ok(nets)
    }

    pub fn check(&self, pipeline: Pipeline) -> Result<()> {
        if pipeline.localizer == LocalizerKind::Cnn && self.localizer.is_none() {
            return Err(Error::MissingWeights("localizer"));
        }
        if pipeline.predictor == PredictorKind::Network && self.interceptor.is_none() {
            return Err(Error::MissingWeights("interceptor"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    /// Simulated time the goal was updated.
    pub t: f64,
    /// Timestamp of the newest detection the prediction used.
    pub trigger_t: f64,
    pub point: InterceptionPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    pub pipeline: Pipeline,
    pub outcome: CatchOutcome,
    pub tof: f64,
    pub distance: f64,
    pub crossing: Vec3,
    pub required_travel: f64,
    pub n_camera: usize,
    pub n_radar: usize,
    pub predictions: Vec<PredictionRecord>,
    /// Path length of the end-effector.
    pub travel: f64,
    /// Largest planar prediction error among predictions using at least
    /// three detections.
    pub max_prediction_error: Option<f64>,
}

/// Full per-tick record of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub throw: Throw,
    pub detections: DetectionBuffer,
    pub robot: Vec<TraceSample>,
}

struct Job {
    deliver_at: f64,
    trigger_t: f64,
    point: Option<InterceptionPoint>,
}

fn predict(
    cfg: &PipelineConfig,
    nets: &Networks,
    buffer: &DetectionBuffer,
) -> Option<InterceptionPoint> {
    match cfg.pipeline.predictor {
        PredictorKind::Ballistic => {
            predict_from_detections(buffer.as_slice(), cfg.gravity, cfg.z_plane, &cfg.fit).ok()
        }
        PredictorKind::Network => {
            let model = nets.interceptor.as_ref()?;
            nn_predict_interception(model, buffer, cfg.z_plane).ok()
        }
    }
}

pub fn run_episode(cfg: &PipelineConfig, nets: &Networks, seed: u64) -> Result<EpisodeResult> {
    Ok(run_episode_traced(cfg, nets, seed)?.0)
}

/// Simulates one throw at 1 ms resolution. Detections join the buffer at
/// their tick; prediction jobs run one at a time and deliver after a sampled
/// latency, with at most one queued refresh that uses the newest buffer.
pub fn run_episode_traced(
    cfg: &PipelineConfig,
    nets: &Networks,
    seed: u64,
) -> Result<(EpisodeResult, EpisodeTrace)> {
    cfg.validate()?;
    nets.check(cfg.pipeline)?;
    let throw = sample_throw(cfg, seed)?;
    let localizer = match cfg.pipeline.localizer {
        LocalizerKind::ColorFilter => FrameLocalizer::ColorFilter,
        LocalizerKind::Cnn => FrameLocalizer::Cnn(nets.localizer.as_ref().expect("checked")),
    };
    let stream = observe_throw(cfg, &throw, localizer, seed)?;
    let events: &[Detection] = stream.as_slice();

    let mut latency_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, super::throws::streams::LATENCY));
    let [lat_lo, lat_hi] = cfg.inference_latency;
    let mut sample_latency = move || {
        if lat_hi > lat_lo {
            latency_rng.random_range(lat_lo..=lat_hi)
        } else {
            lat_lo
        }
    };

    let dt = 1.0 / CONTROL_RATE;
    let mut robot = RobotState::at_home(&cfg.controller);
    let mut goal = cfg.controller.home;
    let mut trace = vec![TraceSample {
        t: 0.0,
        position: robot.position,
        velocity: robot.velocity,
    }];
    let mut buffer = DetectionBuffer::new();
    let mut next_event = 0;
    let mut job: Option<Job> = None;
    let mut pending = false;
    let mut predictions = Vec::new();
    let mut travel = 0.0;

    let start_job = |buffer: &DetectionBuffer, now: f64, sample: &mut dyn FnMut() -> f64| Job {
        deliver_at: now + sample(),
        trigger_t: buffer.as_slice().last().map_or(now, |d| d.t),
        point: predict(cfg, nets, buffer),
    };

    let mut k: u64 = 0;
    loop {
        let now = k as f64 * dt;
        if now >= throw.t_cross + dt {
            break;
        }
        let mut fresh = false;
        while next_event < events.len() && events[next_event].t <= now + 1e-9 {
            buffer.push(events[next_event])?;
            next_event += 1;
            fresh = true;
        }
        if fresh && buffer.len() >= cfg.min_detections {
            pending = true;
        }
        loop {
            if job.is_none() && pending {
                pending = false;
                job = Some(start_job(&buffer, now, &mut sample_latency));
            }
            match &job {
                Some(j) if j.deliver_at <= now + 1e-12 => {
                    let j = job.take().expect("job present");
                    if let Some(point) = j.point {
                        goal = update_goal(&cfg.controller, &point).0;
                        predictions.push(PredictionRecord {
                            t: now,
                            trigger_t: j.trigger_t,
                            point,
                        });
                    }
                    if !pending {
                        break;
                    }
                }
                _ => break,
            }
        }
        let cmd = control_step(&cfg.controller, &robot, goal, dt);
        let before = robot.position;
        robot.advance(cmd, dt);
        travel += (robot.position - before).norm();
        k += 1;
        trace.push(TraceSample {
            t: k as f64 * dt,
            position: robot.position,
            velocity: robot.velocity,
        });
    }

    let outcome = evaluate_catch(&trace, &throw.trajectory, cfg.z_plane, cfg.basket_radius)?;
    let max_prediction_error = predictions
        .iter()
        .filter(|p| {
            events
                .iter()
                .take_while(|d| d.t <= p.trigger_t)
                .count()
                >= 3
        })
        .map(|p| (p.point.x - throw.crossing.x).hypot(p.point.y - throw.crossing.y))
        .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.max(e))));
    let result = EpisodeResult {
        seed,
        pipeline: cfg.pipeline,
        outcome,
        tof: throw.t_cross,
        distance: throw.distance,
        crossing: throw.crossing,
        required_travel: throw.required_travel,
        n_camera: stream.count(Source::Camera),
        n_radar: stream.count(Source::Radar),
        predictions,
        travel,
        max_prediction_error,
    };
    Ok((
        result,
        EpisodeTrace {
            throw,
            detections: stream,
            robot: trace,
        },
    ))
}
