use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ballistics::{ThrowSetup, DEFAULT_CATCH_PLANE_Z, STANDARD_GRAVITY};
use crate::baseline::{FitOptions, PredictorKind};
use crate::controller::{ControllerConfig, BASKET_RADIUS};
use crate::error::{Error, Result};
use crate::models::{InterceptorArch, LocalizerArch};
use crate::sensors::SensorSuite;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalizerKind {
    ColorFilter,
    Cnn,
}

/// One localizer/predictor combination, written `color+ballistic` etc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pipeline {
    pub localizer: LocalizerKind,
    pub predictor: PredictorKind,
}

impl Pipeline {
    pub const ALL: [Pipeline; 4] = [
        Pipeline::new(LocalizerKind::ColorFilter, PredictorKind::Ballistic),
        Pipeline::new(LocalizerKind::ColorFilter, PredictorKind::Network),
        Pipeline::new(LocalizerKind::Cnn, PredictorKind::Ballistic),
        Pipeline::new(LocalizerKind::Cnn, PredictorKind::Network),
    ];

    pub const fn new(localizer: LocalizerKind, predictor: PredictorKind) -> Self {
        Pipeline {
            localizer,
            predictor,
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = match self.localizer {
            LocalizerKind::ColorFilter => "color",
            LocalizerKind::Cnn => "cnn",
        };
        let p = match self.predictor {
            PredictorKind::Ballistic => "ballistic",
            PredictorKind::Network => "cnn",
        };
        write!(f, "{l}+{p}")
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("pipeline must be <color|cnn>+<ballistic|cnn>, got {s:?}"));
        let (l, p) = s.split_once('+').ok_or_else(bad)?;
        let localizer = match l {
            "color" => LocalizerKind::ColorFilter,
            "cnn" => LocalizerKind::Cnn,
            _ => return Err(bad()),
        };
        let predictor = match p {
            "ballistic" => PredictorKind::Ballistic,
            "cnn" => PredictorKind::Network,
            _ => return Err(bad()),
        };
        Ok(Pipeline::new(localizer, predictor))
    }
}

/// How throws are drawn for experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThrowDistribution {
    pub setup: ThrowSetup,
    /// Launch-to-plane depth distances, drawn uniformly.
    pub distances: Vec<f64>,
    /// Nominal TOF for each distance.
    pub nominal_tofs: Vec<f64>,
    /// Depth speed is scaled by U(1 - jitter, 1 + jitter); TOF scales inversely.
    pub speed_jitter: f64,
    /// Half-widths of the uniform aim offset around home on the plane.
    pub aim_jitter_x: f64,
    pub aim_jitter_y: f64,
    /// Reject aims farther than this from home (planar); `None` keeps all.
    pub max_travel: Option<f64>,
    /// Reject throws whose TOF falls below this.
    pub min_tof: Option<f64>,
}

impl Default for ThrowDistribution {
    fn default() -> Self {
        ThrowDistribution {
            setup: ThrowSetup::default(),
            distances: vec![5.12, 6.70],
            nominal_tofs: vec![0.974, 1.206],
            speed_jitter: 0.1,
            aim_jitter_x: 0.3,
            aim_jitter_y: 0.15,
            max_travel: None,
            min_tof: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseProfile {
    Noiseless,
    PaperLike,
}

/// Which ground truth the localizer is trained against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    #[default]
    Truth,
    /// The color filter's own output, as when bootstrapping from the baseline.
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub lr: f64,
    /// When set, the learning rate follows a cosine from `lr` down to this
    /// value over the run; otherwise it stays at `lr`.
    pub final_lr: Option<f64>,
    /// Restore the parameters from the epoch with the lowest validation loss.
    pub keep_best: bool,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 200,
            lr: 1e-4,
            final_lr: None,
            keep_best: true,
            batch_size: 32,
            seed: 7,
        }
    }
}

/// Dataset sizes and augmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub train_throws: usize,
    pub val_throws: usize,
    pub test_throws: usize,
    pub augment_factor: usize,
    pub shift_range: f64,
    /// Localizer frames per split.
    pub localizer_frames: [usize; 3],
    /// Fraction of localizer frames rendered with motion blur.
    pub localizer_blur_fraction: f64,
    pub localizer_max_blur: usize,
    pub localizer_brightness: [f64; 2],
    /// Re-render every training frame each epoch with a fresh scene, blur,
    /// brightness and depth noise at the same object state.
    pub localizer_rerender: bool,
    pub label_source: LabelSource,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train_throws: 379,
            val_throws: 40,
            test_throws: 40,
            augment_factor: 5,
            shift_range: 0.4,
            localizer_frames: [544, 38, 48],
            localizer_blur_fraction: 0.25,
            localizer_max_blur: 24,
            localizer_brightness: [0.8, 1.2],
            localizer_rerender: true,
            label_source: LabelSource::Truth,
        }
    }
}

/// Every knob of an experiment. Unspecified JSON keys take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub pipeline: Pipeline,
    pub profile: NoiseProfile,
    /// Inference latency interval `[min, max]` in seconds, drawn uniformly.
    pub inference_latency: [f64; 2],
    pub sensors: SensorSuite,
    /// Camera exposure used to derive vertical motion blur (0 disables).
    pub exposure: f64,
    pub drag_coeff: f64,
    pub gravity: f64,
    pub z_plane: f64,
    pub basket_radius: f64,
    pub throws: ThrowDistribution,
    pub controller: ControllerConfig,
    pub fit: FitOptions,
    /// Detections required before the first prediction job.
    pub min_detections: usize,
    pub localizer_arch: LocalizerArch,
    pub interceptor_arch: InterceptorArch,
    pub localizer_weights: Option<PathBuf>,
    pub interceptor_weights: Option<PathBuf>,
    pub data: DataConfig,
    /// Interceptor training.
    pub training: TrainingConfig,
    pub localizer_training: TrainingConfig,
    pub seed: u64,
    /// Worker threads for Monte Carlo runs (0 uses the rayon default).
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::paper_like()
    }
}

impl PipelineConfig {
    /// Quantized pixels, noisy depth, 3 cm radar noise, drag 0.03 /m and the
    /// measured inference latency.
    pub fn paper_like() -> Self {
        let mut sensors = SensorSuite::default();
        sensors.camera.depth_noise_sigma = 0.004;
        sensors.camera.depth_quantum = 0.001;
        PipelineConfig {
            pipeline: Pipeline::new(LocalizerKind::ColorFilter, PredictorKind::Ballistic),
            profile: NoiseProfile::PaperLike,
            inference_latency: [0.128, 0.176],
            sensors,
            exposure: 0.012,
            drag_coeff: 0.03,
            gravity: STANDARD_GRAVITY,
            z_plane: DEFAULT_CATCH_PLANE_Z,
            basket_radius: BASKET_RADIUS,
            throws: ThrowDistribution::default(),
            controller: ControllerConfig::default(),
            fit: FitOptions::default(),
            min_detections: 3,
            localizer_arch: LocalizerArch::default(),
            interceptor_arch: InterceptorArch::default(),
            localizer_weights: None,
            interceptor_weights: None,
            data: DataConfig::default(),
            training: TrainingConfig::default(),
            localizer_training: TrainingConfig {
                epochs: 400,
                lr: 1e-3,
                final_lr: Some(1e-4),
                ..TrainingConfig::default()
            },
            seed: 0,
            threads: 0,
        }
    }

    /// Exact positions from both sensors, no drag, no latency.
    pub fn noiseless() -> Self {
        let mut cfg = PipelineConfig::paper_like();
        cfg.profile = NoiseProfile::Noiseless;
        cfg.sensors.ideal_camera = true;
        cfg.sensors.camera.depth_noise_sigma = 0.0;
        cfg.sensors.camera.depth_quantum = 0.0;
        cfg.sensors.radar_noise_sigma = 0.0;
        cfg.exposure = 0.0;
        cfg.drag_coeff = 0.0;
        cfg.inference_latency = [0.0, 0.0];
        cfg
    }

    pub fn for_profile(profile: NoiseProfile) -> Self {
        match profile {
            NoiseProfile::Noiseless => PipelineConfig::noiseless(),
            NoiseProfile::PaperLike => PipelineConfig::paper_like(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.inference_latency;
        if !(lo >= 0.0 && lo <= hi) {
            return Err(Error::InvalidArgument(format!(
                "inference latency interval [{lo}, {hi}] is invalid"
            )));
        }
        if !(self.sensors.camera.rate > 0.0 && self.sensors.radar.rate > 0.0) {
            return Err(Error::InvalidArgument("sensor rates must be > 0".into()));
        }
        let t = &self.throws;
        if t.distances.is_empty() || t.distances.len() != t.nominal_tofs.len() {
            return Err(Error::InvalidArgument(
                "throw distances and nominal TOFs must be non-empty and paired".into(),
            ));
        }
        if !(0.0..1.0).contains(&t.speed_jitter) {
            return Err(Error::InvalidArgument("speed jitter must be in [0, 1)".into()));
        }
        if self.min_detections < 1 {
            return Err(Error::InvalidArgument("min_detections must be >= 1".into()));
        }
        Ok(())
    }

    /// Reads a JSON config. A `"profile"` key selects the base profile that
    /// the remaining keys override.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let profile = match value.get("profile") {
            Some(p) => serde_json::from_value(p.clone())?,
            None => NoiseProfile::PaperLike,
        };
        let mut base = serde_json::to_value(PipelineConfig::for_profile(profile))?;
        merge_json(&mut base, value);
        let cfg: PipelineConfig = serde_json::from_value(base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PipelineConfig::from_json(&text)
    }
}

fn merge_json(base: &mut serde_json::Value, overlay: serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipeline_names_round_trip() {
        for p in Pipeline::ALL {
            assert_eq!(p.to_string().parse::<Pipeline>().unwrap(), p);
        }
        assert!("color".parse::<Pipeline>().is_err());
        assert!("cnn+kalman".parse::<Pipeline>().is_err());
    }

    #[test]
    fn json_overrides_nested_keys() {
        let cfg = PipelineConfig::from_json(
            r#"{"profile":"noiseless","controller":{"gain":4.0},"pipeline":{"localizer":"cnn","predictor":"network"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.profile, NoiseProfile::Noiseless);
        assert_eq!(cfg.controller.gain, 4.0);
        assert_eq!(cfg.controller.v_max, ControllerConfig::default().v_max);
        assert_eq!(cfg.drag_coeff, 0.0);
        assert_eq!(cfg.pipeline.localizer, LocalizerKind::Cnn);
    }

    #[test]
    fn json_round_trip() {
        let cfg = PipelineConfig::paper_like();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(PipelineConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn latency_interval_validated() {
        let mut cfg = PipelineConfig::paper_like();
        cfg.inference_latency = [0.2, 0.1];
        assert!(cfg.validate().is_err());
    }
}
