use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{frame_to_tensor, pack_detections, position_to_target};
use crate::ballistics::Vec3;
use crate::error::{Error, Result};
use crate::harness::{
    observe_throw, sample_throw, FrameLocalizer, LabelSource, NoiseProfile, PipelineConfig,
};
use crate::nn::Tensor;
use crate::sensors::{BlurDirection, Detection, Frame};
use crate::util::{derive_seed, fmt_sig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn stream(self) -> u64 {
        100 + self as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub kind: String,
    pub seed: u64,
    pub profile: NoiseProfile,
    pub label_source: LabelSource,
    pub drag_coeff: f64,
    /// Sizes of train/val/test, after augmentation.
    pub splits: [usize; 3],
    pub augment_factor: usize,
    pub shift_range: f64,
}

/// Detections of one throw and its true crossing on the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub seed: u64,
    pub detections: Vec<Detection>,
    pub label: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub manifest: DatasetManifest,
    pub train: Vec<TrajectorySample>,
    pub val: Vec<TrajectorySample>,
    pub test: Vec<TrajectorySample>,
}

impl TrajectoryDataset {
    pub fn split(&self, s: Split) -> &[TrajectorySample] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

fn throw_samples(cfg: &PipelineConfig, seed: u64, split: Split, n: usize) -> Result<Vec<TrajectorySample>> {
    let base = derive_seed(seed, split.stream());
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(base, i);
            let throw = sample_throw(cfg, s)?;
            let buf = observe_throw(cfg, &throw, FrameLocalizer::ColorFilter, s)?;
            Ok(TrajectorySample {
                seed: s,
                detections: buf.as_slice().to_vec(),
                label: [throw.crossing.x, throw.crossing.y],
            })
        })
        .collect()
}

/// Simulated throws observed through the color-filter baseline, labelled
/// with the true plane crossing. The train split is shift-augmented.
pub fn gen_trajectory_data(cfg: &PipelineConfig, seed: u64) -> Result<TrajectoryDataset> {
    let d = &cfg.data;
    let train = throw_samples(cfg, seed, Split::Train, d.train_throws)?;
    let train = augment_trajectories(&train, d.augment_factor, d.shift_range, derive_seed(seed, 200))?;
    let val = throw_samples(cfg, seed, Split::Val, d.val_throws)?;
    let test = throw_samples(cfg, seed, Split::Test, d.test_throws)?;
    Ok(TrajectoryDataset {
        manifest: DatasetManifest {
            kind: "trajectory".into(),
            seed,
            profile: cfg.profile,
            label_source: LabelSource::Truth,
            drag_coeff: cfg.drag_coeff,
            splits: [train.len(), val.len(), test.len()],
            augment_factor: d.augment_factor,
            shift_range: d.shift_range,
        },
        train,
        val,
        test,
    })
}

/// Originals followed, per trajectory, by `factor - 1` copies shifted by a
/// uniform horizontal/vertical offset applied to detections and label alike.
pub fn augment_trajectories(
    samples: &[TrajectorySample],
    factor: usize,
    shift_range: f64,
    seed: u64,
) -> Result<Vec<TrajectorySample>> {
    if factor == 0 {
        return Err(Error::InvalidArgument("augmentation factor must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(samples.len() * factor);
    for (i, s) in samples.iter().enumerate() {
        out.push(s.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        for _ in 1..factor {
            let (dx, dy) = if shift_range > 0.0 {
                (
                    rng.random_range(-shift_range..=shift_range),
                    rng.random_range(-shift_range..=shift_range),
                )
            } else {
                (0.0, 0.0)
            };
            let offset = Vec3::new(dx, dy, 0.0);
            out.push(TrajectorySample {
                seed: s.seed,
                detections: s
                    .detections
                    .iter()
                    .map(|d| Detection {
                        position: d.position + offset,
                        ..*d
                    })
                    .collect(),
                label: [s.label[0] + dx, s.label[1] + dy],
            });
        }
    }
    Ok(out)
}

/// One training pair per detection prefix of at least `min_detections`.
pub fn snapshots(samples: &[TrajectorySample], min_detections: usize) -> (Vec<Tensor>, Vec<Tensor>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in samples {
        for n in min_detections.max(1)..=s.detections.len() {
            let input = pack_detections(&s.detections[..n]).expect("non-empty prefix");
            xs.push(input.to_tensor());
            ys.push(
                Tensor::new(vec![2], vec![s.label[0] as f32, s.label[1] as f32])
                    .expect("label shape"),
            );
        }
    }
    (xs, ys)
}

/// CSV detections per split (with a leading trajectory index), labels and a
/// JSON manifest.
pub fn write_trajectory_data(dir: &Path, data: &TrajectoryDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for split in Split::ALL {
        let path = dir.join(format!("{}_detections.csv", split.name()));
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(f);
        let io = |e| Error::io(&path, e);
        writeln!(w, "traj,t,x,y,z,source").map_err(io)?;
        for (i, s) in data.split(split).iter().enumerate() {
            for d in &s.detections {
                writeln!(
                    w,
                    "{i},{},{},{},{},{}",
                    fmt_sig(d.t),
                    fmt_sig(d.position.x),
                    fmt_sig(d.position.y),
                    fmt_sig(d.position.z),
                    d.source.flag()
                )
                .map_err(io)?;
            }
        }
        w.flush().map_err(io)?;

        let path = dir.join(format!("{}_labels.csv", split.name()));
        let mut text = String::from("traj,seed,label_x,label_y\n");
        for (i, s) in data.split(split).iter().enumerate() {
            text.push_str(&format!(
                "{i},{},{},{}\n",
                s.seed,
                fmt_sig(s.label[0]),
                fmt_sig(s.label[1])
            ));
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    write_manifest(dir, &data.manifest)
}

fn write_manifest(dir: &Path, manifest: &DatasetManifest) -> Result<()> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizerSample {
    pub seed: u64,
    pub frame: Frame,
    pub label: Vec3,
    pub truth: Vec3,
    pub velocity: Vec3,
    pub blur: usize,
    pub brightness: f64,
}

impl LocalizerSample {
    pub fn input(&self) -> Tensor {
        frame_to_tensor(&self.frame)
    }

    pub fn target(&self) -> Tensor {
        Tensor::new(vec![3], position_to_target(self.label).to_vec()).expect("target shape")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizerDataset {
    pub manifest: DatasetManifest,
    pub train: Vec<LocalizerSample>,
    pub val: Vec<LocalizerSample>,
    pub test: Vec<LocalizerSample>,
}

impl LocalizerDataset {
    pub fn split(&self, s: Split) -> &[LocalizerSample] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Renders one frame of an object on a sampled throw with random clutter,
/// blur and brightness.
pub fn localizer_sample(cfg: &PipelineConfig, seed: u64, blur: Option<usize>) -> Result<LocalizerSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..64u64 {
        let throw = sample_throw(cfg, derive_seed(seed, attempt))?;
        let t = rng.random_range(0.0..throw.t_cross);
        let state = throw.trajectory.state_at(t);
        if !cfg.sensors.camera.sees(state.position) {
            continue;
        }
        let view = View {
            seed,
            t,
            position: state.position,
            velocity: state.velocity,
        };
        if let Some(sample) = view.render(cfg, &mut rng, blur)? {
            return Ok(sample);
        }
    }
    Err(Error::InvalidArgument(
        "could not place the object in view of the camera".into(),
    ))
}

struct View {
    seed: u64,
    t: f64,
    position: Vec3,
    velocity: Vec3,
}

impl View {
    /// Draws blur, brightness and scene, then renders. `None` when a
    /// baseline label is requested and the color filter misses.
    fn render(&self, cfg: &PipelineConfig, rng: &mut ChaCha8Rng, blur: Option<usize>) -> Result<Option<LocalizerSample>> {
        let d = &cfg.data;
        let blur_len = match blur {
            Some(b) => b,
            None if rng.random_bool(d.localizer_blur_fraction) => rng.random_range(1..=d.localizer_max_blur.max(1)),
            None => 0,
        };
        let brightness = rng.random_range(d.localizer_brightness[0]..=d.localizer_brightness[1]);
        let scene_seed = rng.random::<u64>();
        let mut sensors = cfg.sensors;
        sensors.camera.blur_len = blur_len;
        let (_, v, _) = sensors.camera.project(self.position);
        let (_, v_then, _) = sensors.camera.project(self.position - self.velocity * 0.01);
        sensors.camera.blur_direction = if v_then < v {
            BlurDirection::Up
        } else {
            BlurDirection::Down
        };
        sensors.scene.brightness = brightness;
        let frame = sensors.render(self.position, scene_seed, self.t)?;
        let label = match d.label_source {
            LabelSource::Truth => self.position,
            LabelSource::Baseline => match sensors.color_filter(&frame) {
                Some(det) => det.position,
                None => return Ok(None),
            },
        };
        Ok(Some(LocalizerSample {
            seed: self.seed,
            frame,
            label,
            truth: self.position,
            velocity: self.velocity,
            blur: blur_len,
            brightness,
        }))
    }
}

impl LocalizerSample {
    /// Same object state under a fresh draw of scene, brightness, blur and
    /// sensor noise. Falls back to a clone when a baseline label cannot be
    /// formed.
    pub fn rerender(&self, cfg: &PipelineConfig, round: u64) -> Result<LocalizerSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed ^ 0x7e2e_11de_5ca1_ab1e, round));
        let view = View {
            seed: self.seed,
            t: self.frame.timestamp,
            position: self.truth,
            velocity: self.velocity,
        };
        Ok(view.render(cfg, &mut rng, None)?.unwrap_or_else(|| self.clone()))
    }
}

pub fn gen_localizer_data(cfg: &PipelineConfig, seed: u64) -> Result<LocalizerDataset> {
    let make = |split: Split, n: usize| -> Result<Vec<LocalizerSample>> {
        let base = derive_seed(seed, 300 + split as u64);
        (0..n as u64)
            .into_par_iter()
            .map(|i| localizer_sample(cfg, derive_seed(base, i), None))
            .collect()
    };
    let [a, b, c] = cfg.data.localizer_frames;
    let train = make(Split::Train, a)?;
    let val = make(Split::Val, b)?;
    let test = make(Split::Test, c)?;
    Ok(LocalizerDataset {
        manifest: DatasetManifest {
            kind: "localizer".into(),
            seed,
            profile: cfg.profile,
            label_source: cfg.data.label_source,
            drag_coeff: cfg.drag_coeff,
            splits: [train.len(), val.len(), test.len()],
            augment_factor: 1,
            shift_range: 0.0,
        },
        train,
        val,
        test,
    })
}

/// Labels CSV, raw little-endian f32 frames and a JSON manifest.
pub fn write_localizer_data(dir: &Path, data: &LocalizerDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut labels = String::from("index,split,seed,x,y,z,blur,brightness\n");
    let path = dir.join("frames.bin");
    let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(f);
    let mut index = 0;
    for split in Split::ALL {
        for s in data.split(split) {
            labels.push_str(&format!(
                "{index},{},{},{},{},{},{},{}\n",
                split.name(),
                s.seed,
                fmt_sig(s.label.x),
                fmt_sig(s.label.y),
                fmt_sig(s.label.z),
                s.blur,
                fmt_sig(s.brightness)
            ));
            for v in &s.frame.data {
                w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(&path, e))?;
            }
            index += 1;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let lpath = dir.join("labels.csv");
    fs::write(&lpath, labels).map_err(|e| Error::io(&lpath, e))?;
    write_manifest(dir, &data.manifest)
}
