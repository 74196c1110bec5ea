//! The localization and interception networks, their features, datasets and
//! training loop.

mod data;
mod train;

pub use data::{
    augment_trajectories, gen_localizer_data, localizer_sample, gen_trajectory_data, snapshots, write_localizer_data,
    write_trajectory_data, DatasetManifest, LocalizerDataset, LocalizerSample, Split,
    TrajectoryDataset, TrajectorySample,
};
pub use train::{
    evaluate, interceptor_rmse, localizer_error, losses_csv, train, train_interceptor, train_localizer,
    InterceptorTraining, LocalizerTraining, TrainReport,
};

use serde::{Deserialize, Serialize};

use crate::ballistics::Vec3;
use crate::baseline::{fit_trajectory_with, FitOptions, InterceptionPoint, PredictorKind};
use crate::error::{Error, Result};
use crate::nn::{Network, NetworkBuilder, Tensor};
use crate::sensors::{CameraModel, Detection, DetectionBuffer, Frame, Source};

pub const WINDOW: usize = 10;
pub const FEATURES: usize = 5;

/// Conv widths and dense width of the localizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizerArch {
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    /// Zero padding per side; 1 keeps 3x3 convolutions size-preserving.
    pub pad: usize,
    pub dense: usize,
    pub seed: u64,
}

impl Default for LocalizerArch {
    fn default() -> Self {
        LocalizerArch {
            conv_channels: vec![16, 32, 64, 128],
            kernel: 3,
            pad: 1,
            dense: 128,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterceptorArch {
    pub conv_channels: usize,
    pub kernel: usize,
    pub dense: Vec<usize>,
    pub seed: u64,
}

impl Default for InterceptorArch {
    fn default() -> Self {
        InterceptorArch {
            conv_channels: 32,
            kernel: 3,
            dense: vec![64, 32],
            seed: 2,
        }
    }
}

/// Conv/PReLU/pool stages over a 4-channel RGB-D frame, then Dense+PReLU and
/// a 3-output head for (x, y, z).
pub fn build_localizer_with(arch: &LocalizerArch, input_h: usize, input_w: usize) -> Result<Network> {
    let mut b = NetworkBuilder::new(vec![4, input_h, input_w], arch.seed);
    for &c in &arch.conv_channels {
        b = b.conv2d(c, arch.kernel, arch.pad)?.prelu()?.maxpool2d()?;
    }
    Ok(b.flatten()?.dense(arch.dense)?.prelu()?.dense(3)?.build())
}

pub fn build_localizer(input_h: usize, input_w: usize) -> Result<Network> {
    build_localizer_with(&LocalizerArch::default(), input_h, input_w)
}

/// Conv1D over the detection window, then dense layers down to (x, y).
pub fn build_interceptor_with(arch: &InterceptorArch) -> Result<Network> {
    let mut b = NetworkBuilder::new(vec![WINDOW, FEATURES], arch.seed)
        .conv1d(arch.conv_channels, arch.kernel)?
        .prelu()?
        .flatten()?;
    for &w in &arch.dense {
        b = b.dense(w)?.prelu()?;
    }
    Ok(b.dense(2)?.build())
}

pub fn build_interceptor() -> Result<Network> {
    build_interceptor_with(&InterceptorArch::default())
}

/// Last detections as a `WINDOW x FEATURES` matrix of
/// `(x, y, z, elapsed, flag)`, oldest first, zero rows in front when short.
#[derive(Debug, Clone, PartialEq)]
pub struct InterceptorInput {
    pub rows: [[f64; FEATURES]; WINDOW],
}

impl InterceptorInput {
    /// Number of populated rows.
    pub fn len(&self) -> usize {
        self.rows.iter().filter(|r| r.iter().any(|&v| v != 0.0)).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Detections stored in the populated rows; times are relative to the
    /// first detection of the episode.
    pub fn unpack(&self) -> Vec<Detection> {
        let start = WINDOW - self.len();
        self.rows[start..]
            .iter()
            .map(|r| Detection {
                position: Vec3::new(r[0], r[1], r[2]),
                t: r[3],
                source: if r[4] != 0.0 { Source::Radar } else { Source::Camera },
            })
            .collect()
    }

    /// Network input; positions and time are scaled to order one.
    pub fn to_tensor(&self) -> Tensor {
        let mut data = Vec::with_capacity(WINDOW * FEATURES);
        for r in &self.rows {
            for (v, s) in r.iter().zip(FEATURE_SCALE) {
                data.push((v * s) as f32);
            }
        }
        Tensor::new(vec![WINDOW, FEATURES], data).expect("fixed window shape")
    }
}

const FEATURE_SCALE: [f64; FEATURES] = [1.0, 1.0, 0.2, 1.0, 1.0];

pub fn pack_features(buffer: &DetectionBuffer) -> Result<InterceptorInput> {
    pack_detections(buffer.as_slice())
}

pub fn pack_detections(detections: &[Detection]) -> Result<InterceptorInput> {
    let first = detections.first().ok_or(Error::EmptyBuffer)?;
    let take = detections.len().min(WINDOW);
    let mut rows = [[0.0; FEATURES]; WINDOW];
    for (row, d) in rows[WINDOW - take..]
        .iter_mut()
        .zip(&detections[detections.len() - take..])
    {
        *row = [
            d.position.x,
            d.position.y,
            d.position.z,
            d.t - first.t,
            f64::from(d.source.flag()),
        ];
    }
    Ok(InterceptorInput { rows })
}

/// Trained interception network.
#[derive(Debug, Clone, PartialEq)]
pub struct InterceptorModel {
    pub net: Network,
}

impl InterceptorModel {
    pub fn new(net: Network) -> Self {
        InterceptorModel { net }
    }

    pub fn predict_xy(&self, input: &InterceptorInput) -> Result<(f64, f64)> {
        let y = self.net.infer(&input.to_tensor())?;
        Ok((f64::from(y.data()[0]), f64::from(y.data()[1])))
    }
}

/// Predicts the crossing with the network; the crossing time comes from a
/// straight-line depth fit when at least 3 detections exist.
pub fn nn_predict_interception(
    model: &InterceptorModel,
    buffer: &DetectionBuffer,
    z_plane: f64,
) -> Result<InterceptionPoint> {
    let input = pack_features(buffer)?;
    let (x, y) = model.predict_xy(&input)?;
    let t_cross = fit_trajectory_with(buffer.as_slice(), 0.0, &FitOptions::default())
        .ok()
        .and_then(|est| {
            let (a, b) = est.z_coeffs;
            (b < 0.0).then(|| est.t0 + (z_plane - a) / b)
        });
    Ok(InterceptionPoint {
        x,
        y,
        z_plane,
        t_cross,
        source: PredictorKind::Network,
    })
}

const DEPTH_SCALE: f32 = 0.1;
/// Output is (x, y, z / Z_SCALE).
const Z_SCALE: f64 = 1.0;

/// RGB-D frame as a `[4, h, w]` tensor, each channel centered near zero
/// with depth scaled to order one.
pub fn frame_to_tensor(frame: &Frame) -> Tensor {
    let n = frame.width * frame.height;
    let mut data = frame.data.clone();
    for c in &mut data[..3 * n] {
        *c -= 0.5;
    }
    for d in &mut data[3 * n..] {
        *d = *d * DEPTH_SCALE - 0.5;
    }
    Tensor::new(vec![4, frame.height, frame.width], data).expect("frame layout")
}

pub fn position_to_target(p: Vec3) -> [f32; 3] {
    [p.x as f32, p.y as f32, (p.z / Z_SCALE) as f32]
}

pub fn target_to_position(t: &[f32]) -> Vec3 {
    Vec3::new(f64::from(t[0]), f64::from(t[1]), f64::from(t[2]) * Z_SCALE)
}

/// Trained localization network.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizerModel {
    pub net: Network,
}

impl LocalizerModel {
    pub fn new(net: Network) -> Self {
        LocalizerModel { net }
    }

    pub fn estimate(&self, frame: &Frame) -> Result<Vec3> {
        let y = self.net.infer(&frame_to_tensor(frame))?;
        Ok(target_to_position(y.data()))
    }

    /// Camera detection from the network, rejected when the estimate falls
    /// outside the camera's view.
    pub fn localize(&self, frame: &Frame, camera: &CameraModel) -> Result<Option<Detection>> {
        let p = self.estimate(frame)?;
        if !p.is_finite() || !camera.sees(p) {
            return Ok(None);
        }
        Ok(Some(Detection {
            position: p,
            t: frame.timestamp,
            source: Source::Camera,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(i: usize, source: Source) -> Detection {
        Detection {
            position: Vec3::new(i as f64, 1.0 + i as f64, 5.0 - i as f64),
            t: 0.1 + 0.03 * i as f64,
            source,
        }
    }

    #[test]
    fn localizer_shapes() {
        assert_eq!(build_localizer(60, 80).unwrap().output_shape(), &[3]);
        assert_eq!(build_localizer(12, 16).unwrap().output_shape(), &[3]);
    }

    #[test]
    fn interceptor_shapes() {
        let net = build_interceptor().unwrap();
        assert_eq!(net.input_shape(), &[10, 5]);
        assert_eq!(net.output_shape(), &[2]);
        let y = net.infer(&Tensor::zeros(vec![10, 5])).unwrap();
        assert!(y.all_finite());
    }

    #[test]
    fn short_buffer_is_front_padded() {
        let buf = DetectionBuffer::from_vec((0..3).map(|i| det(i, Source::Camera)).collect()).unwrap();
        let f = pack_features(&buf).unwrap();
        assert!(f.rows[..7].iter().all(|r| r.iter().all(|&v| v == 0.0)));
        assert_eq!(f.rows[7][0], 0.0);
        assert_eq!(f.rows[8][0], 1.0);
        assert_eq!(f.rows[9][3], 0.03 * 2.0 + 0.1 - 0.1);
    }

    #[test]
    fn long_buffer_keeps_last_ten() {
        let buf = DetectionBuffer::from_vec((0..14).map(|i| det(i, Source::Camera)).collect()).unwrap();
        let f = pack_features(&buf).unwrap();
        assert_eq!(f.rows[0][0], 4.0);
        assert_eq!(f.rows[9][0], 13.0);
        // elapsed is measured from the episode's first detection
        assert!((f.rows[0][3] - 0.12).abs() < 1e-12);
    }

    #[test]
    fn flags_follow_sources() {
        let sources = [Source::Camera, Source::Radar, Source::Camera, Source::Radar, Source::Radar];
        let buf = DetectionBuffer::from_vec(
            sources.iter().enumerate().map(|(i, &s)| det(i + 1, s)).collect(),
        )
        .unwrap();
        let f = pack_features(&buf).unwrap();
        let back: Vec<Source> = f.unpack().iter().map(|d| d.source).collect();
        assert_eq!(back, sources);
    }

    #[test]
    fn empty_buffer_errors() {
        assert!(matches!(pack_features(&DetectionBuffer::new()), Err(Error::EmptyBuffer)));
    }
}
