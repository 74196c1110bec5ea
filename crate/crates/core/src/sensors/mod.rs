//! Camera and radar simulation, the baseline localizers, and the fused
//! detection stream.

mod camera;
mod radar;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

pub use camera::{
    color_filter_localize, object_coverage, render_frame, rgb_to_hsv, BlurDirection, CameraModel,
    Frame, HsvRange, Pose, Scene, PIGLET_PINK,
};
pub use radar::{radar_filter, radar_scan, RadarModel, RadarReturn};

use crate::ballistics::Vec3;
use crate::error::{Error, Result};
use crate::util::fmt_sig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Camera = 0,
    Radar = 1,
}

impl Source {
    pub fn flag(self) -> u8 {
        self as u8
    }

    pub fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            0 => Some(Source::Camera),
            1 => Some(Source::Radar),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub position: Vec3,
    pub t: f64,
    pub source: Source,
}

/// Time-ordered detections from both sensors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionBuffer {
    detections: Vec<Detection>,
}

impl DetectionBuffer {
    pub fn new() -> Self {
        DetectionBuffer::default()
    }

    pub fn from_vec(detections: Vec<Detection>) -> Result<Self> {
        check_ordered(&detections)?;
        Ok(DetectionBuffer { detections })
    }

    pub fn push(&mut self, detection: Detection) -> Result<()> {
        if let Some(last) = self.detections.last() {
            if detection.t < last.t {
                return Err(Error::Unordered(self.detections.len()));
            }
        }
        if !(detection.t >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "detection time must be >= 0, got {}",
                detection.t
            )));
        }
        self.detections.push(detection);
        Ok(())
    }

    pub fn as_slice(&self) -> &[Detection] {
        &self.detections
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    /// First `n` detections as a new buffer.
    pub fn prefix(&self, n: usize) -> DetectionBuffer {
        DetectionBuffer {
            detections: self.detections[..n.min(self.len())].to_vec(),
        }
    }

    /// Copy with every position shifted by `offset`.
    pub fn shifted(&self, offset: Vec3) -> DetectionBuffer {
        DetectionBuffer {
            detections: self
                .detections
                .iter()
                .map(|d| Detection {
                    position: d.position + offset,
                    ..*d
                })
                .collect(),
        }
    }

    pub fn count(&self, source: Source) -> usize {
        self.detections.iter().filter(|d| d.source == source).count()
    }
}

fn check_ordered(detections: &[Detection]) -> Result<()> {
    for (i, w) in detections.windows(2).enumerate() {
        if w[1].t < w[0].t {
            return Err(Error::Unordered(i + 1));
        }
    }
    Ok(())
}

/// Stable merge by timestamp; on equal timestamps camera precedes radar.
pub fn merge_streams(camera: &[Detection], radar: &[Detection]) -> Result<DetectionBuffer> {
    check_ordered(camera)?;
    check_ordered(radar)?;
    let mut out = Vec::with_capacity(camera.len() + radar.len());
    let (mut i, mut j) = (0, 0);
    while i < camera.len() && j < radar.len() {
        if camera[i].t <= radar[j].t {
            out.push(camera[i]);
            i += 1;
        } else {
            out.push(radar[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&camera[i..]);
    out.extend_from_slice(&radar[j..]);
    Ok(DetectionBuffer { detections: out })
}

pub const DETECTION_CSV_HEADER: &str = "t,x,y,z,source";

/// Writes detections as `t,x,y,z,source` with 9 significant digits.
pub fn write_detections_csv<W: Write>(mut out: W, detections: &[Detection]) -> std::io::Result<()> {
    writeln!(out, "{DETECTION_CSV_HEADER}")?;
    for d in detections {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_sig(d.t),
            fmt_sig(d.position.x),
            fmt_sig(d.position.y),
            fmt_sig(d.position.z),
            d.source.flag()
        )?;
    }
    Ok(())
}

pub fn read_detections_csv<R: Read>(input: R) -> Result<Vec<Detection>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for record in reader.deserialize::<(f64, f64, f64, f64, u8)>() {
        let (t, x, y, z, flag) = record?;
        let source = Source::from_flag(flag)
            .ok_or_else(|| Error::InvalidArgument(format!("bad source flag {flag}")))?;
        out.push(Detection {
            position: Vec3::new(x, y, z),
            t,
            source,
        });
    }
    Ok(out)
}

/// Everything needed to turn ground truth into raw sensor data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorSuite {
    pub camera: CameraModel,
    pub radar: RadarModel,
    pub scene: Scene,
    pub hsv: HsvRange,
    pub object_radius: f64,
    /// Minimum in-range pixel count before the color filter reports a detection.
    pub min_pixels: usize,
    pub radar_noise_sigma: f64,
    /// When set, the camera reports exact positions instead of rendered frames.
    pub ideal_camera: bool,
}

impl Default for SensorSuite {
    fn default() -> Self {
        SensorSuite {
            camera: CameraModel::reduced(),
            radar: RadarModel::default(),
            scene: Scene::default(),
            hsv: HsvRange::default(),
            object_radius: 0.12,
            min_pixels: 10,
            radar_noise_sigma: 0.03,
            ideal_camera: false,
        }
    }
}

impl SensorSuite {
    pub fn render(&self, object_pos: Vec3, seed: u64, t: f64) -> Result<Frame> {
        render_frame(object_pos, self.object_radius, &self.camera, &self.scene, seed, t)
    }

    pub fn color_filter(&self, frame: &Frame) -> Option<Detection> {
        color_filter_localize(frame, &self.hsv, &self.camera, self.min_pixels)
    }

    pub fn radar_detect(&self, pos: Vec3, vel: Vec3, seed: u64, t: f64) -> Option<Detection> {
        let returns = radar_scan(pos, vel, &self.radar, seed, self.radar_noise_sigma);
        radar_filter(&returns, t, self.radar.v_static)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(t: f64, source: Source) -> Detection {
        Detection {
            position: Vec3::new(t, 0.0, 0.0),
            t,
            source,
        }
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let cam = vec![det(0.0, Source::Camera), det(0.1, Source::Camera)];
        assert_eq!(merge_streams(&cam, &[]).unwrap().as_slice(), &cam[..]);
        assert_eq!(merge_streams(&[], &cam).unwrap().as_slice(), &cam[..]);
    }

    #[test]
    fn merge_interleaves_and_breaks_ties_camera_first() {
        let cam = vec![det(0.0, Source::Camera), det(0.2, Source::Camera), det(0.3, Source::Camera)];
        let rad = vec![det(0.1, Source::Radar), det(0.2, Source::Radar)];
        let merged = merge_streams(&cam, &rad).unwrap();
        let ts: Vec<f64> = merged.as_slice().iter().map(|d| d.t).collect();
        assert_eq!(ts, vec![0.0, 0.1, 0.2, 0.2, 0.3]);
        assert_eq!(merged.as_slice()[2].source, Source::Camera);
        assert_eq!(merged.as_slice()[3].source, Source::Radar);
    }

    #[test]
    fn merge_rejects_unordered() {
        let cam = vec![det(0.2, Source::Camera), det(0.1, Source::Camera)];
        assert!(matches!(merge_streams(&cam, &[]), Err(Error::Unordered(1))));
    }

    #[test]
    fn csv_layout() {
        let d = vec![Detection {
            position: Vec3::new(0.123456789123, -1.5, 5.0),
            t: 0.1,
            source: Source::Radar,
        }];
        let mut buf = Vec::new();
        write_detections_csv(&mut buf, &d).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,x,y,z,source\n0.1,0.123456789,-1.5,5,1\n");
        let back = read_detections_csv(text.as_bytes()).unwrap();
        assert_eq!(back[0].source, Source::Radar);
        assert!((back[0].position.x - 0.123456789).abs() < 1e-12);
    }
}
