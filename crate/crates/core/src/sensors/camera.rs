//! Synthetic RGB-D camera and the HSV color-filter localizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Detection, Source};
use crate::ballistics::Vec3;
use crate::error::{Error, Result};
use crate::util::derive_seed;

/// Rigid transform from camera frame (x right, y down, z optical axis) to the
/// robot frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Columns are the camera axes expressed in robot coordinates.
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
}

impl Pose {
    /// Camera at `position` looking down +z (toward the thrower), tilted up by
    /// `pitch` radians.
    pub fn facing_thrower(position: Vec3, pitch: f64) -> Self {
        let (s, c) = pitch.sin_cos();
        let right = [-1.0, 0.0, 0.0];
        let down = [0.0, -c, s];
        let forward = [0.0, s, c];
        let mut rotation = [[0.0; 3]; 3];
        for row in 0..3 {
            rotation[row] = [right[row], down[row], forward[row]];
        }
        Pose {
            rotation,
            translation: position,
        }
    }

    pub fn to_robot(&self, p_cam: Vec3) -> Vec3 {
        let r = &self.rotation;
        let p = p_cam.to_array();
        let mut out = [0.0; 3];
        for (row, o) in out.iter_mut().enumerate() {
            *o = r[row][0] * p[0] + r[row][1] * p[1] + r[row][2] * p[2];
        }
        Vec3::from_array(out) + self.translation
    }

    pub fn to_camera(&self, p_robot: Vec3) -> Vec3 {
        let r = &self.rotation;
        let d = (p_robot - self.translation).to_array();
        let mut out = [0.0; 3];
        for (col, o) in out.iter_mut().enumerate() {
            *o = r[0][col] * d[0] + r[1][col] * d[1] + r[2][col] * d[2];
        }
        Vec3::from_array(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlurDirection {
    /// Trail extends above the object in the image (object moving down).
    Up,
    /// Trail extends below the object in the image (object moving up).
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub pose: Pose,
    pub rate: f64,
    /// Depth noise standard deviation at 1 m; scales with depth squared.
    pub depth_noise_sigma: f64,
    /// Depth readings are rounded to this step (0 disables).
    pub depth_quantum: f64,
    pub blur_len: usize,
    pub blur_direction: BlurDirection,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel::reduced()
    }
}

impl CameraModel {
    /// 60x80 frame with a ~40 degree horizontal field of view.
    pub fn reduced() -> Self {
        CameraModel::with_resolution(60, 80)
    }

    /// Same optics as [`CameraModel::reduced`] at `height` x `width`.
    pub fn with_resolution(height: usize, width: usize) -> Self {
        let scale = width as f64 / 80.0;
        CameraModel {
            width,
            height,
            fx: 110.0 * scale,
            fy: 110.0 * scale,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            pose: Pose::facing_thrower(Vec3::new(0.0, 0.5, -1.5), 8f64.to_radians()),
            rate: 30.0,
            depth_noise_sigma: 0.0,
            depth_quantum: 0.0,
            blur_len: 0,
            blur_direction: BlurDirection::Up,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.rate > 0.0) {
            return Err(Error::InvalidArgument(
                "camera needs fx, fy, rate > 0".into(),
            ));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("empty camera frame".into()));
        }
        Ok(())
    }

    /// Continuous image coordinates (u, v) and depth of a robot-frame point.
    pub fn project(&self, p_robot: Vec3) -> (f64, f64, f64) {
        let p = self.pose.to_camera(p_robot);
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy, p.z)
    }

    /// Robot-frame point for continuous image coordinates and depth.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let p = Vec3::new(
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        );
        self.pose.to_robot(p)
    }

    /// True when the projected center lies inside the image and in front of
    /// the camera.
    pub fn sees(&self, p_robot: Vec3) -> bool {
        let (u, v, d) = self.project(p_robot);
        d > 0.0 && u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

/// Background appearance shared by every frame of a scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scene {
    pub wall_depth: f64,
    pub clutter_rects: usize,
    /// Global illumination scale applied to every color.
    pub brightness: f64,
}

impl Default for Scene {
    fn default() -> Self {
        Scene {
            wall_depth: 9.0,
            clutter_rects: 6,
            brightness: 1.0,
        }
    }
}

/// Color of the thrown object.
pub const PIGLET_PINK: [f32; 3] = [0.95, 0.45, 0.70];

/// RGB-D image. Planes are stored channel-major: R, G, B, then D.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
    pub timestamp: f64,
}

impl Frame {
    pub fn new(height: usize, width: usize, timestamp: f64) -> Self {
        Frame {
            width,
            height,
            data: vec![0.0; 4 * width * height],
            timestamp,
        }
    }

    pub fn plane(&self, channel: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn rgb(&self, row: usize, col: usize) -> [f32; 3] {
        let n = self.width * self.height;
        let i = row * self.width + col;
        [self.data[i], self.data[n + i], self.data[2 * n + i]]
    }

    pub fn depth(&self, row: usize, col: usize) -> f32 {
        self.data[3 * self.width * self.height + row * self.width + col]
    }

    fn set(&mut self, row: usize, col: usize, rgb: [f32; 3], depth: f32) {
        let n = self.width * self.height;
        let i = row * self.width + col;
        self.data[i] = rgb[0];
        self.data[n + i] = rgb[1];
        self.data[2 * n + i] = rgb[2];
        self.data[3 * n + i] = depth;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsvRange {
    pub h_min: f64,
    pub h_max: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for HsvRange {
    /// Pink band matched to [`PIGLET_PINK`].
    fn default() -> Self {
        HsvRange {
            h_min: 310.0,
            h_max: 350.0,
            s_min: 0.15,
            s_max: 1.0,
            v_min: 0.35,
            v_max: 1.0,
        }
    }
}

impl HsvRange {
    pub fn contains(&self, (h, s, v): (f64, f64, f64)) -> bool {
        let hue_ok = if self.h_min <= self.h_max {
            h >= self.h_min && h <= self.h_max
        } else {
            h >= self.h_min || h <= self.h_max
        };
        hue_ok && s >= self.s_min && s <= self.s_max && v >= self.v_min && v <= self.v_max
    }
}

/// Hexcone RGB to HSV. Hue in degrees [0, 360); achromatic input has hue 0.
pub fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let (r, g, b) = (r.clamp(0.0, 1.0), g.clamp(0.0, 1.0), b.clamp(0.0, 1.0));
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    if delta == 0.0 {
        return (0.0, 0.0, v);
    }
    let s = delta / max;
    let h = if max == r {
        60.0 * ((g - b) / delta)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let h = if h < 0.0 { h + 360.0 } else { h };
    (if h >= 360.0 { h - 360.0 } else { h }, s, v)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f32; 3] {
    let c = v * s;
    let hp = (h / 60.0).rem_euclid(6.0);
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [(r + m) as f32, (g + m) as f32, (b + m) as f32]
}

/// Fractional object coverage per pixel (row-major), including the vertical
/// motion-blur trail.
pub fn object_coverage(object_pos: Vec3, object_radius: f64, camera: &CameraModel) -> Result<Vec<f32>> {
    camera.validate()?;
    let (u0, v0, depth) = camera.project(object_pos);
    if !(depth > 0.0) {
        return Err(Error::BehindCamera(depth));
    }
    let (w, h) = (camera.width, camera.height);
    let ru = camera.fx * object_radius / depth;
    let rv = camera.fy * object_radius / depth;
    let mut mask = vec![0f32; w * h];
    let r_lo = ((v0 - rv).floor().max(0.0)) as usize;
    let r_hi = ((v0 + rv).ceil().min(h as f64).max(0.0)) as usize;
    let c_lo = ((u0 - ru).floor().max(0.0)) as usize;
    let c_hi = ((u0 + ru).ceil().min(w as f64).max(0.0)) as usize;
    for row in r_lo..r_hi {
        let dv = (row as f64 + 0.5 - v0) / rv;
        for col in c_lo..c_hi {
            let du = (col as f64 + 0.5 - u0) / ru;
            if du * du + dv * dv <= 1.0 {
                mask[row * w + col] = 1.0;
            }
        }
    }
    let len = camera.blur_len;
    if len == 0 {
        return Ok(mask);
    }
    let mut blurred = vec![0f32; w * h];
    let norm = 1.0 / (len + 1) as f32;
    for col in 0..w {
        for row in 0..h {
            let mut acc = 0f32;
            for k in 0..=len {
                let src = match camera.blur_direction {
                    BlurDirection::Up => row + k,
                    BlurDirection::Down => match row.checked_sub(k) {
                        Some(r) => r,
                        None => continue,
                    },
                };
                if src < h {
                    acc += mask[src * w + col];
                }
            }
            blurred[row * w + col] = acc * norm;
        }
    }
    Ok(blurred)
}

/// Renders the object over a seeded cluttered background.
pub fn render_frame(
    object_pos: Vec3,
    object_radius: f64,
    camera: &CameraModel,
    scene: &Scene,
    clutter_seed: u64,
    timestamp: f64,
) -> Result<Frame> {
    let coverage = object_coverage(object_pos, object_radius, camera)?;
    let (_, _, object_depth) = camera.project(object_pos);
    let (w, h) = (camera.width, camera.height);
    let mut rng = ChaCha8Rng::seed_from_u64(clutter_seed);
    let bright = scene.brightness as f32;

    let mut frame = Frame::new(h, w, timestamp);
    // low-saturation wall
    let wall = hsv_to_rgb(
        rng.random_range(0.0..360.0),
        rng.random_range(0.0..0.12),
        rng.random_range(0.4..0.7),
    );
    for row in 0..h {
        for col in 0..w {
            frame.set(row, col, wall, scene.wall_depth as f32);
        }
    }
    for _ in 0..scene.clutter_rects {
        let rw = rng.random_range(w / 10..=w / 3).max(1);
        let rh = rng.random_range(h / 10..=h / 3).max(1);
        let c0 = rng.random_range(0..w.saturating_sub(rw).max(1));
        let r0 = rng.random_range(0..h.saturating_sub(rh).max(1));
        // hues kept well away from pink so mixing with the object stays out of range
        let color = hsv_to_rgb(
            rng.random_range(40.0..270.0),
            rng.random_range(0.4..1.0),
            rng.random_range(0.3..1.0),
        );
        let depth = rng.random_range(2.0..scene.wall_depth) as f32;
        for row in r0..(r0 + rh).min(h) {
            for col in c0..(c0 + rw).min(w) {
                frame.set(row, col, color, depth);
            }
        }
    }
    for row in 0..h {
        for col in 0..w {
            let m = coverage[row * w + col];
            let bg = frame.rgb(row, col);
            // the smeared trail reads as the object's depth
            let d = if m > 0.0 {
                object_depth as f32
            } else {
                frame.depth(row, col)
            };
            let rgb = if m > 0.0 {
                [
                    m * PIGLET_PINK[0] + (1.0 - m) * bg[0],
                    m * PIGLET_PINK[1] + (1.0 - m) * bg[1],
                    m * PIGLET_PINK[2] + (1.0 - m) * bg[2],
                ]
            } else {
                bg
            };
            frame.set(row, col, rgb.map(|c| (c * bright).clamp(0.0, 1.0)), d);
        }
    }

    if camera.depth_noise_sigma > 0.0 || camera.depth_quantum > 0.0 {
        let n = w * h;
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        // fresh noise per frame over the same static background
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(clutter_seed, timestamp.to_bits()));
        for d in &mut frame.data[3 * n..] {
            let depth = f64::from(*d);
            let mut noisy = depth;
            if camera.depth_noise_sigma > 0.0 {
                noisy += camera.depth_noise_sigma * depth * depth * unit.sample(&mut rng);
            }
            if camera.depth_quantum > 0.0 {
                noisy = (noisy / camera.depth_quantum).round() * camera.depth_quantum;
            }
            *d = noisy.max(0.0) as f32;
        }
    }
    Ok(frame)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Localizes the object as the per-axis median of in-range pixels.
///
/// Returns `None` when fewer than `min_pixels` pixels pass the filter.
pub fn color_filter_localize(
    frame: &Frame,
    range: &HsvRange,
    camera: &CameraModel,
    min_pixels: usize,
) -> Option<Detection> {
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut depths = Vec::new();
    for row in 0..frame.height {
        for col in 0..frame.width {
            let [r, g, b] = frame.rgb(row, col);
            if range.contains(rgb_to_hsv(f64::from(r), f64::from(g), f64::from(b))) {
                rows.push(row as f64 + 0.5);
                cols.push(col as f64 + 0.5);
                depths.push(f64::from(frame.depth(row, col)));
            }
        }
    }
    if rows.is_empty() || rows.len() < min_pixels {
        return None;
    }
    let v = median(&mut rows);
    let u = median(&mut cols);
    let d = median(&mut depths);
    Some(Detection {
        position: camera.back_project(u, v, d),
        t: frame.timestamp,
        source: Source::Camera,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn on_axis(camera: &CameraModel, depth: f64) -> Vec3 {
        camera.back_project(camera.cx, camera.cy, depth)
    }

    fn bare() -> Scene {
        Scene {
            clutter_rects: 0,
            ..Scene::default()
        }
    }

    #[test]
    fn hsv_reference_colors() {
        assert_eq!(rgb_to_hsv(1.0, 0.0, 0.0), (0.0, 1.0, 1.0));
        assert_eq!(rgb_to_hsv(0.5, 0.5, 0.5), (0.0, 0.0, 0.5));
        assert_eq!(rgb_to_hsv(1.0, 0.0, 1.0), (300.0, 1.0, 1.0));
        let (h, _, _) = rgb_to_hsv(0.0, 1.0, 0.0);
        assert_eq!(h, 120.0);
    }

    #[test]
    fn pink_is_in_default_range() {
        let [r, g, b] = PIGLET_PINK;
        assert!(HsvRange::default().contains(rgb_to_hsv(r.into(), g.into(), b.into())));
    }

    #[test]
    fn hue_wraps() {
        let range = HsvRange {
            h_min: 340.0,
            h_max: 20.0,
            ..HsvRange::default()
        };
        assert!(range.contains((350.0, 0.5, 0.5)));
        assert!(range.contains((10.0, 0.5, 0.5)));
        assert!(!range.contains((100.0, 0.5, 0.5)));
    }

    #[test]
    fn pose_round_trip() {
        let pose = Pose::facing_thrower(Vec3::new(0.1, 0.5, -1.5), 0.2);
        let p = Vec3::new(0.3, 1.2, 4.0);
        let back = pose.to_robot(pose.to_camera(p));
        assert!((back - p).norm() < 1e-12);
    }

    #[test]
    fn on_axis_blob_is_centered() {
        let camera = CameraModel::reduced();
        let pos = on_axis(&camera, 3.0);
        let frame = render_frame(pos, 0.12, &camera, &bare(), 1, 0.0).unwrap();
        let cov = object_coverage(pos, 0.12, &camera).unwrap();
        let (mut rs, mut cs, mut n) = (0.0, 0.0, 0.0);
        for row in 0..camera.height {
            for col in 0..camera.width {
                if cov[row * camera.width + col] > 0.0 {
                    rs += row as f64 + 0.5;
                    cs += col as f64 + 0.5;
                    n += 1.0;
                    assert_eq!(frame.depth(row, col), 3.0);
                }
            }
        }
        assert!(n > 0.0);
        assert!((rs / n - camera.cy).abs() < 1e-9);
        assert!((cs / n - camera.cx).abs() < 1e-9);
    }

    #[test]
    fn clutter_only_changes_background() {
        let camera = CameraModel::reduced();
        let pos = on_axis(&camera, 2.5);
        let scene = Scene::default();
        let a = render_frame(pos, 0.12, &camera, &scene, 3, 0.0).unwrap();
        let b = render_frame(pos, 0.12, &camera, &scene, 4, 0.0).unwrap();
        let cov = object_coverage(pos, 0.12, &camera).unwrap();
        let n = camera.width * camera.height;
        let mut differ_outside = false;
        for i in 0..n {
            for ch in 0..4 {
                let same = a.data[ch * n + i] == b.data[ch * n + i];
                if cov[i] > 0.0 {
                    assert!(same, "pixel {i} channel {ch} differs inside the blob");
                } else if !same {
                    differ_outside = true;
                }
            }
        }
        assert!(differ_outside);
    }

    fn vertical_extent(cov: &[f32], w: usize) -> usize {
        let rows: Vec<usize> = cov
            .chunks(w)
            .enumerate()
            .filter(|(_, r)| r.iter().any(|&m| m > 0.0))
            .map(|(i, _)| i)
            .collect();
        rows.last().unwrap() - rows.first().unwrap() + 1
    }

    #[test]
    fn blur_stretches_blob() {
        let mut camera = CameraModel::reduced();
        let pos = on_axis(&camera, 2.0);
        let sharp = vertical_extent(&object_coverage(pos, 0.12, &camera).unwrap(), camera.width);
        camera.blur_len = 20;
        let blurred = vertical_extent(&object_coverage(pos, 0.12, &camera).unwrap(), camera.width);
        assert!(blurred >= sharp + 15, "{sharp} -> {blurred}");
    }

    #[test]
    fn blur_trail_has_object_depth_and_drags_the_median() {
        let mut camera = CameraModel::reduced();
        let pos = on_axis(&camera, 3.0);
        let mut errors = Vec::new();
        for len in [0, 10, 20] {
            camera.blur_len = len;
            let frame = render_frame(pos, 0.12, &camera, &bare(), 1, 0.0).unwrap();
            let cov = object_coverage(pos, 0.12, &camera).unwrap();
            for (i, &m) in cov.iter().enumerate() {
                if m > 0.0 {
                    assert_eq!(frame.depth(i / camera.width, i % camera.width), 3.0);
                }
            }
            let det = color_filter_localize(&frame, &HsvRange::default(), &camera, 1).unwrap();
            errors.push((det.position - pos).norm());
        }
        assert!(errors[0] < errors[1] && errors[1] < errors[2], "{errors:?}");
    }

    #[test]
    fn behind_camera_rejected() {
        let camera = CameraModel::reduced();
        let pos = Vec3::new(0.0, 0.5, -3.0);
        assert!(matches!(
            render_frame(pos, 0.1, &camera, &bare(), 0, 0.0),
            Err(Error::BehindCamera(_))
        ));
    }

    #[test]
    fn localize_round_trip() {
        let camera = CameraModel::reduced();
        let range = HsvRange::default();
        for &depth in &[1.0, 2.0, 3.5, 5.0] {
            let truth = camera.back_project(camera.cx + 3.3, camera.cy - 2.6, depth);
            let frame = render_frame(truth, 0.12, &camera, &bare(), 9, 0.25).unwrap();
            let det = color_filter_localize(&frame, &range, &camera, 10).unwrap();
            assert_eq!(det.source, Source::Camera);
            assert_eq!(det.t, 0.25);
            let bound = depth * (1.0 / camera.fx);
            let err = (det.position - truth).norm();
            assert!(err <= bound, "depth {depth}: err {err} > {bound}");
        }
    }

    #[test]
    fn no_residue_means_no_detection() {
        let camera = CameraModel::reduced();
        let frame = Frame::new(camera.height, camera.width, 0.0);
        assert!(color_filter_localize(&frame, &HsvRange::default(), &camera, 10).is_none());
    }

    #[test]
    fn heavy_clutter_does_not_move_the_median() {
        let camera = CameraModel::reduced();
        let range = HsvRange::default();
        let truth = camera.back_project(camera.cx - 5.0, camera.cy + 4.0, 2.2);
        let clean = render_frame(truth, 0.12, &camera, &bare(), 5, 0.0).unwrap();
        let busy = Scene {
            clutter_rects: 40,
            ..Scene::default()
        };
        let cluttered = render_frame(truth, 0.12, &camera, &busy, 5, 0.0).unwrap();
        let cov = object_coverage(truth, 0.12, &camera).unwrap();
        let n = camera.width * camera.height;
        let changed = (0..n)
            .filter(|&i| cov[i] == 0.0 && clean.data[i] != cluttered.data[i])
            .count();
        assert!(changed as f64 >= 0.4 * n as f64, "clutter covered only {changed}/{n}");
        let a = color_filter_localize(&clean, &range, &camera, 10).unwrap();
        let b = color_filter_localize(&cluttered, &range, &camera, 10).unwrap();
        assert_eq!(a, b);
    }
}
