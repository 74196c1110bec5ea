//! Synthetic mmWave radar and the moving-target filter.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Detection, Source};
use crate::ballistics::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarReturn {
    pub position: Vec3,
    /// Line-of-sight velocity; negative when approaching the sensor.
    pub radial_velocity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarModel {
    pub position: Vec3,
    pub rate: f64,
    /// Returns slower than this are treated as static background.
    pub v_static: f64,
    pub static_clutter: usize,
    pub max_distractors: usize,
}

impl Default for RadarModel {
    fn default() -> Self {
        RadarModel {
            position: Vec3::new(0.3, 0.3, -0.6),
            rate: 10.0,
            v_static: 0.2,
            static_clutter: 5,
            max_distractors: 2,
        }
    }
}

impl RadarModel {
    pub fn radial_velocity(&self, position: Vec3, velocity: Vec3) -> f64 {
        let los = position - self.position;
        let range = los.norm();
        if range == 0.0 {
            0.0
        } else {
            velocity.dot(los) / range
        }
    }
}

fn random_point(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(
        rng.random_range(-3.0..3.0),
        rng.random_range(0.0..2.5),
        rng.random_range(0.5..8.0),
    )
}

/// One radar scan: the object with Gaussian position noise plus seeded static
/// clutter and receding distractors, in shuffled order.
pub fn radar_scan(
    object_pos: Vec3,
    object_vel: Vec3,
    radar: &RadarModel,
    clutter_seed: u64,
    noise_sigma: f64,
) -> Vec<RadarReturn> {
    let mut rng = ChaCha8Rng::seed_from_u64(clutter_seed);
    let mut position = object_pos;
    if noise_sigma > 0.0 {
        let n = Normal::new(0.0, noise_sigma).expect("finite sigma");
        position += Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng));
    }
    let mut returns = vec![RadarReturn {
        position,
        radial_velocity: radar.radial_velocity(object_pos, object_vel),
    }];
    for _ in 0..radar.static_clutter {
        returns.push(RadarReturn {
            position: random_point(&mut rng),
            radial_velocity: 0.0,
        });
    }
    let distractors = if radar.max_distractors == 0 {
        0
    } else {
        rng.random_range(0..=radar.max_distractors)
    };
    for _ in 0..distractors {
        returns.push(RadarReturn {
            position: random_point(&mut rng),
            radial_velocity: rng.random_range(0.5..3.0),
        });
    }
    returns.shuffle(&mut rng);
    returns
}

/// Moving-target filter: drops static and receding returns and keeps the
/// fastest approaching one.
pub fn radar_filter(returns: &[RadarReturn], t: f64, v_static: f64) -> Option<Detection> {
    returns
        .iter()
        .filter(|r| r.radial_velocity.abs() >= v_static && r.radial_velocity < 0.0)
        .fold(None::<&RadarReturn>, |best, r| match best {
            Some(b) if b.radial_velocity.abs() >= r.radial_velocity.abs() => Some(b),
            _ => Some(r),
        })
        .map(|r| Detection {
            position: r.position,
            t,
            source: Source::Radar,
        })
}
