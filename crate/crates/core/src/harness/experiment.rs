use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Pipeline, PipelineConfig};
use super::episode::{run_episode, EpisodeResult, Networks};
use super::throws::sample_throw;
use crate::error::{Error, Result};
use crate::models::{
    build_interceptor_with, build_localizer_with, localizer_sample, InterceptorArch, LocalizerArch,
    LocalizerModel,
};
use crate::nn::{gradient_check, GradCheckOptions, GradCheckReport, Network, NetworkBuilder, Tensor};
use crate::util::{derive_seed, fmt_sig};

/// Aggregate catch statistics of one pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub label: String,
    pub n: usize,
    pub catches: usize,
    pub catch_rate: f64,
    /// 95% Wilson score interval for the catch rate.
    pub catch_rate_ci95: [f64; 2],
    pub miss_mean: f64,
    pub miss_p50: f64,
    pub miss_p90: f64,
    pub tof_min: f64,
    pub tof_median: f64,
    pub tof_max: f64,
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn wilson_interval(successes: usize, n: usize) -> [f64; 2] {
    if n == 0 {
        return [0.0, 1.0];
    }
    let z = 1.959_963_984_540_054;
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let denom = 1.0 + z * z / n_f;
    let center = (p + z * z / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z * z / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (center + half).min(1.0) };
    [lo, hi]
}

pub fn metrics(label: &str, episodes: &[EpisodeResult]) -> Metrics {
    let n = episodes.len();
    let catches = episodes.iter().filter(|e| e.outcome.success).count();
    let mut miss: Vec<f64> = episodes.iter().map(|e| e.outcome.miss_distance).collect();
    miss.sort_by(f64::total_cmp);
    let mut tof: Vec<f64> = episodes.iter().map(|e| e.tof).collect();
    tof.sort_by(f64::total_cmp);
    Metrics {
        label: label.to_string(),
        n,
        catches,
        catch_rate: if n == 0 { 0.0 } else { catches as f64 / n as f64 },
        catch_rate_ci95: wilson_interval(catches, n),
        miss_mean: miss.iter().sum::<f64>() / n.max(1) as f64,
        miss_p50: quantile(&miss, 0.5),
        miss_p90: quantile(&miss, 0.9),
        tof_min: tof.first().copied().unwrap_or(f64::NAN),
        tof_median: quantile(&tof, 0.5),
        tof_max: tof.last().copied().unwrap_or(f64::NAN),
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Seed of episode `i` of an experiment.
pub fn episode_seed(base: u64, i: usize) -> u64 {
    derive_seed(base, i as u64)
}

/// Runs `n_throws` seeded episodes, in parallel on `cfg.threads` workers.
/// Results are in episode order whatever the parallelism.
pub fn run_experiment(
    cfg: &PipelineConfig,
    nets: &Networks,
    n_throws: usize,
) -> Result<(Metrics, Vec<EpisodeResult>)> {
    if n_throws == 0 {
        return Err(Error::InvalidArgument("need at least one throw".into()));
    }
    let run = || -> Result<Vec<EpisodeResult>> {
        (0..n_throws)
            .into_par_iter()
            .map(|i| run_episode(cfg, nets, episode_seed(cfg.seed, i)))
            .collect()
    };
    let episodes = pool(cfg.threads)?.install(run)?;
    Ok((metrics(&cfg.pipeline.to_string(), &episodes), episodes))
}

pub const EPISODE_CSV_HEADER: &str = "index,seed,pipeline,distance,tof,required_travel,success,miss_distance,t_cross,ee_x,ee_y,ee_z,n_camera,n_radar,n_predictions,travel,max_prediction_error";

pub fn episodes_csv(episodes: &[EpisodeResult]) -> String {
    let mut out = String::from(EPISODE_CSV_HEADER);
    out.push('\n');
    for (i, e) in episodes.iter().enumerate() {
        let o = &e.outcome;
        out.push_str(&format!(
            "{i},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            e.seed,
            e.pipeline,
            fmt_sig(e.distance),
            fmt_sig(e.tof),
            fmt_sig(e.required_travel),
            u8::from(o.success),
            fmt_sig(o.miss_distance),
            fmt_sig(o.t_cross),
            fmt_sig(o.ee_at_cross.x),
            fmt_sig(o.ee_at_cross.y),
            fmt_sig(o.ee_at_cross.z),
            e.n_camera,
            e.n_radar,
            e.predictions.len(),
            fmt_sig(e.travel),
            e.max_prediction_error.map(fmt_sig).unwrap_or_default()
        ));
    }
    out
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// `episodes.csv` and `summary.json` in `dir`.
pub fn write_experiment(dir: &Path, metrics: &Metrics, episodes: &[EpisodeResult]) -> Result<()> {
    write_file(&dir.join("episodes.csv"), &episodes_csv(episodes))?;
    write_file(&dir.join("summary.json"), &to_json(metrics)?)
}

/// All four localizer/predictor combinations on the same throw seeds.
pub fn compare_pipelines(
    cfg: &PipelineConfig,
    nets: &Networks,
    n_throws: usize,
) -> Result<Vec<(Metrics, Vec<EpisodeResult>)>> {
    Pipeline::ALL
        .iter()
        .map(|&p| {
            let c = PipelineConfig {
                pipeline: p,
                ..cfg.clone()
            };
            run_experiment(&c, nets, n_throws)
        })
        .collect()
}

pub fn comparison_csv(rows: &[Metrics]) -> String {
    let mut out = String::from("pipeline,n,catches,catch_rate,ci_low,ci_high,miss_mean,miss_p50,miss_p90\n");
    for m in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            m.label,
            m.n,
            m.catches,
            fmt_sig(m.catch_rate),
            fmt_sig(m.catch_rate_ci95[0]),
            fmt_sig(m.catch_rate_ci95[1]),
            fmt_sig(m.miss_mean),
            fmt_sig(m.miss_p50),
            fmt_sig(m.miss_p90)
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TofRow {
    pub distance: f64,
    pub n: usize,
    pub min_ms: f64,
    pub median_ms: f64,
    pub max_ms: f64,
}

/// TOF statistics of `n` sampled throws per distance. Each distance must be
/// one of the distribution's calibrated distances.
pub fn tof_report(cfg: &PipelineConfig, distances: &[f64], n: usize) -> Result<Vec<TofRow>> {
    distances
        .iter()
        .enumerate()
        .map(|(j, &d)| {
            let idx = cfg
                .throws
                .distances
                .iter()
                .position(|&x| (x - d).abs() < 1e-9)
                .ok_or_else(|| Error::InvalidArgument(format!("distance {d} m is not calibrated")))?;
            let mut c = cfg.clone();
            c.throws.distances = vec![d];
            c.throws.nominal_tofs = vec![cfg.throws.nominal_tofs[idx]];
            let base = derive_seed(cfg.seed, 1000 + j as u64);
            let mut tofs: Vec<f64> = pool(cfg.threads)?.install(|| {
                (0..n)
                    .into_par_iter()
                    .map(|i| sample_throw(&c, derive_seed(base, i as u64)).map(|t| t.t_cross))
                    .collect::<Result<Vec<f64>>>()
            })?;
            tofs.sort_by(f64::total_cmp);
            Ok(TofRow {
                distance: d,
                n,
                min_ms: tofs.first().copied().unwrap_or(f64::NAN) * 1000.0,
                median_ms: quantile(&tofs, 0.5) * 1000.0,
                max_ms: tofs.last().copied().unwrap_or(f64::NAN) * 1000.0,
            })
        })
        .collect()
}

pub fn tof_csv(rows: &[TofRow]) -> String {
    let mut out = String::from("distance,n,min_ms,median_ms,max_ms\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_sig(r.distance),
            r.n,
            fmt_sig(r.min_ms),
            fmt_sig(r.median_ms),
            fmt_sig(r.max_ms)
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlurRow {
    pub blur: usize,
    pub frames: usize,
    /// Mean 3-D error over frames where the color filter found the object.
    pub color_error: f64,
    pub color_detect_rate: f64,
    pub cnn_error: Option<f64>,
}

/// Localization error per blur length. Every blur level sees the same
/// objects and scenes, so rows differ only by blur.
pub fn blur_study(
    cfg: &PipelineConfig,
    localizer: Option<&LocalizerModel>,
    blurs: &[usize],
    n_frames: usize,
) -> Result<Vec<BlurRow>> {
    let base = derive_seed(cfg.seed, 2000);
    let mut rows = Vec::with_capacity(blurs.len());
    for &blur in blurs {
        let per_frame: Vec<(Option<f64>, Option<f64>)> = pool(cfg.threads)?.install(|| {
            (0..n_frames)
                .into_par_iter()
                .map(|i| {
                    let s = localizer_sample(cfg, derive_seed(base, i as u64), Some(blur))?;
                    let color = cfg
                        .sensors
                        .color_filter(&s.frame)
                        .map(|d| (d.position - s.truth).norm());
                    let cnn = match localizer {
                        Some(m) => Some((m.estimate(&s.frame)? - s.truth).norm()),
                        None => None,
                    };
                    Ok((color, cnn))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let color: Vec<f64> = per_frame.iter().filter_map(|p| p.0).collect();
        let cnn: Vec<f64> = per_frame.iter().filter_map(|p| p.1).collect();
        rows.push(BlurRow {
            blur,
            frames: n_frames,
            color_error: color.iter().sum::<f64>() / color.len().max(1) as f64,
            color_detect_rate: color.len() as f64 / n_frames.max(1) as f64,
            cnn_error: (!cnn.is_empty()).then(|| cnn.iter().sum::<f64>() / cnn.len() as f64),
        });
    }
    Ok(rows)
}

pub fn blur_csv(rows: &[BlurRow]) -> String {
    let mut out = String::from("blur,frames,color_error,color_detect_rate,cnn_error\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.blur,
            r.frames,
            fmt_sig(r.color_error),
            fmt_sig(r.color_detect_rate),
            r.cnn_error.map(fmt_sig).unwrap_or_default()
        ));
    }
    out
}

fn uniform_tensor(shape: &[usize], seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_f64(shape.to_vec(), &data)
}

/// Reduced networks exercising each layer type, plus both architectures at
/// small sizes.
pub fn gradcheck_networks(seed: u64) -> Result<Vec<(&'static str, Network)>> {
    let localizer = LocalizerArch {
        conv_channels: vec![3, 4],
        dense: 8,
        seed,
        ..LocalizerArch::default()
    };
    let interceptor = InterceptorArch {
        conv_channels: 6,
        dense: vec![8, 4],
        seed,
        ..InterceptorArch::default()
    };
    Ok(vec![
        ("dense", NetworkBuilder::new(vec![6], seed).dense(4)?.build()),
        ("conv1d", NetworkBuilder::new(vec![7, 3], seed).conv1d(4, 3)?.flatten()?.dense(2)?.build()),
        (
            "conv2d",
            NetworkBuilder::new(vec![2, 6, 5], seed).conv2d(3, 3, 1)?.flatten()?.dense(2)?.build(),
        ),
        (
            "maxpool2d",
            NetworkBuilder::new(vec![2, 5, 7], seed).maxpool2d()?.flatten()?.dense(2)?.build(),
        ),
        ("prelu", NetworkBuilder::new(vec![5], seed).dense(6)?.prelu()?.dense(2)?.build()),
        ("localizer", build_localizer_with(&localizer, 12, 16)?),
        ("interceptor", build_interceptor_with(&interceptor)?),
    ])
}

pub fn gradcheck_suite(seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    let opts = GradCheckOptions {
        seed,
        ..GradCheckOptions::default()
    };
    gradcheck_networks(seed)?
        .into_iter()
        .map(|(name, net)| {
            let x = uniform_tensor(net.input_shape(), derive_seed(seed, 1))?;
            let t = uniform_tensor(net.output_shape(), derive_seed(seed, 2))?;
            Ok((name.to_string(), gradient_check(&net, &x, &t, &opts)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_bounds() {
        let [lo, hi] = wilson_interval(16, 20);
        assert!(lo < 0.8 && 0.8 < hi);
        assert!((lo - 0.584).abs() < 0.01 && (hi - 0.919).abs() < 0.01);
        assert_eq!(wilson_interval(0, 0), [0.0, 1.0]);
        assert_eq!(wilson_interval(10, 10)[1], 1.0);
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    #[test]
    fn zero_jitter_tof_is_constant() {
        let mut cfg = PipelineConfig::noiseless();
        cfg.throws.speed_jitter = 0.0;
        let rows = tof_report(&cfg, &[5.12], 5).unwrap();
        assert!((rows[0].min_ms - rows[0].max_ms).abs() < 1e-6);
        assert!((rows[0].median_ms - 974.0).abs() < 1e-3);
    }
}
