use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use catchsim::controller::write_trace_csv;
use catchsim::harness::{
    blur_csv, blur_study, compare_pipelines, gradcheck_suite, comparison_csv, episodes_csv, run_episode_traced,
    run_experiment, to_json, tof_csv, tof_report, write_experiment, write_file, Metrics, Networks,
    Pipeline, PipelineConfig,
};
use catchsim::models::{
    gen_localizer_data, gen_trajectory_data, losses_csv,
    train_interceptor, train_localizer, write_localizer_data, write_trajectory_data,
};
use catchsim::nn::save_weights;
use catchsim::baseline::PredictorKind;
use catchsim::sensors::write_detections_csv;
use catchsim::Error;

#[derive(Parser)]
#[command(name = "catchsim", version, about = "Simulated throw-and-catch experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config; missing keys take the profile defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    throws: Option<usize>,
    /// e.g. `color+ballistic` or `cnn+cnn`
    #[arg(long, global = true)]
    pipeline: Option<Pipeline>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    localizer_weights: Option<PathBuf>,
    #[arg(long, global = true)]
    interceptor_weights: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// One episode with robot trace and detections.
    Simulate,
    GenLocalizerData,
    GenTrajectoryData,
    TrainLocalizer {
        /// Exit 2 unless the mean error on sharp test frames is at most this.
        #[arg(long)]
        max_error: Option<f64>,
    },
    TrainInterceptor {
        /// Exit 2 unless both test RMSE axes are at most this.
        #[arg(long)]
        max_rmse: Option<f64>,
    },
    /// Monte Carlo catch rate of one pipeline.
    Eval,
    /// All four pipelines on the same throws.
    Compare {
        /// Exit 2 unless network-predictor pipelines beat ballistic ones by
        /// at least this many percentage points.
        #[arg(long)]
        min_gap: Option<f64>,
    },
    /// TOF statistics per throw distance.
    Tof {
        /// Exit 2 unless medians fall in the reference bands.
        #[arg(long)]
        check: bool,
    },
    BlurStudy {
        #[arg(long, value_delimiter = ',', default_value = "0,10,20")]
        blurs: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        frames: usize,
        #[arg(long)]
        check: bool,
    },
    /// Finite-difference check of every layer type and both architectures.
    Gradcheck,
}

enum Failure {
    Usage(String),
    Assertion(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn load_config(c: &Common) -> Result<PipelineConfig, Error> {
    let mut cfg = match &c.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::paper_like(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(p) = c.pipeline {
        cfg.pipeline = p;
    }
    if let Some(t) = c.threads {
        cfg.threads = t;
    }
    if let Some(p) = &c.localizer_weights {
        cfg.localizer_weights = Some(p.clone());
    }
    if let Some(p) = &c.interceptor_weights {
        cfg.interceptor_weights = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_metrics(m: &Metrics) {
    println!(
        "{:<16} n={:<4} catch_rate={:.3} [{:.3}, {:.3}] miss mean={:.4} p50={:.4} p90={:.4}",
        m.label,
        m.n,
        m.catch_rate,
        m.catch_rate_ci95[0],
        m.catch_rate_ci95[1],
        m.miss_mean,
        m.miss_p50,
        m.miss_p90
    );
}

fn progress(name: &'static str) -> impl FnMut(usize, f64, Option<f64>) {
    move |epoch, train, val| {
        if epoch % 10 == 0 {
            eprintln!("{name} epoch {epoch}: train {train:.6} val {:.6}", val.unwrap_or(f64::NAN));
        }
    }
}

fn simulate(cfg: &PipelineConfig, out: &Path) -> CmdResult {
    let nets = Networks::load(cfg)?;
    let (result, trace) = run_episode_traced(cfg, &nets, cfg.seed)?;
    write_file(&out.join("episodes.csv"), &episodes_csv(std::slice::from_ref(&result)))?;
    write_file(&out.join("episode.json"), &to_json(&result)?)?;
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, &trace.robot).map_err(|e| Failure::Usage(e.to_string()))?;
    write_file(&out.join("trace.csv"), &String::from_utf8_lossy(&buf))?;
    buf.clear();
    write_detections_csv(&mut buf, trace.detections.as_slice()).map_err(|e| Failure::Usage(e.to_string()))?;
    write_file(&out.join("detections.csv"), &String::from_utf8_lossy(&buf))?;
    println!(
        "seed {} {}: success={} miss={:.4} m tof={:.3} s detections camera={} radar={}",
        result.seed,
        result.pipeline,
        result.outcome.success,
        result.outcome.miss_distance,
        result.tof,
        result.n_camera,
        result.n_radar
    );
    Ok(())
}

fn gradcheck(out: &Path, seed: u64) -> CmdResult {
    let reports = gradcheck_suite(seed)?;
    let mut failed = Vec::new();
    for (name, r) in &reports {
        println!(
            "{name:<12} max_rel_error={:.3e} checked={} skipped={} {}",
            r.max_rel_error,
            r.checked,
            r.skipped,
            if r.passed { "ok" } else { "FAIL" }
        );
        if !r.passed {
            failed.push(name.as_str());
        }
    }
    write_file(&out.join("gradcheck.json"), &to_json(&reports)?)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Assertion(format!("gradient check failed for {}", failed.join(", "))))
    }
}

/// Reference TOF median bands in milliseconds, keyed by distance.
const TOF_BANDS: [(f64, [f64; 2]); 2] = [(5.12, [815.0, 1062.0]), (6.70, [1135.0, 1292.0])];

fn run(cli: Cli) -> CmdResult {
    let c = &cli.common;
    let cfg = load_config(c)?;
    let out = &c.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let started = Instant::now();
    match cli.command {
        Command::Simulate => simulate(&cfg, out)?,
        Command::GenLocalizerData => {
            let data = gen_localizer_data(&cfg, cfg.seed)?;
            write_localizer_data(out, &data)?;
            println!("localizer frames train/val/test = {:?}", data.manifest.splits);
        }
        Command::GenTrajectoryData => {
            let data = gen_trajectory_data(&cfg, cfg.seed)?;
            write_trajectory_data(out, &data)?;
            println!("trajectories train/val/test = {:?}", data.manifest.splits);
        }
        Command::TrainLocalizer { max_error } => {
            let t = train_localizer(&cfg, progress("localizer"))?;
            save_weights(&t.model.net, &out.join("localizer.pgnn"))?;
            write_file(&out.join("losses.csv"), &losses_csv(&t.report))?;
            write_file(&out.join("summary.json"), &to_json(&t)?)?;
            println!(
                "localizer mean error: test {:.4} m (sharp {:.4} m), val {:.4} m",
                t.test_error, t.test_error_sharp, t.val_error
            );
            if let Some(limit) = max_error {
                if !(t.test_error_sharp <= limit) {
                    return Err(Failure::Assertion(format!(
                        "sharp-frame error {:.4} m exceeds {limit} m",
                        t.test_error_sharp
                    )));
                }
            }
        }
        Command::TrainInterceptor { max_rmse } => {
            let t = train_interceptor(&cfg, progress("interceptor"))?;
            save_weights(&t.model.net, &out.join("interceptor.pgnn"))?;
            write_file(&out.join("losses.csv"), &losses_csv(&t.report))?;
            write_file(&out.join("summary.json"), &to_json(&t)?)?;
            println!(
                "interceptor RMSE x/y: test {:.4}/{:.4} m, val {:.4}/{:.4} m ({} snapshots)",
                t.test_rmse[0], t.test_rmse[1], t.val_rmse[0], t.val_rmse[1], t.train_snapshots
            );
            if let Some(limit) = max_rmse {
                if !t.test_rmse.iter().all(|&r| r <= limit) {
                    return Err(Failure::Assertion(format!("test RMSE exceeds {limit} m")));
                }
            }
        }
        Command::Eval => {
            let nets = Networks::load(&cfg)?;
            let (m, episodes) = run_experiment(&cfg, &nets, c.throws.unwrap_or(100))?;
            write_experiment(out, &m, &episodes)?;
            print_metrics(&m);
        }
        Command::Compare { min_gap } => {
            let nets = Networks::load(&cfg)?;
            let rows = compare_pipelines(&cfg, &nets, c.throws.unwrap_or(300))?;
            let metrics: Vec<Metrics> = rows.iter().map(|r| r.0.clone()).collect();
            for (m, episodes) in &rows {
                print_metrics(m);
                write_file(&out.join(m.label.replace('+', "_")).join("episodes.csv"), &episodes_csv(episodes))?;
            }
            write_file(&out.join("comparison.csv"), &comparison_csv(&metrics))?;
            write_file(&out.join("summary.json"), &to_json(&metrics)?)?;
            if let Some(gap) = min_gap {
                let mean = |kind: PredictorKind| {
                    let v: Vec<f64> = Pipeline::ALL
                        .iter()
                        .zip(&metrics)
                        .filter(|(p, _)| p.predictor == kind)
                        .map(|(_, m)| m.catch_rate)
                        .collect();
                    v.iter().sum::<f64>() / v.len() as f64
                };
                let diff = 100.0 * (mean(PredictorKind::Network) - mean(PredictorKind::Ballistic));
                if diff < gap {
                    return Err(Failure::Assertion(format!(
                        "network predictors lead by {diff:.1} points, need {gap}"
                    )));
                }
            }
        }
        Command::Tof { check } => {
            let rows = tof_report(&cfg, &cfg.throws.distances, c.throws.unwrap_or(200))?;
            write_file(&out.join("tof.csv"), &tof_csv(&rows))?;
            let mut bad = Vec::new();
            for r in &rows {
                println!(
                    "{:.2} m: n={} min={:.0} ms median={:.0} ms max={:.0} ms",
                    r.distance, r.n, r.min_ms, r.median_ms, r.max_ms
                );
                let band = TOF_BANDS.iter().find(|(d, _)| (d - r.distance).abs() < 1e-9);
                if let Some((_, [lo, hi])) = band {
                    if !(*lo..=*hi).contains(&r.median_ms) {
                        bad.push(r.distance);
                    }
                }
            }
            if check && !bad.is_empty() {
                return Err(Failure::Assertion(format!("TOF median outside band at {bad:?} m")));
            }
        }
        Command::BlurStudy { blurs, frames, check } => {
            let nets = Networks::load(&cfg)?;
            let rows = blur_study(&cfg, nets.localizer.as_ref(), &blurs, frames)?;
            write_file(&out.join("blur.csv"), &blur_csv(&rows))?;
            for r in &rows {
                println!(
                    "blur {:>2} px: color {:.4} m (detected {:.2}) cnn {}",
                    r.blur,
                    r.color_error,
                    r.color_detect_rate,
                    r.cnn_error.map_or("-".into(), |e| format!("{e:.4} m"))
                );
            }
            if check {
                let increasing = rows.windows(2).all(|w| w[1].color_error > w[0].color_error);
                let (first, last) = (&rows[0], &rows[rows.len() - 1]);
                let cnn_ok = match (first.cnn_error, last.cnn_error) {
                    (Some(a), Some(b)) => b - a < last.color_error - first.color_error,
                    _ => false,
                };
                if !(increasing && cnn_ok) {
                    return Err(Failure::Assertion("blur resilience ordering not met".into()));
                }
            }
        }
        Command::Gradcheck => gradcheck(out, cfg.seed)?,
    }
    eprintln!("done in {:.1} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Assertion(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(2)
        }
    }
}
