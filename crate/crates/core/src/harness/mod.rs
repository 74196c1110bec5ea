//! Configuration, throw sampling, closed-loop episodes and Monte Carlo
//! experiments.

mod config;
mod episode;
mod experiment;
mod throws;

pub use config::{
    DataConfig, LabelSource, LocalizerKind, NoiseProfile, Pipeline, PipelineConfig, ThrowDistribution,
    TrainingConfig,
};
pub use episode::{run_episode, run_episode_traced, EpisodeResult, EpisodeTrace, Networks, PredictionRecord};
pub use experiment::{
    blur_csv, blur_study, gradcheck_networks, gradcheck_suite, compare_pipelines, comparison_csv, episode_seed, episodes_csv, metrics, quantile,
    run_experiment, to_json, tof_csv, tof_report, wilson_interval, write_experiment, write_file, BlurRow,
    Metrics, TofRow, EPISODE_CSV_HEADER,
};
pub use throws::{
    draw_throw, observe_throw, render_at, sample_throw, snap_to_tick, throw_from_params, FrameLocalizer, Throw,
    ThrowDraw,
};
