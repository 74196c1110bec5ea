use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::data::{gen_localizer_data, gen_trajectory_data, snapshots, LocalizerSample, TrajectorySample};
use super::{
    build_interceptor_with, build_localizer_with, pack_detections, InterceptorModel, LocalizerModel,
};
use crate::error::{Error, Result};
use crate::harness::{PipelineConfig, TrainingConfig};
use crate::nn::{adam_step, mse_loss, AdamState, Network, Tensor};
use crate::util::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    /// Empty when no validation set was given.
    pub val_loss: Vec<f64>,
}

fn batch_of(items: &[Tensor], idx: &[usize]) -> Result<Tensor> {
    let refs: Vec<&Tensor> = idx.iter().map(|&i| &items[i]).collect();
    Tensor::stack(&refs)
}

/// Mean MSE of `net` over a dataset, evaluated in batches.
pub fn evaluate(net: &Network, inputs: &[Tensor], targets: &[Tensor], batch: usize) -> Result<f64> {
    let n = inputs.len();
    let mut total = 0.0;
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let x = batch_of(inputs, chunk)?;
        let t = batch_of(targets, chunk)?;
        let (l, _) = mse_loss(&net.infer(&x)?, &t)?;
        total += l * chunk.len() as f64;
    }
    Ok(total / n.max(1) as f64)
}

/// Mini-batch Adam on MSE with seeded per-epoch shuffling. `on_epoch`
/// receives `(epoch, train_loss, val_loss)` after each epoch.
pub fn train(
    net: &mut Network,
    inputs: &[Tensor],
    targets: &[Tensor],
    val: Option<(&[Tensor], &[Tensor])>,
    cfg: &TrainingConfig,
    on_epoch: impl FnMut(usize, f64, Option<f64>),
) -> Result<TrainReport> {
    if inputs.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "need one target per input (got {} inputs, {} targets)",
            inputs.len(),
            targets.len()
        )));
    }
    let fetch = |_: usize, idx: &[usize]| Ok((batch_of(inputs, idx)?, batch_of(targets, idx)?));
    train_with(net, inputs.len(), fetch, val, cfg, on_epoch)
}

/// [`train`] over `n` samples whose batches come from `fetch(epoch, indices)`,
/// so inputs may change between epochs.
pub fn train_with(
    net: &mut Network,
    n: usize,
    mut fetch: impl FnMut(usize, &[usize]) -> Result<(Tensor, Tensor)>,
    val: Option<(&[Tensor], &[Tensor])>,
    cfg: &TrainingConfig,
    mut on_epoch: impl FnMut(usize, f64, Option<f64>),
) -> Result<TrainReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("need a non-empty dataset".into()));
    }
    crate::util::retain_freed_memory();
    let batch = cfg.batch_size.max(1);
    let mut adam = AdamState::new(net, cfg.lr);
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::new(),
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, Network)> = None;
    for epoch in 0..cfg.epochs {
        if let Some(end) = cfg.final_lr {
            let frac = epoch as f64 / cfg.epochs.saturating_sub(1).max(1) as f64;
            adam.lr = end + 0.5 * (cfg.lr - end) * (1.0 + (std::f64::consts::PI * frac).cos());
        }
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64)));
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let (x, t) = fetch(epoch, chunk)?;
            net.zero_grad();
            let (loss, grad) = mse_loss(&net.forward(&x)?, &t)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            net.backward(&grad)?;
            adam_step(&mut adam, net).map_err(|_| Error::Diverged { epoch, loss })?;
            total += loss * chunk.len() as f64;
        }
        let train_loss = total / n as f64;
        report.train_loss.push(train_loss);
        let val_loss = match val {
            Some((vx, vt)) if !vx.is_empty() => {
                let l = evaluate(net, vx, vt, 256)?;
                if !l.is_finite() {
                    return Err(Error::Diverged { epoch, loss: l });
                }
                report.val_loss.push(l);
                if cfg.keep_best && best.as_ref().is_none_or(|(b, _)| l < *b) {
                    best = Some((l, net.clone()));
                }
                Some(l)
            }
            _ => None,
        };
        on_epoch(epoch, train_loss, val_loss);
    }
    if let Some((_, b)) = best {
        *net = b;
    }
    Ok(report)
}

/// Per-axis RMSE of the interceptor over every prefix of at least
/// `min_detections` detections.
pub fn interceptor_rmse(
    model: &InterceptorModel,
    samples: &[TrajectorySample],
    min_detections: usize,
) -> Result<[f64; 2]> {
    let mut sq = [0.0; 2];
    let mut n = 0usize;
    for s in samples {
        for k in min_detections.max(1)..=s.detections.len() {
            let (x, y) = model.predict_xy(&pack_detections(&s.detections[..k])?)?;
            sq[0] += (x - s.label[0]).powi(2);
            sq[1] += (y - s.label[1]).powi(2);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no snapshots to evaluate".into()));
    }
    Ok([(sq[0] / n as f64).sqrt(), (sq[1] / n as f64).sqrt()])
}

/// Mean 3-D distance between localizer estimates and true positions.
pub fn localizer_error(model: &LocalizerModel, samples: &[LocalizerSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no frames to evaluate".into()));
    }
    let mut total = 0.0;
    for s in samples {
        total += (model.estimate(&s.frame)? - s.truth).norm();
    }
    Ok(total / samples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterceptorTraining {
    #[serde(skip)]
    pub model: InterceptorModel,
    pub report: TrainReport,
    pub train_snapshots: usize,
    pub train_trajectories: usize,
    pub val_rmse: [f64; 2],
    pub test_rmse: [f64; 2],
}

/// Generates the trajectory dataset from `cfg` and trains the interceptor
/// on its snapshots.
pub fn train_interceptor(
    cfg: &PipelineConfig,
    on_epoch: impl FnMut(usize, f64, Option<f64>),
) -> Result<InterceptorTraining> {
    let data = gen_trajectory_data(cfg, cfg.seed)?;
    let (xs, ys) = snapshots(&data.train, cfg.min_detections);
    let (vx, vy) = snapshots(&data.val, cfg.min_detections);
    let mut net = build_interceptor_with(&cfg.interceptor_arch)?;
    let report = train(&mut net, &xs, &ys, Some((&vx, &vy)), &cfg.training, on_epoch)?;
    let model = InterceptorModel::new(net);
    Ok(InterceptorTraining {
        val_rmse: interceptor_rmse(&model, &data.val, cfg.min_detections)?,
        test_rmse: interceptor_rmse(&model, &data.test, cfg.min_detections)?,
        model,
        report,
        train_snapshots: xs.len(),
        train_trajectories: data.train.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalizerTraining {
    #[serde(skip)]
    pub model: LocalizerModel,
    pub report: TrainReport,
    pub train_frames: usize,
    pub val_error: f64,
    pub test_error: f64,
    /// Test error over frames rendered without blur.
    pub test_error_sharp: f64,
}

pub fn train_localizer(
    cfg: &PipelineConfig,
    on_epoch: impl FnMut(usize, f64, Option<f64>),
) -> Result<LocalizerTraining> {
    let data = gen_localizer_data(cfg, cfg.seed)?;
    let inputs = |s: &[LocalizerSample]| -> (Vec<Tensor>, Vec<Tensor>) {
        (s.iter().map(|x| x.input()).collect(), s.iter().map(|x| x.target()).collect())
    };
    let (vx, vy) = inputs(&data.val);
    let cam = &cfg.sensors.camera;
    let mut net = build_localizer_with(&cfg.localizer_arch, cam.height, cam.width)?;
    let report = if cfg.data.localizer_rerender {
        let fetch = |epoch: usize, idx: &[usize]| -> Result<(Tensor, Tensor)> {
            let fresh: Vec<LocalizerSample> = idx
                .par_iter()
                .map(|&i| match epoch {
                    0 => Ok(data.train[i].clone()),
                    e => data.train[i].rerender(cfg, e as u64),
                })
                .collect::<Result<_>>()?;
            let (x, y) = inputs(&fresh);
            Ok((Tensor::stack(&x.iter().collect::<Vec<_>>())?, Tensor::stack(&y.iter().collect::<Vec<_>>())?))
        };
        train_with(&mut net, data.train.len(), fetch, Some((&vx, &vy)), &cfg.localizer_training, on_epoch)?
    } else {
        let (xs, ys) = inputs(&data.train);
        train(&mut net, &xs, &ys, Some((&vx, &vy)), &cfg.localizer_training, on_epoch)?
    };
    let model = LocalizerModel::new(net);
    let sharp: Vec<LocalizerSample> = data.test.iter().filter(|s| s.blur == 0).cloned().collect();
    Ok(LocalizerTraining {
        val_error: localizer_error(&model, &data.val)?,
        test_error: localizer_error(&model, &data.test)?,
        test_error_sharp: localizer_error(&model, &sharp)?,
        model,
        report,
        train_frames: data.train.len(),
    })
}

/// `epoch,train_loss,val_loss` rows.
pub fn losses_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for (i, l) in report.train_loss.iter().enumerate() {
        let v = report.val_loss.get(i).map(|&v| crate::util::fmt_sig(v)).unwrap_or_default();
        out.push_str(&format!("{i},{},{v}\n", crate::util::fmt_sig(*l)));
    }
    out
}
