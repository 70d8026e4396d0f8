//! Denoiser training: single-view pretraining and multi-view fine-tuning.
//!
//! Each step draws a diffusion step `n` and Gaussian noise per sample,
//! noises the clean tensor with [`q_sample`](super::schedule::q_sample)'s
//! formula and regresses the clean tensor with mean squared error. Updates
//! use SGD with momentum and global gradient-norm clipping. All randomness
//! comes from one seeded generator and every reduction runs in a fixed
//! order, so a run is reproducible bit for bit.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{camera_features, pointmap_features, token_features, DenoiserModel, ModelInput, ModelMode, CAMERA_FEATURES, CELL_FEATURES};
use super::schedule::{make_schedule, DiffusionSchedule};
use super::tensor::MotionLayout;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::synth::Sample;

const PROBE_SALT: u64 = 0x05EE_D0F9_B0BE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Pretrain2d,
    FinetuneMv,
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrain" | "pretrain_2d" => Ok(Stage::Pretrain2d),
            "finetune" | "finetune_mv" => Ok(Stage::FinetuneMv),
            other => Err(Error::InvalidArgument(format!(
                "unknown stage `{other}` (expected pretrain_2d or finetune_mv)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage: Stage,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub clip_norm: f64,
    pub seed: u64,
    /// Number of training examples in the fixed loss probe.
    pub probe_samples: usize,
    /// Stop once the probe loss falls to this fraction of its initial value.
    pub target_ratio: Option<f64>,
}

impl TrainConfig {
    pub fn new(stage: Stage, epochs: usize, seed: u64) -> Self {
        TrainConfig {
            stage,
            epochs,
            batch_size: 16,
            lr: 0.05,
            momentum: 0.9,
            clip_norm: 1.0,
            seed,
            probe_samples: 64,
            target_ratio: None,
        }
    }
}

/// Precomputed per-sample arrays in model units.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    /// `views × frames × features`.
    pub x0: Vec<f64>,
    /// `views × CAMERA_FEATURES`.
    pub cameras: Vec<f64>,
    /// `views × grid² × CELL_FEATURES`.
    pub pointmaps: Vec<f64>,
    pub primary: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    pub layout: MotionLayout,
    pub views: usize,
    pub frames: usize,
    pub grid: usize,
    pub examples: Vec<TrainingExample>,
}

impl TrainingSet {
    pub fn from_samples(samples: &[Sample], layout: MotionLayout) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty training set".into()))?;
        let (views, frames) = (first.rig.views(), first.motion.frames());
        let grid = first.pointmaps[0].grid_w;
        let examples = samples
            .iter()
            .map(|s| {
                if s.rig.views() != views || s.motion.frames() != frames || s.pointmaps[0].grid_w != grid {
                    return Err(Error::ShapeMismatch(format!(
                        "sample {} differs in views, frames or grid",
                        s.index
                    )));
                }
                Ok(TrainingExample {
                    x0: layout.encode(&s.views, &s.rig)?.data,
                    cameras: s.rig.cameras.iter().flat_map(camera_features).collect(),
                    pointmaps: s.pointmaps.iter().flat_map(pointmap_features).collect(),
                    primary: s.rig.primary_index,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainingSet {
            layout,
            views,
            frames,
            grid,
            examples,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub probe_loss: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub stage: Stage,
    /// Probe loss of the model before the first update.
    pub initial_probe_loss: f64,
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn final_probe_loss(&self) -> f64 {
        self.epochs.last().map_or(self.initial_probe_loss, |e| e.probe_loss)
    }

    /// First epoch (1-based) whose probe loss is at or below `target`.
    pub fn epochs_to(&self, target: f64) -> Option<usize> {
        self.epochs.iter().find(|e| e.probe_loss <= target).map(|e| e.epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,probe_loss,grad_norm\n");
        let _ = writeln!(s, "0,,{:e},", self.initial_probe_loss);
        for e in &self.epochs {
            let _ = writeln!(s, "{},{:e},{:e},{:e}", e.epoch, e.train_loss, e.probe_loss, e.grad_norm);
        }
        s
    }
}

/// One prepared batch plus its regression target.
struct Batch<T: Real> {
    input: ModelInput<T>,
    target: Vec<T>,
}

fn check_stage<T: Real>(model: &DenoiserModel<T>, data: &TrainingSet, stage: Stage) -> Result<()> {
    let c = &model.config;
    if c.layout != data.layout {
        return Err(Error::DatasetModeMismatch(format!(
            "model layout {:?} vs dataset layout {:?}",
            c.layout, data.layout
        )));
    }
    if data.is_empty() {
        return Err(Error::DatasetModeMismatch("dataset is empty".into()));
    }
    match stage {
        Stage::Pretrain2d if c.mode != ModelMode::SingleView => Err(Error::DatasetModeMismatch(
            "pretraining needs a single-view model".into(),
        )),
        Stage::FinetuneMv if c.mode != ModelMode::MultiView => Err(Error::DatasetModeMismatch(
            "fine-tuning needs a multi-view model".into(),
        )),
        Stage::FinetuneMv if data.views < 2 => Err(Error::DatasetModeMismatch(format!(
            "fine-tuning needs multi-view samples, dataset has {} view(s)",
            data.views
        ))),
        Stage::FinetuneMv if c.pointmaps && data.grid != c.grid => Err(Error::DatasetModeMismatch(format!(
            "dataset pointmap grid {} vs model grid {}",
            data.grid, c.grid
        ))),
        _ => Ok(()),
    }
}

/// Assembles a batch. `picks` lists `(example, view, step)`; `view` is
/// `None` for multi-view batches.
fn make_batch<T: Real>(
    data: &TrainingSet,
    model_cfg: &super::model::ModelConfig,
    schedule: &DiffusionSchedule,
    picks: &[(usize, Option<usize>, usize)],
    rng: &mut ChaCha8Rng,
) -> Batch<T> {
    let f = data.layout.features();
    let frames = data.frames;
    let multi = picks.first().is_some_and(|p| p.1.is_none());
    let views = if multi { data.views } else { 1 };
    let cells = data.grid * data.grid * CELL_FEATURES;
    let mut tokens = Vec::with_capacity(picks.len() * views * frames * model_cfg.input_features());
    let mut target = Vec::with_capacity(picks.len() * views * frames * f);
    let mut cameras = Vec::with_capacity(picks.len() * views * CAMERA_FEATURES);
    let mut pointmaps = Vec::new();
    let mut steps = Vec::with_capacity(picks.len());
    let mut noisy = vec![T::zero(); f];
    let mut m0 = vec![T::zero(); f];
    for &(i, view, n) in picks {
        let ex = &data.examples[i];
        let (a, b) = (schedule.alpha_bars[n].sqrt(), (1.0 - schedule.alpha_bars[n]).sqrt());
        steps.push(n);
        let view_list: Vec<usize> = match view {
            Some(v) => vec![v],
            None => (0..data.views).collect(),
        };
        for &v in &view_list {
            for t in 0..frames {
                let clean = &ex.x0[(v * frames + t) * f..][..f];
                for k in 0..f {
                    let e: f64 = StandardNormal.sample(rng);
                    noisy[k] = T::of(a * clean[k] + b * e);
                    target.push(T::of(clean[k]));
                }
                let primary = if multi && v == ex.primary {
                    let src = &ex.x0[(ex.primary * frames + t) * f..][..f];
                    for (d, s) in m0.iter_mut().zip(src) {
                        *d = T::of(*s);
                    }
                    Some(m0.as_slice())
                } else {
                    None
                };
                token_features(&mut tokens, &noisy, primary);
            }
            cameras.extend(ex.cameras[v * CAMERA_FEATURES..(v + 1) * CAMERA_FEATURES].iter().map(|&c| T::of(c)));
            if model_cfg.pointmaps {
                pointmaps.extend(ex.pointmaps[v * cells..(v + 1) * cells].iter().map(|&c| T::of(c)));
            }
        }
    }
    Batch {
        input: ModelInput {
            batch: picks.len(),
            views,
            frames,
            tokens,
            steps,
            cameras,
            pointmaps: model_cfg.pointmaps.then_some(pointmaps),
        },
        target,
    }
}

fn mse<T: Real>(pred: &[T], target: &[T]) -> f64 {
    let s: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = (*p - *t).to_f64_lossy();
            d * d
        })
        .sum();
    s / pred.len() as f64
}

/// Fixed evaluation batches: the first `count` examples with noise and steps
/// drawn from a generator independent of the training stream.
fn probe_batches<T: Real>(
    model: &DenoiserModel<T>,
    data: &TrainingSet,
    stage: Stage,
    schedule: &DiffusionSchedule,
    count: usize,
    batch_size: usize,
    seed: u64,
) -> Vec<Batch<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ PROBE_SALT);
    let count = count.clamp(1, data.len());
    let picks: Vec<_> = (0..count)
        .map(|i| {
            let view = (stage == Stage::Pretrain2d).then_some(i % data.views);
            (i, view, rng.random_range(0..schedule.steps()))
        })
        .collect();
    picks
        .chunks(batch_size.max(1))
        .map(|c| make_batch(data, &model.config, schedule, c, &mut rng))
        .collect()
}

fn probe_loss<T: Real>(model: &DenoiserModel<T>, probes: &[Batch<T>]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for b in probes {
        let y = model.predict(&b.input)?;
        total += mse(&y, &b.target) * y.len() as f64;
        count += y.len();
    }
    Ok(total / count as f64)
}

/// Mean squared x0 error of `model` on `data` with seeded noise.
pub fn evaluate_loss<T: Real>(model: &DenoiserModel<T>, data: &TrainingSet, stage: Stage, seed: u64) -> Result<f64> {
    check_stage(model, data, stage)?;
    let schedule = make_schedule(model.config.steps, model.config.schedule)?;
    let probes = probe_batches(model, data, stage, &schedule, data.len(), 32, seed);
    probe_loss(model, &probes)
}

pub fn train<T: Real>(model: &mut DenoiserModel<T>, data: &TrainingSet, cfg: &TrainConfig) -> Result<TrainLog> {
    train_with(model, data, cfg, |_| {})
}

/// Trains in place, calling `on_epoch` after every epoch.
pub fn train_with<T: Real>(
    model: &mut DenoiserModel<T>,
    data: &TrainingSet,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainLog> {
    check_stage(model, data, cfg.stage)?;
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) || !(cfg.clip_norm > 0.0) || !(0.0..1.0).contains(&cfg.momentum) {
        return Err(Error::InvalidArgument("batch size, lr, clip norm or momentum out of range".into()));
    }
    let schedule = make_schedule(model.config.steps, model.config.schedule)?;
    let probes = probe_batches(model, data, cfg.stage, &schedule, cfg.probe_samples, cfg.batch_size, cfg.seed);
    let initial = probe_loss(model, &probes)?;
    let mut log = TrainLog {
        stage: cfg.stage,
        initial_probe_loss: initial,
        epochs: Vec::new(),
    };
    let mut velocity: Vec<Vec<T>> = Vec::new();
    model.visit(&mut |_, p| velocity.push(vec![T::zero(); p.len()]));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let (lr, mu) = (T::of(cfg.lr), T::of(cfg.momentum));

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut norm_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let view = (cfg.stage == Stage::Pretrain2d).then(|| rng.random_range(0..data.views));
            let picks: Vec<_> = chunk
                .iter()
                .map(|&i| (i, view, rng.random_range(0..schedule.steps())))
                .collect();
            let batch = make_batch(data, &model.config, &schedule, &picks, &mut rng);
            let (y, cache) = model.forward(&batch.input)?;
            let loss = mse(&y, &batch.target);
            if !loss.is_finite() {
                return Err(Error::NonFiniteCost);
            }
            let scale = T::of(2.0 / y.len() as f64);
            let dy: Vec<T> = y.iter().zip(&batch.target).map(|(p, t)| (*p - *t) * scale).collect();
            model.zero_grad();
            model.backward(&cache, &dy);

            let mut sq = 0.0;
            model.visit(&mut |_, p| {
                sq += p.grad.iter().map(|g| g.to_f64_lossy().powi(2)).sum::<f64>();
            });
            let norm = sq.sqrt();
            let clip = T::of(if norm > cfg.clip_norm { cfg.clip_norm / norm } else { 1.0 });
            let mut idx = 0;
            model.visit(&mut |_, p| {
                let vel = &mut velocity[idx];
                idx += 1;
                for ((w, g), v) in p.value.iter_mut().zip(&p.grad).zip(vel.iter_mut()) {
                    *v = mu * *v + *g * clip;
                    *w -= lr * *v;
                }
            });
            loss_sum += loss;
            norm_sum += norm;
            batches += 1;
        }
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / batches as f64,
            probe_loss: probe_loss(model, &probes)?,
            grad_norm: norm_sum / batches as f64,
        };
        on_epoch(&entry);
        let done = cfg.target_ratio.is_some_and(|r| entry.probe_loss <= r * initial);
        log.epochs.push(entry);
        if done {
            break;
        }
    }
    Ok(log)
}
