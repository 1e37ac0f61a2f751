use std::path::Path;

use ndgrad::{mix_seed, mse_loss, softmax_cross_entropy, Mode, RmsProp, Scalar, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datakit::{augment, manifest::channel_means, sample_seed, AugmentConfig, Image, Sample};
use crate::error::{invalid, Error, Result};
use crate::models::pricenet::{DEFAULT_DROPOUT, DEFAULT_HIDDEN_UNITS};
use crate::models::{Head, PriceModel, TargetScaling};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Reg,
    Class,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub task: Task,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate factor applied after every epoch.
    pub lr_decay: f64,
    pub dropout_p: f64,
    pub hidden_units: usize,
    pub seed: u64,
    pub augment: AugmentConfig,
    /// Share of the training samples held out for best-epoch selection; 0 keeps the last epoch.
    pub val_fraction: f64,
    pub eval_batch_size: usize,
    /// Record eval-mode training MAE (regression) after every epoch.
    pub track_train_mae: bool,
    /// Stop once the tracked training MAE falls below this value.
    pub stop_at_train_mae: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: Task::Reg,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            lr_decay: 1.0,
            dropout_p: DEFAULT_DROPOUT,
            hidden_units: DEFAULT_HIDDEN_UNITS,
            seed: 0,
            augment: AugmentConfig::default(),
            val_fraction: 0.1,
            eval_batch_size: 64,
            track_train_mae: false,
            stop_at_train_mae: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(invalid("epochs and batch sizes must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning rate must be finite and nonnegative, got {}", self.learning_rate)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(invalid(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay)));
        }
        if !(0.0..0.5).contains(&self.val_fraction) {
            return Err(invalid(format!("val_fraction must lie in [0, 0.5), got {}", self.val_fraction)));
        }
        self.augment.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub train_mae: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub curve: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub fit_ids: Vec<String>,
    pub val_ids: Vec<String>,
}

const VAL_SALT: u64 = 0x5a1;

/// Seeded carve-out of `⌈fraction·n⌉` validation samples (none when fraction is 0).
pub fn carve_validation(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    if fraction <= 0.0 || n < 2 {
        return (order, Vec::new());
    }
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, VAL_SALT)));
    let n_val = ((fraction * n as f64).ceil() as usize).clamp(1, n - 1);
    let val = order.split_off(n - n_val);
    (order, val)
}

fn labels_of(samples: &[&Sample]) -> Result<Vec<usize>> {
    samples
        .iter()
        .map(|s| {
            s.segment
                .ok_or_else(|| invalid(format!("sample {} has no segment label for a classification head", s.id)))
        })
        .collect()
}

/// Mean loss of the current weights in eval mode (standardized units for regression).
pub fn eval_loss<T: Scalar>(model: &mut PriceModel<T>, samples: &[&Sample], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let images: Vec<&Image> = chunk.iter().map(|s| &s.image).collect();
        let x = model.batch_tensor(&images)?;
        let y = model.graph.forward(&x, Mode::Eval)?;
        let loss = batch_loss(model, &y, chunk)?.0;
        total += loss.to_f64().unwrap_or(f64::NAN) * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

fn batch_loss<T: Scalar>(model: &PriceModel<T>, y: &Tensor<T>, chunk: &[&Sample]) -> Result<(T, Tensor<T>)> {
    Ok(match model.meta.head {
        Head::Reg => {
            let t = model.meta.target;
            let targets: Vec<T> = chunk.iter().map(|s| T::from_f64_lossy(t.encode(s.price))).collect();
            mse_loss(y, &targets)?
        }
        Head::Class(k) => {
            let labels = labels_of(chunk)?;
            if let Some(bad) = labels.iter().find(|&&l| l >= k) {
                return Err(invalid(format!("segment label {bad} outside the {k}-class head")));
            }
            softmax_cross_entropy(y, &labels)?
        }
    })
}

/// Minibatch RMSprop over seeded shuffles with per-sample augmentation.
///
/// Sets the model's channel means (and, for regression, target scaling) from
/// the fitting portion, and restores the weights of the best validation epoch.
/// After every epoch the batchnorm inference statistics are replaced by
/// population averages over the unaugmented fitting images.
pub fn train<T: Scalar>(model: &mut PriceModel<T>, samples: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(invalid("training needs at least one sample"));
    }
    match (cfg.task, model.meta.head) {
        (Task::Reg, Head::Reg) | (Task::Class, Head::Class(_)) => {}
        (task, head) => return Err(invalid(format!("task {task:?} does not match model head {head:?}"))),
    }
    if let Some(spec) = &model.meta.spec {
        if spec.dropout != cfg.dropout_p || spec.hidden_units != cfg.hidden_units {
            return Err(invalid(format!(
                "model was built with dropout {} and {} hidden units, but the training config asks for {} and {}",
                spec.dropout, spec.hidden_units, cfg.dropout_p, cfg.hidden_units
            )));
        }
    }
    let (fit_idx, val_idx) = carve_validation(samples.len(), cfg.val_fraction, cfg.seed);
    let fit: Vec<&Sample> = fit_idx.iter().map(|&i| &samples[i]).collect();
    let val: Vec<&Sample> = val_idx.iter().map(|&i| &samples[i]).collect();
    if cfg.task == Task::Class {
        labels_of(&samples.iter().collect::<Vec<_>>())?;
    }
    model.meta.channel_means = channel_means(&fit).map(|v| v as f32);
    if cfg.task == Task::Reg {
        model.meta.target = TargetScaling::from_prices(&fit.iter().map(|s| s.price).collect::<Vec<_>>());
    }
    let fill = model.meta.channel_means;
    let mut opt = RmsProp::<T>::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let batches_per_epoch = fit.len().div_ceil(cfg.batch_size) as u64;
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ndgrad::GraphState<T>)> = None;
    for epoch in 0..cfg.epochs {
        opt.learning_rate = T::from_f64_lossy(cfg.learning_rate * cfg.lr_decay.powi(epoch as i32));
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, epoch as u64)));
        model.graph.set_dropout_step(epoch as u64 * batches_per_epoch);
        let mut total = 0.0;
        for (b, batch_idx) in order.chunks(cfg.batch_size).enumerate() {
            let chunk: Vec<&Sample> = batch_idx.iter().map(|&i| fit[i]).collect();
            let augmented: Vec<Image>;
            let images: Vec<&Image> = if cfg.augment.is_enabled() {
                augmented = chunk
                    .iter()
                    .map(|s| augment(&s.image, &cfg.augment, sample_seed(cfg.seed, &s.id, epoch as u64), fill))
                    .collect();
                augmented.iter().collect()
            } else {
                chunk.iter().map(|s| &s.image).collect()
            };
            let x = model.batch_tensor(&images)?;
            let y = model.graph.forward(&x, Mode::Train).map_err(|e| match e {
                ndgrad::NdError::NonFiniteActivation { .. } => Error::NonFiniteLoss { epoch: epoch + 1, batch: b + 1 },
                other => other.into(),
            })?;
            let (loss, grad) = batch_loss(model, &y, &chunk)?;
            let loss = loss.to_f64().unwrap_or(f64::NAN);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: epoch + 1, batch: b + 1 });
            }
            let start = model.graph.logits_node();
            model.graph.backward_from(start, &grad)?;
            opt.step(&mut model.graph)?;
            total += loss * chunk.len() as f64;
        }
        let train_loss = total / fit.len() as f64;
        for (k, chunk) in fit.chunks(cfg.batch_size).enumerate() {
            let images: Vec<&Image> = chunk.iter().map(|s| &s.image).collect();
            let x = model.batch_tensor(&images)?;
            model.graph.accumulate_population_stats(&x, k)?;
        }
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(eval_loss(model, &val, cfg.eval_batch_size)?)
        };
        let train_mae = if cfg.track_train_mae && cfg.task == Task::Reg {
            let images: Vec<&Image> = fit.iter().map(|s| &s.image).collect();
            let preds = model.predict_prices(&images, cfg.eval_batch_size)?;
            Some(preds.iter().zip(&fit).map(|(p, s)| (p - s.price).abs()).sum::<f64>() / fit.len() as f64)
        } else {
            None
        };
        log::info!(
            "epoch {}/{}: train loss {train_loss:.5}{}{}",
            epoch + 1,
            cfg.epochs,
            val_loss.map(|v| format!(", val loss {v:.5}")).unwrap_or_default(),
            train_mae.map(|v| format!(", train MAE {v:.3}")).unwrap_or_default()
        );
        curve.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            val_loss,
            train_mae,
        });
        if let Some(v) = val_loss {
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, epoch + 1, model.graph.state()));
            }
        }
        if let (Some(target), Some(mae)) = (cfg.stop_at_train_mae, train_mae) {
            if mae < target {
                break;
            }
        }
    }
    let best_epoch = match best {
        Some((_, epoch, state)) => {
            model.graph.load_state(&state);
            epoch
        }
        None => curve.len(),
    };
    Ok(TrainOutcome {
        curve,
        best_epoch,
        fit_ids: fit.iter().map(|s| s.id.clone()).collect(),
        val_ids: val.iter().map(|s| s.id.clone()).collect(),
    })
}

/// `epoch,train_loss,val_loss,train_mae` with empty cells for absent values.
pub fn write_loss_curve(path: &Path, curve: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_loss", "train_mae"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in curve {
        w.write_record([r.epoch.to_string(), r.train_loss.to_string(), opt(r.val_loss), opt(r.train_mae)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
