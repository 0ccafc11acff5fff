//! Mini-batch training with AdamW and best-validation-loss checkpointing.

mod adamw;

pub use adamw::{AdamWConfig, AdamWState};

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Window, WINDOW_LEN};
use crate::nn::{argmax_rows, Checkpoint, CheckpointMeta, EmotionNet, NnError};
use crate::rng::{stream, Rng};
use crate::tensor::{Mode, Real, Tape, Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("{0} set is empty")]
    EmptySplit(&'static str),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("gradient shape mismatch: {0}")]
    GradientShape(String),
    #[error("non-finite gradient for {0}")]
    NonFiniteGradient(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: u32, batch: usize },
    #[error(transparent)]
    Model(#[from] NnError),
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(e.into())
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Arithmetic used for a training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: u32,
    pub batch_size: u32,
    pub shuffle: bool,
    pub seed: u64,
    pub precision: Precision,
    pub optimizer: AdamWConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 1000,
            batch_size: 64,
            shuffle: true,
            seed: 0,
            precision: Precision::F64,
            optimizer: AdamWConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs < 1 {
            return Err(TrainError::Config("max_epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return Err(TrainError::Config(format!("lr must be positive, got {}", o.lr)));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) {
            return Err(TrainError::Config("betas must lie in [0, 1)".into()));
        }
        if !(o.eps.is_finite() && o.eps > 0.0 && o.weight_decay.is_finite() && o.weight_decay >= 0.0) {
            return Err(TrainError::Config(
                "eps must be positive and weight_decay non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: u32,
    pub best_val_loss: f64,
    pub wall_seconds: f64,
}

impl TrainReport {
    /// One JSON object per epoch, then a summary line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("epoch record serializes"));
            out.push('\n');
        }
        let summary = serde_json::json!({
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "wall_seconds": self.wall_seconds,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

/// `[B, 8, 64]` batch and class targets.
pub fn batch_tensor<T: Real>(windows: &[&Window]) -> (Tensor<T>, Vec<usize>) {
    let per = crate::data::NUM_MODALITIES * WINDOW_LEN;
    let mut data = vec![T::zero(); windows.len() * per];
    for (w, chunk) in windows.iter().zip(data.chunks_exact_mut(per)) {
        w.write_into(chunk);
    }
    let targets = windows.iter().map(|w| w.label().index()).collect();
    let tensor =
        Tensor::new(vec![windows.len(), crate::data::NUM_MODALITIES, WINDOW_LEN], data).expect("batch dimensions");
    (tensor, targets)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean_loss: f64,
    pub predictions: Vec<usize>,
}

/// Eval-mode mean cross-entropy and argmax predictions over `windows`.
pub fn evaluate<T: Real>(model: &EmotionNet<T>, windows: &[Window], batch_size: usize) -> Result<Evaluation> {
    if windows.is_empty() {
        return Err(TrainError::EmptySplit("evaluation"));
    }
    let classes = model.config().num_classes as usize;
    let mut total = 0.0;
    let mut predictions = Vec::with_capacity(windows.len());
    let refs: Vec<&Window> = windows.iter().collect();
    for chunk in refs.chunks(batch_size.max(1)) {
        let (x, y) = batch_tensor::<T>(chunk);
        let tape = Tape::new();
        let params: Vec<_> = model.params().iter().map(|p| tape.constant(p.value.clone())).collect();
        let input = tape.constant(x);
        let logits = model.forward_on(&params, input, Mode::Eval, None)?;
        predictions.extend(argmax_rows(logits.value().data(), classes));
        let loss = logits.softmax_cross_entropy(&y)?.value().data()[0].as_f64();
        total += loss * chunk.len() as f64;
    }
    Ok(Evaluation {
        mean_loss: total / windows.len() as f64,
        predictions,
    })
}

/// Trains `model` and returns the snapshot with the lowest validation loss.
///
/// Each epoch shuffles the training windows (shuffle sub-stream), runs every
/// mini-batch including a trailing partial one, then scores the validation
/// set in eval mode. A snapshot is taken only on strict improvement, so ties
/// keep the earlier epoch.
pub fn train<T: Real>(
    mut model: EmotionNet<T>,
    train_set: &[Window],
    val_set: &[Window],
    cfg: &TrainConfig,
) -> Result<(Checkpoint<T>, TrainReport)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }
    let started = Instant::now();
    let mut shuffle_rng = Rng::for_role(cfg.seed, stream::SHUFFLE);
    let mut dropout_rng = Rng::for_role(cfg.seed, stream::DROPOUT);
    let mut opt = AdamWState::<T>::new(cfg.optimizer.clone());
    let batch_size = cfg.batch_size as usize;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.max_epochs as usize);
    let mut best: Option<Checkpoint<T>> = None;
    let mut tape = Tape::<T>::new();

    for epoch in 0..cfg.max_epochs {
        if cfg.shuffle {
            shuffle_rng.shuffle(&mut order);
        }
        let mut loss_sum = 0.0;
        for (batch, idx) in order.chunks(batch_size).enumerate() {
            tape.reset();
            let windows: Vec<&Window> = idx.iter().map(|&i| &train_set[i]).collect();
            let (x, y) = batch_tensor::<T>(&windows);
            let params = model.bind(&tape);
            let input = tape.constant(x);
            let logits = model.forward_on(&params, input, Mode::Train, Some(&mut dropout_rng));
            let loss = match logits.and_then(|l| l.softmax_cross_entropy(&y).map_err(NnError::from)) {
                Ok(l) => l,
                Err(NnError::Tensor(TensorError::NonFinite(_))) => {
                    return Err(TrainError::NonFiniteLoss { epoch, batch })
                }
                Err(e) => return Err(e.into()),
            };
            let value = loss.value().data()[0].as_f64();
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch });
            }
            loss_sum += value * idx.len() as f64;
            let mut grads = tape.backward(loss)?;
            let grads: Vec<Tensor<T>> = params
                .iter()
                .map(|&p| grads.take(p).expect("every parameter has a gradient"))
                .collect();
            opt.step(model.params_mut(), &grads)?;
        }

        let val_loss = evaluate(&model, val_set, batch_size)?.mean_loss;
        if !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { epoch, batch: 0 });
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_loss,
        });
        if best.as_ref().is_none_or(|b| val_loss < b.meta.val_loss) {
            best = Some(Checkpoint {
                model: model.clone(),
                meta: CheckpointMeta {
                    seed: cfg.seed,
                    epoch,
                    val_loss,
                },
            });
        }
    }

    let best = best.expect("at least one epoch");
    let report = TrainReport {
        epochs,
        best_epoch: best.meta.epoch,
        best_val_loss: best.meta.val_loss,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((best, report))
}
