//! The epoch loop, evaluation pass and run history.

use std::fs;
use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::RngCore;
use rayon::prelude::*;

use super::{adam_step, clip_grad_norm, load_checkpoint, lr_at, save_checkpoint, AdamState, TrainConfig};
use crate::autodiff::Tape;
use crate::data::{augment, DatasetSplit, Sample};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::ops::{log_softmax_rows, Mode};
use crate::rng::{purpose, substream};

pub const BEST_DIR: &str = "best";
pub const LAST_DIR: &str = "last";
pub const HISTORY_FILE: &str = "history.csv";
const HISTORY_HEADER: &str = "epoch,lr,train_loss,val_loss,val_acc";

/// Optimiser progress that, together with the model, fully determines the
/// rest of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub cfg: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub adam: AdamState,
    /// `(epoch, val accuracy)` of the best epoch so far.
    pub best: Option<(usize, f64)>,
}

/// A model together with its optimiser state.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model<f32>,
    pub state: TrainState,
}

/// One row of `history.csv`. `epoch` is 1-based; accuracy is a fraction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{HISTORY_HEADER}\n");
        for r in &self.records {
            s += &format!("{},{},{},{},{}\n", r.epoch, r.lr, r.train_loss, r.val_loss, r.val_acc);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(HISTORY_HEADER) {
            return Err(Error::Dataset(format!("history must start with `{HISTORY_HEADER}`")));
        }
        let records = lines
            .filter(|l| !l.is_empty())
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                let num = |i: usize| f.get(i).and_then(|v| v.parse::<f64>().ok());
                match (f.first().and_then(|v| v.parse().ok()), num(1), num(2), num(3), num(4)) {
                    (Some(epoch), Some(lr), Some(train_loss), Some(val_loss), Some(val_acc)) => {
                        Ok(EpochRecord { epoch, lr, train_loss, val_loss, val_acc })
                    }
                    _ => Err(Error::Dataset(format!("malformed history row `{line}`"))),
                }
            })
            .collect::<Result<_>>()?;
        Ok(History { records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Eval-mode predictions over a sample list.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    /// Mean cross-entropy.
    pub loss: f64,
    pub accuracy: f64,
    pub labels: Vec<usize>,
    pub preds: Vec<usize>,
    pub probs: Vec<Vec<f32>>,
    /// Pooled features feeding the classifier.
    pub features: Vec<Vec<f32>>,
}

/// Runs the eval-mode forward pass on every sample (in parallel; the result
/// is independent of scheduling).
pub fn evaluate(model: &Model<f32>, samples: &[Sample]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::Dataset("cannot evaluate an empty sample list".into()));
    }
    let k = model.config.num_classes;
    let rows: Vec<(f64, Vec<f32>, Vec<f32>)> = samples
        .par_iter()
        .map(|s| {
            if s.label >= k {
                return Err(Error::Contract(format!("label {} out of range for {k} classes", s.label)));
            }
            let mut tape = Tape::new();
            let f = model.forward(&mut tape, &s.image, Mode::Eval, None)?;
            let log_probs = log_softmax_rows(tape.value(f.logits))?;
            let nll = -(log_probs.data()[s.label] as f64);
            Ok((nll, tape.value(f.probs).data().to_vec(), tape.value(f.penultimate).data().to_vec()))
        })
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let preds: Vec<usize> = rows
        .iter()
        .map(|(_, p, _)| p.iter().enumerate().fold(0, |best, (i, &v)| if v > p[best] { i } else { best }))
        .collect();
    let n = samples.len() as f64;
    let correct = labels.iter().zip(&preds).filter(|(a, b)| a == b).count();
    let loss = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let (probs, features) = rows.into_iter().map(|(_, p, f)| (p, f)).unzip();
    Ok(Evaluation { loss, accuracy: correct as f64 / n, labels, preds, probs, features })
}

fn with_position(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NonFinite { op, detail } => Error::NonFinite { op, detail: format!("epoch {epoch}, batch {batch}: {detail}") },
        other => other,
    }
}

impl Trainer {
    /// Fresh optimiser state; the classifier uses the config's dropout rate.
    pub fn new(mut model: Model<f32>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        model.params.classifier.dropout = cfg.dropout;
        let adam = AdamState::new(&model.store);
        Ok(Trainer { model, state: TrainState { cfg, epoch: 0, adam, best: None } })
    }

    pub fn resume(dir: &Path) -> Result<Self> {
        let (model, state) = load_checkpoint(dir)?;
        Ok(Trainer { model, state })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_checkpoint(dir, &self.model, &self.state)
    }

    /// One pass over `train` in a seeded shuffled order; returns the mean
    /// train-mode loss. Augmentation and dropout draws are keyed by
    /// (seed, epoch, sample index).
    pub fn train_epoch(&mut self, train: &[Sample]) -> Result<f64> {
        if train.is_empty() {
            return Err(Error::Dataset("empty training set".into()));
        }
        let cfg = self.state.cfg.clone();
        let epoch = self.state.epoch;
        let lr = lr_at(epoch, &cfg);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut substream(cfg.seed, &[purpose::SHUFFLE, epoch as u64]));
        let mut total = 0.0f64;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            self.model.store.zero_grad();
            let inv = 1.0 / batch.len() as f32;
            for &i in batch {
                let keys = [epoch as u64, i as u64];
                let sample = match &cfg.augment {
                    Some(a) => augment(&train[i], a, &mut substream(cfg.seed, &[purpose::AUGMENT, keys[0], keys[1]])),
                    None => train[i].clone(),
                };
                let mut dropout_rng = substream(cfg.seed, &[purpose::DROPOUT, keys[0], keys[1]]);
                let mut step = || -> Result<f32> {
                    let mut tape = Tape::new();
                    let rng: &mut dyn RngCore = &mut dropout_rng;
                    let f = self.model.forward(&mut tape, &sample.image, Mode::Train, Some(rng))?;
                    let loss = tape.cross_entropy(f.logits, &[sample.label])?;
                    let value = tape.value(loss).data()[0];
                    let scaled = tape.scale(loss, inv)?;
                    let grads = tape.backward(scaled)?;
                    tape.accumulate_param_grads(&grads, &mut self.model.store);
                    Ok(value)
                };
                total += step().map_err(|e| with_position(e, epoch + 1, b + 1))? as f64;
            }
            if let Some(max) = cfg.grad_clip {
                let norm = clip_grad_norm(&mut self.model.store, max);
                if !norm.is_finite() {
                    return Err(Error::NonFinite {
                        op: "gradient",
                        detail: format!("epoch {}, batch {}: gradient norm {norm}", epoch + 1, b + 1),
                    });
                }
            }
            adam_step(&mut self.model.store, &mut self.state.adam, lr, cfg.weight_decay)?;
        }
        self.state.epoch += 1;
        let mean = total / train.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFinite { op: "cross_entropy", detail: format!("epoch {}: mean loss {mean}", epoch + 1) });
        }
        Ok(mean)
    }
}

/// Trains until `trainer.state.cfg.epochs` epochs are complete, evaluating
/// on the validation split after each one.
///
/// With an output directory, the initial state is saved to `last/` on a
/// fresh start; after every epoch `history.csv` and `last/` are rewritten
/// and `best/` is replaced whenever validation accuracy improves. A resumed
/// run keeps the first `epoch` rows of an existing history.
pub fn fit(
    trainer: &mut Trainer,
    split: &DatasetSplit,
    out: Option<&Path>,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<History> {
    if split.val.is_empty() {
        return Err(Error::Dataset("validation split is empty".into()));
    }
    let mut history = History::default();
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let path = out.join(HISTORY_FILE);
        if trainer.state.epoch == 0 {
            trainer.save(&out.join(LAST_DIR))?;
        } else if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            history = History::from_csv(&text)?;
            history.records.truncate(trainer.state.epoch);
        }
    }
    while trainer.state.epoch < trainer.state.cfg.epochs {
        let lr = lr_at(trainer.state.epoch, &trainer.state.cfg);
        let train_loss = trainer.train_epoch(&split.train)?;
        let val = evaluate(&trainer.model, &split.val)?;
        let epoch = trainer.state.epoch;
        let record = EpochRecord { epoch, lr, train_loss, val_loss: val.loss, val_acc: val.accuracy };
        info!("epoch {epoch}: lr {lr:.3e} train_loss {train_loss:.4} val_loss {:.4} val_acc {:.4}", val.loss, val.accuracy);
        history.records.push(record);
        on_epoch(&record);
        let improved = trainer.state.best.is_none_or(|(_, acc)| val.accuracy > acc);
        if improved {
            trainer.state.best = Some((epoch, val.accuracy));
        }
        if let Some(out) = out {
            history.write(&out.join(HISTORY_FILE))?;
            trainer.save(&out.join(LAST_DIR))?;
            if improved {
                trainer.save(&out.join(BEST_DIR))?;
            }
        }
    }
    Ok(history)
}
