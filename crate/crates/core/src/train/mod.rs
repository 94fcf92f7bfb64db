//! Training protocol: AdamW under a one-cycle schedule, global gradient
//! clipping, early stopping on validation accuracy and best-checkpoint
//! selection, followed by a test evaluation of the selected weights.

mod optim;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use optim::{clip_grad_norm, AdamW, EarlyStopper, OneCycle, StopDecision};

use crate::config::RunConfig;
use crate::data::{batch_iter, Datasets, SplitDataset};
use crate::error::{Error, Result};
use crate::models::{write_checkpoint, Model, ParamCount, BENIGN, MALIGNANT};
use crate::params::ParamSet;
use crate::rng::{stream, Stream};
use crate::stats::{confusion_from_predictions, ConfusionMatrix, Metrics};
use crate::tensor::{Mode, Tape};

pub const CURVES_FILE: &str = "curves.csv";
pub const RESULT_FILE: &str = "result.json";
pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const CONFUSION_FILE: &str = "confusion.csv";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean smoothed loss over the epoch's training batches.
    pub train_loss: f64,
    /// Accuracy of the train-mode (dropout active) predictions made while
    /// the epoch was being fitted.
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Rate applied at the epoch's last optimizer step.
    pub lr: f64,
}

/// Eval-mode pass over one split.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub labels: Vec<usize>,
    pub predictions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassView {
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

impl ClassView {
    pub fn new(labels: &[usize], predictions: &[usize], positive: usize) -> Result<Self> {
        let confusion = confusion_from_predictions(labels, predictions, positive)?;
        Ok(Self {
            metrics: confusion.metrics(),
            confusion,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub samples: usize,
    pub loss: f64,
    pub accuracy: f64,
    /// Metrics with the configured positive class.
    pub primary: ClassView,
    /// The same decisions with the other class as positive.
    pub alternate: ClassView,
    pub labels: Vec<usize>,
    pub predictions: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub model: String,
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub stopped_early: bool,
    pub steps_per_epoch: usize,
    pub total_steps: usize,
    pub param_count: ParamCount,
    pub test: TestReport,
    pub config: BTreeMap<String, String>,
    pub curves: Vec<EpochRecord>,
}

impl RunResult {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }
}

fn argmax(row: &[f64]) -> usize {
    // first maximum wins
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Smoothed loss, accuracy and predictions of `model` on `split`.
pub fn evaluate(model: &mut Model, split: &SplitDataset, batch: usize, smoothing: f64) -> Result<Evaluation> {
    let mut loss = 0.0;
    let mut predictions = Vec::with_capacity(split.len());
    for indices in batch_iter(split, batch, 0, 0)? {
        let (x, labels) = split.gather(&indices);
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let mut rng = stream(model.seed(), Stream::Dropout, u64::MAX);
        let out = model.forward(&mut tape, xv, Mode::Eval, &mut rng)?;
        let l = tape.cross_entropy_smoothed(out.logits, &labels, smoothing)?;
        loss += tape.value(l).item() * labels.len() as f64;
        predictions.extend(tape.value(out.logits).data().chunks(2).map(argmax));
    }
    let labels = split.labels().to_vec();
    let correct = labels.iter().zip(&predictions).filter(|(a, b)| a == b).count();
    Ok(Evaluation {
        loss: loss / split.len() as f64,
        accuracy: correct as f64 / split.len() as f64,
        labels,
        predictions,
    })
}

pub fn curves_csv(curves: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,train_acc,val_loss,val_acc,lr\n");
    for r in curves {
        writeln!(s, "{},{},{},{},{},{}", r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc, r.lr).unwrap();
    }
    s
}

pub fn confusion_csv(labels: &[usize], predictions: &[usize]) -> String {
    let mut counts = [[0usize; 2]; 2];
    for (&y, &p) in labels.iter().zip(predictions) {
        counts[y][p] += 1;
    }
    let mut s = String::from("actual,predicted_malignant,predicted_benign\n");
    for (name, class) in [("malignant", MALIGNANT), ("benign", BENIGN)] {
        writeln!(s, "{name},{},{}", counts[class][MALIGNANT], counts[class][BENIGN]).unwrap();
    }
    s
}

/// Trains `model` under `cfg`, restores the best-validation weights and
/// evaluates them on the test split. When `out` is given, writes
/// `curves.csv`, `result.json`, `confusion.csv` and `best.ckpt` there.
/// `on_epoch` sees every epoch record as it is produced.
pub fn fit(
    model: &mut Model,
    data: &Datasets,
    cfg: &RunConfig,
    out: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<RunResult> {
    cfg.validate()?;
    if model.seed() != cfg.seed || model.kind() != cfg.model {
        return Err(Error::SeedMismatch(format!(
            "model is {} seed {}, config asks for {} seed {}",
            model.kind().name(),
            model.seed(),
            cfg.model.name(),
            cfg.seed
        )));
    }
    model.quantum_grad = cfg.quantum_grad;
    let train = if cfg.train_limit > 0 {
        data.train.take(cfg.train_limit)
    } else {
        data.train.clone()
    };
    if train.is_empty() {
        return Err(Error::EmptySplit("train".into()));
    }
    let steps_per_epoch = train.len().div_ceil(cfg.batch);
    let schedule = OneCycle {
        max_lr: cfg.max_lr,
        total_steps: steps_per_epoch * cfg.max_epochs,
        warmup: cfg.warmup,
        div_factor: cfg.div_factor,
        final_div: cfg.final_div,
    };
    let mut opt = AdamW::new(model.params(), cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
    let mut stopper = EarlyStopper::new(cfg.patience);
    let mut best: Option<ParamSet> = None;
    let mut curves = Vec::new();
    let mut stopped_early = false;
    let mut step = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut lr = 0.0;
        for (b, indices) in batch_iter(&train, cfg.batch, cfg.seed, epoch as u64)?.into_iter().enumerate() {
            let (x, labels) = train.gather(&indices);
            let mut tape = Tape::new();
            let xv = tape.constant(x);
            let mut rng = stream(cfg.seed, Stream::Dropout, step as u64);
            let fwd = model.forward(&mut tape, xv, Mode::Train, &mut rng)?;
            let loss = tape.cross_entropy_smoothed(fwd.logits, &labels, cfg.smoothing)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NanLoss { epoch, batch: b + 1 });
            }
            loss_sum += value * labels.len() as f64;
            correct += tape
                .value(fwd.logits)
                .data()
                .chunks(2)
                .zip(&labels)
                .filter(|(row, &y)| argmax(row) == y)
                .count();
            tape.backward(loss)?;
            let mut grads = model.params().collect_grads(&tape, &fwd.bound);
            clip_grad_norm(&mut grads, cfg.clip);
            lr = schedule.lr(step)?;
            opt.step(model.params_mut(), &grads, lr)?;
            step += 1;
        }
        let val = evaluate(model, &data.val, cfg.batch, cfg.smoothing)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            val_loss: val.loss,
            val_acc: val.accuracy,
            lr,
        };
        on_epoch(&record);
        curves.push(record);
        let decision = stopper.observe(epoch, val.accuracy);
        if decision.improved {
            best = Some(model.params().clone());
        }
        if decision.stop {
            stopped_early = true;
            break;
        }
    }

    let (best_epoch, best_val_acc) = stopper.best().expect("at least one epoch ran");
    *model.params_mut() = best.expect("first epoch always improves");
    let test = evaluate(model, &data.test, cfg.batch, cfg.smoothing)?;
    let other = 1 - cfg.positive_class;
    let result = RunResult {
        model: model.kind().name().to_string(),
        seed: cfg.seed,
        epochs_run: curves.len(),
        best_epoch,
        best_val_acc,
        stopped_early,
        steps_per_epoch,
        total_steps: schedule.total_steps,
        param_count: model.param_count(),
        test: TestReport {
            samples: test.labels.len(),
            loss: test.loss,
            accuracy: test.accuracy,
            primary: ClassView::new(&test.labels, &test.predictions, cfg.positive_class)?,
            alternate: ClassView::new(&test.labels, &test.predictions, other)?,
            labels: test.labels,
            predictions: test.predictions,
        },
        config: cfg.entries(),
        curves,
    };

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(CURVES_FILE), curves_csv(&result.curves))?;
        std::fs::write(dir.join(CONFUSION_FILE), confusion_csv(&result.test.labels, &result.test.predictions))?;
        std::fs::write(dir.join(RESULT_FILE), serde_json::to_string_pretty(&result)?)?;
        write_checkpoint(model, &dir.join(CHECKPOINT_FILE))?;
    }
    Ok(result)
}
