//! End-to-end training run: split, standardize, mini-batch SGD, evaluate.
//!
//! Randomness: the split uses `ChaCha8(seed)`, initialization uses `ChaCha8(seed)` in
//! [`build`], and shuffling plus dropout masks draw from `ChaCha8(seed)` stream 1, in
//! that order within each batch (shuffle once per epoch, then one mask per dropout
//! layer per batch). Gradients of a batch are accumulated in example order.

use std::fmt::Write as _;
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::{split_dataset, DataError, Dataset, Experiment};
use crate::evaluation::{accuracy_percent, LabelSpace, Prediction};
use crate::features::{
    experiment_to_sequence, experiment_to_vector, fit_standardizer, FeatureError, FeatureVector,
    Standardizer, FEATURE_DIM,
};
use crate::models::{build, Batch, DropoutCtx, ModelError, Network, NetworkSpec};
use crate::numerics::{argmax, one_hot, sgd_step, softmax_cross_entropy, Matrix, NumericsError};

pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_L2_LAMBDA: f64 = 1e-3;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.9;
const EVAL_CHUNK: usize = 256;
const TRAIN_RNG_STREAM: u64 = 1;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Run settings not fixed by the network spec. Learning rate, epochs and dropout come
/// from the spec; `l2_lambda` applies only when the spec enables L2.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub l2_lambda: f64,
    pub train_fraction: f64,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            seed,
            batch_size: DEFAULT_BATCH_SIZE,
            l2_lambda: DEFAULT_L2_LAMBDA,
            train_fraction: DEFAULT_TRAIN_FRACTION,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(TrainError::InvalidConfig(format!("l2 lambda {} must be >= 0", self.l2_lambda)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(TrainError::InvalidConfig(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        Ok(())
    }

    /// λ actually used for `spec`.
    pub fn effective_lambda(&self, spec: &NetworkSpec) -> f64 {
        if spec.l2_enabled {
            self.l2_lambda
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's batches, weighted by batch size.
    pub loss: f64,
    /// `λ·½Σw²` after the epoch.
    pub l2_penalty: f64,
    /// Accuracy of the training-mode predictions made while the epoch ran.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: String,
    pub hidden: String,
    pub lstm: bool,
    pub outputs: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub dropout: f64,
    pub train_size: usize,
    pub test_size: usize,
    /// Inference-mode loss on the training split before the first update.
    pub initial_loss: f64,
    pub epochs: Vec<EpochStats>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Not part of [`TrainReport::to_tsv`], which must be reproducible.
    pub wall_seconds: f64,
}

pub const REPORT_FORMAT: &str = "# format: train-report/1";

impl TrainReport {
    /// Summary block of `key<TAB>value` lines, a blank line, then the epoch table.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("{REPORT_FORMAT}\n");
        let fields: [(&str, String); 15] = [
            ("model", self.model.clone()),
            ("hidden", self.hidden.clone()),
            ("lstm", self.lstm.to_string()),
            ("outputs", self.outputs.to_string()),
            ("seed", self.seed.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("l2_lambda", self.l2_lambda.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("dropout", self.dropout.to_string()),
            ("epochs", self.epochs.len().to_string()),
            ("train_size", self.train_size.to_string()),
            ("test_size", self.test_size.to_string()),
            ("initial_loss", self.initial_loss.to_string()),
            ("train_accuracy", self.train_accuracy.to_string()),
            ("test_accuracy", self.test_accuracy.to_string()),
        ];
        for (k, v) in fields {
            let _ = writeln!(out, "{k}\t{v}");
        }
        out.push_str("\nepoch\tloss\tl2_penalty\ttrain_accuracy\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", e.epoch, e.loss, e.l2_penalty, e.train_accuracy);
        }
        out
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub report: TrainReport,
    pub space: LabelSpace,
    pub train_predictions: Vec<Prediction>,
    pub test_predictions: Vec<Prediction>,
}

/// Standardized network inputs for a set of experiments.
enum Inputs {
    Vectors(Matrix),
    Sequences(Vec<Vec<[f64; FEATURE_DIM]>>),
}

impl Inputs {
    fn prepare(recurrent: bool, exps: &[Experiment], s: &Standardizer) -> Self {
        if recurrent {
            Inputs::Sequences(
                exps.iter()
                    .map(|e| experiment_to_sequence(e).steps.iter().map(|v| s.apply(v).0).collect())
                    .collect(),
            )
        } else {
            let mut m = Matrix::zeros(exps.len(), FEATURE_DIM);
            for (i, e) in exps.iter().enumerate() {
                m.row_mut(i).copy_from_slice(&s.apply(&experiment_to_vector(e)).0);
            }
            Inputs::Vectors(m)
        }
    }

    fn len(&self) -> usize {
        match self {
            Inputs::Vectors(m) => m.rows(),
            Inputs::Sequences(s) => s.len(),
        }
    }

    /// Runs `f` on the batch made of rows `idx`, in that order.
    fn with_batch<T>(&self, idx: &[usize], f: impl FnOnce(Batch<'_>) -> T) -> T {
        match self {
            Inputs::Vectors(m) => {
                let mut b = Matrix::zeros(idx.len(), FEATURE_DIM);
                for (r, &i) in idx.iter().enumerate() {
                    b.row_mut(r).copy_from_slice(m.row(i));
                }
                f(Batch::Vectors(&b))
            }
            Inputs::Sequences(s) => {
                let refs: Vec<&[[f64; FEATURE_DIM]]> = idx.iter().map(|&i| s[i].as_slice()).collect();
                f(Batch::Sequences(&refs))
            }
        }
    }
}

/// Fits the input standardizer on training experiments: averaged vectors for
/// feed-forward networks, every timestep for recurrent ones.
pub fn fit_for(spec: &NetworkSpec, train: &Dataset) -> Result<Standardizer, TrainError> {
    let vectors: Vec<FeatureVector> = if spec.first_hidden_is_lstm {
        train
            .experiments()
            .iter()
            .flat_map(|e| experiment_to_sequence(e).steps)
            .collect()
    } else {
        train.experiments().iter().map(experiment_to_vector).collect()
    };
    Ok(fit_standardizer(&vectors)?)
}

fn label_space(spec: &NetworkSpec) -> Result<LabelSpace, TrainError> {
    LabelSpace::for_outputs(spec.output_size).ok_or_else(|| {
        TrainError::Numerics(NumericsError::ShapeMismatch(format!(
            "{} outputs do not match a label space",
            spec.output_size
        )))
    })
}

fn classes(space: LabelSpace, ds: &Dataset) -> Vec<usize> {
    ds.experiments().iter().map(|e| space.class_of(e.label)).collect()
}

fn warn_if_degenerate(space: LabelSpace, name: &str, cls: &[usize]) {
    for c in 0..space.size() {
        if !cls.contains(&c) {
            warn!("DegenerateDataset: {name} split has no {} examples", space.name(c));
        }
    }
}

/// Splits, standardizes and trains `spec` for `spec.epochs` epochs of mini-batch SGD.
pub fn train(spec: &NetworkSpec, ds: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let start = Instant::now();
    spec.validate()?;
    cfg.validate()?;
    let space = label_space(spec)?;
    let (train_ds, test_ds) = split_dataset(ds, cfg.train_fraction, cfg.seed)?;

    let standardizer = fit_for(spec, &train_ds)?;
    let mut net = build(spec, cfg.seed)?;
    net.set_standardizer(Some(standardizer.clone()));

    let inputs = Inputs::prepare(net.is_recurrent(), train_ds.experiments(), &standardizer);
    let train_cls = classes(space, &train_ds);
    warn_if_degenerate(space, "training", &train_cls);
    warn_if_degenerate(space, "test", &classes(space, &test_ds));

    let lambda = cfg.effective_lambda(spec);
    let n = inputs.len();
    let all: Vec<usize> = (0..n).collect();
    let initial_loss = inputs.with_batch(&all, |b| -> Result<f64, TrainError> {
        let (z, _) = net.forward::<ChaCha8Rng>(b, None)?;
        Ok(softmax_cross_entropy(&z, &one_hot(&train_cls, space.size()))?.0)
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(TRAIN_RNG_STREAM);
    let mut order = all;
    let mut history = Vec::with_capacity(spec.epochs);
    for epoch in 1..=spec.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for idx in order.chunks(cfg.batch_size) {
            let targets: Vec<usize> = idx.iter().map(|&i| train_cls[i]).collect();
            let grads = inputs.with_batch(idx, |b| -> Result<Vec<Vec<f64>>, TrainError> {
                let dropout = (spec.dropout_rate > 0.0).then_some(DropoutCtx {
                    rate: spec.dropout_rate,
                    rng: &mut rng,
                });
                let (z, cache) = net.forward(b, dropout)?;
                let (loss, dz) = softmax_cross_entropy(&z, &one_hot(&targets, space.size()))?;
                loss_sum += loss * idx.len() as f64;
                correct += (0..z.rows()).filter(|&r| argmax(z.row(r)) == targets[r]).count();
                Ok(net.backward(&cache, &dz)?)
            })?;
            let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
            sgd_step(&mut net.param_blocks_mut(), &grad_refs, spec.learning_rate, lambda)?;
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / n as f64,
            l2_penalty: lambda * net.l2_norm_sq_half(),
            train_accuracy: accuracy_percent(correct, n),
        };
        if epoch == 1 || epoch % 100 == 0 || epoch == spec.epochs {
            info!(
                "{} epoch {epoch}/{}: loss {:.5} train acc {:.2}%",
                spec.name, spec.epochs, stats.loss, stats.train_accuracy
            );
        }
        history.push(stats);
    }

    let (train_accuracy, train_predictions) = evaluate(&net, &train_ds, &standardizer)?;
    let (test_accuracy, test_predictions) = evaluate(&net, &test_ds, &standardizer)?;
    let report = TrainReport {
        model: spec.name.clone(),
        hidden: spec.hidden_string(),
        lstm: spec.first_hidden_is_lstm,
        outputs: spec.output_size,
        seed: cfg.seed,
        batch_size: cfg.batch_size,
        l2_lambda: lambda,
        learning_rate: spec.learning_rate,
        dropout: spec.dropout_rate,
        train_size: train_ds.len(),
        test_size: test_ds.len(),
        initial_loss,
        epochs: history,
        train_accuracy,
        test_accuracy,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        network: net,
        report,
        space,
        train_predictions,
        test_predictions,
    })
}

/// Inference-mode predictions (argmax, lowest index on ties) and accuracy in percent.
/// Chunks are evaluated in parallel; results keep dataset order.
pub fn evaluate(
    net: &Network,
    ds: &Dataset,
    standardizer: &Standardizer,
) -> Result<(f64, Vec<Prediction>), TrainError> {
    let space = label_space(net.spec())?;
    let exps = ds.experiments();
    let inputs = Inputs::prepare(net.is_recurrent(), exps, standardizer);
    let all: Vec<usize> = (0..inputs.len()).collect();
    let predicted: Vec<Vec<usize>> = all
        .par_chunks(EVAL_CHUNK)
        .map(|idx| inputs.with_batch(idx, |b| net.predict(b)))
        .collect::<Result<_, _>>()?;
    let preds: Vec<Prediction> = exps
        .iter()
        .zip(predicted.into_iter().flatten())
        .map(|(e, p)| Prediction {
            id: e.id.clone(),
            truth: space.class_of(e.label),
            predicted: p,
        })
        .collect();
    let correct = preds.iter().filter(|p| p.truth == p.predicted).count();
    Ok((accuracy_percent(correct, preds.len()), preds))
}
