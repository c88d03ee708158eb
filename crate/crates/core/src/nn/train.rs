//! Mini-batch L1 training with early stopping.
//!
//! The schedule watches validation loss: a new minimum resets the plateau
//! counter, the learning rate halves when the counter reaches
//! `plateau_halve`, and training stops once it reaches `plateau_stop`
//! (or at `max_epochs`, when set). The returned parameters are the ones
//! from the best validation epoch, not the last.
//!
//! Gradients are reduced over fixed-size sample chunks whose partial sums
//! are folded in order, so results are bit-identical regardless of how
//! many worker threads run the chunks.

use super::adam::Adam;
use super::model::{backward, forward, forward_cached, FusionModelParams, TrainingMeta};
use crate::error::Error;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Samples per deterministic gradient chunk.
pub const GRAD_CHUNK: usize = 8;

const SHUFFLE_STREAM: u64 = 1;

/// One training example: channel-major input of
/// `in_channels * window_len` values and a `window_len` target.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingHyperparams {
    pub lr_init: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Plateau length that halves the learning rate.
    pub plateau_halve: usize,
    /// Multiplier applied at that point.
    pub lr_factor: f64,
    /// Plateau length that stops training.
    pub plateau_stop: usize,
    /// Hard epoch cap; 0 means none.
    pub max_epochs: usize,
}

impl Default for TrainingHyperparams {
    fn default() -> Self {
        TrainingHyperparams {
            lr_init: 0.001,
            batch_size: 80,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            plateau_halve: 50,
            lr_factor: 0.5,
            plateau_stop: 75,
            max_epochs: 0,
        }
    }
}

/// Losses and learning rate for one epoch. `epoch` is 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_l1: f64,
    pub val_l1: f64,
    /// Rate the epoch's updates were taken with.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch, meta filled in.
    pub params: FusionModelParams,
    pub history: Vec<EpochStats>,
}

/// Training failure; divergence carries the history so callers can still
/// write it out for diagnosis.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    Invalid(String),
    Diverged { epoch: usize, history: Vec<EpochStats> },
}

impl std::fmt::Display for TrainError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainError::Invalid(msg) => write!(f, "invalid training setup: {msg}"),
            TrainError::Diverged { epoch, .. } => {
                write!(f, "loss became non-finite at epoch {epoch}")
            }
        }
    }
}

impl std::error::Error for TrainError {}

impl From<TrainError> for Error {
    fn from(e: TrainError) -> Error {
        match e {
            TrainError::Invalid(msg) => Error::InvalidInput(msg),
            TrainError::Diverged { epoch, .. } => Error::TrainingDiverged(epoch),
        }
    }
}

fn l1_loss(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(a, b)| (a - b).abs()).sum::<f64>() / target.len() as f64
}

/// Subgradient sign with sign(0) = 0; f64::signum maps zero to +-1.
fn l1_sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else if d == 0.0 {
        0.0
    } else {
        f64::NAN
    }
}

/// Summed (not yet batch-averaged) gradient and loss over a batch,
/// chunk-parallel with an ordered fold.
fn batch_grad(params: &FusionModelParams, batch: &[&TrainSample]) -> (Vec<f64>, f64) {
    let n = params.values.len();
    let partials: Vec<(Vec<f64>, f64)> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; n];
            let mut loss = 0.0;
            for sample in chunk {
                let (y, cache) = forward_cached(params, &sample.input)
                    .expect("samples validated before training");
                loss += l1_loss(&y, &sample.target);
                let inv = 1.0 / sample.target.len() as f64;
                let dl: Vec<f64> = y
                    .iter()
                    .zip(&sample.target)
                    .map(|(a, b)| l1_sign(a - b) * inv)
                    .collect();
                let (g, _) = backward(params, &cache, &dl);
                for (a, b) in acc.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            (acc, loss)
        })
        .collect();
    let mut grad = vec![0.0; n];
    let mut loss = 0.0;
    for (g, l) in partials {
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        loss += l;
    }
    (grad, loss)
}

/// Mean L1 over a whole set, chunked the same way as the gradients.
pub fn mean_loss(params: &FusionModelParams, set: &[TrainSample]) -> f64 {
    let partials: Vec<f64> = set
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|s| {
                    let y = forward(params, &s.input).expect("samples validated");
                    l1_loss(&y, &s.target)
                })
                .sum()
        })
        .collect();
    partials.iter().sum::<f64>() / set.len() as f64
}

fn validate_set(
    params: &FusionModelParams,
    set: &[TrainSample],
    what: &str,
) -> Result<(), TrainError> {
    if set.is_empty() {
        return Err(TrainError::Invalid(format!("{what} set is empty")));
    }
    let in_len = params.config.in_channels * params.config.window_len;
    for (i, s) in set.iter().enumerate() {
        if s.input.len() != in_len || s.target.len() != params.config.window_len {
            return Err(TrainError::Invalid(format!(
                "{what} sample {i}: input {} / target {} vs expected {in_len} / {}",
                s.input.len(),
                s.target.len(),
                params.config.window_len
            )));
        }
    }
    Ok(())
}

/// Train from the given initialization. `seed` drives epoch shuffling only;
/// it is recorded in the returned meta together with the schedule outcome.
pub fn train(
    init: FusionModelParams,
    train_set: &[TrainSample],
    val_set: &[TrainSample],
    hp: &TrainingHyperparams,
    seed: u64,
) -> Result<TrainOutcome, TrainError> {
    init.config.validate().map_err(|e| TrainError::Invalid(e.to_string()))?;
    validate_set(&init, train_set, "train")?;
    validate_set(&init, val_set, "validation")?;
    if hp.batch_size == 0 {
        return Err(TrainError::Invalid("batch size must be positive".into()));
    }
    if !(hp.lr_init > 0.0) || !(hp.lr_factor > 0.0) {
        return Err(TrainError::Invalid("learning rates must be positive".into()));
    }
    if hp.plateau_halve >= hp.plateau_stop {
        return Err(TrainError::Invalid(format!(
            "halve plateau {} must come before stop plateau {}",
            hp.plateau_halve, hp.plateau_stop
        )));
    }

    let mut params = init;
    let mut adam = Adam::new(params.values.len(), hp.beta1, hp.beta2, hp.eps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut lr = hp.lr_init;
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_values = params.values.clone();
    let mut plateau = 0usize;
    let mut history: Vec<EpochStats> = Vec::new();

    let mut epoch = 0usize;
    loop {
        epoch += 1;
        if hp.max_epochs != 0 && epoch > hp.max_epochs {
            break;
        }
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for batch_idx in order.chunks(hp.batch_size) {
            let batch: Vec<&TrainSample> = batch_idx.iter().map(|&i| &train_set[i]).collect();
            let (mut grad, loss) = batch_grad(&params, &batch);
            let inv = 1.0 / batch.len() as f64;
            for g in &mut grad {
                *g *= inv;
            }
            adam.step(&mut params.values, &grad, lr);
            loss_sum += loss;
        }
        let train_l1 = loss_sum / train_set.len() as f64;
        let val_l1 = mean_loss(&params, val_set);
        history.push(EpochStats { epoch, train_l1, val_l1, lr });

        if !train_l1.is_finite() || !val_l1.is_finite() {
            return Err(TrainError::Diverged { epoch, history });
        }

        if val_l1 < best_val {
            best_val = val_l1;
            best_epoch = epoch;
            best_values.copy_from_slice(&params.values);
            plateau = 0;
        } else {
            plateau += 1;
            if plateau >= hp.plateau_stop {
                break;
            }
            if plateau == hp.plateau_halve {
                lr *= hp.lr_factor;
            }
        }
    }

    params.values = best_values;
    params.meta = Some(TrainingMeta {
        epochs_run: history.len(),
        best_epoch,
        best_val_l1: best_val,
        final_lr: lr,
        seed,
        train_subjects: Vec::new(),
    });
    Ok(TrainOutcome { params, history })
}
