//! α-weighted loss, backpropagation and the Adam training loop.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{affine, relu, MlpModel, Standardization};
use crate::dataset::LabeledSample;
use crate::descriptor::Grid;
use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Loss split into its two weighted terms; `total = moment + corr`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub moment: f64,
    pub corr: f64,
}

impl LossParts {
    pub fn add(&mut self, other: LossParts) {
        self.total += other.total;
        self.moment += other.moment;
        self.corr += other.corr;
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::domain(format!("alpha must be in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// Batch loss on the target layout (five log moments, eight correlations per row).
pub fn loss(pred: &[f64], target: &[f64], alpha: f64) -> Result<LossParts> {
    loss_on_grid(pred, target, Grid::TARGET, alpha)
}

/// `(α/B) Σ (log m - log m̂)² + ((1-α)/B) Σ (ρ - ρ̂)²` over rows laid out on `grid`.
pub fn loss_on_grid(pred: &[f64], target: &[f64], grid: Grid, alpha: f64) -> Result<LossParts> {
    check_alpha(alpha)?;
    let width = grid.feature_len();
    if pred.len() != target.len() {
        return Err(Error::shape(target.len(), pred.len()));
    }
    if pred.is_empty() || pred.len() % width != 0 {
        return Err(Error::shape(width, pred.len() % width));
    }
    let rows = pred.len() / width;
    let (mut sm, mut sc) = (0.0, 0.0);
    for (p, t) in pred.chunks_exact(width).zip(target.chunks_exact(width)) {
        for (j, (a, b)) in p.iter().zip(t).enumerate() {
            let d = (a - b) * (a - b);
            if j < grid.n_mom {
                sm += d;
            } else {
                sc += d;
            }
        }
    }
    let b = rows as f64;
    let moment = alpha / b * sm;
    let corr = (1.0 - alpha) / b * sc;
    Ok(LossParts {
        total: moment + corr,
        moment,
        corr,
    })
}

/// Adds the gradient of the loss over `inputs`/`targets` into `grad`, with
/// the loss normalized by `divisor` rows instead of the slice's own count.
/// Returns this slice's share of the loss.
pub fn accumulate_gradient(
    model: &MlpModel,
    inputs: &[f64],
    targets: &[f64],
    alpha: f64,
    divisor: usize,
    grad: &mut [f64],
) -> Result<LossParts> {
    check_alpha(alpha)?;
    let (n_in, n_out) = (model.n_in(), model.n_out());
    let rows = inputs.len() / n_in;
    if inputs.len() != rows * n_in || targets.len() != rows * n_out {
        return Err(Error::shape(rows * n_out, targets.len()));
    }
    if grad.len() != model.param_count() {
        return Err(Error::shape(model.param_count(), grad.len()));
    }
    if divisor == 0 {
        return Err(Error::domain("batch size must be positive"));
    }
    let n_mom = model.output_grid().n_mom;
    let coef_m = 2.0 * alpha / divisor as f64;
    let coef_c = 2.0 * (1.0 - alpha) / divisor as f64;
    let out_scale = &model.standardization().out_scale;
    let n_layers = model.n_layers();
    let offsets: Vec<usize> = (0..n_layers).map(|l| model.layer_offset(l)).collect();

    let mut acts: Vec<Vec<f64>> = model.layer_sizes()[..n_layers].iter().map(|n| vec![0.0; *n]).collect();
    let mut z = Vec::new();
    let mut delta = Vec::new();
    let mut back = Vec::new();
    let mut parts = LossParts::default();

    for (x, t) in inputs.chunks_exact(n_in).zip(targets.chunks_exact(n_out)) {
        model.normalize_input(x, &mut acts[0]);
        for l in 0..n_layers {
            let (w, b) = model.layer(l);
            affine(w, b, &acts[l], &mut z);
            if l + 1 < n_layers {
                relu(&mut z);
                acts[l + 1].copy_from_slice(&z);
            }
        }
        let mut pred = z.clone();
        model.denormalize_output(&mut pred);

        delta.clear();
        let (mut sm, mut sc) = (0.0, 0.0);
        for (j, ((p, y), s)) in pred.iter().zip(t).zip(out_scale).enumerate() {
            let e = p - y;
            let c = if j < n_mom {
                sm += e * e;
                coef_m
            } else {
                sc += e * e;
                coef_c
            };
            delta.push(c * e * s);
        }
        let m = alpha / divisor as f64 * sm;
        let c = (1.0 - alpha) / divisor as f64 * sc;
        parts.add(LossParts {
            total: m + c,
            moment: m,
            corr: c,
        });

        for l in (0..n_layers).rev() {
            let h = &acts[l];
            let n_o = delta.len();
            let off = offsets[l];
            let (gw, rest) = grad[off..].split_at_mut(h.len() * n_o);
            for (hi, row) in h.iter().zip(gw.chunks_exact_mut(n_o)) {
                if *hi != 0.0 {
                    for (g, d) in row.iter_mut().zip(&delta) {
                        *g += hi * d;
                    }
                }
            }
            for (g, d) in rest[..n_o].iter_mut().zip(&delta) {
                *g += d;
            }
            if l > 0 {
                let (w, _) = model.layer(l);
                back.clear();
                for (hi, row) in h.iter().zip(w.chunks_exact(n_o)) {
                    if *hi > 0.0 {
                        back.push(row.iter().zip(&delta).map(|(a, b)| a * b).sum());
                    } else {
                        back.push(0.0);
                    }
                }
                core::mem::swap(&mut delta, &mut back);
            }
        }
    }
    Ok(parts)
}

/// Loss and its gradient for one mini-batch. Implementations must reduce
/// in an order that does not depend on thread timing.
pub trait BatchExecutor {
    fn loss_and_gradient(
        &self,
        model: &MlpModel,
        inputs: &[f64],
        targets: &[f64],
        alpha: f64,
        grad: &mut [f64],
    ) -> Result<LossParts>;
}

/// Single-threaded executor.
#[derive(Debug, Clone, Copy, Default)]
pub struct SerialExecutor;

impl BatchExecutor for SerialExecutor {
    fn loss_and_gradient(
        &self,
        model: &MlpModel,
        inputs: &[f64],
        targets: &[f64],
        alpha: f64,
        grad: &mut [f64],
    ) -> Result<LossParts> {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let rows = inputs.len() / model.n_in().max(1);
        accumulate_gradient(model, inputs, targets, alpha, rows, grad)
    }
}

/// Loss and gradient of a whole batch with the serial executor.
pub fn loss_and_gradient(model: &MlpModel, inputs: &[f64], targets: &[f64], alpha: f64) -> Result<(LossParts, Vec<f64>)> {
    let mut grad = vec![0.0; model.param_count()];
    let parts = SerialExecutor.loss_and_gradient(model, inputs, targets, alpha, &mut grad)?;
    Ok((parts, grad))
}

/// Row-major feature matrices of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub n_in: usize,
    pub n_out: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl TrainData {
    pub fn new(n_in: usize, n_out: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if n_in == 0 || n_out == 0 || inputs.len() % n_in != 0 {
            return Err(Error::shape(n_in, inputs.len()));
        }
        if targets.len() != inputs.len() / n_in * n_out {
            return Err(Error::shape(inputs.len() / n_in * n_out, targets.len()));
        }
        Ok(TrainData {
            n_in,
            n_out,
            inputs,
            targets,
        })
    }

    pub fn from_samples(samples: &[LabeledSample]) -> Result<Self> {
        let first = samples.first().ok_or_else(|| Error::domain("empty sample set"))?;
        let n_in = first.input_features().len();
        let n_out = first.target_features().len();
        let mut inputs = Vec::with_capacity(samples.len() * n_in);
        let mut targets = Vec::with_capacity(samples.len() * n_out);
        for s in samples {
            inputs.extend(s.input_a.features().chain(s.input_b.features()));
            targets.extend(s.target.features());
        }
        Self::new(n_in, n_out, inputs, targets)
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.n_in
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.n_in..(i + 1) * self.n_in]
    }

    pub fn target_row(&self, i: usize) -> &[f64] {
        &self.targets[i * self.n_out..(i + 1) * self.n_out]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Fit per-feature input/output standardization on the training split.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            epochs: 150,
            batch_size: 64,
            weight_decay: 1e-5,
            alpha: 0.5,
            seed: 0,
            patience: 20,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::structural("learning_rate must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::structural("epochs and batch_size must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::structural("weight_decay must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::structural("Adam parameters out of range"));
        }
        check_alpha(self.alpha).map_err(|_| Error::structural("alpha must be in [0, 1]"))
    }
}

/// Adam first/second-moment state with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
        let decay = 1.0 - cfg.learning_rate * cfg.weight_decay;
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p = *p * decay - cfg.learning_rate * mhat / (libm::sqrt(vhat) + cfg.epsilon);
        }
    }
}

/// One row of the training history. Loss terms are on the validation split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub moment_term: f64,
    pub corr_term: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss.
    pub model: MlpModel,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Training aborted; `checkpoint` holds the last finite state, if any epoch finished.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainFailure {
    pub error: Error,
    pub checkpoint: Option<Box<TrainOutcome>>,
}

impl From<Error> for TrainFailure {
    fn from(error: Error) -> Self {
        TrainFailure {
            error,
            checkpoint: None,
        }
    }
}

/// Validation loss of a model on a split.
pub fn evaluate_loss(model: &MlpModel, data: &TrainData, alpha: f64) -> Result<LossParts> {
    let pred = model.forward_batch(&data.inputs)?;
    loss_on_grid(&pred, &data.targets, model.output_grid(), alpha)
}

pub fn train(
    model: MlpModel,
    train_set: &TrainData,
    val_set: &TrainData,
    cfg: &TrainConfig,
    executor: &dyn BatchExecutor,
) -> core::result::Result<TrainOutcome, TrainFailure> {
    train_with_observer(model, train_set, val_set, cfg, executor, &mut |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with_observer(
    mut model: MlpModel,
    train_set: &TrainData,
    val_set: &TrainData,
    cfg: &TrainConfig,
    executor: &dyn BatchExecutor,
    observer: &mut dyn FnMut(&EpochRecord),
) -> core::result::Result<TrainOutcome, TrainFailure> {
    cfg.validate()?;
    for d in [train_set, val_set] {
        if d.is_empty() {
            return Err(Error::domain("training and validation splits must be non-empty").into());
        }
        if d.n_in != model.n_in() || d.n_out != model.n_out() {
            return Err(Error::shape(model.n_in(), d.n_in).into());
        }
    }
    if cfg.standardize {
        model.set_standardization(Standardization::fit(
            &train_set.inputs,
            train_set.n_in,
            &train_set.targets,
            train_set.n_out,
        )?)?;
    }

    let seeds = SeedStream::new(cfg.seed);
    let n = train_set.len();
    let (n_in, n_out) = (train_set.n_in, train_set.n_out);
    let mut order: Vec<usize> = (0..n).collect();
    let mut adam = AdamState::new(model.param_count());
    let mut grad = vec![0.0; model.param_count()];
    let mut xb = Vec::with_capacity(cfg.batch_size * n_in);
    let mut yb = Vec::with_capacity(cfg.batch_size * n_out);

    let mut best: Option<(MlpModel, usize, f64)> = None;
    let mut history = Vec::new();
    let mut since_best = 0;

    let failure = |error: Error, best: &Option<(MlpModel, usize, f64)>, history: &Vec<EpochRecord>| TrainFailure {
        error,
        checkpoint: best.as_ref().map(|(m, e, _)| {
            Box::new(TrainOutcome {
                model: m.clone(),
                best_epoch: *e,
                history: history.clone(),
            })
        }),
    };

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut seeds.rng(epoch as u64));
        let mut train_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            xb.clear();
            yb.clear();
            for &i in chunk {
                xb.extend_from_slice(train_set.input_row(i));
                yb.extend_from_slice(train_set.target_row(i));
            }
            let parts = executor
                .loss_and_gradient(&model, &xb, &yb, cfg.alpha, &mut grad)
                .map_err(|e| failure(e, &best, &history))?;
            if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(failure(Error::Diverged { epoch }, &best, &history));
            }
            train_sum += parts.total * chunk.len() as f64;
            adam.update(model.params_mut(), &grad, cfg);
        }
        let val = evaluate_loss(&model, val_set, cfg.alpha).map_err(|e| failure(e, &best, &history))?;
        if !val.total.is_finite() {
            return Err(failure(Error::Diverged { epoch }, &best, &history));
        }
        let record = EpochRecord {
            epoch,
            train_loss: train_sum / n as f64,
            val_loss: val.total,
            moment_term: val.moment,
            corr_term: val.corr,
        };
        history.push(record);
        observer(&record);

        if best.as_ref().map_or(true, |(_, _, l)| val.total < *l) {
            best = Some((model.clone(), epoch, val.total));
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                break;
            }
        }
    }

    let (model, best_epoch, _) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        best_epoch,
        history,
    })
}
