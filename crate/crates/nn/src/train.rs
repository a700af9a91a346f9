use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use tabext_core::ingest::FeaturizedTable;
use tabext_core::metrics::mcc;

use crate::error::{NnError, Result};
use crate::model::SegModel;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub updates: usize,
    pub lr: f64,
    pub seed: u64,
    /// Validate after every `val_every` updates and after the last one.
    pub val_every: usize,
    pub cutoff: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { updates: 640, lr: 0.01, seed: 0, val_every: 16, cutoff: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub update: usize,
    pub train_loss: f64,
    pub val_mcc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters at the best validation MCC (the initial model counts as
    /// update 0).
    pub model: SegModel,
    pub history: Vec<HistoryRow>,
    pub best_update: usize,
    pub best_val_mcc: f64,
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: i32,
}

impl Adam {
    pub fn new(model: &SegModel, lr: f64) -> Self {
        let zeros: Vec<Tensor> = model.params().tensors().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn step(&mut self, model: &mut SegModel, grads: &[Tensor]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in model.params_mut().tensors_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Hard labels at `cutoff` for every table, in input order.
pub fn predict_labels(model: &SegModel, tables: &[FeaturizedTable], cutoff: f64) -> Result<Vec<Vec<u8>>> {
    tables
        .par_iter()
        .map(|t| Ok(model.forward(t)?.into_iter().map(|p| u8::from(p >= cutoff)).collect()))
        .collect()
}

/// Token-level MCC over the concatenation of all tables.
pub fn evaluate_mcc(model: &SegModel, tables: &[FeaturizedTable], cutoff: f64) -> Result<f64> {
    let pred: Vec<u8> = predict_labels(model, tables, cutoff)?.into_iter().flatten().collect();
    let mut gold = Vec::with_capacity(pred.len());
    for t in tables {
        gold.extend(t.labels().ok_or(NnError::MissingLabels)?);
    }
    Ok(mcc(&pred, &gold)?)
}

/// One table per update, visiting the training set in a freshly shuffled
/// order each pass; keeps the parameters with the best validation MCC.
pub fn train(model: SegModel, train_set: &[FeaturizedTable], val_set: &[FeaturizedTable], opts: &TrainOptions) -> Result<TrainOutcome> {
    if !model.variant().is_trainable() {
        return Err(NnError::Config("UNSUP has no trainable parameters".into()));
    }
    let usable: Vec<&FeaturizedTable> = train_set.iter().filter(|t| t.token_count() > 0).collect();
    if usable.is_empty() {
        return Err(NnError::Empty("training set"));
    }
    if val_set.iter().all(|t| t.token_count() == 0) {
        return Err(NnError::Empty("validation set"));
    }
    if train_set.iter().chain(val_set).any(|t| !t.is_labeled()) {
        return Err(NnError::MissingLabels);
    }
    let val_every = opts.val_every.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut cursor = order.len();
    let mut model = model;
    let mut adam = Adam::new(&model, opts.lr);
    let mut best = model.clone();
    let mut best_mcc = evaluate_mcc(&model, val_set, opts.cutoff)?;
    let mut best_update = 0;
    let mut history = Vec::with_capacity(opts.updates);
    for update in 1..=opts.updates {
        if cursor == order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let table = usable[order[cursor]];
        cursor += 1;
        let (loss, grads) = model.loss_and_grad(table)?;
        adam.step(&mut model, &grads);
        let val_mcc = if update % val_every == 0 || update == opts.updates {
            let m = evaluate_mcc(&model, val_set, opts.cutoff)?;
            if m > best_mcc {
                best_mcc = m;
                best = model.clone();
                best_update = update;
            }
            log::debug!("update {update}: loss {loss:.5} val mcc {m:.4}");
            Some(m)
        } else {
            None
        };
        history.push(HistoryRow { update, train_loss: loss, val_mcc });
    }
    Ok(TrainOutcome { model: best, history, best_update, best_val_mcc: best_mcc })
}
