//! Flow-level 3-layer perceptron baseline, trained with the same loss and
//! optimizer machinery as the GNN.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::argmax;
use crate::metrics::{metrics_from_confusion, ConfusionMatrix};
use crate::nn::{
    adam_step, dense, softmax_row, Activation, AdamHyper, AdamState, ParameterStore, Tape, Tensor,
};
use crate::train::{EpochStats, TrainHistory};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: (usize, usize),
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub patience: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: (128, 64),
            epochs: 200,
            batch_size: 512,
            adam: AdamHyper::default(),
            patience: 10,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpModel {
    pub store: ParameterStore,
    pub input_dim: usize,
    pub hidden: (usize, usize),
    pub class_count: usize,
}

impl MlpModel {
    fn init(input_dim: usize, hidden: (usize, usize), class_count: usize, seed: u64) -> Result<Self> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let glorot = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            let data: Vec<f64> = (0..rows * cols)
                .map(|_| rng.random_range(-limit..=limit))
                .collect();
            Tensor::from_vec(&[rows, cols], data).expect("shape by construction")
        };
        let mut store = ParameterStore::new();
        store.push("mlp.w1", glorot(input_dim, hidden.0, &mut rng))?;
        store.push("mlp.b1", Tensor::zeros(&[hidden.0]))?;
        store.push("mlp.w2", glorot(hidden.0, hidden.1, &mut rng))?;
        store.push("mlp.b2", Tensor::zeros(&[hidden.1]))?;
        store.push("mlp.w3", glorot(hidden.1, class_count, &mut rng))?;
        store.push("mlp.b3", Tensor::zeros(&[class_count]))?;
        Ok(MlpModel {
            store,
            input_dim,
            hidden,
            class_count,
        })
    }

    fn forward_batch(&self, tape: &mut Tape, batch: Tensor) -> Result<crate::nn::ValueId> {
        let ids = self.store.register_all(tape);
        let x = tape.constant(batch);
        let h1 = dense(tape, x, ids[0], ids[1], Activation::Relu)?;
        let h2 = dense(tape, h1, ids[2], ids[3], Activation::Relu)?;
        dense(tape, h2, ids[4], ids[5], Activation::None)
    }

    pub fn logits(&self, vectors: &[Vec<f64>]) -> Result<Tensor> {
        let batch = rows_tensor(vectors, self.input_dim)?;
        let mut tape = Tape::new();
        let out = self.forward_batch(&mut tape, batch)?;
        Ok(tape.value(out).clone())
    }

    pub fn predict(&self, vector: &[f64]) -> (usize, Vec<f64>) {
        let logits = self
            .logits(std::slice::from_ref(&vector.to_vec()))
            .expect("consistent input dim");
        let probs = softmax_row(logits.row(0));
        (argmax(&probs), probs)
    }
}

fn rows_tensor(vectors: &[Vec<f64>], dim: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(vectors.len() * dim);
    for v in vectors {
        if v.len() != dim {
            return Err(Error::Shape {
                op: "rows_tensor",
                lhs: vec![dim],
                rhs: vec![v.len()],
            });
        }
        data.extend_from_slice(v);
    }
    Tensor::from_vec(&[vectors.len(), dim], data)
}

fn eval_split(
    model: &MlpModel,
    x: &[Vec<f64>],
    y: &[usize],
) -> Result<(f64, f64)> {
    let logits = model.logits(x)?;
    let mut cm = ConfusionMatrix::new(model.class_count);
    let mut loss_sum = 0.0;
    for (row, &truth) in y.iter().enumerate() {
        let probs = softmax_row(logits.row(row));
        loss_sum += -(probs[truth].max(1e-300)).ln();
        cm.add(truth, argmax(&probs))?;
    }
    let metrics = metrics_from_confusion(&cm);
    Ok((loss_sum / y.len().max(1) as f64, metrics.weighted_f1))
}

/// Train the MLP baseline with early stopping on validation weighted F1.
pub fn train_mlp(
    train_x: &[Vec<f64>],
    train_y: &[usize],
    val_x: &[Vec<f64>],
    val_y: &[usize],
    class_count: usize,
    config: &MlpConfig,
) -> Result<(MlpModel, TrainHistory)> {
    if train_x.is_empty() || train_x.len() != train_y.len() || val_x.len() != val_y.len() {
        return Err(Error::EmptyInput("train_mlp needs aligned non-empty inputs"));
    }
    let input_dim = train_x[0].len();
    let mut model = MlpModel::init(input_dim, config.hidden, class_count, config.seed)?;
    let mut adam = AdamState::new(&model.store, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, MlpModel, usize)> = None;
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..train_x.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size.max(1)).enumerate() {
            let rows: Vec<Vec<f64>> = chunk.iter().map(|&i| train_x[i].clone()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_y[i]).collect();
            let batch = rows_tensor(&rows, input_dim)?;
            let mut tape = Tape::new();
            let ids = model.store.register_all(&mut tape);
            let x = tape.constant(batch);
            let h1 = dense(&mut tape, x, ids[0], ids[1], Activation::Relu)?;
            let h2 = dense(&mut tape, h1, ids[2], ids[3], Activation::Relu)?;
            let logits = dense(&mut tape, h2, ids[4], ids[5], Activation::None)?;
            let loss = tape.softmax_cross_entropy(logits, Arc::new(labels))?;
            let loss_value = tape.value(loss).scalar_value();
            if !loss_value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                });
            }
            tape.backward(loss)?;
            let grads = model.store.collect_grads(&tape, &ids);
            adam_step(&mut model.store, &grads, &mut adam)?;
            loss_sum += loss_value * chunk.len() as f64;
            seen += chunk.len();
        }

        let (val_loss, val_f1) = eval_split(&model, val_x, val_y)?;
        history.epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / seen.max(1) as f64,
            val_loss,
            val_weighted_f1: val_f1,
        });
        let improved = best.as_ref().map_or(true, |(f, _, _)| val_f1 > *f);
        if improved {
            best = Some((val_f1, model.clone(), epoch));
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    let (_, best_model, best_epoch) = best.expect("at least one epoch ran");
    history.best_epoch = best_epoch;
    Ok((best_model, history))
}
