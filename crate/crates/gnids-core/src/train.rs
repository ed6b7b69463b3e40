//! Mini-batch GNN training with early stopping on validation weighted F1.
//!
//! Loss is flow-weighted: each flow counts once in a batch regardless of its
//! graph's size. Graphs inside a batch run forward/backward in parallel on
//! separate tapes; gradients merge in batch order, so results are bitwise
//! reproducible for a fixed (samples, config, seed) triple regardless of
//! thread count.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{forward_on_tape, GnnConfig, GnnIds, GnnParameters, GraphTopo};
use crate::graph::GraphSample;
use crate::metrics::{metrics_from_confusion, ConfusionMatrix, Metrics};
use crate::nn::{adam_step, softmax_row, AdamHyper, AdamState, Tape, Tensor};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Maximum epochs.
    pub epochs: usize,
    /// Graphs per optimizer step.
    pub batch_size: usize,
    pub adam: AdamHyper,
    pub seed: u64,
    /// Early-stop patience in epochs without validation improvement.
    pub patience: usize,
    pub class_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 8,
            adam: AdamHyper::default(),
            seed: 1,
            patience: 10,
            class_count: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_weighted_f1: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
}

struct PreparedSample<'a> {
    sample: &'a GraphSample,
    topo: GraphTopo,
    labels: Arc<Vec<usize>>,
}

fn prepare<'a>(samples: &'a [GraphSample], class_count: usize) -> Result<Vec<PreparedSample<'a>>> {
    samples
        .iter()
        .map(|s| {
            let labels: Vec<usize> = s.graph.flows.iter().map(|f| f.label).collect();
            if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
                return Err(Error::Usage(format!(
                    "flow label {bad} out of range for {class_count} classes"
                )));
            }
            Ok(PreparedSample {
                sample: s,
                topo: GraphTopo::new(&s.graph),
                labels: Arc::new(labels),
            })
        })
        .collect()
}

fn graph_loss_and_grads(
    item: &PreparedSample<'_>,
    params: &GnnParameters,
) -> Result<(f64, usize, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let ids = GnnIds::register(params, &mut tape);
    let logits = forward_on_tape(&mut tape, &item.sample.graph, &item.topo, params, &ids)?;
    let loss = tape.softmax_cross_entropy(logits, item.labels.clone())?;
    let loss_value = tape.value(loss).scalar_value();
    tape.backward(loss)?;
    let grads = params.store.collect_grads(&tape, ids.param_ids());
    Ok((loss_value, item.labels.len(), grads))
}

fn graph_eval(
    item: &PreparedSample<'_>,
    params: &GnnParameters,
) -> Result<(f64, Vec<(usize, usize)>)> {
    let logits = crate::gnn::forward(&item.sample.graph, params)?;
    let mut loss_sum = 0.0;
    let mut pairs = Vec::with_capacity(item.labels.len());
    for (row, &truth) in item.labels.iter().enumerate() {
        let probs = softmax_row(logits.row(row));
        loss_sum += -(probs[truth].max(1e-300)).ln();
        pairs.push((truth, crate::gnn::argmax(&probs)));
    }
    Ok((loss_sum, pairs))
}

/// Evaluate prepared samples: pooled confusion matrix over all flows plus the
/// mean per-flow cross-entropy.
fn evaluate_prepared(
    items: &[PreparedSample<'_>],
    params: &GnnParameters,
    class_count: usize,
) -> Result<(Metrics, ConfusionMatrix)> {
    let results: Result<Vec<_>> = items
        .par_iter()
        .map(|item| graph_eval(item, params))
        .collect();
    let results = results?;
    let mut cm = ConfusionMatrix::new(class_count);
    let mut loss_sum = 0.0;
    let mut flows = 0usize;
    for (graph_loss, pairs) in results {
        loss_sum += graph_loss;
        flows += pairs.len();
        for (truth, pred) in pairs {
            cm.add(truth, pred)?;
        }
    }
    let mut metrics = metrics_from_confusion(&cm);
    metrics.loss = Some(loss_sum / flows.max(1) as f64);
    Ok((metrics, cm))
}

/// Evaluate a trained GNN over graph samples, pooling flows across graphs.
pub fn evaluate_gnn(
    params: &GnnParameters,
    samples: &[GraphSample],
) -> Result<(Metrics, ConfusionMatrix)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("evaluate needs at least one sample"));
    }
    let items = prepare(samples, params.config.class_count)?;
    evaluate_prepared(&items, params, params.config.class_count)
}

/// Train the GNN; returns the parameters of the best validation epoch and
/// the per-epoch history.
///
/// Benign downsampling must already be applied to `train` (and only there).
pub fn train_gnn(
    train: &[GraphSample],
    val: &[GraphSample],
    config: GnnConfig,
    tc: &TrainConfig,
) -> Result<(GnnParameters, TrainHistory)> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if train.is_empty() || val.is_empty() {
        return Err(Error::EmptyInput("train and validation sets must be non-empty"));
    }
    if config.class_count != tc.class_count {
        return Err(Error::Usage(format!(
            "class count mismatch: model {} vs trainer {}",
            config.class_count, tc.class_count
        )));
    }
    config.validate()?;
    let train_items = prepare(train, config.class_count)?;
    let val_items = prepare(val, config.class_count)?;

    let mut params = GnnParameters::init(config, tc.seed)?;
    let mut adam = AdamState::new(&params.store, tc.adam);
    let mut shuffle_rng =
        rand_chacha::ChaCha8Rng::seed_from_u64(tc.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, GnnParameters, usize)> = None;
    let mut stale_epochs = 0usize;

    let mut order: Vec<usize> = (0..train_items.len()).collect();
    for epoch in 0..tc.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss_sum = 0.0;
        let mut epoch_flows = 0usize;
        for (batch_idx, chunk) in order.chunks(tc.batch_size.max(1)).enumerate() {
            let results: Result<Vec<_>> = chunk
                .par_iter()
                .map(|&i| graph_loss_and_grads(&train_items[i], &params))
                .collect();
            let results = results.map_err(|e| match e {
                Error::Numeric(_) => Error::Diverged {
                    epoch,
                    batch: batch_idx,
                },
                other => other,
            })?;
            let batch_flows: usize = results.iter().map(|(_, n, _)| n).sum();
            let mut merged: Vec<Tensor> = params
                .store
                .iter()
                .map(|p| Tensor::zeros(p.tensor.shape()))
                .collect();
            let mut batch_loss = 0.0;
            for (loss, n, grads) in &results {
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        batch: batch_idx,
                    });
                }
                let weight = *n as f64 / batch_flows as f64;
                batch_loss += loss * weight;
                crate::nn::params::axpy_grads(&mut merged, grads, weight);
            }
            adam_step(&mut params.store, &merged, &mut adam)?;
            epoch_loss_sum += batch_loss * batch_flows as f64;
            epoch_flows += batch_flows;
        }

        let (val_metrics, _) = evaluate_prepared(&val_items, &params, config.class_count)?;
        let stats = EpochStats {
            epoch,
            train_loss: epoch_loss_sum / epoch_flows.max(1) as f64,
            val_loss: val_metrics.loss.unwrap_or(f64::NAN),
            val_weighted_f1: val_metrics.weighted_f1,
        };
        history.epochs.push(stats);

        let improved = match &best {
            Some((best_f1, _, _)) => stats.val_weighted_f1 > *best_f1,
            None => true,
        };
        if improved {
            best = Some((stats.val_weighted_f1, params.clone(), epoch));
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= tc.patience {
                break;
            }
        }
    }

    let (_, best_params, best_epoch) = best.expect("at least one epoch ran");
    history.best_epoch = best_epoch;
    Ok((best_params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, GraphSample};
    use crate::record::RawFlowRecord;

    fn record(src: &str, dst: &str) -> RawFlowRecord {
        RawFlowRecord {
            src_ip: src.into(),
            dst_ip: dst.into(),
            src_port: 1,
            dst_port: 2,
            protocol: 6,
            timestamp: 0.0,
            duration: 1.0,
            features: vec![],
            label: "x".into(),
        }
    }

    fn toy_sample() -> GraphSample {
        // two separable classes by feature sign, plus a structural class
        let mut records = Vec::new();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..4 {
            records.push(record(&format!("c{i}"), "s0"));
            features.push(vec![1.0 + 0.1 * i as f64, -0.5]);
            labels.push(0);
        }
        for i in 0..4 {
            records.push(record(&format!("a{i}"), "v"));
            features.push(vec![-1.0 - 0.1 * i as f64, 0.5]);
            labels.push(1);
        }
        for i in 0..4 {
            records.push(record("scan", &format!("t{i}")));
            features.push(vec![0.2, 1.0 + 0.1 * i as f64]);
            labels.push(2);
        }
        GraphSample::new(build_graph(&records, &features, &labels).unwrap(), 0)
    }

    fn toy_config() -> (GnnConfig, TrainConfig) {
        let gc = GnnConfig {
            hidden_dim: 8,
            iterations: 2,
            msg_hidden: 8,
            readout_hidden: (8, 8),
            class_count: 3,
            feature_count: 2,
        };
        let tc = TrainConfig {
            epochs: 150,
            batch_size: 1,
            adam: AdamHyper {
                learning_rate: 0.01,
                ..AdamHyper::default()
            },
            seed: 7,
            patience: 1000,
            class_count: 3,
        };
        (gc, tc)
    }

    #[test]
    fn overfit_one_sample_reaches_near_zero_loss() {
        let sample = toy_sample();
        let (gc, tc) = toy_config();
        let samples = vec![sample];
        let (_, history) = train_gnn(&samples, &samples, gc, &tc).unwrap();
        let last = history.epochs.last().unwrap();
        assert!(
            last.train_loss < 0.01,
            "final loss {} after {} epochs",
            last.train_loss,
            history.epochs.len()
        );
        // monotone after warmup, up to a small tolerance
        for pair in history.epochs[10..].windows(2) {
            assert!(
                pair[1].train_loss < pair[0].train_loss + 1e-3,
                "loss rose from {} to {} at epoch {}",
                pair[0].train_loss,
                pair[1].train_loss,
                pair[1].epoch
            );
        }
    }

    #[test]
    fn same_seed_gives_identical_history() {
        let sample = toy_sample();
        let (gc, mut tc) = toy_config();
        tc.epochs = 12;
        let samples = vec![sample];
        let (_, h1) = train_gnn(&samples, &samples, gc, &tc).unwrap();
        let (_, h2) = train_gnn(&samples, &samples, gc, &tc).unwrap();
        assert_eq!(h1.epochs.len(), h2.epochs.len());
        for (a, b) in h1.epochs.iter().zip(&h2.epochs) {
            assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
            assert_eq!(a.val_loss.to_bits(), b.val_loss.to_bits());
            assert_eq!(a.val_weighted_f1.to_bits(), b.val_weighted_f1.to_bits());
        }
    }

    #[test]
    fn empty_sets_are_rejected() {
        let (gc, tc) = toy_config();
        assert!(train_gnn(&[], &[toy_sample()], gc, &tc).is_err());
        let params = GnnParameters::init(gc, 1).unwrap();
        assert!(evaluate_gnn(&params, &[]).is_err());
    }

    #[test]
    fn evaluate_pools_flows_across_graphs() {
        let (gc, _) = toy_config();
        let params = GnnParameters::init(gc, 2).unwrap();
        let samples = vec![toy_sample(), toy_sample()];
        let (metrics, cm) = evaluate_gnn(&params, &samples).unwrap();
        assert_eq!(cm.total(), 24);
        assert!(metrics.loss.unwrap() > 0.0);
    }
}
