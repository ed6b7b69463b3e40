//! End-to-end orchestration: windowing, split discipline, sample
//! preparation, model training dispatch, evaluation, and repeated holdout.
//!
//! Split discipline: normalization stats fit on the training partition's
//! flows only, and benign downsampling applies to the training partition
//! only. Validation windows are never touched by either.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    train_id3, train_mlp, train_random_forest, BaselineModel, ForestConfig, MlpConfig, TreeConfig,
};
use crate::error::{Error, Result};
use crate::gnn::{argmax, GnnConfig};
use crate::graph::{build_graph, downsample_benign, GraphSample};
use crate::metrics::{metrics_from_confusion, ConfusionMatrix, Metrics};
use crate::model::Model;
use crate::normalize::{fit_normalizer, vectorize_all, NormalizationStats};
use crate::record::{ClassTable, RawFlowRecord};
use crate::schema::FeatureSchema;
use crate::train::{train_gnn, TrainConfig, TrainHistory};

/// One window of label-mapped records; the unit of splitting and batching.
#[derive(Clone, Debug)]
pub struct LabeledWindow {
    pub window_id: usize,
    pub records: Vec<RawFlowRecord>,
    pub labels: Vec<usize>,
}

/// Chunk a label-mapped record stream into fixed-size windows, preserving
/// order. Records must already be sorted by timestamp.
pub fn windows_from_records(
    records: Vec<RawFlowRecord>,
    labels: Vec<usize>,
    window_size: usize,
) -> Vec<LabeledWindow> {
    assert_eq!(records.len(), labels.len());
    let mut windows = Vec::new();
    let mut records = records.into_iter();
    let mut labels = labels.into_iter();
    let mut window_id = 0;
    loop {
        let chunk_records: Vec<RawFlowRecord> = records.by_ref().take(window_size).collect();
        if chunk_records.is_empty() {
            break;
        }
        let chunk_labels: Vec<usize> = labels.by_ref().take(chunk_records.len()).collect();
        windows.push(LabeledWindow {
            window_id,
            records: chunk_records,
            labels: chunk_labels,
        });
        window_id += 1;
    }
    windows
}

/// Shuffled index split into train and validation window sets.
pub fn split_windows<R: Rng>(
    window_count: usize,
    train_fraction: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if window_count < 2 {
        return Err(Error::EmptyInput("need at least two windows to split"));
    }
    if !(0.0..1.0).contains(&train_fraction) || train_fraction == 0.0 {
        return Err(Error::Usage(format!(
            "train_fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut indices: Vec<usize> = (0..window_count).collect();
    indices.shuffle(rng);
    let take = ((window_count as f64 * train_fraction).round() as usize)
        .clamp(1, window_count - 1);
    let train = indices[..take].to_vec();
    let val = indices[take..].to_vec();
    Ok((train, val))
}

/// Everything a training run needs, with the split discipline applied.
pub struct PreparedData {
    pub stats: NormalizationStats,
    pub train_samples: Vec<GraphSample>,
    pub val_samples: Vec<GraphSample>,
    /// Flow vectors of the (downsampled) training samples, for baselines.
    pub train_vectors: Vec<Vec<f64>>,
    pub train_labels: Vec<usize>,
    pub val_vectors: Vec<Vec<f64>>,
    pub val_labels: Vec<usize>,
}

fn build_samples(
    windows: &[&LabeledWindow],
    stats: &NormalizationStats,
    schema: &FeatureSchema,
) -> Result<Vec<GraphSample>> {
    windows
        .par_iter()
        .map(|w| {
            let vectors = vectorize_all(&w.records, stats, schema)?;
            let graph = build_graph(&w.records, &vectors, &w.labels)?;
            Ok(GraphSample::new(graph, w.window_id))
        })
        .collect()
}

fn flows_of(samples: &[GraphSample]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for s in samples {
        for f in &s.graph.flows {
            vectors.push(f.features.clone());
            labels.push(f.label);
        }
    }
    (vectors, labels)
}

/// Fit stats on the train partition, vectorize, build graphs, and apply
/// benign downsampling to the train partition.
pub fn prepare_split<R: Rng>(
    windows: &[LabeledWindow],
    train_idx: &[usize],
    val_idx: &[usize],
    schema: &FeatureSchema,
    benign_drop_rate: f64,
    rng: &mut R,
) -> Result<PreparedData> {
    let train_windows: Vec<&LabeledWindow> = train_idx.iter().map(|&i| &windows[i]).collect();
    let val_windows: Vec<&LabeledWindow> = val_idx.iter().map(|&i| &windows[i]).collect();
    let train_records: Vec<RawFlowRecord> = train_windows
        .iter()
        .flat_map(|w| w.records.iter().cloned())
        .collect();
    let stats = fit_normalizer(&train_records, schema)?;

    let train_samples = build_samples(&train_windows, &stats, schema)?;
    let val_samples = build_samples(&val_windows, &stats, schema)?;
    let train_samples = downsample_benign(train_samples, benign_drop_rate, rng);
    if train_samples.is_empty() {
        return Err(Error::EmptyInput(
            "benign downsampling removed every training sample",
        ));
    }

    let (train_vectors, train_labels) = flows_of(&train_samples);
    let (val_vectors, val_labels) = flows_of(&val_samples);
    Ok(PreparedData {
        stats,
        train_samples,
        val_samples,
        train_vectors,
        train_labels,
        val_vectors,
        val_labels,
    })
}

/// Which model to train, with its configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum ModelSpec {
    Gnn(GnnConfig, TrainConfig),
    Id3(TreeConfig),
    Forest(ForestConfig),
    Mlp(MlpConfig),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Gnn(..) => "gnn",
            ModelSpec::Id3(_) => "id3",
            ModelSpec::Forest(_) => "rf",
            ModelSpec::Mlp(_) => "mlp",
        }
    }
}

/// Train one model on prepared data. Returns the bundle and, for iterative
/// trainers, the epoch history.
pub fn train_model(
    spec: &ModelSpec,
    data: &PreparedData,
    classes: &ClassTable,
    schema: &FeatureSchema,
    seed: u64,
) -> Result<(Model, Option<TrainHistory>)> {
    let class_names = classes.class_names().to_vec();
    match spec {
        ModelSpec::Gnn(gnn_config, train_config) => {
            let mut tc = *train_config;
            tc.seed = seed;
            tc.class_count = classes.class_count();
            let mut gc = *gnn_config;
            gc.class_count = classes.class_count();
            gc.feature_count = schema.feature_count();
            let (params, history) = train_gnn(&data.train_samples, &data.val_samples, gc, &tc)?;
            Ok((
                Model::gnn(params, class_names, schema.clone(), data.stats.clone()),
                Some(history),
            ))
        }
        ModelSpec::Id3(config) => {
            let root = train_id3(
                &data.train_vectors,
                &data.train_labels,
                classes.class_count(),
                *config,
            )?;
            let baseline = BaselineModel::Tree {
                root,
                class_count: classes.class_count(),
            };
            Ok((
                Model::baseline(baseline, class_names, schema.clone(), data.stats.clone()),
                None,
            ))
        }
        ModelSpec::Forest(config) => {
            let forest = train_random_forest(
                &data.train_vectors,
                &data.train_labels,
                classes.class_count(),
                *config,
                seed,
            )?;
            Ok((
                Model::baseline(
                    BaselineModel::Forest(forest),
                    class_names,
                    schema.clone(),
                    data.stats.clone(),
                ),
                None,
            ))
        }
        ModelSpec::Mlp(config) => {
            let mut cfg = *config;
            cfg.seed = seed;
            let (mlp, history) = train_mlp(
                &data.train_vectors,
                &data.train_labels,
                &data.val_vectors,
                &data.val_labels,
                classes.class_count(),
                &cfg,
            )?;
            Ok((
                Model::baseline(
                    BaselineModel::Mlp(mlp),
                    class_names,
                    schema.clone(),
                    data.stats.clone(),
                ),
                Some(history),
            ))
        }
    }
}

/// Evaluate a model over labeled windows, pooling flows into one confusion
/// matrix. The mean per-flow cross-entropy lands in `Metrics::loss`.
pub fn evaluate_model(model: &Model, windows: &[LabeledWindow]) -> Result<(Metrics, ConfusionMatrix)> {
    if windows.is_empty() {
        return Err(Error::EmptyInput("evaluate needs at least one window"));
    }
    let class_count = model.classes.len();
    let per_window: Result<Vec<_>> = windows
        .par_iter()
        .map(|w| {
            let preds = model.predict_window(&w.records)?;
            let mut pairs = Vec::with_capacity(preds.len());
            let mut loss = 0.0;
            for (i, (pred, probs)) in preds.iter().enumerate() {
                let truth = w.labels[i];
                if truth >= class_count {
                    return Err(Error::Usage(format!(
                        "label {truth} out of range for {class_count} classes"
                    )));
                }
                pairs.push((truth, *pred));
                loss += -(probs[truth].max(1e-300)).ln();
            }
            Ok((pairs, loss))
        })
        .collect();
    let per_window = per_window?;
    let mut cm = ConfusionMatrix::new(class_count);
    let mut loss_sum = 0.0;
    let mut flows = 0usize;
    for (pairs, loss) in per_window {
        for (truth, pred) in &pairs {
            cm.add(*truth, *pred)?;
        }
        flows += pairs.len();
        loss_sum += loss;
    }
    let mut metrics = metrics_from_confusion(&cm);
    metrics.loss = Some(loss_sum / flows.max(1) as f64);
    Ok((metrics, cm))
}

/// One repeated-holdout run's outcome.
#[derive(Clone, Debug)]
pub struct HoldoutRun {
    pub run: usize,
    pub metrics: Metrics,
    pub model: Model,
    pub history: Option<TrainHistory>,
}

#[derive(Clone, Debug)]
pub struct HoldoutReport {
    pub runs: Vec<HoldoutRun>,
    pub mean_weighted_f1: f64,
    pub std_weighted_f1: f64,
}

impl HoldoutReport {
    /// The model of the best run by validation weighted F1 (earliest wins
    /// ties).
    pub fn best(&self) -> &HoldoutRun {
        let mut best = &self.runs[0];
        for run in &self.runs[1..] {
            if run.metrics.weighted_f1 > best.metrics.weighted_f1 {
                best = run;
            }
        }
        best
    }
}

/// Repeated random holdout: each run draws an independent seeded split of
/// the graph windows, trains from scratch, and evaluates on its own
/// validation part.
#[allow(clippy::too_many_arguments)]
pub fn repeated_holdout(
    windows: &[LabeledWindow],
    runs: usize,
    train_fraction: f64,
    spec: &ModelSpec,
    classes: &ClassTable,
    schema: &FeatureSchema,
    benign_drop_rate: f64,
    master_seed: u64,
) -> Result<HoldoutReport> {
    use rand::SeedableRng;
    if runs < 1 {
        return Err(Error::Usage("repeated_holdout needs runs >= 1".into()));
    }
    if windows.len() < 2 {
        return Err(Error::EmptyInput("repeated_holdout needs at least two windows"));
    }
    let mut results = Vec::with_capacity(runs);
    for run in 0..runs {
        let run_seed = crate::util::stage_seed(master_seed, &format!("holdout-run-{run}"));
        let mut split_rng = ChaCha8Rng::seed_from_u64(run_seed);
        let (train_idx, val_idx) = split_windows(windows.len(), train_fraction, &mut split_rng)?;
        let mut downsample_rng = ChaCha8Rng::seed_from_u64(run_seed.wrapping_add(1));
        let data = prepare_split(
            windows,
            &train_idx,
            &val_idx,
            schema,
            benign_drop_rate,
            &mut downsample_rng,
        )?;
        let (model, history) = train_model(spec, &data, classes, schema, run_seed)?;
        let val_windows: Vec<LabeledWindow> =
            val_idx.iter().map(|&i| windows[i].clone()).collect();
        let (metrics, _) = evaluate_model(&model, &val_windows)?;
        results.push(HoldoutRun {
            run,
            metrics,
            model,
            history,
        });
    }
    let mean = results.iter().map(|r| r.metrics.weighted_f1).sum::<f64>() / runs as f64;
    let var = results
        .iter()
        .map(|r| (r.metrics.weighted_f1 - mean).powi(2))
        .sum::<f64>()
        / runs as f64;
    Ok(HoldoutReport {
        runs: results,
        mean_weighted_f1: mean,
        std_weighted_f1: var.sqrt(),
    })
}

/// Pool per-flow predictions over windows; used by tests that compare
/// prediction paths.
pub fn pooled_predictions(model: &Model, windows: &[LabeledWindow]) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for w in windows {
        for (pred, _) in model.predict_window(&w.records)? {
            out.push(pred);
        }
    }
    Ok(out)
}

/// Convenience: class index of the highest probability with low-index ties.
pub fn predicted_class(probs: &[f64]) -> usize {
    argmax(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::map_labels;
    use crate::synth::{default_mix, generate_dataset};
    use rand::SeedableRng;

    fn windows(count: usize, seed: u64) -> Vec<LabeledWindow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = generate_dataset(&default_mix(), count, 100, &mut rng).unwrap();
        let classes = ClassTable::synthetic();
        let mut out = Vec::new();
        for (i, window) in data.windows.into_iter().enumerate() {
            let (records, labels) = map_labels(window, &classes).unwrap();
            out.push(LabeledWindow {
                window_id: i,
                records,
                labels,
            });
        }
        out
    }

    #[test]
    fn split_sizes_match_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (train, val) = split_windows(100, 0.8, &mut rng).unwrap();
        assert_eq!(train.len(), 80);
        assert_eq!(val.len(), 20);
        // disjoint and exhaustive
        let mut all: Vec<usize> = train.iter().chain(val.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_degenerate_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(split_windows(1, 0.8, &mut rng).is_err());
        assert!(split_windows(10, 0.0, &mut rng).is_err());
        assert!(split_windows(10, 1.0, &mut rng).is_err());
    }

    #[test]
    fn prepare_split_fits_stats_on_train_only() {
        let ws = windows(10, 3);
        let train_idx: Vec<usize> = (0..8).collect();
        let val_idx: Vec<usize> = (8..10).collect();
        let schema = FeatureSchema::canonical();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = prepare_split(&ws, &train_idx, &val_idx, &schema, 0.0, &mut rng).unwrap();
        let train_flow_count: usize = train_idx.iter().map(|&i| ws[i].records.len()).sum();
        assert_eq!(data.stats.fit_count, train_flow_count);
        assert_eq!(data.val_samples.len(), 2);
    }

    #[test]
    fn id3_pipeline_trains_and_evaluates() {
        let ws = windows(12, 7);
        let schema = FeatureSchema::canonical();
        let classes = ClassTable::synthetic();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (train_idx, val_idx) = split_windows(ws.len(), 0.75, &mut rng).unwrap();
        let data = prepare_split(&ws, &train_idx, &val_idx, &schema, 0.5, &mut rng).unwrap();
        let (model, history) =
            train_model(&ModelSpec::Id3(TreeConfig::default()), &data, &classes, &schema, 11)
                .unwrap();
        assert!(history.is_none());
        let val_windows: Vec<LabeledWindow> =
            val_idx.iter().map(|&i| ws[i].clone()).collect();
        let (metrics, cm) = evaluate_model(&model, &val_windows).unwrap();
        let val_flows: usize = val_windows.iter().map(|w| w.records.len()).sum();
        assert_eq!(cm.total() as usize, val_flows);
        assert!(metrics.weighted_f1 > 0.5, "tree should beat random");
    }

    #[test]
    fn baseline_prediction_ignores_co_window_flows() {
        let ws = windows(4, 13);
        let schema = FeatureSchema::canonical();
        let classes = ClassTable::synthetic();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (train_idx, val_idx) = split_windows(ws.len(), 0.5, &mut rng).unwrap();
        let data = prepare_split(&ws, &train_idx, &val_idx, &schema, 0.0, &mut rng).unwrap();
        let (model, _) =
            train_model(&ModelSpec::Id3(TreeConfig::default()), &data, &classes, &schema, 1)
                .unwrap();

        let w = &ws[val_idx[0]];
        let full = model.predict_window(&w.records).unwrap();
        // remove half the window; the survivors' predictions must not move
        let kept: Vec<RawFlowRecord> = w.records.iter().step_by(2).cloned().collect();
        let half = model.predict_window(&kept).unwrap();
        for (i, pred) in half.iter().enumerate() {
            assert_eq!(pred.0, full[2 * i].0);
        }
    }

    #[test]
    fn holdout_single_run_matches_direct_train() {
        let ws = windows(8, 21);
        let schema = FeatureSchema::canonical();
        let classes = ClassTable::synthetic();
        let report = repeated_holdout(
            &ws,
            1,
            0.75,
            &ModelSpec::Id3(TreeConfig::default()),
            &classes,
            &schema,
            0.0,
            77,
        )
        .unwrap();
        assert_eq!(report.runs.len(), 1);
        assert_eq!(report.std_weighted_f1, 0.0);
        assert_eq!(report.mean_weighted_f1, report.runs[0].metrics.weighted_f1);
    }

    #[test]
    fn holdout_trains_on_the_right_count() {
        let ws = windows(10, 23);
        let schema = FeatureSchema::canonical();
        let classes = ClassTable::synthetic();
        let report = repeated_holdout(
            &ws,
            2,
            0.8,
            &ModelSpec::Id3(TreeConfig::default()),
            &classes,
            &schema,
            0.0,
            78,
        )
        .unwrap();
        for run in &report.runs {
            // 8 train windows, benign kept, 100 flows each
            assert_eq!(run.metrics.per_class.iter().map(|s| s.support).sum::<u64>(), 200);
        }
    }
}
