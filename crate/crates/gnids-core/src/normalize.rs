//! Feature normalization fitted on the training partition.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::RawFlowRecord;
use crate::schema::FeatureSchema;

/// Per-feature mean and population standard deviation over the fit set.
/// Features with zero deviation are flagged constant and vectorize to 0.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub feature_names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
    pub fit_count: usize,
}

/// Fit per-feature statistics over the selected features with Welford's
/// single-pass update. Fit this on the training partition only.
pub fn fit_normalizer(
    records: &[RawFlowRecord],
    schema: &FeatureSchema,
) -> Result<NormalizationStats> {
    if records.is_empty() {
        return Err(Error::EmptyInput("fit_normalizer needs at least one record"));
    }
    let selected = schema.selected();
    let k = selected.len();
    let mut mean = vec![0.0; k];
    let mut m2 = vec![0.0; k];
    let mut n = 0.0;
    for record in records {
        n += 1.0;
        for (slot, &feature_idx) in selected.iter().enumerate() {
            let x = record.features[feature_idx];
            let delta = x - mean[slot];
            mean[slot] += delta / n;
            m2[slot] += delta * (x - mean[slot]);
        }
    }
    let std: Vec<f64> = m2.iter().map(|&s| (s / n).sqrt()).collect();
    let constant = std.iter().map(|&s| s == 0.0).collect();
    Ok(NormalizationStats {
        feature_names: schema.selected_names(),
        mean,
        std,
        constant,
        fit_count: records.len(),
    })
}

impl NormalizationStats {
    pub fn matches_schema(&self, schema: &FeatureSchema) -> bool {
        self.feature_names == schema.selected_names()
    }
}

/// Z-score the selected features of one record, in selected order.
/// Constant features emit 0 regardless of value.
pub fn vectorize(
    record: &RawFlowRecord,
    stats: &NormalizationStats,
    schema: &FeatureSchema,
) -> Result<Vec<f64>> {
    if !stats.matches_schema(schema) {
        return Err(Error::Schema(
            "normalization stats were fitted for a different feature selection".into(),
        ));
    }
    let selected = schema.selected();
    let mut out = Vec::with_capacity(selected.len());
    for (slot, &feature_idx) in selected.iter().enumerate() {
        let value = record.features[feature_idx];
        out.push(if stats.constant[slot] {
            0.0
        } else {
            (value - stats.mean[slot]) / stats.std[slot]
        });
    }
    Ok(out)
}

/// Vectorize a whole window at once.
pub fn vectorize_all(
    records: &[RawFlowRecord],
    stats: &NormalizationStats,
    schema: &FeatureSchema,
) -> Result<Vec<Vec<f64>>> {
    records
        .iter()
        .map(|r| vectorize(r, stats, schema))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct StatsEntry {
    mean: f64,
    std: f64,
    constant: bool,
}

#[derive(Serialize, Deserialize)]
struct StatsFile {
    fit_count: usize,
    features: BTreeMap<String, StatsEntry>,
}

/// Write the stats file: feature name -> {mean, std, constant}.
pub fn save_stats_json(stats: &NormalizationStats, path: &Path) -> Result<()> {
    let mut features = BTreeMap::new();
    for (i, name) in stats.feature_names.iter().enumerate() {
        features.insert(
            name.clone(),
            StatsEntry {
                mean: stats.mean[i],
                std: stats.std[i],
                constant: stats.constant[i],
            },
        );
    }
    let file = StatsFile {
        fit_count: stats.fit_count,
        features,
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Schema(format!("stats serialization failed: {e}")))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FeatureSchema;

    fn record_with(schema: &FeatureSchema, fill: f64) -> RawFlowRecord {
        RawFlowRecord {
            src_ip: "a".into(),
            dst_ip: "b".into(),
            src_port: 1,
            dst_port: 2,
            protocol: 6,
            timestamp: 0.0,
            duration: 1.0,
            features: vec![fill; schema.numeric_count()],
            label: "BENIGN".into(),
        }
    }

    #[test]
    fn single_record_is_all_constant() {
        let schema = FeatureSchema::canonical();
        let stats = fit_normalizer(&[record_with(&schema, 3.0)], &schema).unwrap();
        assert!(stats.constant.iter().all(|&c| c));
        assert!(stats.std.iter().all(|&s| s == 0.0));
        assert_eq!(stats.fit_count, 1);
    }

    #[test]
    fn two_values_give_population_stddev() {
        let schema = FeatureSchema::canonical();
        let stats =
            fit_normalizer(&[record_with(&schema, 1.0), record_with(&schema, 3.0)], &schema)
                .unwrap();
        for slot in 0..stats.mean.len() {
            assert!((stats.mean[slot] - 2.0).abs() < 1e-12);
            assert!((stats.std[slot] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn welford_matches_two_pass_oracle() {
        let schema = FeatureSchema::canonical();
        let mut state = 42u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) * 100.0 - 50.0
        };
        let records: Vec<RawFlowRecord> = (0..1000)
            .map(|_| {
                let mut r = record_with(&schema, 0.0);
                for v in r.features.iter_mut() {
                    *v = next();
                }
                r
            })
            .collect();
        let stats = fit_normalizer(&records, &schema).unwrap();

        // independent two-pass mean/variance
        let n = records.len() as f64;
        for (slot, &fidx) in schema.selected().iter().enumerate() {
            let mean: f64 = records.iter().map(|r| r.features[fidx]).sum::<f64>() / n;
            let var: f64 = records
                .iter()
                .map(|r| (r.features[fidx] - mean).powi(2))
                .sum::<f64>()
                / n;
            let std = var.sqrt();
            assert!(
                (stats.mean[slot] - mean).abs() <= 1e-9 * mean.abs().max(1.0),
                "mean mismatch"
            );
            assert!(
                (stats.std[slot] - std).abs() <= 1e-9 * std.abs().max(1.0),
                "std mismatch"
            );
        }
    }

    #[test]
    fn empty_fit_is_error() {
        assert!(fit_normalizer(&[], &FeatureSchema::canonical()).is_err());
    }

    #[test]
    fn zscore_identities() {
        let schema = FeatureSchema::canonical();
        let stats =
            fit_normalizer(&[record_with(&schema, 1.0), record_with(&schema, 3.0)], &schema)
                .unwrap();
        // value == mean -> 0
        let v = vectorize(&record_with(&schema, 2.0), &stats, &schema).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
        // value == mean + std -> 1
        let v = vectorize(&record_with(&schema, 3.0), &stats, &schema).unwrap();
        assert!(v.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn constant_feature_vectorizes_to_zero() {
        let schema = FeatureSchema::canonical();
        let stats = fit_normalizer(&[record_with(&schema, 7.0)], &schema).unwrap();
        let v = vectorize(&record_with(&schema, 123.0), &stats, &schema).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn vectorize_is_deterministic() {
        let schema = FeatureSchema::canonical();
        let stats =
            fit_normalizer(&[record_with(&schema, 1.0), record_with(&schema, 4.0)], &schema)
                .unwrap();
        let rec = record_with(&schema, 2.5);
        let a = vectorize(&rec, &stats, &schema).unwrap();
        let b = vectorize(&rec, &stats, &schema).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn schema_mismatch_is_error() {
        let schema = FeatureSchema::canonical();
        let narrow = FeatureSchema::canonical()
            .with_selected(&[crate::schema::columns::FWD_LEN_MEAN.to_string()])
            .unwrap();
        let stats = fit_normalizer(&[record_with(&schema, 1.0)], &schema).unwrap();
        assert!(vectorize(&record_with(&schema, 1.0), &stats, &narrow).is_err());
    }
}
