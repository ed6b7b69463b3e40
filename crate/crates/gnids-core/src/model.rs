//! Self-contained trained models and their versioned file envelope.
//!
//! A [`Model`] bundles everything prediction needs: the feature schema, the
//! training-time normalization stats, the class names, and the trained core
//! (GNN or baseline). Files are a single JSON object
//! `{format_version, checksum, payload}` where the checksum is SHA-256 over
//! the exact payload bytes, so round-trips are bitwise faithful and
//! truncation is detected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{predict_baseline, BaselineModel};
use crate::error::{Error, ModelFileError, Result};
use crate::gnn::{self, GnnConfig, GnnParameters};
use crate::graph::build_graph;
use crate::nn::{softmax_row, ParameterStore};
use crate::normalize::{vectorize_all, NormalizationStats};
use crate::record::RawFlowRecord;
use crate::schema::FeatureSchema;

pub const MODEL_FORMAT_VERSION: u64 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum ModelCore {
    Gnn {
        config: GnnConfig,
        store: ParameterStore,
    },
    Baseline(BaselineModel),
}

/// A trained classifier plus the preprocessing state it was fitted with.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Model {
    /// Short identifier used in report tables: "gnn", "id3", "rf", "mlp".
    pub name: String,
    pub classes: Vec<String>,
    pub schema: FeatureSchema,
    pub stats: NormalizationStats,
    pub core: ModelCore,
}

/// Per-flow prediction: class index plus the full probability vector.
pub type Prediction = (usize, Vec<f64>);

impl Model {
    pub fn gnn(
        params: GnnParameters,
        classes: Vec<String>,
        schema: FeatureSchema,
        stats: NormalizationStats,
    ) -> Self {
        Model {
            name: "gnn".into(),
            classes,
            schema,
            stats,
            core: ModelCore::Gnn {
                config: params.config,
                store: params.store,
            },
        }
    }

    pub fn baseline(
        baseline: BaselineModel,
        classes: Vec<String>,
        schema: FeatureSchema,
        stats: NormalizationStats,
    ) -> Self {
        Model {
            name: baseline.kind_name().into(),
            classes,
            schema,
            stats,
            core: ModelCore::Baseline(baseline),
        }
    }

    pub fn is_gnn(&self) -> bool {
        matches!(self.core, ModelCore::Gnn { .. })
    }

    /// Classify every flow of one window.
    ///
    /// The GNN vectorizes with the bundled stats, rebuilds the
    /// host-connection graph, and reads out per-flow probabilities; baselines
    /// vectorize and classify each flow independently. Output order matches
    /// the input record order.
    pub fn predict_window(&self, records: &[RawFlowRecord]) -> Result<Vec<Prediction>> {
        if records.is_empty() {
            return Ok(Vec::new());
        }
        let vectors = vectorize_all(records, &self.stats, &self.schema)?;
        match &self.core {
            ModelCore::Gnn { config, store } => {
                let params = GnnParameters {
                    config: *config,
                    store: store.clone(),
                };
                let labels = vec![0usize; records.len()];
                let graph = build_graph(records, &vectors, &labels)?;
                let logits = gnn::forward(&graph, &params)?;
                Ok((0..logits.rows())
                    .map(|r| {
                        let probs = softmax_row(logits.row(r));
                        (gnn::argmax(&probs), probs)
                    })
                    .collect())
            }
            ModelCore::Baseline(baseline) => {
                Ok(vectors.iter().map(|v| predict_baseline(baseline, v)).collect())
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_model(self, path)
    }

    pub fn load(path: &Path) -> Result<Model> {
        load_model(path)
    }
}

#[derive(Serialize, Deserialize)]
struct Envelope<'a> {
    format_version: u64,
    checksum: String,
    #[serde(borrow)]
    payload: &'a serde_json::value::RawValue,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Write the versioned envelope. The payload is serialized once and the
/// checksum taken over those exact bytes.
pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let payload = serde_json::to_string(model)
        .map_err(|e| ModelFileError::Malformed(format!("serialization failed: {e}")))?;
    let raw = serde_json::value::RawValue::from_string(payload.clone())
        .map_err(|e| ModelFileError::Malformed(format!("payload framing failed: {e}")))?;
    let envelope = Envelope {
        format_version: MODEL_FORMAT_VERSION,
        checksum: sha256_hex(payload.as_bytes()),
        payload: &raw,
    };
    let text = serde_json::to_string(&envelope)
        .map_err(|e| ModelFileError::Malformed(format!("envelope serialization failed: {e}")))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read and verify a model file: version first, then checksum, then payload.
pub fn load_model(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let envelope: Envelope<'_> = serde_json::from_str(&text).map_err(|_| {
        ModelFileError::Checksum(
            "file is not a valid model envelope; it may be truncated or corrupted".into(),
        )
    })?;
    if envelope.format_version != MODEL_FORMAT_VERSION {
        return Err(ModelFileError::Version {
            found: envelope.format_version,
            expected: MODEL_FORMAT_VERSION,
        }
        .into());
    }
    let payload_bytes = envelope.payload.get().as_bytes();
    let actual = sha256_hex(payload_bytes);
    if actual != envelope.checksum {
        return Err(ModelFileError::Checksum(format!(
            "checksum mismatch: stored {}, computed {}",
            envelope.checksum, actual
        ))
        .into());
    }
    let model: Model = serde_json::from_str(envelope.payload.get())
        .map_err(|e| ModelFileError::Malformed(format!("payload decode failed: {e}")))?;
    Ok(model)
}
