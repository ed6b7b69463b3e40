//! Declarative run configuration: a TOML file plus `--set key=value`
//! overrides, validated as a whole so every violation is reported at once.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversarial::PerturbMode;
use crate::baselines::{ForestConfig, MlpConfig, TreeConfig};
use crate::error::{Error, Result};
use crate::gnn::GnnConfig;
use crate::nn::AdamHyper;
use crate::record::ClassTable;
use crate::schema::FeatureSchema;
use crate::train::TrainConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub graph: GraphConfig,
    pub gnn: GnnSection,
    pub train: TrainSection,
    pub id3: TreeConfig,
    pub forest: ForestSection,
    pub mlp: MlpSection,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            output_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            synth: SynthConfig::default(),
            graph: GraphConfig::default(),
            gnn: GnnSection::default(),
            train: TrainSection::default(),
            id3: TreeConfig::default(),
            forest: ForestSection::default(),
            mlp: MlpSection::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    Csv,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Input CSV files for `source = "csv"`.
    pub csv_paths: Vec<PathBuf>,
    /// "synthetic" or "cic".
    pub class_table: String,
    /// Empty selects every numeric non-identifier column.
    pub selected_features: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synthetic,
            csv_paths: Vec::new(),
            class_table: "synthetic".into(),
            selected_features: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub window_count: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { window_count: 2000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    /// Flows per graph sample; the synthetic generator also emits windows of
    /// this size so re-windowing aligns exactly.
    pub window_size: usize,
    pub benign_drop_rate: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            window_size: 100,
            benign_drop_rate: 0.9,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnSection {
    pub hidden_dim: usize,
    pub iterations: usize,
    pub msg_hidden: usize,
    pub readout_hidden1: usize,
    pub readout_hidden2: usize,
}

impl Default for GnnSection {
    fn default() -> Self {
        GnnSection {
            hidden_dim: 64,
            iterations: 4,
            msg_hidden: 64,
            readout_hidden1: 64,
            readout_hidden2: 32,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub patience: usize,
    /// Repeated-holdout run count; 1 is a single split.
    pub runs: usize,
    pub train_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: 200,
            batch_size: 8,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: 10,
            runs: 1,
            train_fraction: 0.8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestSection {
    pub tree_count: usize,
    /// Omitted: sqrt(feature count) / feature count.
    pub feature_fraction: Option<f64>,
    pub bootstrap: bool,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for ForestSection {
    fn default() -> Self {
        let tree = TreeConfig::default();
        ForestSection {
            tree_count: 50,
            feature_fraction: None,
            bootstrap: true,
            max_depth: tree.max_depth,
            min_samples_leaf: tree.min_samples_leaf,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSection {
    pub hidden1: usize,
    pub hidden2: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
}

impl Default for MlpSection {
    fn default() -> Self {
        MlpSection {
            hidden1: 128,
            hidden2: 64,
            epochs: 200,
            batch_size: 512,
            patience: 10,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub packet_size_grid: Vec<f64>,
    pub iat_grid: Vec<f64>,
    /// "consistent" recomputes dependent features; "raw-shift" only moves
    /// the primary columns.
    pub mode: String,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            packet_size_grid: vec![0.0, 50.0, 100.0, 150.0, 200.0],
            iat_grid: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            mode: "consistent".into(),
        }
    }
}

impl RunConfig {
    /// Load from an optional TOML file, apply dotted-path overrides, then
    /// validate. Overrides look like `train.epochs=50` or `seed=7`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let mut value: toml::Value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse()
                    .map_err(|e| Error::Config(vec![format!("config parse error: {e}")]))?
            }
            None => toml::Value::Table(Default::default()),
        };
        for setting in overrides {
            apply_override(&mut value, setting)?;
        }
        let config: RunConfig = value
            .try_into()
            .map_err(|e| Error::Config(vec![format!("config error: {e}")]))?;
        config.validate()?;
        Ok(config)
    }

    /// Collect every violation rather than stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.data.source == DataSource::Csv {
            if self.data.csv_paths.is_empty() {
                problems.push("data.csv_paths: required when data.source = \"csv\"".into());
            }
            for path in &self.data.csv_paths {
                if !path.exists() {
                    problems.push(format!("data.csv_paths: {} does not exist", path.display()));
                }
            }
        } else if !self.data.csv_paths.is_empty() {
            problems.push(
                "data.csv_paths: must be empty when data.source = \"synthetic\" (exactly one data source)"
                    .into(),
            );
        }
        if !matches!(self.data.class_table.as_str(), "synthetic" | "cic") {
            problems.push(format!(
                "data.class_table: {:?} is not \"synthetic\" or \"cic\"",
                self.data.class_table
            ));
        }
        if self.graph.window_size < 1 {
            problems.push("graph.window_size: must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.graph.benign_drop_rate) {
            problems.push("graph.benign_drop_rate: must be in [0, 1)".into());
        }
        if self.synth.window_count < 2 {
            problems.push("synth.window_count: must be >= 2".into());
        }
        if self.train.epochs < 1 {
            problems.push("train.epochs: must be >= 1".into());
        }
        if self.train.batch_size < 1 {
            problems.push("train.batch_size: must be >= 1".into());
        }
        if self.train.runs < 1 {
            problems.push("train.runs: must be >= 1".into());
        }
        if !(self.train.train_fraction > 0.0 && self.train.train_fraction < 1.0) {
            problems.push("train.train_fraction: must be in (0, 1)".into());
        }
        if !matches!(self.sweep.mode.as_str(), "consistent" | "raw-shift") {
            problems.push(format!(
                "sweep.mode: {:?} is not \"consistent\" or \"raw-shift\"",
                self.sweep.mode
            ));
        }
        for (name, grid, cap) in [
            ("sweep.packet_size_grid", &self.sweep.packet_size_grid, 200.0),
            ("sweep.iat_grid", &self.sweep.iat_grid, 2.0),
        ] {
            if grid.is_empty() || grid[0] != 0.0 {
                problems.push(format!("{name}: must start at 0"));
            }
            if grid.windows(2).any(|w| w[1] <= w[0]) {
                problems.push(format!("{name}: must be strictly increasing"));
            }
            if grid.iter().any(|&m| m < 0.0 || m > cap) {
                problems.push(format!("{name}: magnitudes must lie in [0, {cap}]"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn class_table(&self) -> ClassTable {
        match self.data.class_table.as_str() {
            "cic" => ClassTable::cic_ids2017(),
            _ => ClassTable::synthetic(),
        }
    }

    pub fn schema(&self) -> Result<FeatureSchema> {
        let schema = FeatureSchema::canonical();
        if self.data.selected_features.is_empty() {
            Ok(schema)
        } else {
            schema.with_selected(&self.data.selected_features)
        }
    }

    pub fn gnn_config(&self, class_count: usize, feature_count: usize) -> GnnConfig {
        GnnConfig {
            hidden_dim: self.gnn.hidden_dim,
            iterations: self.gnn.iterations,
            msg_hidden: self.gnn.msg_hidden,
            readout_hidden: (self.gnn.readout_hidden1, self.gnn.readout_hidden2),
            class_count,
            feature_count,
        }
    }

    pub fn train_config(&self, class_count: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            adam: AdamHyper {
                learning_rate: self.train.learning_rate,
                beta1: self.train.beta1,
                beta2: self.train.beta2,
                epsilon: self.train.epsilon,
            },
            seed: self.seed,
            patience: self.train.patience,
            class_count,
        }
    }

    pub fn forest_config(&self) -> ForestConfig {
        ForestConfig {
            tree_count: self.forest.tree_count,
            feature_fraction: self.forest.feature_fraction,
            bootstrap: self.forest.bootstrap,
            tree: TreeConfig {
                max_depth: self.forest.max_depth,
                min_samples_leaf: self.forest.min_samples_leaf,
            },
        }
    }

    pub fn mlp_config(&self) -> MlpConfig {
        MlpConfig {
            hidden: (self.mlp.hidden1, self.mlp.hidden2),
            epochs: self.mlp.epochs,
            batch_size: self.mlp.batch_size,
            adam: AdamHyper {
                learning_rate: self.train.learning_rate,
                beta1: self.train.beta1,
                beta2: self.train.beta2,
                epsilon: self.train.epsilon,
            },
            patience: self.mlp.patience,
            seed: self.seed,
        }
    }

    pub fn perturb_mode(&self) -> PerturbMode {
        match self.sweep.mode.as_str() {
            "raw-shift" => PerturbMode::RawShift,
            _ => PerturbMode::Consistent,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Apply one `path.to.key=value` override onto the raw TOML tree. The value
/// parses as TOML when possible and falls back to a string.
fn apply_override(root: &mut toml::Value, setting: &str) -> Result<()> {
    let (path, raw_value) = setting.split_once('=').ok_or_else(|| {
        Error::Config(vec![format!(
            "override {setting:?} is not of the form key=value"
        )])
    })?;
    let parsed: toml::Value = match raw_value.parse::<toml::Value>() {
        Ok(v) => v,
        Err(_) => toml::Value::String(raw_value.to_string()),
    };
    let mut cursor = root;
    let parts: Vec<&str> = path.trim().split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cursor.as_table_mut().ok_or_else(|| {
            Error::Config(vec![format!("override {setting:?}: {part} is not a table")])
        })?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        cursor = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let config = RunConfig::load(
            None,
            &[
                "seed=7".into(),
                "train.epochs=33".into(),
                "gnn.hidden_dim=16".into(),
                "sweep.mode=raw-shift".into(),
            ],
        )
        .unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.train.epochs, 33);
        assert_eq!(config.gnn.hidden_dim, 16);
        assert_eq!(config.perturb_mode(), PerturbMode::RawShift);
    }

    #[test]
    fn validation_lists_every_violation() {
        let err = RunConfig::load(
            None,
            &[
                "train.epochs=0".into(),
                "train.batch_size=0".into(),
                "graph.benign_drop_rate=1.5".into(),
            ],
        )
        .unwrap_err();
        let text = err.to_string();
        assert!(text.contains("train.epochs"));
        assert!(text.contains("train.batch_size"));
        assert!(text.contains("graph.benign_drop_rate"));
    }

    #[test]
    fn csv_source_requires_paths() {
        let err = RunConfig::load(None, &["data.source=csv".into()]).unwrap_err();
        assert!(err.to_string().contains("data.csv_paths"));
    }

    #[test]
    fn synthetic_source_rejects_paths() {
        let err = RunConfig::load(
            None,
            &["data.csv_paths=[\"/tmp/x.csv\"]".into()],
        )
        .unwrap_err();
        assert!(err.to_string().contains("exactly one data source"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::load(None, &["train.eppochs=5".into()]).unwrap_err();
        assert!(err.to_string().contains("eppochs"), "{err}");
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config = RunConfig::default();
        let text = config.to_toml();
        let reparsed: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(config.seed, reparsed.seed);
        assert_eq!(config.sweep.packet_size_grid, reparsed.sweep.packet_size_grid);
    }
}
