//! Flow records and class label tables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::FeatureSchema;

/// One bidirectional flow, as parsed from a CSV row.
///
/// `features` is the ordered map of aggregate statistics: values align with
/// the schema's numeric-column order, and the keys live once in the
/// [`FeatureSchema`] rather than per record.
#[derive(Clone, Debug, PartialEq)]
pub struct RawFlowRecord {
    pub src_ip: String,
    pub dst_ip: String,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: i64,
    /// Seconds since epoch.
    pub timestamp: f64,
    /// Microseconds; mirrors the "Flow Duration" feature entry.
    pub duration: f64,
    pub features: Vec<f64>,
    /// Raw class string, mapped through a [`ClassTable`] downstream.
    pub label: String,
}

impl RawFlowRecord {
    pub fn feature(&self, schema: &FeatureSchema, name: &str) -> Option<f64> {
        schema.numeric_index(name).map(|i| self.features[i])
    }

    pub fn set_feature(&mut self, schema: &FeatureSchema, name: &str, value: f64) {
        if let Some(i) = schema.numeric_index(name) {
            self.features[i] = value;
        }
    }
}

/// Class index plus display name. Index 0 is always Benign.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassLabel {
    pub index: usize,
    pub name: String,
}

/// Outcome of mapping a raw label string.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelOutcome {
    Class(usize),
    /// Raw label belongs to a class excluded from training and evaluation.
    Filtered,
}

/// Maps raw label strings to retained class indices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClassTable {
    classes: Vec<String>,
    /// (raw pattern, target); patterns match exactly after trimming.
    patterns: Vec<(String, Option<usize>)>,
}

pub const BENIGN_CLASS: usize = 0;

impl ClassTable {
    pub fn new(classes: Vec<String>, patterns: Vec<(String, Option<usize>)>) -> Result<Self> {
        if classes.is_empty() || classes[0] != "Benign" {
            return Err(Error::Schema(
                "class table must start with Benign at index 0".into(),
            ));
        }
        for (pat, target) in &patterns {
            if let Some(t) = target {
                if *t >= classes.len() {
                    return Err(Error::Schema(format!(
                        "pattern {pat:?} maps to out-of-range class {t}"
                    )));
                }
            }
        }
        Ok(ClassTable { classes, patterns })
    }

    /// The 12 retained classes of the CIC-IDS2017 configuration: Benign plus
    /// the 11 attack sub-classes with more than 100 flow samples. Heartbleed,
    /// Infiltration, and SQL-injection web attacks fall under that threshold
    /// and map to `Filtered`.
    pub fn cic_ids2017() -> Self {
        let classes: Vec<String> = [
            "Benign",
            "SSH-Patator",
            "FTP-Patator",
            "DoS GoldenEye",
            "DoS Hulk",
            "DoS slowloris",
            "DoS Slowhttptest",
            "DDoS",
            "Web-Brute Force",
            "Web-XSS",
            "Bot",
            "PortScan",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let mut patterns: Vec<(String, Option<usize>)> = vec![
            ("BENIGN".into(), Some(0)),
            ("Benign".into(), Some(0)),
            ("SSH-Patator".into(), Some(1)),
            ("FTP-Patator".into(), Some(2)),
            ("DoS GoldenEye".into(), Some(3)),
            ("DoS Hulk".into(), Some(4)),
            ("DoS slowloris".into(), Some(5)),
            ("DoS Slowhttptest".into(), Some(6)),
            ("DDoS".into(), Some(7)),
            ("Web Attack \u{2013} Brute Force".into(), Some(8)),
            ("Web Attack \u{96} Brute Force".into(), Some(8)),
            ("Web Attack - Brute Force".into(), Some(8)),
            ("Web Attack \u{2013} XSS".into(), Some(9)),
            ("Web Attack \u{96} XSS".into(), Some(9)),
            ("Web Attack - XSS".into(), Some(9)),
            ("Bot".into(), Some(10)),
            ("PortScan".into(), Some(11)),
        ];
        // classes under the sample-count threshold
        for raw in [
            "Heartbleed",
            "Infiltration",
            "Web Attack \u{2013} Sql Injection",
            "Web Attack \u{96} Sql Injection",
            "Web Attack - Sql Injection",
        ] {
            patterns.push((raw.into(), None));
        }
        ClassTable { classes, patterns }
    }

    /// Classes used by the synthetic traffic generator.
    pub fn synthetic() -> Self {
        let classes: Vec<String> = ["Benign", "DDoS", "PortScan", "NetworkScan", "BruteForce"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let patterns = classes
            .iter()
            .enumerate()
            .map(|(i, name)| (name.clone(), Some(i)))
            .collect();
        ClassTable { classes, patterns }
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.classes
    }

    pub fn name(&self, index: usize) -> &str {
        &self.classes[index]
    }

    pub fn label(&self, index: usize) -> ClassLabel {
        ClassLabel {
            index,
            name: self.classes[index].clone(),
        }
    }

    /// True if `raw` maps to a non-Benign retained class.
    pub fn is_attack(&self, raw: &str) -> bool {
        matches!(self.map(raw), Ok(LabelOutcome::Class(c)) if c != BENIGN_CLASS)
    }

    /// Exact match after trimming; unknown labels are an error naming the
    /// offending string.
    pub fn map(&self, raw: &str) -> Result<LabelOutcome> {
        let trimmed = raw.trim();
        for (pat, target) in &self.patterns {
            if pat == trimmed {
                return Ok(match target {
                    Some(idx) => LabelOutcome::Class(*idx),
                    None => LabelOutcome::Filtered,
                });
            }
        }
        Err(Error::UnknownLabel(trimmed.to_string()))
    }
}

/// Map every record's label, dropping `Filtered` records. Returns the kept
/// records with their class indices.
pub fn map_labels(
    records: Vec<RawFlowRecord>,
    table: &ClassTable,
) -> Result<(Vec<RawFlowRecord>, Vec<usize>)> {
    let mut kept = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for record in records {
        match table.map(&record.label)? {
            LabelOutcome::Class(idx) => {
                kept.push(record);
                labels.push(idx);
            }
            LabelOutcome::Filtered => {}
        }
    }
    Ok((kept, labels))
}
