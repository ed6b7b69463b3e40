//! Column schema for flow-record CSV files.
//!
//! Column-name matching is whitespace-trimmed and case-insensitive
//! everywhere. Identifier columns (addresses, ports, timestamps) key the
//! graph topology and are never eligible as model features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical column names. The synthetic generator emits exactly this header
/// and the parser matches it case-insensitively, so synthetic CSV files feed
/// the same ingest path as real captures.
pub mod columns {
    pub const SRC_IP: &str = "Source IP";
    pub const SRC_PORT: &str = "Source Port";
    pub const DST_IP: &str = "Destination IP";
    pub const DST_PORT: &str = "Destination Port";
    pub const PROTOCOL: &str = "Protocol";
    pub const TIMESTAMP: &str = "Timestamp";
    pub const LABEL: &str = "Label";

    pub const FLOW_DURATION: &str = "Flow Duration";
    pub const TOTAL_FWD_PACKETS: &str = "Total Fwd Packets";
    pub const TOTAL_BWD_PACKETS: &str = "Total Backward Packets";
    pub const TOTAL_LEN_FWD: &str = "Total Length of Fwd Packets";
    pub const TOTAL_LEN_BWD: &str = "Total Length of Bwd Packets";
    pub const FWD_LEN_MAX: &str = "Fwd Packet Length Max";
    pub const FWD_LEN_MIN: &str = "Fwd Packet Length Min";
    pub const FWD_LEN_MEAN: &str = "Fwd Packet Length Mean";
    pub const FWD_LEN_STD: &str = "Fwd Packet Length Std";
    pub const BWD_LEN_MAX: &str = "Bwd Packet Length Max";
    pub const BWD_LEN_MIN: &str = "Bwd Packet Length Min";
    pub const BWD_LEN_MEAN: &str = "Bwd Packet Length Mean";
    pub const BWD_LEN_STD: &str = "Bwd Packet Length Std";
    pub const FLOW_BYTES_S: &str = "Flow Bytes/s";
    pub const FLOW_PACKETS_S: &str = "Flow Packets/s";
    pub const FLOW_IAT_MEAN: &str = "Flow IAT Mean";
    pub const FLOW_IAT_STD: &str = "Flow IAT Std";
    pub const FLOW_IAT_MAX: &str = "Flow IAT Max";
    pub const FLOW_IAT_MIN: &str = "Flow IAT Min";
    pub const FWD_IAT_MEAN: &str = "Fwd IAT Mean";
    pub const FWD_IAT_STD: &str = "Fwd IAT Std";
    pub const BWD_IAT_MEAN: &str = "Bwd IAT Mean";
    pub const BWD_IAT_STD: &str = "Bwd IAT Std";
    pub const SYN_FLAGS: &str = "SYN Flag Count";
    pub const ACK_FLAGS: &str = "ACK Flag Count";
    pub const PSH_FLAGS: &str = "PSH Flag Count";
    pub const RST_FLAGS: &str = "RST Flag Count";
    pub const AVG_PACKET_SIZE: &str = "Average Packet Size";
}

/// Identifier columns every input file must provide.
pub const REQUIRED_IDENTIFIERS: [&str; 8] = [
    columns::SRC_IP,
    columns::DST_IP,
    columns::SRC_PORT,
    columns::DST_PORT,
    columns::PROTOCOL,
    columns::TIMESTAMP,
    columns::FLOW_DURATION,
    columns::LABEL,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    Identifier,
    Numeric,
    Label,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    /// Rate columns get the infinity-replacement policy during cleaning.
    #[serde(default)]
    pub rate: bool,
}

/// Ordered column list plus the subset of numeric columns used as model
/// features.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureSchema {
    columns: Vec<Column>,
    /// Indices into the numeric-column list, in feature order.
    selected: Vec<usize>,
}

pub fn normalize_name(name: &str) -> String {
    name.trim().to_lowercase()
}

impl FeatureSchema {
    /// The canonical schema: CIC-style identifiers, 28 aggregate statistics,
    /// and a label column. All numeric columns are selected.
    pub fn canonical() -> Self {
        use columns::*;
        let ident = |name: &str| Column {
            name: name.to_string(),
            kind: ColumnKind::Identifier,
            rate: false,
        };
        let num = |name: &str| Column {
            name: name.to_string(),
            kind: ColumnKind::Numeric,
            rate: false,
        };
        let rate = |name: &str| Column {
            name: name.to_string(),
            kind: ColumnKind::Numeric,
            rate: true,
        };
        let columns = vec![
            ident(SRC_IP),
            ident(SRC_PORT),
            ident(DST_IP),
            ident(DST_PORT),
            ident(PROTOCOL),
            ident(TIMESTAMP),
            num(FLOW_DURATION),
            num(TOTAL_FWD_PACKETS),
            num(TOTAL_BWD_PACKETS),
            num(TOTAL_LEN_FWD),
            num(TOTAL_LEN_BWD),
            num(FWD_LEN_MAX),
            num(FWD_LEN_MIN),
            num(FWD_LEN_MEAN),
            num(FWD_LEN_STD),
            num(BWD_LEN_MAX),
            num(BWD_LEN_MIN),
            num(BWD_LEN_MEAN),
            num(BWD_LEN_STD),
            rate(FLOW_BYTES_S),
            rate(FLOW_PACKETS_S),
            num(FLOW_IAT_MEAN),
            num(FLOW_IAT_STD),
            num(FLOW_IAT_MAX),
            num(FLOW_IAT_MIN),
            num(FWD_IAT_MEAN),
            num(FWD_IAT_STD),
            num(BWD_IAT_MEAN),
            num(BWD_IAT_STD),
            num(SYN_FLAGS),
            num(ACK_FLAGS),
            num(PSH_FLAGS),
            num(RST_FLAGS),
            num(AVG_PACKET_SIZE),
            Column {
                name: LABEL.to_string(),
                kind: ColumnKind::Label,
                rate: false,
            },
        ];
        let numeric_count = columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Numeric)
            .count();
        FeatureSchema {
            columns,
            selected: (0..numeric_count).collect(),
        }
    }

    /// Restrict the selected features to the named subset, keeping schema
    /// feature order. Rejects unknown, non-numeric, duplicate, or empty
    /// selections.
    pub fn with_selected(mut self, names: &[String]) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Schema("selected feature list is empty".into()));
        }
        let numeric: Vec<&str> = self.numeric_names().collect();
        let mut selected = Vec::new();
        for name in names {
            let norm = normalize_name(name);
            match numeric.iter().position(|n| normalize_name(n) == norm) {
                Some(idx) => {
                    if selected.contains(&idx) {
                        return Err(Error::Schema(format!(
                            "duplicate selected feature {name:?}"
                        )));
                    }
                    selected.push(idx);
                }
                None => {
                    return Err(Error::Schema(format!(
                        "selected feature {name:?} is not a numeric column of the schema"
                    )))
                }
            }
        }
        selected.sort_unstable();
        self.selected = selected;
        Ok(self)
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    /// Names of all numeric columns, in schema order. The feature vector of
    /// a record aligns with this list.
    pub fn numeric_names(&self) -> impl Iterator<Item = &str> {
        self.columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Numeric)
            .map(|c| c.name.as_str())
    }

    pub fn numeric_count(&self) -> usize {
        self.columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Numeric)
            .count()
    }

    /// Index into the numeric-column order for a named column.
    pub fn numeric_index(&self, name: &str) -> Option<usize> {
        let norm = normalize_name(name);
        self.numeric_names()
            .position(|n| normalize_name(n) == norm)
    }

    /// True if the numeric column at `idx` carries the rate flag.
    pub fn is_rate(&self, idx: usize) -> bool {
        self.columns
            .iter()
            .filter(|c| c.kind == ColumnKind::Numeric)
            .nth(idx)
            .map(|c| c.rate)
            .unwrap_or(false)
    }

    /// Indices (into numeric order) of the selected model features.
    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn selected_names(&self) -> Vec<String> {
        let numeric: Vec<&str> = self.numeric_names().collect();
        self.selected.iter().map(|&i| numeric[i].to_string()).collect()
    }

    /// Length of the model feature vector.
    pub fn feature_count(&self) -> usize {
        self.selected.len()
    }
}

/// Numeric-order indices of the canonical statistic columns, resolved once
/// so that generators and perturbations avoid per-record name lookups.
#[derive(Clone, Copy, Debug)]
pub struct ResolvedColumns {
    pub duration: usize,
    pub fwd_packets: usize,
    pub bwd_packets: usize,
    pub fwd_bytes: usize,
    pub bwd_bytes: usize,
    pub fwd_len_max: usize,
    pub fwd_len_min: usize,
    pub fwd_len_mean: usize,
    pub fwd_len_std: usize,
    pub bwd_len_max: usize,
    pub bwd_len_min: usize,
    pub bwd_len_mean: usize,
    pub bwd_len_std: usize,
    pub bytes_per_s: usize,
    pub packets_per_s: usize,
    pub flow_iat_mean: usize,
    pub flow_iat_std: usize,
    pub flow_iat_max: usize,
    pub flow_iat_min: usize,
    pub fwd_iat_mean: usize,
    pub fwd_iat_std: usize,
    pub bwd_iat_mean: usize,
    pub bwd_iat_std: usize,
    pub syn_flags: usize,
    pub ack_flags: usize,
    pub psh_flags: usize,
    pub rst_flags: usize,
    pub avg_packet_size: usize,
}

impl ResolvedColumns {
    pub fn resolve(schema: &FeatureSchema) -> Result<Self> {
        let idx = |name: &str| {
            schema
                .numeric_index(name)
                .ok_or_else(|| Error::Schema(format!("schema lacks column {name:?}")))
        };
        Ok(ResolvedColumns {
            duration: idx(columns::FLOW_DURATION)?,
            fwd_packets: idx(columns::TOTAL_FWD_PACKETS)?,
            bwd_packets: idx(columns::TOTAL_BWD_PACKETS)?,
            fwd_bytes: idx(columns::TOTAL_LEN_FWD)?,
            bwd_bytes: idx(columns::TOTAL_LEN_BWD)?,
            fwd_len_max: idx(columns::FWD_LEN_MAX)?,
            fwd_len_min: idx(columns::FWD_LEN_MIN)?,
            fwd_len_mean: idx(columns::FWD_LEN_MEAN)?,
            fwd_len_std: idx(columns::FWD_LEN_STD)?,
            bwd_len_max: idx(columns::BWD_LEN_MAX)?,
            bwd_len_min: idx(columns::BWD_LEN_MIN)?,
            bwd_len_mean: idx(columns::BWD_LEN_MEAN)?,
            bwd_len_std: idx(columns::BWD_LEN_STD)?,
            bytes_per_s: idx(columns::FLOW_BYTES_S)?,
            packets_per_s: idx(columns::FLOW_PACKETS_S)?,
            flow_iat_mean: idx(columns::FLOW_IAT_MEAN)?,
            flow_iat_std: idx(columns::FLOW_IAT_STD)?,
            flow_iat_max: idx(columns::FLOW_IAT_MAX)?,
            flow_iat_min: idx(columns::FLOW_IAT_MIN)?,
            fwd_iat_mean: idx(columns::FWD_IAT_MEAN)?,
            fwd_iat_std: idx(columns::FWD_IAT_STD)?,
            bwd_iat_mean: idx(columns::BWD_IAT_MEAN)?,
            bwd_iat_std: idx(columns::BWD_IAT_STD)?,
            syn_flags: idx(columns::SYN_FLAGS)?,
            ack_flags: idx(columns::ACK_FLAGS)?,
            psh_flags: idx(columns::PSH_FLAGS)?,
            rst_flags: idx(columns::RST_FLAGS)?,
            avg_packet_size: idx(columns::AVG_PACKET_SIZE)?,
        })
    }
}
