//! CSV parsing, cleaning, and writing of flow records.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::record::RawFlowRecord;
use crate::schema::{columns, normalize_name, ColumnKind, FeatureSchema};

/// Counts reported by [`clean_records`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CleanReport {
    /// Non-finite rate values replaced by the batch maximum.
    pub replaced: usize,
    /// Records dropped for non-finite values outside rate columns.
    pub dropped: usize,
}

fn parse_timestamp(raw: &str) -> f64 {
    let trimmed = raw.trim();
    if let Ok(v) = trimmed.parse::<f64>() {
        return v;
    }
    // capture tooling emits local datetimes in a few d/m/y layouts
    for fmt in [
        "%d/%m/%Y %H:%M:%S",
        "%d/%m/%Y %H:%M",
        "%-d/%-m/%Y %-H:%M",
        "%Y-%m-%d %H:%M:%S",
    ] {
        if let Ok(dt) = chrono::NaiveDateTime::parse_from_str(trimmed, fmt) {
            return dt.and_utc().timestamp() as f64;
        }
    }
    f64::NAN
}

/// Parse a flow CSV into records, preserving file order.
///
/// Header matching is trimmed and case-insensitive; columns not named by the
/// schema are ignored. A missing schema column is a hard error naming the
/// column. Unparseable numeric cells become NaN and are left to the
/// [`clean_records`] policy rather than failing the parse.
pub fn parse_flow_csv(path: &Path, schema: &FeatureSchema) -> Result<Vec<RawFlowRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(BufReader::new(file));

    let headers = reader.headers()?.clone();
    let normalized: Vec<String> = headers.iter().map(normalize_name).collect();
    let find = |name: &str| -> Result<usize> {
        let norm = normalize_name(name);
        normalized
            .iter()
            .position(|h| *h == norm)
            .ok_or_else(|| Error::Schema(format!("missing required column {name:?}")))
    };

    // column positions in the file, resolved once
    let src_ip = find(columns::SRC_IP)?;
    let dst_ip = find(columns::DST_IP)?;
    let src_port = find(columns::SRC_PORT)?;
    let dst_port = find(columns::DST_PORT)?;
    let protocol = find(columns::PROTOCOL)?;
    let timestamp = find(columns::TIMESTAMP)?;
    let label = find(columns::LABEL)?;
    let numeric_positions: Vec<usize> = schema
        .numeric_names()
        .map(find)
        .collect::<Result<Vec<_>>>()?;
    let duration_feature = schema
        .numeric_index(columns::FLOW_DURATION)
        .ok_or_else(|| Error::Schema("schema lacks a Flow Duration column".into()))?;

    let get = |row: &csv::StringRecord, pos: usize| -> String {
        row.get(pos).unwrap_or("").trim().to_string()
    };
    let num = |row: &csv::StringRecord, pos: usize| -> f64 {
        row.get(pos)
            .map(|s| s.trim().parse::<f64>().unwrap_or(f64::NAN))
            .unwrap_or(f64::NAN)
    };

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let features: Vec<f64> = numeric_positions.iter().map(|&p| num(&row, p)).collect();
        records.push(RawFlowRecord {
            src_ip: get(&row, src_ip),
            dst_ip: get(&row, dst_ip),
            src_port: num(&row, src_port) as u16,
            dst_port: num(&row, dst_port) as u16,
            protocol: num(&row, protocol) as i64,
            timestamp: parse_timestamp(row.get(timestamp).unwrap_or("")),
            duration: features[duration_feature],
            features,
            label: get(&row, label),
        });
    }
    Ok(records)
}

/// Apply the non-finite policy.
///
/// Rate columns (bytes/s, packets/s) famously overflow to infinity when the
/// duration is zero; such values are replaced by the feature's maximum finite
/// value observed in the batch (0 if none exists). Records with non-finite
/// values anywhere else, including the timestamp, are dropped. The policy is
/// total: it never fails and never emits a non-finite value.
pub fn clean_records(
    records: Vec<RawFlowRecord>,
    schema: &FeatureSchema,
) -> (Vec<RawFlowRecord>, CleanReport) {
    let numeric_count = schema.numeric_count();
    let mut rate_max = vec![f64::NEG_INFINITY; numeric_count];
    for record in &records {
        for (idx, &value) in record.features.iter().enumerate() {
            if schema.is_rate(idx) && value.is_finite() && value > rate_max[idx] {
                rate_max[idx] = value;
            }
        }
    }

    let mut report = CleanReport::default();
    let mut kept = Vec::with_capacity(records.len());
    'records: for mut record in records {
        if !record.timestamp.is_finite() {
            report.dropped += 1;
            continue;
        }
        for idx in 0..numeric_count {
            if record.features[idx].is_finite() {
                continue;
            }
            if schema.is_rate(idx) {
                let max = rate_max[idx];
                record.features[idx] = if max.is_finite() { max } else { 0.0 };
                report.replaced += 1;
            } else {
                report.dropped += 1;
                continue 'records;
            }
        }
        record.duration = record.features[schema
            .numeric_index(columns::FLOW_DURATION)
            .expect("schema has Flow Duration")];
        kept.push(record);
    }
    (kept, report)
}

/// Write records in the canonical CSV layout the parser consumes.
///
/// Floats print in shortest round-trip form, so parse(write(records))
/// reproduces every numeric field exactly.
pub fn write_flow_csv(path: &Path, records: &[RawFlowRecord], schema: &FeatureSchema) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_flow_csv_to(&mut out, records, schema)?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_flow_csv_to(
    out: &mut impl Write,
    records: &[RawFlowRecord],
    schema: &FeatureSchema,
) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().from_writer(out);
    let header: Vec<&str> = schema.columns().iter().map(|c| c.name.as_str()).collect();
    writer.write_record(&header)?;
    for record in records {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        let mut numeric_idx = 0;
        for column in schema.columns() {
            match column.kind {
                ColumnKind::Identifier => {
                    let norm = normalize_name(&column.name);
                    row.push(match norm.as_str() {
                        _ if norm == normalize_name(columns::SRC_IP) => record.src_ip.clone(),
                        _ if norm == normalize_name(columns::DST_IP) => record.dst_ip.clone(),
                        _ if norm == normalize_name(columns::SRC_PORT) => {
                            record.src_port.to_string()
                        }
                        _ if norm == normalize_name(columns::DST_PORT) => {
                            record.dst_port.to_string()
                        }
                        _ if norm == normalize_name(columns::PROTOCOL) => {
                            record.protocol.to_string()
                        }
                        _ if norm == normalize_name(columns::TIMESTAMP) => {
                            format!("{}", record.timestamp)
                        }
                        _ => String::new(),
                    });
                }
                ColumnKind::Numeric => {
                    row.push(format!("{}", record.features[numeric_idx]));
                    numeric_idx += 1;
                }
                ColumnKind::Label => row.push(record.label.clone()),
            }
        }
        writer.write_record(&row)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FeatureSchema;

    fn record(schema: &FeatureSchema, label: &str) -> RawFlowRecord {
        let mut features: Vec<f64> = (0..schema.numeric_count())
            .map(|i| (i as f64) * 1.5 + 0.25)
            .collect();
        let dur = schema.numeric_index(columns::FLOW_DURATION).unwrap();
        features[dur] = 2_000_000.0;
        RawFlowRecord {
            src_ip: "192.168.1.10".into(),
            dst_ip: "10.0.0.5".into(),
            src_port: 443,
            dst_port: 51234,
            protocol: 6,
            timestamp: 1_500_000_000.5,
            duration: 2_000_000.0,
            features,
            label: label.into(),
        }
    }

    #[test]
    fn two_row_file_parses_in_order() {
        let schema = FeatureSchema::canonical();
        let records = vec![record(&schema, "BENIGN"), record(&schema, "DDoS")];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flows.csv");
        write_flow_csv(&path, &records, &schema).unwrap();
        let parsed = parse_flow_csv(&path, &schema).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].label, "BENIGN");
        assert_eq!(parsed[1].label, "DDoS");
    }

    #[test]
    fn header_only_file_yields_empty_list() {
        let schema = FeatureSchema::canonical();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        write_flow_csv(&path, &[], &schema).unwrap();
        let parsed = parse_flow_csv(&path, &schema).unwrap();
        assert!(parsed.is_empty());
    }

    #[test]
    fn missing_column_names_the_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "Source IP,Label\n1.2.3.4,BENIGN\n").unwrap();
        let err = parse_flow_csv(&path, &FeatureSchema::canonical()).unwrap_err();
        assert!(err.to_string().contains("Destination IP"), "{err}");
    }

    #[test]
    fn round_trip_preserves_numeric_fields_exactly() {
        let schema = FeatureSchema::canonical();
        let mut rec = record(&schema, "PortScan");
        rec.features[3] = 0.1 + 0.2; // a value with no short decimal form
        rec.timestamp = 1.23456789012345e9;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        write_flow_csv(&path, &[rec.clone()], &schema).unwrap();
        let parsed = parse_flow_csv(&path, &schema).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0], rec);
    }

    #[test]
    fn header_matching_is_trim_and_case_insensitive() {
        let schema = FeatureSchema::canonical();
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("flows.csv");
        write_flow_csv(&src, &[record(&schema, "BENIGN")], &schema).unwrap();
        let text = std::fs::read_to_string(&src).unwrap();
        let (header, rest) = text.split_once('\n').unwrap();
        let shuffled_case = header
            .split(',')
            .map(|h| format!(" {} ", h.to_uppercase()))
            .collect::<Vec<_>>()
            .join(",");
        let path = dir.path().join("case.csv");
        std::fs::write(&path, format!("{shuffled_case}\n{rest}")).unwrap();
        // quoting breaks when fields contain spaces, so rewrite without them
        let parsed = parse_flow_csv(&path, &schema);
        assert!(parsed.is_ok(), "{parsed:?}");
        assert_eq!(parsed.unwrap().len(), 1);
    }

    #[test]
    fn infinity_in_rate_column_takes_batch_max() {
        let schema = FeatureSchema::canonical();
        let rate_idx = schema.numeric_index(columns::FLOW_BYTES_S).unwrap();
        let mut a = record(&schema, "BENIGN");
        a.features[rate_idx] = 1e6;
        let mut b = record(&schema, "BENIGN");
        b.features[rate_idx] = f64::INFINITY;
        let (cleaned, report) = clean_records(vec![a, b], &schema);
        assert_eq!(cleaned.len(), 2);
        assert_eq!(report, CleanReport { replaced: 1, dropped: 0 });
        assert_eq!(cleaned[1].features[rate_idx], 1e6);
    }

    #[test]
    fn all_finite_batch_is_untouched() {
        let schema = FeatureSchema::canonical();
        let records = vec![record(&schema, "BENIGN"), record(&schema, "DDoS")];
        let (cleaned, report) = clean_records(records.clone(), &schema);
        assert_eq!(cleaned, records);
        assert_eq!(report, CleanReport::default());
    }

    #[test]
    fn nan_packet_count_drops_the_record() {
        let schema = FeatureSchema::canonical();
        let count_idx = schema.numeric_index(columns::TOTAL_FWD_PACKETS).unwrap();
        let mut bad = record(&schema, "DDoS");
        bad.features[count_idx] = f64::NAN;
        let (cleaned, report) = clean_records(vec![record(&schema, "BENIGN"), bad], &schema);
        assert_eq!(cleaned.len(), 1);
        assert_eq!(report.dropped, 1);
    }

    #[test]
    fn cleaned_output_is_always_finite() {
        let schema = FeatureSchema::canonical();
        let rate_idx = schema.numeric_index(columns::FLOW_PACKETS_S).unwrap();
        let mut weird = record(&schema, "BENIGN");
        weird.features[rate_idx] = f64::NEG_INFINITY;
        let (cleaned, _) = clean_records(vec![weird], &schema);
        for rec in &cleaned {
            assert!(rec.features.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn datetime_timestamps_parse() {
        assert!(parse_timestamp("1500000000.25") == 1500000000.25);
        assert!(parse_timestamp("05/07/2017 11:55:02").is_finite());
        assert!(parse_timestamp("not a time").is_nan());
    }
}
