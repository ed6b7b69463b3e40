//! Detection-evasion perturbations of attack flows and robustness sweeps.
//!
//! Both perturbations touch features only: endpoints, flow counts, and
//! labels never change, so the host-connection graph of a perturbed window
//! is structurally identical to the unperturbed one. In the default
//! `Consistent` mode every arithmetically dependent feature (totals, rates,
//! duration) is recomputed so perturbed records stay internally consistent;
//! dispersion features are untouched since a uniform shift leaves them
//! unchanged. `RawShift` shifts only the primary columns.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::Metrics;
use crate::model::Model;
use crate::pipeline::{evaluate_model, LabeledWindow};
use crate::record::{ClassTable, RawFlowRecord, BENIGN_CLASS};
use crate::schema::{FeatureSchema, ResolvedColumns};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerturbKind {
    PacketSize,
    InterArrival,
}

impl PerturbKind {
    pub fn name(&self) -> &'static str {
        match self {
            PerturbKind::PacketSize => "packet_size",
            PerturbKind::InterArrival => "inter_arrival",
        }
    }

    /// Sweep-mode magnitude cap: bytes for packet size, seconds for IAT.
    pub fn sweep_cap(&self) -> f64 {
        match self {
            PerturbKind::PacketSize => 200.0,
            PerturbKind::InterArrival => 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbKind,
    pub magnitude: f64,
}

impl PerturbationSpec {
    pub fn validate(&self, sweep_mode: bool) -> Result<()> {
        if self.magnitude < 0.0 {
            return Err(Error::Usage("perturbation magnitude must be >= 0".into()));
        }
        if sweep_mode && self.magnitude > self.kind.sweep_cap() {
            return Err(Error::Usage(format!(
                "sweep magnitude {} exceeds the {} cap {}",
                self.magnitude,
                self.kind.name(),
                self.kind.sweep_cap()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerturbMode {
    /// Recompute dependent features (totals, rates, duration).
    Consistent,
    /// Shift only the primary statistics.
    RawShift,
}

fn is_attack(record: &RawFlowRecord, classes: &ClassTable) -> bool {
    matches!(
        classes.map(&record.label),
        Ok(crate::record::LabelOutcome::Class(c)) if c != BENIGN_CLASS
    )
}

/// Increase the packet size of attack-labeled flows by `delta` bytes.
///
/// Length min/max/mean shift per direction, byte totals grow by
/// `delta * packets`, and byte rates are recomputed against the unchanged
/// duration. Length deviations, packet counts, timing, endpoints, and all
/// benign records stay untouched.
pub fn perturb_packet_size(
    records: &[RawFlowRecord],
    delta: f64,
    mode: PerturbMode,
    classes: &ClassTable,
    schema: &FeatureSchema,
) -> Result<Vec<RawFlowRecord>> {
    if delta == 0.0 {
        return Ok(records.to_vec());
    }
    let cols = ResolvedColumns::resolve(schema)?;
    let mut out = records.to_vec();
    for record in out.iter_mut() {
        if !is_attack(record, classes) {
            continue;
        }
        let f = &mut record.features;
        let fwd_packets = f[cols.fwd_packets];
        let bwd_packets = f[cols.bwd_packets];
        if fwd_packets >= 1.0 {
            f[cols.fwd_len_mean] += delta;
            f[cols.fwd_len_max] += delta;
            f[cols.fwd_len_min] += delta;
        }
        if bwd_packets >= 1.0 {
            f[cols.bwd_len_mean] += delta;
            f[cols.bwd_len_max] += delta;
            f[cols.bwd_len_min] += delta;
        }
        if mode == PerturbMode::Consistent {
            f[cols.fwd_bytes] += delta * fwd_packets;
            f[cols.bwd_bytes] += delta * bwd_packets;
            let total_packets = fwd_packets + bwd_packets;
            if total_packets >= 1.0 {
                f[cols.avg_packet_size] += delta;
            }
            let duration_s = f[cols.duration] / 1e6;
            if duration_s > 0.0 {
                f[cols.bytes_per_s] = (f[cols.fwd_bytes] + f[cols.bwd_bytes]) / duration_s;
            }
        }
    }
    Ok(out)
}

/// Increase the inter-arrival times of attack-labeled flows by `delta`
/// seconds per packet gap.
///
/// IAT mean/min/max features shift by `delta`, the duration grows by
/// `delta * (packets - 1)`, and both rate features are recomputed against
/// the new duration. IAT deviations stay fixed. Flows with fewer than two
/// packets have no gaps and are left entirely unchanged.
pub fn perturb_iat(
    records: &[RawFlowRecord],
    delta: f64,
    mode: PerturbMode,
    classes: &ClassTable,
    schema: &FeatureSchema,
) -> Result<Vec<RawFlowRecord>> {
    if delta == 0.0 {
        return Ok(records.to_vec());
    }
    let cols = ResolvedColumns::resolve(schema)?;
    let mut out = records.to_vec();
    for record in out.iter_mut() {
        if !is_attack(record, classes) {
            continue;
        }
        let fwd_packets = record.features[cols.fwd_packets];
        let bwd_packets = record.features[cols.bwd_packets];
        let total_packets = fwd_packets + bwd_packets;
        if total_packets < 2.0 {
            continue;
        }
        let f = &mut record.features;
        f[cols.flow_iat_mean] += delta;
        f[cols.flow_iat_max] += delta;
        f[cols.flow_iat_min] += delta;
        if fwd_packets >= 2.0 {
            f[cols.fwd_iat_mean] += delta;
        }
        if bwd_packets >= 2.0 {
            f[cols.bwd_iat_mean] += delta;
        }
        if mode == PerturbMode::Consistent {
            f[cols.duration] += delta * (total_packets - 1.0) * 1e6;
            record.duration = f[cols.duration];
            let duration_s = f[cols.duration] / 1e6;
            if duration_s > 0.0 {
                f[cols.bytes_per_s] = (f[cols.fwd_bytes] + f[cols.bwd_bytes]) / duration_s;
                f[cols.packets_per_s] = total_packets / duration_s;
            }
        }
    }
    Ok(out)
}

pub fn perturb(
    records: &[RawFlowRecord],
    spec: PerturbationSpec,
    mode: PerturbMode,
    classes: &ClassTable,
    schema: &FeatureSchema,
) -> Result<Vec<RawFlowRecord>> {
    match spec.kind {
        PerturbKind::PacketSize => {
            perturb_packet_size(records, spec.magnitude, mode, classes, schema)
        }
        PerturbKind::InterArrival => perturb_iat(records, spec.magnitude, mode, classes, schema),
    }
}

/// One evaluated point of a robustness curve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub model: String,
    pub kind: PerturbKind,
    pub magnitude: f64,
    pub weighted_f1: f64,
    pub per_class_f1: Vec<f64>,
}

fn check_grid(kind: PerturbKind, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Ok(());
    }
    if grid[0] != 0.0 {
        return Err(Error::Usage(format!(
            "{} grid must start at magnitude 0",
            kind.name()
        )));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Usage(format!(
            "{} grid must be strictly increasing",
            kind.name()
        )));
    }
    for &m in grid {
        PerturbationSpec { kind, magnitude: m }.validate(true)?;
    }
    Ok(())
}

/// Evaluate every model at every grid point of both perturbation kinds.
///
/// Validation flows are perturbed at the record level, then each model
/// re-vectorizes with its training-time normalization stats; the GNN
/// additionally rebuilds its graphs, whose structure the perturbation
/// provably never changes.
pub fn robustness_sweep(
    models: &[&Model],
    windows: &[LabeledWindow],
    packet_grid: &[f64],
    iat_grid: &[f64],
    mode: PerturbMode,
    classes: &ClassTable,
    schema: &FeatureSchema,
) -> Result<Vec<SweepPoint>> {
    if models.is_empty() {
        return Err(Error::EmptyInput("robustness_sweep needs at least one model"));
    }
    if windows.is_empty() {
        return Err(Error::EmptyInput("robustness_sweep needs evaluation windows"));
    }
    for model in models {
        if model.classes.len() != classes.class_count() {
            return Err(Error::Usage(format!(
                "model {:?} was trained with {} classes, expected {}",
                model.name,
                model.classes.len(),
                classes.class_count()
            )));
        }
    }
    check_grid(PerturbKind::PacketSize, packet_grid)?;
    check_grid(PerturbKind::InterArrival, iat_grid)?;

    let mut points = Vec::new();
    for (kind, grid) in [
        (PerturbKind::PacketSize, packet_grid),
        (PerturbKind::InterArrival, iat_grid),
    ] {
        for &magnitude in grid {
            let spec = PerturbationSpec { kind, magnitude };
            let perturbed: Result<Vec<LabeledWindow>> = windows
                .par_iter()
                .map(|w| {
                    Ok(LabeledWindow {
                        window_id: w.window_id,
                        records: perturb(&w.records, spec, mode, classes, schema)?,
                        labels: w.labels.clone(),
                    })
                })
                .collect();
            let perturbed = perturbed?;
            for model in models {
                let (metrics, _) = evaluate_model(model, &perturbed)?;
                points.push(sweep_point(model, kind, magnitude, &metrics));
            }
        }
    }
    Ok(points)
}

fn sweep_point(model: &Model, kind: PerturbKind, magnitude: f64, metrics: &Metrics) -> SweepPoint {
    SweepPoint {
        model: model.name.clone(),
        kind,
        magnitude,
        weighted_f1: metrics.weighted_f1,
        per_class_f1: metrics.per_class.iter().map(|s| s.f1).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::synth::{default_mix, generate_dataset};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn schema() -> FeatureSchema {
        FeatureSchema::canonical()
    }

    fn classes() -> ClassTable {
        ClassTable::synthetic()
    }

    /// A hand-built attack record with consistent derived statistics.
    fn attack_record() -> RawFlowRecord {
        let schema = schema();
        let cols = ResolvedColumns::resolve(&schema).unwrap();
        let mut features = vec![0.0; schema.numeric_count()];
        features[cols.fwd_packets] = 10.0;
        features[cols.bwd_packets] = 0.0;
        features[cols.fwd_len_mean] = 100.0;
        features[cols.fwd_len_max] = 110.0;
        features[cols.fwd_len_min] = 90.0;
        features[cols.fwd_len_std] = 5.0;
        features[cols.fwd_bytes] = 1000.0;
        features[cols.duration] = 2e6;
        features[cols.bytes_per_s] = 500.0;
        features[cols.packets_per_s] = 5.0;
        features[cols.flow_iat_mean] = 0.2;
        features[cols.flow_iat_max] = 0.25;
        features[cols.flow_iat_min] = 0.15;
        features[cols.flow_iat_std] = 0.02;
        features[cols.fwd_iat_mean] = 0.2;
        features[cols.avg_packet_size] = 100.0;
        RawFlowRecord {
            src_ip: "172.16.0.1".into(),
            dst_ip: "172.31.0.1".into(),
            src_port: 1234,
            dst_port: 80,
            protocol: 6,
            timestamp: 0.0,
            duration: 2e6,
            features,
            label: "DDoS".into(),
        }
    }

    fn benign_record() -> RawFlowRecord {
        let mut r = attack_record();
        r.label = "Benign".into();
        r
    }

    #[test]
    fn zero_delta_is_identity_for_both_kinds() {
        let records = vec![attack_record(), benign_record()];
        for kind in [PerturbKind::PacketSize, PerturbKind::InterArrival] {
            let out = perturb(
                &records,
                PerturbationSpec { kind, magnitude: 0.0 },
                PerturbMode::Consistent,
                &classes(),
                &schema(),
            )
            .unwrap();
            assert_eq!(out, records);
        }
    }

    #[test]
    fn packet_size_shift_recomputes_dependent_features() {
        let out = perturb_packet_size(
            &[attack_record()],
            50.0,
            PerturbMode::Consistent,
            &classes(),
            &schema(),
        )
        .unwrap();
        let schema = schema();
        let cols = ResolvedColumns::resolve(&schema).unwrap();
        let f = &out[0].features;
        // mean 100 -> 150, bytes 1000 -> 1500, rate 500 -> 750 over 2 s
        assert_eq!(f[cols.fwd_len_mean], 150.0);
        assert_eq!(f[cols.fwd_bytes], 1500.0);
        assert_eq!(f[cols.bytes_per_s], 750.0);
        // deviations and counts untouched
        assert_eq!(f[cols.fwd_len_std], 5.0);
        assert_eq!(f[cols.fwd_packets], 10.0);
        assert_eq!(f[cols.packets_per_s], 5.0);
        // empty backward direction untouched
        assert_eq!(f[cols.bwd_len_mean], 0.0);
        assert_eq!(f[cols.avg_packet_size], 150.0);
    }

    #[test]
    fn benign_records_never_change() {
        let records = vec![benign_record()];
        let out =
            perturb_packet_size(&records, 200.0, PerturbMode::Consistent, &classes(), &schema())
                .unwrap();
        assert_eq!(out, records);
        let out = perturb_iat(&records, 2.0, PerturbMode::Consistent, &classes(), &schema())
            .unwrap();
        assert_eq!(out, records);
    }

    #[test]
    fn iat_shift_recomputes_duration_and_rates() {
        let schema = schema();
        let cols = ResolvedColumns::resolve(&schema).unwrap();
        let mut record = attack_record();
        // 11 packets, duration 1 s, 1000 bytes total
        record.features[cols.fwd_packets] = 6.0;
        record.features[cols.bwd_packets] = 5.0;
        record.features[cols.duration] = 1e6;
        record.duration = 1e6;
        record.features[cols.bytes_per_s] = 1000.0;
        record.features[cols.packets_per_s] = 11.0;

        let out = perturb_iat(&[record], 0.5, PerturbMode::Consistent, &classes(), &schema)
            .unwrap();
        let f = &out[0].features;
        assert_eq!(f[cols.duration], 6e6);
        assert_eq!(out[0].duration, 6e6);
        assert!((f[cols.bytes_per_s] - 1000.0 / 6.0).abs() < 1e-9);
        assert!((f[cols.packets_per_s] - 11.0 / 6.0).abs() < 1e-9);
        assert!((f[cols.flow_iat_mean] - 0.7).abs() < 1e-12);
        // dispersion unchanged
        assert_eq!(f[cols.flow_iat_std], 0.02);
    }

    #[test]
    fn single_packet_flow_is_untouched_by_iat_shift() {
        let schema = schema();
        let cols = ResolvedColumns::resolve(&schema).unwrap();
        let mut record = attack_record();
        record.features[cols.fwd_packets] = 1.0;
        record.features[cols.bwd_packets] = 0.0;
        record.features[cols.flow_iat_mean] = 0.0;
        record.features[cols.flow_iat_max] = 0.0;
        record.features[cols.flow_iat_min] = 0.0;
        let before = record.clone();
        let out = perturb_iat(&[record], 1.5, PerturbMode::Consistent, &classes(), &schema)
            .unwrap();
        assert_eq!(out[0], before);
    }

    #[test]
    fn raw_shift_mode_leaves_derived_columns_alone() {
        let out = perturb_packet_size(
            &[attack_record()],
            50.0,
            PerturbMode::RawShift,
            &classes(),
            &schema(),
        )
        .unwrap();
        let schema = schema();
        let cols = ResolvedColumns::resolve(&schema).unwrap();
        let f = &out[0].features;
        assert_eq!(f[cols.fwd_len_mean], 150.0);
        assert_eq!(f[cols.fwd_bytes], 1000.0);
        assert_eq!(f[cols.bytes_per_s], 500.0);
    }

    #[test]
    fn shifts_compose_additively() {
        let records = vec![attack_record()];
        let (classes, schema) = (classes(), schema());
        let once = perturb_packet_size(&records, 70.0, PerturbMode::Consistent, &classes, &schema)
            .unwrap();
        let a = perturb_packet_size(&records, 30.0, PerturbMode::Consistent, &classes, &schema)
            .unwrap();
        let ab = perturb_packet_size(&a, 40.0, PerturbMode::Consistent, &classes, &schema)
            .unwrap();
        for (x, y) in once[0].features.iter().zip(&ab[0].features) {
            assert!(
                (x - y).abs() <= 1e-9 * x.abs().max(1.0),
                "composition mismatch {x} vs {y}"
            );
        }
    }

    #[test]
    fn monotone_accounting_and_label_preservation() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let data = generate_dataset(&default_mix(), 6, 100, &mut rng).unwrap();
        let (classes, schema) = (classes(), schema());
        let cols = ResolvedColumns::resolve(&schema).unwrap();
        for window in &data.windows {
            let shifted =
                perturb_packet_size(window, 120.0, PerturbMode::Consistent, &classes, &schema)
                    .unwrap();
            for (before, after) in window.iter().zip(&shifted) {
                assert_eq!(before.label, after.label);
                assert!(after.features[cols.fwd_bytes] >= before.features[cols.fwd_bytes]);
                assert!(after.features[cols.bwd_bytes] >= before.features[cols.bwd_bytes]);
            }
            let slowed =
                perturb_iat(window, 1.0, PerturbMode::Consistent, &classes, &schema).unwrap();
            for (before, after) in window.iter().zip(&slowed) {
                assert!(after.features[cols.duration] >= before.features[cols.duration]);
            }
        }
    }

    #[test]
    fn perturbed_windows_build_identical_graph_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let data = generate_dataset(&default_mix(), 4, 100, &mut rng).unwrap();
        let (classes, schema) = (classes(), schema());
        for window in &data.windows {
            let shifted = perturb_iat(window, 2.0, PerturbMode::Consistent, &classes, &schema)
                .unwrap();
            let dummy: Vec<Vec<f64>> = window.iter().map(|_| vec![0.0]).collect();
            let labels: Vec<usize> = vec![0; window.len()];
            let g1 = build_graph(window, &dummy, &labels).unwrap();
            let g2 = build_graph(&shifted, &dummy, &labels).unwrap();
            assert_eq!(g1.hosts, g2.hosts);
            assert_eq!(g1.edges, g2.edges);
        }
    }

    #[test]
    fn sweep_grid_validation() {
        assert!(check_grid(PerturbKind::PacketSize, &[0.0, 50.0, 100.0]).is_ok());
        assert!(check_grid(PerturbKind::PacketSize, &[50.0, 100.0]).is_err());
        assert!(check_grid(PerturbKind::PacketSize, &[0.0, 100.0, 100.0]).is_err());
        assert!(check_grid(PerturbKind::PacketSize, &[0.0, 250.0]).is_err());
        assert!(check_grid(PerturbKind::InterArrival, &[0.0, 2.5]).is_err());
    }
}
