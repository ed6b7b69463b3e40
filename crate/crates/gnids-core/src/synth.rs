//! Synthetic flow generation with the structural attack patterns: DDoS
//! fan-in, port scans, network scans, and repeated-pair brute force, mixed
//! into heterogeneous benign background traffic.
//!
//! Attack flows within one instance share a feature draw (small jitter), so
//! neighborhoods around victim hosts are near-homogeneous. Benign flows draw
//! independently from wide heavy-tailed distributions. Attack packet sizes
//! and inter-arrival gaps sit low in the benign range, which makes them
//! separable at flow level until a perturbation shifts them.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::record::RawFlowRecord;
use crate::schema::{FeatureSchema, ResolvedColumns};

/// Seconds of traffic covered by one window.
const WINDOW_SPAN: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatternKind {
    Benign,
    DDoS,
    PortScan,
    NetworkScan,
    BruteForce,
}

impl PatternKind {
    pub fn label(&self) -> &'static str {
        match self {
            PatternKind::Benign => "Benign",
            PatternKind::DDoS => "DDoS",
            PatternKind::PortScan => "PortScan",
            PatternKind::NetworkScan => "NetworkScan",
            PatternKind::BruteForce => "BruteForce",
        }
    }
}

/// A sampling distribution for one feature dimension.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub enum Dist {
    Const(f64),
    Uniform(f64, f64),
    /// Parameters of ln(x).
    LogNormal(f64, f64),
}

impl Dist {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Dist::Const(v) => v,
            Dist::Uniform(a, b) => rng.random_range(a..=b),
            Dist::LogNormal(mu, sigma) => LogNormal::new(mu, sigma)
                .expect("valid lognormal parameters")
                .sample(rng),
        }
    }
}

/// Per-kind feature sampling. Attack patterns draw the base values once per
/// instance and jitter them per flow; benign flows draw independently.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureProfile {
    /// Mean packet length in bytes.
    pub packet_len: Dist,
    /// Within-flow length dispersion, as a fraction of the mean length.
    pub len_std_frac: Dist,
    /// Mean inter-arrival gap in seconds.
    pub iat: Dist,
    /// Within-flow IAT dispersion fraction.
    pub iat_std_frac: Dist,
    /// Total packets per flow (rounded, clamped >= 1).
    pub packet_count: Dist,
    /// Fraction of packets in the forward direction.
    pub fwd_fraction: Dist,
    /// Per-flow additive length jitter (bytes) inside one instance.
    pub len_jitter: f64,
    /// Per-flow multiplicative IAT jitter fraction inside one instance.
    pub iat_jitter_frac: f64,
    /// Per-flow packet-count jitter range inside one instance.
    pub count_jitter: i64,
}

impl FeatureProfile {
    pub fn benign_diverse() -> Self {
        FeatureProfile {
            packet_len: Dist::LogNormal(500.0f64.ln(), 1.6),
            len_std_frac: Dist::Uniform(0.08, 0.5),
            iat: Dist::LogNormal(0.3f64.ln(), 2.2),
            iat_std_frac: Dist::Uniform(0.1, 0.8),
            packet_count: Dist::LogNormal(8.0f64.ln(), 1.1),
            fwd_fraction: Dist::Uniform(0.35, 0.7),
            len_jitter: 0.0,
            iat_jitter_frac: 0.0,
            count_jitter: 0,
        }
    }

    /// Benign one-sided probes: feature-matched to the port-scan box, but
    /// scattered over mixed server neighborhoods. Keepalives, health checks.
    pub fn benign_probe_one_sided() -> Self {
        FeatureProfile {
            packet_len: Dist::Uniform(40.0, 240.0),
            len_std_frac: Dist::Const(0.0),
            iat: Dist::Uniform(0.001, 1.0),
            iat_std_frac: Dist::Const(0.0),
            packet_count: Dist::Const(2.0),
            fwd_fraction: Dist::Const(1.0),
            len_jitter: 0.0,
            iat_jitter_frac: 0.0,
            count_jitter: 0,
        }
    }

    /// Benign request/reply probes, feature-matched to the network-scan box.
    pub fn benign_probe_two_sided() -> Self {
        FeatureProfile {
            packet_len: Dist::Uniform(40.0, 240.0),
            len_std_frac: Dist::Const(0.0),
            iat: Dist::Uniform(0.001, 1.0),
            iat_std_frac: Dist::Const(0.0),
            packet_count: Dist::Const(2.0),
            fwd_fraction: Dist::Const(0.5),
            len_jitter: 0.0,
            iat_jitter_frac: 0.0,
            count_jitter: 0,
        }
    }

    /// Benign interactive sessions, feature-matched to the brute-force box.
    pub fn benign_session_like() -> Self {
        FeatureProfile {
            packet_len: Dist::Uniform(40.0, 240.0),
            len_std_frac: Dist::Uniform(0.0, 0.02),
            iat: Dist::Uniform(0.002, 1.0),
            iat_std_frac: Dist::Uniform(0.0, 0.05),
            packet_count: Dist::Uniform(8.0, 16.0),
            fwd_fraction: Dist::Uniform(0.45, 0.6),
            len_jitter: 0.0,
            iat_jitter_frac: 0.0,
            count_jitter: 0,
        }
    }

    /// Benign bulk bursts, feature-matched to the DDoS box.
    pub fn benign_burst_like() -> Self {
        FeatureProfile {
            packet_len: Dist::Uniform(40.0, 240.0),
            len_std_frac: Dist::Uniform(0.0, 0.03),
            iat: Dist::Uniform(0.002, 1.0),
            iat_std_frac: Dist::Uniform(0.0, 0.1),
            packet_count: Dist::Uniform(20.0, 60.0),
            fwd_fraction: Dist::Uniform(0.65, 0.85),
            len_jitter: 0.0,
            iat_jitter_frac: 0.0,
            count_jitter: 0,
        }
    }

    /// Wide-location variant of a profile: same packet-count, direction, and
    /// dispersion signature, but packet sizes and gaps anywhere in a broad
    /// range. These make absolute size/timing uninformative on their own.
    fn widened(mut self) -> Self {
        self.packet_len = Dist::LogNormal(400.0f64.ln(), 1.3);
        self.iat = Dist::LogNormal(0.2f64.ln(), 2.0);
        self
    }

    pub fn benign_wide_probe_one_sided() -> Self {
        Self::benign_probe_one_sided().widened()
    }

    pub fn benign_wide_probe_two_sided() -> Self {
        Self::benign_probe_two_sided().widened()
    }

    pub fn benign_wide_session_like() -> Self {
        Self::benign_session_like().widened()
    }

    pub fn benign_wide_burst_like() -> Self {
        Self::benign_burst_like().widened()
    }

    pub fn ddos() -> Self {
        FeatureProfile {
            packet_len: Dist::Uniform(40.0, 240.0),
            len_std_frac: Dist::Uniform(0.0, 0.03),
            iat: Dist::Uniform(0.002, 1.0),
            iat_std_frac: Dist::Uniform(0.0, 0.1),
            packet_count: Dist::Uniform(20.0, 60.0),
            fwd_fraction: Dist::Uniform(0.65, 0.85),
            len_jitter: 2.0,
            iat_jitter_frac: 0.05,
            count_jitter: 2,
        }
    }

    /// SYN probes against mostly closed ports: two packets out, nothing back.
    pub fn port_scan() -> Self {
        FeatureProfile {
            packet_len: Dist::Uniform(40.0, 240.0),
            len_std_frac: Dist::Const(0.0),
            iat: Dist::Uniform(0.001, 1.0),
            iat_std_frac: Dist::Const(0.0),
            packet_count: Dist::Const(2.0),
            fwd_fraction: Dist::Const(1.0),
            len_jitter: 1.0,
            iat_jitter_frac: 0.05,
            count_jitter: 0,
        }
    }

    /// Host discovery across a subnet: one probe, one reply per victim.
    pub fn network_scan() -> Self {
        FeatureProfile {
            packet_len: Dist::Uniform(40.0, 240.0),
            len_std_frac: Dist::Const(0.0),
            iat: Dist::Uniform(0.001, 1.0),
            iat_std_frac: Dist::Const(0.0),
            packet_count: Dist::Const(2.0),
            fwd_fraction: Dist::Const(0.5),
            len_jitter: 1.5,
            iat_jitter_frac: 0.05,
            count_jitter: 0,
        }
    }

    pub fn brute_force() -> Self {
        FeatureProfile {
            packet_len: Dist::Uniform(40.0, 240.0),
            len_std_frac: Dist::Uniform(0.0, 0.02),
            iat: Dist::Uniform(0.002, 1.0),
            iat_std_frac: Dist::Uniform(0.0, 0.05),
            packet_count: Dist::Uniform(8.0, 16.0),
            fwd_fraction: Dist::Uniform(0.45, 0.6),
            len_jitter: 3.0,
            iat_jitter_frac: 0.05,
            count_jitter: 2,
        }
    }
}

/// One structural traffic pattern.
///
/// For `Benign`, `attacker_count`/`victim_count` are the client/server pool
/// sizes and `flows_per_pair` the number of flows emitted.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PatternSpec {
    pub kind: PatternKind,
    pub attacker_count: usize,
    pub victim_count: usize,
    pub flows_per_pair: usize,
    pub profile: FeatureProfile,
}

impl PatternSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::PatternSpec(msg));
        if self.attacker_count < 1 || self.victim_count < 1 || self.flows_per_pair < 1 {
            return err(format!("{:?}: counts must be >= 1", self.kind));
        }
        match self.kind {
            PatternKind::DDoS => {
                if self.attacker_count <= 1 || self.victim_count != 1 {
                    return err("DDoS requires attacker_count > 1 and victim_count = 1".into());
                }
            }
            PatternKind::PortScan => {
                if self.attacker_count != 1 || self.victim_count != 1 || self.flows_per_pair <= 1 {
                    return err(
                        "PortScan requires one attacker, one victim, flows_per_pair > 1".into(),
                    );
                }
            }
            PatternKind::NetworkScan => {
                if self.attacker_count != 1 || self.victim_count <= 1 {
                    return err("NetworkScan requires one attacker and victim_count > 1".into());
                }
            }
            PatternKind::BruteForce => {
                if self.attacker_count != 1 || self.victim_count != 1 {
                    return err("BruteForce requires one attacker and one victim".into());
                }
            }
            PatternKind::Benign => {}
        }
        Ok(())
    }

    /// Number of flows one instance of this pattern produces.
    pub fn flow_count(&self) -> usize {
        match self.kind {
            PatternKind::Benign => self.flows_per_pair,
            _ => self.attacker_count * self.victim_count * self.flows_per_pair,
        }
    }

    pub fn ddos(attackers: usize) -> Self {
        PatternSpec {
            kind: PatternKind::DDoS,
            attacker_count: attackers,
            victim_count: 1,
            flows_per_pair: 1,
            profile: FeatureProfile::ddos(),
        }
    }

    pub fn port_scan(flows: usize) -> Self {
        PatternSpec {
            kind: PatternKind::PortScan,
            attacker_count: 1,
            victim_count: 1,
            flows_per_pair: flows,
            profile: FeatureProfile::port_scan(),
        }
    }

    pub fn network_scan(victims: usize) -> Self {
        PatternSpec {
            kind: PatternKind::NetworkScan,
            attacker_count: 1,
            victim_count: victims,
            flows_per_pair: 1,
            profile: FeatureProfile::network_scan(),
        }
    }

    pub fn brute_force(attempts: usize) -> Self {
        PatternSpec {
            kind: PatternKind::BruteForce,
            attacker_count: 1,
            victim_count: 1,
            flows_per_pair: attempts,
            profile: FeatureProfile::brute_force(),
        }
    }

    pub fn benign(profile: FeatureProfile) -> Self {
        PatternSpec {
            kind: PatternKind::Benign,
            attacker_count: 40,
            victim_count: 8,
            flows_per_pair: 1,
            profile,
        }
    }
}

/// Base feature draw shared by all flows of one attack instance.
#[derive(Clone, Copy)]
struct InstanceDraw {
    len: f64,
    len_std_frac: f64,
    iat: f64,
    iat_std_frac: f64,
    count: f64,
    fwd_fraction: f64,
}

impl InstanceDraw {
    fn sample<R: Rng>(profile: &FeatureProfile, rng: &mut R) -> Self {
        InstanceDraw {
            len: profile.packet_len.sample(rng),
            len_std_frac: profile.len_std_frac.sample(rng),
            iat: profile.iat.sample(rng),
            iat_std_frac: profile.iat_std_frac.sample(rng),
            count: profile.packet_count.sample(rng),
            fwd_fraction: profile.fwd_fraction.sample(rng),
        }
    }
}

struct FlowShape {
    len_mean: f64,
    len_std_frac: f64,
    iat_mean: f64,
    iat_std_frac: f64,
    packets: usize,
    fwd_fraction: f64,
}

fn jittered<R: Rng>(profile: &FeatureProfile, base: &InstanceDraw, rng: &mut R) -> FlowShape {
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let len = (base.len + profile.len_jitter * gauss.sample(rng)).max(40.0);
    let iat = (base.iat * (1.0 + profile.iat_jitter_frac * gauss.sample(rng))).max(1e-4);
    let count = if profile.count_jitter > 0 {
        let j = rng.random_range(-profile.count_jitter..=profile.count_jitter);
        ((base.count.round() as i64) + j).max(2) as usize
    } else {
        (base.count.round() as i64).max(1) as usize
    };
    FlowShape {
        len_mean: len,
        len_std_frac: base.len_std_frac,
        iat_mean: iat,
        iat_std_frac: base.iat_std_frac,
        packets: count,
        fwd_fraction: base.fwd_fraction,
    }
}

fn benign_shape<R: Rng>(profile: &FeatureProfile, rng: &mut R) -> FlowShape {
    FlowShape {
        len_mean: profile.packet_len.sample(rng).clamp(40.0, 20000.0),
        len_std_frac: profile.len_std_frac.sample(rng).max(0.0),
        iat_mean: profile.iat.sample(rng).clamp(5e-4, 120.0),
        iat_std_frac: profile.iat_std_frac.sample(rng).max(0.0),
        packets: (profile.packet_count.sample(rng).round() as i64).clamp(1, 400) as usize,
        fwd_fraction: profile.fwd_fraction.sample(rng),
    }
}

struct Endpoints {
    src_ip: String,
    dst_ip: String,
    src_port: u16,
    dst_port: u16,
}

/// Materialize one flow record from its shape, with all derived statistics
/// (totals, rates, duration) arithmetically consistent.
fn make_record<R: Rng>(
    shape: &FlowShape,
    ep: Endpoints,
    timestamp: f64,
    label: &str,
    cols: &ResolvedColumns,
    feature_count: usize,
    rng: &mut R,
) -> RawFlowRecord {
    let p = shape.packets.max(1);
    let p_fwd = ((p as f64 * shape.fwd_fraction).round() as usize).clamp(1, p);
    let p_bwd = p - p_fwd;

    let fwd_mean = shape.len_mean * rng.random_range(0.92..=1.08);
    // backward payload anywhere from ACK-only (zero bytes) to full-size,
    // so payload size never stands in for the direction split
    let bwd_mean = if p_bwd > 0 {
        shape.len_mean * rng.random_range(0.0..=1.0)
    } else {
        0.0
    };
    let fwd_std = fwd_mean * shape.len_std_frac;
    let bwd_std = bwd_mean * shape.len_std_frac;
    let fwd_total = fwd_mean * p_fwd as f64;
    let bwd_total = bwd_mean * p_bwd as f64;

    let (iat_mean, iat_std, duration_s) = if p >= 2 {
        let std = shape.iat_mean * shape.iat_std_frac;
        (shape.iat_mean, std, shape.iat_mean * (p - 1) as f64)
    } else {
        (0.0, 0.0, rng.random_range(1e-6..=1e-3))
    };
    let duration_us = duration_s * 1e6;

    let mut features = vec![0.0; feature_count];
    features[cols.duration] = duration_us;
    features[cols.fwd_packets] = p_fwd as f64;
    features[cols.bwd_packets] = p_bwd as f64;
    features[cols.fwd_bytes] = fwd_total;
    features[cols.bwd_bytes] = bwd_total;
    features[cols.fwd_len_mean] = fwd_mean;
    features[cols.fwd_len_std] = fwd_std;
    features[cols.fwd_len_max] = fwd_mean + 2.0 * fwd_std;
    features[cols.fwd_len_min] = (fwd_mean - 2.0 * fwd_std).max(0.0);
    features[cols.bwd_len_mean] = bwd_mean;
    features[cols.bwd_len_std] = bwd_std;
    features[cols.bwd_len_max] = if p_bwd > 0 { bwd_mean + 2.0 * bwd_std } else { 0.0 };
    features[cols.bwd_len_min] = if p_bwd > 0 { (bwd_mean - 2.0 * bwd_std).max(0.0) } else { 0.0 };
    features[cols.bytes_per_s] = (fwd_total + bwd_total) / duration_s;
    features[cols.packets_per_s] = p as f64 / duration_s;
    features[cols.flow_iat_mean] = iat_mean;
    features[cols.flow_iat_std] = iat_std;
    features[cols.flow_iat_max] = if p >= 2 { iat_mean + 2.0 * iat_std } else { 0.0 };
    features[cols.flow_iat_min] = if p >= 2 { (iat_mean - 2.0 * iat_std).max(0.0) } else { 0.0 };
    if p_fwd >= 2 {
        features[cols.fwd_iat_mean] = duration_s / (p_fwd - 1) as f64;
        features[cols.fwd_iat_std] = features[cols.fwd_iat_mean] * shape.iat_std_frac;
    }
    if p_bwd >= 2 {
        features[cols.bwd_iat_mean] = duration_s / (p_bwd - 1) as f64;
        features[cols.bwd_iat_std] = features[cols.bwd_iat_mean] * shape.iat_std_frac;
    }
    features[cols.syn_flags] = 1.0;
    features[cols.ack_flags] = (p - 1) as f64;
    features[cols.psh_flags] = (p as f64 * rng.random_range(0.2..=0.5)).round();
    features[cols.rst_flags] = if rng.random_bool(0.05) { 1.0 } else { 0.0 };
    features[cols.avg_packet_size] = (fwd_total + bwd_total) / p as f64;

    RawFlowRecord {
        src_ip: ep.src_ip,
        dst_ip: ep.dst_ip,
        src_port: ep.src_port,
        dst_port: ep.dst_port,
        protocol: 6,
        timestamp,
        duration: duration_us,
        features,
        label: label.to_string(),
    }
}

fn pool_ip(prefix: &str, index: usize) -> String {
    format!("{prefix}.{}.{}", (index / 250) % 250, index % 250 + 1)
}

fn ephemeral_port<R: Rng>(rng: &mut R) -> u16 {
    rng.random_range(1024..=65535)
}

/// Generate the flow records of one pattern instance.
///
/// Structural constraints hold by construction: DDoS fans many sources into
/// one destination, port scans emit one source/destination pair with distinct
/// destination ports, network scans fan one source out to distinct
/// destinations, and brute force repeats one pair on one port.
pub fn generate_pattern<R: Rng>(
    spec: &PatternSpec,
    schema: &FeatureSchema,
    rng: &mut R,
) -> Result<Vec<RawFlowRecord>> {
    spec.validate()?;
    let cols = ResolvedColumns::resolve(schema)?;
    let feature_count = schema.numeric_count();
    let label = spec.kind.label();

    if spec.kind == PatternKind::Benign {
        let mut records = Vec::with_capacity(spec.flows_per_pair);
        for _ in 0..spec.flows_per_pair {
            let shape = benign_shape(&spec.profile, rng);
            let ep = benign_endpoints(spec.attacker_count, spec.victim_count, rng);
            let t = rng.random_range(0.0..WINDOW_SPAN);
            records.push(make_record(&shape, ep, t, label, &cols, feature_count, rng));
        }
        return Ok(records);
    }

    let base = InstanceDraw::sample(&spec.profile, rng);
    let attacker_base: usize = rng.random_range(0..40_000);
    let victim_base: usize = rng.random_range(0..40_000);
    let scan_port_base: u16 = rng.random_range(1..40_000);
    let service_port: u16 = match spec.kind {
        PatternKind::BruteForce => 22,
        _ => 80,
    };

    let start = rng.random_range(0.05..0.5) * WINDOW_SPAN;
    let burst_gap = rng.random_range(0.01..0.1);
    let mut records = Vec::with_capacity(spec.flow_count());
    let mut flow_idx = 0usize;
    for a in 0..spec.attacker_count {
        for v in 0..spec.victim_count {
            for k in 0..spec.flows_per_pair {
                let shape = jittered(&spec.profile, &base, rng);
                let dst_port = match spec.kind {
                    // distinct ports are what makes it a port scan
                    PatternKind::PortScan => scan_port_base.wrapping_add(k as u16),
                    _ => service_port,
                };
                let ep = Endpoints {
                    src_ip: pool_ip("172.16", attacker_base + a),
                    dst_ip: pool_ip("172.31", victim_base + v),
                    src_port: ephemeral_port(rng),
                    dst_port,
                };
                let t = start + flow_idx as f64 * burst_gap;
                records.push(make_record(
                    &shape,
                    ep,
                    t.min(WINDOW_SPAN - 1e-3),
                    label,
                    &cols,
                    feature_count,
                    rng,
                ));
                flow_idx += 1;
            }
        }
    }
    Ok(records)
}

fn benign_endpoints<R: Rng>(clients: usize, servers: usize, rng: &mut R) -> Endpoints {
    // client-to-server traffic: servers accumulate a diverse flow mix
    Endpoints {
        src_ip: pool_ip("192.168", rng.random_range(0..clients.max(1))),
        dst_ip: pool_ip("10.10", rng.random_range(0..servers.max(1))),
        src_port: ephemeral_port(rng),
        dst_port: *[80u16, 443, 53, 8080, 22]
            .get(rng.random_range(0..5))
            .unwrap(),
    }
}

/// Per-window class counts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WindowInventory {
    pub window_id: usize,
    pub class_counts: BTreeMap<String, usize>,
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    /// Windows in timestamp order; every window holds exactly
    /// `flows_per_window` records sorted by timestamp.
    pub windows: Vec<Vec<RawFlowRecord>>,
    pub inventory: Vec<WindowInventory>,
}

impl SyntheticDataset {
    pub fn all_records(&self) -> Vec<RawFlowRecord> {
        self.windows.iter().flatten().cloned().collect()
    }
}

/// Generate `window_count` windows of exactly `flows_per_window` flows.
///
/// Each window draws one spec from the weighted mix. A non-benign draw
/// places one attack instance in the window; benign background fills the
/// remainder, sampled across the mix's benign specs by weight. Output is a
/// pure function of (mix, counts, seed).
pub fn generate_dataset<R: Rng>(
    mix: &[(PatternSpec, f64)],
    window_count: usize,
    flows_per_window: usize,
    rng: &mut R,
) -> Result<SyntheticDataset> {
    if mix.is_empty() {
        return Err(Error::PatternSpec("mix is empty".into()));
    }
    if mix.iter().any(|(_, w)| !(*w > 0.0)) {
        return Err(Error::PatternSpec("mix weights must be positive".into()));
    }
    if !mix.iter().any(|(s, _)| s.kind == PatternKind::Benign) {
        return Err(Error::PatternSpec("mix needs at least one Benign spec".into()));
    }
    for (spec, _) in mix {
        spec.validate()?;
        if spec.kind != PatternKind::Benign && spec.flow_count() > flows_per_window {
            return Err(Error::PatternSpec(format!(
                "pattern {:?} needs {} flows but windows hold {}",
                spec.kind,
                spec.flow_count(),
                flows_per_window
            )));
        }
    }

    let schema = FeatureSchema::canonical();
    let total_weight: f64 = mix.iter().map(|(_, w)| w).sum();
    let benign: Vec<&(PatternSpec, f64)> = mix
        .iter()
        .filter(|(s, _)| s.kind == PatternKind::Benign)
        .collect();
    let benign_weight: f64 = benign.iter().map(|(_, w)| w).sum();

    let mut windows = Vec::with_capacity(window_count);
    let mut inventory = Vec::with_capacity(window_count);
    for window_id in 0..window_count {
        // categorical draw over the mix
        let mut pick = rng.random_range(0.0..total_weight);
        let mut chosen = &mix[0].0;
        for (spec, w) in mix {
            if pick < *w {
                chosen = spec;
                break;
            }
            pick -= w;
        }

        let mut records = if chosen.kind == PatternKind::Benign {
            Vec::new()
        } else {
            generate_pattern(chosen, &schema, rng)?
        };
        while records.len() < flows_per_window {
            // weighted choice among the benign specs
            let mut pick = rng.random_range(0.0..benign_weight);
            let mut benign_spec = &benign[0].0;
            for (spec, w) in &benign {
                if pick < *w {
                    benign_spec = spec;
                    break;
                }
                pick -= w;
            }
            let shape = benign_shape(&benign_spec.profile, rng);
            let ep = benign_endpoints(benign_spec.attacker_count, benign_spec.victim_count, rng);
            let t = rng.random_range(0.0..WINDOW_SPAN);
            records.push(make_record(
                &shape,
                ep,
                t,
                PatternKind::Benign.label(),
                &ResolvedColumns::resolve(&schema)?,
                schema.numeric_count(),
                rng,
            ));
        }

        let offset = window_id as f64 * WINDOW_SPAN;
        for r in records.iter_mut() {
            r.timestamp += offset;
        }
        records.sort_by(|a, b| a.timestamp.partial_cmp(&b.timestamp).expect("finite timestamps"));

        let mut class_counts: BTreeMap<String, usize> = BTreeMap::new();
        for r in &records {
            *class_counts.entry(r.label.clone()).or_insert(0) += 1;
        }
        inventory.push(WindowInventory {
            window_id,
            class_counts,
        });
        windows.push(records);
    }
    Ok(SyntheticDataset { windows, inventory })
}

/// The default desk-scale mix: two size variants per attack pattern plus a
/// benign blend with mimic subpopulations that match each attack's feature
/// box and wide-location variants of the same signatures. Flow-level models
/// are left with packet size and timing location as their only usable
/// attack cue inside each box; the graph structure is what actually
/// separates attacks from their benign mimics.
pub fn default_mix() -> Vec<(PatternSpec, f64)> {
    vec![
        (PatternSpec::benign(FeatureProfile::benign_diverse()), 0.22),
        (PatternSpec::benign(FeatureProfile::benign_probe_one_sided()), 0.035),
        (PatternSpec::benign(FeatureProfile::benign_probe_two_sided()), 0.03),
        (PatternSpec::benign(FeatureProfile::benign_session_like()), 0.035),
        (PatternSpec::benign(FeatureProfile::benign_burst_like()), 0.03),
        (PatternSpec::benign(FeatureProfile::benign_wide_probe_one_sided()), 0.015),
        (PatternSpec::benign(FeatureProfile::benign_wide_probe_two_sided()), 0.015),
        (PatternSpec::benign(FeatureProfile::benign_wide_session_like()), 0.015),
        (PatternSpec::benign(FeatureProfile::benign_wide_burst_like()), 0.015),
        (PatternSpec::ddos(35), 0.075),
        (PatternSpec::ddos(55), 0.075),
        (PatternSpec::port_scan(45), 0.075),
        (PatternSpec::port_scan(70), 0.075),
        (PatternSpec::network_scan(30), 0.075),
        (PatternSpec::network_scan(50), 0.075),
        (PatternSpec::brute_force(25), 0.075),
        (PatternSpec::brute_force(40), 0.075),
    ]
}
