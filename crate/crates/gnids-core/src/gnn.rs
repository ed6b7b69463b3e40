//! Heterogeneous message-passing GNN over host-connection graphs.
//!
//! Flow hidden states start as the zero-padded feature vector, host states
//! start as all ones. Each iteration sends a message across every edge in
//! both directions; the message function is chosen by edge type (`msg_sf`
//! for source-to-flow edges, `msg_fd` for flow-to-destination edges) with
//! the receiver's state first in the concatenation. Messages are
//! mean-aggregated per receiving node jointly across edge types, and states
//! update through per-node-type GRUs. After the final iteration a 3-layer
//! readout maps each flow state to class logits.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::HostConnectionGraph;
use crate::nn::{dense, gru_cell, Activation, GruIds, ParameterStore, Tape, Tensor, ValueId};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GnnConfig {
    /// Hidden state width n; must fit the feature vector (n >= k+1).
    pub hidden_dim: usize,
    /// Message-passing iterations T.
    pub iterations: usize,
    /// Hidden width of the two message MLPs.
    pub msg_hidden: usize,
    /// Hidden widths of the readout MLP.
    pub readout_hidden: (usize, usize),
    pub class_count: usize,
    /// Flow feature vector length k+1.
    pub feature_count: usize,
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.hidden_dim < self.feature_count {
            problems.push(format!(
                "hidden_dim {} cannot hold the {}-feature flow vector",
                self.hidden_dim, self.feature_count
            ));
        }
        for (name, v) in [
            ("hidden_dim", self.hidden_dim),
            ("iterations", self.iterations),
            ("msg_hidden", self.msg_hidden),
            ("readout_hidden.0", self.readout_hidden.0),
            ("readout_hidden.1", self.readout_hidden.1),
            ("class_count", self.class_count),
            ("feature_count", self.feature_count),
        ] {
            if v < 1 {
                problems.push(format!("{name} must be >= 1"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

#[derive(Clone, Copy)]
struct MlpIdx {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Clone, Copy)]
struct GruIdx {
    wz: usize,
    uz: usize,
    bz: usize,
    wr: usize,
    ur: usize,
    br: usize,
    wc: usize,
    uc: usize,
    bc: usize,
}

#[derive(Clone, Copy)]
struct ReadoutIdx {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
}

/// Entry indices of each function group inside the canonical store order.
#[derive(Clone, Copy)]
struct Layout {
    msg_sf: MlpIdx,
    msg_fd: MlpIdx,
    upd_h: GruIdx,
    upd_f: GruIdx,
    readout: ReadoutIdx,
}

impl Layout {
    fn new() -> Self {
        let mut next = 0usize;
        let mut take = || {
            next += 1;
            next - 1
        };
        let mlp = |take: &mut dyn FnMut() -> usize| MlpIdx {
            w1: take(),
            b1: take(),
            w2: take(),
            b2: take(),
        };
        let gru = |take: &mut dyn FnMut() -> usize| GruIdx {
            wz: take(),
            uz: take(),
            bz: take(),
            wr: take(),
            ur: take(),
            br: take(),
            wc: take(),
            uc: take(),
            bc: take(),
        };
        let msg_sf = mlp(&mut take);
        let msg_fd = mlp(&mut take);
        let upd_h = gru(&mut take);
        let upd_f = gru(&mut take);
        let readout = ReadoutIdx {
            w1: take(),
            b1: take(),
            w2: take(),
            b2: take(),
            w3: take(),
            b3: take(),
        };
        Layout {
            msg_sf,
            msg_fd,
            upd_h,
            upd_f,
            readout,
        }
    }
}

/// All learnable weights: two message MLPs, two GRU cells, one readout MLP.
#[derive(Clone, Debug)]
pub struct GnnParameters {
    pub config: GnnConfig,
    pub store: ParameterStore,
}

fn glorot<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.random_range(-limit..=limit))
        .collect();
    Tensor::from_vec(&[rows, cols], data).expect("shape by construction")
}

// Small nonzero bias init keeps ReLU preactivations away from exact zero,
// which finite-difference gradient checks are sensitive to.
fn bias_init<R: Rng>(len: usize, rng: &mut R) -> Tensor {
    let data: Vec<f64> = (0..len).map(|_| rng.random_range(-0.25..=0.25)).collect();
    Tensor::from_vec(&[len], data).expect("shape by construction")
}

fn push_mlp(
    store: &mut ParameterStore,
    group: &str,
    dims: (usize, usize, usize),
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let (input, hidden, output) = dims;
    store.push(format!("{group}.w1"), glorot(input, hidden, rng))?;
    store.push(format!("{group}.b1"), bias_init(hidden, rng))?;
    store.push(format!("{group}.w2"), glorot(hidden, output, rng))?;
    store.push(format!("{group}.b2"), bias_init(output, rng))?;
    Ok(())
}

fn push_gru(store: &mut ParameterStore, group: &str, n: usize, rng: &mut ChaCha8Rng) -> Result<()> {
    for gate in ["z", "r", "c"] {
        store.push(format!("{group}.w{gate}"), glorot(n, n, rng))?;
        store.push(format!("{group}.u{gate}"), glorot(n, n, rng))?;
        store.push(format!("{group}.b{gate}"), bias_init(n, rng))?;
    }
    Ok(())
}

impl GnnParameters {
    /// Fresh Glorot-initialized parameters, deterministic in the seed.
    pub fn init(config: GnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = config.hidden_dim;
        let mut store = ParameterStore::new();
        push_mlp(&mut store, "msg_sf", (2 * n, config.msg_hidden, n), &mut rng)?;
        push_mlp(&mut store, "msg_fd", (2 * n, config.msg_hidden, n), &mut rng)?;
        push_gru(&mut store, "upd_h", n, &mut rng)?;
        push_gru(&mut store, "upd_f", n, &mut rng)?;
        let (r1, r2) = config.readout_hidden;
        store.push("readout.w1", glorot(n, r1, &mut rng))?;
        store.push("readout.b1", bias_init(r1, &mut rng))?;
        store.push("readout.w2", glorot(r1, r2, &mut rng))?;
        store.push("readout.b2", bias_init(r2, &mut rng))?;
        store.push("readout.w3", glorot(r2, config.class_count, &mut rng))?;
        store.push("readout.b3", bias_init(config.class_count, &mut rng))?;
        Ok(GnnParameters { config, store })
    }

    /// Check that store layout and shapes match the config.
    pub fn validate(&self) -> Result<()> {
        let reference = GnnParameters::init(self.config, 0)?;
        if !self.store.layout_matches(&reference.store) {
            return Err(Error::Usage(
                "parameter store does not match the GNN configuration".into(),
            ));
        }
        Ok(())
    }
}

/// Per-node hidden states at one message-passing iteration, indexed by
/// canonical node order (hosts first, then flows).
#[derive(Clone, Debug)]
pub struct HiddenStates {
    pub hosts: Tensor,
    pub flows: Tensor,
    pub t: usize,
}

/// Edge topology in tape-friendly index form.
pub struct GraphTopo {
    /// Source host index per flow.
    pub src: Arc<Vec<usize>>,
    /// Destination host index per flow.
    pub dst: Arc<Vec<usize>>,
    /// Receiver host per host-side message: the SrcToFlow block then the
    /// FlowToDst block, each in flow order.
    pub host_segments: Arc<Vec<usize>>,
    pub host_count: usize,
}

impl GraphTopo {
    pub fn new(graph: &HostConnectionGraph) -> Self {
        let endpoints = graph.flow_endpoints();
        let src: Vec<usize> = endpoints.iter().map(|&(s, _)| s).collect();
        let dst: Vec<usize> = endpoints.iter().map(|&(_, d)| d).collect();
        let mut host_segments = Vec::with_capacity(src.len() * 2);
        host_segments.extend_from_slice(&src);
        host_segments.extend_from_slice(&dst);
        GraphTopo {
            src: Arc::new(src),
            dst: Arc::new(dst),
            host_segments: Arc::new(host_segments),
            host_count: graph.host_count(),
        }
    }
}

/// Tape ids of all parameter tensors, resolved through the layout.
pub struct GnnIds {
    ids: Vec<ValueId>,
    layout: Layout,
}

impl GnnIds {
    pub fn register(params: &GnnParameters, tape: &mut Tape) -> Self {
        GnnIds {
            ids: params.store.register_all(tape),
            layout: Layout::new(),
        }
    }

    /// Tape ids in canonical store order.
    pub fn param_ids(&self) -> &[ValueId] {
        &self.ids
    }

    fn gru(&self, idx: GruIdx) -> GruIds {
        GruIds {
            wz: self.ids[idx.wz],
            uz: self.ids[idx.uz],
            bz: self.ids[idx.bz],
            wr: self.ids[idx.wr],
            ur: self.ids[idx.ur],
            br: self.ids[idx.br],
            wc: self.ids[idx.wc],
            uc: self.ids[idx.uc],
            bc: self.ids[idx.bc],
        }
    }
}

/// Initial hidden states: flow i gets its feature vector zero-padded to
/// `hidden_dim`; every host gets the all-ones vector.
pub fn init_hidden_states(
    graph: &HostConnectionGraph,
    config: &GnnConfig,
) -> Result<HiddenStates> {
    let n = config.hidden_dim;
    for flow in &graph.flows {
        if flow.features.len() != config.feature_count {
            return Err(Error::Config(vec![format!(
                "flow feature vector has length {}, config expects {}",
                flow.features.len(),
                config.feature_count
            )]));
        }
        if flow.features.len() > n {
            return Err(Error::Config(vec![format!(
                "feature vector length {} exceeds hidden_dim {}",
                flow.features.len(),
                n
            )]));
        }
    }
    let mut flows = Tensor::zeros(&[graph.flow_count(), n]);
    for (i, flow) in graph.flows.iter().enumerate() {
        flows.data_mut()[i * n..i * n + flow.features.len()].copy_from_slice(&flow.features);
    }
    let hosts = Tensor::full(&[graph.host_count(), n], 1.0);
    Ok(HiddenStates { hosts, flows, t: 0 })
}

fn mlp2(tape: &mut Tape, input: ValueId, ids: &GnnIds, idx: MlpIdx) -> Result<ValueId> {
    let h = dense(tape, input, ids.ids[idx.w1], ids.ids[idx.b1], Activation::Relu)?;
    dense(tape, h, ids.ids[idx.w2], ids.ids[idx.b2], Activation::Relu)
}

/// One message-passing iteration on an existing tape.
pub fn message_pass_on_tape(
    tape: &mut Tape,
    h_host: ValueId,
    h_flow: ValueId,
    topo: &GraphTopo,
    ids: &GnnIds,
) -> Result<(ValueId, ValueId)> {
    let host_src = tape.gather_rows(h_host, topo.src.clone())?;
    let host_dst = tape.gather_rows(h_host, topo.dst.clone())?;

    // messages received by flows, one per incident edge; receiver state first
    let in_sf = tape.concat_cols(h_flow, host_src)?;
    let m_sf = mlp2(tape, in_sf, ids, ids.layout.msg_sf)?;
    let in_fd = tape.concat_cols(h_flow, host_dst)?;
    let m_fd = mlp2(tape, in_fd, ids, ids.layout.msg_fd)?;
    // every flow has exactly its two endpoint edges, so the mean is fixed
    let sum = tape.add(m_sf, m_fd)?;
    let a_flow = tape.scale(sum, 0.5)?;

    // messages received by hosts over the same edges, typed the same way
    let in_sf_h = tape.concat_cols(host_src, h_flow)?;
    let m_sf_h = mlp2(tape, in_sf_h, ids, ids.layout.msg_sf)?;
    let in_fd_h = tape.concat_cols(host_dst, h_flow)?;
    let m_fd_h = mlp2(tape, in_fd_h, ids, ids.layout.msg_fd)?;
    let host_msgs = tape.concat_rows(m_sf_h, m_fd_h)?;
    let a_host = tape.segment_mean(host_msgs, topo.host_segments.clone(), topo.host_count)?;

    let new_flow = gru_cell(tape, h_flow, a_flow, &ids.gru(ids.layout.upd_f))?;
    let new_host = gru_cell(tape, h_host, a_host, &ids.gru(ids.layout.upd_h))?;
    Ok((new_host, new_flow))
}

/// One message-passing iteration from materialized states.
///
/// Usage error if the states already reached the configured iteration count.
pub fn message_pass(
    states: &HiddenStates,
    graph: &HostConnectionGraph,
    params: &GnnParameters,
    config: &GnnConfig,
) -> Result<HiddenStates> {
    if states.t >= config.iterations {
        return Err(Error::Usage(format!(
            "message_pass called at iteration {} but T = {}",
            states.t, config.iterations
        )));
    }
    let topo = GraphTopo::new(graph);
    let mut tape = Tape::new();
    let ids = GnnIds::register(params, &mut tape);
    let h_host = tape.constant(states.hosts.clone());
    let h_flow = tape.constant(states.flows.clone());
    let (new_host, new_flow) = message_pass_on_tape(&mut tape, h_host, h_flow, &topo, &ids)?;
    Ok(HiddenStates {
        hosts: tape.value(new_host).clone(),
        flows: tape.value(new_flow).clone(),
        t: states.t + 1,
    })
}

/// Full forward pass on an existing tape: init, T iterations, readout over
/// flow states. Returns per-flow logits `[flow_count x class_count]`.
pub fn forward_on_tape(
    tape: &mut Tape,
    graph: &HostConnectionGraph,
    topo: &GraphTopo,
    params: &GnnParameters,
    ids: &GnnIds,
) -> Result<ValueId> {
    let init = init_hidden_states(graph, &params.config)?;
    let mut h_host = tape.constant(init.hosts);
    let mut h_flow = tape.constant(init.flows);
    for _ in 0..params.config.iterations {
        let (nh, nf) = message_pass_on_tape(tape, h_host, h_flow, topo, ids)?;
        h_host = nh;
        h_flow = nf;
    }
    let r = ids.layout.readout;
    let h1 = dense(tape, h_flow, ids.ids[r.w1], ids.ids[r.b1], Activation::Relu)?;
    let h2 = dense(tape, h1, ids.ids[r.w2], ids.ids[r.b2], Activation::Relu)?;
    dense(tape, h2, ids.ids[r.w3], ids.ids[r.b3], Activation::None)
}

/// Per-flow logits; softmax is deferred to the loss and to [`predict`].
pub fn forward(graph: &HostConnectionGraph, params: &GnnParameters) -> Result<Tensor> {
    let topo = GraphTopo::new(graph);
    let mut tape = Tape::new();
    let ids = GnnIds::register(params, &mut tape);
    let logits = forward_on_tape(&mut tape, graph, &topo, params, &ids)?;
    Ok(tape.value(logits).clone())
}

/// Per-flow predicted class and probability vector. Ties break to the
/// lowest class index.
pub fn predict(graph: &HostConnectionGraph, params: &GnnParameters) -> Result<Vec<(usize, Vec<f64>)>> {
    let logits = forward(graph, params)?;
    Ok((0..logits.rows())
        .map(|r| {
            let probs = crate::nn::softmax_row(logits.row(r));
            (argmax(&probs), probs)
        })
        .collect())
}

/// First index of the maximum value.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
