//! Host-connection graphs.
//!
//! Every distinct host (keyed by IP) becomes a node, every flow becomes a
//! node, and each flow carries two typed undirected edges: source host to
//! flow, and flow to destination host. IPs key the topology only; they never
//! reach feature vectors. Canonical node order is hosts by first appearance,
//! then flows in input order.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::record::RawFlowRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    SrcToFlow,
    FlowToDst,
}

/// One flow node: its model feature vector, class index, and a back
/// reference into the window's record list.
#[derive(Clone, Debug)]
pub struct FlowNode {
    pub features: Vec<f64>,
    pub label: usize,
    pub record: usize,
}

/// Typed edge between a host node and a flow node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraphEdge {
    pub host: usize,
    pub flow: usize,
    pub kind: EdgeKind,
}

#[derive(Clone, Debug)]
pub struct HostConnectionGraph {
    /// Host identifiers in first-appearance order; topology keys only.
    pub hosts: Vec<String>,
    pub flows: Vec<FlowNode>,
    /// Exactly two edges per flow, in flow order: SrcToFlow then FlowToDst.
    pub edges: Vec<GraphEdge>,
}

impl HostConnectionGraph {
    pub fn host_count(&self) -> usize {
        self.hosts.len()
    }

    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    /// Source and destination host index per flow.
    pub fn flow_endpoints(&self) -> Vec<(usize, usize)> {
        let mut out = vec![(0usize, 0usize); self.flows.len()];
        for e in &self.edges {
            match e.kind {
                EdgeKind::SrcToFlow => out[e.flow].0 = e.host,
                EdgeKind::FlowToDst => out[e.flow].1 = e.host,
            }
        }
        out
    }
}

/// Build the graph for one flow window.
///
/// `features[i]` and `labels[i]` belong to `records[i]`. A flow whose source
/// and destination coincide is allowed and yields one host with both edge
/// types to the same flow node.
pub fn build_graph(
    records: &[RawFlowRecord],
    features: &[Vec<f64>],
    labels: &[usize],
) -> Result<HostConnectionGraph> {
    if records.is_empty() {
        return Err(Error::EmptyInput("build_graph needs at least one flow"));
    }
    if records.len() != features.len() || records.len() != labels.len() {
        return Err(Error::Usage(format!(
            "build_graph arity mismatch: {} records, {} feature vectors, {} labels",
            records.len(),
            features.len(),
            labels.len()
        )));
    }
    let mut hosts: Vec<String> = Vec::new();
    // keys borrow from the input slice, which outlives this function body
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut flows = Vec::with_capacity(records.len());
    let mut edges = Vec::with_capacity(records.len() * 2);
    for (i, record) in records.iter().enumerate() {
        let src = *index.entry(record.src_ip.as_str()).or_insert_with(|| {
            hosts.push(record.src_ip.clone());
            hosts.len() - 1
        });
        let dst = *index.entry(record.dst_ip.as_str()).or_insert_with(|| {
            hosts.push(record.dst_ip.clone());
            hosts.len() - 1
        });
        flows.push(FlowNode {
            features: features[i].clone(),
            label: labels[i],
            record: i,
        });
        edges.push(GraphEdge {
            host: src,
            flow: i,
            kind: EdgeKind::SrcToFlow,
        });
        edges.push(GraphEdge {
            host: dst,
            flow: i,
            kind: EdgeKind::FlowToDst,
        });
    }
    Ok(HostConnectionGraph { hosts, flows, edges })
}

/// One windowed graph, the unit of batching and train/validation splits.
#[derive(Clone, Debug)]
pub struct GraphSample {
    pub graph: HostConnectionGraph,
    pub window_id: usize,
    pub benign_only: bool,
}

impl GraphSample {
    pub fn new(graph: HostConnectionGraph, window_id: usize) -> Self {
        let benign_only = graph
            .flows
            .iter()
            .all(|f| f.label == crate::record::BENIGN_CLASS);
        GraphSample {
            graph,
            window_id,
            benign_only,
        }
    }
}

/// Chunk a timestamp-ordered record stream into consecutive fixed-size
/// windows; the final partial window is kept.
pub fn window_flows<T: Clone>(records: &[T], window_size: usize) -> Vec<Vec<T>> {
    assert!(window_size >= 1, "window_size must be >= 1");
    records.chunks(window_size).map(|c| c.to_vec()).collect()
}

/// Drop each benign-only sample independently with probability `drop_rate`.
/// Samples containing any attack flow are always kept. Training partition
/// only.
pub fn downsample_benign<R: Rng>(
    samples: Vec<GraphSample>,
    drop_rate: f64,
    rng: &mut R,
) -> Vec<GraphSample> {
    assert!(
        (0.0..1.0).contains(&drop_rate),
        "drop_rate must be in [0, 1)"
    );
    samples
        .into_iter()
        .filter(|s| {
            if s.benign_only {
                // consume one draw per benign sample, keep with 1 - drop_rate
                !rng.random_bool(drop_rate)
            } else {
                true
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub host_count: usize,
    pub flow_count: usize,
    pub edge_count: usize,
    pub max_host_degree: usize,
    pub component_count: usize,
}

pub fn graph_stats(graph: &HostConnectionGraph) -> GraphStats {
    let mut degree = vec![0usize; graph.hosts.len()];
    for e in &graph.edges {
        degree[e.host] += 1;
    }
    // union-find over host nodes + flow nodes
    let n = graph.hosts.len() + graph.flows.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in &graph.edges {
        let a = find(&mut parent, e.host);
        let b = find(&mut parent, graph.hosts.len() + e.flow);
        if a != b {
            parent[a] = b;
        }
    }
    let mut roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    roots.sort_unstable();
    roots.dedup();
    GraphStats {
        host_count: graph.hosts.len(),
        flow_count: graph.flows.len(),
        edge_count: graph.edges.len(),
        max_host_degree: degree.iter().copied().max().unwrap_or(0),
        component_count: roots.len(),
    }
}

/// JSON dump of one graph: node lists, typed edge list, canonical ordering.
/// Node ids number hosts first (0..H) then flows (H..H+F).
#[derive(Serialize, Deserialize)]
pub struct GraphDump {
    pub hosts: Vec<String>,
    pub flows: Vec<FlowDump>,
    pub edges: Vec<(usize, usize, EdgeKind)>,
}

#[derive(Serialize, Deserialize)]
pub struct FlowDump {
    pub node_id: usize,
    pub label: usize,
    pub features: Vec<f64>,
}

pub fn dump_graph(graph: &HostConnectionGraph) -> GraphDump {
    let base = graph.hosts.len();
    GraphDump {
        hosts: graph.hosts.clone(),
        flows: graph
            .flows
            .iter()
            .enumerate()
            .map(|(i, f)| FlowDump {
                node_id: base + i,
                label: f.label,
                features: f.features.clone(),
            })
            .collect(),
        edges: graph
            .edges
            .iter()
            .map(|e| match e.kind {
                EdgeKind::SrcToFlow => (e.host, base + e.flow, e.kind),
                EdgeKind::FlowToDst => (base + e.flow, e.host, e.kind),
            })
            .collect(),
    }
}
