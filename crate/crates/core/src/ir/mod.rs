//! Segment-structured IR whose operations act on one vertex or one edge.
//!
//! Whole-graph scatter and gather become paired send/recv operations on
//! numbered channels; the remaining dataflow splits into disconnected
//! segments labelled vertex or edge.

mod interp;
mod lower;
mod text;
mod verify;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BinaryOp, Reduce, UnaryOp, WeightShape};

pub use interp::interpret_ir;
pub use lower::lower_to_ir;
pub use text::{dump_ir, parse_ir};
pub use verify::verify_ir;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SegLabel {
    Vertex,
    Edge,
}

impl SegLabel {
    pub fn short(self) -> &'static str {
        match self {
            SegLabel::Vertex => "v",
            SegLabel::Edge => "e",
        }
    }

    pub fn marker(self) -> &'static str {
        match self {
            SegLabel::Vertex => "vertex",
            SegLabel::Edge => "edge",
        }
    }
}

/// Which replica a specialized vertex segment is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Source,
    Destination,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    SrcScatter,
    DstScatter,
    GatherSum,
    GatherMax,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::SrcScatter => "src_scatter",
            ChannelKind::DstScatter => "dst_scatter",
            ChannelKind::GatherSum => "gather_sum",
            ChannelKind::GatherMax => "gather_max",
        }
    }

    /// Label of the sending and receiving segments.
    pub fn endpoints(self) -> (SegLabel, SegLabel) {
        match self {
            ChannelKind::SrcScatter | ChannelKind::DstScatter => (SegLabel::Vertex, SegLabel::Edge),
            ChannelKind::GatherSum | ChannelKind::GatherMax => (SegLabel::Edge, SegLabel::Vertex),
        }
    }

    pub fn reduce(self) -> Option<Reduce> {
        match self {
            ChannelKind::GatherSum => Some(Reduce::Sum),
            ChannelKind::GatherMax => Some(Reduce::Max),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Channel {
    pub id: usize,
    pub kind: ChannelKind,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IrOp {
    /// Entry marker reading a named vertex or edge tensor.
    Input { tensor: String },
    /// Exit marker producing a named vertex tensor.
    Output { tensor: String },
    /// One row times a weight matrix.
    Mv { weight: String },
    /// One edge row times the weight slab selected by its edge type.
    BmmRow { weight: String },
    Unary(UnaryOp),
    Binary(BinaryOp),
    SendOutEdge(usize),
    RecvSrc(usize),
    SendInEdge(usize),
    RecvDst(usize),
    SendDstSum(usize),
    SendDstMax(usize),
    RecvInEdge(usize),
}

impl IrOp {
    pub fn name(&self) -> &'static str {
        match self {
            IrOp::Input { .. } => "input",
            IrOp::Output { .. } => "output",
            IrOp::Mv { .. } => "mv",
            IrOp::BmmRow { .. } => "bmm_row",
            IrOp::Unary(UnaryOp::Exp) => "exp",
            IrOp::Unary(UnaryOp::Relu) => "relu",
            IrOp::Unary(UnaryOp::Sigmoid) => "sigmoid",
            IrOp::Binary(BinaryOp::Add) => "add",
            IrOp::Binary(BinaryOp::Sub) => "sub",
            IrOp::Binary(BinaryOp::Mul) => "mul",
            IrOp::Binary(BinaryOp::Div) => "div",
            IrOp::Binary(BinaryOp::Max) => "max",
            IrOp::SendOutEdge(_) => "sendOutEdge",
            IrOp::RecvSrc(_) => "recvSrc",
            IrOp::SendInEdge(_) => "sendInEdge",
            IrOp::RecvDst(_) => "recvDst",
            IrOp::SendDstSum(_) => "sendDstSum",
            IrOp::SendDstMax(_) => "sendDstMax",
            IrOp::RecvInEdge(_) => "recvInEdge",
        }
    }

    pub fn channel(&self) -> Option<usize> {
        match *self {
            IrOp::SendOutEdge(c)
            | IrOp::RecvSrc(c)
            | IrOp::SendInEdge(c)
            | IrOp::RecvDst(c)
            | IrOp::SendDstSum(c)
            | IrOp::SendDstMax(c)
            | IrOp::RecvInEdge(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_send(&self) -> bool {
        matches!(
            self,
            IrOp::SendOutEdge(_) | IrOp::SendInEdge(_) | IrOp::SendDstSum(_) | IrOp::SendDstMax(_)
        )
    }

    pub fn is_recv(&self) -> bool {
        matches!(self, IrOp::RecvSrc(_) | IrOp::RecvDst(_) | IrOp::RecvInEdge(_))
    }

    /// Computational (non-marker, non-communication) op.
    pub fn is_compute(&self) -> bool {
        matches!(
            self,
            IrOp::Mv { .. } | IrOp::BmmRow { .. } | IrOp::Unary(_) | IrOp::Binary(_)
        )
    }

    pub fn arity(&self) -> usize {
        match self {
            IrOp::Input { .. } | IrOp::RecvSrc(_) | IrOp::RecvDst(_) | IrOp::RecvInEdge(_) => 0,
            IrOp::Binary(_) => 2,
            _ => 1,
        }
    }

    /// Send op and recv op implementing a channel kind.
    pub fn pair(kind: ChannelKind, ch: usize) -> (IrOp, IrOp) {
        match kind {
            ChannelKind::SrcScatter => (IrOp::SendOutEdge(ch), IrOp::RecvSrc(ch)),
            ChannelKind::DstScatter => (IrOp::SendInEdge(ch), IrOp::RecvDst(ch)),
            ChannelKind::GatherSum => (IrOp::SendDstSum(ch), IrOp::RecvInEdge(ch)),
            ChannelKind::GatherMax => (IrOp::SendDstMax(ch), IrOp::RecvInEdge(ch)),
        }
    }

    /// Segment label an op is legal in, if restricted.
    pub fn required_label(&self) -> Option<SegLabel> {
        match self {
            IrOp::SendOutEdge(_) | IrOp::SendInEdge(_) | IrOp::RecvInEdge(_) | IrOp::Output { .. } => {
                Some(SegLabel::Vertex)
            }
            IrOp::RecvSrc(_)
            | IrOp::RecvDst(_)
            | IrOp::SendDstSum(_)
            | IrOp::SendDstMax(_)
            | IrOp::BmmRow { .. } => Some(SegLabel::Edge),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrNode {
    pub name: String,
    pub op: IrOp,
    /// Indices of producer nodes within the same segment.
    pub inputs: Vec<usize>,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub label: SegLabel,
    pub index: usize,
    pub role: Option<Role>,
    pub nodes: Vec<IrNode>,
}

impl Segment {
    pub fn title(&self) -> String {
        let role = match self.role {
            Some(Role::Source) => ".src",
            Some(Role::Destination) => ".dst",
            None => "",
        };
        format!("{}.{}{}", self.label.short(), self.index, role)
    }

    /// Consumers of every node.
    pub fn users(&self) -> Vec<Vec<usize>> {
        let mut u = vec![Vec::new(); self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            for &p in &n.inputs {
                u[p].push(i);
            }
        }
        u
    }

    /// Local topological order, or `None` if the segment has a cycle.
    pub fn topo_order(&self) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let mut indeg: Vec<usize> = self.nodes.iter().map(|x| x.inputs.len()).collect();
        let users = self.users();
        let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &u in &users[i] {
                indeg[u] -= 1;
                if indeg[u] == 0 {
                    ready.insert(u);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Unique node name derived from `base`.
    pub fn fresh_name(&self, base: &str) -> String {
        if !self.nodes.iter().any(|n| n.name == base) {
            return base.to_string();
        }
        (1..)
            .map(|i| format!("{base}.{i}"))
            .find(|c| !self.nodes.iter().any(|n| &n.name == c))
            .expect("unbounded")
    }
}

/// Location of a node: `(segment, node)`.
pub type NodeRef = (usize, usize);

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrProgram {
    pub segments: Vec<Segment>,
    pub channels: Vec<Channel>,
    pub weights: BTreeMap<String, WeightShape>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IrError {
    #[error("segment mixes vertex-only and edge-only operations")]
    ContradictoryLabels,
    #[error("missing weight binding `{0}`")]
    MissingWeight(String),
    #[error("missing input tensor: {0}")]
    MissingInput(String),
    #[error("program has no output")]
    NoOutput,
    #[error("ill-formed program: {0}")]
    Malformed(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl IrProgram {
    pub fn channel(&self, id: usize) -> Option<&Channel> {
        self.channels.iter().find(|c| c.id == id)
    }

    pub fn node(&self, r: NodeRef) -> &IrNode {
        &self.segments[r.0].nodes[r.1]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeRef, &IrNode)> {
        self.segments
            .iter()
            .enumerate()
            .flat_map(|(s, seg)| seg.nodes.iter().enumerate().map(move |(i, n)| ((s, i), n)))
    }

    pub fn find_send(&self, ch: usize) -> Option<NodeRef> {
        self.nodes()
            .find(|(_, n)| n.op.is_send() && n.op.channel() == Some(ch))
            .map(|(r, _)| r)
    }

    pub fn find_recv(&self, ch: usize) -> Option<NodeRef> {
        self.nodes()
            .find(|(_, n)| n.op.is_recv() && n.op.channel() == Some(ch))
            .map(|(r, _)| r)
    }

    pub fn next_channel_id(&self) -> usize {
        self.channels.iter().map(|c| c.id + 1).max().unwrap_or(0)
    }

    /// Count of op kinds per segment label, e.g. `("e", "mv") -> 2`.
    pub fn op_counts(&self) -> BTreeMap<(String, String), usize> {
        let mut m = BTreeMap::new();
        for s in &self.segments {
            for n in &s.nodes {
                *m.entry((s.label.short().to_string(), n.op.name().to_string()))
                    .or_insert(0) += 1;
            }
        }
        m
    }

    /// Computational ops in edge segments.
    pub fn edge_compute_ops(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| s.label == SegLabel::Edge)
            .flat_map(|s| &s.nodes)
            .filter(|n| n.op.is_compute())
            .count()
    }

    /// Single-item executions of computational ops over a graph.
    pub fn item_executions(&self, num_vertices: usize, num_edges: usize) -> usize {
        self.segments
            .iter()
            .map(|s| {
                let per = match s.label {
                    SegLabel::Vertex => num_vertices,
                    SegLabel::Edge => num_edges,
                };
                s.nodes.iter().filter(|n| n.op.is_compute()).count() * per
            })
            .sum()
    }

    /// Renumbers segment indices per label in list order.
    pub fn renumber(&mut self) {
        let mut next: BTreeMap<SegLabel, usize> = BTreeMap::new();
        for s in &mut self.segments {
            let c = next.entry(s.label).or_insert(0);
            s.index = *c;
            *c += 1;
        }
    }
}

impl fmt::Display for IrProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&dump_ir(self))
    }
}
