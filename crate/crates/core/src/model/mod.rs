//! Whole-graph GNN models: tensors over all vertices or all edges, combined
//! by scatter/gather, matrix products and element-wise operators.

mod defuse;
mod text;
mod zoo;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{WeightTensor, Weights};

pub use defuse::defuse;
pub use text::{parse_model, to_text};
pub use zoo::{build_model, ModelName};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Vertex,
    Edge,
    Weight,
    Scalar,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Vertex => "vertex",
            Domain::Edge => "edge",
            Domain::Weight => "weight",
            Domain::Scalar => "scalar",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduce {
    Sum,
    Max,
}

impl Reduce {
    /// Value of a reduction over zero elements.
    pub fn identity(self) -> f32 {
        match self {
            Reduce::Sum => 0.0,
            Reduce::Max => f32::MIN,
        }
    }

    pub fn combine(self, acc: f32, x: f32) -> f32 {
        match self {
            Reduce::Sum => acc + x,
            Reduce::Max => acc.max(x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnaryOp {
    Exp,
    Relu,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Max,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelOp {
    Input,
    Matmul,
    Bmm,
    Unary(UnaryOp),
    Binary(BinaryOp),
    ScatterSrc,
    ScatterDst,
    Gather(Reduce),
    Output,
    Fused(String),
}

/// The three primitive operation classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Primitive {
    Gop,
    Gemm,
    Elw,
}

impl ModelOp {
    /// Class of a computational node; `None` for entry/exit markers.
    pub fn primitive(&self) -> Option<Primitive> {
        match self {
            ModelOp::Input | ModelOp::Output => None,
            ModelOp::Matmul | ModelOp::Bmm => Some(Primitive::Gemm),
            ModelOp::Unary(_) | ModelOp::Binary(_) => Some(Primitive::Elw),
            ModelOp::ScatterSrc | ModelOp::ScatterDst | ModelOp::Gather(_) | ModelOp::Fused(_) => {
                Some(Primitive::Gop)
            }
        }
    }

    pub fn is_gop(&self) -> bool {
        matches!(self, ModelOp::ScatterSrc | ModelOp::ScatterDst | ModelOp::Gather(_))
    }

    /// Keyword used by the text format.
    pub fn keyword(&self) -> String {
        match self {
            ModelOp::Input => "input".into(),
            ModelOp::Matmul => "matmul".into(),
            ModelOp::Bmm => "bmm".into(),
            ModelOp::Unary(UnaryOp::Exp) => "exp".into(),
            ModelOp::Unary(UnaryOp::Relu) => "relu".into(),
            ModelOp::Unary(UnaryOp::Sigmoid) => "sigmoid".into(),
            ModelOp::Binary(BinaryOp::Add) => "add".into(),
            ModelOp::Binary(BinaryOp::Sub) => "sub".into(),
            ModelOp::Binary(BinaryOp::Mul) => "mul".into(),
            ModelOp::Binary(BinaryOp::Div) => "div".into(),
            ModelOp::Binary(BinaryOp::Max) => "max".into(),
            ModelOp::ScatterSrc => "scatter_src".into(),
            ModelOp::ScatterDst => "scatter_dst".into(),
            ModelOp::Gather(Reduce::Sum) => "gather_sum".into(),
            ModelOp::Gather(Reduce::Max) => "gather_max".into(),
            ModelOp::Output => "output".into(),
            ModelOp::Fused(tag) => format!("fused:{tag}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorInfo {
    pub domain: Domain,
    pub dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WeightShape {
    pub types: usize,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelNode {
    pub name: String,
    pub op: ModelOp,
    pub inputs: Vec<usize>,
    pub info: TensorInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightShape>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("domain-type error at `{node}`: {msg}")]
    DomainMismatch { node: String, msg: String },
    #[error("no output node")]
    NoOutput,
    #[error("more than one output node")]
    MultipleOutputs,
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown fused tag `{0}`")]
    UnknownFused(String),
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Dataflow graph of one GNN layer. Nodes are stored in topological order:
/// every input index is smaller than the consumer's index.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelGraph {
    pub nodes: Vec<ModelNode>,
}

/// A dataflow link `producer -> (consumer, input slot)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Link {
    pub producer: usize,
    pub consumer: usize,
    pub slot: usize,
}

impl ModelGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn input(&mut self, name: &str, domain: Domain, dim: usize) -> usize {
        self.push(name, ModelOp::Input, vec![], TensorInfo { domain, dim }, None)
    }

    pub fn weight(&mut self, name: &str, rows: usize, cols: usize) -> usize {
        self.typed_weight(name, 1, rows, cols)
    }

    pub fn typed_weight(&mut self, name: &str, types: usize, rows: usize, cols: usize) -> usize {
        self.push(
            name,
            ModelOp::Input,
            vec![],
            TensorInfo {
                domain: Domain::Weight,
                dim: cols,
            },
            Some(WeightShape { types, rows, cols }),
        )
    }

    /// Appends a computational node, inferring its tensor type.
    pub fn op(&mut self, name: &str, op: ModelOp, inputs: &[usize]) -> Result<usize, ModelError> {
        if inputs.iter().any(|&i| i >= self.nodes.len()) {
            return Err(ModelError::Invalid(format!("`{name}` references a later node")));
        }
        let info = self.infer(name, &op, inputs)?;
        Ok(self.push(name, op, inputs.to_vec(), info, None))
    }

    pub fn output(&mut self, name: &str, x: usize) -> Result<usize, ModelError> {
        self.op(name, ModelOp::Output, &[x])
    }

    fn push(
        &mut self,
        name: &str,
        op: ModelOp,
        inputs: Vec<usize>,
        info: TensorInfo,
        weight: Option<WeightShape>,
    ) -> usize {
        self.nodes.push(ModelNode {
            name: name.to_string(),
            op,
            inputs,
            info,
            weight,
        });
        self.nodes.len() - 1
    }

    pub fn node(&self, i: usize) -> &ModelNode {
        &self.nodes[i]
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn links(&self) -> Vec<Link> {
        let mut out = Vec::new();
        for (c, n) in self.nodes.iter().enumerate() {
            for (slot, &p) in n.inputs.iter().enumerate() {
                out.push(Link {
                    producer: p,
                    consumer: c,
                    slot,
                });
            }
        }
        out
    }

    pub fn output_node(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.op == ModelOp::Output)
    }

    /// Sum of embedding widths over all tensors of one domain.
    pub fn total_dim(&self, domain: Domain) -> usize {
        self.nodes
            .iter()
            .filter(|n| n.info.domain == domain && n.op != ModelOp::Output)
            .map(|n| n.info.dim)
            .sum()
    }

    /// Node-kind histogram keyed by text keyword.
    pub fn kind_counts(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for n in &self.nodes {
            *m.entry(n.op.keyword()).or_insert(0) += 1;
        }
        m
    }

    pub fn weight_nodes(&self) -> impl Iterator<Item = &ModelNode> {
        self.nodes.iter().filter(|n| n.weight.is_some())
    }

    fn infer(&self, name: &str, op: &ModelOp, inputs: &[usize]) -> Result<TensorInfo, ModelError> {
        let err = |msg: String| ModelError::DomainMismatch {
            node: name.to_string(),
            msg,
        };
        let arity = match op {
            ModelOp::Input => 0,
            ModelOp::Matmul | ModelOp::Bmm | ModelOp::Binary(_) => 2,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(ModelError::Invalid(format!(
                "`{name}` ({}) takes {arity} operands, got {}",
                op.keyword(),
                inputs.len()
            )));
        }
        let info = |i: usize| self.nodes[inputs[i]].info;
        let item = |i: usize| -> Result<TensorInfo, ModelError> {
            let t = info(i);
            match t.domain {
                Domain::Vertex | Domain::Edge => Ok(t),
                d => Err(err(format!("operand {i} is a {d} tensor, expected vertex or edge"))),
            }
        };
        match op {
            ModelOp::Input => Err(ModelError::Invalid(format!("`{name}`: use input()/weight()"))),
            ModelOp::Matmul | ModelOp::Bmm => {
                let a = item(0)?;
                let w = self.nodes[inputs[1]]
                    .weight
                    .ok_or_else(|| err("second operand must be a weight".into()))?;
                if a.dim != w.rows {
                    return Err(err(format!("width {} does not match weight rows {}", a.dim, w.rows)));
                }
                if *op == ModelOp::Matmul && w.types != 1 {
                    return Err(err("matmul needs a single weight matrix; use bmm".into()));
                }
                if *op == ModelOp::Bmm && a.domain != Domain::Edge {
                    return Err(err("bmm indexes weights by edge type and needs an edge tensor".into()));
                }
                Ok(TensorInfo {
                    domain: a.domain,
                    dim: w.cols,
                })
            }
            ModelOp::Binary(_) => {
                let a = item(0)?;
                let b = item(1)?;
                if a.domain != b.domain {
                    return Err(err(format!("mixes {} and {} tensors", a.domain, b.domain)));
                }
                if a.dim != b.dim && a.dim != 1 && b.dim != 1 {
                    return Err(err(format!("widths {} and {} do not broadcast", a.dim, b.dim)));
                }
                Ok(TensorInfo {
                    domain: a.domain,
                    dim: a.dim.max(b.dim),
                })
            }
            ModelOp::Unary(_) => item(0),
            ModelOp::ScatterSrc | ModelOp::ScatterDst => {
                let a = item(0)?;
                if a.domain != Domain::Vertex {
                    return Err(err("scatter needs a vertex tensor".into()));
                }
                Ok(TensorInfo {
                    domain: Domain::Edge,
                    dim: a.dim,
                })
            }
            ModelOp::Gather(_) => {
                let a = item(0)?;
                if a.domain != Domain::Edge {
                    return Err(err("gather needs an edge tensor".into()));
                }
                Ok(TensorInfo {
                    domain: Domain::Vertex,
                    dim: a.dim,
                })
            }
            ModelOp::Output => {
                let a = item(0)?;
                if a.domain != Domain::Vertex {
                    return Err(err("outputs must be vertex tensors".into()));
                }
                Ok(a)
            }
            ModelOp::Fused(tag) => {
                let a = item(0)?;
                match tag.as_str() {
                    "spmm" if a.domain != Domain::Vertex => {
                        Err(err("spmm needs a vertex tensor".into()))
                    }
                    "edge_softmax" if a.domain != Domain::Edge => {
                        Err(err("edge_softmax needs an edge tensor".into()))
                    }
                    _ => Ok(a),
                }
            }
        }
    }

    /// Checks ordering, naming, typing and the single-output rule.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut names = HashSet::new();
        let mut outputs = 0;
        for (i, n) in self.nodes.iter().enumerate() {
            if !names.insert(n.name.as_str()) {
                return Err(ModelError::Invalid(format!("duplicate name `{}`", n.name)));
            }
            if n.inputs.iter().any(|&p| p >= i) {
                return Err(ModelError::Invalid(format!(
                    "`{}` is not in topological order",
                    n.name
                )));
            }
            match &n.op {
                ModelOp::Input => {
                    match (n.info.domain, n.weight) {
                        (Domain::Weight, Some(w)) if w.types >= 1 && w.rows >= 1 && w.cols >= 1 => {}
                        (Domain::Vertex | Domain::Edge, None) if n.info.dim >= 1 => {}
                        _ => {
                            return Err(ModelError::Invalid(format!(
                                "input `{}` has an inconsistent declaration",
                                n.name
                            )))
                        }
                    }
                    if !n.inputs.is_empty() {
                        return Err(ModelError::Invalid(format!("input `{}` has operands", n.name)));
                    }
                }
                op => {
                    let info = self.infer(&n.name, op, &n.inputs)?;
                    if info != n.info {
                        return Err(ModelError::Invalid(format!(
                            "`{}` declares {:?} but computes {:?}",
                            n.name, n.info, info
                        )));
                    }
                    if *op == ModelOp::Output {
                        outputs += 1;
                    }
                }
            }
        }
        match outputs {
            0 => Err(ModelError::NoOutput),
            1 => Ok(()),
            _ => Err(ModelError::MultipleOutputs),
        }
    }

    /// Seeded weights for every weight input, uniform in `[-1, 1] / sqrt(rows)`.
    pub fn random_weights(&self, seed: u64) -> Weights {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Weights::new();
        for n in self.weight_nodes() {
            let s = n.weight.expect("weight node");
            let scale = 1.0 / (s.rows as f32).sqrt();
            let data = (0..s.types * s.rows * s.cols)
                .map(|_| rng.gen_range(-1.0f32..=1.0) * scale)
                .collect();
            w.insert(n.name.clone(), WeightTensor::new(s.types, s.rows, s.cols, data));
        }
        w
    }

    /// Node structure with names stripped: kind, operand indices, tensor type.
    pub fn structure(&self) -> Vec<(ModelOp, Vec<usize>, TensorInfo, Option<WeightShape>)> {
        self.nodes
            .iter()
            .map(|n| (n.op.clone(), n.inputs.clone(), n.info, n.weight))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_domains_rejected() {
        let mut m = ModelGraph::new();
        let h = m.input("h", Domain::Vertex, 4);
        let e = m.op("e", ModelOp::ScatterSrc, &[h]).unwrap();
        let err = m.op("x", ModelOp::Binary(BinaryOp::Add), &[h, e]).unwrap_err();
        assert!(matches!(err, ModelError::DomainMismatch { .. }));
    }

    #[test]
    fn empty_model_has_no_output() {
        assert_eq!(ModelGraph::new().validate(), Err(ModelError::NoOutput));
    }

    #[test]
    fn classes_are_total_over_compute_kinds() {
        let ops = [
            ModelOp::Matmul,
            ModelOp::Bmm,
            ModelOp::Unary(UnaryOp::Exp),
            ModelOp::Unary(UnaryOp::Relu),
            ModelOp::Unary(UnaryOp::Sigmoid),
            ModelOp::Binary(BinaryOp::Add),
            ModelOp::Binary(BinaryOp::Sub),
            ModelOp::Binary(BinaryOp::Mul),
            ModelOp::Binary(BinaryOp::Div),
            ModelOp::Binary(BinaryOp::Max),
            ModelOp::ScatterSrc,
            ModelOp::ScatterDst,
            ModelOp::Gather(Reduce::Sum),
            ModelOp::Gather(Reduce::Max),
            ModelOp::Fused("spmm".into()),
        ];
        for op in ops {
            assert!(op.primitive().is_some(), "{op:?}");
        }
        assert_eq!(ModelOp::ScatterSrc.primitive(), Some(Primitive::Gop));
        assert_eq!(ModelOp::Matmul.primitive(), Some(Primitive::Gemm));
        assert_eq!(ModelOp::Unary(UnaryOp::Exp).primitive(), Some(Primitive::Elw));
    }

    #[test]
    fn weights_are_seeded() {
        let m = build_model(ModelName::Gat, 8, 8).unwrap();
        assert_eq!(m.random_weights(3), m.random_weights(3));
        assert_ne!(m.random_weights(3), m.random_weights(4));
    }
}
