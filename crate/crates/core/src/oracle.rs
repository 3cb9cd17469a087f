//! Dense whole-graph reference evaluation of model graphs.
//!
//! Every tensor is materialized over all vertices or all edges. Gathers
//! visit in-edges in ascending edge id starting from the reduction identity.

use serde::Serialize;
use thiserror::Error;

use crate::graph::{FeatureSet, Graph};
use crate::model::{BinaryOp, Domain, ModelGraph, ModelOp, Reduce, UnaryOp};
use crate::tensor::{Matrix, Weights};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("missing weight `{0}`")]
    MissingWeight(String),
    #[error("invalid model: {0}")]
    Model(String),
}

fn apply_unary(op: UnaryOp, x: f32) -> f32 {
    match op {
        UnaryOp::Exp => x.exp(),
        UnaryOp::Relu => x.max(0.0),
        UnaryOp::Sigmoid => 1.0 / (1.0 + (-x).exp()),
    }
}

fn apply_binary(op: BinaryOp, a: f32, b: f32) -> f32 {
    match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => a / b,
        BinaryOp::Max => a.max(b),
    }
}

fn map_rows(x: &Matrix, f: impl Fn(f32) -> f32) -> Matrix {
    Matrix::from_vec(x.rows(), x.cols(), x.data().iter().map(|&v| f(v)).collect())
}

/// `y[i] = x[i] * w` with the weight selected per row.
fn matmul_rows(x: &Matrix, cols: usize, slab: impl Fn(usize) -> Result<usize, OracleError>, w: &[f32]) -> Result<Matrix, OracleError> {
    let k = x.cols();
    let mut y = Matrix::zeros(x.rows(), cols);
    for i in 0..x.rows() {
        let base = slab(i)? * k * cols;
        for c in 0..cols {
            let mut acc = 0.0f32;
            for j in 0..k {
                acc += x.get(i, j) * w[base + j * cols + c];
            }
            y.set(i, c, acc);
        }
    }
    Ok(y)
}

fn gather(g: &Graph, x: &Matrix, r: Reduce) -> Matrix {
    let mut y = Matrix::filled(g.num_vertices(), x.cols(), r.identity());
    for v in 0..g.num_vertices() {
        for e in g.in_edges(v) {
            for c in 0..x.cols() {
                y.set(v, c, r.combine(y.get(v, c), x.get(e, c)));
            }
        }
    }
    y
}

/// Evaluates `m` on the whole graph and returns the output tensor.
pub fn run_dense(m: &ModelGraph, g: &Graph, feats: &FeatureSet, weights: &Weights) -> Result<FeatureSet, OracleError> {
    m.validate().map_err(|e| OracleError::Model(e.to_string()))?;
    let (nv, ne) = (g.num_vertices(), g.num_edges());
    let mut vals: Vec<Option<Matrix>> = vec![None; m.nodes.len()];
    let mut out = None;
    for (id, n) in m.nodes.iter().enumerate() {
        let arg = |k: usize| vals[n.inputs[k]].as_ref().expect("operands precede users");
        let v = match &n.op {
            ModelOp::Input => match n.info.domain {
                Domain::Weight => None,
                Domain::Vertex | Domain::Scalar => {
                    let x = &feats.vertex;
                    if x.rows() != nv || x.cols() != n.info.dim {
                        return Err(OracleError::Shape(format!(
                            "input {} is {}x{}, features are {}x{}",
                            n.name, nv, n.info.dim, x.rows(), x.cols()
                        )));
                    }
                    Some(x.clone())
                }
                Domain::Edge => {
                    let x = feats
                        .edge
                        .as_ref()
                        .ok_or_else(|| OracleError::Shape(format!("input {} needs edge features", n.name)))?;
                    if x.rows() != ne || x.cols() != n.info.dim {
                        return Err(OracleError::Shape(format!("edge input {} has wrong shape", n.name)));
                    }
                    Some(x.clone())
                }
            },
            ModelOp::Matmul | ModelOp::Bmm => {
                let wn = &m.nodes[n.inputs[1]];
                let w = weights
                    .get(&wn.name)
                    .ok_or_else(|| OracleError::MissingWeight(wn.name.clone()))?;
                let shape = wn.weight.expect("weight nodes carry a shape");
                if (w.types, w.rows, w.cols) != (shape.types, shape.rows, shape.cols) {
                    return Err(OracleError::Shape(format!("weight {} has the wrong shape", wn.name)));
                }
                let x = arg(0);
                let y = if n.op == ModelOp::Bmm {
                    matmul_rows(x, w.cols, |i| {
                        let t = g.edge_type(i) as usize;
                        if t < w.types {
                            Ok(t)
                        } else {
                            Err(OracleError::Shape(format!("edge type {t} exceeds {} slabs", w.types)))
                        }
                    }, &w.data)?
                } else {
                    matmul_rows(x, w.cols, |_| Ok(0), &w.data)?
                };
                Some(y)
            }
            ModelOp::Unary(op) => Some(map_rows(arg(0), |v| apply_unary(*op, v))),
            ModelOp::Binary(op) => {
                let (a, b) = (arg(0), arg(1));
                let cols = a.cols().max(b.cols());
                let mut y = Matrix::zeros(a.rows(), cols);
                for i in 0..a.rows() {
                    for c in 0..cols {
                        let x = a.get(i, if a.cols() == 1 { 0 } else { c });
                        let z = b.get(i, if b.cols() == 1 { 0 } else { c });
                        y.set(i, c, apply_binary(*op, x, z));
                    }
                }
                Some(y)
            }
            ModelOp::ScatterSrc => Some(arg(0).select_rows(g.edge_src().iter().map(|&s| s as usize))),
            ModelOp::ScatterDst => Some(arg(0).select_rows(g.edge_dst().iter().map(|&d| d as usize))),
            ModelOp::Gather(r) => Some(gather(g, arg(0), *r)),
            ModelOp::Fused(tag) => match tag.as_str() {
                "spmm" => {
                    let x = arg(0).select_rows(g.edge_src().iter().map(|&s| s as usize));
                    Some(gather(g, &x, Reduce::Sum))
                }
                "edge_softmax" => {
                    let ex = map_rows(arg(0), f32::exp);
                    let denom = gather(g, &ex, Reduce::Sum);
                    let mut y = ex.clone();
                    for e in 0..ne {
                        let d = g.edge_dst()[e] as usize;
                        for c in 0..ex.cols() {
                            y.set(e, c, ex.get(e, c) / denom.get(d, c));
                        }
                    }
                    Some(y)
                }
                other => return Err(OracleError::Model(format!("unknown fused op `{other}`"))),
            },
            ModelOp::Output => {
                out = Some(arg(0).clone());
                None
            }
        };
        vals[id] = v;
    }
    let out = out.ok_or_else(|| OracleError::Model("no output".into()))?;
    Ok(FeatureSet::new(out))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub max_rel_err: f64,
    /// `(row, col)` of the worst element.
    pub worst: Option<(usize, usize)>,
    pub pass: bool,
}

/// Elementwise relative error `|a-b| / max(|a|, |b|, 1e-9)`. Two NaNs or two
/// equal infinities count as equal.
pub fn compare(a: &FeatureSet, b: &FeatureSet, rel_tol: f64) -> Result<CompareReport, OracleError> {
    let (x, y) = (&a.vertex, &b.vertex);
    if (x.rows(), x.cols()) != (y.rows(), y.cols()) {
        return Err(OracleError::Shape(format!(
            "{}x{} vs {}x{}",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    let mut max = 0.0f64;
    let mut worst = None;
    for (i, (&p, &q)) in x.data().iter().zip(y.data()).enumerate() {
        let (p, q) = (p as f64, q as f64);
        let err = if (p.is_nan() && q.is_nan()) || p == q {
            0.0
        } else if p.is_nan() || q.is_nan() || p.is_infinite() || q.is_infinite() {
            f64::INFINITY
        } else {
            (p - q).abs() / p.abs().max(q.abs()).max(1e-9)
        };
        if err > max || (worst.is_none() && err > 0.0) {
            max = err;
            worst = Some((i / x.cols().max(1), i % x.cols().max(1)));
        }
    }
    Ok(CompareReport {
        max_rel_err: max,
        worst,
        pass: max <= rel_tol,
    })
}

/// Bytes needed to hold every non-weight tensor of `m` over the whole graph.
pub fn whole_graph_footprint(m: &ModelGraph, g: &Graph) -> u64 {
    m.nodes
        .iter()
        .filter(|n| n.info.domain != Domain::Weight && n.op != ModelOp::Output)
        .map(|n| {
            let rows = match n.info.domain {
                Domain::Edge => g.num_edges(),
                _ => g.num_vertices(),
            };
            (rows * n.info.dim * 4) as u64
        })
        .sum()
}
