use std::collections::{BTreeSet, HashMap};

use super::{IrError, IrOp, IrProgram, NodeRef, SegLabel};
use crate::graph::{FeatureSet, Graph};
use crate::kernels;
use crate::model::Reduce;
use crate::tensor::{Matrix, Weights};

impl IrProgram {
    /// Order over all nodes respecting local dataflow and send-before-recv.
    pub fn global_order(&self) -> Option<Vec<NodeRef>> {
        let all: Vec<NodeRef> = self.nodes().map(|(r, _)| r).collect();
        let mut indeg: HashMap<NodeRef, usize> = HashMap::new();
        let mut users: HashMap<NodeRef, Vec<NodeRef>> = HashMap::new();
        for &(s, i) in &all {
            let n = &self.segments[s].nodes[i];
            indeg.insert((s, i), n.inputs.len());
            for &p in &n.inputs {
                users.entry((s, p)).or_default().push((s, i));
            }
        }
        for &r in &all {
            let n = self.node(r);
            if n.op.is_recv() {
                if let Some(send) = n.op.channel().and_then(|c| self.find_send(c)) {
                    *indeg.get_mut(&r).expect("node") += 1;
                    users.entry(send).or_default().push(r);
                }
            }
        }
        let mut ready: BTreeSet<NodeRef> = all.iter().copied().filter(|r| indeg[r] == 0).collect();
        let mut order = Vec::with_capacity(all.len());
        while let Some(r) = ready.pop_first() {
            order.push(r);
            for u in users.get(&r).into_iter().flatten() {
                let d = indeg.get_mut(u).expect("node");
                *d -= 1;
                if *d == 0 {
                    ready.insert(*u);
                }
            }
        }
        (order.len() == all.len()).then_some(order)
    }
}

/// Executes the program item by item over the whole graph. Gathers reduce
/// in ascending edge-id order starting from the reduction identity.
pub fn interpret_ir(
    p: &IrProgram,
    g: &Graph,
    feats: &FeatureSet,
    weights: &Weights,
) -> Result<FeatureSet, IrError> {
    let order = p
        .global_order()
        .ok_or_else(|| IrError::Malformed("cyclic dependencies".into()))?;
    let v = g.num_vertices();
    let e = g.num_edges();
    let mut vals: HashMap<NodeRef, Matrix> = HashMap::new();
    let mut output = None;

    for r in order {
        let seg = &p.segments[r.0];
        let n = &seg.nodes[r.1];
        let items = match seg.label {
            SegLabel::Vertex => v,
            SegLabel::Edge => e,
        };
        let arg = |k: usize| &vals[&(r.0, n.inputs[k])];
        let mut out = Matrix::zeros(items, n.dim);
        match &n.op {
            IrOp::Input { tensor } => {
                let src = match seg.label {
                    SegLabel::Vertex => Some(&feats.vertex),
                    SegLabel::Edge => feats.edge.as_ref(),
                }
                .ok_or_else(|| IrError::MissingInput(tensor.clone()))?;
                if src.rows() != items || src.cols() != n.dim {
                    return Err(IrError::MissingInput(format!(
                        "`{tensor}` expects {items}x{} values, got {}x{}",
                        n.dim,
                        src.rows(),
                        src.cols()
                    )));
                }
                out = src.clone();
            }
            IrOp::Output { .. } => {
                out = arg(0).clone();
                if output.is_none() {
                    output = Some(out.clone());
                }
            }
            IrOp::Mv { weight } | IrOp::BmmRow { weight } => {
                let w = weights
                    .get(weight)
                    .ok_or_else(|| IrError::MissingWeight(weight.clone()))?;
                let x = arg(0);
                if w.rows != x.cols() || w.cols != n.dim {
                    return Err(IrError::MissingWeight(format!("{weight} has the wrong shape")));
                }
                let typed = matches!(n.op, IrOp::BmmRow { .. });
                for i in 0..items {
                    let t = if typed { g.edge_type(i) as usize } else { 0 };
                    if t >= w.types {
                        return Err(IrError::MissingWeight(format!("{weight} has no slab for type {t}")));
                    }
                    kernels::matvec(x.row(i), w.slab(t), out.row_mut(i));
                }
            }
            IrOp::Unary(op) => {
                let x = arg(0);
                for i in 0..items {
                    kernels::unary_row(*op, x.row(i), out.row_mut(i));
                }
            }
            IrOp::Binary(op) => {
                let (a, b) = (arg(0), arg(1));
                for i in 0..items {
                    kernels::binary_row(*op, a.row(i), b.row(i), out.row_mut(i));
                }
            }
            IrOp::SendOutEdge(_) | IrOp::SendInEdge(_) | IrOp::SendDstSum(_) | IrOp::SendDstMax(_) => {
                out = arg(0).clone();
            }
            IrOp::RecvSrc(c) | IrOp::RecvDst(c) => {
                let send = p
                    .find_send(*c)
                    .ok_or_else(|| IrError::Malformed(format!("channel {c} has no send")))?;
                let x = &vals[&send];
                let ends = if matches!(n.op, IrOp::RecvSrc(_)) {
                    g.edge_src()
                } else {
                    g.edge_dst()
                };
                for (i, &u) in ends.iter().enumerate() {
                    out.row_mut(i).copy_from_slice(x.row(u as usize));
                }
            }
            IrOp::RecvInEdge(c) => {
                let send = p
                    .find_send(*c)
                    .ok_or_else(|| IrError::Malformed(format!("channel {c} has no send")))?;
                let reduce = match p.node(send).op {
                    IrOp::SendDstMax(_) => Reduce::Max,
                    _ => Reduce::Sum,
                };
                let x = &vals[&send];
                out = Matrix::filled(v, n.dim, reduce.identity());
                for dst in 0..v {
                    for eid in g.in_edges(dst) {
                        kernels::reduce_into(reduce, out.row_mut(dst), x.row(eid));
                    }
                }
            }
        }
        vals.insert(r, out);
    }
    output.map(FeatureSet::new).ok_or(IrError::NoOutput)
}
