//! Expansion of fused library operators into atomic ones.

use super::{BinaryOp, ModelError, ModelGraph, ModelOp, Reduce, UnaryOp};

/// Replaces every fused node by its atomic expansion. Node names of the
/// expansion are derived from the fused node's name; its last node keeps it.
pub fn defuse(m: &ModelGraph) -> Result<ModelGraph, ModelError> {
    let mut out = ModelGraph::new();
    let mut map = Vec::with_capacity(m.nodes.len());
    for n in &m.nodes {
        let ins: Vec<usize> = n.inputs.iter().map(|&i| map[i]).collect();
        let id = match &n.op {
            ModelOp::Input => {
                let mut c = n.clone();
                c.inputs.clear();
                out.nodes.push(c);
                out.nodes.len() - 1
            }
            ModelOp::Fused(tag) => match tag.as_str() {
                "spmm" => {
                    let s = out.op(&format!("{}__scatter", n.name), ModelOp::ScatterSrc, &ins)?;
                    out.op(&n.name, ModelOp::Gather(Reduce::Sum), &[s])?
                }
                "edge_softmax" => {
                    let x = out.op(&format!("{}__exp", n.name), ModelOp::Unary(UnaryOp::Exp), &ins)?;
                    let s = out.op(&format!("{}__sum", n.name), ModelOp::Gather(Reduce::Sum), &[x])?;
                    let d = out.op(&format!("{}__bcast", n.name), ModelOp::ScatterDst, &[s])?;
                    out.op(&n.name, ModelOp::Binary(BinaryOp::Div), &[x, d])?
                }
                other => return Err(ModelError::UnknownFused(other.to_string())),
            },
            op => out.op(&n.name, op.clone(), &ins)?,
        };
        map.push(id);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, Domain, ModelName};

    #[test]
    fn no_fused_nodes_is_identity() {
        for name in ModelName::ALL {
            let m = build_model(name, 4, 4).unwrap();
            assert_eq!(defuse(&m).unwrap(), m);
        }
    }

    #[test]
    fn expansions_have_expected_shape() {
        let mut m = ModelGraph::new();
        let h = m.input("h", Domain::Vertex, 3);
        let a = m.op("a", ModelOp::Fused("spmm".into()), &[h]).unwrap();
        let e = m.op("e", ModelOp::ScatterSrc, &[a]).unwrap();
        let s = m.op("s", ModelOp::Fused("edge_softmax".into()), &[e]).unwrap();
        let g = m.op("g", ModelOp::Gather(Reduce::Sum), &[s]).unwrap();
        m.output("out", g).unwrap();
        m.validate().unwrap();
        let d = defuse(&m).unwrap();
        d.validate().unwrap();
        assert!(d.nodes.iter().all(|n| !matches!(n.op, ModelOp::Fused(_))));
        assert_eq!(d.nodes.len(), m.nodes.len() + 1 + 3);
        assert_eq!(d.node(d.output_node().unwrap()).info, m.node(m.output_node().unwrap()).info);
    }

    #[test]
    fn unknown_tag_rejected() {
        let mut m = ModelGraph::new();
        let h = m.input("h", Domain::Vertex, 3);
        let a = m.op("a", ModelOp::Fused("conv".into()), &[h]).unwrap();
        m.output("out", a).unwrap();
        assert_eq!(defuse(&m), Err(ModelError::UnknownFused("conv".into())));
    }
}
