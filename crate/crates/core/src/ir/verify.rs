use std::collections::BTreeMap;

use super::{IrOp, IrProgram};

/// Checks segment and channel invariants, returning the first violation.
pub fn verify_ir(p: &IrProgram) -> Result<(), String> {
    for seg in &p.segments {
        let title = seg.title();
        for n in &seg.nodes {
            if n.inputs.len() != n.op.arity() {
                return Err(format!(
                    "{} `{}` in segment {title} has {} operands, expected {}",
                    n.op.name(),
                    n.name,
                    n.inputs.len(),
                    n.op.arity()
                ));
            }
            if let Some(&bad) = n.inputs.iter().find(|&&x| x >= seg.nodes.len()) {
                return Err(format!("`{}` in segment {title} references missing node {bad}", n.name));
            }
            if let Some(want) = n.op.required_label() {
                if want != seg.label {
                    return Err(format!(
                        "{} is not allowed in {} segment {title}",
                        n.op.name(),
                        seg.label.marker()
                    ));
                }
            }
            if n.dim == 0 {
                return Err(format!("`{}` in segment {title} has zero width", n.name));
            }
            if let IrOp::Mv { weight } | IrOp::BmmRow { weight } = &n.op {
                let w = p
                    .weights
                    .get(weight)
                    .ok_or_else(|| format!("unknown weight `{weight}`"))?;
                let input_dim = seg.nodes[n.inputs[0]].dim;
                if w.rows != input_dim || w.cols != n.dim {
                    return Err(format!("`{}` does not match weight `{weight}` shape", n.name));
                }
            }
        }
        if seg.topo_order().is_none() {
            return Err(format!("cycle in segment {title}"));
        }
    }

    let mut sends: BTreeMap<usize, Vec<&IrOp>> = BTreeMap::new();
    let mut recvs: BTreeMap<usize, Vec<&IrOp>> = BTreeMap::new();
    for (_, n) in p.nodes() {
        if let Some(c) = n.op.channel() {
            let map = if n.op.is_send() { &mut sends } else { &mut recvs };
            map.entry(c).or_default().push(&n.op);
            match p.channel(c) {
                None => return Err(format!("unmatched channel {c}")),
                Some(ch) if ch.dim != n.dim => {
                    return Err(format!("channel {c} width differs from `{}`", n.name))
                }
                _ => {}
            }
        }
    }
    let mut ids: Vec<usize> = p.channels.iter().map(|c| c.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err("duplicate channel id".into());
    }
    for ch in &p.channels {
        let s = sends.get(&ch.id).map_or(0, Vec::len);
        let r = recvs.get(&ch.id).map_or(0, Vec::len);
        if s != 1 || r != 1 {
            return Err(format!("unmatched channel {}", ch.id));
        }
        let (send, recv) = IrOp::pair(ch.kind, ch.id);
        if *sends[&ch.id][0] != send || *recvs[&ch.id][0] != recv {
            return Err(format!("channel {} ops do not match its kind {}", ch.id, ch.kind.name()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::lower_to_ir;
    use crate::model::{build_model, ModelName};

    #[test]
    fn lowered_models_verify() {
        for name in ModelName::ALL {
            let p = lower_to_ir(&build_model(name, 4, 3).unwrap()).unwrap();
            verify_ir(&p).unwrap();
        }
    }

    #[test]
    fn missing_recv_is_reported() {
        let mut p = lower_to_ir(&build_model(ModelName::Gcn, 4, 4).unwrap()).unwrap();
        // Replace the recv of the gather channel (id 1) with an entry marker.
        let seg = p.segments.iter_mut().find(|s| s.nodes[0].op == IrOp::RecvInEdge(1)).unwrap();
        seg.nodes[0].op = IrOp::Input { tensor: "h".into() };
        assert_eq!(verify_ir(&p), Err("unmatched channel 1".into()));
    }

    #[test]
    fn cycle_is_reported() {
        let mut p = lower_to_ir(&build_model(ModelName::Gcn, 4, 4).unwrap()).unwrap();
        let seg = &mut p.segments[2];
        // mv (1) <- relu (2) closes a loop with relu <- mv.
        seg.nodes[1].inputs = vec![2];
        let err = verify_ir(&p).unwrap_err();
        assert!(err.starts_with("cycle in segment"), "{err}");
    }
}
