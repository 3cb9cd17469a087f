use std::collections::BTreeMap;

use super::{Channel, ChannelKind, IrError, IrNode, IrOp, IrProgram, SegLabel, Segment};
use crate::model::{Domain, ModelGraph, ModelOp, Reduce};

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        parent[ra.max(rb)] = ra.min(rb);
    }
}

/// Lowers a validated, defused model. Every scatter/gather becomes a
/// send/recv pair on a fresh channel; the remaining links group nodes into
/// segments.
pub fn lower_to_ir(m: &ModelGraph) -> Result<IrProgram, IrError> {
    let n = m.nodes.len();
    let is_weight = |i: usize| m.nodes[i].weight.is_some();
    let mut parent: Vec<usize> = (0..n).collect();
    for (c, node) in m.nodes.iter().enumerate() {
        if matches!(node.op, ModelOp::Fused(_)) {
            return Err(IrError::Malformed(format!("fused node `{}` must be defused first", node.name)));
        }
        if node.op.is_gop() {
            continue;
        }
        for &p in &node.inputs {
            if !is_weight(p) {
                union(&mut parent, c, p);
            }
        }
    }

    // Segment per component, ordered by first member.
    let mut seg_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut segments: Vec<Segment> = Vec::new();
    let mut local: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut channels = Vec::new();

    let mut seg_for = |root: usize, label: SegLabel, segments: &mut Vec<Segment>| -> Result<usize, IrError> {
        let s = *seg_of_root.entry(root).or_insert_with(|| {
            segments.push(Segment {
                label,
                index: 0,
                role: None,
                nodes: Vec::new(),
            });
            segments.len() - 1
        });
        if segments[s].label != label {
            return Err(IrError::ContradictoryLabels);
        }
        Ok(s)
    };

    for (i, node) in m.nodes.iter().enumerate() {
        if is_weight(i) {
            continue;
        }
        let label = match node.info.domain {
            Domain::Vertex => SegLabel::Vertex,
            Domain::Edge => SegLabel::Edge,
            _ => return Err(IrError::Malformed(format!("`{}` has no item domain", node.name))),
        };
        let root = find(&mut parent, i);
        let s = seg_for(root, label, &mut segments)?;

        let op = match &node.op {
            ModelOp::Input => IrOp::Input {
                tensor: node.name.clone(),
            },
            ModelOp::Output => IrOp::Output {
                tensor: node.name.clone(),
            },
            ModelOp::Matmul => IrOp::Mv {
                weight: m.nodes[node.inputs[1]].name.clone(),
            },
            ModelOp::Bmm => IrOp::BmmRow {
                weight: m.nodes[node.inputs[1]].name.clone(),
            },
            ModelOp::Unary(u) => IrOp::Unary(*u),
            ModelOp::Binary(b) => IrOp::Binary(*b),
            ModelOp::ScatterSrc | ModelOp::ScatterDst | ModelOp::Gather(_) => {
                let kind = match node.op {
                    ModelOp::ScatterSrc => ChannelKind::SrcScatter,
                    ModelOp::ScatterDst => ChannelKind::DstScatter,
                    ModelOp::Gather(Reduce::Sum) => ChannelKind::GatherSum,
                    _ => ChannelKind::GatherMax,
                };
                let ch = channels.len();
                channels.push(Channel {
                    id: ch,
                    kind,
                    dim: node.info.dim,
                });
                let (send, recv) = IrOp::pair(kind, ch);
                let p = node.inputs[0];
                let (ps, pl) = local[p].expect("producer lowered first");
                let seg = &mut segments[ps];
                let name = seg.fresh_name(&format!("send.{}", node.name));
                seg.nodes.push(IrNode {
                    name,
                    op: send,
                    inputs: vec![pl],
                    dim: node.info.dim,
                });
                recv
            }
            ModelOp::Fused(_) => unreachable!(),
        };
        let inputs = if node.op.is_gop() {
            Vec::new()
        } else {
            node.inputs
                .iter()
                .filter(|&&p| !is_weight(p))
                .map(|&p| local[p].expect("producer lowered first").1)
                .collect()
        };
        let seg = &mut segments[s];
        seg.nodes.push(IrNode {
            name: node.name.clone(),
            op,
            inputs,
            dim: node.info.dim,
        });
        local[i] = Some((s, seg.nodes.len() - 1));
    }

    let weights = m
        .weight_nodes()
        .map(|w| (w.name.clone(), w.weight.expect("weight")))
        .collect();
    let mut p = IrProgram {
        segments,
        channels,
        weights,
    };
    p.renumber();
    Ok(p)
}
