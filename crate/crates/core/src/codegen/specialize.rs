use std::collections::{BTreeSet, HashMap};

use super::CodegenError;
use crate::ir::{IrNode, IrOp, IrProgram, Role, SegLabel, Segment};

/// Local ancestors (inclusive) of the nodes selected by `root`.
fn ancestors(seg: &Segment, root: impl Fn(&IrOp) -> bool) -> BTreeSet<usize> {
    let mut keep = BTreeSet::new();
    let mut stack: Vec<usize> = (0..seg.nodes.len()).filter(|&i| root(&seg.nodes[i].op)).collect();
    while let Some(i) = stack.pop() {
        if keep.insert(i) {
            stack.extend(&seg.nodes[i].inputs);
        }
    }
    keep
}

fn replica(seg: &Segment, keep: &BTreeSet<usize>, role: Role) -> Segment {
    let pos: HashMap<usize, usize> = keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();
    let nodes = keep
        .iter()
        .map(|&i| {
            let n = &seg.nodes[i];
            IrNode {
                inputs: n.inputs.iter().map(|x| pos[x]).collect(),
                ..n.clone()
            }
        })
        .collect();
    Segment {
        label: seg.label,
        index: seg.index,
        role: Some(role),
        nodes,
    }
}

/// Splits every vertex segment into a source replica (what feeds out-edge
/// scatters) and a destination replica (what feeds in-edge scatters and
/// outputs). Empty replicas are dropped.
pub fn specialize(p: &IrProgram) -> Result<IrProgram, CodegenError> {
    let mut out = IrProgram {
        segments: Vec::new(),
        channels: p.channels.clone(),
        weights: p.weights.clone(),
    };
    for seg in &p.segments {
        if seg.label == SegLabel::Edge || seg.role.is_some() {
            out.segments.push(seg.clone());
            continue;
        }
        let src = ancestors(seg, |op| matches!(op, IrOp::SendOutEdge(_)));
        if src.iter().any(|&i| matches!(seg.nodes[i].op, IrOp::RecvInEdge(_))) {
            return Err(CodegenError::SourceNeedsGather(seg.title()));
        }
        let dst = ancestors(seg, |op| matches!(op, IrOp::SendInEdge(_) | IrOp::Output { .. }));
        if !src.is_empty() {
            out.segments.push(replica(seg, &src, Role::Source));
        }
        if !dst.is_empty() {
            out.segments.push(replica(seg, &dst, Role::Destination));
        }
    }
    Ok(out)
}
