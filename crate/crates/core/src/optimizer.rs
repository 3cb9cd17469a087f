//! IR passes: edge-to-vertex motion and dead-operation pruning.

use std::collections::{BTreeSet, HashSet};

use serde::Serialize;

use crate::ir::{Channel, IrNode, IrOp, IrProgram, NodeRef, SegLabel, Segment};

/// What a pass changed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PassReport {
    pub ops_moved: usize,
    pub channels_added: usize,
    pub channels_removed: usize,
    pub ops_pruned: usize,
    pub segments_removed: usize,
}

impl PassReport {
    pub fn merge(&mut self, o: &PassReport) {
        self.ops_moved += o.ops_moved;
        self.channels_added += o.channels_added;
        self.channels_removed += o.channels_removed;
        self.ops_pruned += o.ops_pruned;
        self.segments_removed += o.segments_removed;
    }
}

/// Removes the listed nodes and remaps operand indices. Removed nodes must
/// not feed surviving ones.
fn remove_nodes(seg: &mut Segment, dead: &HashSet<usize>) {
    let mut map = vec![usize::MAX; seg.nodes.len()];
    let mut kept = Vec::with_capacity(seg.nodes.len());
    for (i, n) in std::mem::take(&mut seg.nodes).into_iter().enumerate() {
        if !dead.contains(&i) {
            map[i] = kept.len();
            kept.push(n);
        }
    }
    for n in &mut kept {
        for x in &mut n.inputs {
            debug_assert_ne!(map[*x], usize::MAX, "live node reads a removed one");
            *x = map[*x];
        }
    }
    seg.nodes = kept;
}

/// Reorders nodes so every operand precedes its consumer.
fn sort_segment(seg: &mut Segment) {
    let order = seg.topo_order().expect("acyclic segment");
    if order.iter().enumerate().all(|(i, &o)| i == o) {
        return;
    }
    let mut pos = vec![0; order.len()];
    for (new, &old) in order.iter().enumerate() {
        pos[old] = new;
    }
    let mut nodes: Vec<IrNode> = order.iter().map(|&o| seg.nodes[o].clone()).collect();
    for n in &mut nodes {
        for x in &mut n.inputs {
            *x = pos[*x];
        }
    }
    seg.nodes = nodes;
}

/// Nodes of an edge segment computable from one recv alone, in local order.
fn movable_closure(seg: &Segment, recv: usize) -> Vec<usize> {
    let order = seg.topo_order().expect("acyclic segment");
    let mut set: HashSet<usize> = HashSet::from([recv]);
    let mut q = Vec::new();
    for i in order {
        let n = &seg.nodes[i];
        let endpoint_only = n.op.is_compute()
            && !matches!(n.op, IrOp::BmmRow { .. })
            && n.inputs.iter().all(|x| set.contains(x));
        if i != recv && endpoint_only {
            set.insert(i);
            q.push(i);
        }
    }
    q
}

/// Moves one recv's closure into the sending vertex segment.
fn move_closure(p: &mut IrProgram, es: usize, recv: usize, q: &[usize], rep: &mut PassReport) {
    let ch = p.segments[es].nodes[recv].op.channel().expect("recv has a channel");
    let kind = p.channel(ch).expect("declared channel").kind;
    let (vs, send) = p.find_send(ch).expect("matched channel");
    let src_val = p.segments[vs].nodes[send].inputs[0];
    let qset: HashSet<usize> = q.iter().copied().collect();

    // Clone the chain into the vertex segment.
    let mut clone_of = std::collections::HashMap::from([(recv, src_val)]);
    for &i in q {
        let n = p.segments[es].nodes[i].clone();
        let vseg = &mut p.segments[vs];
        let inputs = n.inputs.iter().map(|x| clone_of[x]).collect();
        let name = vseg.fresh_name(&n.name);
        vseg.nodes.push(IrNode {
            name,
            op: n.op,
            inputs,
            dim: n.dim,
        });
        clone_of.insert(i, vseg.nodes.len() - 1);
    }
    rep.ops_moved += q.len();

    // Ship results still needed on the edge side over new channels.
    let users = p.segments[es].users();
    for &i in q {
        let outside: Vec<usize> = users[i].iter().copied().filter(|u| !qset.contains(u)).collect();
        if outside.is_empty() {
            continue;
        }
        let id = p.next_channel_id();
        let dim = p.segments[es].nodes[i].dim;
        p.channels.push(Channel { id, kind, dim });
        rep.channels_added += 1;
        let (s_op, r_op) = IrOp::pair(kind, id);
        let base = p.segments[es].nodes[i].name.clone();
        let vseg = &mut p.segments[vs];
        let sname = vseg.fresh_name(&format!("send.{base}"));
        vseg.nodes.push(IrNode {
            name: sname,
            op: s_op,
            inputs: vec![clone_of[&i]],
            dim,
        });
        let eseg = &mut p.segments[es];
        let rname = eseg.fresh_name(&format!("{base}.recv"));
        eseg.nodes.push(IrNode {
            name: rname,
            op: r_op,
            inputs: vec![],
            dim,
        });
        let r = eseg.nodes.len() - 1;
        for u in outside {
            for x in &mut eseg.nodes[u].inputs {
                if *x == i {
                    *x = r;
                }
            }
        }
    }

    // Drop the chain and, if now unused, the original recv and its send.
    let mut dead = qset;
    let still_used = p.segments[es]
        .nodes
        .iter()
        .enumerate()
        .any(|(j, n)| !dead.contains(&j) && n.inputs.contains(&recv));
    if !still_used {
        dead.insert(recv);
        remove_nodes(&mut p.segments[vs], &HashSet::from([send]));
        p.channels.retain(|c| c.id != ch);
        rep.channels_removed += 1;
    }
    remove_nodes(&mut p.segments[es], &dead);
    sort_segment(&mut p.segments[es]);
    sort_segment(&mut p.segments[vs]);
}

/// Edge-to-vertex motion with a report of what moved.
pub fn e2v_with_report(p: &IrProgram) -> (IrProgram, PassReport) {
    let mut p = p.clone();
    let mut rep = PassReport::default();
    loop {
        let mut found = None;
        'search: for (s, seg) in p.segments.iter().enumerate() {
            if seg.label != SegLabel::Edge {
                continue;
            }
            for (i, n) in seg.nodes.iter().enumerate() {
                if matches!(n.op, IrOp::RecvSrc(_) | IrOp::RecvDst(_)) {
                    let q = movable_closure(seg, i);
                    if !q.is_empty() {
                        found = Some((s, i, q));
                        break 'search;
                    }
                }
            }
        }
        match found {
            Some((s, i, q)) => move_closure(&mut p, s, i, &q, &mut rep),
            None => break,
        }
    }
    (p, rep)
}

/// Moves edge-side operations that only read one endpoint's data into the
/// vertex segment that sends it.
pub fn e2v(p: &IrProgram) -> IrProgram {
    e2v_with_report(p).0
}

/// Removes operations that cannot reach an output, with a report.
pub fn prune_dead_with_report(p: &IrProgram) -> (IrProgram, PassReport) {
    let mut live: HashSet<NodeRef> = HashSet::new();
    let mut stack: Vec<NodeRef> = p
        .nodes()
        .filter(|(_, n)| matches!(n.op, IrOp::Output { .. }))
        .map(|(r, _)| r)
        .collect();
    while let Some(r) = stack.pop() {
        if !live.insert(r) {
            continue;
        }
        let n = p.node(r);
        stack.extend(n.inputs.iter().map(|&i| (r.0, i)));
        if n.op.is_recv() {
            if let Some(s) = n.op.channel().and_then(|c| p.find_send(c)) {
                stack.push(s);
            }
        }
    }

    let mut out = p.clone();
    let mut rep = PassReport::default();
    for (s, seg) in out.segments.iter_mut().enumerate() {
        let dead: HashSet<usize> = (0..seg.nodes.len()).filter(|&i| !live.contains(&(s, i))).collect();
        rep.ops_pruned += dead.len();
        remove_nodes(seg, &dead);
    }
    let before = out.segments.len();
    out.segments.retain(|s| !s.nodes.is_empty());
    rep.segments_removed = before - out.segments.len();
    let used: BTreeSet<usize> = out.nodes().filter_map(|(_, n)| n.op.channel()).collect();
    let before = out.channels.len();
    out.channels.retain(|c| used.contains(&c.id));
    rep.channels_removed = before - out.channels.len();
    if rep.segments_removed > 0 {
        out.renumber();
    }
    (out, rep)
}

pub fn prune_dead(p: &IrProgram) -> IrProgram {
    prune_dead_with_report(p).0
}
