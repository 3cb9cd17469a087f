//! Textual IR dump and its parser.
//!
//! ```text
//! weight W types=1 rows=4 cols=4
//! channel 0 src_scatter dim=4
//! segment v.0
//!   h = input[h]() : 4
//!   send.msg = sendOutEdge[0](h) : 4
//! ```

use std::collections::HashMap;
use std::fmt::Write;

use super::{Channel, ChannelKind, IrError, IrNode, IrOp, IrProgram, Role, SegLabel, Segment};
use crate::model::{BinaryOp, UnaryOp, WeightShape};

pub fn dump_ir(p: &IrProgram) -> String {
    let mut s = String::new();
    for (name, w) in &p.weights {
        let _ = writeln!(s, "weight {name} types={} rows={} cols={}", w.types, w.rows, w.cols);
    }
    for c in &p.channels {
        let _ = writeln!(s, "channel {} {} dim={}", c.id, c.kind.name(), c.dim);
    }
    for seg in &p.segments {
        let _ = writeln!(s, "segment {}", seg.title());
        for n in &seg.nodes {
            let attr = match &n.op {
                IrOp::Input { tensor } | IrOp::Output { tensor } => format!("[{tensor}]"),
                IrOp::Mv { weight } | IrOp::BmmRow { weight } => format!("[{weight}]"),
                op => op.channel().map(|c| format!("[{c}]")).unwrap_or_default(),
            };
            let args: Vec<&str> = n.inputs.iter().map(|&i| seg.nodes[i].name.as_str()).collect();
            let _ = writeln!(
                s,
                "  {} = {}{}({}) : {}",
                n.name,
                n.op.name(),
                attr,
                args.join(", "),
                n.dim
            );
        }
    }
    s
}

fn perr(line: usize, msg: impl Into<String>) -> IrError {
    IrError::Parse {
        line,
        msg: msg.into(),
    }
}

fn kv(tok: &str, key: &str, line: usize) -> Result<usize, IrError> {
    tok.strip_prefix(key)
        .and_then(|v| v.strip_prefix('='))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| perr(line, format!("expected {key}=<n>, got `{tok}`")))
}

fn make_op(name: &str, attr: &str, line: usize) -> Result<IrOp, IrError> {
    let ch = || attr.parse::<usize>().map_err(|_| perr(line, format!("bad channel `{attr}`")));
    Ok(match name {
        "input" => IrOp::Input { tensor: attr.into() },
        "output" => IrOp::Output { tensor: attr.into() },
        "mv" => IrOp::Mv { weight: attr.into() },
        "bmm_row" => IrOp::BmmRow { weight: attr.into() },
        "exp" => IrOp::Unary(UnaryOp::Exp),
        "relu" => IrOp::Unary(UnaryOp::Relu),
        "sigmoid" => IrOp::Unary(UnaryOp::Sigmoid),
        "add" => IrOp::Binary(BinaryOp::Add),
        "sub" => IrOp::Binary(BinaryOp::Sub),
        "mul" => IrOp::Binary(BinaryOp::Mul),
        "div" => IrOp::Binary(BinaryOp::Div),
        "max" => IrOp::Binary(BinaryOp::Max),
        "sendOutEdge" => IrOp::SendOutEdge(ch()?),
        "recvSrc" => IrOp::RecvSrc(ch()?),
        "sendInEdge" => IrOp::SendInEdge(ch()?),
        "recvDst" => IrOp::RecvDst(ch()?),
        "sendDstSum" => IrOp::SendDstSum(ch()?),
        "sendDstMax" => IrOp::SendDstMax(ch()?),
        "recvInEdge" => IrOp::RecvInEdge(ch()?),
        other => return Err(perr(line, format!("unknown op `{other}`"))),
    })
}

/// Parses the output of [`dump_ir`]. Operands must be defined before use.
pub fn parse_ir(text: &str) -> Result<IrProgram, IrError> {
    let mut p = IrProgram::default();
    let mut names: HashMap<String, usize> = HashMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        let head = if t.contains(" = ") { "" } else { toks[0] };
        match head {
            "weight" if toks.len() == 5 => {
                let shape = WeightShape {
                    types: kv(toks[2], "types", line)?,
                    rows: kv(toks[3], "rows", line)?,
                    cols: kv(toks[4], "cols", line)?,
                };
                p.weights.insert(toks[1].to_string(), shape);
            }
            "channel" if toks.len() == 4 => {
                let kind = match toks[2] {
                    "src_scatter" => ChannelKind::SrcScatter,
                    "dst_scatter" => ChannelKind::DstScatter,
                    "gather_sum" => ChannelKind::GatherSum,
                    "gather_max" => ChannelKind::GatherMax,
                    k => return Err(perr(line, format!("unknown channel kind `{k}`"))),
                };
                let id = toks[1]
                    .parse()
                    .map_err(|_| perr(line, format!("bad channel id `{}`", toks[1])))?;
                p.channels.push(Channel {
                    id,
                    kind,
                    dim: kv(toks[3], "dim", line)?,
                });
            }
            "segment" if toks.len() == 2 => {
                let parts: Vec<&str> = toks[1].split('.').collect();
                let label = match parts[0] {
                    "v" => SegLabel::Vertex,
                    "e" => SegLabel::Edge,
                    l => return Err(perr(line, format!("unknown segment label `{l}`"))),
                };
                let index = parts
                    .get(1)
                    .and_then(|i| i.parse().ok())
                    .ok_or_else(|| perr(line, "expected segment <v|e>.<index>"))?;
                let role = match parts.get(2) {
                    None => None,
                    Some(&"src") => Some(Role::Source),
                    Some(&"dst") => Some(Role::Destination),
                    Some(r) => return Err(perr(line, format!("unknown role `{r}`"))),
                };
                p.segments.push(Segment {
                    label,
                    index,
                    role,
                    nodes: Vec::new(),
                });
                names.clear();
            }
            _ => {
                let seg = p
                    .segments
                    .last_mut()
                    .ok_or_else(|| perr(line, "node outside a segment"))?;
                let (name, rest) = t
                    .split_once(" = ")
                    .ok_or_else(|| perr(line, "expected `name = op(args) : dim`"))?;
                let (body, dim) = rest
                    .rsplit_once(" : ")
                    .ok_or_else(|| perr(line, "missing `: dim`"))?;
                let dim = dim.trim().parse().map_err(|_| perr(line, "bad width"))?;
                let open = body.find('(').ok_or_else(|| perr(line, "missing `(`"))?;
                let args = body[open + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| perr(line, "missing `)`"))?;
                let head = &body[..open];
                let (opname, attr) = match head.find('[') {
                    Some(b) => (
                        &head[..b],
                        head[b + 1..]
                            .strip_suffix(']')
                            .ok_or_else(|| perr(line, "missing `]`"))?,
                    ),
                    None => (head, ""),
                };
                let op = make_op(opname, attr, line)?;
                let mut inputs = Vec::new();
                for a in args.split(',').map(str::trim).filter(|a| !a.is_empty()) {
                    inputs.push(
                        *names
                            .get(a)
                            .ok_or_else(|| perr(line, format!("undefined operand `{a}`")))?,
                    );
                }
                names.insert(name.to_string(), seg.nodes.len());
                seg.nodes.push(IrNode {
                    name: name.to_string(),
                    op,
                    inputs,
                    dim,
                });
            }
        }
    }
    Ok(p)
}
