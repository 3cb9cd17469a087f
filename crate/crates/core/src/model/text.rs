//! Line-oriented model description format.
//!
//! ```text
//! # one node per line
//! h   = input() [domain=vertex, dim=16]
//! W   = input() [domain=weight, rows=16, cols=8]
//! m   = scatter_src(h)
//! a   = gather_sum(m)
//! x   = matmul(a, W)
//! out = output(x)
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;

use super::{BinaryOp, Domain, ModelError, ModelGraph, ModelOp, Reduce, UnaryOp};

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> ModelError {
    ModelError::Syntax {
        line,
        col,
        msg: msg.into(),
    }
}

fn is_ident(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(ch) if ch.is_ascii_alphabetic() || ch == '_')
        && c.all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
}

fn op_from_keyword(kw: &str) -> Option<ModelOp> {
    Some(match kw {
        "input" => ModelOp::Input,
        "matmul" => ModelOp::Matmul,
        "bmm" => ModelOp::Bmm,
        "exp" => ModelOp::Unary(UnaryOp::Exp),
        "relu" => ModelOp::Unary(UnaryOp::Relu),
        "sigmoid" => ModelOp::Unary(UnaryOp::Sigmoid),
        "add" => ModelOp::Binary(BinaryOp::Add),
        "sub" => ModelOp::Binary(BinaryOp::Sub),
        "mul" => ModelOp::Binary(BinaryOp::Mul),
        "div" => ModelOp::Binary(BinaryOp::Div),
        "max" => ModelOp::Binary(BinaryOp::Max),
        "scatter_src" => ModelOp::ScatterSrc,
        "scatter_dst" => ModelOp::ScatterDst,
        "gather_sum" => ModelOp::Gather(Reduce::Sum),
        "gather_max" => ModelOp::Gather(Reduce::Max),
        "output" => ModelOp::Output,
        "fused" => ModelOp::Fused(String::new()),
        _ => return None,
    })
}

/// Parses a model description and validates it.
pub fn parse_model(text: &str) -> Result<ModelGraph, ModelError> {
    let mut m = ModelGraph::new();
    let mut ids: HashMap<String, usize> = HashMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let body = raw.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        let col_of = |s: &str| s.as_ptr() as usize - raw.as_ptr() as usize + 1;

        let (lhs, rhs) = body
            .split_once('=')
            .ok_or_else(|| syntax(line, 1, "expected `name = kind(args)`"))?;
        let name = lhs.trim();
        if !is_ident(name) {
            return Err(syntax(line, 1, format!("invalid node name `{name}`")));
        }
        if ids.contains_key(name) {
            return Err(syntax(line, 1, format!("duplicate node name `{name}`")));
        }

        let rhs_t = rhs.trim_start();
        let open = rhs_t
            .find('(')
            .ok_or_else(|| syntax(line, col_of(rhs_t), "expected `(`"))?;
        let kw = rhs_t[..open].trim();
        let mut op = op_from_keyword(kw)
            .ok_or_else(|| syntax(line, col_of(rhs_t), format!("unknown operation `{kw}`")))?;
        let after = &rhs_t[open + 1..];
        let close = after
            .find(')')
            .ok_or_else(|| syntax(line, col_of(after), "expected `)`"))?;
        let args_s = &after[..close];
        let rest = after[close + 1..].trim();

        let mut args = Vec::new();
        for a in args_s.split(',').map(str::trim).filter(|a| !a.is_empty()) {
            let id = *ids
                .get(a)
                .ok_or_else(|| syntax(line, col_of(args_s), format!("undefined name `{a}`")))?;
            args.push(id);
        }

        let mut attrs = BTreeMap::new();
        if !rest.is_empty() {
            let inner = rest
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(|| syntax(line, col_of(rest), "expected `[key=value, ...]`"))?;
            for kv in inner.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| syntax(line, col_of(rest), format!("bad attribute `{kv}`")))?;
                attrs.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let num = |k: &str| -> Result<Option<usize>, ModelError> {
            attrs
                .get(k)
                .map(|v| {
                    v.parse::<usize>()
                        .map_err(|_| syntax(line, col_of(rest), format!("`{k}` must be an integer")))
                })
                .transpose()
        };

        let id = match op {
            ModelOp::Input => {
                if !args.is_empty() {
                    return Err(syntax(line, col_of(args_s), "input takes no operands"));
                }
                let domain = match attrs.get("domain").map(String::as_str) {
                    Some("vertex") => Domain::Vertex,
                    Some("edge") => Domain::Edge,
                    Some("weight") => Domain::Weight,
                    Some(d) => return Err(syntax(line, col_of(rest), format!("bad domain `{d}`"))),
                    None => return Err(syntax(line, col_of(raw), "input needs a `domain`")),
                };
                if domain == Domain::Weight {
                    let rows = num("rows")?.ok_or_else(|| syntax(line, col_of(raw), "weight needs `rows`"))?;
                    let cols = num("cols")?.ok_or_else(|| syntax(line, col_of(raw), "weight needs `cols`"))?;
                    let types = num("types")?.unwrap_or(1);
                    m.typed_weight(name, types, rows, cols)
                } else {
                    let dim = num("dim")?.ok_or_else(|| syntax(line, col_of(raw), "input needs `dim`"))?;
                    m.input(name, domain, dim)
                }
            }
            _ => {
                if let ModelOp::Fused(tag) = &mut op {
                    *tag = attrs
                        .get("tag")
                        .cloned()
                        .ok_or_else(|| syntax(line, col_of(raw), "fused needs a `tag`"))?;
                }
                m.op(name, op, &args)?
            }
        };
        ids.insert(name.to_string(), id);
    }
    m.validate()?;
    Ok(m)
}

/// Renders a model in the text format; `parse_model(to_text(m)) == m`.
pub fn to_text(m: &ModelGraph) -> String {
    let mut out = String::new();
    for n in &m.nodes {
        let args: Vec<&str> = n.inputs.iter().map(|&i| m.nodes[i].name.as_str()).collect();
        let kw = match &n.op {
            ModelOp::Fused(_) => "fused".to_string(),
            op => op.keyword(),
        };
        let _ = write!(out, "{} = {}({})", n.name, kw, args.join(", "));
        match (&n.op, n.weight) {
            (ModelOp::Input, Some(w)) => {
                let _ = write!(out, " [domain=weight, types={}, rows={}, cols={}]", w.types, w.rows, w.cols);
            }
            (ModelOp::Input, None) => {
                let _ = write!(out, " [domain={}, dim={}]", n.info.domain, n.info.dim);
            }
            (ModelOp::Fused(tag), _) => {
                let _ = write!(out, " [tag={tag}]");
            }
            _ => {}
        }
        out.push('\n');
    }
    out
}
