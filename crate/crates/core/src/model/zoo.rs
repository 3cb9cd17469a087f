//! The five benchmark layers.

use std::fmt;
use std::str::FromStr;

use super::{BinaryOp, Domain, ModelError, ModelGraph, ModelOp, Reduce, UnaryOp};

/// Number of edge types used by the relational model.
pub const RGCN_TYPES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelName {
    Gcn,
    Gat,
    Sage,
    Ggnn,
    Rgcn,
}

impl ModelName {
    pub const ALL: [ModelName; 5] = [
        ModelName::Gcn,
        ModelName::Gat,
        ModelName::Sage,
        ModelName::Ggnn,
        ModelName::Rgcn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Gcn => "gcn",
            ModelName::Gat => "gat",
            ModelName::Sage => "sage",
            ModelName::Ggnn => "ggnn",
            ModelName::Rgcn => "rgcn",
        }
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelName {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelName::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| ModelError::UnknownModel(s.to_string()))
    }
}

/// Builds one layer of a benchmark model mapping `f_in` to `f_out` features.
pub fn build_model(name: ModelName, f_in: usize, f_out: usize) -> Result<ModelGraph, ModelError> {
    if f_in == 0 || f_out == 0 {
        return Err(ModelError::Invalid("embedding widths must be at least 1".into()));
    }
    let m = match name {
        ModelName::Gcn => gcn(f_in, f_out),
        ModelName::Gat => gat(f_in, f_out),
        ModelName::Sage => sage(f_in, f_out),
        ModelName::Ggnn => ggnn(f_in, f_out),
        ModelName::Rgcn => rgcn(f_in, f_out),
    }?;
    m.validate()?;
    Ok(m)
}

fn gcn(f_in: usize, f_out: usize) -> Result<ModelGraph, ModelError> {
    let mut m = ModelGraph::new();
    let h = m.input("h", Domain::Vertex, f_in);
    let w = m.weight("W", f_in, f_out);
    let s = m.op("msg", ModelOp::ScatterSrc, &[h])?;
    let a = m.op("agg", ModelOp::Gather(Reduce::Sum), &[s])?;
    let x = m.op("lin", ModelOp::Matmul, &[a, w])?;
    let r = m.op("act", ModelOp::Unary(UnaryOp::Relu), &[x])?;
    m.output("out", r)?;
    Ok(m)
}

/// Single-head attention with a max-shifted edge softmax.
fn gat(f_in: usize, f_out: usize) -> Result<ModelGraph, ModelError> {
    let mut m = ModelGraph::new();
    let h = m.input("h", Domain::Vertex, f_in);
    let w = m.weight("W", f_in, f_out);
    let al = m.weight("a_src", f_out, 1);
    let ar = m.weight("a_dst", f_out, 1);
    let z = m.op("z", ModelOp::Matmul, &[h, w])?;
    let zs = m.op("z_src", ModelOp::ScatterSrc, &[z])?;
    let zd = m.op("z_dst", ModelOp::ScatterDst, &[z])?;
    let el = m.op("score_src", ModelOp::Matmul, &[zs, al])?;
    let er = m.op("score_dst", ModelOp::Matmul, &[zd, ar])?;
    let e = m.op("score", ModelOp::Binary(BinaryOp::Add), &[el, er])?;
    let mx = m.op("score_max", ModelOp::Gather(Reduce::Max), &[e])?;
    let mxe = m.op("score_max_e", ModelOp::ScatterDst, &[mx])?;
    let sh = m.op("shifted", ModelOp::Binary(BinaryOp::Sub), &[e, mxe])?;
    let ex = m.op("weight", ModelOp::Unary(UnaryOp::Exp), &[sh])?;
    let den = m.op("denom", ModelOp::Gather(Reduce::Sum), &[ex])?;
    let dene = m.op("denom_e", ModelOp::ScatterDst, &[den])?;
    let alpha = m.op("alpha", ModelOp::Binary(BinaryOp::Div), &[ex, dene])?;
    let msg = m.op("msg", ModelOp::Binary(BinaryOp::Mul), &[zs, alpha])?;
    let agg = m.op("agg", ModelOp::Gather(Reduce::Sum), &[msg])?;
    m.output("out", agg)?;
    Ok(m)
}

/// Max-pool aggregator; concatenation realized as two products plus a sum.
fn sage(f_in: usize, f_out: usize) -> Result<ModelGraph, ModelError> {
    let mut m = ModelGraph::new();
    let h = m.input("h", Domain::Vertex, f_in);
    let wp = m.weight("W_pool", f_in, f_in);
    let ws = m.weight("W_self", f_in, f_out);
    let wn = m.weight("W_neigh", f_in, f_out);
    let p = m.op("pool_lin", ModelOp::Matmul, &[h, wp])?;
    let p = m.op("pool", ModelOp::Unary(UnaryOp::Relu), &[p])?;
    let s = m.op("pool_e", ModelOp::ScatterSrc, &[p])?;
    let n = m.op("neigh", ModelOp::Gather(Reduce::Max), &[s])?;
    let a = m.op("self_lin", ModelOp::Matmul, &[h, ws])?;
    let b = m.op("neigh_lin", ModelOp::Matmul, &[n, wn])?;
    let c = m.op("combined", ModelOp::Binary(BinaryOp::Add), &[a, b])?;
    m.output("out", c)?;
    Ok(m)
}

/// Sum aggregation followed by a GRU cell built from products and
/// element-wise operators.
fn ggnn(f_in: usize, f_out: usize) -> Result<ModelGraph, ModelError> {
    let mut m = ModelGraph::new();
    let h = m.input("h", Domain::Vertex, f_in);
    let wm = m.weight("W_msg", f_in, f_out);
    let wh = (f_in != f_out).then(|| m.weight("W_h", f_in, f_out));
    let mut gate_w = Vec::new();
    for g in ["z", "r", "n"] {
        let w = m.weight(&format!("W_{g}"), f_out, f_out);
        let u = m.weight(&format!("U_{g}"), f_out, f_out);
        gate_w.push((w, u));
    }

    let msg = m.op("msg", ModelOp::Matmul, &[h, wm])?;
    let se = m.op("msg_e", ModelOp::ScatterSrc, &[msg])?;
    let a = m.op("agg", ModelOp::Gather(Reduce::Sum), &[se])?;
    let hh = match wh {
        Some(w) => m.op("h_proj", ModelOp::Matmul, &[h, w])?,
        None => h,
    };

    let zp = gate(&mut m, "z", a, hh, gate_w[0])?;
    let z = m.op("z", ModelOp::Unary(UnaryOp::Sigmoid), &[zp])?;
    let rp = gate(&mut m, "r", a, hh, gate_w[1])?;
    let r = m.op("r", ModelOp::Unary(UnaryOp::Sigmoid), &[rp])?;
    let rh = m.op("reset_h", ModelOp::Binary(BinaryOp::Mul), &[r, hh])?;
    let np = gate(&mut m, "n", a, rh, gate_w[2])?;
    let n = tanh(&mut m, "n", np)?;

    let d = m.op("h_minus_n", ModelOp::Binary(BinaryOp::Sub), &[hh, n])?;
    let zd = m.op("z_gate", ModelOp::Binary(BinaryOp::Mul), &[z, d])?;
    let out = m.op("h_new", ModelOp::Binary(BinaryOp::Add), &[n, zd])?;
    m.output("out", out)?;
    Ok(m)
}

fn gate(
    m: &mut ModelGraph,
    g: &str,
    x: usize,
    hid: usize,
    (w, u): (usize, usize),
) -> Result<usize, ModelError> {
    let p = m.op(&format!("{g}_x"), ModelOp::Matmul, &[x, w])?;
    let q = m.op(&format!("{g}_h"), ModelOp::Matmul, &[hid, u])?;
    m.op(&format!("{g}_pre"), ModelOp::Binary(BinaryOp::Add), &[p, q])
}

/// `tanh(x) = sigmoid(2x) - sigmoid(-2x)`, using only add/sub/sigmoid.
fn tanh(m: &mut ModelGraph, p: &str, x: usize) -> Result<usize, ModelError> {
    let two = m.op(&format!("{p}_2x"), ModelOp::Binary(BinaryOp::Add), &[x, x])?;
    let zero = m.op(&format!("{p}_zero"), ModelOp::Binary(BinaryOp::Sub), &[two, two])?;
    let neg = m.op(&format!("{p}_neg2x"), ModelOp::Binary(BinaryOp::Sub), &[zero, two])?;
    let a = m.op(&format!("{p}_sp"), ModelOp::Unary(UnaryOp::Sigmoid), &[two])?;
    let b = m.op(&format!("{p}_sn"), ModelOp::Unary(UnaryOp::Sigmoid), &[neg])?;
    m.op(&format!("{p}_tanh"), ModelOp::Binary(BinaryOp::Sub), &[a, b])
}

fn rgcn(f_in: usize, f_out: usize) -> Result<ModelGraph, ModelError> {
    let mut m = ModelGraph::new();
    let h = m.input("h", Domain::Vertex, f_in);
    let w = m.typed_weight("W_rel", RGCN_TYPES, f_in, f_out);
    let s = m.op("h_e", ModelOp::ScatterSrc, &[h])?;
    let x = m.op("msg", ModelOp::Bmm, &[s, w])?;
    let a = m.op("agg", ModelOp::Gather(Reduce::Sum), &[x])?;
    m.output("out", a)?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(m: &ModelGraph, kw: &str) -> usize {
        m.kind_counts().get(kw).copied().unwrap_or(0)
    }

    #[test]
    fn gcn_node_multiset() {
        let m = build_model(ModelName::Gcn, 128, 128).unwrap();
        let mut kinds: Vec<String> = m.nodes.iter().map(|n| n.op.keyword()).collect();
        kinds.sort();
        let mut want = ["input", "input", "scatter_src", "gather_sum", "matmul", "relu", "output"];
        want.sort();
        assert_eq!(kinds, want);
    }

    #[test]
    fn rgcn_has_one_bmm() {
        let m = build_model(ModelName::Rgcn, 16, 16).unwrap();
        assert_eq!(count(&m, "bmm"), 1);
    }

    #[test]
    fn gat_has_two_gathers() {
        let m = build_model(ModelName::Gat, 16, 8).unwrap();
        assert!(count(&m, "gather_sum") + count(&m, "gather_max") >= 2);
    }

    #[test]
    fn all_models_validate_with_odd_widths() {
        for name in ModelName::ALL {
            for (a, b) in [(1, 1), (3, 5), (8, 2)] {
                build_model(name, a, b).unwrap();
            }
        }
    }

    #[test]
    fn unknown_name() {
        assert!(matches!("nosuch".parse::<ModelName>(), Err(ModelError::UnknownModel(_))));
        assert_eq!("GCN".parse::<ModelName>().unwrap(), ModelName::Gcn);
    }
}
