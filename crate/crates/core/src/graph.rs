//! Input graphs: compressed adjacency, feature data, loaders, generators and
//! degree-sorted relabeling.
//!
//! Edge ids are assigned in `(dst, src)` order, so the in-edges of a vertex
//! occupy a contiguous id range with ascending sources. Every gather in the
//! crate reduces in ascending edge-id order, which makes the oracle and the
//! tiled runtime accumulate in the same sequence.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Matrix;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("invalid parameters: {0}")]
    Param(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Largest vertex id the 32-bit edge records can carry.
pub const MAX_VERTEX_ID: u64 = u32::MAX as u64 - 1;

/// Immutable directed graph with both out- and in-adjacency.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    num_vertices: usize,
    src: Vec<u32>,
    dst: Vec<u32>,
    in_offsets: Vec<usize>,
    out_offsets: Vec<usize>,
    out_targets: Vec<u32>,
    out_edge_ids: Vec<u32>,
    edge_types: Option<Vec<u8>>,
    num_types: usize,
}

impl Graph {
    pub fn empty() -> Self {
        Self::from_edges(0, std::iter::empty()).expect("empty graph")
    }

    /// Builds a graph over `num_vertices` vertices. Duplicate edges are dropped.
    pub fn from_edges(
        num_vertices: usize,
        edges: impl IntoIterator<Item = (u32, u32)>,
    ) -> Result<Self, GraphError> {
        let typed: Vec<_> = edges.into_iter().map(|(s, d)| (s, d, 0u8)).collect();
        Self::build(num_vertices, typed, None)
    }

    /// Builds a graph with per-edge type labels in `0..num_types`.
    pub fn from_typed_edges(
        num_vertices: usize,
        edges: Vec<(u32, u32, u8)>,
        num_types: usize,
    ) -> Result<Self, GraphError> {
        Self::build(num_vertices, edges, Some(num_types))
    }

    fn build(
        num_vertices: usize,
        mut edges: Vec<(u32, u32, u8)>,
        num_types: Option<usize>,
    ) -> Result<Self, GraphError> {
        if num_vertices as u64 > MAX_VERTEX_ID + 1 {
            return Err(GraphError::Capacity(format!(
                "{num_vertices} vertices exceed 32-bit ids"
            )));
        }
        for &(s, d, t) in &edges {
            if s as usize >= num_vertices || d as usize >= num_vertices {
                return Err(GraphError::Param(format!(
                    "edge {s}->{d} outside vertex range 0..{num_vertices}"
                )));
            }
            if let Some(r) = num_types {
                if t as usize >= r {
                    return Err(GraphError::Param(format!(
                        "edge type {t} outside 0..{r}"
                    )));
                }
            }
        }
        // stable sort keeps the first occurrence's type when deduplicating
        edges.sort_by_key(|&(s, d, _)| (d, s));
        edges.dedup_by_key(|e| (e.1, e.0));

        let n = num_vertices;
        let m = edges.len();
        let mut in_offsets = vec![0usize; n + 1];
        let mut out_counts = vec![0usize; n + 1];
        let mut src = Vec::with_capacity(m);
        let mut dst = Vec::with_capacity(m);
        let mut types = Vec::with_capacity(m);
        for &(s, d, t) in &edges {
            in_offsets[d as usize + 1] += 1;
            out_counts[s as usize + 1] += 1;
            src.push(s);
            dst.push(d);
            types.push(t);
        }
        for i in 0..n {
            in_offsets[i + 1] += in_offsets[i];
            out_counts[i + 1] += out_counts[i];
        }
        let out_offsets = out_counts.clone();
        let mut cursor = out_counts;
        let mut out_targets = vec![0u32; m];
        let mut out_edge_ids = vec![0u32; m];
        // edge ids ascend with dst for a fixed src, so targets come out sorted
        for e in 0..m {
            let s = src[e] as usize;
            out_targets[cursor[s]] = dst[e];
            out_edge_ids[cursor[s]] = e as u32;
            cursor[s] += 1;
        }
        Ok(Self {
            num_vertices: n,
            src,
            dst,
            in_offsets,
            out_offsets,
            out_targets,
            out_edge_ids,
            edge_types: num_types.map(|_| types),
            num_types: num_types.unwrap_or(0),
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    pub fn num_types(&self) -> usize {
        self.num_types
    }

    pub fn edge(&self, e: usize) -> (u32, u32) {
        (self.src[e], self.dst[e])
    }

    pub fn edge_src(&self) -> &[u32] {
        &self.src
    }

    pub fn edge_dst(&self) -> &[u32] {
        &self.dst
    }

    /// Type label of edge `e`, 0 when the graph is untyped.
    pub fn edge_type(&self, e: usize) -> u8 {
        self.edge_types.as_ref().map_or(0, |t| t[e])
    }

    pub fn edge_types(&self) -> Option<&[u8]> {
        self.edge_types.as_deref()
    }

    /// Edge ids of the in-edges of `v`, sorted by source.
    pub fn in_edges(&self, v: usize) -> Range<usize> {
        self.in_offsets[v]..self.in_offsets[v + 1]
    }

    pub fn in_neighbors(&self, v: usize) -> &[u32] {
        &self.src[self.in_edges(v)]
    }

    pub fn out_neighbors(&self, v: usize) -> &[u32] {
        &self.out_targets[self.out_offsets[v]..self.out_offsets[v + 1]]
    }

    pub fn out_edge_ids(&self, v: usize) -> &[u32] {
        &self.out_edge_ids[self.out_offsets[v]..self.out_offsets[v + 1]]
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.in_offsets[v + 1] - self.in_offsets[v]
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.out_offsets[v + 1] - self.out_offsets[v]
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        (0..self.num_vertices).map(|v| self.in_degree(v)).collect()
    }

    /// Edge set reconstructed from the out-adjacency.
    pub fn edges_from_out(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for v in 0..self.num_vertices {
            for &t in self.out_neighbors(v) {
                out.push((v as u32, t));
            }
        }
        out.sort_unstable();
        out
    }

    /// Edge set reconstructed from the in-adjacency.
    pub fn edges_from_in(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for v in 0..self.num_vertices {
            for &s in self.in_neighbors(v) {
                out.push((s, v as u32));
            }
        }
        out.sort_unstable();
        out
    }

    /// Copy of the graph with edge types drawn uniformly from `0..num_types`.
    pub fn with_random_types(&self, num_types: usize, seed: u64) -> Result<Self, GraphError> {
        if num_types == 0 || num_types > 256 {
            return Err(GraphError::Param(format!("type count {num_types} not in 1..=256")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges = (0..self.num_edges())
            .map(|e| (self.src[e], self.dst[e], rng.gen_range(0..num_types) as u8))
            .collect();
        Self::from_typed_edges(self.num_vertices, edges, num_types)
    }

    /// Relabels vertices. Returns the new graph and, for each old edge id, its new id.
    pub fn relabel(&self, perm: &Permutation) -> (Graph, Vec<u32>) {
        assert_eq!(perm.len(), self.num_vertices);
        let edges: Vec<_> = (0..self.num_edges())
            .map(|e| {
                (
                    perm.new_of_old[self.src[e] as usize],
                    perm.new_of_old[self.dst[e] as usize],
                    self.edge_type(e),
                )
            })
            .collect();
        let g = Self::build(
            self.num_vertices,
            edges.clone(),
            self.edge_types.as_ref().map(|_| self.num_types),
        )
        .expect("relabel preserves validity");
        let new_edge_of_old = edges
            .iter()
            .map(|&(s, d, _)| {
                let r = g.in_edges(d as usize);
                let pos = g.src[r.clone()]
                    .binary_search(&s)
                    .expect("edge present after relabel");
                (r.start + pos) as u32
            })
            .collect();
        (g, new_edge_of_old)
    }

    /// Edge-list text, one `src dst [etype]` per line.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for e in 0..self.num_edges() {
            match &self.edge_types {
                Some(t) => writeln!(s, "{} {} {}", self.src[e], self.dst[e], t[e]),
                None => writeln!(s, "{} {}", self.src[e], self.dst[e]),
            }
            .expect("write to string");
        }
        s
    }
}

/// Vertex (and optional edge) embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub vertex: Matrix,
    pub edge: Option<Matrix>,
}

impl FeatureSet {
    pub fn new(vertex: Matrix) -> Self {
        Self { vertex, edge: None }
    }

    pub fn embedding_dim(&self) -> usize {
        self.vertex.cols()
    }

    /// Seeded uniform features in `[-1, 1]`.
    pub fn random(num_vertices: usize, dim: usize, seed: u64) -> Self {
        Self::new(Matrix::random(num_vertices, dim, 1.0, seed))
    }

    pub fn validate(&self, g: &Graph) -> Result<(), GraphError> {
        if self.vertex.rows() != g.num_vertices() {
            return Err(GraphError::Param(format!(
                "vertex features have {} rows, graph has {} vertices",
                self.vertex.rows(),
                g.num_vertices()
            )));
        }
        if self.vertex.cols() == 0 {
            return Err(GraphError::Param("embedding dim must be at least 1".into()));
        }
        if let Some(ef) = &self.edge {
            if ef.rows() != g.num_edges() {
                return Err(GraphError::Param(format!(
                    "edge features have {} rows, graph has {} edges",
                    ef.rows(),
                    g.num_edges()
                )));
            }
        }
        Ok(())
    }

    /// Features rearranged to follow a relabeled graph.
    pub fn permuted(&self, perm: &Permutation, new_edge_of_old: Option<&[u32]>) -> Self {
        let vertex = self
            .vertex
            .select_rows(perm.old_of_new.iter().map(|&o| o as usize));
        let edge = self.edge.as_ref().map(|ef| {
            let map = new_edge_of_old.expect("edge features need the edge id map");
            let mut old_of_new = vec![0usize; map.len()];
            for (old, &new) in map.iter().enumerate() {
                old_of_new[new as usize] = old;
            }
            ef.select_rows(old_of_new)
        });
        Self { vertex, edge }
    }
}

/// Vertex relabeling; both directions are bijections on `0..V`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    pub new_of_old: Vec<u32>,
    pub old_of_new: Vec<u32>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        let ids: Vec<u32> = (0..n as u32).collect();
        Self {
            new_of_old: ids.clone(),
            old_of_new: ids,
        }
    }

    pub fn from_old_of_new(old_of_new: Vec<u32>) -> Result<Self, GraphError> {
        let n = old_of_new.len();
        let mut new_of_old = vec![u32::MAX; n];
        for (new, &old) in old_of_new.iter().enumerate() {
            let slot = new_of_old
                .get_mut(old as usize)
                .ok_or_else(|| GraphError::Param(format!("id {old} out of range")))?;
            if *slot != u32::MAX {
                return Err(GraphError::Param(format!("id {old} repeated")));
            }
            *slot = new as u32;
        }
        Ok(Self {
            new_of_old,
            old_of_new,
        })
    }

    pub fn len(&self) -> usize {
        self.new_of_old.len()
    }

    pub fn is_empty(&self) -> bool {
        self.new_of_old.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.new_of_old.iter().enumerate().all(|(i, &v)| v as usize == i)
    }

    /// Maps rows indexed by new ids back to old ids.
    pub fn unpermute_rows(&self, m: &Matrix) -> Matrix {
        m.select_rows(self.new_of_old.iter().map(|&n| n as usize))
    }
}

/// Relabels vertices by descending in-degree, ties by ascending original id.
pub fn degree_reorder(g: &Graph) -> (Graph, Permutation) {
    let mut order: Vec<u32> = (0..g.num_vertices() as u32).collect();
    order.sort_by_key(|&v| (std::cmp::Reverse(g.in_degree(v as usize)), v));
    let perm = Permutation::from_old_of_new(order).expect("sort yields a permutation");
    let (ng, _) = g.relabel(&perm);
    (ng, perm)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphFormat {
    EdgeList,
    MatrixMarket,
}

impl FromStr for GraphFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "edge-list" | "el" | "txt" => Ok(Self::EdgeList),
            "matrix-market" | "mtx" => Ok(Self::MatrixMarket),
            other => Err(format!("unknown graph format `{other}`")),
        }
    }
}

pub fn load_graph(path: &Path, format: GraphFormat) -> Result<Graph, GraphError> {
    let text = std::fs::read_to_string(path)?;
    match format {
        GraphFormat::EdgeList => parse_edge_list(&text),
        GraphFormat::MatrixMarket => parse_matrix_market(&text),
    }
}

fn parse_id(tok: &str, line: usize) -> Result<u64, GraphError> {
    let id: u64 = tok.parse().map_err(|_| GraphError::Parse {
        line,
        msg: format!("`{tok}` is not a non-negative integer"),
    })?;
    if id > MAX_VERTEX_ID {
        return Err(GraphError::Capacity(format!(
            "line {line}: vertex id {id} exceeds {MAX_VERTEX_ID}"
        )));
    }
    Ok(id)
}

/// Parses `src dst [etype]` lines; ids are compacted to `0..V` preserving order.
pub fn parse_edge_list(text: &str) -> Result<Graph, GraphError> {
    let mut raw = Vec::new();
    let mut typed = false;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks: Vec<&str> = body.split_whitespace().collect();
        if toks.len() < 2 || toks.len() > 3 {
            return Err(GraphError::Parse {
                line: lineno,
                msg: format!("expected `src dst [etype]`, got {} fields", toks.len()),
            });
        }
        let s = parse_id(toks[0], lineno)?;
        let d = parse_id(toks[1], lineno)?;
        let t = match toks.get(2) {
            Some(tok) => {
                typed = true;
                tok.parse::<u8>().map_err(|_| GraphError::Parse {
                    line: lineno,
                    msg: format!("edge type `{tok}` is not in 0..=255"),
                })?
            }
            None => 0,
        };
        raw.push((s, d, t));
    }
    let mut ids: BTreeMap<u64, u32> = BTreeMap::new();
    for &(s, d, _) in &raw {
        ids.insert(s, 0);
        ids.insert(d, 0);
    }
    for (i, slot) in ids.values_mut().enumerate() {
        *slot = i as u32;
    }
    let edges: Vec<_> = raw.iter().map(|&(s, d, t)| (ids[&s], ids[&d], t)).collect();
    if typed {
        let r = edges.iter().map(|e| e.2 as usize + 1).max().unwrap_or(1);
        Graph::from_typed_edges(ids.len(), edges, r)
    } else {
        Graph::from_edges(ids.len(), edges.into_iter().map(|(s, d, _)| (s, d)))
    }
}

/// Parses a Matrix Market coordinate file (1-indexed) as a directed graph.
/// Entry `(i, j)` becomes edge `i-1 -> j-1`; symmetric files are not expanded.
pub fn parse_matrix_market(text: &str) -> Result<Graph, GraphError> {
    let mut lines = text.lines().enumerate();
    let mut header_seen = false;
    let mut size: Option<(u64, u64)> = None;
    let mut edges = Vec::new();
    for (i, line) in lines.by_ref() {
        let lineno = i + 1;
        let t = line.trim();
        if t.starts_with("%%MatrixMarket") {
            let lower = t.to_ascii_lowercase();
            if !lower.contains("coordinate") {
                return Err(GraphError::Parse {
                    line: lineno,
                    msg: "only coordinate matrices are supported".into(),
                });
            }
            header_seen = true;
            continue;
        }
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if toks.len() != 3 {
                    return Err(GraphError::Parse {
                        line: lineno,
                        msg: "size line must be `rows cols nnz`".into(),
                    });
                }
                size = Some((parse_id(toks[0], lineno)?, parse_id(toks[1], lineno)?));
            }
            Some((rows, cols)) => {
                if toks.len() < 2 {
                    return Err(GraphError::Parse {
                        line: lineno,
                        msg: "entry needs row and column".into(),
                    });
                }
                let r = parse_id(toks[0], lineno)?;
                let c = parse_id(toks[1], lineno)?;
                if r == 0 || c == 0 || r > rows || c > cols {
                    return Err(GraphError::Parse {
                        line: lineno,
                        msg: format!("entry ({r}, {c}) outside 1..={rows} x 1..={cols}"),
                    });
                }
                edges.push(((r - 1) as u32, (c - 1) as u32));
            }
        }
    }
    if !header_seen && size.is_none() {
        return Ok(Graph::empty());
    }
    let (rows, cols) = size.ok_or(GraphError::Parse {
        line: 0,
        msg: "missing size line".into(),
    })?;
    Graph::from_edges(rows.max(cols) as usize, edges)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    ErdosRenyi,
    Rmat,
    Star,
    Chain,
}

impl FromStr for SyntheticKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "erdos-renyi" | "er" => Ok(Self::ErdosRenyi),
            "rmat" => Ok(Self::Rmat),
            "star" => Ok(Self::Star),
            "chain" => Ok(Self::Chain),
            other => Err(format!("unknown generator `{other}`")),
        }
    }
}

const RMAT_PROBS: [f64; 3] = [0.57, 0.19, 0.19];

/// Deterministic synthetic graphs. `e` is ignored for star and chain.
///
/// R-MAT ids are scrambled with a seeded permutation after sampling, so the
/// hub vertices are not clustered at low ids.
pub fn gen_synthetic(kind: SyntheticKind, v: usize, e: usize, seed: u64) -> Result<Graph, GraphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SyntheticKind::Star => Graph::from_edges(v, (1..v as u32).map(|i| (i, 0))),
        SyntheticKind::Chain => {
            Graph::from_edges(v, (1..v as u32).map(|i| (i - 1, i)))
        }
        SyntheticKind::ErdosRenyi | SyntheticKind::Rmat => {
            let cap = (v as u128) * (v as u128);
            if e as u128 > cap {
                return Err(GraphError::Param(format!(
                    "{e} edges requested but only {cap} possible on {v} vertices"
                )));
            }
            if e == 0 {
                return Graph::from_edges(v, std::iter::empty());
            }
            if kind == SyntheticKind::ErdosRenyi && (e as u128) * 2 > cap {
                let mut all: Vec<(u32, u32)> = (0..v as u32)
                    .flat_map(|s| (0..v as u32).map(move |d| (s, d)))
                    .collect();
                all.shuffle(&mut rng);
                all.truncate(e);
                return Graph::from_edges(v, all);
            }
            let scale = (v as f64).log2().ceil().max(0.0) as u32;
            let mut seen = HashSet::with_capacity(e);
            let mut edges = Vec::with_capacity(e);
            let budget = 200 * e as u64 + 10_000;
            let mut attempts = 0u64;
            while edges.len() < e {
                attempts += 1;
                if attempts > budget {
                    return Err(GraphError::Param(format!(
                        "could not draw {e} distinct edges on {v} vertices"
                    )));
                }
                let (s, d) = match kind {
                    SyntheticKind::ErdosRenyi => {
                        (rng.gen_range(0..v as u32), rng.gen_range(0..v as u32))
                    }
                    _ => rmat_pair(&mut rng, scale),
                };
                if s as usize >= v || d as usize >= v {
                    continue;
                }
                if seen.insert((s, d)) {
                    edges.push((s, d));
                }
            }
            if kind == SyntheticKind::Rmat {
                let mut ids: Vec<u32> = (0..v as u32).collect();
                ids.shuffle(&mut rng);
                for ed in &mut edges {
                    *ed = (ids[ed.0 as usize], ids[ed.1 as usize]);
                }
            }
            Graph::from_edges(v, edges)
        }
    }
}

fn rmat_pair(rng: &mut ChaCha8Rng, scale: u32) -> (u32, u32) {
    let (mut s, mut d) = (0u32, 0u32);
    for _ in 0..scale {
        let p: f64 = rng.gen();
        let (bs, bd) = if p < RMAT_PROBS[0] {
            (0, 0)
        } else if p < RMAT_PROBS[0] + RMAT_PROBS[1] {
            (0, 1)
        } else if p < RMAT_PROBS[0] + RMAT_PROBS[1] + RMAT_PROBS[2] {
            (1, 0)
        } else {
            (1, 1)
        };
        s = (s << 1) | bs;
        d = (d << 1) | bd;
    }
    (s, d)
}

/// The four-vertex example graph `{0->1, 0->2, 2->1, 3->0}` used throughout the tests.
pub fn example_g4() -> Graph {
    Graph::from_edges(4, [(0, 1), (0, 2), (2, 1), (3, 0)]).expect("valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_list_example() {
        let g = parse_edge_list("0 1\n0 2\n2 1\n3 0").unwrap();
        assert_eq!((g.num_vertices(), g.num_edges()), (4, 4));
        assert_eq!(g.edges_from_out(), g.edges_from_in());
    }

    #[test]
    fn empty_input() {
        let g = parse_edge_list("").unwrap();
        assert_eq!((g.num_vertices(), g.num_edges()), (0, 0));
        let g = parse_matrix_market("").unwrap();
        assert_eq!((g.num_vertices(), g.num_edges()), (0, 0));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_edge_list("0 1\n# c\n2 x\n").unwrap_err();
        match err {
            GraphError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn id_overflow_is_capacity_error() {
        let err = parse_edge_list("0 99999999999\n").unwrap_err();
        assert!(matches!(err, GraphError::Capacity(_)));
    }

    #[test]
    fn duplicates_dropped_self_loops_kept() {
        let g = parse_edge_list("0 1\n0 1\n1 1\n").unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.edges_from_in(), vec![(0, 1), (1, 1)]);
    }

    #[test]
    fn ids_compacted() {
        let g = parse_edge_list("10 30\n30 20\n").unwrap();
        assert_eq!(g.num_vertices(), 3);
        assert_eq!(g.edges_from_out(), vec![(0, 2), (2, 1)]);
    }

    #[test]
    fn matrix_market_one_indexed() {
        let text = "%%MatrixMarket matrix coordinate pattern general\n% c\n3 3 2\n1 2\n3 1\n";
        let g = parse_matrix_market(text).unwrap();
        assert_eq!(g.num_vertices(), 3);
        assert_eq!(g.edges_from_out(), vec![(0, 1), (2, 0)]);
    }

    #[test]
    fn typed_edge_list() {
        let g = parse_edge_list("0 1 2\n1 0 0\n").unwrap();
        assert_eq!(g.num_types(), 3);
        assert_eq!(g.edge_type(1), 2); // (0->1) sorts after (1->0) by dst
    }

    #[test]
    fn star_and_chain() {
        let s = gen_synthetic(SyntheticKind::Star, 5, 0, 0).unwrap();
        assert_eq!(s.in_degrees(), vec![4, 0, 0, 0, 0]);
        let c = gen_synthetic(SyntheticKind::Chain, 4, 0, 0).unwrap();
        assert_eq!(c.edges_from_out(), vec![(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn rmat_is_deterministic() {
        let a = gen_synthetic(SyntheticKind::Rmat, 256, 1024, 7).unwrap();
        let b = gen_synthetic(SyntheticKind::Rmat, 256, 1024, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.num_edges(), 1024);
        let c = gen_synthetic(SyntheticKind::Rmat, 256, 1024, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn infeasible_edge_count() {
        assert!(matches!(
            gen_synthetic(SyntheticKind::ErdosRenyi, 3, 10, 0),
            Err(GraphError::Param(_))
        ));
        let full = gen_synthetic(SyntheticKind::ErdosRenyi, 3, 9, 0).unwrap();
        assert_eq!(full.num_edges(), 9);
    }

    #[test]
    fn reorder_g4() {
        let (g, p) = degree_reorder(&example_g4());
        // brute force: stable sort of ids by (-indeg, id) over indeg [1,2,1,0]
        let indeg = [1usize, 2, 1, 0];
        let mut ids = vec![0u32, 1, 2, 3];
        ids.sort_by(|a, b| indeg[*b as usize].cmp(&indeg[*a as usize]).then(a.cmp(b)));
        assert_eq!(p.old_of_new, ids);
        assert_eq!(p.new_of_old, vec![1, 0, 2, 3]);
        assert_eq!(g.in_degrees(), vec![2, 1, 1, 0]);
    }

    #[test]
    fn reorder_fixed_point_and_empty() {
        let g = Graph::from_edges(3, [(1, 0), (2, 0), (2, 1)]).unwrap();
        let (_, p) = degree_reorder(&g);
        assert!(p.is_identity());
        let (_, p) = degree_reorder(&Graph::empty());
        assert!(p.is_empty());
    }

    #[test]
    fn relabel_maps_edge_ids() {
        let g = example_g4().with_random_types(3, 1).unwrap();
        let (ng, p) = degree_reorder(&g);
        let (_, map) = g.relabel(&p);
        for (e, &ne) in map.iter().enumerate() {
            let (s, d) = g.edge(e);
            let ne = ne as usize;
            assert_eq!(
                ng.edge(ne),
                (p.new_of_old[s as usize], p.new_of_old[d as usize])
            );
            assert_eq!(ng.edge_type(ne), g.edge_type(e));
        }
    }

    #[test]
    fn edge_list_roundtrip() {
        let g = gen_synthetic(SyntheticKind::Rmat, 64, 300, 3).unwrap();
        let g1 = parse_edge_list(&g.to_edge_list()).unwrap();
        let g2 = parse_edge_list(&g1.to_edge_list()).unwrap();
        assert_eq!(g1, g2);
    }
}
