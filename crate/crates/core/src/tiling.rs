//! Grid tiling of the adjacency matrix into destination partitions and
//! source-partition tiles, in regular or sparse form.

use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Graph;
use crate::model::{Domain, ModelGraph};
use crate::timing::HardwareConfig;

/// Bytes per edge record in a tile: local src, local dst, edge id (u32 each),
/// edge type (u8), padded to 16.
pub const EDGE_RECORD_BYTES: u64 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TilingMode {
    Regular,
    Sparse,
}

impl FromStr for TilingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regular" => Ok(Self::Regular),
            "sparse" => Ok(Self::Sparse),
            other => Err(format!("unknown tiling mode `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TileEdge {
    /// Index into the tile's `kept_sources`.
    pub src: u32,
    /// Offset from the partition's first destination vertex.
    pub dst: u32,
    pub id: u32,
    pub etype: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tile {
    pub tile_id: usize,
    pub src_range: Range<u32>,
    pub kept_sources: Vec<u32>,
    /// Sorted by `(dst, src)`.
    pub edges: Vec<TileEdge>,
}

impl Tile {
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_sources(&self) -> usize {
        self.kept_sources.len()
    }

    pub fn edge_list_bytes(&self) -> u64 {
        self.edges.len() as u64 * EDGE_RECORD_BYTES
    }

    /// Out-degree inside the tile of each kept source, in kept order.
    pub fn source_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.kept_sources.len()];
        for e in &self.edges {
            deg[e.src as usize] += 1;
        }
        deg
    }

    /// In-degree inside the tile of each destination that has an edge, ascending.
    pub fn destination_degrees(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut last = None;
        for e in &self.edges {
            if last == Some(e.dst) {
                *out.last_mut().expect("nonempty") += 1;
            } else {
                out.push(1);
                last = Some(e.dst);
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub dst_range: Range<u32>,
    pub tiles: Vec<Tile>,
}

impl Partition {
    pub fn num_vertices(&self) -> usize {
        (self.dst_range.end - self.dst_range.start) as usize
    }

    pub fn num_edges(&self) -> usize {
        self.tiles.iter().map(Tile::num_edges).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TilingPlan {
    pub dst_partition_size: usize,
    pub src_partition_size: usize,
    pub mode: TilingMode,
    pub num_vertices: usize,
    pub num_edges: usize,
    pub partitions: Vec<Partition>,
}

impl TilingPlan {
    pub fn num_tiles(&self) -> usize {
        self.partitions.iter().map(|p| p.tiles.len()).sum()
    }

    pub fn tiles(&self) -> impl Iterator<Item = &Tile> {
        self.partitions.iter().flat_map(|p| p.tiles.iter())
    }

    pub fn max_tile_sources(&self) -> usize {
        self.tiles().map(Tile::num_sources).max().unwrap_or(0)
    }

    pub fn max_tile_edges(&self) -> usize {
        self.tiles().map(Tile::num_edges).max().unwrap_or(0)
    }

    pub fn max_partition_vertices(&self) -> usize {
        self.partitions
            .iter()
            .map(Partition::num_vertices)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Error)]
pub enum TilingError {
    #[error("partition sizes must be at least 1 (got dst={dst}, src={src})")]
    ZeroSize { dst: usize, src: usize },
}

/// Splits `g` into `ceil(V/dst_size)` partitions, each with up to
/// `ceil(V/src_size)` tiles. Sparse mode drops empty tiles and keeps only the
/// sources that have an edge in the tile.
pub fn make_plan(
    g: &Graph,
    dst_size: usize,
    src_size: usize,
    mode: TilingMode,
) -> Result<TilingPlan, TilingError> {
    if dst_size == 0 || src_size == 0 {
        return Err(TilingError::ZeroSize {
            dst: dst_size,
            src: src_size,
        });
    }
    let n = g.num_vertices();
    let num_src_parts = n.div_ceil(src_size);
    let mut partitions = Vec::with_capacity(n.div_ceil(dst_size));
    let mut next_id = 0usize;
    let mut start = 0usize;
    while start < n {
        let end = (start + dst_size).min(n);
        // (global src, local dst, edge id, type) per candidate tile
        let mut buckets: Vec<Vec<(u32, u32, u32, u8)>> = vec![Vec::new(); num_src_parts];
        for v in start..end {
            for e in g.in_edges(v) {
                let s = g.edge_src()[e];
                buckets[s as usize / src_size].push((s, (v - start) as u32, e as u32, g.edge_type(e)));
            }
        }
        let mut tiles = Vec::new();
        for (k, bucket) in buckets.into_iter().enumerate() {
            if mode == TilingMode::Sparse && bucket.is_empty() {
                continue;
            }
            let lo = (k * src_size) as u32;
            let hi = ((k + 1) * src_size).min(n) as u32;
            let kept_sources: Vec<u32> = match mode {
                TilingMode::Regular => (lo..hi).collect(),
                TilingMode::Sparse => {
                    let mut s: Vec<u32> = bucket.iter().map(|b| b.0).collect();
                    s.sort_unstable();
                    s.dedup();
                    s
                }
            };
            let edges = bucket
                .iter()
                .map(|&(s, d, id, etype)| TileEdge {
                    src: kept_sources.binary_search(&s).expect("source kept") as u32,
                    dst: d,
                    id,
                    etype,
                })
                .collect();
            tiles.push(Tile {
                tile_id: next_id,
                src_range: lo..hi,
                kept_sources,
                edges,
            });
            next_id += 1;
        }
        partitions.push(Partition {
            dst_range: start as u32..end as u32,
            tiles,
        });
        start = end;
    }
    Ok(TilingPlan {
        dst_partition_size: dst_size,
        src_partition_size: src_size,
        mode,
        num_vertices: n,
        num_edges: g.num_edges(),
        partitions,
    })
}

/// Largest square partition size whose destination accumulators plus one
/// tile's source embeddings fit in half of the embedding memory.
pub fn auto_sizes(g: &Graph, hw: &HardwareConfig, dim: usize) -> (usize, usize) {
    let per_vertex = (dim.max(1) * 4) as u64;
    let budget = hw.uem_bytes / 2;
    let size = (budget / (2 * per_vertex)).max(1) as usize;
    let size = size.min(g.num_vertices().max(1));
    (size, size)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficReport {
    pub src_vertex_loads: u64,
    pub dst_vertex_loads: u64,
    pub edge_loads: u64,
    pub total_bytes: u64,
}

impl TrafficReport {
    /// Flat `key=value` lines.
    pub fn to_kv(&self) -> String {
        format!(
            "src_vertex_loads={}\ndst_vertex_loads={}\nedge_loads={}\ntotal_bytes={}\n",
            self.src_vertex_loads, self.dst_vertex_loads, self.edge_loads, self.total_bytes
        )
    }
}

/// Analytic off-chip traffic of a plan for a single embedding width.
pub fn traffic_stats(plan: &TilingPlan, dim: usize, bytes_per_value: usize) -> TrafficReport {
    let src_vertex_loads: u64 = plan.tiles().map(|t| t.num_sources() as u64).sum();
    let dst_vertex_loads: u64 = plan.partitions.iter().map(|p| p.num_vertices() as u64).sum();
    let edge_loads: u64 = plan.tiles().map(|t| t.num_edges() as u64).sum();
    let row = (dim * bytes_per_value) as u64;
    TrafficReport {
        src_vertex_loads,
        dst_vertex_loads,
        edge_loads,
        total_bytes: (src_vertex_loads + dst_vertex_loads) * row + edge_loads * EDGE_RECORD_BYTES,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("tile {tile_id}: {what} needs {required} bytes but only {available} are available")]
pub struct CapacityError {
    pub tile_id: usize,
    pub what: &'static str,
    pub required: u64,
    pub available: u64,
}

/// Checks every tile against the tile hub and embedding memory capacities.
pub fn check_capacity(
    plan: &TilingPlan,
    hw: &HardwareConfig,
    model: &ModelGraph,
) -> Result<(), CapacityError> {
    let vertex_width = model.total_dim(Domain::Vertex) as u64 * 4;
    let edge_width = model.total_dim(Domain::Edge) as u64 * 4;
    for part in &plan.partitions {
        let dst_bytes = part.num_vertices() as u64 * vertex_width;
        for t in &part.tiles {
            if t.edge_list_bytes() > hw.tilehub_bytes {
                return Err(CapacityError {
                    tile_id: t.tile_id,
                    what: "edge list",
                    required: t.edge_list_bytes(),
                    available: hw.tilehub_bytes,
                });
            }
            let working =
                dst_bytes + t.num_sources() as u64 * vertex_width + t.num_edges() as u64 * edge_width;
            if working > hw.uem_bytes {
                return Err(CapacityError {
                    tile_id: t.tile_id,
                    what: "embedding working set",
                    required: working,
                    available: hw.uem_bytes,
                });
            }
        }
    }
    Ok(())
}
