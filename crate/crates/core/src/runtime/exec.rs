use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::deadlock::{detect_deadlock, DeadlockReport};
use super::protocol::{Class, Protocol, ProtocolError, StreamConfig, Step};
use super::trace::{Stall, Trace, TraceEvent};
use super::RuntimeError;
use crate::codegen::{Instruction, Occupancy, Opcode, Program, Region, NO_REGION};
use crate::graph::{FeatureSet, Graph};
use crate::kernels;
use crate::model::{BinaryOp, Reduce, UnaryOp};
use crate::tensor::{Matrix, Weights};
use crate::tiling::{Tile, TilingPlan};

/// Per-edge values waiting to be folded into an accumulator.
struct Contribution {
    region: u32,
    reduce: Reduce,
    dst: Vec<u32>,
    rows: Matrix,
}

struct Memory<'a> {
    prog: &'a Program,
    plan: &'a TilingPlan,
    feats: &'a FeatureSet,
    weights: &'a Weights,
    tile_base: Vec<usize>,
    tiles: BTreeMap<(usize, u32), Matrix>,
    dst: HashMap<u32, Matrix>,
    staged: BTreeMap<usize, Vec<Contribution>>,
    complete: BTreeSet<usize>,
    next_fold: usize,
    out: Option<Matrix>,
    live: u64,
    peak: u64,
    read: u64,
    write: u64,
}

fn shape(msg: impl Into<String>) -> RuntimeError {
    RuntimeError::Shape(msg.into())
}

impl<'a> Memory<'a> {
    fn region(&self, id: u32) -> Result<&'a Region, RuntimeError> {
        self.prog
            .region(id)
            .ok_or_else(|| shape(format!("region {id} out of range")))
    }

    fn tile(&self, p: usize, t: usize) -> &'a Tile {
        &self.plan.partitions[p].tiles[t]
    }

    fn grow(&mut self, bytes: u64) {
        self.live += bytes;
        self.peak = self.peak.max(self.live);
    }

    fn read_region(&self, id: u32, key: usize) -> Result<&Matrix, RuntimeError> {
        let r = self.region(id)?;
        let m = match r.occupancy {
            Occupancy::TileSrc | Occupancy::TileEdge => self.tiles.get(&(key, id)),
            Occupancy::PartitionDst => self.dst.get(&id),
            Occupancy::Weights => None,
        };
        m.ok_or_else(|| RuntimeError::Uninitialized(r.name.clone()))
    }

    fn write_region(&mut self, id: u32, key: usize, m: Matrix) -> Result<(), RuntimeError> {
        let r = self.region(id)?;
        if m.cols() != r.dim as usize {
            return Err(shape(format!("{} holds width {}, got {}", r.name, r.dim, m.cols())));
        }
        let bytes = m.bytes();
        let old = match r.occupancy {
            Occupancy::TileSrc | Occupancy::TileEdge => self.tiles.insert((key, id), m),
            Occupancy::PartitionDst => self.dst.insert(id, m),
            Occupancy::Weights => return Err(shape(format!("write to weight region {}", r.name))),
        };
        self.live -= old.map_or(0, |o| o.bytes());
        self.grow(bytes);
        Ok(())
    }

    fn weight(&self, id: u32) -> Result<&'a crate::tensor::WeightTensor, RuntimeError> {
        let r = self.region(id)?;
        let name = r.name.strip_prefix("w:").unwrap_or(&r.name);
        let w = self
            .weights
            .get(name)
            .ok_or_else(|| RuntimeError::MissingWeight(name.to_string()))?;
        if w.types < r.types as usize || w.rows != r.rows as usize || w.cols != r.dim as usize {
            return Err(shape(format!("weight {name} does not match its region")));
        }
        Ok(w)
    }

    fn new_partition(&mut self) {
        let freed: u64 = self.dst.values().map(Matrix::bytes).sum();
        self.live -= freed;
        self.dst.clear();
    }

    fn start_round(&mut self, p: usize, round: u16) -> Result<(), RuntimeError> {
        self.staged.clear();
        self.complete.clear();
        self.next_fold = 0;
        let rows = self.plan.partitions[p].num_vertices();
        for (id, r) in self.prog.regions.iter().enumerate() {
            if let Some(reduce) = r.init {
                if r.init_round == round {
                    let m = Matrix::filled(rows, r.dim as usize, reduce.identity());
                    self.write_region(id as u32, 0, m)?;
                }
            }
        }
        Ok(())
    }

    /// Folds finished tiles into accumulators in ascending tile order.
    fn fold(&mut self) -> Result<(), RuntimeError> {
        while self.complete.remove(&self.next_fold) {
            for c in self.staged.remove(&self.next_fold).unwrap_or_default() {
                self.live -= c.rows.bytes();
                let acc = self
                    .dst
                    .get_mut(&c.region)
                    .ok_or_else(|| RuntimeError::Uninitialized(format!("accumulator {}", c.region)))?;
                for (i, &d) in c.dst.iter().enumerate() {
                    kernels::reduce_into(c.reduce, acc.row_mut(d as usize), c.rows.row(i));
                }
            }
            self.next_fold += 1;
        }
        Ok(())
    }

    fn end_tile(&mut self, key: usize, ordinal: usize, round: u16) -> Result<(), RuntimeError> {
        let dead: Vec<(usize, u32)> = self
            .tiles
            .range((key, 0)..=(key, u32::MAX))
            .filter(|((_, id), _)| self.prog.regions[*id as usize].last_round <= round)
            .map(|(k, _)| *k)
            .collect();
        for k in dead {
            let m = self.tiles.remove(&k).expect("present");
            self.live -= m.bytes();
        }
        self.complete.insert(ordinal);
        self.fold()
    }

    fn apply(&mut self, step: &Step) -> Result<(), RuntimeError> {
        let Some(p) = step.partition else {
            if step.new_partition {
                self.new_partition();
            }
            return Ok(());
        };
        for &t in &step.fetched {
            self.read += self.tile(p, t).edge_list_bytes();
        }
        let ins = &step.ins;
        match ins.opcode {
            Opcode::FchPtt => self.new_partition(),
            Opcode::UpdPtt => self.start_round(p, ins.round)?,
            Opcode::Signal | Opcode::Wait | Opcode::FchTile | Opcode::ChkPtt => {}
            _ => self.data(ins, p, step.tile)?,
        }
        if step.section_end && step.stream.class == Class::E {
            let t = step.tile.expect("eStream holds a tile");
            self.end_tile(self.tile_base[p] + t, t, step.round)?;
        }
        Ok(())
    }

    fn data(&mut self, ins: &Instruction, p: usize, tile: Option<usize>) -> Result<(), RuntimeError> {
        let part = &self.plan.partitions[p];
        let ordinal = tile;
        let key = ordinal.map_or(0, |t| self.tile_base[p] + t);
        let tile = ordinal.map(|t| self.tile(p, t));
        let need_tile = || tile.ok_or_else(|| shape(format!("{} outside a tile", ins.opcode)));
        let dim = ins.dim as usize;
        let load = |src: &Matrix, idx: &mut dyn Iterator<Item = usize>| -> Result<Matrix, RuntimeError> {
            if src.cols() != dim {
                return Err(shape(format!("{} expects width {dim}, input has {}", ins.opcode, src.cols())));
            }
            Ok(src.select_rows(idx))
        };
        let result = match ins.opcode {
            Opcode::LdSrc => {
                let t = need_tile()?;
                let m = load(&self.feats.vertex, &mut t.kept_sources.iter().map(|&v| v as usize))?;
                self.read += m.bytes();
                m
            }
            Opcode::LdEdge => {
                let t = need_tile()?;
                let e = self.feats.edge.as_ref().ok_or_else(|| shape("program reads edge features"))?;
                let m = load(e, &mut t.edges.iter().map(|e| e.id as usize))?;
                self.read += m.bytes();
                m
            }
            Opcode::LdDst => {
                let m = load(&self.feats.vertex, &mut (part.dst_range.start as usize..part.dst_range.end as usize))?;
                self.read += m.bytes();
                m
            }
            Opcode::StDst => {
                let v = self.read_region(ins.src_a, key)?.clone();
                let n = self.plan.num_vertices;
                let out = self.out.get_or_insert_with(|| Matrix::zeros(n, dim));
                for (i, v_id) in (part.dst_range.start as usize..part.dst_range.end as usize).enumerate() {
                    out.row_mut(v_id).copy_from_slice(v.row(i));
                }
                self.write += v.bytes();
                return Ok(());
            }
            Opcode::SctrOutE | Opcode::SctrInE => {
                let t = need_tile()?;
                let src = self.read_region(ins.src_a, key)?;
                let m = if ins.opcode == Opcode::SctrOutE {
                    src.select_rows(t.edges.iter().map(|e| e.src as usize))
                } else {
                    src.select_rows(t.edges.iter().map(|e| e.dst as usize))
                };
                m
            }
            Opcode::GthrDstSum | Opcode::GthrDstMax => {
                let t = need_tile()?;
                let rows = self.read_region(ins.src_a, key)?.clone();
                let reduce = if ins.opcode == Opcode::GthrDstSum { Reduce::Sum } else { Reduce::Max };
                self.grow(rows.bytes());
                self.staged.entry(ordinal.expect("tile ordinal")).or_default().push(Contribution {
                    region: ins.dst,
                    reduce,
                    dst: t.edges.iter().map(|e| e.dst).collect(),
                    rows,
                });
                return Ok(());
            }
            Opcode::Gemm | Opcode::Gemv | Opcode::Bmm => {
                let w = self.weight(ins.aux)?;
                let a = self.read_region(ins.src_a, key)?;
                if a.cols() != w.rows {
                    return Err(shape(format!("{}: operand width {} vs weight rows {}", ins.opcode, a.cols(), w.rows)));
                }
                let mut out = Matrix::zeros(a.rows(), dim);
                for i in 0..a.rows() {
                    let ty = if ins.opcode == Opcode::Bmm {
                        need_tile()?.edges[i].etype as usize
                    } else {
                        0
                    };
                    if ty >= w.types {
                        return Err(shape(format!("edge type {ty} has no weight slab")));
                    }
                    kernels::matvec(a.row(i), w.slab(ty), out.row_mut(i));
                }
                out
            }
            op => {
                let a = self.read_region(ins.src_a, key)?;
                let mut out = Matrix::zeros(a.rows(), dim);
                if let Some(u) = unary_of(op) {
                    for i in 0..a.rows() {
                        kernels::unary_row(u, a.row(i), out.row_mut(i));
                    }
                } else {
                    let b = self.read_region(ins.src_b, key)?;
                    let bop = binary_of(op).ok_or_else(|| shape(format!("unexpected opcode {op}")))?;
                    if b.rows() != a.rows() {
                        return Err(shape(format!("{op}: operand rows differ")));
                    }
                    for i in 0..a.rows() {
                        kernels::binary_row(bop, a.row(i), b.row(i), out.row_mut(i));
                    }
                }
                out
            }
        };
        if ins.dst == NO_REGION {
            return Err(shape(format!("{} has no destination", ins.opcode)));
        }
        self.write_region(ins.dst, key, result)
    }
}

fn unary_of(op: Opcode) -> Option<UnaryOp> {
    Some(match op {
        Opcode::Exp => UnaryOp::Exp,
        Opcode::Relu => UnaryOp::Relu,
        Opcode::Sigmoid => UnaryOp::Sigmoid,
        _ => return None,
    })
}

fn binary_of(op: Opcode) -> Option<BinaryOp> {
    Some(match op {
        Opcode::Add => BinaryOp::Add,
        Opcode::Sub => BinaryOp::Sub,
        Opcode::Mul => BinaryOp::Mul,
        Opcode::Div => BinaryOp::Div,
        Opcode::Max => BinaryOp::Max,
        _ => return None,
    })
}

/// Upper bound on protocol steps for a terminating run.
fn step_limit(prog: &Program, plan: &TilingPlan) -> usize {
    let per_tile = prog.s_function.len() + prog.e_function.len() + 2;
    let per_partition = prog.d_function.len() + 1;
    (plan.num_tiles() * per_tile + (plan.partitions.len() + 1) * per_partition) * 4 + 64
}

/// Runs `prog` over every partition of `plan` with one dStream, `n_s`
/// sStreams and `n_e` eStreams interleaved round-robin at instruction
/// granularity. Results do not depend on the stream counts.
pub fn execute(
    prog: &Program,
    plan: &TilingPlan,
    g: &Graph,
    feats: &FeatureSet,
    weights: &Weights,
    cfg: StreamConfig,
) -> Result<(FeatureSet, Trace), RuntimeError> {
    feats.validate(g).map_err(|e| shape(e.to_string()))?;
    if plan.num_vertices != g.num_vertices() || plan.num_edges != g.num_edges() {
        return Err(shape("plan was built for a different graph"));
    }
    let proto = Protocol::new(prog, plan, cfg)?;
    let mut tile_base = Vec::with_capacity(plan.partitions.len());
    let mut acc = 0;
    for p in &plan.partitions {
        tile_base.push(acc);
        acc += p.tiles.len();
    }
    let mut mem = Memory {
        prog,
        plan,
        feats,
        weights,
        tile_base,
        tiles: BTreeMap::new(),
        dst: HashMap::new(),
        staged: BTreeMap::new(),
        complete: BTreeSet::new(),
        next_fold: 0,
        out: None,
        live: 0,
        peak: 0,
        read: 0,
        write: 0,
    };
    let mut trace = Trace::default();
    let mut st = proto.initial();
    let limit = step_limit(prog, plan);
    let mut cursor = 0;
    while !st.finished {
        let Some(i) = proto.pick(&st, cursor) else {
            trace.stall = Some(Stall {
                step: trace.events.len(),
                blocked: (0..st.streams.len())
                    .filter_map(|i| proto.blocked_on(&st, i).map(|w| (st.streams[i].id, w)))
                    .collect(),
            });
            let report = detect_deadlock(&trace).unwrap_or_else(|| DeadlockReport::unknown(trace.events.len()));
            return Err(RuntimeError::Deadlock(Box::new(report)));
        };
        if trace.events.len() >= limit {
            return Err(RuntimeError::StepLimit(limit));
        }
        let step = proto.step(&mut st, i)?;
        mem.apply(&step)?;
        trace.events.push(TraceEvent::from_step(trace.events.len(), &step));
        cursor = i + 1;
    }
    trace.peak_live_bytes = mem.peak;
    trace.offchip_read_bytes = mem.read;
    trace.offchip_write_bytes = mem.write;
    let out = match mem.out {
        Some(m) => m,
        None => {
            let st = prog.d_function.iter().find(|i| i.opcode == Opcode::StDst);
            Matrix::zeros(plan.num_vertices, st.ok_or(RuntimeError::NoOutput)?.dim as usize)
        }
    };
    Ok((FeatureSet::new(out), trace))
}

impl From<ProtocolError> for RuntimeError {
    fn from(e: ProtocolError) -> Self {
        RuntimeError::Protocol(e)
    }
}
