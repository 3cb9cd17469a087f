//! Code generation: replica specialization, region planning, emission of
//! the source/edge/destination stream functions and the binary format.

mod emit;
mod encode;
mod specialize;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::Channel;
use crate::model::Reduce;
use crate::tiling::{TilingPlan, EDGE_RECORD_BYTES};

pub use emit::{emit, RegionLayout};
pub use encode::{decode, encode, DecodeError, FORMAT_VERSION, MAGIC};
pub use specialize::specialize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodegenError {
    #[error("source data of segment {0} depends on a gather")]
    SourceNeedsGather(String),
    #[error("unresolvable synchronization: {0}")]
    Deadlock(String),
    #[error("program is not specialized: {0}")]
    NotSpecialized(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Opcode {
    Add = 0,
    Sub,
    Mul,
    Div,
    Max,
    Exp,
    Relu,
    Sigmoid,
    Gemv,
    Gemm,
    Bmm,
    GthrDstSum,
    GthrDstMax,
    SctrOutE,
    SctrInE,
    LdSrc,
    LdDst,
    LdEdge,
    StDst,
    Signal,
    Wait,
    FchTile,
    FchPtt,
    UpdPtt,
    ChkPtt,
}

impl Opcode {
    pub const ALL: [Opcode; 25] = [
        Opcode::Add,
        Opcode::Sub,
        Opcode::Mul,
        Opcode::Div,
        Opcode::Max,
        Opcode::Exp,
        Opcode::Relu,
        Opcode::Sigmoid,
        Opcode::Gemv,
        Opcode::Gemm,
        Opcode::Bmm,
        Opcode::GthrDstSum,
        Opcode::GthrDstMax,
        Opcode::SctrOutE,
        Opcode::SctrInE,
        Opcode::LdSrc,
        Opcode::LdDst,
        Opcode::LdEdge,
        Opcode::StDst,
        Opcode::Signal,
        Opcode::Wait,
        Opcode::FchTile,
        Opcode::FchPtt,
        Opcode::UpdPtt,
        Opcode::ChkPtt,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Add => "ADD",
            Opcode::Sub => "SUB",
            Opcode::Mul => "MUL",
            Opcode::Div => "DIV",
            Opcode::Max => "MAX",
            Opcode::Exp => "EXP",
            Opcode::Relu => "RELU",
            Opcode::Sigmoid => "SIGMOID",
            Opcode::Gemv => "GEMV",
            Opcode::Gemm => "GEMM",
            Opcode::Bmm => "BMM",
            Opcode::GthrDstSum => "GTHR.DST.SUM",
            Opcode::GthrDstMax => "GTHR.DST.MAX",
            Opcode::SctrOutE => "SCTR.OUTE",
            Opcode::SctrInE => "SCTR.INE",
            Opcode::LdSrc => "LD.SRC",
            Opcode::LdDst => "LD.DST",
            Opcode::LdEdge => "LD.EDGE",
            Opcode::StDst => "ST.DST",
            Opcode::Signal => "SIGNAL",
            Opcode::Wait => "WAIT",
            Opcode::FchTile => "FCH.TILE",
            Opcode::FchPtt => "FCH.PTT",
            Opcode::UpdPtt => "UPD.PTT",
            Opcode::ChkPtt => "CHK.PTT",
        }
    }

    pub fn from_u8(b: u8) -> Option<Opcode> {
        Opcode::ALL.get(b as usize).copied()
    }

    pub fn is_matrix(self) -> bool {
        matches!(self, Opcode::Gemm | Opcode::Bmm)
    }

    pub fn is_vector(self) -> bool {
        matches!(
            self,
            Opcode::Add
                | Opcode::Sub
                | Opcode::Mul
                | Opcode::Div
                | Opcode::Max
                | Opcode::Exp
                | Opcode::Relu
                | Opcode::Sigmoid
                | Opcode::Gemv
                | Opcode::GthrDstSum
                | Opcode::GthrDstMax
                | Opcode::SctrOutE
                | Opcode::SctrInE
        )
    }

    pub fn is_memory(self) -> bool {
        matches!(
            self,
            Opcode::LdSrc | Opcode::LdDst | Opcode::LdEdge | Opcode::StDst | Opcode::FchTile | Opcode::UpdPtt
        )
    }

    pub fn is_sync(self) -> bool {
        matches!(self, Opcode::Signal | Opcode::Wait | Opcode::ChkPtt | Opcode::FchPtt)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// Row space an instruction iterates over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Space {
    None = 0,
    /// Kept source vertices of the current tile.
    Src,
    /// Edges of the current tile.
    Edge,
    /// Vertices of the current destination partition.
    Dst,
}

/// Stream class addressed by a SIGNAL.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    S,
    E,
    D,
    /// Decided at run time by the preceding CHK.PTT.
    Routed,
}

impl Target {
    pub fn code(self) -> u32 {
        match self {
            Target::S => 0,
            Target::E => 1,
            Target::D => 2,
            Target::Routed => 3,
        }
    }

    pub fn from_code(c: u32) -> Option<Target> {
        [Target::S, Target::E, Target::D, Target::Routed].get(c as usize).copied()
    }
}

/// Marker for an absent region operand.
pub const NO_REGION: u32 = u32::MAX;

/// Fixed-width instruction. Region operands index the program's region table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub opcode: Opcode,
    pub space: Space,
    /// Round (s/e functions) or stage (d function) the instruction belongs to.
    pub round: u16,
    pub dim: u32,
    pub dim_in: u32,
    pub dst: u32,
    pub src_a: u32,
    pub src_b: u32,
    /// Weight region for products; target class code for SIGNAL.
    pub aux: u32,
    pub channel: u32,
}

impl Instruction {
    pub fn new(opcode: Opcode, space: Space, round: u16) -> Self {
        Self {
            opcode,
            space,
            round,
            dim: 0,
            dim_in: 0,
            dst: NO_REGION,
            src_a: NO_REGION,
            src_b: NO_REGION,
            aux: 0,
            channel: u32::MAX,
        }
    }

    pub fn signal(round: u16, target: Target) -> Self {
        Self {
            aux: target.code(),
            ..Self::new(Opcode::Signal, Space::None, round)
        }
    }

    pub fn target(&self) -> Option<Target> {
        (self.opcode == Opcode::Signal).then(|| Target::from_code(self.aux)).flatten()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Occupancy {
    TileSrc = 0,
    TileEdge,
    PartitionDst,
    Weights,
}

/// A statically planned embedding-memory region holding one value per
/// item of its space (or a weight tensor).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub base: u64,
    pub extent: u64,
    pub occupancy: Occupancy,
    pub dim: u32,
    /// Weight stacks only.
    pub types: u32,
    pub rows: u32,
    /// Accumulators: reduction whose identity initializes the region.
    pub init: Option<Reduce>,
    /// Accumulators: round whose UPD.PTT initializes them.
    pub init_round: u16,
    /// Tile regions: last round that touches them.
    pub last_round: u16,
}

impl Region {
    pub fn end(&self) -> u64 {
        self.base + self.extent
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub s_function: Vec<Instruction>,
    pub e_function: Vec<Instruction>,
    pub d_function: Vec<Instruction>,
    pub regions: Vec<Region>,
    pub channels: Vec<Channel>,
    /// Number of source/edge rounds per partition.
    pub rounds: u16,
}

/// Stream function selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Function {
    S,
    E,
    D,
}

impl Program {
    pub fn function(&self, f: Function) -> &[Instruction] {
        match f {
            Function::S => &self.s_function,
            Function::E => &self.e_function,
            Function::D => &self.d_function,
        }
    }

    pub fn function_mut(&mut self, f: Function) -> &mut Vec<Instruction> {
        match f {
            Function::S => &mut self.s_function,
            Function::E => &mut self.e_function,
            Function::D => &mut self.d_function,
        }
    }

    pub fn opcodes(&self, f: Function) -> Vec<Opcode> {
        self.function(f).iter().map(|i| i.opcode).collect()
    }

    pub fn region(&self, id: u32) -> Option<&Region> {
        self.regions.get(id as usize)
    }

    /// Bytes of embedding memory the region table spans.
    pub fn footprint(&self) -> u64 {
        self.regions.iter().map(Region::end).max().unwrap_or(0)
    }

    pub fn instruction_count(&self) -> usize {
        self.s_function.len() + self.e_function.len() + self.d_function.len()
    }

    /// Human-readable listing, one instruction per line.
    pub fn disassemble(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "; rounds {}", self.rounds);
        for (i, r) in self.regions.iter().enumerate() {
            let _ = writeln!(
                out,
                "; region {i} {} {:?} base={} extent={} dim={}",
                r.name, r.occupancy, r.base, r.extent, r.dim
            );
        }
        for (f, name) in [(Function::S, "s"), (Function::E, "e"), (Function::D, "d")] {
            let _ = writeln!(out, "{name}_function:");
            for (pc, ins) in self.function(f).iter().enumerate() {
                let _ = writeln!(out, "  {pc:3}  {}", self.format_instruction(ins));
            }
        }
        out
    }

    pub fn format_instruction(&self, ins: &Instruction) -> String {
        let reg = |id: u32| {
            self.region(id)
                .map(|r| r.name.clone())
                .unwrap_or_else(|| "-".to_string())
        };
        let mut s = format!("{:<13} r{}", ins.opcode.mnemonic(), ins.round);
        match ins.opcode {
            Opcode::Signal => {
                let t = match ins.target() {
                    Some(Target::S) => "s",
                    Some(Target::E) => "e",
                    Some(Target::D) => "d",
                    Some(Target::Routed) => "routed",
                    None => "?",
                };
                s.push_str(&format!(" -> {t}"));
            }
            Opcode::Wait | Opcode::FchTile | Opcode::FchPtt | Opcode::UpdPtt | Opcode::ChkPtt => {}
            _ => {
                s.push_str(&format!(" {} <- {}", reg(ins.dst), reg(ins.src_a)));
                if ins.src_b != NO_REGION {
                    s.push_str(&format!(", {}", reg(ins.src_b)));
                }
                if matches!(ins.opcode, Opcode::Gemm | Opcode::Gemv | Opcode::Bmm) {
                    s.push_str(&format!(" x {}", reg(ins.aux)));
                }
                s.push_str(&format!(" [{}x{}]", ins.dim_in, ins.dim));
            }
        }
        s
    }

    /// Static check that every data operand names a region of the right
    /// space and width.
    pub fn check_operands(&self) -> Result<(), String> {
        let occ_of = |s: Space| match s {
            Space::Src => Some(Occupancy::TileSrc),
            Space::Edge => Some(Occupancy::TileEdge),
            Space::Dst => Some(Occupancy::PartitionDst),
            Space::None => None,
        };
        for f in [Function::S, Function::E, Function::D] {
            for (pc, ins) in self.function(f).iter().enumerate() {
                let here = format!("{f:?}[{pc}] {}", ins.opcode);
                let get = |id: u32| {
                    self.region(id)
                        .ok_or_else(|| format!("{here}: region {id} out of range"))
                };
                match ins.opcode {
                    Opcode::LdSrc | Opcode::LdDst | Opcode::LdEdge => {
                        let r = get(ins.dst)?;
                        if Some(r.occupancy) != occ_of(ins.space) || r.dim != ins.dim {
                            return Err(format!("{here}: load exceeds region {}", r.name));
                        }
                    }
                    Opcode::StDst => {
                        let r = get(ins.src_a)?;
                        if r.occupancy != Occupancy::PartitionDst || r.dim != ins.dim {
                            return Err(format!("{here}: store exceeds region {}", r.name));
                        }
                    }
                    op if op.is_matrix() || op.is_vector() => {
                        let d = get(ins.dst)?;
                        let a = get(ins.src_a)?;
                        if d.dim != ins.dim || d.extent < d.dim as u64 * 4 {
                            return Err(format!("{here}: result exceeds region {}", d.name));
                        }
                        if matches!(op, Opcode::Gemm | Opcode::Gemv | Opcode::Bmm) {
                            let w = get(ins.aux)?;
                            if w.occupancy != Occupancy::Weights || w.rows != ins.dim_in || a.dim != ins.dim_in {
                                return Err(format!("{here}: weight shape mismatch"));
                            }
                        }
                        if ins.src_b != NO_REGION {
                            get(ins.src_b)?;
                        }
                    }
                    _ => {}
                }
            }
        }
        let mut sorted: Vec<&Region> = self.regions.iter().collect();
        sorted.sort_by_key(|r| r.base);
        for w in sorted.windows(2) {
            if w[0].end() > w[1].base {
                return Err(format!("regions {} and {} overlap", w[0].name, w[1].name));
            }
        }
        Ok(())
    }

    /// Off-chip bytes `(read, written)` the program moves for a plan.
    pub fn predict_offchip(&self, plan: &TilingPlan) -> (u64, u64) {
        let mut read = 0u64;
        let mut write = 0u64;
        let src_loads: u64 = plan.tiles().map(|t| t.num_sources() as u64).sum();
        let edges = plan.num_edges as u64;
        let verts = plan.num_vertices as u64;
        for ins in self.s_function.iter().chain(&self.e_function).chain(&self.d_function) {
            let row = ins.dim as u64 * 4;
            match ins.opcode {
                Opcode::LdSrc => read += src_loads * row,
                Opcode::LdEdge => read += edges * row,
                Opcode::LdDst => read += verts * row,
                Opcode::StDst => write += verts * row,
                _ => {}
            }
        }
        if !self.e_function.is_empty() {
            read += self.rounds as u64 * edges * EDGE_RECORD_BYTES;
        }
        (read, write)
    }
}
