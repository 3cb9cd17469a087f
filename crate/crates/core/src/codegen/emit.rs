use std::collections::HashMap;

use super::{CodegenError, Instruction, Occupancy, Opcode, Program, Region, Space, Target};
use crate::ir::{IrOp, IrProgram, NodeRef, Role, SegLabel};
use crate::model::{BinaryOp, UnaryOp};
use crate::tiling::TilingPlan;

const ALIGN: u64 = 64;

/// Row counts used to size regions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RegionLayout {
    pub max_src: usize,
    pub max_edges: usize,
    pub max_dst: usize,
}

impl RegionLayout {
    pub fn from_plan(plan: &TilingPlan) -> Self {
        Self {
            max_src: plan.max_tile_sources().max(1),
            max_edges: plan.max_tile_edges().max(1),
            max_dst: plan.max_partition_vertices().max(1),
        }
    }

    pub fn uniform(rows: usize) -> Self {
        Self {
            max_src: rows,
            max_edges: rows,
            max_dst: rows,
        }
    }

    fn rows(&self, occ: Occupancy) -> u64 {
        (match occ {
            Occupancy::TileSrc => self.max_src,
            Occupancy::TileEdge => self.max_edges,
            Occupancy::PartitionDst => self.max_dst,
            Occupancy::Weights => 0,
        }) as u64
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Place {
    Source,
    Edge,
    Destination,
}

fn elw_opcode(op: &IrOp) -> Option<Opcode> {
    Some(match op {
        IrOp::Unary(UnaryOp::Exp) => Opcode::Exp,
        IrOp::Unary(UnaryOp::Relu) => Opcode::Relu,
        IrOp::Unary(UnaryOp::Sigmoid) => Opcode::Sigmoid,
        IrOp::Binary(BinaryOp::Add) => Opcode::Add,
        IrOp::Binary(BinaryOp::Sub) => Opcode::Sub,
        IrOp::Binary(BinaryOp::Mul) => Opcode::Mul,
        IrOp::Binary(BinaryOp::Div) => Opcode::Div,
        IrOp::Binary(BinaryOp::Max) => Opcode::Max,
        _ => return None,
    })
}

/// Emits the three stream functions for a specialized program.
///
/// Destination work is split into stages separated by gathers; stage `k+1`
/// starts once round `k` of source/edge work has covered every tile of the
/// partition. Edge values that later rounds still read stay resident
/// between rounds.
pub fn emit(p: &IrProgram, layout: &RegionLayout) -> Result<Program, CodegenError> {
    let place_of = |s: usize| -> Result<Place, CodegenError> {
        let seg = &p.segments[s];
        match (seg.label, seg.role) {
            (SegLabel::Edge, _) => Ok(Place::Edge),
            (SegLabel::Vertex, Some(Role::Source)) => Ok(Place::Source),
            (SegLabel::Vertex, Some(Role::Destination)) => Ok(Place::Destination),
            (SegLabel::Vertex, None) => Err(CodegenError::NotSpecialized(seg.title())),
        }
    };
    let order = p
        .global_order()
        .ok_or_else(|| CodegenError::Deadlock("channel graph has a cycle".into()))?;
    let send_of = |c: usize| {
        p.find_send(c)
            .ok_or_else(|| CodegenError::Deadlock(format!("channel {c} has no sender")))
    };
    let recv_of = |c: usize| {
        p.find_recv(c)
            .ok_or_else(|| CodegenError::Deadlock(format!("channel {c} has no receiver")))
    };

    // Round (source/edge) or stage (destination) of every node.
    let mut level: HashMap<NodeRef, u16> = HashMap::new();
    let mut rounds = 0u16;
    for &r in &order {
        let n = p.node(r);
        let from_inputs = n.inputs.iter().map(|&i| level[&(r.0, i)]).max().unwrap_or(0);
        let l = match (place_of(r.0)?, &n.op) {
            (Place::Source, _) => 0,
            (Place::Edge, IrOp::RecvSrc(_)) => 0,
            (Place::Edge, IrOp::RecvDst(c)) => level[&send_of(*c)?],
            (Place::Destination, IrOp::RecvInEdge(c)) => level[&send_of(*c)?] + 1,
            _ => from_inputs,
        };
        if place_of(r.0)? == Place::Edge {
            rounds = rounds.max(l + 1);
        }
        level.insert(r, l);
    }

    // Region table: weights first, then one region per materialized value.
    let mut regions: Vec<Region> = Vec::new();
    let mut weight_region: HashMap<&str, u32> = HashMap::new();
    for (name, w) in &p.weights {
        weight_region.insert(name.as_str(), regions.len() as u32);
        regions.push(Region {
            name: format!("w:{name}"),
            base: 0,
            extent: (w.types * w.rows * w.cols * 4) as u64,
            occupancy: Occupancy::Weights,
            dim: w.cols as u32,
            types: w.types as u32,
            rows: w.rows as u32,
            init: None,
            init_round: 0,
            last_round: 0,
        });
    }
    let mut region_of: HashMap<NodeRef, u32> = HashMap::new();
    for &r in &order {
        let n = p.node(r);
        if n.op.is_send() || matches!(n.op, IrOp::Output { .. }) {
            continue;
        }
        let occupancy = match place_of(r.0)? {
            Place::Source => Occupancy::TileSrc,
            Place::Edge => Occupancy::TileEdge,
            Place::Destination => Occupancy::PartitionDst,
        };
        let (init, init_round) = match n.op {
            IrOp::RecvInEdge(c) => {
                let kind = p.channel(c).expect("verified channel").kind;
                (kind.reduce(), level[&r] - 1)
            }
            _ => (None, 0),
        };
        region_of.insert(r, regions.len() as u32);
        regions.push(Region {
            name: format!("{}:{}", p.segments[r.0].title(), n.name),
            base: 0,
            extent: layout.rows(occupancy) * n.dim as u64 * 4,
            occupancy,
            dim: n.dim as u32,
            types: 0,
            rows: 0,
            init,
            init_round,
            last_round: 0,
        });
    }
    // A send's value lives in its operand's region.
    let value_region = |r: NodeRef| -> u32 {
        let n = p.node(r);
        if n.op.is_send() || matches!(n.op, IrOp::Output { .. }) {
            region_of[&(r.0, n.inputs[0])]
        } else {
            region_of[&r]
        }
    };

    let mut s_body: Vec<Instruction> = Vec::new();
    let mut e_rounds: Vec<Vec<Instruction>> = vec![Vec::new(); rounds as usize];
    let mut d_stages: Vec<Vec<Instruction>> = vec![Vec::new(); rounds as usize + 1];
    for &r in &order {
        let n = p.node(r);
        let place = place_of(r.0)?;
        let l = level[&r];
        let space = match place {
            Place::Source => Space::Src,
            Place::Edge => Space::Edge,
            Place::Destination => Space::Dst,
        };
        let arg = |k: usize| value_region((r.0, n.inputs[k]));
        let mut ins = Instruction::new(Opcode::Add, space, l);
        ins.dim = n.dim as u32;
        let emitted = match &n.op {
            IrOp::Input { .. } => {
                ins.opcode = match place {
                    Place::Source => Opcode::LdSrc,
                    Place::Edge => Opcode::LdEdge,
                    Place::Destination => Opcode::LdDst,
                };
                ins.dst = region_of[&r];
                Some(ins)
            }
            IrOp::Output { .. } => {
                ins.opcode = Opcode::StDst;
                ins.src_a = arg(0);
                Some(ins)
            }
            IrOp::Mv { weight } | IrOp::BmmRow { weight } => {
                ins.opcode = match n.op {
                    IrOp::BmmRow { .. } => Opcode::Bmm,
                    _ if n.dim == 1 => Opcode::Gemv,
                    _ => Opcode::Gemm,
                };
                ins.dst = region_of[&r];
                ins.src_a = arg(0);
                ins.dim_in = p.segments[r.0].nodes[n.inputs[0]].dim as u32;
                ins.aux = weight_region[weight.as_str()];
                Some(ins)
            }
            op @ (IrOp::Unary(_) | IrOp::Binary(_)) => {
                ins.opcode = elw_opcode(op).expect("element-wise op");
                ins.dst = region_of[&r];
                ins.src_a = arg(0);
                if n.inputs.len() > 1 {
                    ins.src_b = arg(1);
                }
                Some(ins)
            }
            IrOp::SendOutEdge(c) => {
                ins.opcode = Opcode::SctrOutE;
                ins.space = Space::Edge;
                ins.dst = region_of[&recv_of(*c)?];
                ins.src_a = arg(0);
                ins.channel = *c as u32;
                Some(ins)
            }
            IrOp::RecvDst(c) => {
                ins.opcode = Opcode::SctrInE;
                ins.dst = region_of[&r];
                ins.src_a = value_region(send_of(*c)?);
                ins.channel = *c as u32;
                Some(ins)
            }
            IrOp::SendDstSum(c) | IrOp::SendDstMax(c) => {
                ins.opcode = if matches!(n.op, IrOp::SendDstSum(_)) {
                    Opcode::GthrDstSum
                } else {
                    Opcode::GthrDstMax
                };
                ins.dst = region_of[&recv_of(*c)?];
                ins.src_a = arg(0);
                ins.channel = *c as u32;
                Some(ins)
            }
            IrOp::RecvSrc(_) | IrOp::RecvInEdge(_) | IrOp::SendInEdge(_) => None,
        };
        if let Some(ins) = emitted {
            match place {
                Place::Source => s_body.push(ins),
                Place::Edge => e_rounds[l as usize].push(ins),
                Place::Destination => d_stages[l as usize].push(ins),
            }
        }
    }

    let mut prog = Program {
        rounds,
        channels: p.channels.clone(),
        ..Program::default()
    };
    prog.d_function.push(Instruction::new(Opcode::FchPtt, Space::None, 0));
    prog.d_function.append(&mut d_stages[0]);
    for k in 0..rounds {
        let ku = k as usize;
        prog.d_function.push(Instruction::new(Opcode::UpdPtt, Space::None, k));
        prog.d_function.push(Instruction::signal(k, Target::S));
        prog.d_function.push(Instruction::new(Opcode::Wait, Space::None, k));
        prog.d_function.append(&mut d_stages[ku + 1]);

        prog.s_function.push(Instruction::new(Opcode::Wait, Space::None, k));
        if k == 0 {
            prog.s_function.append(&mut s_body);
        }
        prog.s_function.push(Instruction::signal(k, Target::E));

        prog.e_function.push(Instruction::new(Opcode::Wait, Space::None, k));
        prog.e_function.append(&mut e_rounds[ku]);
        prog.e_function.push(Instruction::new(Opcode::FchTile, Space::None, k));
        prog.e_function.push(Instruction::new(Opcode::ChkPtt, Space::None, k));
        prog.e_function.push(Instruction::signal(k, Target::Routed));
    }
    if !s_body.is_empty() {
        return Err(CodegenError::Deadlock("source work without any edge round".into()));
    }

    // Lifetimes of per-tile regions.
    for ins in prog.s_function.iter().chain(&prog.e_function) {
        for id in [ins.dst, ins.src_a, ins.src_b] {
            if let Some(reg) = regions.get_mut(id as usize) {
                if matches!(reg.occupancy, Occupancy::TileSrc | Occupancy::TileEdge) {
                    reg.last_round = reg.last_round.max(ins.round);
                }
            }
        }
    }
    let mut base = 0u64;
    for reg in &mut regions {
        reg.base = base;
        base += reg.extent.div_ceil(ALIGN) * ALIGN;
    }
    prog.regions = regions;
    Ok(prog)
}
