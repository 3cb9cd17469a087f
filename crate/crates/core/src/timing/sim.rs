//! Event-driven replay of the stream protocol with unit and memory timing.
//!
//! Each stream issues in order and only after its previous instruction
//! completes. The scheduler issues at most one instruction per cycle,
//! choosing the ready stream that has waited longest and breaking ties
//! round-robin. Compute goes to the earliest-free unit of its class;
//! transfers serialize on a single off-chip channel.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{mem_cycles, mem_occupancy, mu_cycles, vu_cycles, ElwKind, HardwareConfig, SimStats, VuWork};
use crate::codegen::{Opcode, Program, Space};
use crate::runtime::protocol::{Class, Protocol, ProtocolError, StreamConfig, Step};
use crate::tiling::{Tile, TilingPlan};

/// Cycles between a stream being picked and its instruction reaching a unit.
pub const ISSUE_OVERHEAD: u64 = 2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] super::ConfigError),
    #[error("program needs {need} bytes of embedding memory, {have} available")]
    Capacity { need: u64, have: u64 },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("streams deadlocked at cycle {0}")]
    Deadlock(u64),
}

/// Busy fraction of each unit class over one sampling window.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilSample {
    pub cycle: u64,
    pub mu: f64,
    pub vu: f64,
    pub mem: f64,
}

pub fn util_csv(samples: &[UtilSample]) -> String {
    let mut s = String::from("cycle,mu,vu,mem\n");
    for u in samples {
        s.push_str(&format!("{},{:.4},{:.4},{:.4}\n", u.cycle, u.mu, u.vu, u.mem));
    }
    s
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Unit {
    Mu,
    Vu,
    Mem,
    Sched,
}

struct Cost {
    unit: Unit,
    busy: u64,
    /// Memory transfers finish `latency` after their channel slot ends.
    latency: u64,
    macs: u64,
    onchip: u64,
    read: u64,
    write: u64,
}

impl Cost {
    fn sched() -> Self {
        Self::on(Unit::Sched, 0)
    }
    fn on(unit: Unit, busy: u64) -> Self {
        Cost {
            unit,
            busy,
            latency: 0,
            macs: 0,
            onchip: 0,
            read: 0,
            write: 0,
        }
    }
    fn transfer(bytes: u64, write: bool, hw: &HardwareConfig) -> Self {
        let mut c = Self::on(Unit::Mem, mem_occupancy(bytes, hw));
        c.latency = mem_cycles(bytes, hw) - c.busy;
        if write {
            c.write = bytes;
        } else {
            c.read = bytes;
        }
        c.onchip = bytes;
        c
    }
}

fn elw_kind(op: Opcode) -> Option<ElwKind> {
    Some(match op {
        Opcode::Add => ElwKind::Add,
        Opcode::Sub => ElwKind::Sub,
        Opcode::Mul => ElwKind::Mul,
        Opcode::Div => ElwKind::Div,
        Opcode::Max => ElwKind::Max,
        Opcode::Exp => ElwKind::Exp,
        Opcode::Relu => ElwKind::Relu,
        Opcode::Sigmoid => ElwKind::Sigmoid,
        _ => return None,
    })
}

fn cost(step: &Step, plan: &TilingPlan, hw: &HardwareConfig) -> Cost {
    let Some(p) = step.partition else {
        return Cost::sched();
    };
    let part = &plan.partitions[p];
    let tile: Option<&Tile> = step.tile.map(|t| &part.tiles[t]);
    let ins = &step.ins;
    let rows = match ins.space {
        Space::Src => tile.map_or(0, Tile::num_sources),
        Space::Edge => tile.map_or(0, Tile::num_edges),
        Space::Dst => part.num_vertices(),
        Space::None => 0,
    } as u64;
    let (dim, dim_in) = (ins.dim as u64, ins.dim_in as u64);
    let row_bytes = dim * 4;
    let fetch: Vec<u64> = step.fetched.iter().map(|&t| part.tiles[t].edge_list_bytes()).collect();
    let mut c = match ins.opcode {
        Opcode::LdSrc | Opcode::LdEdge | Opcode::LdDst => Cost::transfer(rows * row_bytes, false, hw),
        Opcode::StDst => Cost::transfer(rows * row_bytes, true, hw),
        Opcode::UpdPtt | Opcode::FchTile => {
            // One request per tile so channel occupancy does not depend on batching.
            let bytes: u64 = fetch.iter().sum();
            let mut c = Cost::transfer(bytes, false, hw);
            c.busy = fetch.iter().map(|&b| mem_occupancy(b, hw)).sum();
            c.latency = if bytes == 0 { 0 } else { hw.offchip_latency };
            c
        }
        Opcode::Gemm => Cost::on(Unit::Mu, mu_cycles(rows, dim, dim_in, hw)),
        Opcode::Bmm => {
            let mut per_type: BTreeMap<u8, u64> = BTreeMap::new();
            for e in tile.map_or(&[][..], |t| &t.edges) {
                *per_type.entry(e.etype).or_default() += 1;
            }
            Cost::on(Unit::Mu, per_type.values().map(|&n| mu_cycles(n, dim, dim_in, hw)).sum())
        }
        Opcode::Gemv => Cost::on(Unit::Vu, vu_cycles(VuWork::Gemv { macs: rows * dim * dim_in }, hw)),
        Opcode::SctrOutE | Opcode::SctrInE | Opcode::GthrDstSum | Opcode::GthrDstMax => {
            let degrees: Vec<u64> = match (ins.opcode, tile) {
                (_, None) => Vec::new(),
                (Opcode::SctrOutE, Some(t)) => t.source_degrees().into_iter().map(|d| d as u64).collect(),
                (_, Some(t)) => t.destination_degrees().into_iter().map(|d| d as u64).collect(),
            };
            let mut c = Cost::on(Unit::Vu, vu_cycles(VuWork::Gop { degrees: &degrees, dim }, hw));
            c.onchip = 2 * rows * row_bytes;
            c
        }
        op => match elw_kind(op) {
            Some(kind) => {
                let mut c = Cost::on(Unit::Vu, vu_cycles(VuWork::Elw { kind, items: rows, dim }, hw));
                c.onchip = 3 * rows * row_bytes;
                c
            }
            None => Cost::sched(),
        },
    };
    if matches!(ins.opcode, Opcode::Gemm | Opcode::Gemv | Opcode::Bmm) {
        c.macs = rows * dim * dim_in;
        c.onchip = rows * (dim + dim_in) * 4;
    }
    c
}

pub fn simulate(
    prog: &Program,
    plan: &TilingPlan,
    cfg: StreamConfig,
    hw: &HardwareConfig,
) -> Result<SimStats, SimError> {
    simulate_with_trace(prog, plan, cfg, hw, 0).map(|(s, _)| s)
}

/// Like [`simulate`], also sampling unit utilization every `window` cycles
/// (no samples when `window` is 0).
pub fn simulate_with_trace(
    prog: &Program,
    plan: &TilingPlan,
    cfg: StreamConfig,
    hw: &HardwareConfig,
    window: u64,
) -> Result<(SimStats, Vec<UtilSample>), SimError> {
    hw.validate(cfg.n_s + cfg.n_e + 1)?;
    if prog.footprint() > hw.uem_bytes {
        return Err(SimError::Capacity {
            need: prog.footprint(),
            have: hw.uem_bytes,
        });
    }
    let proto = Protocol::new(prog, plan, cfg)?;
    let mut st = proto.initial();
    let n = st.streams.len();
    let mut ready_at = vec![0u64; n];
    let mut mu_free = vec![0u64; hw.mu_count];
    let mut vu_free = vec![0u64; hw.vu_count];
    let mut mem_free = 0u64;
    let mut busy: BTreeMap<&'static str, Vec<(u64, u64)>> = BTreeMap::new();
    let mut stats = SimStats {
        tiles: plan.num_tiles() as u64,
        partitions: plan.partitions.len() as u64,
        ..SimStats::default()
    };
    let mut now = 0u64;
    let mut cursor = 0usize;
    let mut end = 0u64;
    while !st.finished {
        let enabled = proto.enabled(&st);
        if enabled.is_empty() {
            return Err(SimError::Deadlock(now));
        }
        let earliest = enabled.iter().map(|&i| ready_at[i]).min().expect("nonempty");
        now = now.max(earliest);
        let oldest = enabled
            .iter()
            .filter(|&&i| ready_at[i] <= now)
            .map(|&i| ready_at[i])
            .min()
            .expect("a stream is ready");
        let pick = (0..n)
            .map(|k| (cursor + k) % n)
            .find(|i| enabled.contains(i) && ready_at[*i] == oldest)
            .expect("a stream is ready");
        let class = st.streams[pick].id.class;
        let step = proto.step(&mut st, pick)?;
        let c = cost(&step, plan, hw);
        let issue = now + ISSUE_OVERHEAD;
        let finish = match c.unit {
            Unit::Sched => now + 1,
            unit => {
                let (slot, key) = match unit {
                    Unit::Mu => (mu_free.iter_mut().min().expect("mu_count > 0"), "mu"),
                    Unit::Vu => (vu_free.iter_mut().min().expect("vu_count > 0"), "vu"),
                    _ => (&mut mem_free, "mem"),
                };
                let start = issue.max(*slot);
                *slot = start + c.busy;
                if c.busy > 0 {
                    busy.entry(key).or_default().push((start, start + c.busy));
                }
                *stats.unit_busy.entry(key.to_string()).or_default() += c.busy;
                start + c.busy + c.latency
            }
        };
        let label = match class {
            Class::S => "s",
            Class::E => "e",
            Class::D => "d",
        };
        *stats.stream_stall.entry(label.to_string()).or_default() += now - ready_at[pick];
        *stats.instructions.entry(step.ins.opcode.mnemonic().to_string()).or_default() += 1;
        stats.macs += c.macs;
        stats.onchip_bytes += c.onchip;
        stats.offchip_read_bytes += c.read;
        stats.offchip_write_bytes += c.write;
        ready_at[pick] = finish;
        end = end.max(finish);
        cursor = pick + 1;
        now += 1;
    }
    stats.total_cycles = end;
    for key in ["mu", "vu", "mem"] {
        stats.unit_busy.entry(key.to_string()).or_default();
    }
    let samples = if window == 0 { Vec::new() } else { sample(&busy, end, window, hw) };
    Ok((stats, samples))
}

fn sample(
    busy: &BTreeMap<&'static str, Vec<(u64, u64)>>,
    end: u64,
    window: u64,
    hw: &HardwareConfig,
) -> Vec<UtilSample> {
    let bins = end.div_ceil(window) as usize;
    let mut acc: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for (&key, spans) in busy {
        let v = acc.entry(key).or_insert_with(|| vec![0; bins]);
        for &(a, b) in spans {
            let mut t = a;
            while t < b {
                let bin = (t / window) as usize;
                let stop = b.min((bin as u64 + 1) * window);
                v[bin] += stop - t;
                t = stop;
            }
        }
    }
    let frac = |key: &str, i: usize, units: usize| {
        acc.get(key).map_or(0.0, |v| v[i] as f64 / (window * units as u64) as f64)
    };
    (0..bins)
        .map(|i| UtilSample {
            cycle: i as u64 * window,
            mu: frac("mu", i, hw.mu_count),
            vu: frac("vu", i, hw.vu_count),
            mem: frac("mem", i, 1),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codegen::{Instruction, RegionLayout};
    use crate::graph::{gen_synthetic, SyntheticKind};
    use crate::model::{build_model, ModelName};
    use crate::pipeline::{compile, CompileOptions};
    use crate::tiling::{make_plan, Partition, TilingMode};

    fn gcn(v: usize, e: usize, size: usize) -> (Program, TilingPlan) {
        let g = gen_synthetic(SyntheticKind::Rmat, v, e, 7).unwrap();
        let plan = make_plan(&g, size, size, TilingMode::Sparse).unwrap();
        let m = build_model(ModelName::Gcn, 32, 32).unwrap();
        let prog = compile(&m, &RegionLayout::from_plan(&plan), CompileOptions::default())
            .unwrap()
            .program;
        (prog, plan)
    }

    #[test]
    fn single_gemm_costs_its_closed_form() {
        let mut gemm = Instruction::new(Opcode::Gemm, Space::Dst, 0);
        gemm.dim = 128;
        gemm.dim_in = 128;
        let prog = Program {
            d_function: vec![Instruction::new(Opcode::FchPtt, Space::None, 0), gemm],
            ..Program::default()
        };
        let plan = TilingPlan {
            dst_partition_size: 32,
            src_partition_size: 32,
            mode: TilingMode::Sparse,
            num_vertices: 32,
            num_edges: 0,
            partitions: vec![Partition {
                dst_range: 0..32,
                tiles: Vec::new(),
            }],
        };
        let s = simulate(&prog, &plan, StreamConfig::default(), &HardwareConfig::default()).unwrap();
        assert_eq!(s.unit_busy["mu"], 287);
        assert!(s.total_cycles >= 287 && s.total_cycles <= 287 + 4 * ISSUE_OVERHEAD);
    }

    #[test]
    fn empty_program_is_free() {
        let plan = TilingPlan {
            dst_partition_size: 1,
            src_partition_size: 1,
            mode: TilingMode::Sparse,
            num_vertices: 0,
            num_edges: 0,
            partitions: Vec::new(),
        };
        let s = simulate(&Program::default(), &plan, StreamConfig::default(), &HardwareConfig::default()).unwrap();
        assert_eq!(s.busy_total(), 0);
        assert_eq!(s.offchip_bytes(), 0);
    }

    #[test]
    fn more_streams_overlap_tiles() {
        let (prog, plan) = gcn(1024, 8192, 128);
        assert!(plan.num_tiles() >= 16);
        let hw = HardwareConfig::default();
        let one = simulate(&prog, &plan, StreamConfig { n_s: 1, n_e: 1 }, &hw).unwrap();
        let four = simulate(&prog, &plan, StreamConfig { n_s: 4, n_e: 4 }, &hw).unwrap();
        assert!(four.total_cycles < one.total_cycles);
        assert_eq!(four.unit_busy, one.unit_busy);
        assert_eq!(four.offchip_bytes(), one.offchip_bytes());
    }

    #[test]
    fn traffic_matches_static_prediction() {
        let (prog, plan) = gcn(256, 2048, 64);
        let s = simulate(&prog, &plan, StreamConfig { n_s: 2, n_e: 3 }, &HardwareConfig::default()).unwrap();
        let (read, write) = prog.predict_offchip(&plan);
        assert_eq!((s.offchip_read_bytes, s.offchip_write_bytes), (read, write));
    }

    #[test]
    fn utilization_samples_are_fractions() {
        let (prog, plan) = gcn(256, 2048, 64);
        let (stats, samples) =
            simulate_with_trace(&prog, &plan, StreamConfig::default(), &HardwareConfig::default(), 500).unwrap();
        assert_eq!(samples.len() as u64, stats.total_cycles.div_ceil(500));
        assert!(samples.iter().all(|u| (0.0..=1.0).contains(&u.mu) && (0.0..=1.0).contains(&u.mem)));
        assert!(util_csv(&samples).starts_with("cycle,mu,vu,mem\n"));
    }

    #[test]
    fn too_small_queue_is_rejected() {
        let (prog, plan) = gcn(64, 256, 16);
        let hw = HardwareConfig {
            dispatcher_queue: 2,
            ..HardwareConfig::default()
        };
        assert!(matches!(
            simulate(&prog, &plan, StreamConfig { n_s: 2, n_e: 2 }, &hw),
            Err(SimError::Config(_))
        ));
    }
}
