use std::fmt::Write;

use serde::Serialize;

use super::protocol::{Step, StreamId, WaitOn};
use crate::codegen::Opcode;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub step: usize,
    pub stream: StreamId,
    pub pc: usize,
    pub opcode: Opcode,
    pub round: u16,
    pub partition: Option<usize>,
    pub tile: Option<usize>,
    pub section_end: bool,
}

impl TraceEvent {
    pub fn from_step(step: usize, s: &Step) -> Self {
        Self {
            step,
            stream: s.stream,
            pc: s.pc,
            opcode: s.ins.opcode,
            round: s.round,
            partition: s.partition,
            tile: s.tile,
            section_end: s.section_end,
        }
    }
}

/// Snapshot taken when no stream can make progress.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Stall {
    pub step: usize,
    pub blocked: Vec<(StreamId, WaitOn)>,
}

/// Append-only execution log plus run totals.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
    pub stall: Option<Stall>,
    /// Peak bytes of live embedding-memory data, weights excluded.
    pub peak_live_bytes: u64,
    pub offchip_read_bytes: u64,
    pub offchip_write_bytes: u64,
}

impl Trace {
    /// One line per event: `step stream pc OPCODE r<round> p<partition> t<tile>`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<usize>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
        for e in &self.events {
            let _ = writeln!(
                out,
                "{} {} {} {} r{} p{} t{}",
                e.step,
                e.stream,
                e.pc,
                e.opcode,
                e.round,
                opt(e.partition),
                opt(e.tile)
            );
        }
        if let Some(s) = &self.stall {
            let _ = write!(out, "stall at {}:", s.step);
            for (id, w) in &s.blocked {
                let _ = write!(out, " {id}={w:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn count(&self, op: Opcode) -> usize {
        self.events.iter().filter(|e| e.opcode == op).count()
    }
}
