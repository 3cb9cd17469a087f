use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use super::protocol::{Class, StreamId, WaitOn};
use super::trace::Trace;
use crate::codegen::Opcode;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DeadlockReport {
    pub step: usize,
    /// Wait-for cycle: each stream waits on the class of the next one.
    pub cycle: Vec<(StreamId, WaitOn)>,
    /// The stream whose expected signal was never sent.
    pub starved: Option<StreamId>,
}

impl DeadlockReport {
    pub(crate) fn unknown(step: usize) -> Self {
        Self {
            step,
            cycle: Vec::new(),
            starved: None,
        }
    }
}

fn describe(w: WaitOn) -> &'static str {
    match w {
        WaitOn::STokens => "a tile token",
        WaitOn::Fifo => "a handed-over tile",
        WaitOn::DTokens => "round completion",
    }
}

impl fmt::Display for DeadlockReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "deadlock at step {}: ", self.step)?;
        let parts: Vec<String> = self
            .cycle
            .iter()
            .map(|(id, w)| format!("{id} waits for {}", describe(*w)))
            .collect();
        f.write_str(&parts.join(" -> "))?;
        if let Some((first, _)) = self.cycle.first() {
            write!(f, " -> {first}")?;
        }
        if let Some(s) = self.starved {
            write!(f, "; starved: {s}")?;
        }
        Ok(())
    }
}

/// Class whose most recent section (or round, for the dStream) finished
/// without a SIGNAL.
fn silent_producer(trace: &Trace) -> Option<Class> {
    let mut signaled: HashMap<StreamId, bool> = HashMap::new();
    let mut silent = None;
    for e in &trace.events {
        let d = e.stream.class == Class::D;
        match e.opcode {
            Opcode::Wait if !d => {
                signaled.insert(e.stream, false);
            }
            Opcode::UpdPtt => {
                signaled.insert(e.stream, false);
            }
            Opcode::Signal => {
                signaled.insert(e.stream, true);
                if silent == Some(e.stream.class) {
                    silent = None;
                }
            }
            _ => {}
        }
        if e.section_end && signaled.get(&e.stream) == Some(&false) {
            silent = Some(e.stream.class);
        }
    }
    let d = StreamId {
        class: Class::D,
        index: 0,
    };
    if signaled.get(&d) == Some(&false) {
        silent = Some(Class::D);
    }
    silent
}

/// Inspects the stall snapshot of a trace, if any, and reconstructs the
/// wait-for cycle.
pub fn detect_deadlock(trace: &Trace) -> Option<DeadlockReport> {
    let stall = trace.stall.as_ref()?;
    if stall.blocked.is_empty() {
        return None;
    }
    let first_of = |c: Class| stall.blocked.iter().find(|(id, _)| id.class == c).copied();
    let mut cycle = Vec::new();
    let mut cur = first_of(Class::D).or_else(|| stall.blocked.first().copied());
    while let Some(entry) = cur {
        if cycle.contains(&entry) {
            break;
        }
        cycle.push(entry);
        cur = first_of(entry.1.producer());
    }
    let starved = silent_producer(trace)
        .and_then(|p| stall.blocked.iter().find(|(_, w)| w.producer() == p))
        .or_else(|| cycle.first())
        .map(|(id, _)| *id);
    Some(DeadlockReport {
        step: stall.step,
        cycle,
        starved,
    })
}
