//! Synchronization state of the stream protocol, independent of data.
//!
//! One dStream walks partitions. For each round of a partition it reserves
//! up to `n_s` tiles, signals that many sStream tokens and waits. An sStream
//! claims the next tile in ascending order, runs its section and hands the
//! tile to an eStream through a FIFO. The eStream runs its section, reserves
//! the next unreserved tile (if any) and routes its completion signal: back
//! to an sStream when it reserved a tile, to the dStream when it was the
//! last tile of the round, otherwise nowhere.

use std::collections::VecDeque;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::codegen::{Instruction, Opcode, Program, Target};
use crate::tiling::TilingPlan;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Class {
    S,
    E,
    D,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct StreamId {
    pub class: Class,
    pub index: usize,
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self.class {
            Class::S => 's',
            Class::E => 'e',
            Class::D => 'd',
        };
        write!(f, "{c}{}", self.index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct StreamConfig {
    pub n_s: usize,
    pub n_e: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self { n_s: 1, n_e: 1 }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("stream counts must be positive (got {n_s} s, {n_e} e)")]
    NoStreams { n_s: usize, n_e: usize },
    #[error("{0}: semaphore underflow")]
    Underflow(StreamId),
    #[error("{stream}: claimed tile {tile} of a {tiles}-tile partition")]
    OverClaim { stream: StreamId, tile: usize, tiles: usize },
    #[error("{stream}: completed more tiles than the partition holds")]
    OverDone { stream: StreamId },
    #[error("{stream}: no section for round {round}")]
    MissingSection { stream: StreamId, round: u16 },
    #[error("{0}: stream has nothing to run")]
    NotRunnable(StreamId),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Stream {
    pub id: StreamId,
    /// `None` while an s/e stream sits idle waiting for a token.
    pub pc: Option<usize>,
    /// Ordinal (within the partition) of the tile being processed.
    pub tile: Option<usize>,
    /// Set by FCH.TILE, consumed by CHK.PTT.
    pub fetched: bool,
    /// Destination chosen by CHK.PTT for the routed SIGNAL.
    pub route: Option<Target>,
}

/// Complete, hashable protocol state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct State {
    pub partition: Option<usize>,
    pub round: u16,
    pub tiles: usize,
    pub claimed: usize,
    pub reserved: usize,
    pub done: usize,
    pub fifo: VecDeque<usize>,
    pub sem_s: usize,
    pub sem_d: usize,
    pub finished: bool,
    pub streams: Vec<Stream>,
}

/// Result of one protocol step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub stream: StreamId,
    pub pc: usize,
    pub ins: Instruction,
    pub partition: Option<usize>,
    pub round: u16,
    pub tile: Option<usize>,
    /// Tile ordinals whose edge lists this step fetched.
    pub fetched: Vec<usize>,
    /// The step moved to a new partition.
    pub new_partition: bool,
    /// An s/e stream reached the end of its section.
    pub section_end: bool,
}

/// What a blocked stream is waiting for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum WaitOn {
    /// sStream token, produced by the dStream or by eStreams.
    STokens,
    /// Tile handed over by an sStream.
    Fifo,
    /// Round completion, produced by eStreams (or directly by the dStream).
    DTokens,
}

impl WaitOn {
    pub fn producer(self) -> Class {
        match self {
            WaitOn::STokens => Class::D,
            WaitOn::Fifo => Class::S,
            WaitOn::DTokens => Class::E,
        }
    }
}

/// Static protocol context: the program and tile counts per partition.
#[derive(Clone, Debug)]
pub struct Protocol<'a> {
    pub prog: &'a Program,
    pub tiles_per_partition: Vec<usize>,
    pub cfg: StreamConfig,
    s_sections: Vec<usize>,
    e_sections: Vec<usize>,
}

fn sections(f: &[Instruction], rounds: u16) -> Vec<usize> {
    (0..rounds)
        .map(|r| {
            f.iter()
                .position(|i| i.opcode == Opcode::Wait && i.round == r)
                .unwrap_or(usize::MAX)
        })
        .collect()
}

impl<'a> Protocol<'a> {
    pub fn new(prog: &'a Program, plan: &TilingPlan, cfg: StreamConfig) -> Result<Self, ProtocolError> {
        Self::with_tiles(prog, plan.partitions.iter().map(|p| p.tiles.len()).collect(), cfg)
    }

    pub fn with_tiles(
        prog: &'a Program,
        tiles_per_partition: Vec<usize>,
        cfg: StreamConfig,
    ) -> Result<Self, ProtocolError> {
        if cfg.n_s == 0 || cfg.n_e == 0 {
            return Err(ProtocolError::NoStreams {
                n_s: cfg.n_s,
                n_e: cfg.n_e,
            });
        }
        Ok(Self {
            prog,
            tiles_per_partition,
            cfg,
            s_sections: sections(&prog.s_function, prog.rounds),
            e_sections: sections(&prog.e_function, prog.rounds),
        })
    }

    pub fn initial(&self) -> State {
        let mut streams = vec![Stream {
            id: StreamId {
                class: Class::D,
                index: 0,
            },
            pc: Some(0),
            tile: None,
            fetched: false,
            route: None,
        }];
        for (class, n) in [(Class::S, self.cfg.n_s), (Class::E, self.cfg.n_e)] {
            for index in 0..n {
                streams.push(Stream {
                    id: StreamId { class, index },
                    pc: None,
                    tile: None,
                    fetched: false,
                    route: None,
                });
            }
        }
        State {
            partition: None,
            round: 0,
            tiles: 0,
            claimed: 0,
            reserved: 0,
            done: 0,
            fifo: VecDeque::new(),
            sem_s: 0,
            sem_d: 0,
            finished: self.prog.d_function.is_empty(),
            streams,
        }
    }

    fn function(&self, c: Class) -> &'a [Instruction] {
        match c {
            Class::S => &self.prog.s_function,
            Class::E => &self.prog.e_function,
            Class::D => &self.prog.d_function,
        }
    }

    /// Instruction the stream would execute next.
    pub fn next_instruction(&self, st: &State, i: usize) -> Option<(usize, Instruction)> {
        let s = &st.streams[i];
        let f = self.function(s.id.class);
        let pc = match s.pc {
            Some(pc) => pc,
            None => {
                let secs = match s.id.class {
                    Class::S => &self.s_sections,
                    _ => &self.e_sections,
                };
                *secs.get(st.round as usize)?
            }
        };
        f.get(pc).map(|ins| (pc, *ins))
    }

    /// Why stream `i` cannot run, if it is blocked.
    pub fn blocked_on(&self, st: &State, i: usize) -> Option<WaitOn> {
        if st.finished {
            return None;
        }
        let s = &st.streams[i];
        match (s.id.class, s.pc) {
            (Class::S, None) if st.sem_s == 0 => Some(WaitOn::STokens),
            (Class::E, None) if st.fifo.is_empty() => Some(WaitOn::Fifo),
            (Class::D, Some(pc)) => {
                let ins = self.prog.d_function.get(pc)?;
                (ins.opcode == Opcode::Wait && st.sem_d == 0).then_some(WaitOn::DTokens)
            }
            _ => None,
        }
    }

    pub fn is_enabled(&self, st: &State, i: usize) -> bool {
        !st.finished && self.blocked_on(st, i).is_none()
    }

    pub fn enabled(&self, st: &State) -> Vec<usize> {
        (0..st.streams.len()).filter(|&i| self.is_enabled(st, i)).collect()
    }

    /// Executes one instruction of stream `i`.
    pub fn step(&self, st: &mut State, i: usize) -> Result<Step, ProtocolError> {
        let id = st.streams[i].id;
        if !self.is_enabled(st, i) {
            return Err(ProtocolError::NotRunnable(id));
        }
        let (pc, ins) = self.next_instruction(st, i).ok_or(ProtocolError::MissingSection {
            stream: id,
            round: st.round,
        })?;
        let f = self.function(id.class);
        let mut fetched = Vec::new();
        let mut new_partition = false;
        match (id.class, ins.opcode) {
            (Class::D, Opcode::FchPtt) => {
                let next = st.partition.map_or(0, |p| p + 1);
                new_partition = true;
                st.round = 0;
                st.claimed = 0;
                st.reserved = 0;
                st.done = 0;
                if next >= self.tiles_per_partition.len() {
                    st.finished = true;
                    st.partition = None;
                    st.tiles = 0;
                } else {
                    st.partition = Some(next);
                    st.tiles = self.tiles_per_partition[next];
                }
            }
            (Class::D, Opcode::UpdPtt) => {
                st.round = ins.round;
                st.claimed = 0;
                st.done = 0;
                st.reserved = self.cfg.n_s.min(st.tiles);
                fetched.extend(0..st.reserved);
            }
            (Class::D, Opcode::Signal) => match ins.target() {
                Some(Target::S) if st.tiles > 0 => st.sem_s += st.reserved,
                Some(Target::S) => st.sem_d += 1,
                Some(Target::D) => st.sem_d += 1,
                _ => {}
            },
            (Class::D, Opcode::Wait) => {
                st.sem_d = st.sem_d.checked_sub(1).ok_or(ProtocolError::Underflow(id))?;
            }
            (Class::S, Opcode::Wait) => {
                st.sem_s = st.sem_s.checked_sub(1).ok_or(ProtocolError::Underflow(id))?;
                if st.claimed >= st.tiles {
                    return Err(ProtocolError::OverClaim {
                        stream: id,
                        tile: st.claimed,
                        tiles: st.tiles,
                    });
                }
                st.streams[i].tile = Some(st.claimed);
                st.claimed += 1;
            }
            (Class::S, Opcode::Signal) => {
                let t = st.streams[i].tile.expect("sStream holds a tile");
                st.fifo.push_back(t);
            }
            (Class::E, Opcode::Wait) => {
                let t = st.fifo.pop_front().ok_or(ProtocolError::Underflow(id))?;
                st.streams[i].tile = Some(t);
            }
            (Class::E, Opcode::FchTile) => {
                let fetch = st.reserved < st.tiles;
                if fetch {
                    fetched.push(st.reserved);
                    st.reserved += 1;
                }
                st.streams[i].fetched = fetch;
            }
            (Class::E, Opcode::ChkPtt) => {
                st.done += 1;
                if st.done > st.tiles {
                    return Err(ProtocolError::OverDone { stream: id });
                }
                let s = &mut st.streams[i];
                s.route = if std::mem::take(&mut s.fetched) {
                    Some(Target::S)
                } else if st.done == st.tiles {
                    Some(Target::D)
                } else {
                    None
                };
            }
            (Class::E, Opcode::Signal) => {
                let explicit = ins.target().filter(|t| *t != Target::Routed);
                match explicit.or(st.streams[i].route.take()) {
                    Some(Target::S) => st.sem_s += 1,
                    Some(Target::D) => st.sem_d += 1,
                    _ => {}
                }
            }
            _ => {}
        }
        let mut step = Step {
            stream: id,
            pc,
            ins,
            partition: st.partition,
            round: st.round,
            tile: st.streams[i].tile,
            fetched,
            new_partition,
            section_end: false,
        };
        let next = pc + 1;
        let s = &mut st.streams[i];
        match id.class {
            Class::D => s.pc = Some(if next >= f.len() { 0 } else { next }),
            _ => {
                let ends = f.get(next).is_none_or(|n| n.opcode == Opcode::Wait);
                if ends {
                    s.pc = None;
                    s.tile = None;
                    s.fetched = false;
                    s.route = None;
                    step.section_end = true;
                } else {
                    s.pc = Some(next);
                }
            }
        }
        Ok(step)
    }

    /// Deterministic round-robin choice among enabled streams, starting at
    /// `cursor`.
    pub fn pick(&self, st: &State, cursor: usize) -> Option<usize> {
        let n = st.streams.len();
        (0..n).map(|k| (cursor + k) % n).find(|&i| self.is_enabled(st, i))
    }
}
