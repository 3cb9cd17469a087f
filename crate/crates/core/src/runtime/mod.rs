//! Functional execution of compiled programs under the multi-stream
//! protocol, with deadlock diagnosis.

mod deadlock;
mod exec;
pub mod protocol;
mod trace;

use thiserror::Error;

pub use deadlock::{detect_deadlock, DeadlockReport};
pub use exec::execute;
pub use protocol::{Class, Protocol, ProtocolError, State, StreamConfig, StreamId, WaitOn};
pub use trace::{Stall, Trace, TraceEvent};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("{0}")]
    Deadlock(Box<DeadlockReport>),
    #[error("protocol error: {0}")]
    Protocol(ProtocolError),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("missing weight `{0}`")]
    MissingWeight(String),
    #[error("read of uninitialized region {0}")]
    Uninitialized(String),
    #[error("program has no output")]
    NoOutput,
    #[error("execution did not terminate within {0} steps")]
    StepLimit(usize),
}

#[cfg(test)]
mod tests;
