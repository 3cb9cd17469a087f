//! End-to-end compilation: model graph to executable program.

use thiserror::Error;

use crate::codegen::{emit, specialize, CodegenError, Program, RegionLayout};
use crate::ir::{lower_to_ir, verify_ir, IrError, IrProgram};
use crate::model::{defuse, ModelError, ModelGraph};
use crate::optimizer::{e2v_with_report, prune_dead_with_report, PassReport};

#[derive(Debug, Error)]
pub enum CompileError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error("IR verification failed: {0}")]
    Verify(String),
    #[error(transparent)]
    Codegen(#[from] CodegenError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompileOptions {
    pub e2v: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self { e2v: true }
    }
}

#[derive(Clone, Debug)]
pub struct Compiled {
    /// Model after fused-op expansion.
    pub model: ModelGraph,
    /// Optimized IR before replica specialization.
    pub ir: IrProgram,
    pub report: PassReport,
    pub program: Program,
}

/// Expands fused ops, lowers, optimizes, specializes and emits.
pub fn compile(m: &ModelGraph, layout: &RegionLayout, opts: CompileOptions) -> Result<Compiled, CompileError> {
    let model = defuse(m)?;
    let lowered = lower_to_ir(&model)?;
    verify_ir(&lowered).map_err(CompileError::Verify)?;
    let mut report = PassReport::default();
    let moved = if opts.e2v {
        let (p, r) = e2v_with_report(&lowered);
        report.merge(&r);
        p
    } else {
        lowered
    };
    let (ir, r) = prune_dead_with_report(&moved);
    report.merge(&r);
    verify_ir(&ir).map_err(CompileError::Verify)?;
    let program = emit(&specialize(&ir)?, layout)?;
    Ok(Compiled {
        model,
        ir,
        report,
        program,
    })
}
