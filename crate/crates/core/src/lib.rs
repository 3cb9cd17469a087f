//! Compiler, functional runtime and timing model for a tiled, multi-stream
//! GNN inference accelerator.

pub mod graph;
pub mod model;
pub mod tensor;
pub mod tiling;
pub mod timing;
pub mod ir;
pub mod kernels;
pub mod optimizer;
pub mod codegen;
pub mod runtime;
pub mod pipeline;
pub mod oracle;
