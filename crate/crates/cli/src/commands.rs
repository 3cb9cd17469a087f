//! The four driver commands. Each returns a report; printing and exit codes
//! are left to the binary.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use zipper_core::codegen::{encode, Function, Opcode, RegionLayout};
use zipper_core::graph::{
    degree_reorder, example_g4, gen_synthetic, load_graph, FeatureSet, Graph, Permutation,
};
use zipper_core::ir::SegLabel;
use zipper_core::model::{build_model, parse_model, Domain, ModelGraph, ModelName, ModelOp};
use zipper_core::oracle::{compare, run_dense, whole_graph_footprint, CompareReport};
use zipper_core::optimizer::PassReport;
use zipper_core::pipeline::{compile, CompileOptions, Compiled};
use zipper_core::runtime::{execute, RuntimeError, StreamConfig};
use zipper_core::tensor::{Matrix, Weights};
use zipper_core::tiling::{auto_sizes, check_capacity, make_plan, TilingPlan};
use zipper_core::timing::{
    energy, simulate, simulate_with_trace, util_csv, EnergyReport, SimError, SimStats, UtilSample,
};

use crate::config::{looks_like_path, GraphSource, HardwareSpec, RunConfig};
use crate::CliError;

/// Relative tolerance used by `verify`.
pub const VERIFY_TOL: f64 = 1e-5;

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

/// Builds a benchmark model by name, or parses a model file.
pub fn load_model(spec: &str, f_in: usize, f_out: usize) -> Result<ModelGraph, CliError> {
    if looks_like_path(spec) {
        let text = std::fs::read_to_string(spec).map_err(|e| CliError::Usage(format!("{spec}: {e}")))?;
        return parse_model(&text).map_err(|e| CliError::Usage(format!("{spec}: {e}")));
    }
    let name: ModelName = spec.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
    build_model(name, f_in, f_out).map_err(|e| CliError::Usage(e.to_string()))
}

fn load_input_graph(cfg: &RunConfig) -> Result<Graph, CliError> {
    match cfg.graph_source()? {
        GraphSource::Example => Ok(example_g4()),
        GraphSource::Synthetic { kind, v, e } => gen_synthetic(kind, v, e, cfg.seed).map_err(|e| CliError::Usage(e.to_string())),
        GraphSource::File(p) => load_graph(&p, cfg.graph_format_for(&p)).map_err(failed),
    }
}

fn input_dim(m: &ModelGraph, domain: Domain) -> Option<usize> {
    m.nodes
        .iter()
        .find(|n| n.op == ModelOp::Input && n.info.domain == domain)
        .map(|n| n.info.dim)
}

/// Everything derived from a [`RunConfig`] before execution.
pub struct Workload {
    pub model: ModelGraph,
    /// Graph in its original labelling.
    pub graph: Graph,
    pub feats: FeatureSet,
    /// Graph and features in execution order (reordered when requested).
    pub exec_graph: Graph,
    pub exec_feats: FeatureSet,
    pub perm: Option<Permutation>,
    pub weights: Weights,
    pub plan: TilingPlan,
    pub compiled: Compiled,
    pub hw: HardwareSpec,
}

impl Workload {
    pub fn prepare(cfg: &RunConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        let hw = cfg.hardware_spec()?;
        let model = load_model(&cfg.model, cfg.f_in, cfg.f_out)?;
        let mut graph = load_input_graph(cfg)?;
        let types = model.weight_nodes().filter_map(|n| n.weight).map(|w| w.types).max().unwrap_or(1);
        if types > 1 && graph.num_types() < types {
            graph = graph.with_random_types(types, cfg.seed.wrapping_add(3)).map_err(failed)?;
        }
        let dim = input_dim(&model, Domain::Vertex).unwrap_or(cfg.f_in);
        let mut feats = FeatureSet::random(graph.num_vertices(), dim, cfg.seed.wrapping_add(1));
        if let Some(d) = input_dim(&model, Domain::Edge) {
            feats.edge = Some(Matrix::random(graph.num_edges(), d, 1.0, cfg.seed.wrapping_add(4)));
        }
        let weights = model.random_weights(cfg.seed.wrapping_add(2));

        let (exec_graph, exec_feats, perm) = if cfg.reorder {
            let (g2, perm) = degree_reorder(&graph);
            let map = feats.edge.as_ref().map(|_| graph.relabel(&perm).1);
            let f2 = feats.permuted(&perm, map.as_deref());
            (g2, f2, Some(perm))
        } else {
            (graph.clone(), feats.clone(), None)
        };

        let (dst, src) = match (cfg.dst_size, cfg.src_size) {
            (Some(d), Some(s)) => (d, s),
            _ => auto_sizes(&exec_graph, &hw.hw, cfg.f_in.max(cfg.f_out)),
        };
        let plan = make_plan(&exec_graph, dst, src, cfg.tiling).map_err(|e| CliError::Usage(e.to_string()))?;
        let compiled = compile(&model, &RegionLayout::from_plan(&plan), CompileOptions { e2v: cfg.e2v }).map_err(failed)?;
        Ok(Self {
            model,
            graph,
            feats,
            exec_graph,
            exec_feats,
            perm,
            weights,
            plan,
            compiled,
            hw,
        })
    }
}

/// Options for `compile`, which needs no graph.
#[derive(Clone, Debug)]
pub struct CompileArgs {
    pub model: String,
    pub f_in: usize,
    pub f_out: usize,
    pub e2v: bool,
    /// Rows reserved per tile buffer.
    pub rows: usize,
    /// Binary destination; the listing goes next to it with a `.lst` extension.
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompileSummary {
    pub passes: PassReport,
    /// Compute operations left in edge segments.
    pub edge_ops: usize,
    pub vertex_ops: usize,
    pub s_instructions: usize,
    pub e_instructions: usize,
    pub d_instructions: usize,
    pub rounds: u16,
    pub footprint_bytes: u64,
}

pub struct CompileOutput {
    pub compiled: Compiled,
    pub summary: CompileSummary,
    pub binary: Vec<u8>,
    pub listing: String,
}

fn summarize(c: &Compiled) -> CompileSummary {
    let ops = |label: SegLabel| {
        c.ir.segments
            .iter()
            .filter(|s| s.label == label)
            .flat_map(|s| &s.nodes)
            .filter(|n| n.op.is_compute())
            .count()
    };
    let p = &c.program;
    CompileSummary {
        passes: c.report.clone(),
        edge_ops: ops(SegLabel::Edge),
        vertex_ops: ops(SegLabel::Vertex),
        s_instructions: p.s_function.len(),
        e_instructions: p.e_function.len(),
        d_instructions: p.d_function.len(),
        rounds: p.rounds,
        footprint_bytes: p.footprint(),
    }
}

pub fn cmd_compile(args: &CompileArgs) -> Result<CompileOutput, CliError> {
    let model = load_model(&args.model, args.f_in, args.f_out)?;
    let compiled = compile(&model, &RegionLayout::uniform(args.rows.max(1)), CompileOptions { e2v: args.e2v }).map_err(failed)?;
    let binary = encode(&compiled.program);
    let listing = compiled.program.disassemble();
    if let Some(out) = &args.out {
        write_file(out, &binary)?;
        write_file(&out.with_extension("lst"), listing.as_bytes())?;
    }
    Ok(CompileOutput {
        summary: summarize(&compiled),
        compiled,
        binary,
        listing,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub compare: CompareReport,
    /// Reference in execution order vs. reference in input order, when reordered.
    pub relabel_rel_err: Option<f64>,
    pub tolerance: f64,
    pub peak_live_bytes: u64,
    pub whole_graph_bytes: u64,
    pub tiles: usize,
    pub partitions: usize,
}

impl VerifyReport {
    pub fn pass(&self) -> bool {
        self.compare.pass
    }
}

/// Removes the first SIGNAL of `f`, which must starve some stream.
pub fn drop_signal(c: &mut Compiled, f: Function) -> bool {
    let body = c.program.function_mut(f);
    match body.iter().position(|i| i.opcode == Opcode::Signal) {
        Some(at) => {
            body.remove(at);
            true
        }
        None => false,
    }
}

/// Runs the tiled multi-stream runtime and compares against the dense oracle.
pub fn cmd_verify(cfg: &RunConfig, fault: Option<Function>) -> Result<VerifyReport, CliError> {
    let mut w = Workload::prepare(cfg)?;
    if let Some(f) = fault {
        if !drop_signal(&mut w.compiled, f) {
            return Err(CliError::Usage(format!("{f:?} function has no SIGNAL to drop")));
        }
    }
    let got = execute(&w.compiled.program, &w.plan, &w.exec_graph, &w.exec_feats, &w.weights, cfg.stream_config());
    let (out, trace) = match got {
        Ok(r) => r,
        Err(RuntimeError::Deadlock(r)) => return Err(CliError::Verify(r.to_string())),
        Err(e) => return Err(failed(e)),
    };
    // The reference sees the same labelling as the runtime so both sum each
    // gather in the same order; relabelling drift is reported on its own.
    let want = run_dense(&w.model, &w.exec_graph, &w.exec_feats, &w.weights).map_err(failed)?;
    let report = compare(&out, &want, VERIFY_TOL).map_err(failed)?;
    let relabel_rel_err = match &w.perm {
        Some(p) => {
            let orig = run_dense(&w.model, &w.graph, &w.feats, &w.weights).map_err(failed)?;
            let back = FeatureSet::new(p.unpermute_rows(&want.vertex));
            Some(compare(&back, &orig, 0.0).map_err(failed)?.max_rel_err)
        }
        None => None,
    };
    Ok(VerifyReport {
        compare: report,
        relabel_rel_err,
        tolerance: VERIFY_TOL,
        peak_live_bytes: trace.peak_live_bytes,
        whole_graph_bytes: whole_graph_footprint(&w.compiled.model, &w.graph),
        tiles: w.plan.num_tiles(),
        partitions: w.plan.partitions.len(),
    })
}

pub struct RunOutput {
    pub stats: SimStats,
    pub energy: EnergyReport,
    pub util: Vec<UtilSample>,
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Capacity { .. } => CliError::Capacity(e.to_string()),
        SimError::Config(_) => CliError::Usage(e.to_string()),
        other => failed(other),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| failed(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| failed(format!("{}: {e}", path.display())))
}

/// Simulates the configured workload and writes the requested reports.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let w = Workload::prepare(cfg)?;
    check_capacity(&w.plan, &w.hw.hw, &w.compiled.model).map_err(|e| CliError::Capacity(e.to_string()))?;
    let window = if cfg.util_out.is_some() { cfg.util_window.max(1) } else { 0 };
    let (stats, util) =
        simulate_with_trace(&w.compiled.program, &w.plan, cfg.stream_config(), &w.hw.hw, window).map_err(sim_error)?;
    let energy = energy(&stats, &w.hw.energy);
    if let Some(p) = &cfg.stats_out {
        write_file(p, stats.to_json().as_bytes())?;
    }
    if let Some(p) = &cfg.energy_out {
        write_file(p, energy.to_json().as_bytes())?;
    }
    if let Some(p) = &cfg.util_out {
        write_file(p, util_csv(&util).as_bytes())?;
    }
    Ok(RunOutput { stats, energy, util })
}

/// Axes of a sweep. Every combination becomes one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub s_streams: Vec<usize>,
    pub e_streams: Vec<usize>,
    pub mu_counts: Vec<usize>,
    pub vu_counts: Vec<usize>,
}

impl SweepGrid {
    /// Stream counts {2,4,8} at the configured unit counts.
    pub fn streams_only(hw: &HardwareSpec) -> Self {
        Self {
            s_streams: vec![2, 4, 8],
            e_streams: vec![2, 4, 8],
            mu_counts: vec![hw.hw.mu_count],
            vu_counts: vec![hw.hw.vu_count],
        }
    }

    fn cells(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut out = Vec::new();
        for &s in &self.s_streams {
            for &e in &self.e_streams {
                for &mu in &self.mu_counts {
                    for &vu in &self.vu_counts {
                        out.push((s, e, mu, vu));
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    pub n_s: usize,
    pub n_e: usize,
    pub mu_count: usize,
    pub vu_count: usize,
    pub total_cycles: Option<u64>,
    /// Cycles relative to the first successful cell.
    pub normalized: Option<f64>,
    pub error: Option<String>,
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut s = String::from("n_s,n_e,mu_count,vu_count,total_cycles,normalized,error\n");
    for c in cells {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.n_s,
            c.n_e,
            c.mu_count,
            c.vu_count,
            c.total_cycles.map(|v| v.to_string()).unwrap_or_default(),
            c.normalized.map(|v| format!("{v:.4}")).unwrap_or_default(),
            c.error.as_deref().unwrap_or("").replace(',', ";"),
        ));
    }
    s
}

/// Simulates every grid cell in parallel. Cell failures are recorded, not fatal.
pub fn cmd_sweep(cfg: &RunConfig, grid: &SweepGrid) -> Result<Vec<SweepCell>, CliError> {
    let w = Workload::prepare(cfg)?;
    let mut cells: Vec<SweepCell> = grid
        .cells()
        .into_par_iter()
        .map(|(n_s, n_e, mu, vu)| {
            let mut hw = w.hw.hw.clone();
            hw.mu_count = mu;
            hw.vu_count = vu;
            let r = simulate(&w.compiled.program, &w.plan, StreamConfig { n_s, n_e }, &hw);
            SweepCell {
                n_s,
                n_e,
                mu_count: mu,
                vu_count: vu,
                total_cycles: r.as_ref().ok().map(|s| s.total_cycles),
                normalized: None,
                error: r.err().map(|e| e.to_string()),
            }
        })
        .collect();
    if let Some(base) = cells.iter().find_map(|c| c.total_cycles).filter(|&b| b > 0) {
        for c in &mut cells {
            c.normalized = c.total_cycles.map(|t| t as f64 / base as f64);
        }
    }
    Ok(cells)
}
