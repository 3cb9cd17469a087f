use super::*;
use crate::codegen::{Function, Opcode, Program, RegionLayout};
use crate::graph::{example_g4, gen_synthetic, FeatureSet, Graph, SyntheticKind};
use crate::ir::interpret_ir;
use crate::model::{build_model, ModelName};
use crate::pipeline::{compile, CompileOptions};
use crate::tensor::{Matrix, WeightTensor, Weights};
use crate::tiling::{make_plan, TilingMode, TilingPlan};

fn gcn_g4() -> (Program, TilingPlan, Graph, FeatureSet, Weights) {
    let g = example_g4();
    let plan = make_plan(&g, 2, 2, TilingMode::Sparse).unwrap();
    let m = build_model(ModelName::Gcn, 2, 2).unwrap();
    let prog = compile(&m, &RegionLayout::from_plan(&plan), CompileOptions::default())
        .unwrap()
        .program;
    let mut w = Weights::new();
    w.insert("W", WeightTensor::identity(2));
    (prog, plan, g, FeatureSet::new(Matrix::filled(4, 2, 1.0)), w)
}

fn cfg(n_s: usize, n_e: usize) -> StreamConfig {
    StreamConfig { n_s, n_e }
}

#[test]
fn gcn_on_g4() {
    let (prog, plan, g, f, w) = gcn_g4();
    let want = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![1.0, 1.0], vec![0.0, 0.0]]);
    for c in [cfg(1, 1), cfg(4, 4)] {
        let (out, trace) = execute(&prog, &plan, &g, &f, &w, c).unwrap();
        assert_eq!(out.vertex, want);
        assert!(detect_deadlock(&trace).is_none());
    }
}

#[test]
fn matches_interpreter_bitwise_for_any_stream_count() {
    let g = gen_synthetic(SyntheticKind::Rmat, 64, 300, 3).unwrap();
    let g = g.with_random_types(3, 1).unwrap();
    let f = FeatureSet::random(64, 6, 9);
    for name in ModelName::ALL {
        let m = build_model(name, 6, 5).unwrap();
        let w = m.random_weights(4);
        for mode in [TilingMode::Regular, TilingMode::Sparse] {
            let plan = make_plan(&g, 16, 8, mode).unwrap();
            let c = compile(&m, &RegionLayout::from_plan(&plan), CompileOptions::default()).unwrap();
            let want = interpret_ir(&c.ir, &g, &f, &w).unwrap();
            for (n_s, n_e) in [(1, 1), (2, 1), (1, 3), (4, 4), (8, 2)] {
                let (out, _) = execute(&c.program, &plan, &g, &f, &w, cfg(n_s, n_e)).unwrap();
                let same = out
                    .vertex
                    .data()
                    .iter()
                    .zip(want.vertex.data())
                    .all(|(a, b)| a.to_bits() == b.to_bits());
                assert!(same, "{name} {mode:?} ({n_s},{n_e})");
            }
        }
    }
}

#[test]
fn empty_partitions_yield_identity_then_compute() {
    // Every edge points at vertex 0, so later partitions have no tiles.
    let g = gen_synthetic(SyntheticKind::Star, 8, 7, 0).unwrap();
    let plan = make_plan(&g, 2, 4, TilingMode::Sparse).unwrap();
    assert!(plan.partitions[1..].iter().all(|p| p.tiles.is_empty()));
    let m = build_model(ModelName::Gcn, 2, 2).unwrap();
    let prog = compile(&m, &RegionLayout::from_plan(&plan), CompileOptions::default())
        .unwrap()
        .program;
    let mut w = Weights::new();
    w.insert("W", WeightTensor::identity(2));
    let f = FeatureSet::new(Matrix::filled(8, 2, 1.0));
    let (out, _) = execute(&prog, &plan, &g, &f, &w, cfg(2, 2)).unwrap();
    assert_eq!(out.vertex.row(0), [7.0, 7.0]);
    assert!((1..8).all(|v| out.vertex.row(v) == [0.0, 0.0]));
}

fn drop_signal(prog: &mut Program, f: Function) {
    let body = prog.function_mut(f);
    let at = body.iter().position(|i| i.opcode == Opcode::Signal).unwrap();
    body.remove(at);
}

#[test]
fn dropped_signals_name_the_starved_stream() {
    for (f, starved) in [(Function::S, "e0"), (Function::E, "d0"), (Function::D, "s0")] {
        let (mut prog, plan, g, feats, w) = gcn_g4();
        drop_signal(&mut prog, f);
        match execute(&prog, &plan, &g, &feats, &w, cfg(1, 1)) {
            Err(RuntimeError::Deadlock(r)) => {
                assert_eq!(r.starved.map(|s| s.to_string()).as_deref(), Some(starved), "{f:?}: {r}");
                assert_eq!(r.cycle.len(), 3, "{r}");
                assert!(r.to_string().contains("d0 waits"));
            }
            other => panic!("{f:?}: expected deadlock, got {other:?}"),
        }
    }
}

#[test]
fn empty_trace_has_no_deadlock() {
    assert!(detect_deadlock(&Trace::default()).is_none());
}

#[test]
fn peak_memory_is_below_whole_graph() {
    let g = gen_synthetic(SyntheticKind::Rmat, 256, 2048, 5).unwrap();
    let plan = make_plan(&g, 64, 64, TilingMode::Sparse).unwrap();
    let m = build_model(ModelName::Gat, 8, 8).unwrap();
    let c = compile(&m, &RegionLayout::from_plan(&plan), CompileOptions::default()).unwrap();
    let w = m.random_weights(1);
    let f = FeatureSet::random(256, 8, 2);
    let (_, trace) = execute(&c.program, &plan, &g, &f, &w, cfg(2, 2)).unwrap();
    let whole: u64 = c
        .model
        .nodes
        .iter()
        .filter(|n| n.weight.is_none())
        .map(|n| {
            let rows = match n.info.domain {
                crate::model::Domain::Edge => 2048,
                _ => 256,
            };
            rows * n.info.dim as u64 * 4
        })
        .sum();
    assert!(trace.peak_live_bytes > 0);
    assert!(trace.peak_live_bytes < whole, "{} vs {whole}", trace.peak_live_bytes);
}

#[test]
fn zero_streams_are_rejected() {
    let (prog, plan, g, f, w) = gcn_g4();
    assert!(matches!(
        execute(&prog, &plan, &g, &f, &w, cfg(0, 1)),
        Err(RuntimeError::Protocol(ProtocolError::NoStreams { .. }))
    ));
}
