use std::collections::BTreeSet;

use proptest::prelude::*;
use zipper_core::codegen::{decode, encode, RegionLayout};
use zipper_core::graph::{degree_reorder, gen_synthetic, FeatureSet, Graph, SyntheticKind};
use zipper_core::ir::{interpret_ir, lower_to_ir};
use zipper_core::model::{build_model, ModelName};
use zipper_core::optimizer::{e2v, prune_dead};
use zipper_core::oracle::{compare, run_dense};
use zipper_core::pipeline::{compile, CompileOptions};
use zipper_core::runtime::{execute, StreamConfig};
use zipper_core::tiling::{make_plan, traffic_stats, TilingMode};
use zipper_core::timing::{simulate, HardwareConfig};

fn arb_graph() -> impl Strategy<Value = Graph> {
    (2usize..40, 0usize..6, any::<u64>(), 0usize..4).prop_map(|(v, density, seed, kind)| {
        let kind = [SyntheticKind::ErdosRenyi, SyntheticKind::Rmat, SyntheticKind::Star, SyntheticKind::Chain][kind];
        gen_synthetic(kind, v, (v * density).min(v * v / 2), seed)
            .unwrap()
            .with_random_types(3, seed)
            .unwrap()
    })
}

fn arb_model() -> impl Strategy<Value = ModelName> {
    prop::sample::select(ModelName::ALL.to_vec())
}

fn arb_mode() -> impl Strategy<Value = TilingMode> {
    prop::sample::select(vec![TilingMode::Regular, TilingMode::Sparse])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tiles_partition_the_edges(g in arb_graph(), dst in 1usize..12, src in 1usize..12, mode in arb_mode()) {
        let plan = make_plan(&g, dst, src, mode).unwrap();
        let mut seen = vec![false; g.num_edges()];
        for part in &plan.partitions {
            for t in &part.tiles {
                if mode == TilingMode::Sparse {
                    prop_assert!(!t.edges.is_empty());
                    let used: BTreeSet<u32> = t.edges.iter().map(|e| t.kept_sources[e.src as usize]).collect();
                    prop_assert_eq!(used.into_iter().collect::<Vec<_>>(), t.kept_sources.clone());
                }
                for e in &t.edges {
                    let id = e.id as usize;
                    prop_assert!(!seen[id]);
                    seen[id] = true;
                    let (s, d) = g.edge(id);
                    prop_assert_eq!(t.kept_sources[e.src as usize], s);
                    prop_assert_eq!(part.dst_range.start + e.dst, d);
                    prop_assert!(t.src_range.contains(&s));
                }
            }
        }
        prop_assert!(seen.into_iter().all(|x| x));
    }

    #[test]
    fn sparse_never_reads_more_than_regular(g in arb_graph(), dst in 1usize..12, src in 1usize..12) {
        let r = traffic_stats(&make_plan(&g, dst, src, TilingMode::Regular).unwrap(), 8, 4);
        let s = traffic_stats(&make_plan(&g, dst, src, TilingMode::Sparse).unwrap(), 8, 4);
        prop_assert!(s.src_vertex_loads <= r.src_vertex_loads);
        prop_assert_eq!(s.edge_loads, r.edge_loads);
    }

    #[test]
    fn reorder_is_a_relabelling(g in arb_graph()) {
        let (h, perm) = degree_reorder(&g);
        let mapped: BTreeSet<(u32, u32)> = (0..g.num_edges())
            .map(|e| {
                let (s, d) = g.edge(e);
                (perm.new_of_old[s as usize], perm.new_of_old[d as usize])
            })
            .collect();
        let got: BTreeSet<(u32, u32)> = (0..h.num_edges()).map(|e| h.edge(e)).collect();
        prop_assert_eq!(mapped, got);
        let degs = h.in_degrees();
        prop_assert!(degs.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn e2v_preserves_semantics(g in arb_graph(), name in arb_model(), seed in any::<u64>()) {
        let m = build_model(name, 5, 3).unwrap();
        let w = m.random_weights(seed);
        let f = FeatureSet::random(g.num_vertices(), 5, seed ^ 1);
        let p = lower_to_ir(&m).unwrap();
        let a = interpret_ir(&p, &g, &f, &w).unwrap();
        let b = interpret_ir(&prune_dead(&e2v(&p)), &g, &f, &w).unwrap();
        prop_assert!(compare(&a, &b, 1e-6).unwrap().pass);
    }

    #[test]
    fn encoding_round_trips(name in arb_model(), fi in 1usize..64, fo in 1usize..64, rows in 1usize..300, e2v in any::<bool>()) {
        let m = build_model(name, fi, fo).unwrap();
        let p = compile(&m, &RegionLayout::uniform(rows), CompileOptions { e2v }).unwrap().program;
        prop_assert_eq!(decode(&encode(&p)).unwrap(), p);
    }

    #[test]
    fn runtime_matches_oracle(
        g in arb_graph(),
        name in arb_model(),
        dst in 1usize..10,
        src in 1usize..10,
        mode in arb_mode(),
        n_s in 1usize..4,
        n_e in 1usize..4,
        seed in any::<u64>(),
    ) {
        let m = build_model(name, 4, 4).unwrap();
        let w = m.random_weights(seed);
        let f = FeatureSet::random(g.num_vertices(), 4, seed ^ 7);
        let plan = make_plan(&g, dst, src, mode).unwrap();
        let c = compile(&m, &RegionLayout::from_plan(&plan), CompileOptions::default()).unwrap();
        let (out, trace) = execute(&c.program, &plan, &g, &f, &w, StreamConfig { n_s, n_e }).unwrap();
        let want = run_dense(&m, &g, &f, &w).unwrap();
        let r = compare(&out, &want, 1e-5).unwrap();
        prop_assert!(r.pass, "{:?}", r);
        prop_assert!(trace.stall.is_none());
    }

    #[test]
    fn simulation_is_deterministic_and_conserves_work(
        g in arb_graph(),
        name in arb_model(),
        dst in 1usize..10,
        n_s in 1usize..5,
        n_e in 1usize..5,
    ) {
        let m = build_model(name, 16, 16).unwrap();
        let plan = make_plan(&g, dst, dst, TilingMode::Sparse).unwrap();
        let p = compile(&m, &RegionLayout::from_plan(&plan), CompileOptions::default()).unwrap().program;
        let hw = HardwareConfig::default();
        let a = simulate(&p, &plan, StreamConfig { n_s, n_e }, &hw).unwrap();
        let b = simulate(&p, &plan, StreamConfig { n_s, n_e }, &hw).unwrap();
        prop_assert_eq!(&a, &b);
        let base = simulate(&p, &plan, StreamConfig::default(), &hw).unwrap();
        prop_assert_eq!(&a.unit_busy, &base.unit_busy);
        prop_assert_eq!((a.offchip_read_bytes, a.offchip_write_bytes), p.predict_offchip(&plan));
        for busy in base.unit_busy.values() {
            prop_assert!(*busy <= base.total_cycles);
        }
    }

    #[test]
    fn faster_memory_never_slows_down(g in arb_graph(), name in arb_model(), bw in 1u64..512) {
        let m = build_model(name, 16, 16).unwrap();
        let plan = make_plan(&g, 8, 8, TilingMode::Sparse).unwrap();
        let p = compile(&m, &RegionLayout::from_plan(&plan), CompileOptions::default()).unwrap().program;
        let slow = HardwareConfig { offchip_bw: bw, ..HardwareConfig::default() };
        let fast = HardwareConfig { offchip_bw: bw * 2, ..HardwareConfig::default() };
        let cfg = StreamConfig { n_s: 2, n_e: 2 };
        prop_assert!(simulate(&p, &plan, cfg, &fast).unwrap().total_cycles <= simulate(&p, &plan, cfg, &slow).unwrap().total_cycles);
    }
}
