use std::path::Path;
use std::process::{Command, Output};

use zipper_cli::commands::sweep_csv;
use zipper_cli::{cmd_compile, cmd_run, cmd_sweep, CompileArgs, RunConfig, SweepGrid, Workload, CONFIG_ENV};
use zipper_core::codegen::decode;
use zipper_core::tiling::TilingMode;
use zipper_core::timing::SimStats;

fn zipper(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zipper"))
        .args(args)
        .env_remove(CONFIG_ENV)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small(model: &str) -> RunConfig {
    RunConfig {
        graph: "rmat:256:2048".into(),
        model: model.into(),
        f_in: 16,
        f_out: 16,
        dst_size: Some(64),
        src_size: Some(64),
        ..RunConfig::default()
    }
}

#[test]
fn compile_writes_binary_and_listing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gcn.zpr");
    let o = zipper(&["compile", "--model", "gcn", "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let prog = decode(&std::fs::read(&out).unwrap()).unwrap();
    assert!(!prog.s_function.is_empty() && !prog.e_function.is_empty() && !prog.d_function.is_empty());
    let listing = std::fs::read_to_string(out.with_extension("lst")).unwrap();
    assert_eq!(listing, prog.disassemble());
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(summary["passes"].is_object());
}

#[test]
fn e2v_leaves_fewer_edge_ops_for_gat() {
    let args = |e2v| CompileArgs {
        model: "gat".into(),
        f_in: 32,
        f_out: 32,
        e2v,
        rows: 64,
        out: None,
    };
    let on = cmd_compile(&args(true)).unwrap().summary;
    let off = cmd_compile(&args(false)).unwrap().summary;
    assert!(on.edge_ops < off.edge_ops, "{} vs {}", on.edge_ops, off.edge_ops);
    assert!(on.passes.ops_moved > 0);
    assert_eq!(off.passes.ops_moved, 0);
}

#[test]
fn unknown_model_exits_with_usage_code() {
    assert_eq!(zipper(&["compile", "--model", "nosuch"]).status.code(), Some(2));
    assert_eq!(zipper(&["run", "--streams", "0,1"]).status.code(), Some(2));
    assert_eq!(zipper(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn verify_passes_and_detects_faults() {
    let base = ["verify", "--graph", "rmat:256:2048", "--model", "gcn", "--f-in", "8", "--f-out", "8", "--dst-size", "64", "--src-size", "64"];
    let ok = zipper(&base);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(stdout(&ok).contains("PASS"));

    let mut faulty = base.to_vec();
    faulty.extend(["--inject-drop-signal", "s"]);
    let bad = zipper(&faulty);
    assert_eq!(bad.status.code(), Some(1));
    let err = String::from_utf8_lossy(&bad.stderr);
    assert!(err.contains("deadlock") && err.contains("starved"), "{err}");
}

#[test]
fn zero_edge_graph_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.mtx");
    std::fs::write(&path, "%%MatrixMarket matrix coordinate pattern general\n5 5 0\n").unwrap();
    for model in ["gcn", "gat", "sage"] {
        let o = zipper(&["verify", "--graph", path.to_str().unwrap(), "--model", model, "--f-in", "4", "--f-out", "4"]);
        assert_eq!(o.status.code(), Some(0), "{model}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn config_file_layers_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.toml");
    let stats = dir.path().join("stats.json");
    std::fs::write(
        &conf,
        format!(
            "graph = \"rmat:128:512\"\nmodel = \"sage\"\nf_in = 8\nf_out = 8\nstreams = [1, 1]\nstats_out = {:?}\n",
            stats.to_str().unwrap()
        ),
    )
    .unwrap();
    let run = |extra: &[&str]| {
        let o = Command::new(env!("CARGO_BIN_EXE_zipper"))
            .arg("run")
            .args(extra)
            .env(CONFIG_ENV, &conf)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        serde_json::from_str::<SimStats>(&std::fs::read_to_string(&stats).unwrap()).unwrap()
    };
    let from_file = run(&[]);
    let overridden = run(&["--streams", "4,4"]);
    let mut want = RunConfig::from_toml(&std::fs::read_to_string(&conf).unwrap()).unwrap();
    assert_eq!(from_file, cmd_run(&want).unwrap().stats);
    want.streams = [4, 4];
    assert_eq!(overridden, cmd_run(&want).unwrap().stats);
}

#[test]
fn run_writes_energy_and_utilization() {
    let dir = tempfile::tempdir().unwrap();
    let (e, u) = (dir.path().join("energy.json"), dir.path().join("out/util.csv"));
    let cfg = RunConfig {
        energy_out: Some(e.clone()),
        util_out: Some(u.clone()),
        util_window: 500,
        ..small("gat")
    };
    let out = cmd_run(&cfg).unwrap();
    let energy: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&e).unwrap()).unwrap();
    assert_eq!(energy["offchip_pj"].as_f64().unwrap(), (out.stats.offchip_bytes() * 8 * 7) as f64);
    let csv = std::fs::read_to_string(&u).unwrap();
    assert!(csv.starts_with("cycle,mu,vu,mem\n"));
    assert_eq!(csv.lines().count(), out.util.len() + 1);
}

#[test]
fn tiny_embedding_memory_exits_with_capacity_code() {
    let dir = tempfile::tempdir().unwrap();
    let hw = dir.path().join("hw.toml");
    std::fs::write(&hw, "[hw]\nuem_bytes = 4096\n").unwrap();
    let o = zipper(&["run", "--graph", "rmat:256:2048", "--hardware", hw.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn more_streams_take_fewer_cycles() {
    let c = RunConfig {
        graph: "rmat:1024:8192".into(),
        dst_size: Some(256),
        src_size: Some(128),
        ..small("gcn")
    };
    assert!(Workload::prepare(&c).unwrap().plan.num_tiles() >= 16);
    let one = cmd_run(&RunConfig { streams: [1, 1], ..c.clone() }).unwrap().stats;
    let four = cmd_run(&RunConfig { streams: [4, 4], ..c }).unwrap().stats;
    assert!(four.total_cycles < one.total_cycles);
    assert_eq!(four.busy_total(), one.busy_total());
}

#[test]
fn sparse_reordered_reads_no_more_than_regular() {
    let regular = cmd_run(&RunConfig { tiling: TilingMode::Regular, ..small("gcn") }).unwrap().stats;
    let sparse = cmd_run(&RunConfig { tiling: TilingMode::Sparse, reorder: true, ..small("gcn") }).unwrap().stats;
    assert!(sparse.offchip_read_bytes <= regular.offchip_read_bytes);
}

#[test]
fn single_stream_sweep_is_flat() {
    let grid = SweepGrid {
        s_streams: vec![1],
        e_streams: vec![1],
        mu_counts: vec![1, 1],
        vu_counts: vec![2],
    };
    let cells = cmd_sweep(&small("gcn"), &grid).unwrap();
    let serial = cmd_run(&RunConfig { streams: [1, 1], ..small("gcn") }).unwrap().stats.total_cycles;
    assert!(cells.iter().all(|c| c.total_cycles == Some(serial) && c.normalized == Some(1.0)));
}

#[test]
fn stream_sweep_is_non_increasing_within_overhead() {
    let grid = SweepGrid {
        s_streams: vec![1, 2, 4],
        e_streams: vec![1, 2, 4],
        mu_counts: vec![1],
        vu_counts: vec![2],
    };
    let c = RunConfig { graph: "rmat:1024:8192".into(), dst_size: Some(256), src_size: Some(128), ..small("gcn") };
    let cells = cmd_sweep(&c, &grid).unwrap();
    let tiles = Workload::prepare(&c).unwrap().plan.num_tiles() as u64;
    let diag: Vec<u64> = [1, 2, 4]
        .iter()
        .map(|&n| cells.iter().find(|x| x.n_s == n && x.n_e == n).unwrap().total_cycles.unwrap())
        .collect();
    for w in diag.windows(2) {
        assert!(w[1] <= w[0] + tiles * 4 * zipper_core::timing::ISSUE_OVERHEAD, "{diag:?}");
    }
    let csv = sweep_csv(&cells);
    assert_eq!(csv.lines().count(), 10);
}

#[test]
fn sweep_binary_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let o = zipper(&[
        "sweep", "--graph", "rmat:128:512", "--f-in", "8", "--f-out", "8", "--s-streams", "1,2", "--e-streams", "2", "--mu", "1,2",
        "--csv", csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(Path::new(&csv)).unwrap();
    assert_eq!(text.lines().count(), 5);
}
