use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use zipper_core::codegen::Function;
use zipper_core::graph::GraphFormat;
use zipper_core::tiling::TilingMode;
use zipper_cli::commands::sweep_csv;
use zipper_cli::config::parse_streams;
use zipper_cli::{cmd_compile, cmd_run, cmd_sweep, cmd_verify, CliError, CompileArgs, RunConfig, SweepGrid, CONFIG_ENV};

#[derive(Parser)]
#[command(name = "zipper", version, about = "Compile, verify and simulate GNN layers on a tiled multi-stream accelerator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a model to a program binary and listing.
    Compile {
        /// Benchmark name (gcn, gat, sage, ggnn, rgcn) or model file.
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 128)]
        f_in: usize,
        #[arg(long, default_value_t = 128)]
        f_out: usize,
        #[arg(long)]
        no_e2v: bool,
        /// Rows reserved per tile buffer.
        #[arg(long, default_value_t = 256)]
        rows: usize,
        /// Output binary; the listing is written alongside with `.lst`.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Execute on the tiled runtime and compare against the dense reference.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Remove the first SIGNAL from one function to provoke a deadlock.
        #[arg(long, value_enum)]
        inject_drop_signal: Option<FnArg>,
    },
    /// Simulate and write statistics and energy reports.
    Run {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Simulate a grid of stream and unit counts.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        s_streams: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        e_streams: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        mu: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        vu: Option<Vec<usize>>,
        /// CSV destination (stdout when absent).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FnArg {
    S,
    E,
    D,
}

impl From<FnArg> for Function {
    fn from(f: FnArg) -> Self {
        match f {
            FnArg::S => Function::S,
            FnArg::E => Function::E,
            FnArg::D => Function::D,
        }
    }
}

/// Flags overriding the config file. Unset flags leave the file's value.
#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// `g4`, `star:V`, `chain:V`, `er:V:E`, `rmat:V:E`, or a file.
    #[arg(long)]
    graph: Option<String>,
    #[arg(long, value_parser = |s: &str| s.parse::<GraphFormat>())]
    graph_format: Option<GraphFormat>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    f_in: Option<usize>,
    #[arg(long)]
    f_out: Option<usize>,
    #[arg(long, value_parser = |s: &str| s.parse::<TilingMode>())]
    tiling: Option<TilingMode>,
    #[arg(long)]
    dst_size: Option<usize>,
    #[arg(long)]
    src_size: Option<usize>,
    #[arg(long)]
    reorder: bool,
    #[arg(long)]
    no_e2v: bool,
    /// `n_s,n_e`.
    #[arg(long)]
    streams: Option<String>,
    /// TOML file with `[hw]` and `[energy]` tables.
    #[arg(long)]
    hardware: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long)]
    energy: Option<PathBuf>,
    /// Utilization trace CSV.
    #[arg(long)]
    util: Option<PathBuf>,
    #[arg(long)]
    util_window: Option<u64>,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident => $t:ident),*) => {$( if let Some(v) = self.$f { c.$t = v; } )*};
        }
        set!(graph => graph, model => model, f_in => f_in, f_out => f_out, tiling => tiling, seed => seed, util_window => util_window);
        if self.graph_format.is_some() {
            c.graph_format = self.graph_format;
        }
        if self.dst_size.is_some() {
            c.dst_size = self.dst_size;
        }
        if self.src_size.is_some() {
            c.src_size = self.src_size;
        }
        c.reorder |= self.reorder;
        if self.no_e2v {
            c.e2v = false;
        }
        if let Some(s) = &self.streams {
            let s = parse_streams(s).map_err(CliError::Usage)?;
            c.streams = [s.n_s, s.n_e];
        }
        if self.hardware.is_some() {
            c.hardware = self.hardware;
        }
        if self.stats.is_some() {
            c.stats_out = self.stats;
        }
        if self.energy.is_some() {
            c.energy_out = self.energy;
        }
        if self.util.is_some() {
            c.util_out = self.util;
        }
        Ok(c)
    }
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Compile { model, f_in, f_out, no_e2v, rows, out } => {
            let r = cmd_compile(&CompileArgs { model, f_in, f_out, e2v: !no_e2v, rows, out: out.clone() })?;
            if out.is_none() {
                emit(&r.listing);
            }
            emit(&(json(&r.summary) + "\n"));
        }
        Command::Verify { run, inject_drop_signal } => {
            let cfg = run.resolve()?;
            let r = cmd_verify(&cfg, inject_drop_signal.map(Function::from))?;
            emit(&(json(&r) + "\n"));
            if !r.pass() {
                return Err(CliError::Verify(format!(
                    "max relative error {:e} exceeds {:e}",
                    r.compare.max_rel_err, r.tolerance
                )));
            }
            emit("PASS\n");
        }
        Command::Run { run } => {
            let cfg = run.resolve()?;
            let out = cmd_run(&cfg)?;
            if cfg.stats_out.is_none() {
                emit(&(out.stats.to_json() + "\n"));
            }
            if cfg.energy_out.is_none() {
                emit(&(out.energy.to_json() + "\n"));
            }
        }
        Command::Sweep { run, s_streams, e_streams, mu, vu, csv } => {
            let cfg = run.resolve()?;
            let hw = cfg.hardware_spec()?;
            let mut grid = SweepGrid::streams_only(&hw);
            if let Some(v) = s_streams {
                grid.s_streams = v;
            }
            if let Some(v) = e_streams {
                grid.e_streams = v;
            }
            if let Some(v) = mu {
                grid.mu_counts = v;
            }
            if let Some(v) = vu {
                grid.vu_counts = v;
            }
            let table = sweep_csv(&cmd_sweep(&cfg, &grid)?);
            match csv {
                Some(p) => std::fs::write(&p, table).map_err(|e| CliError::Failed(format!("{}: {e}", p.display())))?,
                None => emit(&table),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("zipper: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
