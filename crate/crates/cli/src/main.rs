// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hero_cli::exit;
use hero_cli::experiment::{run_point, sweep, BenchParams, Point, RunError, SweepAxis};
use hero_cli::matrix::expand_matrix;
use hero_cli::report::to_csv;
use hero_sim::analysis::{analyze, decode, parse_path, rescale, typed_csv, Analysis, Assertion, DecodeMeta};
use hero_sim::bench::BenchmarkKind;
use hero_sim::config::{parse_config, Interconnect, SimConfig};
use hero_sim::offload::Mode;

#[derive(Parser)]
#[command(name = "herosim", version, about = "Heterogeneous many-core SoC simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one benchmark and write results.csv.
    Run(RunArgs),
    /// Run the product of the given axes and write results.csv.
    Sweep(SweepArgs),
    /// Decode a trace, report latencies and check assertions.
    Analyze(AnalyzeArgs),
    /// Flatten a test-matrix graph into its combinations.
    ExpandMatrix {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Check a configuration document.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct Bench {
    /// Matrix dimension for matmul.
    #[arg(long)]
    matmul_n: Option<u32>,
    /// Compute cycles per multiply-accumulate for matmul.
    #[arg(long)]
    cycles_per_mac: Option<u64>,
    #[arg(long)]
    memcopy_bytes: Option<u32>,
    #[arg(long)]
    graph_nodes: Option<u32>,
    #[arg(long)]
    graph_iterations: Option<u32>,
    #[arg(long)]
    forest_trees: Option<u32>,
    #[arg(long)]
    forest_depth: Option<u32>,
}

impl Bench {
    fn params(&self) -> BenchParams {
        BenchParams {
            matmul_n: self.matmul_n,
            cycles_per_mac: self.cycles_per_mac,
            memcopy_bytes: self.memcopy_bytes,
            graph_nodes: self.graph_nodes,
            graph_iterations: self.graph_iterations,
            forest_trees: self.forest_trees,
            forest_depth: self.forest_depth,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "matmul")]
    benchmark: BenchmarkKind,
    #[arg(long, default_value = "svm")]
    mode: Mode,
    #[arg(long)]
    clusters: Option<u32>,
    #[arg(long, value_parser = parse_interconnect)]
    interconnect: Option<Interconnect>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write a binary trace of every attach point here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Records per tracer buffer before a drain.
    #[arg(long, default_value_t = 4096)]
    trace_depth: usize,
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    #[command(flatten)]
    bench: Bench,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// `name=v1,v2,...` for clusters, mode, benchmark or interconnect.
    #[arg(long = "axis", required = true)]
    axes: Vec<SweepAxis>,
    #[arg(long, default_value = "matmul")]
    benchmark: BenchmarkKind,
    #[arg(long, default_value = "svm")]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    #[command(flatten)]
    bench: Bench,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Built-in assertion to check (repeatable): hit-under-miss.
    #[arg(long = "assert")]
    asserts: Vec<String>,
    /// Multiply every latency by this clock ratio.
    #[arg(long)]
    ratio: Option<f64>,
    /// Configuration the trace was recorded with.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    bus_window: u64,
    /// Directory for events.csv, latency.csv, bus.csv and report.txt.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn parse_interconnect(s: &str) -> Result<Interconnect, String> {
    s.parse().map_err(|_| format!("unknown interconnect `{s}` (expected bus or noc)"))
}

/// Error carrying the exit code it maps to.
struct Fail(i32, String);

impl From<RunError> for Fail {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(_) | RunError::Usage(_) => Fail(exit::CONFIG, e.to_string()),
            RunError::Sim(_) => Fail(exit::RUNTIME, e.to_string()),
        }
    }
}

fn io_fail(path: &Path, e: std::io::Error) -> Fail {
    Fail(exit::RUNTIME, format!("{}: {e}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<SimConfig, Fail> {
    let Some(path) = path else {
        return Ok(SimConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Fail(exit::CONFIG, format!("{}: {e}", path.display())))?;
    let cfg = parse_config(&text).map_err(|e| Fail(exit::CONFIG, format!("{}: {e}", path.display())))?;
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<(), Fail> {
    fs::write(path, text).map_err(|e| io_fail(path, e))
}

fn cmd_run(a: RunArgs) -> Result<(), Fail> {
    let base = load_config(a.config.as_deref())?;
    let point = Point {
        benchmark: a.benchmark,
        mode: a.mode,
        clusters: a.clusters,
        interconnect: a.interconnect,
    };
    let depth = a.trace.as_ref().map(|_| a.trace_depth);
    let out = run_point(&base, &point, &a.bench.params(), a.seed, depth)?;
    if let Some(path) = &a.trace {
        out.trace.dump(path).map_err(|e| io_fail(path, e))?;
    }
    write(&a.out, &to_csv(std::slice::from_ref(&out.row)))
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Fail> {
    let base = load_config(a.config.as_deref())?;
    let start = Point {
        benchmark: a.benchmark,
        mode: a.mode,
        clusters: None,
        interconnect: None,
    };
    let rows = sweep(&base, start, &a.axes, &a.bench.params(), a.seed)?;
    write(&a.out, &to_csv(&rows))
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<(), Fail> {
    let cfg = load_config(a.config.as_deref())?;
    let assertions = a
        .asserts
        .iter()
        .map(|n| Assertion::builtin(n).ok_or_else(|| Fail(exit::CONFIG, format!("unknown assertion `{n}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    let parsed = parse_path(&a.trace).map_err(|e| Fail(exit::CONFIG, format!("{}: {e}", a.trace.display())))?;
    let mut decoded = decode(&parsed, &DecodeMeta::from(&cfg.calibration));
    if let Some(r) = a.ratio {
        decoded = rescale(&decoded, r).map_err(|e| Fail(exit::CONFIG, e.to_string()))?;
    }
    for d in &decoded.diagnostics {
        eprintln!("warning: record {} at {}: {}", d.source, d.ts, d.message);
    }
    let report = analyze(
        &decoded,
        &Analysis {
            bus_window: a.bus_window.max(1),
            assertions,
        },
    );
    fs::create_dir_all(&a.out_dir).map_err(|e| io_fail(&a.out_dir, e))?;
    let text = report.to_text();
    write(&a.out_dir.join("events.csv"), &typed_csv(&decoded))?;
    write(&a.out_dir.join("latency.csv"), &report.latency_csv())?;
    write(&a.out_dir.join("bus.csv"), &report.bus_csv())?;
    write(&a.out_dir.join("report.txt"), &text)?;
    print!("{text}");
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .verdicts
            .iter()
            .filter(|v| !v.passed)
            .map(|v| v.name.as_str())
            .collect();
        Err(Fail(exit::ASSERTION, format!("assertion failed: {}", failed.join(", "))))
    }
}

fn cmd_expand(graph: &Path) -> Result<(), Fail> {
    let text = fs::read_to_string(graph).map_err(|e| Fail(exit::CONFIG, format!("{}: {e}", graph.display())))?;
    let e = expand_matrix(&text).map_err(|e| Fail(exit::CONFIG, format!("{}: {e}", graph.display())))?;
    for d in &e.dead_ends {
        eprintln!("warning: {d}");
    }
    for t in &e.tuples {
        println!("{}", t.join(","));
    }
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<(), Fail> {
    let cfg = load_config(Some(path))?;
    println!("ok {:016x}", cfg.hash());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Analyze(a) => cmd_analyze(a),
        Cmd::ExpandMatrix { graph } => cmd_expand(&graph),
        Cmd::ValidateConfig { config } => cmd_validate(&config),
    };
    match res {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code as u8)
        }
    }
}
