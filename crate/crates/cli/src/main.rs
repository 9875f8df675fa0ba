// SPDX-License-Identifier: Apache-2.0

//! `emrmat`: generate, validate and inspect external-memory R-MAT runs.
//!
//! Exit codes: 0 success, 1 pipeline fault or failed validation,
//! 2 invalid configuration, 3 incomplete run directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emrmat::csr::CsrGraph;
use emrmat::layout::Layout;
use emrmat::pipeline::{run_phases, Phase};
use emrmat::validate::{degree_stats, load_completed_run, validate_run, DegreeStats};
use emrmat::{ClusterConfig, Error};

const EXIT_FAULT: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INCOMPLETE: u8 = 3;

#[derive(Parser)]
#[command(name = "emrmat", version, about = "External-memory distributed R-MAT graph generator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline (or selected phases) and write CSR files plus a manifest.
    Generate(Box<GenerateArgs>),
    /// Check a completed run directory against its manifest and the oracle.
    Validate {
        #[arg(long, default_value = "emrmat-work")]
        workdir: PathBuf,
    },
    /// Print degree and I/O statistics of a completed run.
    Stats {
        #[arg(long, default_value = "emrmat-work")]
        workdir: PathBuf,
    },
}

#[derive(Args)]
struct GenerateArgs {
    /// `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scale: Option<String>,
    #[arg(long)]
    edge_factor: Option<String>,
    #[arg(long)]
    nodes: Option<String>,
    #[arg(long)]
    cores: Option<String>,
    /// Bytes, with optional K/M/G suffix.
    #[arg(long)]
    mem_per_core: Option<String>,
    #[arg(long)]
    block_edges: Option<String>,
    #[arg(long)]
    packet_bytes: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// R-MAT quadrant probabilities `a,b,c,d`.
    #[arg(long)]
    rmat: Option<String>,
    #[arg(long, value_name = "hash|sorted")]
    csr_variant: Option<String>,
    #[arg(long, value_name = "unordered|sorted")]
    redistribute: Option<String>,
    #[arg(long)]
    workdir: Option<String>,
    /// Maximum random delivery delay per message, in milliseconds.
    #[arg(long, value_name = "MS")]
    jitter: Option<String>,
    #[arg(long)]
    emit_both_orientations: bool,
    #[arg(long)]
    watchdog_secs: Option<String>,
    /// Run only these phases, in pipeline order, against the workdir.
    #[arg(long, value_delimiter = ',')]
    phase: Vec<Phase>,
    /// Write the gathered permutation as little-endian u64 values.
    #[arg(long, value_name = "PATH")]
    dump_permutation: Option<PathBuf>,
}

impl GenerateArgs {
    fn resolve(&self) -> emrmat::Result<ClusterConfig> {
        let mut cfg = ClusterConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_kv_str(&text)?;
        }
        let flags = [
            ("scale", &self.scale),
            ("edge-factor", &self.edge_factor),
            ("nodes", &self.nodes),
            ("cores", &self.cores),
            ("mem-per-core", &self.mem_per_core),
            ("block-edges", &self.block_edges),
            ("packet-bytes", &self.packet_bytes),
            ("seed", &self.seed),
            ("rmat", &self.rmat),
            ("csr-variant", &self.csr_variant),
            ("redistribute", &self.redistribute),
            ("workdir", &self.workdir),
            ("jitter", &self.jitter),
            ("watchdog-secs", &self.watchdog_secs),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.emit_both_orientations {
            cfg.emit_both_orientations = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn phases(&self) -> Vec<Phase> {
        if self.phase.is_empty() {
            return Phase::ALL.to_vec();
        }
        Phase::ALL
            .into_iter()
            .filter(|p| self.phase.contains(p))
            .collect()
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Generate(args) => cmd_generate(&args),
        Command::Validate { workdir } => cmd_validate(&workdir),
        Command::Stats { workdir } => cmd_stats(&workdir),
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("emrmat: {msg}");
    ExitCode::from(code)
}

fn exit_for(e: &Error) -> ExitCode {
    match e {
        Error::Config(_) => fail(EXIT_CONFIG, e),
        Error::Incomplete(_) => fail(EXIT_INCOMPLETE, e),
        _ => {
            let phase = e.phase().unwrap_or("setup");
            fail(EXIT_FAULT, format!("phase {phase} failed: {e}"))
        }
    }
}

fn cmd_generate(args: &GenerateArgs) -> ExitCode {
    let cfg = match args.resolve() {
        Ok(cfg) => cfg,
        Err(e) => return exit_for(&e),
    };
    let report = match run_phases(&cfg, &args.phases()) {
        Ok(r) => r,
        Err(e) => return exit_for(&e),
    };
    if let Some(path) = &args.dump_permutation {
        if let Err(e) = dump_permutation(&cfg, path) {
            return exit_for(&e);
        }
    }
    let names: Vec<_> = report.phases.iter().map(|p| p.name()).collect();
    println!("completed {} in {}", names.join(","), cfg.workdir.display());
    for (k, v) in report.manifest.checksums() {
        println!("checksum.{k}={v}");
    }
    ExitCode::SUCCESS
}

fn dump_permutation(cfg: &ClusterConfig, path: &Path) -> emrmat::Result<()> {
    let layout = Layout::new(&cfg.workdir);
    let mut bytes = Vec::with_capacity(cfg.n() as usize * 8);
    for i in 0..cfg.nodes {
        let p = layout.perm(i);
        bytes.extend(std::fs::read(&p).map_err(|e| Error::io(&p, e))?);
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn cmd_validate(workdir: &Path) -> ExitCode {
    let report = match validate_run(workdir) {
        Ok(r) => r,
        Err(e) => return exit_for(&e),
    };
    for c in &report.checks {
        let status = if c.ok { "ok  " } else { "FAIL" };
        if c.detail.is_empty() {
            println!("{status} {}", c.name);
        } else {
            println!("{status} {}: {}", c.name, c.detail);
        }
    }
    if report.is_ok() {
        println!("all {} checks passed", report.checks.len());
        ExitCode::SUCCESS
    } else {
        let failed = report.checks.iter().filter(|c| !c.ok).count();
        fail(EXIT_FAULT, format!("{failed} of {} checks failed", report.checks.len()))
    }
}

fn cmd_stats(workdir: &Path) -> ExitCode {
    match stats_text(workdir) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => exit_for(&e),
    }
}

/// Splits `io.<phase>[.n<i>[.c<j>]].<counter>` into phase and counter.
fn parse_io_key(key: &str) -> Option<(&str, &str)> {
    let rest = key.strip_prefix("io.")?;
    let (mut scope, counter) = rest.rsplit_once('.')?;
    for tag in ['c', 'n'] {
        if let Some((head, last)) = scope.rsplit_once('.') {
            let is_tag = last.strip_prefix(tag).is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()));
            if is_tag {
                scope = head;
            }
        }
    }
    Some((scope, counter))
}

fn stats_text(workdir: &Path) -> emrmat::Result<String> {
    let (cfg, manifest) = load_completed_run(workdir)?;
    let layout = Layout::new(workdir);
    let mut out_deg = Vec::with_capacity(cfg.n() as usize);
    let mut in_deg = vec![0u64; cfg.n() as usize];
    for i in 0..cfg.nodes {
        let csr = CsrGraph::read(&layout.csr(i))?;
        out_deg.extend(csr.degrees());
        for &v in &csr.adjv {
            in_deg[v as usize] += 1;
        }
    }
    let total: Vec<u64> = out_deg.iter().zip(&in_deg).map(|(a, b)| a + b).collect();

    let mut io: BTreeMap<&str, BTreeMap<&str, u64>> = BTreeMap::new();
    for (k, v) in manifest.entries() {
        if let Some((phase, counter)) = parse_io_key(k) {
            *io.entry(phase).or_default().entry(counter).or_default() += v.parse::<u64>().unwrap_or(0);
        }
    }

    let mut s = String::new();
    let _ = writeln!(s, "degrees (n = {}, m = {})", cfg.n(), cfg.total_edges());
    let _ = writeln!(s, "{:<8} {:>8} {:>8} {:>10} {:>10} {:>10}", "kind", "min", "max", "mean", "median", "max/mean");
    let stats = [("out", degree_stats(&out_deg)), ("total", degree_stats(&total))];
    for (kind, d) in &stats {
        let _ = writeln!(
            s,
            "{kind:<8} {:>8} {:>8} {:>10.3} {:>10.1} {:>10.3}",
            d.min, d.max, d.mean, d.median, d.max_mean_ratio
        );
    }
    let _ = writeln!(s, "\nio (blocks)");
    let _ = writeln!(s, "{:<26} {:>10} {:>10} {:>10} {:>10}", "phase", "seq_reads", "seq_writes", "rand_reads", "rand_writes");
    for (phase, c) in &io {
        let get = |k: &str| c.get(k).copied().unwrap_or(0);
        let _ = writeln!(
            s,
            "{phase:<26} {:>10} {:>10} {:>10} {:>10}",
            get("seq_reads"),
            get("seq_writes"),
            get("rand_reads"),
            get("rand_writes")
        );
    }

    let _ = writeln!(s, "\nphase,counter,value");
    for (phase, c) in &io {
        for (counter, v) in c {
            let _ = writeln!(s, "{phase},{counter},{v}");
        }
    }
    for (kind, d) in &stats {
        write_degree_rows(&mut s, kind, d);
    }
    Ok(s)
}

fn write_degree_rows(s: &mut String, kind: &str, d: &DegreeStats) {
    let phase = format!("degree.{kind}");
    let _ = writeln!(s, "{phase},min,{}", d.min);
    let _ = writeln!(s, "{phase},max,{}", d.max);
    let _ = writeln!(s, "{phase},mean,{:.6}", d.mean);
    let _ = writeln!(s, "{phase},median,{}", d.median);
    let _ = writeln!(s, "{phase},max_mean_ratio,{:.6}", d.max_mean_ratio);
    for (bin, count) in d.histogram.iter().enumerate() {
        let _ = writeln!(s, "{phase},log2_bin_{bin},{count}");
    }
}
