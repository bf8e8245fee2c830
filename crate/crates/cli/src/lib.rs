//! `mamba-bench`: verification suites, scaling benchmarks, toy generation and
//! report rendering on top of `mamba-speech`.
//!
//! Linking this crate installs the allocation-tracking global allocator,
//! which the benchmark's memory figures depend on.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mamba_speech::archs::{ar_generate, Sampler, PHONEMES, CODES};
use mamba_speech::bench::{emit_report, measure, read_csv, BenchConfig, BenchRecord, CrossoverReport};
use mamba_speech::memtrack::TrackingAllocator;
use mamba_speech::presets::{Mode, ModelRegistry, PresetOverrides, Task};
use mamba_speech::ssm::{default_evaluator, BlellochScan, CombineOrder, ScanOptions, SharedEvaluator};
use mamba_speech::verify::{run_verify, Scope};
use mamba_speech::Rng;

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

/// Environment variable read when `--out-dir` is not given.
pub const OUT_DIR_ENV: &str = "MAMBA_BENCH_OUT";
/// Test hook: `scan-order` swaps in a scan with a broken combine order.
pub const FAULT_ENV: &str = "MAMBA_BENCH_FAULT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "mamba-bench", version, about = "Mamba vs attention: verification suites and scaling benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the self-check suites: ssm, layers, attention, archs or all.
    Verify {
        #[arg(default_value = "all")]
        scope: String,
    },
    /// Measure peak memory and wall time over a duration grid.
    Bench(BenchArgs),
    /// Sample first-codebook tokens from a TTS preset.
    Generate(GenerateArgs),
    /// Re-render the chart and crossover summary from a benchmark CSV.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SizeArgs {
    /// Model width override.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Divide every layer count by this (rounding up).
    #[arg(long)]
    pub depth_divisor: Option<usize>,
    /// Attention head count override.
    #[arg(long)]
    pub heads: Option<usize>,
}

impl SizeArgs {
    fn overrides(&self) -> PresetOverrides {
        PresetOverrides { dim: self.dim, depth_divisor: self.depth_divisor, heads: self.heads }
    }
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated preset names, e.g. `mamba-tasnet-m,sepformer` or `layer:uni_mamba`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub presets: Vec<String>,
    /// Comma-separated durations in seconds, strictly increasing.
    #[arg(long, value_delimiter = ',', required = true)]
    pub durations: Vec<f64>,
    /// `forward` or `ar_decode`.
    #[arg(long, default_value = "forward")]
    pub mode: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = OUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,
    /// Threads for the parallel scan.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    #[command(flatten)]
    pub size: SizeArgs,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value = "vall-m")]
    pub preset: String,
    /// Number of synthetic phoneme tokens.
    #[arg(long, default_value_t = 16)]
    pub text_len: usize,
    /// Number of synthetic enrollment codes.
    #[arg(long, default_value_t = 16)]
    pub enroll_len: usize,
    #[arg(long, default_value_t = 100)]
    pub max_steps: usize,
    /// Sample from the k most likely codes; 0 picks greedily.
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Keep generating past the end marker until `--max-steps`.
    #[arg(long)]
    pub ignore_eos: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = OUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub size: SizeArgs,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// CSV written by `bench`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, env = OUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,
}

/// Bad invocation; maps to exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A check ran and did not hold; maps to exit status 1.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

/// Exit status for an error: 2 for usage problems anywhere in the chain.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let usage = err.chain().any(|e| {
        e.downcast_ref::<UsageError>().is_some() || e.downcast_ref::<mamba_speech::Error>().is_some_and(|e| e.is_usage())
    });
    if usage {
        EXIT_USAGE
    } else {
        EXIT_FAILURE
    }
}

fn out_dir(dir: &Option<PathBuf>) -> Result<&Path> {
    dir.as_deref()
        .ok_or_else(|| UsageError(format!("no output directory: pass --out-dir or set {OUT_DIR_ENV}")).into())
}

/// The SSM evaluator for this process, honoring the fault hook.
pub fn evaluator_from_env() -> Result<SharedEvaluator> {
    match std::env::var(FAULT_ENV).ok().as_deref() {
        None | Some("") => Ok(default_evaluator()),
        Some("scan-order") => Ok(Arc::new(BlellochScan {
            options: ScanOptions { order: CombineOrder::Scrambled, ..Default::default() },
        })),
        Some(other) => Err(UsageError(format!("unknown {FAULT_ENV} value '{other}'")).into()),
    }
}

pub fn cmd_verify(scope: &str, out: &mut dyn Write) -> Result<()> {
    let scope = Scope::parse(scope)?;
    let eval = evaluator_from_env()?;
    let report = run_verify(scope, &eval)?;
    write!(out, "{report}")?;
    if report.passed() {
        writeln!(out, "all checks passed")?;
        Ok(())
    } else {
        Err(CheckFailed(format!("{} check(s) failed", report.failures().count())).into())
    }
}

/// Every pair of presets measured on the same token grid.
fn comparisons(groups: &[Vec<BenchRecord>]) -> Result<Vec<CrossoverReport>> {
    let mut out = Vec::new();
    for (i, a) in groups.iter().enumerate() {
        for b in &groups[i + 1..] {
            let same_grid = a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.tokens == y.tokens && x.duration_s == y.duration_s);
            if same_grid && a[0].mode == b[0].mode {
                out.push(CrossoverReport::compare(a, b)?);
            }
        }
    }
    Ok(out)
}

/// Split records into runs of one preset and mode, in input order.
fn group(records: &[BenchRecord]) -> Vec<Vec<BenchRecord>> {
    let mut out: Vec<Vec<BenchRecord>> = Vec::new();
    for r in records {
        match out.iter_mut().find(|g| g[0].preset == r.preset && g[0].mode == r.mode) {
            Some(g) => g.push(r.clone()),
            None => out.push(vec![r.clone()]),
        }
    }
    out
}

fn print_reports(records: &[BenchRecord], reports: &[CrossoverReport], files: &mamba_speech::bench::ReportFiles, out: &mut dyn Write) -> Result<()> {
    for r in reports {
        write!(out, "{r}")?;
    }
    writeln!(out, "{} rows -> {}", records.len(), files.csv.display())?;
    writeln!(out, "chart -> {}", files.svg.display())?;
    writeln!(out, "summary -> {}", files.json.display())?;
    Ok(())
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let dir = out_dir(&args.out_dir)?;
    let mode = Mode::parse(&args.mode)?;
    let mut groups = Vec::new();
    for preset in &args.presets {
        let config = BenchConfig {
            preset: preset.clone(),
            durations: args.durations.clone(),
            reps: args.reps,
            warmup: args.warmup,
            mode,
            seed: args.seed,
            workers: args.workers,
            overrides: args.size.overrides(),
        };
        let recs = measure(&config).with_context(|| format!("benchmarking {preset}"))?;
        for r in &recs {
            writeln!(
                out,
                "{:<16} {:>8.3} s {:>8} tokens  peak {:>12} B  wall {:.6} s",
                r.preset, r.duration_s, r.tokens, r.peak_bytes, r.wall_s_median
            )?;
        }
        groups.push(recs);
    }
    let reports = comparisons(&groups)?;
    let records: Vec<BenchRecord> = groups.concat();
    let files = emit_report(&records, &reports, dir)?;
    print_reports(&records, &reports, &files, out)
}

pub fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    let dir = out_dir(&args.out_dir)?;
    let records = read_csv(&args.input)?;
    let reports = comparisons(&group(&records))?;
    let files = emit_report(&records, &reports, dir)?;
    print_reports(&records, &reports, &files, out)
}

pub fn cmd_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let dir = out_dir(&args.out_dir)?;
    let mut model = ModelRegistry::builtin().build_named(&args.preset, &args.size.overrides(), args.seed)?;
    if model.preset().task != Task::Tts {
        return Err(UsageError(format!("{} is not a TTS preset", args.preset)).into());
    }
    model.set_evaluator(&evaluator_from_env()?);
    let lm = model.codec_lm().expect("TTS presets carry a codec LM");
    let mut rng = Rng::new(args.seed);
    let phonemes: Vec<u32> = (0..args.text_len).map(|_| rng.below(PHONEMES as u64) as u32).collect();
    let enroll: Vec<u32> = (0..args.enroll_len).map(|_| rng.below(CODES as u64) as u32).collect();
    let mut sampler = if args.top_k == 0 {
        Sampler::Greedy
    } else {
        Sampler::top_k(args.top_k, args.temperature, rng.next_u64())
    };
    let gen = ar_generate(lm, &phonemes, &enroll, args.max_steps, &mut sampler, !args.ignore_eos)?;

    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tokens_path = dir.join(format!("{}-tokens.txt", args.preset));
    let text: Vec<String> = gen.tokens.iter().map(u32::to_string).collect();
    std::fs::write(&tokens_path, text.join("\n") + "\n").with_context(|| format!("writing {}", tokens_path.display()))?;
    let latency_path = dir.join(format!("{}-latency.csv", args.preset));
    let mut log = String::from("step,seconds\n");
    for (i, s) in gen.step_seconds.iter().enumerate() {
        log.push_str(&format!("{i},{s}\n"));
    }
    std::fs::write(&latency_path, log).with_context(|| format!("writing {}", latency_path.display()))?;

    let total: f64 = gen.step_seconds.iter().sum();
    writeln!(
        out,
        "{}: {} tokens{} in {:.3} s -> {}",
        args.preset,
        gen.tokens.len(),
        if gen.hit_eos { " (end marker)" } else { "" },
        total,
        tokens_path.display()
    )?;
    writeln!(out, "latencies -> {}", latency_path.display())?;
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Verify { scope } => cmd_verify(scope, out),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Generate(a) => cmd_generate(a, out),
        Command::Report(a) => cmd_report(a, out),
    }
}

/// Parse `args`, run, and return the process exit status. Errors go to
/// stderr.
pub fn main_with(args: impl IntoIterator<Item = impl Into<OsString> + Clone>, out: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
