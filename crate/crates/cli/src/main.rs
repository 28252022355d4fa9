// SPDX-License-Identifier: Apache-2.0

//! `boostvm`: generate workloads, mine and validate blocks, run benchmarks.
//!
//! Exit codes: 0 success, 1 block rejected, 2 usage or I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use boostvm_core::chain::{append_block, serialize_block};
use boostvm_core::harness::{self, BenchConfig, SweepKind};
use boostvm_core::{
    gen_workload, mine_in_parallel, replay_bytes, Benchmark, State, Verdict, VmConfig, Workload,
    WorkloadSpec, GENESIS_DIGEST,
};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "boostvm",
    version,
    about = "Speculative parallel block execution with transactional boosting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded workload (initial state plus transactions) as JSON.
    GenBlock {
        #[arg(long)]
        benchmark: Benchmark,
        #[arg(long)]
        size: usize,
        /// Percentage of transactions that contend with another one.
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=100))]
        conflict: u8,
        #[arg(long, default_value_t = harness::DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mine a workload in parallel, write the block and append it to a chain.
    ///
    /// The block's pre-state is written next to it as `<block>.pre`.
    Mine {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = harness::DEFAULT_WORKERS)]
        workers: usize,
        #[arg(long)]
        chain: PathBuf,
        /// Block file; defaults to the input path with extension `block`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay a block and check it. Exits 1 with the reason on rejection.
    Validate {
        #[arg(long)]
        block: PathBuf,
        #[arg(long, default_value_t = harness::DEFAULT_WORKERS)]
        workers: usize,
        /// Pre-state file; defaults to `<block>.pre`.
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Run a block-size or conflict sweep and write one CSV row per point and mode.
    Bench {
        #[arg(long)]
        benchmark: Benchmark,
        #[arg(long)]
        sweep: SweepKind,
        #[arg(long, default_value_t = harness::DEFAULT_WORKERS)]
        workers: usize,
        #[arg(long, default_value_t = harness::DEFAULT_REPETITIONS)]
        reps: usize,
        #[arg(long, default_value_t = harness::DEFAULT_WARMUPS)]
        warmups: usize,
        #[arg(long, default_value_t = harness::DEFAULT_SEED)]
        seed: u64,
        /// Busy-work iterations per VM step.
        #[arg(long, default_value_t = harness::BENCH_STEP_WORK)]
        step_work: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

fn sidecar(block: &Path) -> PathBuf {
    let mut name = block.as_os_str().to_owned();
    name.push(".pre");
    PathBuf::from(name)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn positive(workers: usize) -> Result<usize> {
    if workers == 0 {
        bail!("--workers must be at least 1");
    }
    Ok(workers)
}

fn gen_block(spec: WorkloadSpec, out: &Path) -> Result<()> {
    let w = gen_workload(spec)?;
    write_json(out, &w)?;
    println!(
        "wrote {} txs ({} contending, {} requested) to {}",
        w.txs.len(),
        w.contending,
        spec.requested_contending(),
        out.display()
    );
    Ok(())
}

fn mine(input: &Path, workers: usize, chain: &Path, out: Option<PathBuf>) -> Result<()> {
    let w: Workload = read_json(input)?;
    let parent = boostvm_core::chain::load_chain(chain)?
        .last()
        .map_or(GENESIS_DIGEST.to_owned(), |b| b.post_state_digest.clone());
    let mined = mine_in_parallel(
        &w.initial_state,
        &w.txs,
        positive(workers)?,
        VmConfig::default(),
        &parent,
    );
    let out = out.unwrap_or_else(|| input.with_extension("block"));
    fs::write(&out, serialize_block(&mined.block))
        .with_context(|| format!("writing {}", out.display()))?;
    write_json(&sidecar(&out), &w.initial_state)?;
    append_block(chain, &mined.block)?;
    let committed = mined
        .block
        .statuses
        .iter()
        .filter(|s| **s == boostvm_core::TxStatus::Committed)
        .count();
    println!(
        "mined {} txs ({committed} committed, {} edges) to {}; post-state {}",
        mined.block.txs.len(),
        mined.block.schedule.hb.edges.len(),
        out.display(),
        mined.block.post_state_digest
    );
    Ok(())
}

/// Returns whether the block was accepted.
fn validate(block: &Path, workers: usize, state: Option<PathBuf>) -> Result<bool> {
    let bytes = fs::read(block).with_context(|| format!("reading {}", block.display()))?;
    let pre: State = read_json(&state.unwrap_or_else(|| sidecar(block)))?;
    let result = replay_bytes(&bytes, &pre, positive(workers)?, VmConfig::default());
    match result.verdict {
        Verdict::Accept => {
            println!("accept {}", result.replay_digest.unwrap_or_default());
            Ok(true)
        }
        Verdict::Reject(r) => {
            eprintln!("reject {r}");
            Ok(false)
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenBlock {
            benchmark,
            size,
            conflict,
            seed,
            out,
        } => {
            let spec = WorkloadSpec {
                benchmark,
                block_size: size,
                conflict_pct: conflict,
                seed,
            };
            gen_block(spec, &out)?;
        }
        Command::Mine {
            input,
            workers,
            chain,
            out,
        } => mine(&input, workers, &chain, out)?,
        Command::Validate {
            block,
            workers,
            state,
        } => return validate(&block, workers, state),
        Command::Bench {
            benchmark,
            sweep,
            workers,
            reps,
            warmups,
            seed,
            step_work,
            out,
        } => {
            let cfg = BenchConfig {
                workers: positive(workers)?,
                repetitions: reps,
                warmups,
                seed,
                vm: VmConfig { step_work },
            };
            let rows = harness::sweep(sweep, benchmark, &cfg, &out)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
