// SPDX-License-Identifier: Apache-2.0

//! Benchmark driver: serial baseline, parallel miner and validator, with
//! warm-ups, repetitions, summary statistics and CSV output.
//!
//! Only execution is timed. Workload generation, state copies, digests and
//! the post-run equivalence checks happen outside the measured region.

use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::chain::{Block, GENESIS_DIGEST};
use crate::host::VmConfig;
use crate::miner::{execute_serial, mine_in_parallel, mine_on_store, reorder, run_serial};
use crate::speculative::SpeculativeStore;
use crate::validator::{Rejection, ReplayBase, Replayer, Verdict};
use crate::workload::{gen_workload, Benchmark, Workload, WorkloadError, WorkloadSpec};

pub const DEFAULT_WORKERS: usize = 3;
pub const DEFAULT_REPETITIONS: usize = 5;
pub const DEFAULT_WARMUPS: usize = 3;
pub const DEFAULT_SEED: u64 = 42;

/// Busy-work per VM step used for benchmarks, so a transaction costs tens
/// of microseconds as in an interpreted VM rather than a few hundred
/// nanoseconds of native code.
pub const BENCH_STEP_WORK: u32 = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Serial,
    Miner,
    Validator,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Serial, Mode::Miner, Mode::Validator];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchConfig {
    pub workers: usize,
    pub repetitions: usize,
    pub warmups: usize,
    pub seed: u64,
    pub vm: VmConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            workers: DEFAULT_WORKERS,
            repetitions: DEFAULT_REPETITIONS,
            warmups: DEFAULT_WARMUPS,
            seed: DEFAULT_SEED,
            vm: VmConfig {
                step_work: BENCH_STEP_WORK,
            },
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub benchmark: Benchmark,
    pub mode: Mode,
    pub block_size: usize,
    pub conflict_pct: u8,
    pub workers: usize,
    pub mean_ms: f64,
    pub stddev_ms: f64,
    pub speedup: f64,
}

pub const CSV_HEADER: &str =
    "benchmark,mode,block_size,conflict_pct,workers,mean_ms,stddev_ms,speedup";

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("at least one repetition is required")]
    NoRepetitions,
    #[error("validator rejected an honest block: {0}")]
    Rejected(Rejection),
    #[error("{mode:?} run diverged: {detail}")]
    Diverged { mode: Mode, detail: String },
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Mean and sample standard deviation (n - 1 denominator; 0 for one
/// sample).
pub fn mean_stddev(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Calls `run` `cfg.warmups` times, discarding the results, then
/// `cfg.repetitions` times, returning those samples. `run` returns its
/// measured time in milliseconds.
pub fn measure(
    cfg: &BenchConfig,
    mut run: impl FnMut() -> Result<f64, BenchError>,
) -> Result<Vec<f64>, BenchError> {
    for _ in 0..cfg.warmups {
        run()?;
    }
    (0..cfg.repetitions).map(|_| run()).collect()
}

fn diverged(mode: Mode, detail: String) -> BenchError {
    BenchError::Diverged { mode, detail }
}

/// Times `mode` on `workload`. `reference` is a block mined beforehand from
/// the same workload; serial runs follow its serial order and validator
/// runs replay it.
pub fn time_mode(
    mode: Mode,
    workload: &Workload,
    reference: &Block,
    cfg: &BenchConfig,
) -> Result<Vec<f64>, BenchError> {
    let pre = &workload.initial_state;
    match mode {
        Mode::Serial => {
            let ordered = reorder(&workload.txs, &reference.schedule.serial_order);
            measure(cfg, || {
                let mut state = pre.clone();
                let start = Instant::now();
                let statuses = run_serial(&mut state, &ordered, cfg.vm);
                let ms = elapsed_ms(start);
                let digest = state.digest();
                if digest != reference.post_state_digest {
                    return Err(diverged(mode, format!("digest {digest}")));
                }
                for (tx, status) in ordered.iter().zip(statuses) {
                    if reference.statuses[tx.tx_id] != status {
                        return Err(diverged(mode, format!("tx {} ended {status}", tx.tx_id)));
                    }
                }
                Ok(ms)
            })
        }
        Mode::Miner => measure(cfg, || {
            let store = SpeculativeStore::from_state(pre, cfg.vm);
            let start = Instant::now();
            let outcome = mine_on_store(&store, &workload.txs, cfg.workers);
            let ms = elapsed_ms(start);
            let mined = store.snapshot().digest();
            let ordered = reorder(&workload.txs, &outcome.schedule.serial_order);
            let serial = execute_serial(&ordered, pre, VmConfig::default());
            if serial.digest != mined {
                return Err(diverged(
                    mode,
                    "mined state is not serializable in S".into(),
                ));
            }
            Ok(ms)
        }),
        Mode::Validator => {
            let replayer = Replayer::new(reference).map_err(BenchError::Rejected)?;
            measure(cfg, || {
                let base = ReplayBase::from_state(pre);
                let start = Instant::now();
                let output = replayer.execute(base, cfg.workers, cfg.vm);
                let ms = elapsed_ms(start);
                match replayer.verify(output).verdict {
                    Verdict::Accept => Ok(ms),
                    Verdict::Reject(r) => Err(BenchError::Rejected(r)),
                }
            })
        }
    }
}

/// Measures all three modes on one workload point.
pub fn run_bench(spec: WorkloadSpec, cfg: &BenchConfig) -> Result<Vec<BenchResult>, BenchError> {
    if cfg.repetitions == 0 {
        return Err(BenchError::NoRepetitions);
    }
    let workload = gen_workload(spec)?;
    let reference = mine_in_parallel(
        &workload.initial_state,
        &workload.txs,
        cfg.workers,
        cfg.vm,
        GENESIS_DIGEST,
    )
    .block;

    let mut rows = Vec::with_capacity(Mode::ALL.len());
    let mut serial_mean = f64::NAN;
    for mode in Mode::ALL {
        let samples = time_mode(mode, &workload, &reference, cfg)?;
        let (mean_ms, stddev_ms) = mean_stddev(&samples);
        if mode == Mode::Serial {
            serial_mean = mean_ms;
        }
        rows.push(BenchResult {
            benchmark: spec.benchmark,
            mode,
            block_size: spec.block_size,
            conflict_pct: spec.conflict_pct,
            workers: if mode == Mode::Serial { 1 } else { cfg.workers },
            mean_ms,
            stddev_ms,
            speedup: if mode == Mode::Serial {
                1.0
            } else {
                serial_mean / mean_ms
            },
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Blocksize,
    Conflict,
}

impl SweepKind {
    /// (block_size, conflict_pct) grid.
    pub fn points(self) -> Vec<(usize, u8)> {
        match self {
            SweepKind::Blocksize => [10, 25, 50, 100, 200, 300, 400]
                .into_iter()
                .map(|b| (b, 15))
                .collect(),
            SweepKind::Conflict => (0..=100).step_by(10).map(|c| (200, c)).collect(),
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepKind::Blocksize => "blocksize",
            SweepKind::Conflict => "conflict",
        })
    }
}

impl FromStr for SweepKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "blocksize" => Ok(SweepKind::Blocksize),
            "conflict" => Ok(SweepKind::Conflict),
            other => Err(format!(
                "unknown sweep {other:?} (expected blocksize or conflict)"
            )),
        }
    }
}

/// Runs every grid point of `kind` for `benchmark`.
pub fn run_sweep(
    kind: SweepKind,
    benchmark: Benchmark,
    cfg: &BenchConfig,
) -> Result<Vec<BenchResult>, BenchError> {
    let mut rows = Vec::new();
    for (block_size, conflict_pct) in kind.points() {
        let spec = WorkloadSpec {
            benchmark,
            block_size,
            conflict_pct,
            seed: cfg.seed,
        };
        rows.extend(run_bench(spec, cfg)?);
    }
    Ok(rows)
}

/// Runs the sweep and writes it as CSV to `out`.
pub fn sweep(
    kind: SweepKind,
    benchmark: Benchmark,
    cfg: &BenchConfig,
    out: &Path,
) -> Result<Vec<BenchResult>, BenchError> {
    // Fail before spending minutes measuring.
    let file = std::fs::File::create(out)?;
    let rows = run_sweep(kind, benchmark, cfg)?;
    write_csv(&rows, file)?;
    Ok(rows)
}

pub fn write_csv(rows: &[BenchResult], out: impl io::Write) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
