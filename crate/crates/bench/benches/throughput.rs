// SPDX-License-Identifier: Apache-2.0

use boostvm_bench::fixture;
use boostvm_core::harness::{BENCH_STEP_WORK, DEFAULT_WORKERS};
use boostvm_core::miner::{execute_serial, mine_on_store, reorder};
use boostvm_core::validator::{ReplayBase, Replayer};
use boostvm_core::{Benchmark, SpeculativeStore, VmConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

const VM: VmConfig = VmConfig {
    step_work: BENCH_STEP_WORK,
};

fn modes(c: &mut Criterion) {
    for benchmark in Benchmark::STANDARD {
        let mut group = c.benchmark_group(benchmark.name());
        group.sample_size(20);
        for conflict in [0u8, 15, 50, 100] {
            let f = fixture(benchmark, 200, conflict, DEFAULT_WORKERS, VM);
            let txs = &f.workload.txs;
            let pre = &f.workload.initial_state;
            group.throughput(Throughput::Elements(txs.len() as u64));

            let ordered = reorder(txs, &f.block.schedule.serial_order);
            group.bench_with_input(
                BenchmarkId::new("serial", conflict),
                &ordered,
                |b, ordered| b.iter(|| execute_serial(ordered, pre, VM)),
            );
            group.bench_with_input(BenchmarkId::new("miner", conflict), txs, |b, txs| {
                b.iter_batched(
                    || SpeculativeStore::from_state(pre, VM),
                    |store| mine_on_store(&store, txs, DEFAULT_WORKERS),
                    criterion::BatchSize::LargeInput,
                )
            });
            let replayer = Replayer::new(&f.block).expect("honest block");
            group.bench_with_input(
                BenchmarkId::new("validator", conflict),
                &replayer,
                |b, replayer| {
                    b.iter_batched(
                        || ReplayBase::from_state(pre),
                        |base| replayer.execute(base, DEFAULT_WORKERS, VM),
                        criterion::BatchSize::LargeInput,
                    )
                },
            );
        }
        group.finish();
    }
}

criterion_group!(benches, modes);
criterion_main!(benches);
