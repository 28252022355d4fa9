// SPDX-License-Identifier: Apache-2.0

//! Fixtures shared by the criterion benchmarks.

use boostvm_core::{
    gen_workload, mine_in_parallel, Benchmark, Block, VmConfig, Workload, WorkloadSpec,
    GENESIS_DIGEST,
};

/// A workload and the honest block mined from it.
pub struct Fixture {
    pub workload: Workload,
    pub block: Block,
}

/// Seeded fixture; panics on an invalid spec since benchmark inputs are fixed.
pub fn fixture(
    benchmark: Benchmark,
    block_size: usize,
    conflict_pct: u8,
    workers: usize,
    vm: VmConfig,
) -> Fixture {
    let workload = gen_workload(WorkloadSpec {
        benchmark,
        block_size,
        conflict_pct,
        seed: boostvm_core::harness::DEFAULT_SEED,
    })
    .expect("benchmark spec is valid");
    let block = mine_in_parallel(
        &workload.initial_state,
        &workload.txs,
        workers,
        vm,
        GENESIS_DIGEST,
    )
    .block;
    Fixture { workload, block }
}
