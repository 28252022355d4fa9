// SPDX-License-Identifier: Apache-2.0

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Barrier;
use std::time::Duration;

use proptest::prelude::*;

use super::*;
use crate::storage::MapKey;

const GAS: u64 = 1_000;

fn key(name: &'static str) -> StorageKey {
    StorageKey::scalar("t", name)
}

fn store() -> SpeculativeStore {
    SpeculativeStore::new(VmConfig::default())
}

#[test]
fn unbound_reads_absent() {
    let s = store();
    let mut h = s.begin_action(0, GAS);
    assert_eq!(h.read(&key("k")).unwrap(), Value::Absent);
    assert_eq!(h.commit().unwrap().counters.len(), 1);
}

#[test]
fn independent_top_level_handles() {
    let s = store();
    let mut a = s.begin_action(0, GAS);
    let mut b = s.begin_action(1, GAS);
    assert_ne!(a.id(), b.id());
    a.write(&key("a"), Value::Int(1)).unwrap();
    b.write(&key("b"), Value::Int(2)).unwrap();
    a.commit().unwrap();
    b.commit().unwrap();
    assert_eq!(s.peek(&key("a")), Value::Int(1));
    assert_eq!(s.peek(&key("b")), Value::Int(2));
}

#[test]
fn child_sees_parent_uncommitted_writes() {
    let s = store();
    let mut h = s.begin_action(0, GAS);
    h.write(&key("k"), Value::Int(7)).unwrap();
    let parent = h.id();
    let child = h.begin_nested(parent).unwrap();
    assert_eq!(h.parent(), Some(parent));
    assert_eq!(h.read(&key("k")).unwrap(), Value::Int(7));
    h.commit_nested(child).unwrap();
    h.commit().unwrap();
}

#[test]
fn usage_errors() {
    let s = store();
    let mut h = s.begin_action(0, GAS);
    let root = h.id();
    let child = h.begin_nested(root).unwrap();
    // root is live but not innermost
    assert_eq!(h.begin_nested(root), Err(UsageError::ParentNotLive(root)));
    assert_eq!(h.commit(), Err(UsageError::LiveChildren));
    assert_eq!(h.commit_nested(root), Err(UsageError::NotInnermost(root)));
    h.commit_nested(child).unwrap();
    assert_eq!(h.commit_nested(root), Err(UsageError::NotNested));
    h.commit().unwrap();
    assert_eq!(h.commit(), Err(UsageError::Finished));
    assert_eq!(h.begin_nested(root), Err(UsageError::ParentNotLive(root)));
}

#[test]
fn abort_restores_prior_value() {
    let mut state = State::new();
    state.set(key("k"), Value::Int(1));
    let s = SpeculativeStore::from_state(&state, VmConfig::default());
    let mut h = s.begin_action(0, GAS);
    h.write(&key("k"), Value::Int(2)).unwrap();
    h.write(&key("k"), Value::Int(3)).unwrap();
    h.abort();
    assert_eq!(s.snapshot(), state);
    let mut later = s.begin_action(1, GAS);
    assert_eq!(later.read(&key("k")).unwrap(), Value::Int(1));
    later.commit().unwrap();
}

#[test]
fn abort_with_empty_log_changes_nothing() {
    let mut state = State::new();
    state.set(key("k"), Value::Int(1));
    let s = SpeculativeStore::from_state(&state, VmConfig::default());
    let mut h = s.begin_action(0, GAS);
    h.read(&key("k")).unwrap();
    assert_eq!(h.log_len(), 0);
    h.abort();
    assert_eq!(s.snapshot(), state);
    assert_eq!(s.holder(&key("k")), None);
    assert_eq!(s.use_counter(&key("k")), 0);
}

#[test]
fn first_committer_takes_counter_one() {
    let s = store();
    let mut h = s.begin_action(0, GAS);
    h.write(&key("k1"), Value::Int(1)).unwrap();
    h.read(&key("k2")).unwrap();
    let p = h.commit().unwrap();
    assert_eq!(p.tx_id, 0);
    assert_eq!(p.counters, BTreeMap::from([(key("k1"), 1), (key("k2"), 1)]));

    let mut h = s.begin_action(1, GAS);
    h.read(&key("k1")).unwrap();
    h.read(&key("k1")).unwrap();
    let p = h.commit().unwrap();
    // one increment per commit, however many operations used the lock
    assert_eq!(p.counters, BTreeMap::from([(key("k1"), 2)]));
}

#[test]
fn empty_commit_has_empty_profile() {
    let s = store();
    let mut h = s.begin_action(3, GAS);
    assert!(h.commit().unwrap().counters.is_empty());
}

#[test]
fn nested_commit_passes_locks_and_log_to_parent() {
    let s = store();
    let mut h = s.begin_action(0, GAS);
    h.write(&key("p"), Value::Int(1)).unwrap();
    let child = h.begin_nested(h.id()).unwrap();
    h.write(&key("c"), Value::Int(2)).unwrap();
    h.commit_nested(child).unwrap();
    assert_eq!(h.depth(), 1);
    assert_eq!(h.held_locks(), vec![key("p"), key("c")]);
    assert_eq!(h.log_len(), 2);
    let p = h.commit().unwrap();
    assert!(p.counters.contains_key(&key("c")));
}

#[test]
fn aborted_child_is_undone_parent_commits() {
    let mut state = State::new();
    state.set(key("k"), Value::Int(5));
    let s = SpeculativeStore::from_state(&state, VmConfig::default());
    let mut h = s.begin_action(0, GAS);
    h.write(&key("p"), Value::Int(1)).unwrap();
    let child = h.begin_nested(h.id()).unwrap();
    h.write(&key("k"), Value::Int(9)).unwrap();
    h.abort_nested(child).unwrap();
    let p = h.commit().unwrap();
    assert_eq!(s.peek(&key("k")), Value::Int(5));
    assert_eq!(s.peek(&key("p")), Value::Int(1));
    // the child's lock was released, not passed up
    assert!(!p.counters.contains_key(&key("k")));
    assert_eq!(s.use_counter(&key("k")), 0);
}

#[test]
fn reverted_child_is_undone_but_keeps_locks() {
    let s = store();
    let mut h = s.begin_action(0, GAS);
    let child = h.begin_nested(h.id()).unwrap();
    h.write(&key("k"), Value::Int(9)).unwrap();
    h.revert_nested(child).unwrap();
    assert_eq!(h.log_len(), 0);
    let p = h.commit().unwrap();
    assert_eq!(s.peek(&key("k")), Value::Absent);
    assert_eq!(p.counters.get(&key("k")), Some(&1));
}

#[test]
fn nested_merge_then_parent_abort_or_commit() {
    for parent_commits in [false, true] {
        let s = store();
        let mut h = s.begin_action(0, GAS);
        let child = h.begin_nested(h.id()).unwrap();
        h.write(&key("k"), Value::Int(4)).unwrap();
        h.commit_nested(child).unwrap();
        if parent_commits {
            h.commit().unwrap();
            assert_eq!(s.peek(&key("k")), Value::Int(4));
        } else {
            h.abort();
            assert_eq!(s.snapshot(), State::new());
        }
    }
}

#[test]
fn top_level_revert_undoes_and_counts() {
    let s = store();
    let mut h = s.begin_action(0, GAS);
    h.write(&key("a"), Value::Int(1)).unwrap();
    let child = h.begin_nested(h.id()).unwrap();
    h.write(&key("b"), Value::Int(2)).unwrap();
    let _ = child;
    // a live child is folded into the revert
    let p = h.revert().unwrap();
    assert_eq!(s.snapshot(), State::new());
    assert_eq!(p.counters.len(), 2);
}

#[test]
fn aborts_never_bump_counters() {
    let s = store();
    for tx in 0..5 {
        let mut h = s.begin_action(tx, GAS);
        h.write(&key("k"), Value::Int(tx as u64)).unwrap();
        h.abort();
    }
    assert_eq!(s.use_counter(&key("k")), 0);
    let mut h = s.begin_action(9, GAS);
    h.read(&key("k")).unwrap();
    assert_eq!(h.commit().unwrap().counters[&key("k")], 1);
}

#[test]
fn out_of_gas_is_signalled_before_locking() {
    let s = store();
    let mut h = s.begin_action(0, 1);
    h.read(&key("a")).unwrap();
    assert_eq!(h.read(&key("b")), Err(Abort::OutOfGas));
    assert_eq!(h.held_locks(), vec![key("a")]);
    h.revert().unwrap();
}

#[test]
fn conflicting_writer_blocks_until_release() {
    let s = store();
    let released = AtomicBool::new(false);
    let mut h1 = s.begin_action(0, GAS);
    h1.write(&key("k"), Value::Int(1)).unwrap();
    std::thread::scope(|scope| {
        let waiter = scope.spawn(|| {
            let mut h2 = s.begin_action(1, GAS);
            h2.write(&key("k"), Value::Int(2)).unwrap();
            // must only get here after h1 released
            assert!(released.load(Ordering::SeqCst));
            h2.commit().unwrap()
        });
        std::thread::sleep(Duration::from_millis(50));
        released.store(true, Ordering::SeqCst);
        let p1 = h1.commit().unwrap();
        let p2 = waiter.join().unwrap();
        assert_eq!(p1.counters[&key("k")], 1);
        assert_eq!(p2.counters[&key("k")], 2);
    });
    assert_eq!(s.peek(&key("k")), Value::Int(2));
}

#[test]
fn deadlock_aborts_largest_tx() {
    for _ in 0..20 {
        let s = store();
        let barrier = Barrier::new(2);
        let (r2, r5) = std::thread::scope(|scope| {
            let run = |tx: TxId, first: &'static str, second: &'static str| {
                let s = &s;
                let barrier = &barrier;
                move || {
                    let mut h = s.begin_action(tx, GAS);
                    h.write(&key(first), Value::Int(tx as u64)).unwrap();
                    barrier.wait();
                    let r = h.write(&key(second), Value::Int(tx as u64));
                    match r {
                        Ok(()) => h.commit().map(|_| ()).map_err(|_| Abort::Revert("usage")),
                        Err(e) => {
                            h.abort();
                            Err(e)
                        }
                    }
                }
            };
            let t2 = scope.spawn(run(2, "a", "b"));
            let t5 = scope.spawn(run(5, "b", "a"));
            (t2.join().unwrap(), t5.join().unwrap())
        });
        assert_eq!(r2, Ok(()));
        assert_eq!(r5, Err(Abort::Deadlock));
        assert_eq!(s.peek(&key("a")), Value::Int(2));
        assert_eq!(s.peek(&key("b")), Value::Int(2));
    }
}

#[test]
fn reset_zeroes_counters() {
    let s = store();
    s.reset_block_counters();
    let mut h = s.begin_action(0, GAS);
    h.read(&key("k")).unwrap();
    h.commit().unwrap();
    assert_eq!(s.use_counter(&key("k")), 1);
    s.reset_block_counters();
    assert_eq!(s.use_counter(&key("k")), 0);
}

#[test]
fn event_log_is_two_phase_under_contention() {
    let s = store().with_event_log();
    std::thread::scope(|scope| {
        for t in 0..4usize {
            let s = &s;
            scope.spawn(move || {
                for i in 0..50usize {
                    let tx = t * 100 + i;
                    loop {
                        let mut h = s.begin_action(tx, GAS);
                        let r = (|| -> Exec<()> {
                            let k1 = key(["x", "y", "z"][i % 3]);
                            let k2 = key(["y", "z", "x"][(i + t) % 3]);
                            let v = h.read(&k1)?.as_int().unwrap_or(0);
                            h.write(&k2, Value::Int(v + 1))?;
                            Ok(())
                        })();
                        match r {
                            Ok(()) => {
                                h.commit().unwrap();
                                break;
                            }
                            Err(Abort::Deadlock) => h.abort(),
                            Err(e) => panic!("{e}"),
                        }
                    }
                }
            });
        }
    });
    let events = s.events().unwrap().snapshot();
    assert!(events
        .iter()
        .any(|e| matches!(e.kind, EventKind::Release(_))));
    assert_eq!(check_two_phase(&events), Ok(()));
    assert!(s.events().unwrap().export_text().lines().count() == events.len());
}

#[test]
fn two_phase_check_flags_early_release() {
    let k = key("k");
    let events = vec![
        Event {
            seq: 0,
            tx: 0,
            action: 1,
            kind: EventKind::Begin { parent: None },
        },
        Event {
            seq: 1,
            tx: 0,
            action: 1,
            kind: EventKind::Acquire(k.clone()),
        },
        Event {
            seq: 2,
            tx: 0,
            action: 1,
            kind: EventKind::Release(k),
        },
        Event {
            seq: 3,
            tx: 0,
            action: 1,
            kind: EventKind::Commit,
        },
    ];
    assert_eq!(check_two_phase(&events).unwrap_err().seq, 2);
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Read,
    Write(u64),
    Delete,
}

fn apply(h: &mut ActionHandle<'_>, k: &StorageKey, op: Op) -> Value {
    match op {
        Op::Read => h.read(k).unwrap(),
        Op::Write(v) => {
            h.write(k, Value::Int(v)).unwrap();
            Value::Absent
        }
        Op::Delete => {
            h.delete(k).unwrap();
            Value::Absent
        }
    }
}

#[test]
fn operations_on_distinct_keys_commute() {
    let ops = [Op::Read, Op::Write(1), Op::Write(2), Op::Delete];
    let inits = [None, Some(1u64), Some(2)];
    let k1 = StorageKey::entry("t", "m", MapKey::Int(1));
    let k2 = StorageKey::entry("t", "m", MapKey::Int(2));
    for i1 in inits {
        for i2 in inits {
            let mut initial = State::new();
            if let Some(v) = i1 {
                initial.set(k1.clone(), Value::Int(v));
            }
            if let Some(v) = i2 {
                initial.set(k2.clone(), Value::Int(v));
            }
            for o1 in ops {
                for o2 in ops {
                    let run = |first_k1: bool| {
                        let s = SpeculativeStore::from_state(&initial, VmConfig::default());
                        let mut h = s.begin_action(0, GAS);
                        let (r1, r2) = if first_k1 {
                            let r1 = apply(&mut h, &k1, o1);
                            (r1, apply(&mut h, &k2, o2))
                        } else {
                            let r2 = apply(&mut h, &k2, o2);
                            (apply(&mut h, &k1, o1), r2)
                        };
                        h.commit().unwrap();
                        (s.snapshot(), r1, r2)
                    };
                    assert_eq!(run(true), run(false), "{o1:?} {o2:?} from {i1:?},{i2:?}");
                }
            }
        }
    }
}

fn arb_op() -> impl Strategy<Value = (u8, Op)> {
    let op = prop_oneof![
        Just(Op::Read),
        (0u64..4).prop_map(Op::Write),
        Just(Op::Delete),
    ];
    (0u8..5, op)
}

fn arb_state() -> impl Strategy<Value = State> {
    proptest::collection::vec((0u8..5, 0u64..4), 0..5).prop_map(|cells| {
        cells
            .into_iter()
            .map(|(k, v)| {
                (
                    StorageKey::entry("t", "m", MapKey::Int(k as u64)),
                    Value::Int(v),
                )
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn abort_restores_digest(initial in arb_state(), ops in proptest::collection::vec(arb_op(), 0..24), nest_at in 0usize..24) {
        let s = SpeculativeStore::from_state(&initial, VmConfig::default());
        let before = initial.digest();
        let mut h = s.begin_action(0, GAS);
        for (i, (k, op)) in ops.iter().enumerate() {
            if i == nest_at {
                let parent = h.id();
                h.begin_nested(parent).unwrap();
            }
            apply(&mut h, &StorageKey::entry("t", "m", MapKey::Int(*k as u64)), *op);
        }
        h.abort();
        prop_assert_eq!(s.snapshot().digest(), before);
    }
}
