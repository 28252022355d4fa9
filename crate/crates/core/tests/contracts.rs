// SPDX-License-Identifier: Apache-2.0

//! Contract invariants over random call sequences.

use boostvm_core::contracts::{auction, ballot, etherdoc, relay};
use boostvm_core::host::execute_serial_tx;
use boostvm_core::{
    mine_in_parallel, Address, MsgContext, State, TxRequest, TxStatus, Value, VmConfig,
    GENESIS_DIGEST,
};
use proptest::prelude::*;

const POOL: u64 = 6;
const PROPOSALS: u64 = 3;
const HASHES: u8 = 4;

fn addr(i: u64) -> Address {
    Address::from_index(i)
}

fn hash(h: u8) -> Vec<u8> {
    vec![b'd', h]
}

#[derive(Debug, Clone)]
enum Call {
    Grant {
        sender: u64,
        voter: u64,
    },
    Vote {
        sender: u64,
        proposal: u64,
    },
    Delegate {
        sender: u64,
        to: u64,
    },
    Bid {
        sender: u64,
        amount: u64,
        value: u64,
    },
    BidPlusOne {
        sender: u64,
    },
    Withdraw {
        sender: u64,
    },
    Create {
        sender: u64,
        doc: u8,
    },
    Transfer {
        sender: u64,
        doc: u8,
        to: u64,
    },
    Exists {
        doc: u8,
    },
    Forward {
        sender: u64,
        doc: u8,
    },
}

fn call() -> impl Strategy<Value = Call> {
    let a = || 0..POOL;
    let d = || 0..HASHES;
    prop_oneof![
        (prop_oneof![Just(0), a()], a()).prop_map(|(sender, voter)| Call::Grant { sender, voter }),
        (a(), 0..=PROPOSALS).prop_map(|(sender, proposal)| Call::Vote { sender, proposal }),
        (a(), a()).prop_map(|(sender, to)| Call::Delegate { sender, to }),
        (a(), 1..20u64, prop::bool::weighted(0.9)).prop_map(|(sender, amount, honest)| Call::Bid {
            sender,
            amount,
            value: if honest { amount } else { amount + 1 },
        }),
        a().prop_map(|sender| Call::BidPlusOne { sender }),
        a().prop_map(|sender| Call::Withdraw { sender }),
        (a(), d()).prop_map(|(sender, doc)| Call::Create { sender, doc }),
        (a(), d(), a()).prop_map(|(sender, doc, to)| Call::Transfer { sender, doc, to }),
        d().prop_map(|doc| Call::Exists { doc }),
        (a(), d()).prop_map(|(sender, doc)| Call::Forward { sender, doc }),
    ]
}

fn gas() -> impl Strategy<Value = u64> {
    prop_oneof![6 => Just(boostvm_core::DEFAULT_GAS_LIMIT), 1 => 0..8u64]
}

impl Call {
    fn request(&self, tx_id: usize, gas_limit: u64) -> TxRequest {
        let msg = |s: u64| MsgContext::new(addr(s)).with_gas_limit(gas_limit);
        let (contract, function, args, msg) = match *self {
            Call::Grant { sender, voter } => (
                ballot::ID,
                "give_right_to_vote",
                vec![Value::Addr(addr(voter))],
                msg(sender),
            ),
            Call::Vote { sender, proposal } => {
                (ballot::ID, "vote", vec![Value::Int(proposal)], msg(sender))
            }
            Call::Delegate { sender, to } => (
                ballot::ID,
                "delegate",
                vec![Value::Addr(addr(to))],
                msg(sender),
            ),
            Call::Bid {
                sender,
                amount,
                value,
            } => (
                auction::ID,
                "bid",
                vec![Value::Int(amount)],
                msg(sender).with_value(value),
            ),
            Call::BidPlusOne { sender } => (auction::ID, "bid_plus_one", vec![], msg(sender)),
            Call::Withdraw { sender } => (auction::ID, "withdraw", vec![], msg(sender)),
            Call::Create { sender, doc } => (
                etherdoc::ID,
                "create",
                vec![Value::Bytes(hash(doc))],
                msg(sender),
            ),
            Call::Transfer { sender, doc, to } => (
                etherdoc::ID,
                "transfer",
                vec![Value::Bytes(hash(doc)), Value::Addr(addr(to))],
                msg(sender),
            ),
            Call::Exists { doc } => (
                etherdoc::ID,
                "exists",
                vec![Value::Bytes(hash(doc))],
                msg(1),
            ),
            Call::Forward { sender, doc } => (
                relay::ID,
                "forward",
                vec![Value::Bytes(hash(doc))],
                msg(sender),
            ),
        };
        TxRequest::new(tx_id, contract, function, args, msg)
    }
}

fn initial() -> State {
    let mut s = State::new();
    ballot::init(&mut s, addr(0), &[b"p0", b"p1", b"p2"]).unwrap();
    auction::init(&mut s, addr(99)).unwrap();
    etherdoc::init(&mut s, addr(0)).unwrap();
    s
}

fn int(s: &State, key: &boostvm_core::StorageKey) -> u64 {
    s.get(key).as_int().expect("integer cell")
}

/// Running totals the contracts must conserve.
#[derive(Default)]
struct Ledger {
    /// Net weight introduced by grants (the chair starts with 1).
    injected: i64,
    accepted_bids: u64,
}

impl Ledger {
    /// Records a committed call; `pre` is the state the call started from.
    fn record(&mut self, pre: &State, post: &State, c: &Call) {
        match *c {
            // The grant assigns weight 1, overwriting any delegated weight.
            Call::Grant { voter, .. } => {
                self.injected += 1 - int(pre, &ballot::weight(addr(voter))) as i64
            }
            Call::Bid { amount, .. } => self.accepted_bids += amount,
            Call::BidPlusOne { .. } => self.accepted_bids += int(post, &auction::highest_bid()),
            _ => {}
        }
    }
}

fn check_invariants(s: &State, ledger: &Ledger) -> Result<(), TestCaseError> {
    let votes: u64 = (0..PROPOSALS).map(|p| int(s, &ballot::vote_count(p))).sum();
    let unvoted: u64 = (0..POOL)
        .filter(|&v| !s.get(&ballot::voted(addr(v))).as_bool().unwrap())
        .map(|v| int(s, &ballot::weight(addr(v))))
        .sum();
    prop_assert_eq!(
        (votes + unvoted) as i64,
        ledger.injected,
        "ballot weight is not conserved"
    );

    let bidders = (0..POOL).chain([99]);
    let held: u64 = bidders
        .map(|b| int(s, &auction::pending_returns(addr(b))) + int(s, &auction::withdrawn(addr(b))))
        .sum();
    prop_assert_eq!(
        int(s, &auction::highest_bid()) + held,
        ledger.accepted_bids,
        "auction funds are not conserved"
    );

    let creator = addr(0);
    let owned = (0..HASHES)
        .filter(|&h| s.get(&etherdoc::doc_owner(&hash(h))).as_addr() == Some(Some(creator)))
        .count() as u64;
    prop_assert_eq!(
        owned,
        int(s, &etherdoc::owned_count(creator)),
        "creator's document count drifted"
    );
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn serial_sequences_conserve_and_revert_atomically(calls in prop::collection::vec((call(), gas()), 1..40)) {
        let mut s = initial();
        let mut ledger = Ledger { injected: 1, ..Ledger::default() };
        for (i, (c, gas)) in calls.iter().enumerate() {
            let pre = s.clone();
            let status = execute_serial_tx(&mut s, &c.request(i, *gas), VmConfig::default());
            if status == TxStatus::Committed {
                ledger.record(&pre, &s, c);
            } else {
                prop_assert_eq!(s.digest(), pre.digest(), "{:?} {:?} left effects", c, status);
            }
            if *gas == 0 {
                prop_assert_eq!(status, TxStatus::OutOfGas, "a call with no gas ran");
            }
            check_invariants(&s, &ledger)?;
        }
    }

    #[test]
    fn single_tx_block_matches_serial_shim(prefix in prop::collection::vec(call(), 0..15), last in call(), gas in gas()) {
        let mut s = initial();
        for (i, c) in prefix.iter().enumerate() {
            execute_serial_tx(&mut s, &c.request(i, boostvm_core::DEFAULT_GAS_LIMIT), VmConfig::default());
        }
        let tx = last.request(0, gas);
        let mined = mine_in_parallel(&s, std::slice::from_ref(&tx), 1, VmConfig::default(), GENESIS_DIGEST);
        let mut serial = s.clone();
        let status = execute_serial_tx(&mut serial, &tx, VmConfig::default());
        prop_assert_eq!(mined.block.statuses[0], status);
        prop_assert_eq!(mined.post_state.digest(), serial.digest());
        prop_assert_eq!(&mined.block.post_state_digest, &serial.digest());
    }
}
