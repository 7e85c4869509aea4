//! The schedules and workloads used as running examples, built by hand.
//!
//! `s1` through `s4` and `sd` are the worked example schedules; `w_lu` is the
//! lost-update pair and `w_ws` the write-skew pair. Workloads come with an
//! all-RC allocation; callers swap in whatever allocation they study.

use std::collections::BTreeMap;

use crate::isolation::{Allocation, IsolationLevel};
use crate::robustness::Workload;
use crate::schedule::{Action, ObjectId, OpId, Schedule, Transaction, TxnId};

/// Parses a compact action list such as `R(t) W(t) C`.
///
/// Panics on malformed input; meant for fixtures and tests.
pub fn txn(id: u32, actions: &str) -> Transaction {
    let parse = |tok: &str| -> Action {
        if tok == "C" {
            return Action::Commit;
        }
        let (kind, rest) = tok.split_at(1);
        let obj =
            rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')).unwrap_or_else(|| panic!("bad action `{tok}`"));
        match kind {
            "R" => Action::Read(ObjectId::new(obj)),
            "W" => Action::Write(ObjectId::new(obj)),
            _ => panic!("bad action `{tok}`"),
        }
    };
    Transaction::new(TxnId(id), actions.split_whitespace().map(parse))
}

fn op((t, i): (u32, u32)) -> OpId {
    if t == 0 {
        OpId::Init
    } else {
        OpId::new(TxnId(t), i)
    }
}

/// `(0, 0)` stands for the initial operation.
fn build(
    txns: Vec<Transaction>,
    order: &[(u32, u32)],
    vorder: &[(&str, &[(u32, u32)])],
    vf: &[((u32, u32), (u32, u32))],
) -> Schedule {
    let order = std::iter::once(OpId::Init).chain(order.iter().copied().map(op)).collect();
    let vorder = vorder
        .iter()
        .map(|(o, chain)| {
            let chain = std::iter::once(OpId::Init).chain(chain.iter().copied().map(op)).collect();
            (ObjectId::new(o), chain)
        })
        .collect();
    let vf: BTreeMap<OpId, OpId> = vf.iter().map(|&(r, w)| (op(r), op(w))).collect();
    Schedule::new(txns, order, vorder, vf).expect("fixture transactions are distinct")
}

pub fn s1_transactions() -> Vec<Transaction> {
    vec![txn(1, "R(t) C"), txn(2, "W(t) R(v) C"), txn(3, "W(v) C"), txn(4, "R(t) W(t) R(v) C")]
}

/// W2(t) R4(t) W3(v) C3 R1(t) C1 R2(v) C2 W4(t) R4(v) C4
pub fn s1() -> Schedule {
    build(
        s1_transactions(),
        &[(2, 1), (4, 1), (3, 1), (3, 2), (1, 1), (1, 2), (2, 2), (2, 3), (4, 2), (4, 3), (4, 4)],
        &[("t", &[(2, 1), (4, 2)]), ("v", &[(3, 1)])],
        &[((1, 1), (0, 0)), ((2, 2), (0, 0)), ((4, 1), (0, 0)), ((4, 3), (3, 1))],
    )
}

pub fn fig2_transactions() -> Vec<Transaction> {
    vec![txn(1, "W(v) R(t) W(t) C"), txn(2, "W(t) C"), txn(3, "W(t) W(v) C")]
}

/// W1(v) R1(t) W2(t) C2 W1(t) C1 W3(t) W3(v) C3
pub fn s2() -> Schedule {
    build(
        fig2_transactions(),
        &[(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (1, 4), (3, 1), (3, 2), (3, 3)],
        &[("t", &[(2, 1), (1, 3), (3, 1)]), ("v", &[(1, 1), (3, 2)])],
        &[((1, 2), (0, 0))],
    )
}

/// `s2` without T3.
pub fn s3() -> Schedule {
    build(
        fig2_transactions().into_iter().take(2).collect(),
        &[(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (1, 4)],
        &[("t", &[(2, 1), (1, 3)]), ("v", &[(1, 1)])],
        &[((1, 2), (0, 0))],
    )
}

/// W3(t) W3(v) C3 W1(v) R1(t) W2(t) C2 W1(t) C1
pub fn s4() -> Schedule {
    build(
        fig2_transactions(),
        &[(3, 1), (3, 2), (3, 3), (1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (1, 4)],
        &[("t", &[(3, 1), (2, 1), (1, 3)]), ("v", &[(3, 2), (1, 1)])],
        &[((1, 2), (3, 1))],
    )
}

/// R2(v) W3(v) C3 R1(t) C1 W2(t) C2: T1 -> T2 -> T3 is a dangerous structure.
pub fn sd() -> Schedule {
    build(
        vec![txn(1, "R(t) C"), txn(2, "R(v) W(t) C"), txn(3, "W(v) C")],
        &[(2, 1), (3, 1), (3, 2), (1, 1), (1, 2), (2, 2), (2, 3)],
        &[("t", &[(2, 2)]), ("v", &[(3, 1)])],
        &[((1, 1), (0, 0)), ((2, 1), (0, 0))],
    )
}

fn all_rc(txns: Vec<Transaction>) -> Workload {
    let alloc = Allocation::uniform(txns.iter().map(Transaction::id), IsolationLevel::RC);
    Workload::new(txns, alloc)
}

pub fn fig2_workload() -> Workload {
    all_rc(fig2_transactions())
}

pub fn w_lu() -> Workload {
    all_rc(vec![txn(1, "R(t) W(t) C"), txn(2, "R(t) W(t) C")])
}

pub fn w_ws() -> Workload {
    all_rc(vec![txn(1, "R(t) R(v) W(t) C"), txn(2, "R(t) R(v) W(v) C")])
}

/// R1(t) R2(t) W2(t) C2 W1(t) C1 over `w_lu`, both reads observing the initial version.
pub fn lost_update() -> Schedule {
    build(
        w_lu().txns,
        &[(1, 1), (2, 1), (2, 2), (2, 3), (1, 2), (1, 3)],
        &[("t", &[(2, 2), (1, 2)])],
        &[((1, 1), (0, 0)), ((2, 1), (0, 0))],
    )
}
