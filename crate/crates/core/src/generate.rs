//! Workload families used by the property sweeps: a fixed hand-picked list,
//! seeded random workloads, and the exhaustive small corpus.

use rand::Rng;

use crate::fixtures::txn;
use crate::isolation::{Allocation, IsolationLevel};
use crate::robustness::Workload;
use crate::schedule::{Action, ObjectId, Transaction, TxnId};

const CURATED: &[(&str, &[&str])] = &[
    ("lost-update", &["R(t) W(t) C", "R(t) W(t) C"]),
    ("write-skew", &["R(t) R(v) W(t) C", "R(t) R(v) W(v) C"]),
    ("figure-2", &["W(v) R(t) W(t) C", "W(t) C", "W(t) W(v) C"]),
    ("figure-1", &["R(t) C", "W(t) R(v) C", "W(v) C", "R(t) W(t) R(v) C"]),
    ("dangerous-triple", &["R(t) C", "R(v) W(t) C", "W(v) C"]),
    ("read-skew", &["R(t) R(v) C", "W(t) W(v) C"]),
    ("read-skew-split", &["R(t) R(v) C", "W(t) C", "W(v) C"]),
    ("blind-writes", &["W(t) W(v) C", "W(v) W(t) C"]),
    ("blind-write-pair", &["W(t) C", "W(t) C"]),
    ("reader-writer", &["R(t) C", "W(t) C"]),
    ("two-readers", &["R(t) C", "R(t) C"]),
    ("read-then-blind", &["R(t) W(t) C", "W(t) C"]),
    ("increment-and-read", &["R(t) W(t) C", "R(t) C"]),
    ("fractured-read", &["R(t) R(v) C", "W(t) W(v) C", "R(v) R(t) C"]),
    ("cross-update", &["R(t) W(v) C", "R(v) W(t) C"]),
    ("cross-update-blind", &["R(t) W(v) C", "W(t) C"]),
    ("three-lost-updates", &["R(t) W(t) C", "R(t) W(t) C", "R(t) W(t) C"]),
    ("ring-of-three", &["R(t) W(v) C", "R(v) W(q) C", "R(q) W(t) C"]),
    ("read-only-anomaly", &["R(t) R(v) C", "R(v) W(v) C", "R(t) R(v) W(t) C"]),
    ("batch-report", &["R(t) W(t) C", "R(t) R(v) C", "R(t) W(v) C"]),
    ("disjoint", &["R(t) W(t) C", "R(v) W(v) C"]),
    ("disjoint-three", &["W(t) C", "W(v) C", "W(q) C"]),
    ("write-then-read-own", &["W(t) R(t) C", "W(t) C"]),
    ("own-read-skew", &["W(t) R(t) R(v) C", "R(v) W(v) C"]),
    ("double-write", &["W(t) W(t) C", "R(t) C"]),
    ("double-write-pair", &["W(t) W(t) C", "W(t) C"]),
    ("double-read", &["R(t) R(t) C", "W(t) C"]),
    ("double-read-update", &["R(t) R(t) W(t) C", "R(t) W(t) C"]),
    ("write-read-swap", &["W(t) R(v) C", "W(v) R(t) C"]),
    ("write-read-swap-3", &["W(t) R(v) C", "W(v) R(q) C", "W(q) R(t) C"]),
    ("transfer", &["R(t) R(v) W(t) W(v) C", "R(t) R(v) W(t) W(v) C"]),
    ("transfer-and-audit", &["R(t) R(v) W(t) W(v) C", "R(t) R(v) C"]),
    ("deposit-and-audit", &["R(t) W(t) C", "R(t) R(v) C", "R(v) W(v) C"]),
    ("chain-of-writers", &["W(t) C", "R(t) W(v) C", "R(v) C"]),
    ("chain-of-updates", &["R(t) W(t) C", "R(t) W(v) C", "R(v) W(v) C"]),
    ("empty-commit", &["C", "R(t) W(t) C"]),
    ("singleton", &["R(t) W(t) C"]),
    ("singleton-reader", &["R(t) C"]),
    ("inventory", &["R(t) W(t) C", "R(t) W(t) C", "R(t) C"]),
    ("two-accounts", &["R(t) R(v) W(t) C", "R(t) R(v) W(v) C", "R(t) R(v) C"]),
    ("booking", &["R(t) W(v) C", "R(t) W(t) C"]),
    ("late-reader", &["W(t) W(v) C", "R(v) C", "R(t) C"]),
    ("interleaved-writers", &["W(t) W(v) C", "W(t) C", "W(v) C"]),
    ("overwrite-chain", &["R(t) W(t) C", "W(t) W(v) C", "R(v) C"]),
    ("split-reads", &["R(t) C", "R(v) C", "W(t) W(v) C"]),
    ("mixed-four", &["R(t) W(t) C", "R(v) W(v) C", "R(t) R(v) C", "W(t) C"]),
    ("four-blind", &["W(t) C", "W(t) C", "W(v) C", "W(v) C"]),
    ("four-ring", &["R(t) W(v) C", "R(v) W(q) C", "R(q) W(s) C", "R(s) W(t) C"]),
    ("read-write-read", &["R(t) W(t) R(t) C", "W(t) C"]),
    ("update-both", &["R(t) W(t) R(v) W(v) C", "R(v) W(t) C"]),
    ("reader-of-two", &["R(t) R(v) C", "R(t) W(t) C", "R(v) W(v) C"]),
    ("skew-three", &["R(t) R(v) W(t) C", "R(v) R(q) W(v) C", "R(q) R(t) W(q) C"]),
];

fn workload(bodies: &[&str], level: IsolationLevel) -> Workload {
    let txns: Vec<Transaction> = bodies.iter().enumerate().map(|(i, b)| txn(i as u32 + 1, b)).collect();
    let alloc = Allocation::uniform(txns.iter().map(Transaction::id), level);
    Workload::new(txns, alloc)
}

/// The fixed workload family with their names, each under all-RC.
pub fn curated_workloads() -> Vec<(&'static str, Workload)> {
    CURATED.iter().map(|(name, bodies)| (*name, workload(bodies, IsolationLevel::RC))).collect()
}

/// Every per-transaction level map over `w`, in lexicographic order of levels.
pub fn all_level_maps(w: &Workload) -> Vec<Allocation> {
    let ids = w.ids();
    let mut out = Vec::new();
    let total = 3usize.pow(ids.len() as u32);
    for mut code in 0..total {
        let mut levels = Vec::with_capacity(ids.len());
        for _ in &ids {
            levels.push(IsolationLevel::ALL[code % 3]);
            code /= 3;
        }
        levels.reverse();
        out.push(Allocation::levels(ids.iter().copied().zip(levels)));
    }
    out
}

/// A random workload of 1 to `max_txns` transactions, each with 1 to
/// `max_ops` reads and writes over `objects`, under a random level map.
pub fn random_workload(rng: &mut impl Rng, max_txns: usize, objects: &[&str], max_ops: usize) -> Workload {
    let n = rng.gen_range(1..=max_txns);
    let txns: Vec<Transaction> = (0..n)
        .map(|i| {
            let len = rng.gen_range(1..=max_ops);
            let mut actions: Vec<Action> = (0..len)
                .map(|_| {
                    let obj = ObjectId::new(objects[rng.gen_range(0..objects.len())]);
                    if rng.gen_bool(0.5) {
                        Action::Read(obj)
                    } else {
                        Action::Write(obj)
                    }
                })
                .collect();
            actions.push(Action::Commit);
            Transaction::new(TxnId(i as u32 + 1), actions)
        })
        .collect();
    let alloc = Allocation::levels(txns.iter().map(|t| (t.id(), IsolationLevel::ALL[rng.gen_range(0..3)])));
    Workload::new(txns, alloc)
}

/// Every transaction body with at most `max_ops` reads and writes over `objects`.
fn bodies(objects: &[&str], max_ops: usize) -> Vec<Vec<Action>> {
    let mut atoms = Vec::new();
    for o in objects {
        atoms.push(Action::Read(ObjectId::new(o)));
        atoms.push(Action::Write(ObjectId::new(o)));
    }
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_ops {
        let next: Vec<Vec<Action>> = frontier
            .iter()
            .flat_map(|b: &Vec<Action>| {
                atoms.iter().map(move |a| {
                    let mut b = b.clone();
                    b.push(a.clone());
                    b
                })
            })
            .collect();
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Canonical key of a multiset of bodies up to renaming objects.
fn symmetry_key(set: &[Vec<Action>], objects: &[&str]) -> Vec<Vec<(u8, usize)>> {
    let index = |o: &ObjectId| objects.iter().position(|x| *x == o.as_str()).expect("known object");
    let mut perm: Vec<usize> = (0..objects.len()).collect();
    let mut best: Option<Vec<Vec<(u8, usize)>>> = None;
    loop {
        let mut key: Vec<Vec<(u8, usize)>> = set
            .iter()
            .map(|b| {
                b.iter()
                    .map(|a| match a {
                        Action::Read(o) => (0, perm[index(o)]),
                        Action::Write(o) => (1, perm[index(o)]),
                        Action::Commit => (2, 0),
                    })
                    .collect()
            })
            .collect();
        key.sort();
        if best.as_ref().is_none_or(|b| key < *b) {
            best = Some(key);
        }
        // Next permutation of object indices.
        let Some(i) = (1..perm.len()).rev().find(|&i| perm[i - 1] < perm[i]) else { break };
        let j = (i..perm.len()).rev().find(|&j| perm[j] > perm[i - 1]).expect("exists");
        perm.swap(i - 1, j);
        perm[i..].reverse();
    }
    best.unwrap_or_default()
}

/// Every multiset of 1 to `max_txns` transaction bodies with at most
/// `max_ops` reads and writes over `objects`, one representative per class
/// of object renamings. Transactions are numbered in body order.
pub fn corpus_transaction_sets(max_txns: usize, objects: &[&str], max_ops: usize) -> Vec<Vec<Transaction>> {
    let all = bodies(objects, max_ops);
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    let mut pick: Vec<usize> = Vec::new();
    fn walk(all: &[Vec<Action>], max: usize, start: usize, pick: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if !pick.is_empty() {
            f(pick);
        }
        if pick.len() == max {
            return;
        }
        for i in start..all.len() {
            pick.push(i);
            walk(all, max, i, pick, f);
            pick.pop();
        }
    }
    walk(&all, max_txns, 0, &mut pick, &mut |p| {
        let set: Vec<Vec<Action>> = p.iter().map(|&i| all[i].clone()).collect();
        if seen.insert(symmetry_key(&set, objects)) {
            out.push(
                set.into_iter()
                    .enumerate()
                    .map(|(i, mut b)| {
                        b.push(Action::Commit);
                        Transaction::new(TxnId(i as u32 + 1), b)
                    })
                    .collect(),
            );
        }
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curated_family() {
        let all = curated_workloads();
        assert!(all.len() >= 50);
        let names: std::collections::BTreeSet<_> = all.iter().map(|(n, _)| *n).collect();
        assert_eq!(names.len(), all.len());
        for (name, w) in &all {
            assert!(w.txn_set().is_ok(), "{name}");
        }
    }

    #[test]
    fn level_maps() {
        let (_, w) = &curated_workloads()[2];
        let maps = all_level_maps(w);
        assert_eq!(maps.len(), 27);
        assert_eq!(maps[0], Allocation::uniform(w.ids(), IsolationLevel::RC));
        assert_eq!(maps[26], Allocation::uniform(w.ids(), IsolationLevel::SSI));
    }

    #[test]
    fn corpus_sizes() {
        assert_eq!(bodies(&["t", "v"], 2).len(), 21);
        // One object, one op: bodies {C, R C, W C}; multisets of size 1..=2: 3 + 6.
        assert_eq!(corpus_transaction_sets(2, &["t"], 1).len(), 9);
        // Renaming t and v identifies R(t) with R(v).
        let single: Vec<_> = corpus_transaction_sets(1, &["t", "v"], 1);
        assert_eq!(single.len(), 3);
    }
}
