//! Oracles written from the definitions, sharing nothing with the library's
//! dense internals. They only read a schedule through its public accessors.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use vrobust_core::{ObjectId, OpId, Schedule, TxnId};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

/// Every permutation of `items`, in no particular order.
pub fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

/// Version observed by each read and the final version of each written
/// object when the transactions run one after another in `order`.
fn serial_view(s: &Schedule, order: &[TxnId]) -> (BTreeMap<OpId, OpId>, BTreeMap<ObjectId, OpId>) {
    let mut latest: BTreeMap<ObjectId, OpId> = BTreeMap::new();
    let mut reads = BTreeMap::new();
    for &t in order {
        let txn = s.transaction(t).expect("transaction in schedule");
        for op in txn.ops() {
            let Some(obj) = op.object() else { continue };
            if op.is_read() {
                reads.insert(op.id, latest.get(obj).copied().unwrap_or(OpId::Init));
            } else if op.is_write() {
                latest.insert(obj.clone(), op.id);
            }
        }
    }
    (reads, latest)
}

fn schedule_view(s: &Schedule) -> (BTreeMap<OpId, OpId>, BTreeMap<ObjectId, OpId>) {
    let reads = s.version_function();
    let last = s
        .version_orders()
        .into_iter()
        .filter_map(|(obj, chain)| {
            let tail = *chain.last()?;
            (!tail.is_init()).then_some((obj, tail))
        })
        .collect();
    (reads, last)
}

/// Brute-force view-serializability: some serial order reads the same versions
/// and leaves the same final versions.
pub fn view_serializable_oracle(s: &Schedule) -> Option<Vec<TxnId>> {
    let target = schedule_view(s);
    permutations(&s.txn_ids()).into_iter().find(|order| serial_view(s, order) == target)
}

fn vorder_pos(s: &Schedule, obj: &ObjectId, v: OpId) -> usize {
    s.version_order(obj).iter().position(|&x| x == v).expect("version in chain")
}

/// Transaction-level dependency edges, from the three dependency kinds.
pub fn dependency_edges(s: &Schedule) -> Vec<(TxnId, TxnId)> {
    let mut edges = Vec::new();
    let ops: Vec<_> = s.transactions().iter().flat_map(|t| t.ops().iter().cloned()).collect();
    for b in &ops {
        for a in &ops {
            let (Some(tb), Some(ta)) = (b.id.txn(), a.id.txn()) else { continue };
            if tb == ta {
                continue;
            }
            let (Some(ob), Some(oa)) = (b.object(), a.object()) else { continue };
            if ob != oa {
                continue;
            }
            let obj = ob;
            let edge = if a.is_write() && b.is_write() {
                // a installed before b
                vorder_pos(s, obj, a.id) < vorder_pos(s, obj, b.id)
            } else if a.is_write() && b.is_read() {
                // b observes a or something newer than a
                let seen = s.version_of(b.id).expect("read mapped");
                seen == a.id || vorder_pos(s, obj, a.id) < vorder_pos(s, obj, seen)
            } else if a.is_read() && b.is_write() {
                // a observes a version older than b
                let seen = s.version_of(a.id).expect("read mapped");
                vorder_pos(s, obj, seen) < vorder_pos(s, obj, b.id)
            } else {
                false
            };
            if edge {
                edges.push((ta, tb));
            }
        }
    }
    edges.sort();
    edges.dedup();
    edges
}

/// Conflict-serializability as "some serial order agrees with every dependency".
pub fn conflict_serializable_oracle(s: &Schedule) -> bool {
    let edges = dependency_edges(s);
    permutations(&s.txn_ids()).into_iter().any(|order| {
        let pos = |t: TxnId| order.iter().position(|&x| x == t).unwrap();
        edges.iter().all(|&(a, b)| pos(a) < pos(b))
    })
}
