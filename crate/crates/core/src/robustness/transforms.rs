//! Constructive steps between counterexamples: padding a schedule with the
//! missing transactions, cutting it down to a cycle, and the minimization
//! loop that ends in a generalized split schedule.

use std::collections::BTreeSet;

use super::split::{find_split_counterexample, is_generalized_split_schedule};
use super::{is_conflict_robust, SearchLimits, Workload};
use crate::error::{Error, Result};
use crate::isolation::{allowed_under_allocation, Allocation};
use crate::schedule::{Kind, Schedule, Transaction, TxnId, TxnSet, NONE};
use crate::serializability::{dense_graph, shortest_cycle};

/// Appends the transactions of `full` missing from `s` serially, in id order.
/// Appended writes become the newest versions; appended reads observe the
/// newest version at that point (or their own earlier write).
pub fn extend_with_serial_tail(s: &Schedule, full: &[Transaction]) -> Result<Schedule> {
    for t in s.transactions() {
        if !full.iter().any(|f| f == t) {
            return Err(Error::TransactionSetMismatch);
        }
    }
    let set = TxnSet::new(full.to_vec())?;
    let map = |d: u32| -> u32 {
        if d == NONE {
            NONE
        } else {
            set.dense(s.slot(d).id).expect("transaction carried over")
        }
    };
    let mut order: Vec<u32> = s.order.iter().map(|&d| map(d)).collect();
    let mut chains: Vec<Vec<u32>> = set
        .objects
        .iter()
        .map(|o| match s.set.object_index(o) {
            Some(i) => s.vorder[i as usize].iter().map(|&d| map(d)).collect(),
            None => vec![0],
        })
        .collect();
    let mut vf = vec![NONE; set.len()];
    for d in 0..s.set.len() as u32 {
        if s.vf[d as usize] != NONE {
            vf[map(d) as usize] = map(s.vf[d as usize]);
        }
    }
    for (k, t) in set.txns.iter().enumerate() {
        if s.set.slot_of(t.id()).is_some() {
            continue;
        }
        for d in set.ops_of(k) {
            let slot = set.slots[d as usize];
            match slot.kind {
                Kind::Write => chains[slot.obj as usize].push(d),
                Kind::Read => {
                    vf[d as usize] = if slot.own_prior_write != NONE {
                        slot.own_prior_write
                    } else {
                        *chains[slot.obj as usize].last().expect("chains start at init")
                    }
                }
                _ => {}
            }
            order.push(d);
        }
    }
    Ok(Schedule::from_dense(set, order, chains, vf))
}

/// Removes every transaction outside `cycle`. A kept read whose version came
/// from a removed transaction observes the nearest kept version below it in
/// the version order instead.
///
/// `cycle` must be the transaction set of a simple cycle of the serialization
/// graph of `s` passing through all of its members.
pub fn restrict_to_cycle(s: &Schedule, cycle: &[TxnId]) -> Result<Schedule> {
    let not_a_cycle = || Error::NotACycle(cycle.to_vec());
    let mut slots = Vec::new();
    for &id in cycle {
        slots.push(s.slot_or_err(id)? as usize);
    }
    slots.sort_unstable();
    slots.dedup();
    if slots.len() < 2 || slots.len() != cycle.len() || !has_spanning_cycle(&dense_graph(s), &slots) {
        return Err(not_a_cycle());
    }
    let kept: Vec<bool> = (0..s.set.txns.len()).map(|k| slots.binary_search(&k).is_ok()).collect();
    let keep = |d: u32| d == 0 || kept[s.txn_of(d) as usize];
    let set = TxnSet::new(slots.iter().map(|&k| s.set.txns[k].clone()).collect())?;
    let map = |d: u32| -> u32 { set.dense(s.slot(d).id).expect("kept operation") };

    let order = s.order.iter().copied().filter(|&d| keep(d)).map(map).collect();
    let chains = set
        .objects
        .iter()
        .map(|o| {
            let i = s.set.object_index(o).expect("kept object") as usize;
            s.vorder[i].iter().copied().filter(|&d| keep(d)).map(map).collect()
        })
        .collect();
    let mut vf = vec![NONE; set.len()];
    for d in 1..s.set.len() as u32 {
        let v = s.vf[d as usize];
        if !keep(d) || v == NONE {
            continue;
        }
        let version = if keep(v) {
            v
        } else {
            let chain = &s.vorder[s.slot(v).obj as usize];
            let at = s.vp(s.slot(v).obj, v) as usize;
            chain[..at].iter().rev().copied().find(|&w| keep(w)).unwrap_or(0)
        };
        vf[map(d) as usize] = map(version);
    }
    Ok(Schedule::from_dense(set, order, chains, vf))
}

/// Whether the graph restricted to `nodes` has a cycle visiting each exactly once.
fn has_spanning_cycle(adj: &[Vec<bool>], nodes: &[usize]) -> bool {
    fn walk(adj: &[Vec<bool>], nodes: &[usize], path: &mut Vec<usize>, used: &mut [bool]) -> bool {
        let last = *path.last().expect("starts non-empty");
        if path.len() == nodes.len() {
            return adj[last][path[0]];
        }
        for (i, &n) in nodes.iter().enumerate() {
            if !used[i] && adj[last][n] {
                used[i] = true;
                path.push(n);
                if walk(adj, nodes, path, used) {
                    return true;
                }
                path.pop();
                used[i] = false;
            }
        }
        false
    }
    let mut used = vec![false; nodes.len()];
    used[0] = true;
    walk(adj, nodes, &mut vec![nodes[0]], &mut used)
}

/// Shrinks a non-conflict-serializable schedule allowed under `a` to a
/// generalized split schedule over a subset of its transactions.
pub fn minimize_counterexample(s: &Schedule, a: &Allocation, limits: &SearchLimits) -> Result<Schedule> {
    let check_allowed = |s: &Schedule| -> Result<()> {
        let report = allowed_under_allocation(s, &a.restrict(&s.txn_ids()))?;
        if report.allowed {
            Ok(())
        } else {
            Err(Error::InvalidCounterexample(format!("schedule is not allowed: {:?}", report.clauses())))
        }
    };
    check_allowed(s)?;
    let mut current = s.clone();
    loop {
        if is_generalized_split_schedule(&current).holds {
            return Ok(current);
        }
        let adj = dense_graph(&current);
        let nodes: Vec<usize> = (0..current.set.txns.len()).collect();
        let Some(cycle) = shortest_cycle(&nodes, |a, b| adj[a][b]) else {
            return Err(Error::InvalidCounterexample("schedule is conflict-serializable".into()));
        };
        let ids: Vec<TxnId> = cycle.iter().map(|&k| current.set.txns[k].id()).collect();
        if ids.len() < nodes.len() {
            current = restrict_to_cycle(&current, &ids)?;
            check_allowed(&current)?;
            continue;
        }
        // The cycle spans everything: look for a split-shaped schedule over the same transactions.
        let w = Workload::new(current.transactions().to_vec(), a.restrict(&ids));
        let ids: BTreeSet<TxnId> = ids.into_iter().collect();
        return match find_split_counterexample(&w, limits)? {
            Some(cx) if cx.subset.iter().all(|t| ids.contains(t)) => Ok(cx.schedule),
            _ => Err(Error::InvalidCounterexample("no split schedule over the cycle".into())),
        };
    }
}

/// Either the workload is conflict-robust or some generalized split schedule
/// is allowed. Predicate allocations are evaluated as admissibility.
pub fn check_condition_1(w: &Workload, limits: &SearchLimits) -> Result<bool> {
    if is_conflict_robust(w, limits)?.robust {
        return Ok(true);
    }
    Ok(find_split_counterexample(w, limits)?.is_some())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, txn};
    use crate::isolation::{IsolationLevel, NamedPredicate};
    use crate::schedule::{validate_schedule, OpId};

    #[test]
    fn extend_rebuilds_s2() {
        let s = extend_with_serial_tail(&fixtures::s3(), &fixtures::fig2_transactions()).unwrap();
        assert!(validate_schedule(&s).is_empty());
        assert_eq!(s, fixtures::s2());
        let same = extend_with_serial_tail(&fixtures::s3(), &fixtures::s3().transactions().to_vec()).unwrap();
        assert_eq!(same, fixtures::s3());
    }

    #[test]
    fn extend_lost_update_with_reader() {
        let lu = fixtures::lost_update();
        let mut full = lu.transactions().to_vec();
        full.push(txn(3, "R(q) C"));
        let s = extend_with_serial_tail(&lu, &full).unwrap();
        assert_eq!(s.version_of(OpId::new(TxnId(3), 1)), Some(OpId::Init));
        assert_eq!(s.order().len(), lu.order().len() + 2);
        assert!(extend_with_serial_tail(&lu, &[txn(1, "R(t) C")]).is_err());
    }

    #[test]
    fn restrict_examples() {
        assert_eq!(restrict_to_cycle(&fixtures::s2(), &[TxnId(1), TxnId(2)]).unwrap(), fixtures::s3());
        let r = restrict_to_cycle(&fixtures::s1(), &[TxnId(2), TxnId(4)]).unwrap();
        assert!(validate_schedule(&r).is_empty());
        assert_eq!(r.version_of(OpId::new(TxnId(4), 3)), Some(OpId::Init));
        assert!(matches!(restrict_to_cycle(&fixtures::s1(), &[TxnId(1), TxnId(3)]), Err(Error::NotACycle(_))));
        let s3 = fixtures::s3();
        assert_eq!(restrict_to_cycle(&s3, &[TxnId(2), TxnId(1)]).unwrap(), s3);
    }

    #[test]
    fn minimize_s2() {
        let rc = Allocation::uniform([TxnId(1), TxnId(2), TxnId(3)], IsolationLevel::RC);
        let m = minimize_counterexample(&fixtures::s2(), &rc, &SearchLimits::default()).unwrap();
        assert_eq!(m.txn_ids(), vec![TxnId(1), TxnId(2)]);
        assert!(is_generalized_split_schedule(&m).holds);
        let lu = fixtures::lost_update();
        let rc2 = Allocation::uniform([TxnId(1), TxnId(2)], IsolationLevel::RC);
        assert_eq!(minimize_counterexample(&lu, &rc2, &SearchLimits::default()).unwrap(), lu);
    }

    #[test]
    fn condition_one() {
        let lim = SearchLimits::default();
        let w = fixtures::fig2_workload();
        assert!(check_condition_1(&w, &lim).unwrap());
        let vs = w.with_alloc(Allocation::Predicate(NamedPredicate::ViewSerializableOnly));
        assert!(!check_condition_1(&vs, &lim).unwrap());
    }
}
