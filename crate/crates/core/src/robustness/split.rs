//! Split-shaped schedules: recognizers and the counterexample search.

use serde::Serialize;

use super::enumerate::{version_function_choices, version_order_choices};
use super::{subsets, Budget, Counterexample, SearchLimits, Workload};
use crate::error::Result;
use crate::isolation::{admissible_dense, commit_order_ok, forced_completion_dense, Allocation};
use crate::schedule::{Kind, OpId, Schedule, TxnId, TxnSet, NONE};
use crate::serializability::{dense_graph, view_search};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitClause {
    /// The order is not a prefix of one transaction, whole transactions, then its rest.
    Form,
    /// Some consecutive pair (or last to first) lacks a dependency.
    ConsecutiveCycle,
    /// A dependency connects non-consecutive transactions.
    MinimalCycle,
    /// Some write is installed against commit order.
    CommitOrder,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SplitCheck {
    pub holds: bool,
    pub failing: Option<SplitClause>,
    /// Transactions in layout order, the split one first. Empty when the form fails.
    pub labeling: Vec<TxnId>,
    /// Last operation of the split transaction before the others run.
    pub split_after: Option<OpId>,
}

/// Order shape `pref(T1) · B1 · … · Bm · post(T1) · A1 · …` in slots.
struct Layout {
    t1: u32,
    b1: u32,
    before: Vec<u32>,
    after: Vec<u32>,
}

fn layout(s: &Schedule) -> Option<Layout> {
    let set = &*s.set;
    let ops = &s.order[1..];
    let t1 = s.txn_of(*ops.first()?);
    let prefix = ops.iter().take_while(|&&d| s.txn_of(d) == t1).count();
    let b1 = ops[prefix - 1];
    let t1_len = set.txns[t1 as usize].len();
    let mut seen = vec![false; set.txns.len()];
    seen[t1 as usize] = true;
    let (mut before, mut after) = (Vec::new(), Vec::new());
    let mut post_done = prefix == t1_len;
    let mut i = prefix;
    while i < ops.len() {
        let k = s.txn_of(ops[i]);
        let run = ops[i..].iter().take_while(|&&d| s.txn_of(d) == k).count();
        if k == t1 {
            if post_done || run != t1_len - prefix {
                return None;
            }
            post_done = true;
        } else {
            if seen[k as usize] || run != set.txns[k as usize].len() {
                return None;
            }
            seen[k as usize] = true;
            if post_done && prefix != t1_len {
                after.push(k)
            } else {
                before.push(k)
            }
        }
        i += run;
    }
    Some(Layout { t1, b1, before, after })
}

pub fn is_generalized_split_schedule(s: &Schedule) -> SplitCheck {
    let fail =
        |clause, labeling, split_after| SplitCheck { holds: false, failing: Some(clause), labeling, split_after };
    let layout = match layout(s) {
        Some(l) if l.after.is_empty() && s.set.txns.len() >= 2 => l,
        _ => return fail(SplitClause::Form, Vec::new(), None),
    };
    let mut lab = vec![layout.t1];
    lab.extend(&layout.before);
    let labeling: Vec<TxnId> = lab.iter().map(|&k| s.set.txns[k as usize].id()).collect();
    let split_after = Some(s.slot(layout.b1).id);
    let n = lab.len();
    let adj = dense_graph(s);
    if !(0..n).all(|i| adj[lab[i] as usize][lab[(i + 1) % n] as usize]) {
        return fail(SplitClause::ConsecutiveCycle, labeling, split_after);
    }
    let mut at = vec![0usize; n];
    for (i, &k) in lab.iter().enumerate() {
        at[k as usize] = i;
    }
    for a in 0..n {
        for b in 0..n {
            if adj[a][b] && at[b] != (at[a] + 1) % n {
                return fail(SplitClause::MinimalCycle, labeling, split_after);
            }
        }
    }
    let set = &*s.set;
    let writes_ok =
        (1..set.len() as u32).filter(|&d| set.slots[d as usize].kind == Kind::Write).all(|d| commit_order_ok(s, d));
    if !writes_ok {
        return fail(SplitClause::CommitOrder, labeling, split_after);
    }
    SplitCheck { holds: true, failing: None, labeling, split_after }
}

/// Whether the order is `pref(T1) · T2 … Tm · post(T1) · Tm+1 … Tn` with a
/// chain of dependencies T1 -> T2 -> … -> Tm -> T1. Returns the smallest
/// workable `m`.
pub fn is_multiversion_split_schedule(s: &Schedule) -> (bool, Option<usize>) {
    let Some(layout) = layout(s) else { return (false, None) };
    if s.set.txns.len() < 2 {
        return (false, None);
    }
    let mut lab = vec![layout.t1];
    lab.extend(&layout.before);
    let fixed_m = (!layout.after.is_empty() || s.set.txns[layout.t1 as usize].len() > prefix_len(s, &layout))
        .then_some(lab.len());
    lab.extend(&layout.after);
    let adj = dense_graph(s);
    let chain = |m: usize| {
        (0..m - 1).all(|i| adj[lab[i] as usize][lab[i + 1] as usize]) && adj[lab[m - 1] as usize][lab[0] as usize]
    };
    match fixed_m {
        Some(m) => (m >= 2 && chain(m), (m >= 2 && chain(m)).then_some(m)),
        None => match (2..=lab.len()).find(|&m| chain(m)) {
            Some(m) => (true, Some(m)),
            None => (false, None),
        },
    }
}

fn prefix_len(s: &Schedule, layout: &Layout) -> usize {
    (layout.b1 - s.set.offsets[layout.t1 as usize] + 1) as usize
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else { return false };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Every completion of `order` into a valid schedule.
fn all_completions(set: &std::sync::Arc<TxnSet>, order: &[u32]) -> Vec<Schedule> {
    let vorders = version_order_choices(set);
    let vfs = version_function_choices(set, order);
    let radix: Vec<usize> = vorders.iter().map(Vec::len).chain(vfs.iter().map(|(_, o)| o.len())).collect();
    let mut digits = vec![0usize; radix.len()];
    let mut out = Vec::new();
    loop {
        let chains = (0..vorders.len()).map(|o| vorders[o][digits[o]].clone()).collect();
        let mut vf = vec![NONE; set.len()];
        for (i, (r, opts)) in vfs.iter().enumerate() {
            vf[*r as usize] = opts[digits[vorders.len() + i]];
        }
        out.push(Schedule::from_dense(set.clone(), order.to_vec(), chains, vf));
        let mut i = 0;
        loop {
            if i == digits.len() {
                return out;
            }
            digits[i] += 1;
            if digits[i] < radix[i] {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
    }
}

pub(crate) fn search(w: &Workload, limits: &SearchLimits, budget: &mut Budget) -> Result<Option<Counterexample>> {
    limits.check_size(w)?;
    w.txn_set()?;
    for subset in subsets(&w.ids(), 2) {
        let sub = w.restrict(&subset);
        let set = sub.txn_set()?;
        let levels = sub.alloc.dense(&set)?;
        let snapshot: Vec<bool> =
            levels.iter().flat_map(|l| l.levels.iter().map(|l| l.reads_from_snapshot())).collect();
        let n = set.txns.len();
        let mut perm: Vec<usize> = (0..n).collect();
        loop {
            let t1 = perm[0];
            let t1_ops = set.ops_of(t1);
            for cut in t1_ops.clone() {
                budget.charge(1)?;
                let mut order = vec![0u32];
                order.extend(t1_ops.start..=cut);
                for &k in &perm[1..] {
                    order.extend(set.ops_of(k));
                }
                order.extend(cut + 1..t1_ops.end);
                let hit = match &levels {
                    Some(levels) => {
                        let s = forced_completion_dense(set.clone(), order, &snapshot);
                        (is_generalized_split_schedule(&s).holds && admissible_dense(&s, levels)).then_some(s)
                    }
                    None => {
                        let Allocation::Predicate(_) = sub.alloc else { unreachable!() };
                        let mut found = None;
                        for s in all_completions(&set, &order) {
                            budget.charge(1)?;
                            if is_generalized_split_schedule(&s).holds && view_search(&s).verdict {
                                found = Some(s);
                                break;
                            }
                        }
                        found
                    }
                };
                if let Some(schedule) = hit {
                    return Ok(Some(Counterexample { subset, schedule }));
                }
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
    }
    Ok(None)
}

/// Canonically first generalized split schedule over some subset of at least
/// two transactions that is allowed under the restricted allocation.
pub fn find_split_counterexample(w: &Workload, limits: &SearchLimits) -> Result<Option<Counterexample>> {
    let mut budget = Budget::new(*limits);
    search(w, limits, &mut budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::isolation::IsolationLevel::{self, *};
    use crate::schedule::serial_schedule;

    fn uniform(w: &Workload, level: IsolationLevel) -> Workload {
        w.with_alloc(Allocation::uniform(w.ids(), level))
    }

    #[test]
    fn lost_update_is_split() {
        let check = is_generalized_split_schedule(&fixtures::lost_update());
        assert!(check.holds, "{check:?}");
        assert_eq!(check.labeling, vec![TxnId(1), TxnId(2)]);
        assert_eq!(check.split_after, Some(OpId::new(TxnId(1), 1)));
        assert_eq!(is_multiversion_split_schedule(&fixtures::lost_update()), (true, Some(2)));
    }

    #[test]
    fn figure_schedules() {
        assert_eq!(is_generalized_split_schedule(&fixtures::s1()).failing, Some(SplitClause::Form));
        assert_eq!(is_generalized_split_schedule(&fixtures::s2()).failing, Some(SplitClause::Form));
        assert!(is_generalized_split_schedule(&fixtures::s3()).holds);
        assert_eq!(is_multiversion_split_schedule(&fixtures::s2()), (true, Some(2)));
        let serial = serial_schedule(&fixtures::fig2_transactions()).unwrap();
        assert_eq!(is_multiversion_split_schedule(&serial), (false, None));
        assert!(!is_generalized_split_schedule(&serial).holds);
    }

    #[test]
    fn search_examples() {
        let lim = SearchLimits::default();
        let hit = find_split_counterexample(&fixtures::w_lu(), &lim).unwrap().unwrap();
        assert_eq!(hit.subset, vec![TxnId(1), TxnId(2)]);
        assert!(is_generalized_split_schedule(&hit.schedule).holds);
        assert!(find_split_counterexample(&uniform(&fixtures::w_lu(), SI), &lim).unwrap().is_none());

        let hit = find_split_counterexample(&fixtures::fig2_workload(), &lim).unwrap().unwrap();
        assert_eq!(hit.subset, vec![TxnId(1), TxnId(2)]);
        let o = |t, i| OpId::new(TxnId(t), i);
        assert_eq!(hit.schedule.order(), vec![OpId::Init, o(1, 1), o(1, 2), o(2, 1), o(2, 2), o(1, 3), o(1, 4)]);
        assert_eq!(hit.schedule.version_of(o(1, 2)), Some(OpId::Init));
        assert_eq!(hit.schedule, fixtures::s3());
    }

    #[test]
    fn permutations_in_order() {
        let mut p = vec![0, 1, 2];
        let mut all = vec![p.clone()];
        while next_permutation(&mut p) {
            all.push(p.clone());
        }
        assert_eq!(all.len(), 6);
        assert_eq!(all[3], vec![1, 2, 0]);
    }
}
