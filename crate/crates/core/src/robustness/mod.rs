//! Robustness of transaction workloads against isolation-level allocations.
//!
//! Two independent deciders are provided. The enumeration oracle walks every
//! schedule allowed under the allocation (for level maps the version data is
//! forced by the operation order, so only interleavings are enumerated). The
//! split search looks only at generalized split schedules, which is enough for
//! level-map allocations.

mod enumerate;
mod split;
mod transforms;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Limit, Result};
use crate::isolation::{Allocation, NamedPredicate};
use crate::schedule::{validate_transaction, Schedule, Transaction, TxnId, TxnSet};
use crate::serializability::{dense_acyclic, dense_graph, view_search};

pub(crate) use enumerate::{AllowedSchedules, ValidSchedules};
pub use split::{
    find_split_counterexample, is_generalized_split_schedule, is_multiversion_split_schedule, SplitCheck, SplitClause,
};
pub use transforms::{check_condition_1, extend_with_serial_tail, minimize_counterexample, restrict_to_cycle};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Workload {
    pub txns: Vec<Transaction>,
    pub alloc: Allocation,
}

impl Workload {
    /// Sorts transactions by id.
    pub fn new(mut txns: Vec<Transaction>, alloc: Allocation) -> Self {
        txns.sort_by_key(Transaction::id);
        Workload { txns, alloc }
    }

    pub fn ids(&self) -> Vec<TxnId> {
        self.txns.iter().map(Transaction::id).collect()
    }

    pub fn with_alloc(&self, alloc: Allocation) -> Self {
        Workload { txns: self.txns.clone(), alloc }
    }

    /// The sub-workload over `ids` with the restricted allocation.
    pub fn restrict(&self, ids: &[TxnId]) -> Self {
        Workload {
            txns: self.txns.iter().filter(|t| ids.contains(&t.id())).cloned().collect(),
            alloc: self.alloc.restrict(ids),
        }
    }

    pub fn op_count(&self) -> usize {
        self.txns.iter().map(Transaction::len).sum()
    }

    pub(crate) fn txn_set(&self) -> Result<Arc<TxnSet>> {
        for t in &self.txns {
            if let Some(v) = validate_transaction(t).into_iter().next() {
                return Err(Error::InvalidSchedule(vec![v]));
            }
        }
        TxnSet::new(self.txns.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SearchLimits {
    pub max_txns: usize,
    pub max_ops: usize,
    pub max_candidates: u64,
    #[serde(rename = "budget_ms", serialize_with = "as_millis")]
    pub budget: Duration,
}

fn as_millis<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u64(d.as_millis() as u64)
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits { max_txns: 4, max_ops: 16, max_candidates: 10_000_000, budget: Duration::from_secs(60) }
    }
}

impl SearchLimits {
    pub(crate) fn check_size(&self, w: &Workload) -> Result<()> {
        if w.txns.len() > self.max_txns {
            return Err(Error::limit(Limit::Transactions, self.max_txns, w.txns.len()));
        }
        if w.op_count() > self.max_ops {
            return Err(Error::limit(Limit::Operations, self.max_ops, w.op_count()));
        }
        Ok(())
    }
}

/// Counts candidates and watches the clock for one search.
pub(crate) struct Budget {
    limits: SearchLimits,
    started: Instant,
    pub used: u64,
}

impl Budget {
    pub fn new(limits: SearchLimits) -> Self {
        Budget { limits, started: Instant::now(), used: 0 }
    }

    pub fn charge(&mut self, n: u64) -> Result<()> {
        self.used += n;
        if self.used > self.limits.max_candidates {
            return Err(Error::limit(Limit::Candidates, self.limits.max_candidates, self.used));
        }
        if self.used % 1024 < n {
            let elapsed = self.started.elapsed();
            if elapsed > self.limits.budget {
                return Err(Error::limit(Limit::TimeBudget, self.limits.budget.as_millis(), elapsed.as_millis()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RobustnessMode {
    Conflict,
    View,
    ExactConflict,
    ExactView,
}

impl RobustnessMode {
    pub fn is_exact(self) -> bool {
        matches!(self, RobustnessMode::ExactConflict | RobustnessMode::ExactView)
    }

    pub fn is_view(self) -> bool {
        matches!(self, RobustnessMode::View | RobustnessMode::ExactView)
    }
}

impl fmt::Display for RobustnessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RobustnessMode::Conflict => "conflict",
            RobustnessMode::View => "view",
            RobustnessMode::ExactConflict => "exact-conflict",
            RobustnessMode::ExactView => "exact-view",
        })
    }
}

impl FromStr for RobustnessMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "conflict" => Ok(RobustnessMode::Conflict),
            "view" => Ok(RobustnessMode::View),
            "exact-conflict" => Ok(RobustnessMode::ExactConflict),
            "exact-view" => Ok(RobustnessMode::ExactView),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SplitSearch,
    Enumeration,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub subset: Vec<TxnId>,
    pub schedule: Schedule,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RobustnessVerdict {
    pub robust: bool,
    pub mode: RobustnessMode,
    pub counterexample: Option<Counterexample>,
    pub method: Method,
    /// Candidate schedules or split orders looked at.
    pub examined: u64,
}

/// Nonempty subsets of `ids` with at least `min` members, by size and then
/// lexicographically. A schedule over fewer than two transactions has no
/// dependencies, so callers start at two.
pub(crate) fn subsets(ids: &[TxnId], min: usize) -> Vec<Vec<TxnId>> {
    let n = ids.len();
    let mut out: Vec<Vec<TxnId>> = (0u64..1 << n)
        .map(|mask| (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| ids[i]).collect::<Vec<_>>())
        .filter(|s| s.len() >= min)
        .collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

/// Every valid schedule over `txns`: each interleaving with every version
/// order and version function, in canonical order. No admissibility filter.
pub fn valid_schedules(txns: &[Transaction]) -> Result<impl Iterator<Item = Schedule>> {
    for t in txns {
        if let Some(v) = validate_transaction(t).into_iter().next() {
            return Err(Error::InvalidSchedule(vec![v]));
        }
    }
    Ok(ValidSchedules::new(TxnSet::new(txns.to_vec())?))
}

/// Every schedule over exactly `w.txns` allowed under `w.alloc`, in canonical order.
pub fn enumerate_allowed_schedules(w: &Workload, limits: &SearchLimits) -> Result<Vec<Schedule>> {
    limits.check_size(w)?;
    let mut budget = Budget::new(*limits);
    let mut out = Vec::new();
    for_each_allowed(w, &mut budget, |s| {
        out.push(s);
        false
    })?;
    Ok(out)
}

/// Feeds allowed schedules to `f` until it returns true. Returns whether it did.
pub(crate) fn for_each_allowed(w: &Workload, budget: &mut Budget, mut f: impl FnMut(Schedule) -> bool) -> Result<bool> {
    let set = w.txn_set()?;
    match w.alloc.dense(&set)? {
        Some(levels) => {
            let mut it = AllowedSchedules::new(set, levels);
            let mut charged = 0;
            while let Some(s) = it.next() {
                budget.charge(it.visited - charged)?;
                charged = it.visited;
                if f(s) {
                    return Ok(true);
                }
            }
            budget.charge(it.visited - charged)?;
        }
        None => {
            let Allocation::Predicate(NamedPredicate::ViewSerializableOnly) = w.alloc else { unreachable!() };
            for s in ValidSchedules::new(set) {
                budget.charge(1)?;
                if view_search(&s).verdict && f(s) {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

pub(crate) fn conflict_serializable_fast(s: &Schedule) -> bool {
    dense_acyclic(&dense_graph(s))
}

/// Runs the enumeration oracle for one conflict-based and one view-based mode
/// in a single pass. `exact` selects the exact variants.
pub fn decide_by_enumeration(
    w: &Workload,
    exact: bool,
    limits: &SearchLimits,
) -> Result<(RobustnessVerdict, RobustnessVerdict)> {
    limits.check_size(w)?;
    let mut budget = Budget::new(*limits);
    let ids = w.ids();
    let candidates = if exact { vec![ids.clone()] } else { subsets(&ids, 2) };
    let mut conflict: Option<Counterexample> = None;
    let mut view: Option<Counterexample> = None;
    for subset in candidates {
        if conflict.is_some() && view.is_some() {
            break;
        }
        let sub = w.restrict(&subset);
        for_each_allowed(&sub, &mut budget, |s| {
            let cs = conflict_serializable_fast(&s);
            if !cs && conflict.is_none() {
                conflict = Some(Counterexample { subset: subset.clone(), schedule: s.clone() });
            }
            if view.is_none() && !view_search(&s).verdict {
                view = Some(Counterexample { subset: subset.clone(), schedule: s });
            }
            conflict.is_some() && view.is_some()
        })?;
    }
    let (cm, vm) = if exact {
        (RobustnessMode::ExactConflict, RobustnessMode::ExactView)
    } else {
        (RobustnessMode::Conflict, RobustnessMode::View)
    };
    let verdict = |mode, cx: Option<Counterexample>| RobustnessVerdict {
        robust: cx.is_none(),
        mode,
        counterexample: cx,
        method: Method::Enumeration,
        examined: budget.used,
    };
    Ok((verdict(cm, conflict), verdict(vm, view)))
}

/// Enumeration-oracle decision for a single mode.
pub fn decide(w: &Workload, mode: RobustnessMode, limits: &SearchLimits) -> Result<RobustnessVerdict> {
    limits.check_size(w)?;
    let mut budget = Budget::new(*limits);
    let ids = w.ids();
    let candidates = if mode.is_exact() { vec![ids.clone()] } else { subsets(&ids, 2) };
    let mut found = None;
    for subset in candidates {
        let sub = w.restrict(&subset);
        let hit = for_each_allowed(&sub, &mut budget, |s| {
            let bad = if mode.is_view() { !view_search(&s).verdict } else { !conflict_serializable_fast(&s) };
            if bad {
                found = Some(Counterexample { subset: subset.clone(), schedule: s });
            }
            bad
        })?;
        if hit {
            break;
        }
    }
    Ok(RobustnessVerdict {
        robust: found.is_none(),
        mode,
        counterexample: found,
        method: Method::Enumeration,
        examined: budget.used,
    })
}

pub fn is_conflict_robust(w: &Workload, limits: &SearchLimits) -> Result<RobustnessVerdict> {
    decide(w, RobustnessMode::Conflict, limits)
}

pub fn is_view_robust(w: &Workload, limits: &SearchLimits) -> Result<RobustnessVerdict> {
    decide(w, RobustnessMode::View, limits)
}

pub fn is_exact_conflict_robust(w: &Workload, limits: &SearchLimits) -> Result<RobustnessVerdict> {
    decide(w, RobustnessMode::ExactConflict, limits)
}

pub fn is_exact_view_robust(w: &Workload, limits: &SearchLimits) -> Result<RobustnessVerdict> {
    decide(w, RobustnessMode::ExactView, limits)
}

/// Split-search decision. Exact-conflict counterexamples are extended to the
/// full transaction set with a serial tail. Exact-view robustness has no split
/// characterisation and is rejected, as are predicate allocations.
pub fn decide_by_split(w: &Workload, mode: RobustnessMode, limits: &SearchLimits) -> Result<RobustnessVerdict> {
    if mode == RobustnessMode::ExactView {
        return Err(Error::NoSplitCharacterisation);
    }
    if w.alloc.is_predicate() {
        return Err(Error::RequiresLevelAllocation);
    }
    let mut budget = Budget::new(*limits);
    let found = split::search(w, limits, &mut budget)?;
    let counterexample = match found {
        Some(cx) if mode == RobustnessMode::ExactConflict => {
            let schedule = extend_with_serial_tail(&cx.schedule, &w.txns)?;
            Some(Counterexample { subset: w.ids(), schedule })
        }
        other => other,
    };
    Ok(RobustnessVerdict {
        robust: counterexample.is_none(),
        mode,
        counterexample,
        method: Method::SplitSearch,
        examined: budget.used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, txn};
    use crate::isolation::IsolationLevel::{self, *};
    use crate::schedule::validate_schedule;

    fn uniform(w: &Workload, level: IsolationLevel) -> Workload {
        w.with_alloc(Allocation::uniform(w.ids(), level))
    }

    #[test]
    fn enumeration_counts() {
        let w = Workload::new(vec![txn(1, "R(t) C"), txn(2, "W(t) C")], Allocation::uniform([TxnId(1), TxnId(2)], RC));
        let lim = SearchLimits::default();
        assert_eq!(enumerate_allowed_schedules(&w, &lim).unwrap().len(), 6);
        assert_eq!(enumerate_allowed_schedules(&uniform(&w, SI), &lim).unwrap().len(), 6);
        let empty = Workload::new(vec![], Allocation::levels([]));
        let all = enumerate_allowed_schedules(&empty, &lim).unwrap();
        assert_eq!(all.len(), 1);
        assert!(validate_schedule(&all[0]).is_empty());
    }

    #[test]
    fn subsets_ascend() {
        let ids = [TxnId(1), TxnId(2), TxnId(3)];
        let got: Vec<Vec<u32>> = subsets(&ids, 2).into_iter().map(|s| s.into_iter().map(|t| t.0).collect()).collect();
        assert_eq!(got, vec![vec![1, 2], vec![1, 3], vec![2, 3], vec![1, 2, 3]]);
    }

    #[test]
    fn figure_two_gap() {
        let w = fixtures::fig2_workload();
        let lim = SearchLimits::default();
        assert!(is_exact_view_robust(&w, &lim).unwrap().robust);
        let v = is_view_robust(&w, &lim).unwrap();
        assert!(!v.robust);
        let cx = v.counterexample.unwrap();
        assert_eq!(cx.subset, vec![TxnId(1), TxnId(2)]);
        assert!(!is_exact_conflict_robust(&w, &lim).unwrap().robust);
        assert!(!is_conflict_robust(&w, &lim).unwrap().robust);
    }

    #[test]
    fn lost_update_and_write_skew() {
        let lim = SearchLimits::default();
        assert!(is_conflict_robust(&uniform(&fixtures::w_lu(), SI), &lim).unwrap().robust);
        assert!(!is_conflict_robust(&uniform(&fixtures::w_lu(), RC), &lim).unwrap().robust);
        let ws = is_conflict_robust(&uniform(&fixtures::w_ws(), SI), &lim).unwrap();
        assert!(!ws.robust);
        assert!(is_conflict_robust(&uniform(&fixtures::w_ws(), SSI), &lim).unwrap().robust);
    }

    #[test]
    fn singleton_is_robust() {
        let w = Workload::new(vec![txn(1, "R(t) W(t) C")], Allocation::uniform([TxnId(1)], RC));
        let lim = SearchLimits::default();
        for mode in
            [RobustnessMode::Conflict, RobustnessMode::View, RobustnessMode::ExactConflict, RobustnessMode::ExactView]
        {
            assert!(decide(&w, mode, &lim).unwrap().robust);
        }
    }

    #[test]
    fn limits_are_enforced() {
        let w = fixtures::fig2_workload();
        let tight = SearchLimits { max_txns: 2, ..SearchLimits::default() };
        assert!(matches!(is_conflict_robust(&w, &tight), Err(Error::LimitExceeded { limit: Limit::Transactions, .. })));
        let tight = SearchLimits { max_ops: 4, ..SearchLimits::default() };
        assert!(matches!(is_conflict_robust(&w, &tight), Err(Error::LimitExceeded { limit: Limit::Operations, .. })));
        let tight = SearchLimits { max_candidates: 10, ..SearchLimits::default() };
        assert!(matches!(is_exact_view_robust(&w, &tight), Err(Error::LimitExceeded { limit: Limit::Candidates, .. })));
    }

    #[test]
    fn split_and_enumeration_agree_on_fixtures() {
        let lim = SearchLimits::default();
        for w in [fixtures::w_lu(), fixtures::w_ws(), fixtures::fig2_workload()] {
            for level in IsolationLevel::ALL {
                let w = uniform(&w, level);
                let (c, v) = decide_by_enumeration(&w, false, &lim).unwrap();
                let split = decide_by_split(&w, RobustnessMode::Conflict, &lim).unwrap();
                assert_eq!(c.robust, v.robust);
                assert_eq!(c.robust, split.robust, "{level:?}");
            }
        }
    }
}
