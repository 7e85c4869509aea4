//! Admissibility of schedules under RC, SI and SSI, alone or mixed per transaction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::schedule::{concurrent, validate_schedule, Kind, OpId, Schedule, Transaction, TxnId, TxnSet, NONE};
use crate::serializability::{dep_kind, view_search, ConflictKind, DependencyEdge};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum IsolationLevel {
    RC,
    SI,
    SSI,
}

impl IsolationLevel {
    pub const ALL: [IsolationLevel; 3] = [IsolationLevel::RC, IsolationLevel::SI, IsolationLevel::SSI];

    /// Reads see the snapshot at transaction start rather than at the read.
    pub fn reads_from_snapshot(self) -> bool {
        self != IsolationLevel::RC
    }
}

impl fmt::Display for IsolationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for IsolationLevel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "RC" => Ok(IsolationLevel::RC),
            "SI" => Ok(IsolationLevel::SI),
            "SSI" => Ok(IsolationLevel::SSI),
            other => Err(format!("unknown isolation level `{other}` (expected RC, SI or SSI)")),
        }
    }
}

/// How the commit-order clause `C3 before C1` of a dangerous structure is read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PivotRule {
    /// `C3 <= C1`: when T1 and T3 coincide the clause holds, so T1 -> T2 -> T1 counts.
    #[default]
    AllowDegenerate,
    /// `C3 < C1`: structures with T1 = T3 never form.
    Strict,
}

/// Test-only allocations that admit exactly the schedules satisfying a predicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedPredicate {
    ViewSerializableOnly,
}

impl FromStr for NamedPredicate {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "view-serializable" => Ok(NamedPredicate::ViewSerializableOnly),
            other => Err(format!("unknown predicate `{other}` (expected view-serializable)")),
        }
    }
}

impl fmt::Display for NamedPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NamedPredicate::ViewSerializableOnly => f.write_str("view-serializable"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Allocation {
    Levels { levels: BTreeMap<TxnId, IsolationLevel>, pivot: PivotRule },
    Predicate(NamedPredicate),
}

impl Allocation {
    pub fn levels(levels: impl IntoIterator<Item = (TxnId, IsolationLevel)>) -> Self {
        Allocation::Levels { levels: levels.into_iter().collect(), pivot: PivotRule::default() }
    }

    pub fn uniform(ids: impl IntoIterator<Item = TxnId>, level: IsolationLevel) -> Self {
        Allocation::levels(ids.into_iter().map(|t| (t, level)))
    }

    pub fn with_pivot(self, rule: PivotRule) -> Self {
        match self {
            Allocation::Levels { levels, .. } => Allocation::Levels { levels, pivot: rule },
            p => p,
        }
    }

    pub fn level(&self, t: TxnId) -> Option<IsolationLevel> {
        match self {
            Allocation::Levels { levels, .. } => levels.get(&t).copied(),
            Allocation::Predicate(_) => None,
        }
    }

    pub fn pivot(&self) -> PivotRule {
        match self {
            Allocation::Levels { pivot, .. } => *pivot,
            Allocation::Predicate(_) => PivotRule::default(),
        }
    }

    pub fn is_predicate(&self) -> bool {
        matches!(self, Allocation::Predicate(_))
    }

    /// Drops entries for transactions outside `ids`.
    pub fn restrict(&self, ids: &[TxnId]) -> Allocation {
        match self {
            Allocation::Levels { levels, pivot } => Allocation::Levels {
                levels: levels.iter().filter(|(t, _)| ids.contains(t)).map(|(&t, &l)| (t, l)).collect(),
                pivot: *pivot,
            },
            p => p.clone(),
        }
    }

    /// Per-slot levels for `set`, failing on the first uncovered transaction.
    pub(crate) fn dense(&self, set: &TxnSet) -> Result<Option<DenseLevels>> {
        match self {
            Allocation::Predicate(_) => Ok(None),
            Allocation::Levels { levels, pivot } => {
                let per_slot = set
                    .txns
                    .iter()
                    .map(|t| levels.get(&t.id()).copied().ok_or(Error::AllocationIncomplete(t.id())))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Some(DenseLevels { levels: per_slot, pivot: *pivot }))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct DenseLevels {
    pub levels: Vec<IsolationLevel>,
    pub pivot: PivotRule,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Clause {
    CommitOrder,
    ReadLastCommitted,
    DirtyWrite,
    ConcurrentWrite,
    DangerousStructure,
    PredicateRejected,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DangerousStructure {
    pub t1: TxnId,
    pub t2: TxnId,
    pub t3: TxnId,
    /// First witnessing antidependency from t1 to t2 and from t2 to t3.
    pub witnesses: [DependencyEdge; 2],
}

impl fmt::Display for DangerousStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {} -> {}", self.t1, self.t2, self.t3)
    }
}

/// A failed clause. `txn` is absent only for predicate allocations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClauseViolation {
    pub txn: Option<TxnId>,
    pub clause: Clause,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AdmissibilityReport {
    pub allowed: bool,
    pub violations: Vec<ClauseViolation>,
    pub dangerous_structures: Vec<DangerousStructure>,
}

impl AdmissibilityReport {
    fn from_violations(violations: Vec<ClauseViolation>, dangerous_structures: Vec<DangerousStructure>) -> Self {
        AdmissibilityReport { allowed: violations.is_empty(), violations, dangerous_structures }
    }

    pub fn clauses(&self) -> Vec<Clause> {
        self.violations.iter().map(|v| v.clause).collect()
    }
}

// Dense clause checks. `rel` arguments are schedule positions.

pub(crate) fn commit_order_ok(s: &Schedule, w: u32) -> bool {
    let slot = s.slot(w);
    let cw = s.commit_pos(slot.txn);
    s.set.writes[slot.obj as usize].iter().all(|&other| {
        let txn = s.txn_of(other);
        txn == slot.txn || s.vbefore(slot.obj, w, other) == (cw < s.commit_pos(txn))
    })
}

pub(crate) fn read_last_committed_at(s: &Schedule, r: u32, rel: u32) -> bool {
    let slot = s.slot(r);
    let v = s.vf[r as usize];
    if v == NONE {
        return false;
    }
    // A read after its own transaction's write on the object must see that write.
    if slot.own_prior_write != NONE {
        return v == slot.own_prior_write;
    }
    let committed = |w: u32| {
        let txn = s.txn_of(w);
        txn != NONE && s.commit_pos(txn) < rel
    };
    (v == 0 || committed(v))
        && !s.set.writes[slot.obj as usize].iter().any(|&w| committed(w) && s.vbefore(slot.obj, v, w))
}

/// Some write of `k` lands between another transaction's same-object write and
/// its commit (`dirty == true`), or after such a write by a transaction that
/// commits after `k` starts (`dirty == false`).
pub(crate) fn overwrites_uncommitted(s: &Schedule, k: u32, dirty: bool) -> bool {
    let set = &*s.set;
    let bound_k = s.first_pos(k);
    set.ops_of(k as usize).any(|a| {
        let slot = set.slots[a as usize];
        if slot.kind != Kind::Write {
            return false;
        }
        let pa = s.p(a);
        set.writes[slot.obj as usize].iter().any(|&b| {
            let i = s.txn_of(b);
            if i == k || s.p(b) >= pa {
                return false;
            }
            let ci = s.commit_pos(i);
            if dirty {
                pa < ci
            } else {
                bound_k < ci
            }
        })
    })
}

fn rc_violations(s: &Schedule, k: u32, out: &mut Vec<Clause>) {
    let set = &*s.set;
    let ops = set.ops_of(k as usize);
    if ops.clone().any(|d| set.slots[d as usize].kind == Kind::Write && !commit_order_ok(s, d)) {
        out.push(Clause::CommitOrder);
    }
    if ops.clone().any(|d| set.slots[d as usize].kind == Kind::Read && !read_last_committed_at(s, d, s.p(d))) {
        out.push(Clause::ReadLastCommitted);
    }
    if overwrites_uncommitted(s, k, true) {
        out.push(Clause::DirtyWrite);
    }
}

fn si_violations(s: &Schedule, k: u32, out: &mut Vec<Clause>) {
    let set = &*s.set;
    let ops = set.ops_of(k as usize);
    let start = s.first_pos(k);
    if ops.clone().any(|d| set.slots[d as usize].kind == Kind::Write && !commit_order_ok(s, d)) {
        out.push(Clause::CommitOrder);
    }
    if ops.clone().any(|d| set.slots[d as usize].kind == Kind::Read && !read_last_committed_at(s, d, start)) {
        out.push(Clause::ReadLastCommitted);
    }
    if overwrites_uncommitted(s, k, false) {
        out.push(Clause::ConcurrentWrite);
    }
}

fn level_violations(s: &Schedule, k: u32, level: IsolationLevel) -> Vec<Clause> {
    let mut out = Vec::new();
    match level {
        IsolationLevel::RC => rc_violations(s, k, &mut out),
        _ => si_violations(s, k, &mut out),
    }
    out
}

fn report_for(s: &Schedule, t: TxnId, level: IsolationLevel) -> Result<AdmissibilityReport> {
    let k = s.slot_or_err(t)?;
    let violations =
        level_violations(s, k, level).into_iter().map(|clause| ClauseViolation { txn: Some(t), clause }).collect();
    Ok(AdmissibilityReport::from_violations(violations, Vec::new()))
}

fn write_or_err(s: &Schedule, w: OpId) -> Result<u32> {
    let d = s.dense_or_err(w)?;
    if s.slot(d).kind != Kind::Write {
        return Err(Error::WrongAction(w, "write"));
    }
    Ok(d)
}

pub fn respects_commit_order(s: &Schedule, w: OpId) -> Result<bool> {
    Ok(commit_order_ok(s, write_or_err(s, w)?))
}

/// `r` observes the most recently committed version as of `rel`, an operation
/// of the same transaction.
pub fn read_last_committed(s: &Schedule, r: OpId, rel: OpId) -> Result<bool> {
    let dr = s.dense_or_err(r)?;
    if s.slot(dr).kind != Kind::Read {
        return Err(Error::WrongAction(r, "read"));
    }
    let drel = s.dense_or_err(rel)?;
    if r.txn() != rel.txn() {
        return Err(Error::UnknownOperation(rel));
    }
    Ok(read_last_committed_at(s, dr, s.p(drel)))
}

pub fn exhibits_dirty_write(s: &Schedule, t: TxnId) -> Result<bool> {
    Ok(overwrites_uncommitted(s, s.slot_or_err(t)?, true))
}

pub fn exhibits_concurrent_write(s: &Schedule, t: TxnId) -> Result<bool> {
    Ok(overwrites_uncommitted(s, s.slot_or_err(t)?, false))
}

pub fn allowed_under_rc(s: &Schedule, t: TxnId) -> Result<AdmissibilityReport> {
    report_for(s, t, IsolationLevel::RC)
}

pub fn allowed_under_si(s: &Schedule, t: TxnId) -> Result<AdmissibilityReport> {
    report_for(s, t, IsolationLevel::SI)
}

/// Per-slot antidependency matrix with the first witnessing edge.
fn antidependencies(s: &Schedule) -> Vec<Vec<Option<(u32, u32)>>> {
    let n = s.set.txns.len();
    let mut rw = vec![vec![None; n]; n];
    for accesses in &s.set.accesses {
        for &b in accesses {
            if s.slot(b).kind != Kind::Read {
                continue;
            }
            for &a in accesses {
                let (i, j) = (s.txn_of(b) as usize, s.txn_of(a) as usize);
                if rw[i][j].is_none() && dep_kind(s, b, a) == Some(ConflictKind::RW) {
                    rw[i][j] = Some((b, a));
                }
            }
        }
    }
    // Prefer the canonically smallest witness.
    for (i, row) in rw.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if cell.is_some() {
                *cell = first_rw_witness(s, i as u32, j as u32);
            }
        }
    }
    rw
}

fn first_rw_witness(s: &Schedule, i: u32, j: u32) -> Option<(u32, u32)> {
    let set = &*s.set;
    for b in set.ops_of(i as usize) {
        for a in set.ops_of(j as usize) {
            if dep_kind(s, b, a) == Some(ConflictKind::RW) {
                return Some((b, a));
            }
        }
    }
    None
}

fn read_only(s: &Schedule, k: u32) -> bool {
    s.set.txns[k as usize].is_read_only()
}

/// Dense search over slots in `scope` (which must be sorted).
pub(crate) fn dangerous_structures_dense(
    s: &Schedule,
    scope: &[u32],
    pivot: PivotRule,
) -> Vec<(u32, u32, u32, (u32, u32), (u32, u32))> {
    let rw = antidependencies(s);
    let mut out = Vec::new();
    for &t1 in scope {
        for &t2 in scope {
            let Some(e12) = rw[t1 as usize][t2 as usize] else { continue };
            if !concurrent(s, t1, t2) {
                continue;
            }
            for &t3 in scope {
                let Some(e23) = rw[t2 as usize][t3 as usize] else { continue };
                if !concurrent(s, t2, t3) {
                    continue;
                }
                let (c1, c2, c3) = (s.commit_pos(t1), s.commit_pos(t2), s.commit_pos(t3));
                let before_c1 = match pivot {
                    PivotRule::AllowDegenerate => c3 <= c1,
                    PivotRule::Strict => c3 < c1,
                };
                if !(before_c1 && c3 < c2) {
                    continue;
                }
                if read_only(s, t1) && c3 >= s.first_pos(t1) {
                    continue;
                }
                out.push((t1, t2, t3, e12, e23));
            }
        }
    }
    out
}

pub(crate) fn has_dangerous_structure(s: &Schedule, scope: &[u32], pivot: PivotRule) -> bool {
    // The full enumeration is cheap at the sizes we handle.
    !dangerous_structures_dense(s, scope, pivot).is_empty()
}

pub fn find_dangerous_structures(
    s: &Schedule,
    scope: &BTreeSet<TxnId>,
    pivot: PivotRule,
) -> Result<Vec<DangerousStructure>> {
    let slots: Vec<u32> = scope.iter().map(|&t| s.slot_or_err(t)).collect::<Result<_>>()?;
    let edge = |(b, a): (u32, u32)| DependencyEdge { from: s.slot(b).id, to: s.slot(a).id, kind: ConflictKind::RW };
    let id = |k: u32| s.set.txns[k as usize].id();
    Ok(dangerous_structures_dense(s, &slots, pivot)
        .into_iter()
        .map(|(t1, t2, t3, e12, e23)| DangerousStructure {
            t1: id(t1),
            t2: id(t2),
            t3: id(t3),
            witnesses: [edge(e12), edge(e23)],
        })
        .collect())
}

pub fn allowed_under_allocation(s: &Schedule, a: &Allocation) -> Result<AdmissibilityReport> {
    let Some(dense) = a.dense(&s.set)? else {
        let Allocation::Predicate(NamedPredicate::ViewSerializableOnly) = a else { unreachable!() };
        let violations = if view_search(s).verdict {
            Vec::new()
        } else {
            vec![ClauseViolation { txn: None, clause: Clause::PredicateRejected }]
        };
        return Ok(AdmissibilityReport::from_violations(violations, Vec::new()));
    };
    let mut violations = Vec::new();
    for (k, &level) in dense.levels.iter().enumerate() {
        let t = s.set.txns[k].id();
        violations.extend(
            level_violations(s, k as u32, level).into_iter().map(|clause| ClauseViolation { txn: Some(t), clause }),
        );
    }
    let scope: BTreeSet<TxnId> =
        s.set.txns.iter().zip(&dense.levels).filter(|(_, &l)| l == IsolationLevel::SSI).map(|(t, _)| t.id()).collect();
    let structures = find_dangerous_structures(s, &scope, dense.pivot)?;
    let pivots: BTreeSet<TxnId> = structures.iter().map(|d| d.t2).collect();
    violations.extend(pivots.into_iter().map(|t| ClauseViolation { txn: Some(t), clause: Clause::DangerousStructure }));
    // Clause order first, transactions second.
    violations.sort_by_key(|v| (v.clause, v.txn));
    Ok(AdmissibilityReport::from_violations(violations, structures))
}

/// Fast yes/no admissibility for level-map allocations.
pub(crate) fn admissible_dense(s: &Schedule, dense: &DenseLevels) -> bool {
    let mut scratch = Vec::new();
    for (k, &level) in dense.levels.iter().enumerate() {
        scratch.clear();
        match level {
            IsolationLevel::RC => rc_violations(s, k as u32, &mut scratch),
            _ => si_violations(s, k as u32, &mut scratch),
        }
        if !scratch.is_empty() {
            return false;
        }
    }
    let scope: Vec<u32> =
        (0..dense.levels.len() as u32).filter(|&k| dense.levels[k as usize] == IsolationLevel::SSI).collect();
    scope.len() < 2 || !has_dangerous_structure(s, &scope, dense.pivot)
}

/// The version data forced by an operation order: versions are installed in
/// commit order, and every read observes the last version committed before the
/// read itself (RC) or before its transaction's first operation (SI, SSI). A
/// read following its own transaction's write on the object observes that write.
pub(crate) fn forced_completion_dense(set: Arc<TxnSet>, order: Vec<u32>, snapshot: &[bool]) -> Schedule {
    let n = set.len();
    let mut pos = vec![NONE; n];
    for (p, &d) in order.iter().enumerate() {
        pos[d as usize] = p as u32;
    }
    let commit_pos = |k: u32| {
        let c = set.commit[k as usize];
        if c == NONE {
            NONE
        } else {
            pos[c as usize]
        }
    };
    let vorder: Vec<Vec<u32>> = set
        .writes
        .iter()
        .map(|writes| {
            let mut chain = writes.clone();
            chain.sort_by_key(|&w| (commit_pos(set.slots[w as usize].txn), w));
            chain.insert(0, 0);
            chain
        })
        .collect();
    let mut vf = vec![NONE; n];
    for d in 1..n as u32 {
        let slot = set.slots[d as usize];
        if slot.kind != Kind::Read {
            continue;
        }
        vf[d as usize] = if slot.own_prior_write != NONE {
            slot.own_prior_write
        } else {
            let rel =
                if snapshot[slot.txn as usize] { pos[set.first[slot.txn as usize] as usize] } else { pos[d as usize] };
            vorder[slot.obj as usize]
                .iter()
                .rev()
                .copied()
                .find(|&w| w == 0 || commit_pos(set.slots[w as usize].txn) < rel)
                .unwrap_or(0)
        };
    }
    Schedule::from_dense(set, order, vorder, vf)
}

fn dense_order(set: &TxnSet, order: &[OpId]) -> Result<Vec<u32>> {
    order.iter().map(|&id| set.dense(id).ok_or(Error::UnknownOperation(id))).collect()
}

/// Builds the unique schedule whose version data the allocation's clauses force
/// for `order`, without checking admissibility.
pub fn forced_completion(txns: &[Transaction], order: &[OpId], a: &Allocation) -> Result<Schedule> {
    let set = TxnSet::new(txns.to_vec())?;
    let dense = a.dense(&set)?.ok_or(Error::RequiresLevelAllocation)?;
    let order = dense_order(&set, order)?;
    let snapshot: Vec<bool> = dense.levels.iter().map(|l| l.reads_from_snapshot()).collect();
    let s = forced_completion_dense(set, order, &snapshot);
    let violations = validate_schedule(&s);
    if !violations.is_empty() {
        return Err(Error::InvalidSchedule(violations));
    }
    Ok(s)
}

/// The forced completion of `order`, if it is allowed under `a`.
pub fn complete_under_allocation(txns: &[Transaction], order: &[OpId], a: &Allocation) -> Result<Option<Schedule>> {
    let s = forced_completion(txns, order, a)?;
    let dense = a.dense(&s.set)?.expect("checked by forced_completion");
    Ok(admissible_dense(&s, &dense).then_some(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::schedule::{are_concurrent, serial_schedule, ObjectId};
    use IsolationLevel::*;

    fn op(t: u32, i: u32) -> OpId {
        OpId::new(TxnId(t), i)
    }

    fn alloc(levels: &[IsolationLevel]) -> Allocation {
        Allocation::levels(levels.iter().enumerate().map(|(k, &l)| (TxnId(k as u32 + 1), l)))
    }

    #[test]
    fn commit_order_in_figures() {
        for s in [fixtures::s1(), fixtures::s2()] {
            for t in s.transactions() {
                for w in t.writes() {
                    assert!(respects_commit_order(&s, w.id).unwrap(), "{}", w.id);
                }
            }
        }
        let t1 = fixtures::txn(1, "W(t) C");
        let t2 = fixtures::txn(2, "W(t) C");
        let order = vec![OpId::Init, op(1, 1), op(2, 1), op(2, 2), op(1, 2)];
        let vorder = BTreeMap::from([(ObjectId::new("t"), vec![OpId::Init, op(1, 1), op(2, 1)])]);
        let s = Schedule::new(vec![t1, t2], order, vorder, BTreeMap::new()).unwrap();
        assert!(!respects_commit_order(&s, op(1, 1)).unwrap());
        assert_eq!(respects_commit_order(&s, op(1, 2)), Err(Error::WrongAction(op(1, 2), "write")));
    }

    #[test]
    fn read_last_committed_examples() {
        let s1 = fixtures::s1();
        assert!(read_last_committed(&s1, op(4, 3), op(4, 3)).unwrap());
        assert!(!read_last_committed(&s1, op(4, 3), op(4, 1)).unwrap());
        assert!(!read_last_committed(&s1, op(2, 2), op(2, 2)).unwrap());
        assert!(read_last_committed(&s1, op(2, 2), op(2, 1)).unwrap());
        for (r, first) in [(op(1, 1), op(1, 1)), (op(4, 1), op(4, 1))] {
            assert!(read_last_committed(&s1, r, r).unwrap());
            assert!(read_last_committed(&s1, r, first).unwrap());
        }
        let serial = serial_schedule(s1.transactions()).unwrap();
        for t in serial.transactions() {
            for r in t.reads() {
                assert!(read_last_committed(&serial, r.id, r.id).unwrap());
            }
        }
    }

    #[test]
    fn dirty_and_concurrent_writes() {
        let s1 = fixtures::s1();
        for t in 1..=4 {
            assert!(!exhibits_dirty_write(&s1, TxnId(t)).unwrap());
        }
        assert!(exhibits_concurrent_write(&s1, TxnId(4)).unwrap());
        for t in 1..=3 {
            assert!(!exhibits_concurrent_write(&s1, TxnId(t)).unwrap());
        }
        let txns = vec![fixtures::txn(1, "W(t) C"), fixtures::txn(2, "W(t) C")];
        let order = [OpId::Init, op(1, 1), op(2, 1), op(1, 2), op(2, 2)];
        let s = forced_completion(&txns, &order, &alloc(&[RC, RC])).unwrap();
        assert!(exhibits_dirty_write(&s, TxnId(2)).unwrap());
        assert!(exhibits_concurrent_write(&s, TxnId(2)).unwrap());
        assert!(!exhibits_dirty_write(&s, TxnId(1)).unwrap());
    }

    #[test]
    fn single_level_reports() {
        let s1 = fixtures::s1();
        assert!(allowed_under_rc(&s1, TxnId(4)).unwrap().allowed);
        assert_eq!(allowed_under_rc(&s1, TxnId(2)).unwrap().clauses(), vec![Clause::ReadLastCommitted]);
        assert!(allowed_under_si(&s1, TxnId(2)).unwrap().allowed);
        assert_eq!(
            allowed_under_si(&s1, TxnId(4)).unwrap().clauses(),
            vec![Clause::ReadLastCommitted, Clause::ConcurrentWrite]
        );
        assert_eq!(allowed_under_rc(&s1, TxnId(8)), Err(Error::UnknownTransaction(TxnId(8))));
    }

    #[test]
    fn dangerous_structures_in_figures() {
        let all: BTreeSet<TxnId> = [1, 2, 3].map(TxnId).into();
        let found = find_dangerous_structures(&fixtures::s1(), &all, PivotRule::default()).unwrap();
        assert_eq!(found.iter().map(|d| d.to_string()).collect::<Vec<_>>(), ["T1 -> T2 -> T3"]);
        let found = find_dangerous_structures(&fixtures::sd(), &all, PivotRule::Strict).unwrap();
        assert_eq!(found.iter().map(|d| (d.t1, d.t2, d.t3)).collect::<Vec<_>>(), [(TxnId(1), TxnId(2), TxnId(3))]);
        assert_eq!(found[0].witnesses[0], DependencyEdge { from: op(1, 1), to: op(2, 2), kind: ConflictKind::RW });
        let serial = serial_schedule(fixtures::s1().transactions()).unwrap();
        let every: BTreeSet<TxnId> = [1, 2, 3, 4].map(TxnId).into();
        assert!(find_dangerous_structures(&serial, &every, PivotRule::default()).unwrap().is_empty());
    }

    #[test]
    fn degenerate_pivot_write_skew() {
        // Write skew: both read both objects from the snapshot, then write one each.
        let w = fixtures::w_ws();
        let order = [OpId::Init, op(1, 1), op(1, 2), op(2, 1), op(2, 2), op(1, 3), op(2, 3), op(1, 4), op(2, 4)];
        let ssi = alloc(&[SSI, SSI]);
        let s = forced_completion(&w.txns, &order, &ssi).unwrap();
        let scope: BTreeSet<TxnId> = [TxnId(1), TxnId(2)].into();
        let loops = find_dangerous_structures(&s, &scope, PivotRule::AllowDegenerate).unwrap();
        assert_eq!(loops.iter().map(|d| (d.t1.0, d.t2.0, d.t3.0)).collect::<Vec<_>>(), [(1, 2, 1)]);
        assert!(find_dangerous_structures(&s, &scope, PivotRule::Strict).unwrap().is_empty());
        assert!(!allowed_under_allocation(&s, &ssi).unwrap().allowed);
        assert!(allowed_under_allocation(&s, &ssi.clone().with_pivot(PivotRule::Strict)).unwrap().allowed);
    }

    #[test]
    fn allocation_examples() {
        let s1 = fixtures::s1();
        let r = allowed_under_allocation(&s1, &alloc(&[SSI, SSI, SSI, RC])).unwrap();
        assert_eq!(r.clauses(), vec![Clause::DangerousStructure]);
        assert!(allowed_under_allocation(&s1, &alloc(&[RC, SI, SSI, RC])).unwrap().allowed);
        let r = allowed_under_allocation(&s1, &alloc(&[RC, SI, SI, SI])).unwrap();
        assert!(r.violations.contains(&ClauseViolation { txn: Some(TxnId(4)), clause: Clause::ConcurrentWrite }));
        assert_eq!(allowed_under_allocation(&s1, &alloc(&[RC, SI, SI])), Err(Error::AllocationIncomplete(TxnId(4))));
        // Entries for absent transactions are ignored.
        assert!(allowed_under_allocation(&s1, &alloc(&[RC, SI, SSI, RC, SI])).unwrap().allowed);
    }

    #[test]
    fn restriction() {
        let a = alloc(&[RC, SI, SSI]);
        assert_eq!(a.restrict(&[TxnId(1), TxnId(3)]), alloc(&[RC, SI, SSI]).restrict(&[TxnId(3), TxnId(1)]));
        assert_eq!(a.restrict(&[TxnId(2)]).level(TxnId(2)), Some(SI));
        assert_eq!(a.restrict(&[TxnId(2)]).level(TxnId(1)), None);
    }

    #[test]
    fn completion_reproduces_figures() {
        let sd = fixtures::sd();
        let completed = forced_completion(sd.transactions(), &sd.order(), &alloc(&[SSI, SSI, SSI])).unwrap();
        assert_eq!(completed, sd);

        let s1 = fixtures::s1();
        let rc = alloc(&[RC, RC, RC, RC]);
        let s = complete_under_allocation(s1.transactions(), &s1.order(), &rc).unwrap().unwrap();
        let mut expected = s1.version_function();
        expected.insert(op(2, 2), op(3, 1));
        assert_eq!(s.version_function(), expected);
        assert_eq!(s.version_orders(), s1.version_orders());

        let serial = serial_schedule(s1.transactions()).unwrap();
        for levels in [[RC; 4], [SI; 4], [SSI; 4]] {
            let done = complete_under_allocation(s1.transactions(), &serial.order(), &alloc(&levels)).unwrap();
            assert_eq!(done, Some(serial.clone()));
        }
    }

    #[test]
    fn completion_rejects_inadmissible_orders() {
        let w = fixtures::w_lu();
        let order = [OpId::Init, op(1, 1), op(2, 1), op(2, 2), op(2, 3), op(1, 2), op(1, 3)];
        assert!(complete_under_allocation(&w.txns, &order, &alloc(&[SI, SI])).unwrap().is_none());
        assert!(complete_under_allocation(&w.txns, &order, &alloc(&[RC, RC])).unwrap().is_some());
        let bad = [OpId::Init, op(1, 2), op(1, 1), op(1, 3), op(2, 1), op(2, 2), op(2, 3)];
        assert!(matches!(forced_completion(&w.txns, &bad, &alloc(&[RC, RC])), Err(Error::InvalidSchedule(_))));
        let vs = Allocation::Predicate(NamedPredicate::ViewSerializableOnly);
        assert_eq!(forced_completion(&w.txns, &order, &vs), Err(Error::RequiresLevelAllocation));
    }

    #[test]
    fn predicate_allocation() {
        let vs = Allocation::Predicate(NamedPredicate::ViewSerializableOnly);
        assert!(allowed_under_allocation(&fixtures::s2(), &vs).unwrap().allowed);
        let r = allowed_under_allocation(&fixtures::s3(), &vs).unwrap();
        assert_eq!(r.clauses(), vec![Clause::PredicateRejected]);
    }

    #[test]
    fn concurrency_is_symmetric_in_figures() {
        let s1 = fixtures::s1();
        for i in 1..=4 {
            for j in 1..=4 {
                if i != j {
                    assert_eq!(
                        are_concurrent(&s1, TxnId(i), TxnId(j)).unwrap(),
                        are_concurrent(&s1, TxnId(j), TxnId(i)).unwrap()
                    );
                }
            }
        }
    }
}
