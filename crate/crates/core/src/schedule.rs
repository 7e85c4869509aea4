//! Transactions, multiversion schedules and their well-formedness rules.
//!
//! A [`Schedule`] is the tuple (operations, order, version order, version
//! function). Operations are identified positionally by [`OpId`]; the
//! special initial operation [`OpId::Init`] is carried by every schedule,
//! first in the order and first in every per-object version order.
//!
//! Internally every schedule shares an immutable [`TxnSet`] that assigns each
//! operation a dense index (0 is `Init`), so schedules enumerated over the
//! same transactions are cheap to build and compare.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) const NONE: u32 = u32::MAX;

/// Name of a database object. Case-sensitive, nonempty.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(Arc<str>);

impl ObjectId {
    /// Panics on an empty name; parsers reject empty tokens before calling this.
    pub fn new(name: impl AsRef<str>) -> Self {
        let name = name.as_ref();
        assert!(!name.is_empty(), "object names must be nonempty");
        ObjectId(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxnId(pub u32);

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

impl fmt::Debug for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

/// Positional operation identity. `Init` sorts before every transaction operation.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpId {
    Init,
    Op { txn: TxnId, index: u32 },
}

impl OpId {
    pub fn new(txn: TxnId, index: u32) -> Self {
        debug_assert!(index >= 1, "operation indices are 1-based");
        OpId::Op { txn, index }
    }

    pub fn txn(&self) -> Option<TxnId> {
        match self {
            OpId::Init => None,
            OpId::Op { txn, .. } => Some(*txn),
        }
    }

    pub fn index(&self) -> Option<u32> {
        match self {
            OpId::Init => None,
            OpId::Op { index, .. } => Some(*index),
        }
    }

    pub fn is_init(&self) -> bool {
        matches!(self, OpId::Init)
    }
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpId::Init => f.write_str("init"),
            OpId::Op { txn, index } => write!(f, "{txn}#{index}"),
        }
    }
}

impl fmt::Debug for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for OpId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionKind {
    Read,
    Write,
    Commit,
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Action {
    Read(ObjectId),
    Write(ObjectId),
    Commit,
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Read(_) => ActionKind::Read,
            Action::Write(_) => ActionKind::Write,
            Action::Commit => ActionKind::Commit,
        }
    }

    pub fn object(&self) -> Option<&ObjectId> {
        match self {
            Action::Read(o) | Action::Write(o) => Some(o),
            Action::Commit => None,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Operation {
    pub id: OpId,
    pub action: Action,
}

impl Operation {
    pub fn kind(&self) -> ActionKind {
        self.action.kind()
    }

    pub fn object(&self) -> Option<&ObjectId> {
        self.action.object()
    }

    pub fn is_read(&self) -> bool {
        self.kind() == ActionKind::Read
    }

    pub fn is_write(&self) -> bool {
        self.kind() == ActionKind::Write
    }
}

impl fmt::Display for Operation {
    /// Shorthand such as `R1(t)` or `C2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.id.txn().map(|t| t.0).unwrap_or(0);
        match &self.action {
            Action::Read(o) => write!(f, "R{n}({o})"),
            Action::Write(o) => write!(f, "W{n}({o})"),
            Action::Commit => write!(f, "C{n}"),
        }
    }
}

/// A transaction: a finite sequence of operations ending in its commit.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Transaction {
    id: TxnId,
    ops: Vec<Operation>,
}

impl Serialize for Transaction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Transaction", 2)?;
        st.serialize_field("id", &self.id.to_string())?;
        st.serialize_field("ops", &self.ops.iter().map(|o| o.to_string()).collect::<Vec<_>>())?;
        st.end()
    }
}

impl Transaction {
    /// Builds a transaction assigning positional ids `1..=len`.
    pub fn new(id: TxnId, actions: impl IntoIterator<Item = Action>) -> Self {
        let ops = actions
            .into_iter()
            .enumerate()
            .map(|(k, action)| Operation { id: OpId::new(id, k as u32 + 1), action })
            .collect();
        Transaction { id, ops }
    }

    /// Wraps raw operations without checking their ids; see [`validate_transaction`].
    pub fn from_operations(id: TxnId, ops: Vec<Operation>) -> Self {
        Transaction { id, ops }
    }

    pub fn id(&self) -> TxnId {
        self.id
    }

    pub fn ops(&self) -> &[Operation] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn first(&self) -> Option<&Operation> {
        self.ops.first()
    }

    pub fn commit(&self) -> Option<&Operation> {
        self.ops.last().filter(|op| op.kind() == ActionKind::Commit)
    }

    pub fn operation(&self, id: OpId) -> Option<&Operation> {
        match id {
            OpId::Op { txn, index } if txn == self.id && index >= 1 => {
                self.ops.get(index as usize - 1).filter(|op| op.id == id)
            }
            _ => None,
        }
    }

    pub fn is_read_only(&self) -> bool {
        !self.ops.iter().any(Operation::is_write)
    }

    pub fn writes(&self) -> impl Iterator<Item = &Operation> {
        self.ops.iter().filter(|op| op.is_write())
    }

    pub fn reads(&self) -> impl Iterator<Item = &Operation> {
        self.ops.iter().filter(|op| op.is_read())
    }

    /// Returns a copy with a different id, renumbering operation ids.
    pub fn with_id(&self, id: TxnId) -> Transaction {
        Transaction::new(id, self.ops.iter().map(|op| op.action.clone()))
    }
}

/// Defect classes reported by [`validate_transaction`] and [`validate_schedule`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    MissingCommit,
    CommitNotLast,
    OperationIdMismatch,
    UnknownOperation,
    DuplicatePosition,
    MissingOperation,
    InitNotFirst,
    TransactionOrderViolated,
    InitNotFirstInVersionOrder,
    VersionOrderIncomplete,
    VersionOrderNonWrite,
    VersionOrderAgainstTransaction,
    UnmappedRead,
    VersionForNonRead,
    VersionWrongObject,
    VersionReadsFuture,
    IgnoresOwnWrite,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct ScheduleViolation {
    pub kind: ViolationKind,
    pub txn: Option<TxnId>,
    pub offenders: Vec<OpId>,
}

impl ScheduleViolation {
    fn new(kind: ViolationKind, txn: Option<TxnId>, offenders: Vec<OpId>) -> Self {
        ScheduleViolation { kind, txn, offenders }
    }
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.kind)?;
        if let Some(t) = self.txn {
            write!(f, " in {t}")?;
        }
        if !self.offenders.is_empty() {
            let list: Vec<String> = self.offenders.iter().map(|o| o.to_string()).collect();
            write!(f, " [{}]", list.join(", "))?;
        }
        Ok(())
    }
}

pub fn validate_transaction(t: &Transaction) -> Vec<ScheduleViolation> {
    let mut out = Vec::new();
    for (k, op) in t.ops.iter().enumerate() {
        if op.id != OpId::new(t.id, k as u32 + 1) {
            out.push(ScheduleViolation::new(ViolationKind::OperationIdMismatch, Some(t.id), vec![op.id]));
        }
    }
    let last = t.ops.len().checked_sub(1);
    let misplaced: Vec<OpId> = t
        .ops
        .iter()
        .enumerate()
        .filter(|(k, op)| op.kind() == ActionKind::Commit && Some(*k) != last)
        .map(|(_, op)| op.id)
        .collect();
    let ends_in_commit = t.commit().is_some();
    if !misplaced.is_empty() {
        for id in misplaced {
            out.push(ScheduleViolation::new(ViolationKind::CommitNotLast, Some(t.id), vec![id]));
        }
    } else if !ends_in_commit {
        out.push(ScheduleViolation::new(ViolationKind::MissingCommit, Some(t.id), vec![]));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Kind {
    Init,
    Read,
    Write,
    Commit,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Slot {
    pub id: OpId,
    /// Transaction slot, `NONE` for `Init`.
    pub txn: u32,
    pub kind: Kind,
    /// Object index, `NONE` for `Init` and commits.
    pub obj: u32,
    /// For reads: the last same-object write earlier in the same transaction.
    pub own_prior_write: u32,
}

/// Immutable dense layout of a transaction set, shared between schedules.
#[derive(Debug)]
pub(crate) struct TxnSet {
    pub txns: Vec<Transaction>,
    pub offsets: Vec<u32>,
    pub slots: Vec<Slot>,
    pub objects: Vec<ObjectId>,
    /// Per object: writes in dense (canonical) order.
    pub writes: Vec<Vec<u32>>,
    /// Per object: reads and writes in dense order.
    pub accesses: Vec<Vec<u32>>,
    pub first: Vec<u32>,
    pub commit: Vec<u32>,
}

impl PartialEq for TxnSet {
    fn eq(&self, other: &Self) -> bool {
        self.txns == other.txns
    }
}

impl TxnSet {
    pub fn new(mut txns: Vec<Transaction>) -> Result<Arc<TxnSet>> {
        txns.sort_by_key(|t| t.id);
        for w in txns.windows(2) {
            if w[0].id == w[1].id {
                return Err(Error::DuplicateTransaction(w[0].id));
            }
        }
        let mut objects: Vec<ObjectId> =
            txns.iter().flat_map(|t| t.ops.iter().filter_map(|o| o.object().cloned())).collect();
        objects.sort();
        objects.dedup();
        let obj_index = |o: &ObjectId| objects.binary_search(o).expect("collected above") as u32;

        let mut slots = vec![Slot { id: OpId::Init, txn: NONE, kind: Kind::Init, obj: NONE, own_prior_write: NONE }];
        let mut offsets = Vec::with_capacity(txns.len());
        let mut first = Vec::with_capacity(txns.len());
        let mut commit = Vec::with_capacity(txns.len());
        let mut writes = vec![Vec::new(); objects.len()];
        let mut accesses = vec![Vec::new(); objects.len()];
        for (k, t) in txns.iter().enumerate() {
            let base = slots.len() as u32;
            offsets.push(base);
            first.push(if t.ops.is_empty() { NONE } else { base });
            commit.push(if t.commit().is_some() { base + t.ops.len() as u32 - 1 } else { NONE });
            let mut last_write: BTreeMap<u32, u32> = BTreeMap::new();
            for (i, op) in t.ops.iter().enumerate() {
                let d = base + i as u32;
                let (kind, obj) = match &op.action {
                    Action::Read(o) => (Kind::Read, obj_index(o)),
                    Action::Write(o) => (Kind::Write, obj_index(o)),
                    Action::Commit => (Kind::Commit, NONE),
                };
                let own_prior_write = match kind {
                    Kind::Read => last_write.get(&obj).copied().unwrap_or(NONE),
                    _ => NONE,
                };
                if kind == Kind::Write {
                    last_write.insert(obj, d);
                    writes[obj as usize].push(d);
                }
                if obj != NONE {
                    accesses[obj as usize].push(d);
                }
                slots.push(Slot { id: OpId::new(t.id, i as u32 + 1), txn: k as u32, kind, obj, own_prior_write });
            }
        }
        Ok(Arc::new(TxnSet { txns, offsets, slots, objects, writes, accesses, first, commit }))
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn dense(&self, id: OpId) -> Option<u32> {
        match id {
            OpId::Init => Some(0),
            OpId::Op { txn, index } => {
                let k = self.slot_of(txn)?;
                let len = self.txns[k].ops.len() as u32;
                (index >= 1 && index <= len).then(|| self.offsets[k] + index - 1)
            }
        }
    }

    pub fn slot_of(&self, txn: TxnId) -> Option<usize> {
        self.txns.binary_search_by_key(&txn, |t| t.id).ok()
    }

    pub fn object_index(&self, obj: &ObjectId) -> Option<u32> {
        self.objects.binary_search(obj).ok().map(|i| i as u32)
    }

    pub fn ids(&self) -> Vec<TxnId> {
        self.txns.iter().map(|t| t.id).collect()
    }

    /// Dense ids of the operations of transaction slot `k`.
    pub fn ops_of(&self, k: usize) -> std::ops::Range<u32> {
        let base = self.offsets[k];
        base..base + self.txns[k].ops.len() as u32
    }

    pub fn operation(&self, d: u32) -> Option<&Operation> {
        let slot = self.slots.get(d as usize)?;
        if slot.txn == NONE {
            return None;
        }
        let t = &self.txns[slot.txn as usize];
        t.ops.get((d - self.offsets[slot.txn as usize]) as usize)
    }
}

/// A multiversion schedule over a set of transactions.
#[derive(Clone)]
pub struct Schedule {
    pub(crate) set: Arc<TxnSet>,
    /// Dense ids in schedule order, `Init` included.
    pub(crate) order: Vec<u32>,
    /// Position of each dense id in `order` (first occurrence), `NONE` if absent.
    pub(crate) pos: Vec<u32>,
    /// Per object index: version chain of dense ids, `Init` included.
    pub(crate) vorder: Vec<Vec<u32>>,
    /// Position of each write within its object's chain.
    pub(crate) vpos: Vec<u32>,
    /// Per object: position of `Init` within the chain.
    pub(crate) init_vpos: Vec<u32>,
    pub(crate) vf: Vec<u32>,
    /// Defects that the dense representation cannot express (unknown ids).
    pub(crate) defects: Vec<ScheduleViolation>,
}

impl PartialEq for Schedule {
    fn eq(&self, other: &Self) -> bool {
        *self.set == *other.set
            && self.order == other.order
            && self.vorder == other.vorder
            && self.vf == other.vf
            && self.defects == other.defects
    }
}

impl Eq for Schedule {}

impl fmt::Debug for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::cli::format::render_schedule(self))
    }
}

impl Schedule {
    /// Builds a schedule from explicit components. No validation happens here
    /// beyond rejecting duplicate transaction ids; see [`validate_schedule`].
    /// Objects without a version chain get the trivial chain `init`.
    pub fn new(
        txns: Vec<Transaction>,
        order: Vec<OpId>,
        vorder: BTreeMap<ObjectId, Vec<OpId>>,
        vf: BTreeMap<OpId, OpId>,
    ) -> Result<Schedule> {
        let set = TxnSet::new(txns)?;
        let mut defects = Vec::new();
        let unknown = |id: OpId, defects: &mut Vec<ScheduleViolation>| {
            defects.push(ScheduleViolation::new(ViolationKind::UnknownOperation, id.txn(), vec![id]));
        };

        let mut dense_order = Vec::with_capacity(order.len());
        for id in order {
            match set.dense(id) {
                Some(d) => dense_order.push(d),
                None => unknown(id, &mut defects),
            }
        }

        let mut chains = vec![vec![0u32]; set.objects.len()];
        for (obj, chain) in vorder {
            let dense_chain: Vec<u32> = chain
                .into_iter()
                .filter_map(|id| {
                    let d = set.dense(id);
                    if d.is_none() {
                        unknown(id, &mut defects);
                    }
                    d
                })
                .collect();
            match set.object_index(&obj) {
                Some(i) => chains[i as usize] = dense_chain,
                None => {
                    // Chains for objects no transaction touches may only hold `Init`.
                    let extra: Vec<OpId> =
                        dense_chain.iter().filter(|&&d| d != 0).map(|&d| set.slots[d as usize].id).collect();
                    if !extra.is_empty() {
                        defects.push(ScheduleViolation::new(ViolationKind::VersionOrderNonWrite, None, extra));
                    }
                }
            }
        }

        let mut dense_vf = vec![NONE; set.len()];
        for (read, version) in vf {
            match (set.dense(read), set.dense(version)) {
                (Some(r), Some(v)) => dense_vf[r as usize] = v,
                (None, _) => unknown(read, &mut defects),
                (_, None) => unknown(version, &mut defects),
            }
        }
        let mut s = Schedule::from_dense(set, dense_order, chains, dense_vf);
        s.defects = defects;
        Ok(s)
    }

    pub(crate) fn from_dense(set: Arc<TxnSet>, order: Vec<u32>, vorder: Vec<Vec<u32>>, vf: Vec<u32>) -> Schedule {
        let n = set.len();
        let mut pos = vec![NONE; n];
        for (p, &d) in order.iter().enumerate() {
            if pos[d as usize] == NONE {
                pos[d as usize] = p as u32;
            }
        }
        let mut vpos = vec![NONE; n];
        let mut init_vpos = vec![NONE; vorder.len()];
        for (obj, chain) in vorder.iter().enumerate() {
            for (p, &d) in chain.iter().enumerate() {
                if d == 0 {
                    if init_vpos[obj] == NONE {
                        init_vpos[obj] = p as u32;
                    }
                } else if set.slots[d as usize].obj == obj as u32 && vpos[d as usize] == NONE {
                    vpos[d as usize] = p as u32;
                }
            }
        }
        Schedule { set, order, pos, vorder, vpos, init_vpos, vf, defects: Vec::new() }
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.set.txns
    }

    pub fn transaction(&self, id: TxnId) -> Option<&Transaction> {
        self.set.slot_of(id).map(|k| &self.set.txns[k])
    }

    pub fn txn_ids(&self) -> Vec<TxnId> {
        self.set.ids()
    }

    pub fn operation(&self, id: OpId) -> Option<&Operation> {
        self.set.dense(id).and_then(|d| self.set.operation(d))
    }

    /// Every object read or written by some transaction, sorted.
    pub fn objects(&self) -> &[ObjectId] {
        &self.set.objects
    }

    pub fn order(&self) -> Vec<OpId> {
        self.order.iter().map(|&d| self.set.slots[d as usize].id).collect()
    }

    pub fn position(&self, id: OpId) -> Option<usize> {
        let d = self.set.dense(id)?;
        let p = self.pos[d as usize];
        (p != NONE).then_some(p as usize)
    }

    /// Version chain of `obj`, starting at `Init`. Unknown objects have the trivial chain.
    pub fn version_order(&self, obj: &ObjectId) -> Vec<OpId> {
        match self.set.object_index(obj) {
            Some(i) => self.vorder[i as usize].iter().map(|&d| self.set.slots[d as usize].id).collect(),
            None => vec![OpId::Init],
        }
    }

    pub fn version_orders(&self) -> BTreeMap<ObjectId, Vec<OpId>> {
        self.set.objects.iter().map(|o| (o.clone(), self.version_order(o))).collect()
    }

    pub fn version_of(&self, read: OpId) -> Option<OpId> {
        let d = self.set.dense(read)?;
        let v = self.vf[d as usize];
        (v != NONE).then(|| self.set.slots[v as usize].id)
    }

    pub fn version_function(&self) -> BTreeMap<OpId, OpId> {
        (0..self.set.len() as u32)
            .filter(|&d| self.vf[d as usize] != NONE)
            .map(|d| (self.set.slots[d as usize].id, self.set.slots[self.vf[d as usize] as usize].id))
            .collect()
    }

    pub fn first(&self, txn: TxnId) -> Option<OpId> {
        self.transaction(txn).and_then(|t| t.first()).map(|o| o.id)
    }

    pub fn commit(&self, txn: TxnId) -> Option<OpId> {
        self.transaction(txn).and_then(|t| t.commit()).map(|o| o.id)
    }

    pub fn op_count(&self) -> usize {
        self.set.len() - 1
    }

    // Dense helpers used across modules. `NONE` positions compare as +infinity.

    pub(crate) fn slot(&self, d: u32) -> &Slot {
        &self.set.slots[d as usize]
    }

    pub(crate) fn p(&self, d: u32) -> u32 {
        if d == NONE {
            NONE
        } else {
            self.pos[d as usize]
        }
    }

    /// Position of `d` in the version chain of `obj`.
    pub(crate) fn vp(&self, obj: u32, d: u32) -> u32 {
        if d == 0 {
            self.init_vpos[obj as usize]
        } else {
            self.vpos[d as usize]
        }
    }

    /// `a <<_s b` in the version order of `obj`.
    pub(crate) fn vbefore(&self, obj: u32, a: u32, b: u32) -> bool {
        let (pa, pb) = (self.vp(obj, a), self.vp(obj, b));
        pa != NONE && pb != NONE && pa < pb
    }

    pub(crate) fn commit_pos(&self, k: u32) -> u32 {
        self.p(self.set.commit[k as usize])
    }

    pub(crate) fn first_pos(&self, k: u32) -> u32 {
        self.p(self.set.first[k as usize])
    }

    /// Writer transaction slot of a version (`NONE` for `Init`).
    pub(crate) fn txn_of(&self, d: u32) -> u32 {
        self.set.slots[d as usize].txn
    }

    pub(crate) fn dense_or_err(&self, id: OpId) -> Result<u32> {
        self.set.dense(id).ok_or(Error::UnknownOperation(id))
    }

    pub(crate) fn slot_or_err(&self, id: TxnId) -> Result<u32> {
        self.set.slot_of(id).map(|k| k as u32).ok_or(Error::UnknownTransaction(id))
    }

    pub(crate) fn last_version_dense(&self, obj: u32) -> u32 {
        *self.vorder[obj as usize].last().unwrap_or(&0)
    }
}

/// Checks every well-formedness requirement on multiversion schedules.
///
/// Besides the per-transaction checks this reports: `Init` not first in the
/// order or in a version chain, transaction order not preserved, version
/// chains that are not exactly the object's writes, same-transaction writes
/// installed out of transaction order, unmapped reads, versions on the wrong
/// object or from the future, and reads that skip their own transaction's
/// preceding write.
pub fn validate_schedule(s: &Schedule) -> Vec<ScheduleViolation> {
    use ViolationKind::*;
    let set = &*s.set;
    let mut out: Vec<ScheduleViolation> = set.txns.iter().flat_map(validate_transaction).collect();
    out.extend(s.defects.iter().cloned());
    let v = |kind, txn: Option<TxnId>, offenders| ScheduleViolation::new(kind, txn, offenders);
    let id = |d: u32| set.slots[d as usize].id;

    // Order: a permutation of Init plus every operation, Init first.
    let mut seen = vec![0u32; set.len()];
    for &d in &s.order {
        seen[d as usize] += 1;
    }
    if s.order.first() != Some(&0) {
        out.push(v(InitNotFirst, None, vec![OpId::Init]));
    }
    for d in 0..set.len() as u32 {
        match seen[d as usize] {
            0 if d != 0 => out.push(v(MissingOperation, id(d).txn(), vec![id(d)])),
            0 => {}
            1 => {}
            _ => out.push(v(DuplicatePosition, id(d).txn(), vec![id(d)])),
        }
    }
    for k in 0..set.txns.len() {
        let ops = set.ops_of(k);
        for d in ops.clone().skip(1) {
            let (pa, pb) = (s.pos[d as usize - 1], s.pos[d as usize]);
            if pa != NONE && pb != NONE && pa > pb {
                out.push(v(TransactionOrderViolated, Some(set.txns[k].id), vec![id(d - 1), id(d)]));
            }
        }
    }

    // Version orders.
    for (obj, chain) in s.vorder.iter().enumerate() {
        if chain.first() != Some(&0) {
            out.push(v(InitNotFirstInVersionOrder, None, vec![OpId::Init]));
        }
        let mut count = vec![0u32; set.len()];
        for &d in chain {
            count[d as usize] += 1;
            let slot = &set.slots[d as usize];
            if d != 0 && !(slot.kind == Kind::Write && slot.obj == obj as u32) {
                out.push(v(VersionOrderNonWrite, slot.id.txn(), vec![slot.id]));
            }
        }
        let mut incomplete: Vec<OpId> =
            set.writes[obj].iter().filter(|&&w| count[w as usize] != 1).map(|&w| id(w)).collect();
        if count[0] > 1 {
            incomplete.push(OpId::Init);
        }
        if !incomplete.is_empty() {
            out.push(v(VersionOrderIncomplete, None, incomplete));
        }
        for k in 0..set.txns.len() {
            let own: Vec<u32> =
                set.writes[obj].iter().copied().filter(|&w| set.slots[w as usize].txn == k as u32).collect();
            for pair in own.windows(2) {
                let (pa, pb) = (s.vpos[pair[0] as usize], s.vpos[pair[1] as usize]);
                if pa != NONE && pb != NONE && pa > pb {
                    out.push(v(VersionOrderAgainstTransaction, Some(set.txns[k].id), vec![id(pair[0]), id(pair[1])]));
                }
            }
        }
    }

    // Version function.
    for d in 1..set.len() as u32 {
        let slot = set.slots[d as usize];
        let version = s.vf[d as usize];
        if slot.kind != Kind::Read {
            if version != NONE {
                out.push(v(VersionForNonRead, slot.id.txn(), vec![slot.id]));
            }
            continue;
        }
        if version == NONE {
            out.push(v(UnmappedRead, slot.id.txn(), vec![slot.id]));
            continue;
        }
        let target = set.slots[version as usize];
        if version != 0 && !(target.kind == Kind::Write && target.obj == slot.obj) {
            out.push(v(VersionWrongObject, slot.id.txn(), vec![slot.id, target.id]));
            continue;
        }
        let (pv, pr) = (s.p(version), s.p(d));
        if pv == NONE || pr == NONE || pv >= pr {
            out.push(v(VersionReadsFuture, slot.id.txn(), vec![slot.id, target.id]));
        }
        if slot.own_prior_write != NONE && version != slot.own_prior_write {
            out.push(v(IgnoresOwnWrite, slot.id.txn(), vec![slot.id, id(slot.own_prior_write)]));
        }
    }
    out
}

/// True iff the version order agrees with the schedule order and every read
/// observes the last write preceding it in the schedule order.
pub fn is_single_version(s: &Schedule) -> bool {
    let set = &*s.set;
    for (obj, writes) in set.writes.iter().enumerate() {
        for (i, &a) in writes.iter().enumerate() {
            for &b in &writes[i + 1..] {
                if s.vbefore(obj as u32, a, b) != (s.p(a) < s.p(b)) {
                    return false;
                }
            }
        }
    }
    for d in 1..set.len() as u32 {
        let slot = set.slots[d as usize];
        if slot.kind != Kind::Read {
            continue;
        }
        let (from, to) = (s.p(s.vf[d as usize]), s.p(d));
        let between = set.writes[slot.obj as usize].iter().any(|&c| {
            let pc = s.p(c);
            from < pc && pc < to
        });
        if between {
            return false;
        }
    }
    true
}

/// Single-version and no transaction is interleaved with another.
pub fn is_single_version_serial(s: &Schedule) -> bool {
    is_single_version(s) && is_non_interleaved(s)
}

pub(crate) fn is_non_interleaved(s: &Schedule) -> bool {
    let mut finished = vec![false; s.set.txns.len()];
    let mut current = NONE;
    for &d in &s.order {
        let k = s.txn_of(d);
        if k == NONE || k == current {
            continue;
        }
        if finished[k as usize] {
            return false;
        }
        if current != NONE {
            finished[current as usize] = true;
        }
        current = k;
    }
    true
}

/// Two transactions are concurrent when each starts before the other commits.
pub fn are_concurrent(s: &Schedule, ti: TxnId, tj: TxnId) -> Result<bool> {
    let (i, j) = (s.slot_or_err(ti)?, s.slot_or_err(tj)?);
    Ok(concurrent(s, i, j))
}

pub(crate) fn concurrent(s: &Schedule, i: u32, j: u32) -> bool {
    s.first_pos(i) < s.commit_pos(j) && s.first_pos(j) < s.commit_pos(i)
}

/// Splits `t` into the operations up to and including `b` and those strictly after it.
pub fn split(t: &Transaction, b: OpId) -> Result<(&[Operation], &[Operation])> {
    let at = t.ops.iter().position(|op| op.id == b).ok_or(Error::UnknownOperation(b))?;
    Ok(t.ops.split_at(at + 1))
}

/// The single-version serial schedule executing `txns` one after another.
pub fn serial_schedule(txns: &[Transaction]) -> Result<Schedule> {
    let set = TxnSet::new(txns.to_vec())?;
    let mut order = Vec::with_capacity(set.len());
    order.push(0);
    for t in txns {
        let k = set.slot_of(t.id).expect("present");
        order.extend(set.ops_of(k));
    }
    Ok(single_version_completion(set, order))
}

/// Version order following the schedule order; every read observes the most
/// recent preceding write.
pub(crate) fn single_version_completion(set: Arc<TxnSet>, order: Vec<u32>) -> Schedule {
    let mut vorder = vec![vec![0u32]; set.objects.len()];
    let mut vf = vec![NONE; set.len()];
    let mut latest = vec![0u32; set.objects.len()];
    for &d in &order {
        let slot = set.slots[d as usize];
        match slot.kind {
            Kind::Write => {
                vorder[slot.obj as usize].push(d);
                latest[slot.obj as usize] = d;
            }
            Kind::Read => vf[d as usize] = latest[slot.obj as usize],
            _ => {}
        }
    }
    Schedule::from_dense(set, order, vorder, vf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, txn};

    #[test]
    fn transaction_validation() {
        assert!(validate_transaction(&txn(4, "R(t) W(t) R(v) C")).is_empty());

        let no_commit = txn(1, "R(t) W(t)");
        let kinds: Vec<_> = validate_transaction(&no_commit).into_iter().map(|v| v.kind).collect();
        assert_eq!(kinds, vec![ViolationKind::MissingCommit]);

        let early = Transaction::new(
            TxnId(1),
            vec![Action::Commit, Action::Read(ObjectId::new("t")), Action::Write(ObjectId::new("t"))],
        );
        let kinds: Vec<_> = validate_transaction(&early).into_iter().map(|v| v.kind).collect();
        assert_eq!(kinds, vec![ViolationKind::CommitNotLast]);

        let empty = Transaction::new(TxnId(9), vec![]);
        assert_eq!(validate_transaction(&empty)[0].kind, ViolationKind::MissingCommit);

        let commit_only = txn(3, "C");
        assert!(validate_transaction(&commit_only).is_empty());
    }

    #[test]
    fn mismatched_ids_are_reported() {
        let t = Transaction::from_operations(
            TxnId(1),
            vec![
                Operation { id: OpId::new(TxnId(2), 1), action: Action::Read(ObjectId::new("t")) },
                Operation { id: OpId::new(TxnId(1), 3), action: Action::Commit },
            ],
        );
        let v = validate_transaction(&t);
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|v| v.kind == ViolationKind::OperationIdMismatch));
    }

    #[test]
    fn figure_schedules_are_well_formed() {
        for s in [fixtures::s1(), fixtures::s2(), fixtures::s3(), fixtures::s4(), fixtures::sd()] {
            assert_eq!(validate_schedule(&s), vec![], "{s:?}");
        }
    }

    #[test]
    fn reading_a_later_write_is_rejected() {
        let s2 = fixtures::s2();
        let mut vf = s2.version_function();
        vf.insert(OpId::new(TxnId(1), 2), OpId::new(TxnId(1), 3));
        let bad = Schedule::new(s2.transactions().to_vec(), s2.order(), s2.version_orders(), vf).unwrap();
        let kinds: Vec<_> = validate_schedule(&bad).into_iter().map(|v| v.kind).collect();
        assert_eq!(kinds, vec![ViolationKind::VersionReadsFuture]);
    }

    #[test]
    fn commit_incompatible_version_order_is_still_well_formed() {
        // W4(t) installed before W2(t) although T2 commits first.
        let s1 = fixtures::s1();
        let mut vorder = s1.version_orders();
        let t = ObjectId::new("t");
        vorder.insert(t, vec![OpId::Init, OpId::new(TxnId(4), 2), OpId::new(TxnId(2), 1)]);
        let s = Schedule::new(s1.transactions().to_vec(), s1.order(), vorder, s1.version_function()).unwrap();
        assert!(validate_schedule(&s).is_empty());
    }

    #[test]
    fn structural_defects() {
        let s1 = fixtures::s1();
        let mut order = s1.order();
        order.retain(|o| *o != OpId::new(TxnId(3), 2));
        order.push(OpId::new(TxnId(7), 1));
        order.push(OpId::new(TxnId(1), 1));
        let mut vf = s1.version_function();
        vf.remove(&OpId::new(TxnId(1), 1));
        let s = Schedule::new(s1.transactions().to_vec(), order, s1.version_orders(), vf).unwrap();
        let kinds: Vec<_> = validate_schedule(&s).into_iter().map(|v| v.kind).collect();
        for k in [
            ViolationKind::UnknownOperation,
            ViolationKind::MissingOperation,
            ViolationKind::DuplicatePosition,
            ViolationKind::UnmappedRead,
        ] {
            assert!(kinds.contains(&k), "{k:?} missing from {kinds:?}");
        }
    }

    #[test]
    fn own_write_must_be_observed() {
        let t = txn(1, "W(t) R(t) C");
        let s = serial_schedule(std::slice::from_ref(&t)).unwrap();
        assert!(validate_schedule(&s).is_empty());
        let mut vf = BTreeMap::new();
        vf.insert(OpId::new(TxnId(1), 2), OpId::Init);
        let skipped = Schedule::new(vec![t], s.order(), s.version_orders(), vf).unwrap();
        let kinds: Vec<_> = validate_schedule(&skipped).into_iter().map(|v| v.kind).collect();
        assert_eq!(kinds, vec![ViolationKind::IgnoresOwnWrite]);
    }

    #[test]
    fn single_version_checks() {
        let txns = fixtures::fig2_workload().txns;
        let serial = serial_schedule(&txns).unwrap();
        assert!(is_single_version(&serial));
        assert!(is_single_version_serial(&serial));
        assert!(!is_single_version(&fixtures::s1()));
        // Every clause holds for s2: vorder follows order and R1(t) sees no intervening write.
        assert!(is_single_version(&fixtures::s2()));
        assert!(!is_single_version_serial(&fixtures::s2()));
        let single = serial_schedule(&[txn(1, "R(t) C")]).unwrap();
        assert!(is_single_version_serial(&single));
        let empty = serial_schedule(&[]).unwrap();
        assert!(is_single_version_serial(&empty));
        assert!(validate_schedule(&empty).is_empty());
        assert_eq!(empty.order(), vec![OpId::Init]);
    }

    #[test]
    fn concurrency_in_s1() {
        let s1 = fixtures::s1();
        let c = |i, j| are_concurrent(&s1, TxnId(i), TxnId(j)).unwrap();
        assert!(c(1, 2));
        assert!(c(1, 4));
        assert!(!c(1, 3));
        assert!(c(2, 3) && c(2, 4) && c(3, 4));
        let serial = serial_schedule(s1.transactions()).unwrap();
        for i in 1..=4 {
            for j in 1..=4 {
                if i != j {
                    assert!(!are_concurrent(&serial, TxnId(i), TxnId(j)).unwrap());
                }
            }
        }
    }

    #[test]
    fn split_points() {
        let s2 = fixtures::s2();
        let t1 = s2.transaction(TxnId(1)).unwrap();
        let (pre, post) = split(t1, OpId::new(TxnId(1), 2)).unwrap();
        assert_eq!(pre.iter().map(|o| o.to_string()).collect::<Vec<_>>(), ["W1(v)", "R1(t)"]);
        assert_eq!(post.iter().map(|o| o.to_string()).collect::<Vec<_>>(), ["W1(t)", "C1"]);
        let (pre, post) = split(t1, OpId::new(TxnId(1), 4)).unwrap();
        assert_eq!((pre.len(), post.len()), (4, 0));
        let (pre, post) = split(t1, OpId::new(TxnId(1), 1)).unwrap();
        assert_eq!((pre.len(), post.len()), (1, 3));
        assert_eq!(split(t1, OpId::new(TxnId(2), 1)), Err(Error::UnknownOperation(OpId::new(TxnId(2), 1))));
    }

    #[test]
    fn serial_schedule_versions() {
        let txns = fixtures::fig2_workload().txns;
        let s = serial_schedule(&txns).unwrap();
        assert_eq!(s.version_of(OpId::new(TxnId(1), 2)), Some(OpId::Init));
        let t = ObjectId::new("t");
        let v = ObjectId::new("v");
        assert_eq!(s.version_order(&t).last(), Some(&OpId::new(TxnId(3), 1)));
        assert_eq!(s.version_order(&v).last(), Some(&OpId::new(TxnId(3), 2)));

        let reordered = serial_schedule(&[txns[1].clone(), txns[2].clone(), txns[0].clone()]).unwrap();
        assert_eq!(reordered.version_of(OpId::new(TxnId(1), 2)), Some(OpId::new(TxnId(3), 1)));
    }

    #[test]
    fn duplicate_transactions_are_rejected() {
        let t = txn(1, "R(t) C");
        assert_eq!(serial_schedule(&[t.clone(), t]).unwrap_err(), Error::DuplicateTransaction(TxnId(1)));
    }
}
