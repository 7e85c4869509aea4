//! Conflicts, dependencies, serialization graphs and the two serializability notions.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Limit, Result};
use crate::schedule::{Kind, ObjectId, OpId, Operation, Schedule, TxnId, NONE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConflictKind {
    WW,
    WR,
    RW,
}

/// `to` depends on `from`. The kind names the action pair (from, to).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DependencyEdge {
    pub from: OpId,
    pub to: OpId,
    pub kind: ConflictKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SerializationGraph {
    pub nodes: Vec<TxnId>,
    /// Keyed by (from, to); each entry lists every witnessing dependency.
    pub edges: BTreeMap<(TxnId, TxnId), Vec<DependencyEdge>>,
}

impl SerializationGraph {
    pub fn has_edge(&self, from: TxnId, to: TxnId) -> bool {
        self.edges.contains_key(&(from, to))
    }

    pub fn edge_pairs(&self) -> Vec<(TxnId, TxnId)> {
        self.edges.keys().copied().collect()
    }

    pub fn successors(&self, from: TxnId) -> impl Iterator<Item = TxnId> + '_ {
        self.edges.range((from, TxnId(0))..=(from, TxnId(u32::MAX))).map(|(&(_, to), _)| to)
    }

    pub fn is_acyclic(&self) -> bool {
        shortest_cycle(&self.nodes, |a, b| self.has_edge(a, b)).is_none()
    }
}

pub fn conflicting(b: &Operation, a: &Operation) -> Option<ConflictKind> {
    let (tb, ta) = (b.id.txn()?, a.id.txn()?);
    if tb == ta || b.object()? != a.object()? {
        return None;
    }
    match (b.is_write(), a.is_write()) {
        (true, true) => Some(ConflictKind::WW),
        (true, false) => Some(ConflictKind::WR),
        (false, true) => Some(ConflictKind::RW),
        (false, false) => None,
    }
}

pub fn depends_on(s: &Schedule, b: OpId, a: OpId) -> Result<Option<DependencyEdge>> {
    let (db, da) = (s.dense_or_err(b)?, s.dense_or_err(a)?);
    Ok(dep_kind(s, db, da).map(|kind| DependencyEdge { from: b, to: a, kind }))
}

/// Dependency of dense operation `a` on dense operation `b`, if any.
pub(crate) fn dep_kind(s: &Schedule, b: u32, a: u32) -> Option<ConflictKind> {
    let (sb, sa) = (s.slot(b), s.slot(a));
    if sb.txn == NONE || sa.txn == NONE || sb.txn == sa.txn || sb.obj == NONE || sb.obj != sa.obj {
        return None;
    }
    let obj = sb.obj;
    match (sb.kind, sa.kind) {
        (Kind::Write, Kind::Write) => s.vbefore(obj, b, a).then_some(ConflictKind::WW),
        (Kind::Write, Kind::Read) => {
            let v = s.vf[a as usize];
            (v != NONE && (v == b || s.vbefore(obj, b, v))).then_some(ConflictKind::WR)
        }
        (Kind::Read, Kind::Write) => {
            let v = s.vf[b as usize];
            (v != NONE && s.vbefore(obj, v, a)).then_some(ConflictKind::RW)
        }
        _ => None,
    }
}

/// Calls `f(b, a, kind)` for every dependency, object by object in dense order.
pub(crate) fn for_each_dependency(s: &Schedule, mut f: impl FnMut(u32, u32, ConflictKind)) {
    for accesses in &s.set.accesses {
        for &b in accesses {
            for &a in accesses {
                if let Some(kind) = dep_kind(s, b, a) {
                    f(b, a, kind);
                }
            }
        }
    }
}

/// Adjacency matrix over transaction slots.
pub(crate) fn dense_graph(s: &Schedule) -> Vec<Vec<bool>> {
    let n = s.set.txns.len();
    let mut adj = vec![vec![false; n]; n];
    for accesses in &s.set.accesses {
        for &b in accesses {
            for &a in accesses {
                let (tb, ta) = (s.txn_of(b) as usize, s.txn_of(a) as usize);
                if tb != ta && !adj[tb][ta] && dep_kind(s, b, a).is_some() {
                    adj[tb][ta] = true;
                }
            }
        }
    }
    adj
}

pub(crate) fn dense_acyclic(adj: &[Vec<bool>]) -> bool {
    let n = adj.len();
    let mut indegree = vec![0usize; n];
    for row in adj {
        for (j, &e) in row.iter().enumerate() {
            indegree[j] += e as usize;
        }
    }
    let mut stack: Vec<usize> = (0..n).filter(|&j| indegree[j] == 0).collect();
    let mut seen = 0;
    while let Some(i) = stack.pop() {
        seen += 1;
        for j in 0..n {
            if adj[i][j] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    stack.push(j);
                }
            }
        }
    }
    seen == n
}

pub fn serialization_graph(s: &Schedule) -> SerializationGraph {
    let mut edges: BTreeMap<(TxnId, TxnId), Vec<DependencyEdge>> = BTreeMap::new();
    for_each_dependency(s, |b, a, kind| {
        let (from, to) = (s.slot(b).id, s.slot(a).id);
        let key = (from.txn().expect("txn op"), to.txn().expect("txn op"));
        edges.entry(key).or_default().push(DependencyEdge { from, to, kind });
    });
    for witnesses in edges.values_mut() {
        witnesses.sort();
    }
    SerializationGraph { nodes: s.txn_ids(), edges }
}

/// Shortest cycle, preferring the smallest starting node on ties. The cycle
/// starts at its smallest node.
pub(crate) fn shortest_cycle<N: Copy + Ord>(nodes: &[N], edge: impl Fn(N, N) -> bool) -> Option<Vec<N>> {
    let mut nodes = nodes.to_vec();
    nodes.sort();
    let mut best: Option<Vec<N>> = None;
    for si in 0..nodes.len() {
        let allowed = &nodes[si..];
        // BFS over nodes >= start; parent indices into `allowed`.
        let mut parent = vec![usize::MAX; allowed.len()];
        let mut queue = VecDeque::from([0usize]);
        parent[0] = 0;
        let mut found = None;
        'bfs: while let Some(u) = queue.pop_front() {
            for v in 0..allowed.len() {
                if !edge(allowed[u], allowed[v]) {
                    continue;
                }
                if v == 0 {
                    found = Some(u);
                    break 'bfs;
                }
                if parent[v] == usize::MAX {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if let Some(mut u) = found {
            let mut path = vec![allowed[u]];
            while u != 0 {
                u = parent[u];
                path.push(allowed[u]);
            }
            path.reverse();
            if best.as_ref().is_none_or(|b| path.len() < b.len()) {
                best = Some(path);
            }
        }
    }
    best
}

/// Serializable iff the serialization graph is acyclic; otherwise returns a
/// shortest witnessing cycle.
pub fn is_conflict_serializable(s: &Schedule) -> (bool, Option<Vec<TxnId>>) {
    let adj = dense_graph(s);
    if dense_acyclic(&adj) {
        return (true, None);
    }
    let n = adj.len();
    let slots: Vec<usize> = (0..n).collect();
    let cycle = shortest_cycle(&slots, |a, b| adj[a][b]).expect("cyclic graph");
    let ids = cycle.into_iter().map(|k| s.set.txns[k].id()).collect();
    (false, Some(ids))
}

fn same_transactions(s: &Schedule, s2: &Schedule) -> Result<()> {
    if *s.set == *s2.set {
        Ok(())
    } else {
        Err(Error::TransactionSetMismatch)
    }
}

pub fn conflict_equivalent(s: &Schedule, s2: &Schedule) -> Result<bool> {
    same_transactions(s, s2)?;
    for accesses in &s.set.accesses {
        for &b in accesses {
            for &a in accesses {
                if dep_kind(s, b, a).is_some() != dep_kind(s2, b, a).is_some() {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// The write installing the last version of `t`.
pub fn last_version(s: &Schedule, t: &ObjectId) -> Result<OpId> {
    let obj = s.set.object_index(t).ok_or_else(|| Error::ObjectNeverWritten(t.clone()))?;
    if s.set.writes[obj as usize].is_empty() {
        return Err(Error::ObjectNeverWritten(t.clone()));
    }
    Ok(s.slot(s.last_version_dense(obj)).id)
}

pub fn view_equivalent(s: &Schedule, s2: &Schedule) -> Result<bool> {
    same_transactions(s, s2)?;
    Ok(view_equivalent_dense(s, s2))
}

pub(crate) fn view_equivalent_dense(s: &Schedule, s2: &Schedule) -> bool {
    let set = &*s.set;
    let reads_agree = (1..set.len()).filter(|&d| set.slots[d].kind == Kind::Read).all(|d| s.vf[d] == s2.vf[d]);
    reads_agree
        && (0..set.objects.len() as u32)
            .filter(|&o| !set.writes[o as usize].is_empty())
            .all(|o| s.last_version_dense(o) == s2.last_version_dense(o))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ViewLimits {
    pub max_txns: usize,
    pub max_ops: usize,
}

impl Default for ViewLimits {
    fn default() -> Self {
        ViewLimits { max_txns: 8, max_ops: 24 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ViewWitness {
    pub verdict: bool,
    pub witness: Option<Vec<TxnId>>,
    /// Serial orders examined, counting pruned branches in full.
    pub exhausted: u64,
}

/// Searches serial orders in lexicographic order of transaction ids for one
/// whose single-version serial schedule is view-equivalent to `s`.
pub fn is_view_serializable(s: &Schedule, limits: ViewLimits) -> Result<ViewWitness> {
    let n = s.set.txns.len();
    if n > limits.max_txns {
        return Err(Error::limit(Limit::Transactions, limits.max_txns, n));
    }
    if s.op_count() > limits.max_ops {
        return Err(Error::limit(Limit::Operations, limits.max_ops, s.op_count()));
    }
    Ok(view_search(s))
}

pub(crate) fn view_search(s: &Schedule) -> ViewWitness {
    let set = &*s.set;
    let n = set.txns.len();
    let objects = set.objects.len();
    // For each transaction: reads observing another transaction's version, and the
    // last write per object (what it installs for later transactions).
    let mut foreign_reads: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n];
    let mut installs: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n];
    let mut impossible = false;
    for k in 0..n {
        let mut last: BTreeMap<u32, u32> = BTreeMap::new();
        for d in set.ops_of(k) {
            let slot = set.slots[d as usize];
            match slot.kind {
                Kind::Read if slot.own_prior_write == NONE => {
                    foreign_reads[k].push((slot.obj, s.vf[d as usize]));
                }
                Kind::Read => impossible |= s.vf[d as usize] != slot.own_prior_write,
                Kind::Write => {
                    last.insert(slot.obj, d);
                }
                _ => {}
            }
        }
        installs[k] = last.into_iter().collect();
    }
    let final_writer: Vec<u32> = (0..objects as u32)
        .map(|o| if set.writes[o as usize].is_empty() { NONE } else { s.txn_of(s.last_version_dense(o)) })
        .collect();
    let final_version: Vec<u32> = (0..objects as u32).map(|o| s.last_version_dense(o)).collect();

    let total = factorial(n);
    if impossible {
        return ViewWitness { verdict: false, witness: None, exhausted: total };
    }

    struct Search<'a> {
        n: usize,
        foreign_reads: &'a [Vec<(u32, u32)>],
        installs: &'a [Vec<(u32, u32)>],
        final_writer: &'a [u32],
        final_version: &'a [u32],
        latest: Vec<u32>,
        placed: Vec<bool>,
        prefix: Vec<usize>,
        examined: u64,
    }

    impl Search<'_> {
        fn fits(&self, k: usize) -> bool {
            self.foreign_reads[k].iter().all(|&(o, v)| self.latest[o as usize] == v)
                && self.installs[k].iter().all(|&(o, w)| {
                    let fw = self.final_writer[o as usize];
                    // Once the final writer is placed nobody may overwrite it, and
                    // the final writer must install exactly the final version.
                    (fw == NONE || !self.placed[fw as usize]) && (fw != k as u32 || w == self.final_version[o as usize])
                })
        }

        fn run(&mut self) -> bool {
            let depth = self.prefix.len();
            if depth == self.n {
                self.examined += 1;
                return true;
            }
            for k in 0..self.n {
                if self.placed[k] {
                    continue;
                }
                if !self.fits(k) {
                    self.examined += factorial(self.n - depth - 1);
                    continue;
                }
                let saved: Vec<(u32, u32)> =
                    self.installs[k].iter().map(|&(o, _)| (o, self.latest[o as usize])).collect();
                for &(o, w) in &self.installs[k] {
                    self.latest[o as usize] = w;
                }
                self.placed[k] = true;
                self.prefix.push(k);
                if self.run() {
                    return true;
                }
                self.prefix.pop();
                self.placed[k] = false;
                for (o, w) in saved {
                    self.latest[o as usize] = w;
                }
            }
            false
        }
    }

    let mut search = Search {
        n,
        foreign_reads: &foreign_reads,
        installs: &installs,
        final_writer: &final_writer,
        final_version: &final_version,
        latest: vec![0; objects],
        placed: vec![false; n],
        prefix: Vec::with_capacity(n),
        examined: 0,
    };
    if search.run() {
        let witness = search.prefix.iter().map(|&k| set.txns[k].id()).collect();
        ViewWitness { verdict: true, witness: Some(witness), exhausted: search.examined }
    } else {
        ViewWitness { verdict: false, witness: None, exhausted: total }
    }
}

pub(crate) fn factorial(n: usize) -> u64 {
    (1..=n as u64).fold(1u64, |acc, k| acc.saturating_mul(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::schedule::serial_schedule;

    fn op(t: u32, i: u32) -> OpId {
        OpId::new(TxnId(t), i)
    }

    fn pairs(g: &SerializationGraph) -> Vec<(u32, u32)> {
        g.edge_pairs().into_iter().map(|(a, b)| (a.0, b.0)).collect()
    }

    #[test]
    fn conflicts() {
        let s1 = fixtures::s1();
        let o = |t, i| s1.operation(op(t, i)).unwrap();
        assert_eq!(conflicting(o(2, 1), o(1, 1)), Some(ConflictKind::WR));
        assert_eq!(conflicting(o(1, 1), o(4, 1)), None);
        assert_eq!(conflicting(o(2, 3), o(4, 2)), None);
        assert_eq!(conflicting(o(4, 1), o(4, 2)), None);
    }

    #[test]
    fn dependencies_in_s1() {
        let s1 = fixtures::s1();
        assert_eq!(depends_on(&s1, op(2, 1), op(4, 2)).unwrap().unwrap().kind, ConflictKind::WW);
        assert_eq!(depends_on(&s1, op(3, 1), op(4, 3)).unwrap().unwrap().kind, ConflictKind::WR);
        assert_eq!(depends_on(&s1, op(4, 1), op(2, 1)).unwrap().unwrap().kind, ConflictKind::RW);
        assert_eq!(depends_on(&s1, op(2, 1), op(4, 1)).unwrap(), None);
        assert_eq!(depends_on(&s1, op(9, 1), op(4, 1)), Err(Error::UnknownOperation(op(9, 1))));
    }

    #[test]
    fn figure_graphs() {
        let g1 = serialization_graph(&fixtures::s1());
        assert_eq!(pairs(&g1), vec![(1, 2), (1, 4), (2, 3), (2, 4), (3, 4), (4, 2)]);
        let g2 = serialization_graph(&fixtures::s2());
        assert_eq!(pairs(&g2), vec![(1, 2), (1, 3), (2, 1), (2, 3)]);
        let disjoint = serial_schedule(&[fixtures::txn(1, "W(t) C"), fixtures::txn(2, "W(v) C")]).unwrap();
        assert!(serialization_graph(&disjoint).edges.is_empty());
    }

    #[test]
    fn conflict_serializability() {
        assert_eq!(is_conflict_serializable(&fixtures::s1()), (false, Some(vec![TxnId(2), TxnId(4)])));
        assert_eq!(is_conflict_serializable(&fixtures::s2()), (false, Some(vec![TxnId(1), TxnId(2)])));
        let serial = serial_schedule(&fixtures::fig2_workload().txns).unwrap();
        assert_eq!(is_conflict_serializable(&serial), (true, None));
    }

    #[test]
    fn shortest_cycle_prefers_short_then_small() {
        let edges = [(1, 2), (2, 3), (3, 1), (4, 5), (5, 4)];
        let cycle = shortest_cycle(&[1, 2, 3, 4, 5], |a, b| edges.contains(&(a, b)));
        assert_eq!(cycle, Some(vec![4, 5]));
        let cycle = shortest_cycle(&[1, 2, 3], |a, b| edges.contains(&(a, b)));
        assert_eq!(cycle, Some(vec![1, 2, 3]));
    }

    #[test]
    fn equivalences() {
        let s2 = fixtures::s2();
        let txns = s2.transactions().to_vec();
        let serial = serial_schedule(&txns).unwrap();
        assert!(conflict_equivalent(&s2, &s2).unwrap());
        assert!(!conflict_equivalent(&s2, &serial).unwrap());
        assert!(view_equivalent(&s2, &serial).unwrap());
        let s4 = fixtures::s4();
        let t = |i: usize| txns[i].clone();
        assert!(view_equivalent(&s4, &serial_schedule(&[t(1), t(2), t(0)]).unwrap()).unwrap());
        assert_eq!(view_equivalent(&s2, &fixtures::s3()), Err(Error::TransactionSetMismatch));
    }

    #[test]
    fn last_versions() {
        assert_eq!(last_version(&fixtures::s1(), &ObjectId::new("t")).unwrap(), op(4, 2));
        assert_eq!(last_version(&fixtures::s2(), &ObjectId::new("v")).unwrap(), op(3, 2));
        assert_eq!(last_version(&fixtures::s1(), &ObjectId::new("v")).unwrap(), op(3, 1));
        assert_eq!(
            last_version(&fixtures::s1(), &ObjectId::new("q")),
            Err(Error::ObjectNeverWritten(ObjectId::new("q")))
        );
        let read_only = serial_schedule(&[fixtures::txn(1, "R(q) C")]).unwrap();
        assert!(last_version(&read_only, &ObjectId::new("q")).is_err());
    }

    #[test]
    fn view_serializability_of_figures() {
        let lim = ViewLimits::default();
        let w = is_view_serializable(&fixtures::s2(), lim).unwrap();
        assert_eq!((w.verdict, w.witness), (true, Some(vec![TxnId(1), TxnId(2), TxnId(3)])));
        assert_eq!(w.exhausted, 1);
        let w = is_view_serializable(&fixtures::s3(), lim).unwrap();
        assert_eq!((w.verdict, w.exhausted), (false, 2));
        let w = is_view_serializable(&fixtures::s1(), lim).unwrap();
        assert_eq!((w.verdict, w.exhausted), (false, 24));
        let w = is_view_serializable(&fixtures::s4(), lim).unwrap();
        assert_eq!(w.witness, Some(vec![TxnId(2), TxnId(3), TxnId(1)]));
        // Rank of T2 T3 T1 among the six orders is 4.
        assert_eq!(w.exhausted, 4);
    }

    #[test]
    fn view_limits() {
        let tight = ViewLimits { max_txns: 2, max_ops: 24 };
        assert!(matches!(
            is_view_serializable(&fixtures::s2(), tight),
            Err(Error::LimitExceeded { limit: Limit::Transactions, bound: 2, needed: 3 })
        ));
        let tight = ViewLimits { max_txns: 8, max_ops: 5 };
        assert!(matches!(
            is_view_serializable(&fixtures::s2(), tight),
            Err(Error::LimitExceeded { limit: Limit::Operations, .. })
        ));
    }
}
