//! Polygraphs, a brute-force acyclicity test, and the reduction that turns a
//! polygraph into a schedule of RC- and SI-admissible transactions which is
//! view-serializable exactly when the polygraph is acyclic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Limit, Result};
use crate::isolation::{
    allowed_under_rc, allowed_under_si, commit_order_ok, forced_completion_dense, read_last_committed_at,
};
use crate::schedule::{concurrent, validate_schedule, Action, Kind, ObjectId, Schedule, Transaction, TxnId, TxnSet};
use crate::serializability::{is_view_serializable, ViewLimits};

pub type Edge = (String, String);
pub type Choice = (String, String, String);

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Polygraph {
    pub nodes: BTreeSet<String>,
    pub arcs: BTreeSet<Edge>,
    pub choices: BTreeSet<Choice>,
}

impl Polygraph {
    pub fn new(
        nodes: impl IntoIterator<Item = impl Into<String>>,
        arcs: impl IntoIterator<Item = (impl Into<String>, impl Into<String>)>,
        choices: impl IntoIterator<Item = (impl Into<String>, impl Into<String>, impl Into<String>)>,
    ) -> Self {
        Polygraph {
            nodes: nodes.into_iter().map(Into::into).collect(),
            arcs: arcs.into_iter().map(|(a, b)| (a.into(), b.into())).collect(),
            choices: choices.into_iter().map(|(a, b, c)| (a.into(), b.into(), c.into())).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolygraphViolationKind {
    /// Nodes are plain identifiers so they can name objects.
    BadNodeName,
    UnknownNode,
    SelfLoop,
    RepeatedChoiceNode,
    MissingChoiceArc,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PolygraphViolation {
    pub kind: PolygraphViolationKind,
    pub detail: String,
}

impl fmt::Display for PolygraphViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.detail)
    }
}

pub(crate) fn valid_node_name(n: &str) -> bool {
    !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn validate_polygraph(p: &Polygraph) -> Vec<PolygraphViolation> {
    use PolygraphViolationKind::*;
    let mut out = Vec::new();
    let mut v = |kind, detail: String| out.push(PolygraphViolation { kind, detail });
    for n in &p.nodes {
        if !valid_node_name(n) {
            v(BadNodeName, format!("`{n}`"));
        }
    }
    for (a, b) in &p.arcs {
        for n in [a, b] {
            if !p.nodes.contains(n) {
                v(UnknownNode, format!("arc {a} -> {b} mentions {n}"));
            }
        }
        if a == b {
            v(SelfLoop, format!("arc {a} -> {b}"));
        }
    }
    for (x, y, z) in &p.choices {
        for n in [x, y, z] {
            if !p.nodes.contains(n) {
                v(UnknownNode, format!("choice ({x}, {y}, {z}) mentions {n}"));
            }
        }
        if x == y || y == z || x == z {
            v(RepeatedChoiceNode, format!("choice ({x}, {y}, {z})"));
        }
        if !p.arcs.contains(&(z.clone(), x.clone())) {
            v(MissingChoiceArc, format!("choice ({x}, {y}, {z}) needs arc {z} -> {x}"));
        }
    }
    out
}

fn check(p: &Polygraph) -> Result<()> {
    match validate_polygraph(p).first() {
        Some(v) => Err(Error::InvalidPolygraph(v.to_string())),
        None => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CompatibilityWitness {
    /// One resolved edge per choice, in choice order.
    pub extra_edges: Vec<Edge>,
    pub full_graph: BTreeSet<Edge>,
}

fn acyclic(nodes: &BTreeSet<String>, edges: &BTreeSet<Edge>) -> bool {
    let index: BTreeMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let n = nodes.len();
    let mut adj = vec![vec![false; n]; n];
    for (a, b) in edges {
        adj[index[a.as_str()]][index[b.as_str()]] = true;
    }
    crate::serializability::dense_acyclic(&adj)
}

pub const DEFAULT_MAX_CHOICES: usize = 20;

/// Tries all `2^|C|` resolutions, bit `i` clear picking `(u, v)` for the
/// `i`-th choice and set picking `(v, w)`. Returns the first acyclic one.
pub fn is_acyclic_polygraph(p: &Polygraph, max_choices: usize) -> Result<(bool, Option<CompatibilityWitness>)> {
    check(p)?;
    if p.choices.len() > max_choices {
        return Err(Error::limit(Limit::Choices, max_choices, p.choices.len()));
    }
    let choices: Vec<&Choice> = p.choices.iter().collect();
    for mask in 0u64..1 << choices.len() {
        let extra: Vec<Edge> = choices
            .iter()
            .enumerate()
            .map(|(i, (u, v, w))| if mask >> i & 1 == 0 { (u.clone(), v.clone()) } else { (v.clone(), w.clone()) })
            .collect();
        let mut full = p.arcs.clone();
        full.extend(extra.iter().cloned());
        if acyclic(&p.nodes, &full) {
            return Ok((true, Some(CompatibilityWitness { extra_edges: extra, full_graph: full })));
        }
    }
    Ok((false, None))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reduction {
    pub schedule: Schedule,
    pub node_txns: BTreeMap<String, TxnId>,
    /// The initial and final writer of each choice object.
    pub choice_txns: BTreeMap<Choice, (TxnId, TxnId)>,
}

impl Reduction {
    pub fn transactions(&self) -> &[Transaction] {
        self.schedule.transactions()
    }
}

pub fn arc_object(w: &str, u: &str) -> ObjectId {
    ObjectId::new(format!("arc:{w}->{u}"))
}

pub fn choice_object((u, v, w): &Choice) -> ObjectId {
    ObjectId::new(format!("choice:{u},{v},{w}"))
}

fn node_actions(p: &Polygraph, n: &str) -> Vec<Action> {
    let mut out = Vec::new();
    out.extend(p.arcs.iter().filter(|(w, _)| w == n).map(|(w, u)| Action::Read(arc_object(w, u))));
    out.extend(p.choices.iter().filter(|c| c.0 == n).map(|c| Action::Read(choice_object(c))));
    out.extend(p.arcs.iter().filter(|(_, u)| u == n).map(|(w, u)| Action::Write(arc_object(w, u))));
    out.extend(p.choices.iter().filter(|c| c.1 == n).map(|c| Action::Write(choice_object(c))));
    out.extend(p.choices.iter().filter(|c| c.2 == n).map(|c| Action::Read(choice_object(c))));
    out.push(Action::Commit);
    out
}

/// Transactions are numbered in schedule order: the initial choice writers,
/// then one per node in node order, then the final choice writers.
pub fn reduce_to_schedule(p: &Polygraph) -> Result<Reduction> {
    check(p)?;
    let c = p.choices.len() as u32;
    let mut txns = Vec::new();
    let mut choice_txns = BTreeMap::new();
    for (i, ch) in p.choices.iter().enumerate() {
        let (first, last) = (TxnId(i as u32 + 1), TxnId(c + p.nodes.len() as u32 + i as u32 + 1));
        choice_txns.insert(ch.clone(), (first, last));
        for id in [first, last] {
            txns.push(Transaction::new(id, [Action::Write(choice_object(ch)), Action::Commit]));
        }
    }
    let mut node_txns = BTreeMap::new();
    for (i, n) in p.nodes.iter().enumerate() {
        let id = TxnId(c + i as u32 + 1);
        node_txns.insert(n.clone(), id);
        txns.push(Transaction::new(id, node_actions(p, n)));
    }
    let set = TxnSet::new(txns)?;
    let k = |id: TxnId| set.slot_of(id).expect("built above");
    let mut order = vec![0u32];
    for &(first, _) in choice_txns.values() {
        order.extend(set.ops_of(k(first)));
    }
    let middle: Vec<usize> = node_txns.values().map(|&id| k(id)).collect();
    let body = |m: usize| {
        let r = set.ops_of(m);
        r.start..r.end - 1
    };
    // A transaction with nothing but a commit only shows up in the commit phase.
    for &m in &middle {
        let b = body(m);
        if !b.is_empty() {
            order.push(b.start);
        }
    }
    for &m in &middle {
        let b = body(m);
        if !b.is_empty() {
            order.extend(b.start + 1..b.end);
        }
    }
    for &m in &middle {
        order.push(set.ops_of(m).end - 1);
    }
    for &(_, last) in choice_txns.values() {
        order.extend(set.ops_of(k(last)));
    }
    let snapshot = vec![false; set.txns.len()];
    let schedule = forced_completion_dense(set, order, &snapshot);
    Ok(Reduction { schedule, node_txns, choice_txns })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ReductionLimits {
    pub max_choices: usize,
    pub view: ViewLimits,
}

impl Default for ReductionLimits {
    fn default() -> Self {
        ReductionLimits { max_choices: DEFAULT_MAX_CHOICES, view: ViewLimits { max_txns: 16, max_ops: 512 } }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReductionCheck {
    pub name: &'static str,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReductionReport {
    pub acyclic: bool,
    pub view_serializable: bool,
    pub transactions: usize,
    pub operations: usize,
    pub checks: Vec<ReductionCheck>,
    pub passed: bool,
}

/// Runs both oracles on `p` and its reduction and checks every property the
/// reduction is meant to have.
pub fn verify_reduction(p: &Polygraph, limits: &ReductionLimits) -> Result<ReductionReport> {
    let (acyclic, _) = is_acyclic_polygraph(p, limits.max_choices)?;
    let red = reduce_to_schedule(p)?;
    let s = &red.schedule;
    let view = is_view_serializable(s, limits.view)?;
    let set = &*s.set;
    let n = set.txns.len();
    let mut checks = Vec::new();
    let mut add = |name, holds| checks.push(ReductionCheck { name, holds });

    add("verdicts-agree", acyclic == view.verdict);
    add("valid-schedule", validate_schedule(s).is_empty());
    let writes: Vec<u32> = (1..set.len() as u32).filter(|&d| set.slots[d as usize].kind == Kind::Write).collect();
    let reads: Vec<u32> = (1..set.len() as u32).filter(|&d| set.slots[d as usize].kind == Kind::Read).collect();
    let no_concurrent_writes = writes.iter().all(|&a| {
        writes.iter().all(|&b| {
            let (i, j) = (s.txn_of(a), s.txn_of(b));
            i == j || set.slots[a as usize].obj != set.slots[b as usize].obj || !concurrent(s, i, j)
        })
    });
    add("no-concurrent-writes", no_concurrent_writes);
    add("writes-respect-commit-order", writes.iter().all(|&w| commit_order_ok(s, w)));
    add("reads-last-committed-at-read", reads.iter().all(|&r| read_last_committed_at(s, r, s.p(r))));
    add("reads-last-committed-at-start", reads.iter().all(|&r| read_last_committed_at(s, r, s.first_pos(s.txn_of(r)))));
    let mut rc = true;
    let mut si = true;
    for t in s.txn_ids() {
        rc &= allowed_under_rc(s, t)?.allowed;
        si &= allowed_under_si(s, t)?.allowed;
    }
    add("allowed-under-rc", rc);
    add("allowed-under-si", si);
    let expected = 2 * p.arcs.len() + 7 * p.choices.len() + p.nodes.len();
    add("linear-size", s.op_count() == expected && n == p.nodes.len() + 2 * p.choices.len());
    let passed = checks.iter().all(|c| c.holds);
    Ok(ReductionReport {
        acyclic,
        view_serializable: view.verdict,
        transactions: n,
        operations: s.op_count(),
        checks,
        passed,
    })
}

const NODE_NAMES: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];

/// Every valid polygraph over the first `k` node names for `k <= max_nodes`
/// with at most `max_choices` choices.
pub fn all_polygraphs(max_nodes: usize, max_choices: usize) -> Vec<Polygraph> {
    let mut out = Vec::new();
    for k in 0..=max_nodes.min(NODE_NAMES.len()) {
        let nodes: Vec<String> = NODE_NAMES[..k].iter().map(|s| s.to_string()).collect();
        let pairs: Vec<Edge> = nodes
            .iter()
            .flat_map(|a| nodes.iter().filter(move |b| *b != a).map(move |b| (a.clone(), b.clone())))
            .collect();
        for mask in 0u64..1 << pairs.len() {
            let arcs: BTreeSet<Edge> =
                (0..pairs.len()).filter(|&i| mask >> i & 1 == 1).map(|i| pairs[i].clone()).collect();
            let candidates: Vec<Choice> =
                triples(&nodes).into_iter().filter(|(u, _, w)| arcs.contains(&(w.clone(), u.clone()))).collect();
            for chosen in subsets_up_to(&candidates, max_choices) {
                out.push(Polygraph { nodes: nodes.iter().cloned().collect(), arcs: arcs.clone(), choices: chosen });
            }
        }
    }
    out
}

fn triples(nodes: &[String]) -> Vec<Choice> {
    let mut out = Vec::new();
    for u in nodes {
        for v in nodes {
            for w in nodes {
                if u != v && v != w && u != w {
                    out.push((u.clone(), v.clone(), w.clone()));
                }
            }
        }
    }
    out
}

fn subsets_up_to(items: &[Choice], max: usize) -> Vec<BTreeSet<Choice>> {
    let mut out = vec![BTreeSet::new()];
    for item in items {
        let grown: Vec<BTreeSet<Choice>> = out
            .iter()
            .filter(|s| s.len() < max)
            .map(|s| {
                let mut s = s.clone();
                s.insert(item.clone());
                s
            })
            .collect();
        out.extend(grown);
    }
    out
}

/// A random valid polygraph with up to `max_nodes` nodes and `max_choices` choices.
pub fn random_polygraph(rng: &mut impl Rng, max_nodes: usize, max_choices: usize) -> Polygraph {
    let k = rng.gen_range(0..=max_nodes.min(NODE_NAMES.len()));
    let nodes: Vec<String> = NODE_NAMES[..k].iter().map(|s| s.to_string()).collect();
    let density: f64 = rng.gen_range(0.1..0.6);
    let mut arcs = BTreeSet::new();
    for a in &nodes {
        for b in &nodes {
            if a != b && rng.gen_bool(density) {
                arcs.insert((a.clone(), b.clone()));
            }
        }
    }
    let mut candidates = triples(&nodes);
    candidates.shuffle(rng);
    let want = rng.gen_range(0..=max_choices).min(candidates.len());
    let mut choices = BTreeSet::new();
    for (u, v, w) in candidates.into_iter().take(want) {
        arcs.insert((w.clone(), u.clone()));
        choices.insert((u, v, w));
    }
    Polygraph { nodes: nodes.into_iter().collect(), arcs, choices }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{OpId, TxnId};

    fn single_choice() -> Polygraph {
        Polygraph::new(["u", "v", "w"], [("w", "u")], [("u", "v", "w")])
    }

    #[test]
    fn validation() {
        assert!(validate_polygraph(&Polygraph::default()).is_empty());
        assert!(validate_polygraph(&single_choice()).is_empty());
        let bad = Polygraph::new(["u", "v", "w"], Vec::<(&str, &str)>::new(), [("u", "v", "w")]);
        let kinds: Vec<_> = validate_polygraph(&bad).into_iter().map(|v| v.kind).collect();
        assert_eq!(kinds, vec![PolygraphViolationKind::MissingChoiceArc]);
        let looped = Polygraph::new(["a"], [("a", "a")], Vec::<(&str, &str, &str)>::new());
        assert_eq!(validate_polygraph(&looped)[0].kind, PolygraphViolationKind::SelfLoop);
    }

    #[test]
    fn acyclicity() {
        let none = Vec::<(&str, &str, &str)>::new();
        let (ok, witness) = is_acyclic_polygraph(&Polygraph::new(["a", "b"], [("a", "b")], none.clone()), 20).unwrap();
        assert!(ok);
        assert!(witness.unwrap().extra_edges.is_empty());
        let two_cycle = Polygraph::new(["a", "b"], [("a", "b"), ("b", "a")], none);
        assert_eq!(is_acyclic_polygraph(&two_cycle, 20).unwrap(), (false, None));
        let (ok, witness) = is_acyclic_polygraph(&single_choice(), 20).unwrap();
        assert!(ok);
        assert_eq!(witness.unwrap().extra_edges, vec![("u".to_string(), "v".to_string())]);
        assert!(matches!(is_acyclic_polygraph(&single_choice(), 0), Err(Error::LimitExceeded { .. })));
    }

    #[test]
    fn reduction_shape() {
        let red = reduce_to_schedule(&single_choice()).unwrap();
        assert_eq!(red.transactions().len(), 5);
        assert_eq!(red.choice_txns.values().next(), Some(&(TxnId(1), TxnId(5))));
        let u = red.node_txns["u"];
        let s = &red.schedule;
        // T_w reads the object of arc w -> u.
        let tw = s.transaction(red.node_txns["w"]).unwrap();
        assert!(tw.reads().any(|o| o.object() == Some(&arc_object("w", "u"))));
        let read_choice = s.transaction(u).unwrap().reads().next().unwrap().id;
        assert_eq!(s.version_of(read_choice), Some(OpId::new(TxnId(1), 1)));
        let empty = reduce_to_schedule(&Polygraph::default()).unwrap();
        assert_eq!(empty.schedule.order(), vec![OpId::Init]);
    }

    #[test]
    fn reduction_verifies() {
        let lim = ReductionLimits::default();
        let r = verify_reduction(&single_choice(), &lim).unwrap();
        assert!(r.passed && r.acyclic && r.view_serializable, "{r:?}");
        let none = Vec::<(&str, &str, &str)>::new();
        let r = verify_reduction(&Polygraph::new(["a", "b"], [("a", "b"), ("b", "a")], none), &lim).unwrap();
        assert!(r.passed && !r.acyclic && !r.view_serializable, "{r:?}");
        // An isolated node sits between the writer and reader of an arc.
        let gap = Polygraph::new(["a", "b", "c"], [("c", "a")], Vec::<(&str, &str, &str)>::new());
        let r = verify_reduction(&gap, &lim).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn small_family_size() {
        let all = all_polygraphs(2, 1);
        // 1 + 1 + 4 arc sets; no choices fit on two nodes.
        assert_eq!(all.len(), 6);
        assert!(all.iter().all(|p| validate_polygraph(p).is_empty()));
    }
}
