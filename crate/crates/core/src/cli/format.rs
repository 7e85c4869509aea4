//! Line-oriented text formats for workloads, schedules and polygraphs.
//!
//! All three share the same lexical rules: a token starting with `#` begins a
//! comment, blank lines are ignored, and tokens are separated by whitespace.
//!
//! ```text
//! txn T1: R(t) W(t) C
//! txn T2: R(t) W(t) C
//! alloc T1=SI T2=SI          # or: alloc view-serializable
//! pivot strict               # optional
//! ```
//!
//! ```text
//! order: R1(t) R2(t) W2(t) C2 W1(t) C1
//! reads: R1(t)<-init R2(t)<-init
//! vorder t: init < W2(t) < W1(t)
//! ```
//!
//! ```text
//! nodes: u v w
//! arc w -> u
//! choice u v w
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::isolation::{Allocation, IsolationLevel, NamedPredicate, PivotRule};
use crate::polygraph::{validate_polygraph, Polygraph};
use crate::robustness::Workload;
use crate::schedule::{
    validate_schedule, validate_transaction, Action, ObjectId, OpId, Schedule, ScheduleViolation, Transaction, TxnId,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "kebab-case")]
pub enum ParseErrorKind {
    Syntax(String),
    DuplicateTransaction(TxnId),
    UnknownLevel(String),
    UnknownTransaction(TxnId),
    UnknownOperation(String),
    AmbiguousShorthand(String),
    ReadMappedToNonWrite(String),
    VorderNotTotal(ObjectId),
    /// The document parsed but describes an ill-formed transaction or schedule.
    Invalid(ScheduleViolation),
    InvalidPolygraph(String),
}

/// Line and column are 1-based; line 0 refers to the document as a whole.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, thiserror::Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "{}:{}: ", self.line, self.column)?;
        }
        match &self.kind {
            ParseErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ParseErrorKind::DuplicateTransaction(t) => write!(f, "duplicate transaction {t}"),
            ParseErrorKind::UnknownLevel(l) => write!(f, "unknown isolation level `{l}`"),
            ParseErrorKind::UnknownTransaction(t) => write!(f, "unknown transaction {t}"),
            ParseErrorKind::UnknownOperation(o) => write!(f, "no operation matches `{o}`"),
            ParseErrorKind::AmbiguousShorthand(o) => write!(f, "`{o}` matches several operations; use T<i>#<k>"),
            ParseErrorKind::ReadMappedToNonWrite(o) => write!(f, "`{o}` is not a write"),
            ParseErrorKind::VorderNotTotal(o) => write!(f, "version order of {o} does not list every write"),
            ParseErrorKind::Invalid(v) => write!(f, "{v}"),
            ParseErrorKind::InvalidPolygraph(m) => write!(f, "invalid polygraph: {m}"),
        }
    }
}

type Parsed<T> = std::result::Result<T, ParseError>;

struct Line<'a> {
    number: usize,
    raw: &'a str,
    text: &'a str,
}

impl<'a> Line<'a> {
    fn err(&self, at: &str, kind: ParseErrorKind) -> ParseError {
        let column = self.raw.find(at).map_or(1, |c| c + 1);
        ParseError { line: self.number, column, kind }
    }

    fn syntax(&self, at: &str, msg: impl Into<String>) -> ParseError {
        self.err(at, ParseErrorKind::Syntax(msg.into()))
    }
}

fn lines(text: &str) -> impl Iterator<Item = Line<'_>> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let text = strip_comment(raw).trim();
        (!text.is_empty()).then_some(Line { number: i + 1, raw, text })
    })
}

/// A comment starts at a `#` opening a token, so `T1#2` survives.
fn strip_comment(raw: &str) -> &str {
    let bytes = raw.as_bytes();
    let at = (0..bytes.len()).find(|&i| bytes[i] == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()));
    &raw[..at.unwrap_or(raw.len())]
}

fn whole(kind: ParseErrorKind) -> ParseError {
    ParseError { line: 0, column: 0, kind }
}

fn parse_txn_id(tok: &str) -> Option<TxnId> {
    let digits = tok.strip_prefix('T')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok().map(TxnId)
}

fn valid_object_name(name: &str) -> bool {
    !name.is_empty() && !name.contains(|c: char| c.is_whitespace() || matches!(c, '(' | ')' | '<' | '#'))
}

/// `R(obj)`, `W(obj)` or `C`.
fn parse_action(tok: &str) -> Option<Action> {
    if tok == "C" {
        return Some(Action::Commit);
    }
    let (kind, rest) = tok.split_at_checked(1)?;
    let obj = rest.strip_prefix('(')?.strip_suffix(')')?;
    if !valid_object_name(obj) {
        return None;
    }
    match kind {
        "R" => Some(Action::Read(ObjectId::new(obj))),
        "W" => Some(Action::Write(ObjectId::new(obj))),
        _ => None,
    }
}

fn render_action(a: &Action) -> String {
    match a {
        Action::Read(o) => format!("R({o})"),
        Action::Write(o) => format!("W({o})"),
        Action::Commit => "C".to_string(),
    }
}

pub fn parse_workload(text: &str) -> Parsed<Workload> {
    let mut txns: Vec<Transaction> = Vec::new();
    let mut levels: BTreeMap<TxnId, IsolationLevel> = BTreeMap::new();
    let mut predicate: Option<NamedPredicate> = None;
    let mut pivot = PivotRule::default();
    for line in lines(text) {
        let (head, rest) = line.text.split_once(char::is_whitespace).unwrap_or((line.text, ""));
        match head {
            "txn" => {
                let (id_tok, body) =
                    rest.split_once(':').ok_or_else(|| line.syntax(rest, "expected `txn T<i>: <actions>`"))?;
                let id_tok = id_tok.trim();
                let id =
                    parse_txn_id(id_tok).ok_or_else(|| line.syntax(id_tok, "expected a transaction id like T1"))?;
                if txns.iter().any(|t| t.id() == id) {
                    return Err(line.err(id_tok, ParseErrorKind::DuplicateTransaction(id)));
                }
                let mut actions = Vec::new();
                for tok in body.split_whitespace() {
                    actions.push(parse_action(tok).ok_or_else(|| line.syntax(tok, format!("bad action `{tok}`")))?);
                }
                let t = Transaction::new(id, actions);
                if let Some(v) = validate_transaction(&t).into_iter().next() {
                    return Err(line.err(id_tok, ParseErrorKind::Invalid(v)));
                }
                txns.push(t);
            }
            "alloc" => {
                for tok in rest.split_whitespace() {
                    if let Ok(p) = tok.parse::<NamedPredicate>() {
                        predicate = Some(p);
                        continue;
                    }
                    let (id_tok, level) =
                        tok.split_once('=').ok_or_else(|| line.syntax(tok, "expected T<i>=<level>"))?;
                    let id = parse_txn_id(id_tok).ok_or_else(|| line.syntax(tok, "expected a transaction id"))?;
                    let level = level
                        .parse::<IsolationLevel>()
                        .map_err(|_| line.err(level, ParseErrorKind::UnknownLevel(level.to_string())))?;
                    levels.insert(id, level);
                }
            }
            "pivot" => {
                pivot = match rest.trim() {
                    "strict" => PivotRule::Strict,
                    "degenerate" => PivotRule::AllowDegenerate,
                    other => return Err(line.syntax(other, "expected `strict` or `degenerate`")),
                }
            }
            other => return Err(line.syntax(other, format!("unknown directive `{other}`"))),
        }
    }
    for &id in levels.keys() {
        if !txns.iter().any(|t| t.id() == id) {
            return Err(whole(ParseErrorKind::UnknownTransaction(id)));
        }
    }
    let alloc = match predicate {
        Some(_) if !levels.is_empty() => {
            return Err(whole(ParseErrorKind::Syntax(
                "an allocation is either a predicate or per-transaction levels".into(),
            )))
        }
        Some(p) => Allocation::Predicate(p),
        None => Allocation::levels(levels).with_pivot(pivot),
    };
    Ok(Workload::new(txns, alloc))
}

pub fn render_transaction(t: &Transaction) -> String {
    let body: Vec<String> = t.ops().iter().map(|o| render_action(&o.action)).collect();
    format!("txn {}: {}", t.id(), body.join(" "))
}

pub fn render_workload(w: &Workload) -> String {
    let mut out = String::new();
    for t in &w.txns {
        out.push_str(&render_transaction(t));
        out.push('\n');
    }
    match &w.alloc {
        Allocation::Predicate(p) => out.push_str(&format!("alloc {p}\n")),
        Allocation::Levels { levels, pivot } => {
            if !levels.is_empty() {
                let items: Vec<String> = levels.iter().map(|(t, l)| format!("{t}={l}")).collect();
                out.push_str(&format!("alloc {}\n", items.join(" ")));
            }
            if *pivot == PivotRule::Strict {
                out.push_str("pivot strict\n");
            }
        }
    }
    out
}

fn find_txn<'a>(txns: &'a [Transaction], id: TxnId) -> Option<&'a Transaction> {
    txns.iter().find(|t| t.id() == id)
}

/// Resolves `init`, `T<i>#<k>` or shorthand such as `R1(t)`, `W2(t)`, `C3`.
fn resolve(txns: &[Transaction], tok: &str) -> std::result::Result<OpId, ParseErrorKind> {
    if tok == "init" {
        return Ok(OpId::Init);
    }
    let unknown = || ParseErrorKind::UnknownOperation(tok.to_string());
    if let Some((t, k)) = tok.split_once('#') {
        let id = parse_txn_id(t).ok_or_else(unknown)?;
        let k: u32 = k.parse().map_err(|_| unknown())?;
        let t = find_txn(txns, id).ok_or(ParseErrorKind::UnknownTransaction(id))?;
        return t.operation(OpId::new(id, k)).map(|o| o.id).ok_or_else(unknown);
    }
    let (kind, rest) = tok.split_at_checked(1).ok_or_else(unknown)?;
    let digits_end = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
    let (num, obj) = rest.split_at(digits_end);
    let id = TxnId(num.parse().map_err(|_| unknown())?);
    let action = match (kind, obj) {
        ("C", "") => Action::Commit,
        ("R" | "W", o) => {
            let o = o.strip_prefix('(').and_then(|o| o.strip_suffix(')')).ok_or_else(unknown)?;
            if kind == "R" {
                Action::Read(ObjectId::new(o))
            } else {
                Action::Write(ObjectId::new(o))
            }
        }
        _ => return Err(unknown()),
    };
    let t = find_txn(txns, id).ok_or(ParseErrorKind::UnknownTransaction(id))?;
    let mut hits = t.ops().iter().filter(|o| o.action == action);
    match (hits.next(), hits.next()) {
        (Some(o), None) => Ok(o.id),
        (Some(_), Some(_)) => Err(ParseErrorKind::AmbiguousShorthand(tok.to_string())),
        (None, _) => Err(unknown()),
    }
}

/// Shorthand when it names the operation uniquely, `T<i>#<k>` otherwise.
pub fn render_op(s: &Schedule, id: OpId) -> String {
    let Some(op) = s.operation(id) else { return id.to_string() };
    let t = s.transaction(id.txn().expect("not init")).expect("operation exists");
    if t.ops().iter().filter(|o| o.action == op.action).count() == 1 {
        op.to_string()
    } else {
        id.to_string()
    }
}

/// Parses a schedule document and checks it is well-formed.
pub fn parse_schedule(text: &str, txns: &[Transaction]) -> Parsed<Schedule> {
    let s = parse_schedule_inner(text, txns, true)?;
    match validate_schedule(&s).into_iter().next() {
        Some(v) => Err(whole(ParseErrorKind::Invalid(v))),
        None => Ok(s),
    }
}

/// Parses a schedule document without well-formedness checks, for reporting them.
pub fn parse_schedule_unchecked(text: &str, txns: &[Transaction]) -> Parsed<Schedule> {
    parse_schedule_inner(text, txns, false)
}

/// Splits `head: rest`. Object names may contain `:`, so a vorder header ends
/// at the colon closing its object token.
fn section(text: &str) -> Option<(&str, &str)> {
    let trimmed = text.trim_start();
    if let Some(after) = trimmed.strip_prefix("vorder").filter(|a| a.starts_with(char::is_whitespace)) {
        let obj_start = after.len() - after.trim_start().len();
        let token_len = after[obj_start..].find(char::is_whitespace).unwrap_or(after.len() - obj_start);
        let token = &after[obj_start..obj_start + token_len];
        let offset = text.len() - trimmed.len() + "vorder".len() + obj_start;
        let colon = if token.ends_with(':') { token.len() - 1 } else { token.find(':')? };
        return Some((&text[..offset + colon], &text[offset + colon + 1..]));
    }
    text.split_once(':')
}

fn parse_schedule_inner(text: &str, txns: &[Transaction], strict: bool) -> Parsed<Schedule> {
    let mut order: Option<Vec<OpId>> = None;
    let mut vf: BTreeMap<OpId, OpId> = BTreeMap::new();
    let mut vorder: BTreeMap<ObjectId, Vec<OpId>> = BTreeMap::new();
    let mut seen_ids = BTreeSet::new();
    for t in txns {
        if !seen_ids.insert(t.id()) {
            return Err(whole(ParseErrorKind::DuplicateTransaction(t.id())));
        }
    }
    for line in lines(text) {
        let (head, rest) = section(line.text).ok_or_else(|| line.syntax(line.text, "expected `<section>:`"))?;
        let head = head.trim();
        let op = |tok: &str| resolve(txns, tok).map_err(|k| line.err(tok, k));
        if head == "order" {
            if order.is_some() {
                return Err(line.syntax(head, "order given twice"));
            }
            let mut ops = Vec::new();
            for (i, tok) in rest.split_whitespace().enumerate() {
                let id = op(tok)?;
                if !(i == 0 && id.is_init()) {
                    ops.push(id);
                }
            }
            ops.insert(0, OpId::Init);
            order = Some(ops);
        } else if head == "reads" {
            let joined = rest.split_whitespace().collect::<Vec<_>>().join(" ");
            let joined = joined.replace(" <- ", "<-").replace(" <-", "<-").replace("<- ", "<-");
            for entry in joined.split_whitespace().map(|e| e.trim_end_matches(',')).filter(|e| !e.is_empty()) {
                let (r, w) = entry.split_once("<-").ok_or_else(|| line.syntax(entry, "expected <read><-<version>"))?;
                let read = op(r)?;
                let is_read =
                    read.txn().and_then(|t| find_txn(txns, t)).and_then(|t| t.operation(read)).map(|o| o.is_read());
                if is_read != Some(true) {
                    return Err(line.syntax(r, format!("`{r}` is not a read")));
                }
                let version = op(w)?;
                let is_write = version.is_init()
                    || version
                        .txn()
                        .and_then(|t| find_txn(txns, t))
                        .and_then(|t| t.operation(version))
                        .is_some_and(|o| o.is_write());
                if !is_write {
                    return Err(line.err(w, ParseErrorKind::ReadMappedToNonWrite(w.to_string())));
                }
                if vf.insert(read, version).is_some() {
                    return Err(line.syntax(r, format!("`{r}` mapped twice")));
                }
            }
        } else if let Some(obj) = head.strip_prefix("vorder") {
            let obj = obj.trim();
            if !valid_object_name(obj) {
                return Err(line.syntax(head, "expected `vorder <object>:`"));
            }
            let mut chain = Vec::new();
            for tok in rest.split('<').map(str::trim) {
                if tok.is_empty() {
                    return Err(line.syntax(rest, "empty version-order entry"));
                }
                chain.push(op(tok)?);
            }
            if vorder.insert(ObjectId::new(obj), chain).is_some() {
                return Err(line.syntax(head, format!("version order of {obj} given twice")));
            }
        } else {
            return Err(line.syntax(head, format!("unknown section `{head}`")));
        }
    }
    let order = order.ok_or_else(|| whole(ParseErrorKind::Syntax("missing `order:` line".into())))?;
    if strict {
        let mut writes: BTreeMap<ObjectId, usize> = BTreeMap::new();
        for t in txns {
            for w in t.writes() {
                *writes.entry(w.object().expect("writes have objects").clone()).or_default() += 1;
            }
        }
        for (obj, count) in writes {
            let listed = vorder.get(&obj).map_or(0, |c| c.iter().filter(|o| !o.is_init()).count());
            if listed != count {
                return Err(whole(ParseErrorKind::VorderNotTotal(obj)));
            }
        }
    }
    Schedule::new(txns.to_vec(), order, vorder, vf).map_err(|e| match e {
        crate::error::Error::DuplicateTransaction(t) => whole(ParseErrorKind::DuplicateTransaction(t)),
        other => whole(ParseErrorKind::Syntax(other.to_string())),
    })
}

/// Canonical schedule document: operations in order without `init`, reads in
/// order of appearance, one version-order line per written object.
pub fn render_schedule(s: &Schedule) -> String {
    let order = s.order();
    let ops: Vec<String> = order.iter().filter(|o| !o.is_init()).map(|&o| render_op(s, o)).collect();
    let mut out = format!("order: {}\n", ops.join(" "));
    let vf = s.version_function();
    let mut reads: Vec<String> = Vec::new();
    let mut listed = BTreeSet::new();
    for &o in order.iter().chain(vf.keys()) {
        if let Some(&v) = vf.get(&o) {
            if listed.insert(o) {
                reads.push(format!("{}<-{}", render_op(s, o), render_op(s, v)));
            }
        }
    }
    if !reads.is_empty() {
        out.push_str(&format!("reads: {}\n", reads.join(" ")));
    }
    for (obj, chain) in s.version_orders() {
        let written = s.transactions().iter().any(|t| t.writes().any(|w| w.object() == Some(&obj)));
        if chain.len() > 1 || written {
            let items: Vec<String> = chain.iter().map(|&o| render_op(s, o)).collect();
            out.push_str(&format!("vorder {obj}: {}\n", items.join(" < ")));
        }
    }
    out
}

/// One-line form, e.g. `W2(t) R4(t) C3`.
pub fn render_order(s: &Schedule) -> String {
    s.order().iter().filter(|o| !o.is_init()).map(|&o| render_op(s, o)).collect::<Vec<_>>().join(" ")
}

pub fn parse_polygraph(text: &str) -> Parsed<Polygraph> {
    let mut p = Polygraph::default();
    for line in lines(text) {
        let (head, rest) = line.text.split_once(char::is_whitespace).unwrap_or((line.text, ""));
        match head.trim_end_matches(':') {
            "nodes" => {
                for n in rest.split_whitespace() {
                    if !crate::polygraph::valid_node_name(n) {
                        return Err(line.syntax(n, format!("bad node name `{n}`")));
                    }
                    p.nodes.insert(n.to_string());
                }
            }
            "arc" => {
                let (a, b) = rest.split_once("->").ok_or_else(|| line.syntax(rest, "expected `arc <a> -> <b>`"))?;
                p.arcs.insert((a.trim().to_string(), b.trim().to_string()));
            }
            "choice" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let [u, v, w] = parts[..] else { return Err(line.syntax(rest, "expected `choice <u> <v> <w>`")) };
                p.choices.insert((u.to_string(), v.to_string(), w.to_string()));
            }
            other => return Err(line.syntax(other, format!("unknown directive `{other}`"))),
        }
    }
    if let Some(v) = validate_polygraph(&p).into_iter().next() {
        return Err(whole(ParseErrorKind::InvalidPolygraph(v.to_string())));
    }
    Ok(p)
}

pub fn render_polygraph(p: &Polygraph) -> String {
    let mut out = format!("nodes: {}\n", p.nodes.iter().cloned().collect::<Vec<_>>().join(" "));
    for (a, b) in &p.arcs {
        out.push_str(&format!("arc {a} -> {b}\n"));
    }
    for (u, v, w) in &p.choices {
        out.push_str(&format!("choice {u} {v} {w}\n"));
    }
    out
}
