//! Exhaustive generation of schedules over a transaction set.

use std::sync::Arc;

use crate::isolation::{admissible_dense, forced_completion_dense, DenseLevels, IsolationLevel};
use crate::schedule::{Kind, Schedule, TxnSet, NONE};

/// Depth-first walk over all interleavings of `set` that preserve each
/// transaction's internal order, in lexicographic order of the transaction
/// sequence. With `gate` set, prefixes that already contain a dirty write
/// (RC transactions) or concurrent write (SI and SSI transactions) are cut.
pub(crate) struct Interleavings {
    set: Arc<TxnSet>,
    gate: Option<Vec<IsolationLevel>>,
    next: Vec<u32>,
    lens: Vec<u32>,
    order: Vec<u32>,
    pos: Vec<u32>,
    stack: Vec<usize>,
    total: usize,
    started: bool,
}

impl Interleavings {
    pub fn new(set: Arc<TxnSet>, gate: Option<Vec<IsolationLevel>>) -> Self {
        let lens: Vec<u32> = set.txns.iter().map(|t| t.len() as u32).collect();
        let total = lens.iter().sum::<u32>() as usize;
        let n = set.len();
        Interleavings {
            next: vec![0; lens.len()],
            lens,
            order: Vec::with_capacity(total),
            pos: vec![NONE; n],
            stack: Vec::with_capacity(total),
            total,
            started: false,
            set,
            gate,
        }
    }

    pub fn set(&self) -> &Arc<TxnSet> {
        &self.set
    }

    /// Current complete order, without `Init`.
    #[cfg(test)]
    pub fn current(&self) -> &[u32] {
        &self.order
    }

    /// The current order with `Init` in front.
    pub fn current_with_init(&self) -> Vec<u32> {
        let mut v = Vec::with_capacity(self.order.len() + 1);
        v.push(0);
        v.extend_from_slice(&self.order);
        v
    }

    fn admit(&self, k: usize) -> bool {
        let Some(levels) = &self.gate else { return true };
        let set = &*self.set;
        let d = set.offsets[k] + self.next[k];
        let slot = set.slots[d as usize];
        if slot.kind != Kind::Write {
            return true;
        }
        let here = self.order.len() as u32;
        let first_k = if self.next[k] == 0 { here } else { self.pos[set.first[k] as usize] };
        let snapshot = levels[k] != IsolationLevel::RC;
        !set.writes[slot.obj as usize].iter().any(|&b| {
            let i = set.slots[b as usize].txn as usize;
            if i == k || self.pos[b as usize] == NONE {
                return false;
            }
            let c = set.commit[i];
            let ci = if c == NONE { NONE } else { self.pos[c as usize] };
            if snapshot {
                ci == NONE || first_k < ci
            } else {
                ci == NONE
            }
        })
    }

    fn push(&mut self, k: usize) {
        let d = self.set.offsets[k] + self.next[k];
        self.pos[d as usize] = self.order.len() as u32;
        self.order.push(d);
        self.next[k] += 1;
        self.stack.push(k);
    }

    fn pop(&mut self) -> Option<usize> {
        let k = self.stack.pop()?;
        let d = self.order.pop().expect("parallel to stack");
        self.pos[d as usize] = NONE;
        self.next[k] -= 1;
        Some(k)
    }

    /// Moves to the next complete order. Returns false once exhausted.
    pub fn advance(&mut self) -> bool {
        let mut start = if !self.started {
            self.started = true;
            if self.total == 0 {
                return true;
            }
            0
        } else {
            match self.pop() {
                Some(k) => k + 1,
                None => return false,
            }
        };
        loop {
            let n = self.lens.len();
            let pick = (start..n).find(|&k| self.next[k] < self.lens[k] && self.admit(k));
            match pick {
                Some(k) => {
                    self.push(k);
                    if self.order.len() == self.total {
                        return true;
                    }
                    start = 0;
                }
                None => match self.pop() {
                    Some(k) => start = k + 1,
                    None => return false,
                },
            }
        }
    }
}

/// Forced completions of every interleaving that are admissible under `levels`.
pub(crate) struct AllowedSchedules {
    inner: Interleavings,
    levels: DenseLevels,
    snapshot: Vec<bool>,
    /// Complete interleavings visited, admissible or not.
    pub visited: u64,
}

impl AllowedSchedules {
    pub fn new(set: Arc<TxnSet>, levels: DenseLevels) -> Self {
        let snapshot = levels.levels.iter().map(|l| l.reads_from_snapshot()).collect();
        let inner = Interleavings::new(set, Some(levels.levels.clone()));
        AllowedSchedules { inner, levels, snapshot, visited: 0 }
    }
}

impl Iterator for AllowedSchedules {
    type Item = Schedule;

    fn next(&mut self) -> Option<Schedule> {
        while self.inner.advance() {
            self.visited += 1;
            let s = forced_completion_dense(self.inner.set().clone(), self.inner.current_with_init(), &self.snapshot);
            if admissible_dense(&s, &self.levels) {
                return Some(s);
            }
        }
        None
    }
}

/// Every version chain for each object that keeps same-transaction writes in
/// transaction order.
pub(crate) fn version_order_choices(set: &TxnSet) -> Vec<Vec<Vec<u32>>> {
    set.writes
        .iter()
        .map(|writes| {
            let mut out = Vec::new();
            permute(writes.clone(), 0, &mut |p: &[u32]| {
                if keeps_txn_order(set, p) {
                    let mut chain = vec![0];
                    chain.extend_from_slice(p);
                    out.push(chain);
                }
            });
            out.sort();
            out
        })
        .collect()
}

fn keeps_txn_order(set: &TxnSet, p: &[u32]) -> bool {
    p.iter()
        .enumerate()
        .all(|(i, &a)| p[i + 1..].iter().all(|&b| set.slots[a as usize].txn != set.slots[b as usize].txn || a < b))
}

fn permute(mut items: Vec<u32>, k: usize, f: &mut impl FnMut(&[u32])) {
    if k == items.len() {
        f(&items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items.clone(), k + 1, f);
        items.swap(k, i);
    }
}

/// For each read under `order`: the versions it may observe in a valid schedule.
pub(crate) fn version_function_choices(set: &TxnSet, order: &[u32]) -> Vec<(u32, Vec<u32>)> {
    let mut pos = vec![NONE; set.len()];
    for (p, &d) in order.iter().enumerate() {
        pos[d as usize] = p as u32;
    }
    (1..set.len() as u32)
        .filter(|&d| set.slots[d as usize].kind == Kind::Read)
        .map(|r| {
            let slot = set.slots[r as usize];
            let options = if slot.own_prior_write != NONE {
                vec![slot.own_prior_write]
            } else {
                std::iter::once(0)
                    .chain(set.writes[slot.obj as usize].iter().copied().filter(|&w| pos[w as usize] < pos[r as usize]))
                    .collect()
            };
            (r, options)
        })
        .collect()
}

/// Every valid schedule over `set`: interleavings, then version orders, then
/// version functions, each in canonical order.
pub(crate) struct ValidSchedules {
    inner: Interleavings,
    vorders: Vec<Vec<Vec<u32>>>,
    order: Vec<u32>,
    vf_choices: Vec<(u32, Vec<u32>)>,
    /// Mixed-radix counters over objects' chains then reads' versions.
    digits: Vec<usize>,
    fresh: bool,
    pub visited: u64,
}

impl ValidSchedules {
    pub fn new(set: Arc<TxnSet>) -> Self {
        let vorders = version_order_choices(&set);
        ValidSchedules {
            inner: Interleavings::new(set, None),
            vorders,
            order: Vec::new(),
            vf_choices: Vec::new(),
            digits: Vec::new(),
            fresh: true,
            visited: 0,
        }
    }

    fn radix(&self, i: usize) -> usize {
        let objects = self.vorders.len();
        if i < objects {
            self.vorders[i].len()
        } else {
            self.vf_choices[i - objects].1.len()
        }
    }

    fn build(&self) -> Schedule {
        let set = self.inner.set().clone();
        let objects = self.vorders.len();
        let vorder: Vec<Vec<u32>> = (0..objects).map(|o| self.vorders[o][self.digits[o]].clone()).collect();
        let mut vf = vec![NONE; set.len()];
        for (i, (r, options)) in self.vf_choices.iter().enumerate() {
            vf[*r as usize] = options[self.digits[objects + i]];
        }
        Schedule::from_dense(set, self.order.clone(), vorder, vf)
    }
}

impl Iterator for ValidSchedules {
    type Item = Schedule;

    fn next(&mut self) -> Option<Schedule> {
        if !self.fresh {
            // Increment the mixed-radix counter; on overflow move to the next order.
            let mut i = 0;
            loop {
                if i == self.digits.len() {
                    self.fresh = true;
                    break;
                }
                self.digits[i] += 1;
                if self.digits[i] < self.radix(i) {
                    break;
                }
                self.digits[i] = 0;
                i += 1;
            }
        }
        if self.fresh {
            if !self.inner.advance() {
                return None;
            }
            self.fresh = false;
            self.order = self.inner.current_with_init();
            self.vf_choices = version_function_choices(self.inner.set(), &self.order);
            self.digits = vec![0; self.vorders.len() + self.vf_choices.len()];
        }
        self.visited += 1;
        Some(self.build())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::txn;
    use crate::isolation::PivotRule;
    use crate::schedule::validate_schedule;

    fn set(txns: &[&str]) -> Arc<TxnSet> {
        TxnSet::new(txns.iter().enumerate().map(|(k, a)| txn(k as u32 + 1, a)).collect()).unwrap()
    }

    fn count(mut it: Interleavings) -> usize {
        let mut n = 0;
        while it.advance() {
            n += 1;
        }
        n
    }

    #[test]
    fn interleaving_counts() {
        assert_eq!(count(Interleavings::new(set(&["R(t) C", "W(t) C"]), None)), 6);
        assert_eq!(count(Interleavings::new(set(&["R(t) W(t) C", "W(t) C", "C"]), None)), 60);
        assert_eq!(count(Interleavings::new(set(&[]), None)), 1);
    }

    #[test]
    fn interleavings_are_lexicographic() {
        let mut it = Interleavings::new(set(&["R(t) C", "W(t) C"]), None);
        let mut seen = Vec::new();
        while it.advance() {
            seen.push(it.current().to_vec());
        }
        let mut sorted = seen.clone();
        sorted.sort_by_key(|o| o.iter().map(|&d| d > 2).collect::<Vec<_>>());
        assert_eq!(seen, sorted);
        assert_eq!(seen[0], vec![1, 2, 3, 4]);
    }

    #[test]
    fn gate_prunes_dirty_writes() {
        let s = set(&["W(t) C", "W(t) C"]);
        let rc = Interleavings::new(s.clone(), Some(vec![IsolationLevel::RC; 2]));
        // Only the two serial orders avoid writing over an uncommitted version.
        assert_eq!(count(rc), 2);
        let all =
            AllowedSchedules::new(s, DenseLevels { levels: vec![IsolationLevel::SI; 2], pivot: PivotRule::default() });
        assert_eq!(all.count(), 2);
    }

    #[test]
    fn valid_schedule_counts() {
        // One interleaving-independent chain; R2(t) may see init or W1(t) when it follows it.
        let s = set(&["W(t) C", "R(t) C"]);
        let all: Vec<Schedule> = ValidSchedules::new(s).collect();
        assert!(all.iter().all(|s| validate_schedule(s).is_empty()));
        // Orders where W1 precedes R2: 3 (x2 versions); otherwise 3 (x1).
        assert_eq!(all.len(), 9);
    }

    #[test]
    fn version_orders_keep_transaction_order() {
        let s = set(&["W(t) W(t) C", "W(t) C"]);
        let chains = version_order_choices(&s);
        assert_eq!(chains[0].len(), 3);
    }
}
