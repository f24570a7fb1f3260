//! Revisit monitoring for loops without static conditions: slice the
//! variables that decide termination, snapshot them at header visits on an
//! adaptive schedule, and report a revisit when a snapshot repeats exactly.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::lang::ast::{Expr, VarId};
use crate::lang::cfg::{Cfg, Instr};
use crate::lang::eval::{Store, Value};
use crate::lang::loops::{Loop, LoopId};
use crate::lang::types::Ty;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SliceSet {
    pub loop_id: LoopId,
    /// Declaration order.
    pub vars: Vec<VarId>,
    /// False if the loop body reads `nondet()`.
    pub deterministic: bool,
}

/// Variables that can influence whether the loop exits: the exit conditions
/// closed under data and control dependence inside the region.
pub fn slice(cfg: &Cfg, l: &Loop) -> SliceSet {
    let region_conds: Vec<&Expr> = l
        .region
        .iter()
        .flat_map(|&b| cfg.out_edges(b))
        .filter_map(|e| e.cond.expr())
        .collect();
    let control = |b: crate::lang::cfg::BlockId| -> Vec<VarId> {
        cfg.block(b)
            .guards
            .iter()
            .map(|&g| &cfg.guards[g].expr)
            .filter(|g| region_conds.contains(g))
            .flat_map(|g| g.vars())
            .collect()
    };
    let mut set: BTreeSet<VarId> = BTreeSet::new();
    for &b in &l.region {
        for e in cfg.out_edges(b) {
            if l.contains(e.to) {
                continue;
            }
            if let Some(c) = e.cond.expr() {
                set.extend(c.vars());
            }
            set.extend(control(b));
        }
    }
    let mut deterministic = true;
    loop {
        let before = set.len();
        for &b in &l.region {
            for ins in &cfg.block(b).instrs {
                let (dest, reads): (VarId, Vec<VarId>) = match ins {
                    Instr::Assign(v, e) => (*v, e.vars()),
                    Instr::Store(v, i, e) => (*v, i.vars().into_iter().chain(e.vars()).collect()),
                    Instr::Nondet(v) => {
                        deterministic = false;
                        (*v, Vec::new())
                    }
                    Instr::Skip | Instr::Break => continue,
                };
                if set.contains(&dest) {
                    set.extend(reads);
                    set.extend(control(b));
                }
            }
        }
        if set.len() == before {
            break;
        }
    }
    SliceSet {
        loop_id: l.id,
        vars: set.into_iter().collect(),
        deterministic,
    }
}

pub const DEFAULT_I0: u64 = 100;
pub const DEFAULT_ALPHA: u64 = 10_000;
pub const DEFAULT_MAX_SNAPSHOTS: usize = 100_000;

/// `I = I0 · ⌈iter / α⌉`, with `I0` for `iter = 0`.
pub fn interval(i0: u64, alpha: u64, iter: u64) -> u64 {
    i0 * iter.div_ceil(alpha).max(1)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub values: Vec<Value>,
    pub iter: u64,
}

pub type HashFn = fn(&[Value], &[Ty]) -> u64;

/// FNV-1a over each value's width byte followed by its two's-complement
/// bytes, little endian.
pub fn hash64(values: &[Value], types: &[Ty]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    let mut word = |ty: Ty, v: i128| {
        let n = (ty.width() as usize).div_ceil(8);
        feed(ty.width() as u8);
        for b in &v.to_le_bytes()[..n] {
            feed(*b);
        }
    };
    for (v, &ty) in values.iter().zip(types) {
        match v {
            Value::Scalar(x) => word(ty, *x),
            Value::Array(xs) => {
                for &x in xs {
                    word(ty, x);
                }
            }
        }
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Record,
    Revisit,
    CandidateRevisit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MonitorEvent {
    pub loop_id: LoopId,
    pub iter: u64,
    pub event: EventKind,
    pub hash: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched_iter: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Observation {
    Continue,
    Revisit { prior: Snapshot },
    /// Identical snapshot in a loop that reads `nondet()`: not a proof.
    Candidate { prior: Snapshot },
}

#[derive(Clone, Debug)]
pub struct Recorder {
    pub slice: SliceSet,
    pub i0: u64,
    pub alpha: u64,
    pub max_snapshots: usize,
    /// Current recording interval.
    pub interval: u64,
    /// Header visits in the current loop activation.
    pub iter: u64,
    table: HashMap<u64, Vec<Snapshot>>,
    stored: usize,
    types: Vec<Ty>,
    hasher: HashFn,
}

impl Recorder {
    pub fn new(cfg: &Cfg, slice: SliceSet) -> Recorder {
        let types = slice.vars.iter().map(|v| cfg.vars[v.0].ty).collect();
        Recorder {
            slice,
            i0: DEFAULT_I0,
            alpha: DEFAULT_ALPHA,
            max_snapshots: DEFAULT_MAX_SNAPSHOTS,
            interval: DEFAULT_I0,
            iter: 0,
            table: HashMap::new(),
            stored: 0,
            types,
            hasher: hash64,
        }
    }

    /// Replace the hash function (tests use this to force collisions).
    pub fn with_hasher(mut self, h: HashFn) -> Recorder {
        self.hasher = h;
        self
    }

    /// Forget everything recorded; called when the loop is entered anew.
    pub fn reset(&mut self) {
        self.table.clear();
        self.stored = 0;
        self.iter = 0;
        self.interval = self.i0;
    }

    pub fn update_interval(&mut self) {
        self.interval = interval(self.i0, self.alpha, self.iter);
    }

    pub fn snapshot(&self, store: &Store) -> Snapshot {
        Snapshot {
            values: self.slice.vars.iter().map(|v| store.vals[v.0].clone()).collect(),
            iter: self.iter,
        }
    }

    pub fn hash(&self, snap: &Snapshot) -> u64 {
        (self.hasher)(&snap.values, &self.types)
    }

    /// Check the header store of visit `self.iter`, record it if the
    /// schedule says so, and advance the visit counter.
    pub fn observe(&mut self, store: &Store, events: Option<&mut Vec<MonitorEvent>>) -> Observation {
        let snap = self.snapshot(store);
        let h = self.hash(&snap);
        let (loop_id, iter) = (self.slice.loop_id, snap.iter);
        let ev = |kind: EventKind, matched: Option<u64>, evs: Option<&mut Vec<MonitorEvent>>| {
            if let Some(evs) = evs {
                evs.push(MonitorEvent {
                    loop_id,
                    iter,
                    event: kind,
                    hash: h,
                    matched_iter: matched,
                });
            }
        };
        if let Some(prior) = self
            .table
            .get(&h)
            .and_then(|bucket| bucket.iter().find(|s| s.values == snap.values))
        {
            let prior = prior.clone();
            self.iter += 1;
            if self.slice.deterministic {
                ev(EventKind::Revisit, Some(prior.iter), events);
                return Observation::Revisit { prior };
            }
            ev(EventKind::CandidateRevisit, Some(prior.iter), events);
            return Observation::Candidate { prior };
        }
        self.update_interval();
        let mut events = events;
        if snap.iter % self.interval == 0 && self.stored < self.max_snapshots {
            ev(EventKind::Record, None, events.as_deref_mut());
            self.table.entry(h).or_default().push(snap);
            self.stored += 1;
        }
        self.iter += 1;
        Observation::Continue
    }

    pub fn stored(&self) -> usize {
        self.stored
    }

    /// Every stored snapshot sits under its own hash.
    pub fn check_table(&self) -> bool {
        self.table
            .iter()
            .all(|(h, b)| b.iter().all(|s| self.hash(s) == *h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{build_cfg, extract_loops, parse};

    fn slice_of(src: &str) -> (Cfg, SliceSet) {
        let cfg = build_cfg(&parse(src).unwrap());
        let l = extract_loops(&cfg).unwrap().pop().unwrap();
        let s = slice(&cfg, &l);
        (cfg, s)
    }

    fn names(cfg: &Cfg, s: &SliceSet) -> Vec<String> {
        s.vars.iter().map(|v| cfg.vars[v.0].name.clone()).collect()
    }

    #[test]
    fn slices() {
        let (cfg, s) = slice_of("i32 i; while (i < 100) { if (i < 50) { i = i + 1; } else { i = i - 1; } }");
        assert_eq!(names(&cfg, &s), ["i"]);
        let (cfg, s) = slice_of("i32 x; i32 n; i32 s; i32 t; while (x < n) { x = x + s; t = t + 1; }");
        assert_eq!(names(&cfg, &s), ["x", "n", "s"]);
        assert!(s.deterministic);
        let (cfg, s) = slice_of("i32 x; i32 y; while (x < 10) { y = nondet(); if (y > 0) { x = x + 1; } }");
        assert_eq!(names(&cfg, &s), ["x", "y"]);
        assert!(!s.deterministic);
        // A break's guard is part of the exit condition.
        let (cfg, s) = slice_of("i32 x; i32 y; while (true) { if (y == 3) { break; } y = y + x; }");
        assert_eq!(names(&cfg, &s), ["x", "y"]);
    }

    #[test]
    fn interval_formula() {
        let want = [(0, 100), (1, 100), (5_000, 100), (9_999, 100), (10_000, 100), (10_001, 200), (25_000, 300), (1_000_000, 10_000)];
        for (n, i) in want {
            assert_eq!(interval(100, 10_000, n), i, "iter {n}");
        }
    }

    #[test]
    fn collisions_need_full_equality() {
        let (cfg, s) = slice_of("u8 x; while (x != 200) { x = x + 4; }");
        let mut r = Recorder::new(&cfg, s).with_hasher(|_, _| 7);
        r.i0 = 1;
        let mut store = Store {
            vals: vec![Value::Scalar(1)],
        };
        assert_eq!(r.observe(&store, None), Observation::Continue);
        for x in 2..60 {
            store.set(VarId(0), x);
            assert_eq!(r.observe(&store, None), Observation::Continue);
        }
        store.set(VarId(0), 1);
        assert!(matches!(r.observe(&store, None), Observation::Revisit { prior } if prior.iter == 0));
        assert_eq!(r.stored(), 59);
        assert!(r.check_table());
    }
}
