//! Instrumented execution: SRC assertions and revisit monitors at loop
//! headers, step budgets, and replay confirmation of non-termination proofs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::ast::Program;
use crate::lang::cfg::{BlockId, Cfg};
use crate::lang::eval::{InputTape, RuntimeErrorKind, Store, TapeReader};
use crate::lang::interp::{choose_edge, exec_block, Branch};
use crate::lang::loops::{Loop, LoopError, LoopId};
use crate::lang::{build_cfg, extract_loops, parse, ParseError};
use crate::monitor::{slice, MonitorEvent, Observation, Recorder, SliceSet, DEFAULT_ALPHA, DEFAULT_I0};
use crate::src::{LoopAnalysis, Src, SrcKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Loop(#[from] LoopError),
    #[error("no loop with id {0}")]
    UnknownLoopId(LoopId),
    #[error("replay did not reach visit {visit} of loop {loop_id}")]
    ReplayDivergence { loop_id: LoopId, visit: u64 },
}

/// A program with its CFG and loops.
#[derive(Clone, Debug)]
pub struct Compiled {
    pub program: Program,
    pub cfg: Cfg,
    pub loops: Vec<Loop>,
    /// Loop index by header block.
    loop_at: Vec<Option<usize>>,
}

impl Compiled {
    pub fn new(program: Program) -> Result<Compiled, ExecError> {
        let cfg = build_cfg(&program);
        let loops = extract_loops(&cfg)?;
        let mut loop_at = vec![None; cfg.len()];
        for (i, l) in loops.iter().enumerate() {
            loop_at[l.header.0] = Some(i);
        }
        Ok(Compiled {
            program,
            cfg,
            loops,
            loop_at,
        })
    }

    pub fn from_source(src: &str) -> Result<Compiled, ExecError> {
        Compiled::new(parse(src)?)
    }

    pub fn loop_by_id(&self, id: LoopId) -> Option<&Loop> {
        self.loops.iter().find(|l| l.id == id)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    #[default]
    Online,
    Offline,
}

#[derive(Clone, Debug)]
pub struct LoopPlan {
    pub loop_id: LoopId,
    pub header: BlockId,
    pub srcs: Vec<Src>,
    pub monitor: Option<SliceSet>,
}

#[derive(Clone, Debug, Default)]
pub struct OraclePlan {
    pub mode: Mode,
    pub loops: Vec<LoopPlan>,
}

impl OraclePlan {
    pub fn is_empty(&self) -> bool {
        self.loops.is_empty()
    }
}

pub fn attach_oracles(c: &Compiled, srcs: &[Src], slices: &[SliceSet], mode: Mode) -> Result<OraclePlan, ExecError> {
    let mut by_loop: BTreeMap<LoopId, LoopPlan> = BTreeMap::new();
    let ids = srcs.iter().map(|s| s.loop_id).chain(slices.iter().map(|s| s.loop_id));
    for id in ids {
        let l = c.loop_by_id(id).ok_or(ExecError::UnknownLoopId(id))?;
        by_loop.entry(id).or_insert_with(|| LoopPlan {
            loop_id: id,
            header: l.header,
            srcs: Vec::new(),
            monitor: None,
        });
    }
    for s in srcs {
        by_loop.get_mut(&s.loop_id).unwrap().srcs.push(s.clone());
    }
    for s in slices {
        by_loop.get_mut(&s.loop_id).unwrap().monitor = Some(s.clone());
    }
    Ok(OraclePlan {
        mode,
        loops: by_loop.into_values().collect(),
    })
}

/// SRC assertions from the analyses, and monitors on every loop the analysis
/// could not settle.
pub fn plan_for(c: &Compiled, analyses: &[LoopAnalysis], mode: Mode) -> OraclePlan {
    let srcs: Vec<Src> = analyses.iter().flat_map(|a| a.srcs.iter().cloned()).collect();
    let slices: Vec<SliceSet> = analyses
        .iter()
        .filter(|a| a.needs_monitor())
        .filter_map(|a| c.loop_by_id(a.loop_id))
        .map(|l| slice(&c.cfg, l))
        .collect();
    attach_oracles(c, &srcs, &slices, mode).expect("analyses belong to this program")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Oracle {
    SrcHit,
    StuckHit,
    Revisit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proof {
    pub oracle: Oracle,
    pub loop_id: LoopId,
    pub line: usize,
    pub header: BlockId,
    /// Header visit within the current loop activation (0-based).
    pub iteration: u64,
    /// Header visits of this loop since the start of the run (1-based).
    pub visit: u64,
    pub steps: u64,
    pub witness: Vec<i128>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_iter: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunOutcome {
    Terminated { steps: u64 },
    NontermProof(Proof),
    Candidate { loop_id: LoopId, iteration: u64, matched_iter: u64 },
    BudgetExhausted { steps: u64 },
    RuntimeError { error: RuntimeErrorKind, block: BlockId },
}

impl RunOutcome {
    pub fn is_proof(&self) -> bool {
        matches!(self, RunOutcome::NontermProof(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub outcome: RunOutcome,
    pub steps: u64,
    pub proofs: Vec<Proof>,
    pub monitor_events: Vec<MonitorEvent>,
    pub tape: Vec<i128>,
    /// Indices of the CFG edges taken, ascending.
    #[serde(skip)]
    pub coverage: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub budget: u64,
    /// Keep at most this many monitor events in the report.
    pub max_events: usize,
    pub i0: u64,
    pub alpha: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            budget: 1_000_000,
            max_events: 1_000,
            i0: DEFAULT_I0,
            alpha: DEFAULT_ALPHA,
        }
    }
}

enum Event {
    Header { li: usize, entering: bool },
    Terminated,
    Budget,
    Error(RuntimeErrorKind, BlockId),
}

/// Steps a program block by block and stops at every loop-header arrival.
struct Machine<'a> {
    c: &'a Compiled,
    store: Store,
    tape: TapeReader<'a>,
    steps: u64,
    b: BlockId,
    prev: Option<BlockId>,
    announced: bool,
    hit: Vec<bool>,
}

impl<'a> Machine<'a> {
    fn new(c: &'a Compiled, tape: &'a InputTape) -> Result<Machine<'a>, RuntimeErrorKind> {
        let mut reader = tape.reader();
        let store = Store::from_tape(&c.program, &mut reader).map_err(|e| e.kind)?;
        Ok(Machine {
            c,
            store,
            tape: reader,
            steps: 0,
            b: c.cfg.entry,
            prev: None,
            announced: false,
            hit: vec![false; c.cfg.edges.len()],
        })
    }

    fn advance(&mut self, budget: u64) -> Event {
        let cfg = &self.c.cfg;
        loop {
            if !self.announced {
                self.announced = true;
                if let Some(li) = self.c.loop_at[self.b.0] {
                    let entering = self.prev.is_none_or(|p| !self.c.loops[li].contains(p));
                    return Event::Header { li, entering };
                }
            }
            match exec_block(cfg, self.b, &mut self.store, &mut self.tape, &mut self.steps, budget) {
                Ok(true) => {}
                Ok(false) => return Event::Budget,
                Err(e) => return Event::Error(e.kind, self.b),
            }
            match choose_edge(cfg, self.b, &self.store, &mut self.steps, budget) {
                Ok(Branch::Edge(e)) => {
                    if let Some(&i) = cfg.succs[self.b.0].iter().find(|&&i| std::ptr::eq(&cfg.edges[i], e)) {
                        self.hit[i] = true;
                    }
                    self.prev = Some(self.b);
                    self.b = e.to;
                    self.announced = false;
                }
                Ok(Branch::End) => return Event::Terminated,
                Ok(Branch::Budget) => return Event::Budget,
                Err(e) => return Event::Error(e.kind, self.b),
            }
        }
    }
}

struct LoopState {
    plan: Option<usize>,
    recorder: Option<Recorder>,
    iter: u64,
    visits: u64,
}

/// Run `c` on `tape` under the oracle plan.
pub fn run(c: &Compiled, tape: &InputTape, plan: &OraclePlan, opts: &RunOptions) -> RunReport {
    let mut report = RunReport {
        outcome: RunOutcome::Terminated { steps: 0 },
        steps: 0,
        proofs: Vec::new(),
        monitor_events: Vec::new(),
        tape: tape.values.clone(),
        coverage: Vec::new(),
    };
    let mut m = match Machine::new(c, tape) {
        Ok(m) => m,
        Err(error) => {
            report.outcome = RunOutcome::RuntimeError {
                error,
                block: c.cfg.entry,
            };
            return report;
        }
    };
    let mut state: Vec<LoopState> = c
        .loops
        .iter()
        .map(|l| {
            let plan_i = plan.loops.iter().position(|p| p.loop_id == l.id);
            LoopState {
                plan: plan_i,
                recorder: plan_i
                    .and_then(|i| plan.loops[i].monitor.clone())
                    .map(|s| {
                        let mut r = Recorder::new(&c.cfg, s);
                        r.i0 = opts.i0;
                        r.alpha = opts.alpha;
                        r.reset();
                        r
                    }),
                iter: 0,
                visits: 0,
            }
        })
        .collect();
    let mut candidate: Option<RunOutcome> = None;
    let outcome = loop {
        match m.advance(opts.budget) {
            Event::Header { li, entering } => {
                let st = &mut state[li];
                if entering {
                    st.iter = 0;
                    if let Some(r) = &mut st.recorder {
                        r.reset();
                    }
                } else {
                    st.iter += 1;
                }
                st.visits += 1;
                let Some(pi) = st.plan else { continue };
                let l = &c.loops[li];
                let proof = |oracle: Oracle, src: Option<String>, matched_iter: Option<u64>, st: &LoopState| Proof {
                    oracle,
                    loop_id: l.id,
                    line: l.line(),
                    header: l.header,
                    iteration: st.iter,
                    visit: st.visits,
                    steps: m.steps,
                    witness: tape.values.clone(),
                    src,
                    matched_iter,
                };
                if let Some(s) = plan.loops[pi].srcs.iter().find(|s| s.holds(&c.cfg, &m.store)) {
                    let oracle = match s.kind {
                        SrcKind::Lasso => Oracle::SrcHit,
                        SrcKind::Stuck => Oracle::StuckHit,
                    };
                    break RunOutcome::NontermProof(proof(oracle, Some(s.formula.to_string()), None, st));
                }
                if let Some(r) = &mut st.recorder {
                    let room = report.monitor_events.len() < opts.max_events;
                    let evs = room.then_some(&mut report.monitor_events);
                    match r.observe(&m.store, evs) {
                        Observation::Continue => {}
                        Observation::Revisit { prior } => {
                            break RunOutcome::NontermProof(proof(Oracle::Revisit, None, Some(prior.iter), st));
                        }
                        Observation::Candidate { prior } => {
                            candidate.get_or_insert(RunOutcome::Candidate {
                                loop_id: l.id,
                                iteration: st.iter,
                                matched_iter: prior.iter,
                            });
                        }
                    }
                }
            }
            Event::Terminated => break RunOutcome::Terminated { steps: m.steps },
            Event::Budget => {
                break candidate
                    .take()
                    .unwrap_or(RunOutcome::BudgetExhausted { steps: m.steps })
            }
            Event::Error(error, block) => break RunOutcome::RuntimeError { error, block },
        }
    };
    report.steps = m.steps;
    report.coverage = m.hit.iter().enumerate().filter(|p| *p.1).map(|p| p.0).collect();
    if let RunOutcome::NontermProof(p) = &outcome {
        report.proofs.push(p.clone());
    }
    report.outcome = outcome;
    report
}

/// Minimum header visits a confirmation replays.
pub const CONFIRM_MIN_VISITS: u64 = 100_000;

/// Replay the witness without oracles and check that the flagged loop keeps
/// running for `factor × (iteration + 1)` further header visits (at least
/// [`CONFIRM_MIN_VISITS`]). Revisit proofs must also show the sliced store
/// recurring one period later.
pub fn confirm(c: &Compiled, proof: &Proof, factor: u64) -> Result<bool, ExecError> {
    let li = c
        .loops
        .iter()
        .position(|l| l.id == proof.loop_id)
        .ok_or(ExecError::UnknownLoopId(proof.loop_id))?;
    let l = &c.loops[li];
    let tape = InputTape::new(proof.witness.clone());
    let diverged = || ExecError::ReplayDivergence {
        loop_id: proof.loop_id,
        visit: proof.visit,
    };
    let mut m = Machine::new(c, &tape).map_err(|_| diverged())?;
    let mut visits = 0u64;
    // Reach the flagged visit.
    loop {
        match m.advance(proof.steps + 1) {
            Event::Header { li: h, .. } if h == li => {
                visits += 1;
                if visits == proof.visit {
                    break;
                }
            }
            Event::Header { .. } => {}
            _ => return Err(diverged()),
        }
    }
    if m.steps != proof.steps {
        return Err(diverged());
    }
    let want = factor.saturating_mul(proof.iteration + 1).max(CONFIRM_MIN_VISITS);
    let step_cap = m.steps.saturating_add(want.saturating_mul(1_000).max(10_000_000));
    let period = proof.matched_iter.map(|mi| proof.iteration - mi);
    let sliced = |s: &Store| -> Vec<crate::lang::eval::Value> {
        slice(&c.cfg, l).vars.iter().map(|v| s.vals[v.0].clone()).collect()
    };
    let anchor = period.map(|_| sliced(&m.store));
    let mut seen = 0u64;
    while seen < want {
        match m.advance(step_cap) {
            Event::Header { li: h, entering } => {
                if !l.contains(m.b) || (h == li && entering) {
                    return Ok(false);
                }
                if h == li {
                    seen += 1;
                    if Some(seen) == period && anchor.as_ref() != Some(&sliced(&m.store)) {
                        return Ok(false);
                    }
                }
            }
            // Ran out of steps; still inside the loop?
            Event::Budget => return Ok(l.contains(m.b)),
            Event::Terminated | Event::Error(..) => return Ok(false),
        }
        // Any non-header block outside the region is caught at the next
        // announcement; check the current block as well.
        if !l.contains(m.b) {
            return Ok(false);
        }
    }
    Ok(true)
}
