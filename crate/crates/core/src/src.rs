//! Static revisit conditions (SRCs) for linear loops: worklist symbolic
//! execution over loop-path sequences with k-fold path summaries, lasso
//! inference by quantifier elimination, and stuck-path conditions.
//!
//! Symbolic values are linear expressions over the header variables and
//! iteration counters. A value marked `wrapped` stands for its reduction into
//! the variable's type; unmarked values are proven to stay in range.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::lang::ast::VarId;
use crate::lang::cfg::{BlockId, Cfg, Cond, Instr};
use crate::lang::classify::{linear_update, shift_update, LoopClass, NonLinearReason, Update};
use crate::lang::eval::{Store, Value};
use crate::lang::interp::{run_from_header, HeaderRun};
use crate::lang::loops::{Loop, LoopError, LoopId};
use crate::lang::types::Ty;
use crate::lia::{
    eliminate_quantifiers_with, is_sat_with, simplify, Atom, Formula, LiaConfig, LiaError, LinExpr, SatResult, Var,
};
use crate::paths::{cond_to_formula, enumerate_paths, lia_var, path_steps, LoopPath, PathError, Step, DEFAULT_PATH_CAP};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OverflowMode {
    /// Values wrap at the type width, as the interpreter does.
    #[default]
    Wrap,
    /// Treat every variable as an unbounded integer.
    Ignore,
}
/// Node cap for the analysis. Wrapped values of 16-bit and wider variables
/// make Cooper enumerate whole residue classes; past this the loop is left
/// to the monitor.
const SRC_NODE_CAP: usize = 300_000;
/// Conjuncts larger than this are not tested for redundancy.
const STRIP_MAX_SIZE: usize = 64;


#[derive(Clone, Debug)]
pub struct SrcConfig {
    /// Worklist iterations per loop.
    pub step_cap: usize,
    pub lia: LiaConfig,
    pub overflow: OverflowMode,
    /// Skip a transition pair already taken in the same trace.
    pub prune_visited: bool,
    /// Header visits allowed when replaying a model.
    pub replay_visits: u64,
    pub path_cap: usize,
}

impl Default for SrcConfig {
    fn default() -> Self {
        SrcConfig {
            step_cap: 10_000,
            lia: LiaConfig { node_cap: SRC_NODE_CAP },
            overflow: OverflowMode::Wrap,
            prune_visited: true,
            replay_visits: 100_000,
            path_cap: DEFAULT_PATH_CAP,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SrcError {
    #[error("path τ{0} is not inductive")]
    NotInductive(usize),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Lia(#[from] LiaError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SrcKind {
    Lasso,
    Stuck,
}

/// Path ids (1-based) the SRC was derived from. A stuck SRC has an empty stem
/// and a one-element cycle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub stem: Vec<usize>,
    pub cycle: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Src {
    pub loop_id: LoopId,
    pub header: BlockId,
    /// Over the header values of the program's scalar variables.
    pub formula: Formula,
    pub kind: SrcKind,
    pub provenance: Provenance,
    pub validated: bool,
}

impl Src {
    /// Does a concrete header store satisfy the condition?
    pub fn holds(&self, cfg: &Cfg, store: &Store) -> bool {
        let env = store_model(cfg, store);
        self.formula.eval(&env).unwrap_or(false)
    }
}

/// Scalar variables of a store as a formula model.
pub fn store_model(cfg: &Cfg, store: &Store) -> BTreeMap<Var, i128> {
    cfg.vars
        .iter()
        .enumerate()
        .filter_map(|(i, d)| match &store.vals[i] {
            Value::Scalar(v) if !d.is_array() => Some((Var::new(&d.name), *v)),
            _ => None,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Summaries

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SigmaEntry {
    /// `x ↦ x + k·step`
    Affine { step: i128 },
    /// `x ↦ c` for `k ≥ 1`
    Reset(i128),
    /// `x ↦ x >> (k·shift)`; zero once `k·shift ≥ width`.
    EventuallyZero { shift: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Summary {
    pub path: usize,
    pub k: Var,
    pub sigma: BTreeMap<VarId, SigmaEntry>,
    /// The path condition at the last of the k iterations (for
    /// `EventuallyZero` entries, the two-phase eventual-value constraint).
    pub phi: Formula,
    /// Variables whose values may leave their type range.
    pub wrap: BTreeSet<VarId>,
    pub types: BTreeMap<VarId, Ty>,
}

impl Summary {
    /// Concrete store after `k ≥ 1` executions of the path.
    pub fn apply(&self, pre: &BTreeMap<VarId, i128>, k: i128) -> BTreeMap<VarId, i128> {
        let mut out = pre.clone();
        for (v, s) in &self.sigma {
            let ty = self.types[v];
            let x = pre[v];
            let val = match s {
                SigmaEntry::Affine { step } => x + k * step,
                SigmaEntry::Reset(c) => *c,
                SigmaEntry::EventuallyZero { shift } => {
                    let total = k.saturating_mul(*shift as i128);
                    if total >= ty.width() as i128 {
                        0
                    } else {
                        x >> total
                    }
                }
            };
            out.insert(*v, if self.wrap.contains(v) { ty.wrap(val) } else { val });
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Symbolic stores

#[derive(Clone, Debug, PartialEq, Eq)]
struct SymVal {
    expr: LinExpr,
    wrapped: bool,
}

type SymStore = BTreeMap<VarId, SymVal>;

/// One assignment's result, relative to the value at the start of the
/// iteration or absolute after a reset.
#[derive(Clone, Copy, Debug)]
enum Prefix {
    Rel(i128),
    Abs,
}

struct PathInfo {
    steps: Vec<Step>,
    upd: BTreeMap<VarId, Update>,
    prefix: BTreeMap<VarId, Vec<Prefix>>,
    has_reset: bool,
    /// Program variables read by some guard of the path.
    guard_vars: BTreeSet<VarId>,
    /// The guards form a conjunction of inequalities and equalities.
    convex: bool,
}

struct Ctx<'a> {
    cfg: &'a Cfg,
    conf: &'a SrcConfig,
    names: BTreeMap<Var, VarId>,
    scalars: Vec<VarId>,
    paths: Vec<PathInfo>,
    next_fresh: std::cell::Cell<usize>,
}

fn compose(a: Update, b: Update, ty: Ty) -> Update {
    match (a, b) {
        (_, Update::Const(c)) => Update::Const(c),
        (Update::Offset(x), Update::Offset(y)) => Update::Offset(x + y),
        (Update::Const(c), Update::Offset(y)) => Update::Const(ty.wrap(c + y)),
    }
}

fn is_convex(f: &Formula) -> bool {
    match f {
        Formula::True | Formula::False => true,
        Formula::Atom(Atom::Le(_) | Atom::Eq(_)) => true,
        Formula::And(fs) => fs.iter().all(is_convex),
        _ => false,
    }
}

fn lia(e: LiaError) -> SrcError {
    SrcError::Lia(e)
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a Cfg, paths: &[LoopPath], conf: &'a SrcConfig) -> Result<Ctx<'a>, SrcError> {
        let scalars: Vec<VarId> = (0..cfg.vars.len())
            .filter(|&i| !cfg.vars[i].is_array())
            .map(VarId)
            .collect();
        let names = scalars.iter().map(|&v| (lia_var(&cfg.vars, v), v)).collect();
        let mut ctx = Ctx {
            cfg,
            conf,
            names,
            scalars,
            paths: Vec::new(),
            next_fresh: std::cell::Cell::new(0),
        };
        for p in paths {
            let steps = path_steps(cfg, p)?;
            let info = ctx.path_info(steps)?;
            ctx.paths.push(info);
        }
        Ok(ctx)
    }

    fn path_info(&self, steps: Vec<Step>) -> Result<PathInfo, SrcError> {
        let mut upd: BTreeMap<VarId, Update> = BTreeMap::new();
        let mut prefix: BTreeMap<VarId, Vec<Prefix>> = BTreeMap::new();
        let mut guard_vars = BTreeSet::new();
        let mut has_reset = false;
        for s in &steps {
            match s {
                Step::Assign(v, u) => {
                    let ty = self.ty(*v);
                    let cur = upd.get(v).copied().unwrap_or(Update::Offset(0));
                    let next = compose(cur, *u, ty);
                    upd.insert(*v, next);
                    has_reset |= matches!(next, Update::Const(_));
                    prefix.entry(*v).or_default().push(match next {
                        Update::Offset(c) => Prefix::Rel(c),
                        Update::Const(_) => Prefix::Abs,
                    });
                }
                Step::Guard(g) => {
                    for x in g.free_vars() {
                        guard_vars.insert(self.names[&x]);
                    }
                }
            }
        }
        let mut info = PathInfo {
            steps,
            upd,
            prefix,
            has_reset,
            guard_vars,
            convex: false,
        };
        let ident = self.identity();
        info.convex = is_convex(&simplify(&self.guard_at(&info, &ident)?).map_err(lia)?);
        Ok(info)
    }

    fn ty(&self, v: VarId) -> Ty {
        self.cfg.vars[v.0].ty
    }

    fn fresh(&self, base: &str) -> Var {
        let n = self.next_fresh.get();
        self.next_fresh.set(n + 1);
        Var::new(&format!("{base}#{n}"))
    }

    fn identity(&self) -> SymStore {
        self.scalars
            .iter()
            .map(|&v| {
                (
                    v,
                    SymVal {
                        expr: LinExpr::var(lia_var(&self.cfg.vars, v)),
                        wrapped: false,
                    },
                )
            })
            .collect()
    }

    fn in_range(&self, v: VarId, e: &LinExpr) -> Formula {
        let ty = self.ty(v);
        Formula::and([Formula::ge(e.clone(), ty.min()), Formula::le(e.clone(), ty.max())])
    }

    fn out_of_range(&self, v: VarId, e: &LinExpr) -> Formula {
        let ty = self.ty(v);
        Formula::or([Formula::lt(e.clone(), ty.min()), Formula::gt(e.clone(), ty.max())])
    }

    fn ranges(&self) -> Vec<Formula> {
        self.scalars
            .iter()
            .map(|&v| self.in_range(v, &LinExpr::var(lia_var(&self.cfg.vars, v))))
            .collect()
    }

    /// A guard over program variables, evaluated on a symbolic store.
    fn encode(&self, g: &Formula, st: &SymStore) -> Result<Formula, SrcError> {
        Ok(match g {
            Formula::True | Formula::False => g.clone(),
            Formula::Not(f) => Formula::not(self.encode(f, st)?),
            Formula::And(fs) => Formula::And(fs.iter().map(|f| self.encode(f, st)).collect::<Result<_, _>>()?),
            Formula::Or(fs) => Formula::Or(fs.iter().map(|f| self.encode(f, st)).collect::<Result<_, _>>()?),
            Formula::Atom(a) => self.encode_atom(a, st)?,
            Formula::Exists(..) | Formula::Forall(..) => return Err(LiaError::Quantified.into()),
        })
    }

    fn encode_atom(&self, a: &Atom, st: &SymStore) -> Result<Formula, SrcError> {
        let e = a.expr();
        let vars: Vec<VarId> = e.vars().map(|x| self.names[x]).collect();
        let flagged: Vec<VarId> = vars.iter().copied().filter(|v| st[v].wrapped).collect();
        let math: BTreeMap<Var, LinExpr> = vars
            .iter()
            .filter(|v| !st[v].wrapped)
            .map(|&v| (lia_var(&self.cfg.vars, v), st[&v].expr.clone()))
            .collect();
        if flagged.is_empty() {
            return Ok(Formula::Atom(a.map_expr(|e| e.substitute_all(&math))?));
        }
        // x = t with a single wrapped x: the wrapped value equals t exactly
        // when t is in x's range and congruent to x's unreduced value.
        if let (Atom::Eq(_) | Atom::Ne(_), [x]) = (a, flagged.as_slice()) {
            let xv = lia_var(&self.cfg.vars, *x);
            let c = e.coeff(&xv);
            if c == 1 || c == -1 {
                let rest = e.without(&xv).substitute_all(&math).map_err(lia)?;
                let t = if c == 1 { rest.checked_scale(-1)? } else { rest };
                let m = &st[x].expr;
                let eq = Formula::and([
                    Formula::dvd(self.ty(*x).modulus(), m.checked_sub(&t)?),
                    self.in_range(*x, &t),
                ]);
                return Ok(if matches!(a, Atom::Eq(_)) { eq } else { Formula::not(eq) });
            }
        }
        let mut sub = math;
        let mut side = Vec::new();
        let mut bound = Vec::new();
        for &x in &flagged {
            let r = self.fresh("w");
            side.push(self.in_range(x, &LinExpr::var(r.clone())));
            side.push(Formula::dvd(
                self.ty(x).modulus(),
                st[&x].expr.checked_sub(&LinExpr::var(r.clone()))?,
            ));
            sub.insert(lia_var(&self.cfg.vars, x), LinExpr::var(r.clone()));
            bound.push(r);
        }
        side.push(Formula::Atom(a.map_expr(|e| e.substitute_all(&sub))?));
        let mut f = Formula::And(side);
        for r in bound.into_iter().rev() {
            f = Formula::exists(r, f);
        }
        Ok(f)
    }

    /// The path's condition when it starts from `start`.
    fn guard_at(&self, p: &PathInfo, start: &SymStore) -> Result<Formula, SrcError> {
        let mut cur = start.clone();
        let mut parts = Vec::new();
        for s in &p.steps {
            match s {
                Step::Assign(v, u) => {
                    let ty = self.ty(*v);
                    let old = &cur[v];
                    let new = match u {
                        Update::Const(c) => SymVal {
                            expr: LinExpr::constant(*c),
                            wrapped: false,
                        },
                        // Constants are reduced on the spot.
                        Update::Offset(c) if old.expr.is_const() => SymVal {
                            expr: LinExpr::constant(ty.wrap(ty.wrap(old.expr.konst()) + c)),
                            wrapped: false,
                        },
                        Update::Offset(c) => SymVal {
                            expr: old.expr.checked_add_const(*c)?,
                            wrapped: old.wrapped,
                        },
                    };
                    cur.insert(*v, new);
                }
                Step::Guard(g) => parts.push(self.encode(g, &cur)?),
            }
        }
        Ok(match parts.len() {
            0 => Formula::True,
            1 => parts.pop().unwrap(),
            _ => Formula::And(parts),
        })
    }

    /// Store after `j` executions of the path; `j ≥ 1` unless the path has no
    /// resets.
    fn iterate(&self, p: &PathInfo, start: &SymStore, j: &LinExpr) -> Result<SymStore, SrcError> {
        let mut out = start.clone();
        for (v, u) in &p.upd {
            let val = match u {
                Update::Offset(0) => continue,
                Update::Offset(c) => SymVal {
                    expr: start[v].expr.checked_add(&j.checked_scale(*c)?)?,
                    wrapped: start[v].wrapped,
                },
                Update::Const(c) => SymVal {
                    expr: LinExpr::constant(*c),
                    wrapped: false,
                },
            };
            out.insert(*v, val);
        }
        Ok(out)
    }

    fn boundary_ok(&self, p: &PathInfo, st: &SymStore) -> bool {
        p.convex && !p.guard_vars.iter().any(|v| st[v].wrapped)
    }

    /// θ holds at every iteration i with `lo ≤ i ≤ hi` (lo ≥ 1).
    fn guard_between(&self, p: &PathInfo, start: &SymStore, lo: i128, hi: &LinExpr) -> Result<Formula, SrcError> {
        let i = self.fresh("j");
        let iv = LinExpr::var(i.clone());
        let body = self.guard_at(p, &self.iterate(p, start, &iv)?)?;
        Ok(Formula::forall(
            i,
            Formula::or([Formula::lt(iv.clone(), lo), Formula::gt(iv, hi.clone()), body]),
        ))
    }

    /// θ holds after each of the first `n` executions, given that it holds
    /// initially (`n` may be zero).
    fn guard_upto(&self, p: &PathInfo, start: &SymStore, n: &LinExpr) -> Result<Formula, SrcError> {
        if self.boundary_ok(p, start) {
            if !p.has_reset {
                // Linear guards along a straight line: the endpoints suffice.
                return self.guard_at(p, &self.iterate(p, start, n)?);
            }
            let first = self.guard_at(p, &self.iterate(p, start, &LinExpr::constant(1))?)?;
            let last = self.guard_at(p, &self.iterate(p, start, n)?)?;
            return Ok(Formula::or([
                Formula::le(n.clone(), 0),
                Formula::and([first, last]),
            ]));
        }
        self.guard_between(p, start, 1, n)
    }

    /// Variables that may leave their range while the path runs from `start`
    /// up to `kmax` times (unbounded if `None`), given `tc`.
    fn overflow_vars(
        &self,
        tc: &[Formula],
        p: &PathInfo,
        start: &SymStore,
        kmax: Option<&LinExpr>,
    ) -> Result<BTreeSet<VarId>, SrcError> {
        if self.conf.overflow == OverflowMode::Ignore {
            return Ok(BTreeSet::new());
        }
        let j = self.fresh("j");
        let jv = LinExpr::var(j.clone());
        let mut outs = Vec::new();
        let mut cands = BTreeSet::new();
        for (v, pre) in &p.prefix {
            if start[v].wrapped {
                continue;
            }
            let step = match p.upd[v] {
                Update::Offset(c) => c,
                Update::Const(_) => 0,
            };
            let reset = matches!(p.upd[v], Update::Const(_));
            let mut mine = Vec::new();
            for pf in pre {
                let Prefix::Rel(d) = *pf else { break };
                if d == 0 {
                    continue;
                }
                if reset {
                    // Before the reset the iteration starts from the header
                    // value (first iteration) or the reset value (later ones).
                    let Update::Const(c) = p.upd[v] else { unreachable!() };
                    mine.push(Formula::and([
                        Formula::eq(jv.clone(), 1),
                        self.out_of_range(*v, &start[v].expr.checked_add_const(d)?),
                    ]));
                    if !self.ty(*v).contains(c + d) {
                        mine.push(Formula::ge(jv.clone(), 2));
                    }
                } else {
                    let base = start[v].expr.checked_add(&jv.checked_add_const(-1)?.checked_scale(step)?)?;
                    mine.push(self.out_of_range(*v, &base.checked_add_const(d)?));
                }
            }
            if !mine.is_empty() {
                cands.insert(*v);
                outs.extend(mine);
            }
        }
        if cands.is_empty() {
            return Ok(cands);
        }
        let mut f: Vec<Formula> = tc.to_vec();
        f.push(Formula::ge(jv.clone(), 1));
        if let Some(k) = kmax {
            f.push(Formula::le(jv.clone(), k.clone()));
        }
        // The first j − 1 iterations completed without overflow.
        f.push(self.guard_upto(p, start, &jv.checked_add_const(-2)?)?);
        f.push(Formula::Or(outs));
        let f = Formula::exists(j, Formula::And(f));
        match is_sat_with(&f, &self.conf.lia) {
            Ok(SatResult::Unsat) => Ok(BTreeSet::new()),
            Ok(SatResult::Sat(_)) => Ok(cands),
            Err(LiaError::ResourceBudgetExceeded(_)) => Ok(cands),
            Err(e) => Err(e.into()),
        }
    }

    fn with_flags(start: &SymStore, flags: &BTreeSet<VarId>) -> SymStore {
        let mut s = start.clone();
        for v in flags {
            s.get_mut(v).unwrap().wrapped = true;
        }
        s
    }

    fn store_eq(&self, a: &SymStore, b: &SymStore) -> Result<Formula, SrcError> {
        let mut parts = Vec::new();
        for v in &self.scalars {
            let (x, y) = (&a[v], &b[v]);
            if x.expr == y.expr {
                continue;
            }
            let d = x.expr.checked_sub(&y.expr)?;
            parts.push(if x.wrapped || y.wrapped {
                Formula::dvd(self.ty(*v).modulus(), d)
            } else {
                Formula::Atom(Atom::Eq(d))
            });
        }
        Ok(Formula::And(parts))
    }

    /// Drop conjuncts implied by the type ranges alone.
    fn strip_ranges(&self, f: Formula) -> Result<Formula, SrcError> {
        let ranges = Formula::And(self.ranges());
        let implied = |c: &Formula| -> Result<bool, SrcError> {
            if c.size() > STRIP_MAX_SIZE {
                return Ok(false);
            }
            let q = Formula::and([ranges.clone(), Formula::not(c.clone())]);
            Ok(!is_sat_with(&q, &self.conf.lia)?.is_sat())
        };
        Ok(match f {
            Formula::And(cs) => {
                let mut keep = Vec::new();
                for c in cs {
                    if !implied(&c)? {
                        keep.push(c);
                    }
                }
                simplify(&Formula::And(keep))?
            }
            other if implied(&other)? => Formula::True,
            other => other,
        })
    }

    fn finish(&self, f: Formula) -> Result<Formula, SrcError> {
        let g = eliminate_quantifiers_with(&f, &self.conf.lia)?;
        let g = simplify(&g)?;
        if g == Formula::False {
            return Ok(g);
        }
        let mut q = vec![g.clone()];
        q.extend(self.ranges());
        if !is_sat_with(&Formula::And(q), &self.conf.lia)?.is_sat() {
            return Ok(Formula::False);
        }
        self.strip_ranges(g)
    }

    /// A concrete header store from a model of `f` (absent variables are 0).
    fn model_store(&self, f: &Formula) -> Result<Option<Store>, SrcError> {
        let mut q = vec![f.clone()];
        q.extend(self.ranges());
        let SatResult::Sat(m) = is_sat_with(&Formula::And(q), &self.conf.lia)? else {
            return Ok(None);
        };
        let mut store = Store {
            vals: self
                .cfg
                .vars
                .iter()
                .map(|d| match d.len {
                    Some(n) => Value::Array(vec![0; n]),
                    None => Value::Scalar(0),
                })
                .collect(),
        };
        for (x, val) in m {
            if let Some(v) = self.names.get(&x) {
                store.set(*v, val);
            }
        }
        Ok(Some(store))
    }
}

impl Ty {
    fn contains(self, v: i128) -> bool {
        self.min() <= v && v <= self.max()
    }
}

// ---------------------------------------------------------------------------
// Public operations

/// Every variable's composed update is `x + c` or `c`.
pub fn is_inductive(cfg: &Cfg, path: &LoopPath) -> bool {
    path_steps(cfg, path).is_ok()
}

pub fn summarize_path(cfg: &Cfg, path: &LoopPath, k: &Var, conf: &SrcConfig) -> Result<Summary, SrcError> {
    let ctx = Ctx::new(cfg, std::slice::from_ref(path), conf).map_err(|e| match e {
        SrcError::Path(_) => SrcError::NotInductive(path.id),
        e => e,
    })?;
    let p = &ctx.paths[0];
    let start = ctx.identity();
    let mut tc = ctx.ranges();
    tc.push(ctx.guard_at(p, &start)?);
    let wrap = ctx.overflow_vars(&tc, p, &start, None)?;
    let start = Ctx::with_flags(&start, &wrap);
    let kv = LinExpr::var(k.clone());
    let phi = ctx.guard_upto(p, &start, &kv.checked_add_const(-1)?)?;
    let sigma = p
        .upd
        .iter()
        .map(|(v, u)| {
            (
                *v,
                match u {
                    Update::Offset(c) => SigmaEntry::Affine { step: *c },
                    Update::Const(c) => SigmaEntry::Reset(*c),
                },
            )
        })
        .collect();
    Ok(Summary {
        path: path.id,
        k: k.clone(),
        sigma,
        phi,
        wrap,
        types: ctx.scalars.iter().map(|&v| (v, ctx.ty(v))).collect(),
    })
}

/// Condition under which the path repeats forever: its guard holds at every
/// iteration from the current one on. `None` if unsatisfiable.
pub fn detect_stuck(cfg: &Cfg, path: &LoopPath, conf: &SrcConfig) -> Result<Option<Formula>, SrcError> {
    let ctx = Ctx::new(cfg, std::slice::from_ref(path), conf).map_err(|e| match e {
        SrcError::Path(_) => SrcError::NotInductive(path.id),
        e => e,
    })?;
    stuck_in(&ctx, 0)
}

fn stuck_in(ctx: &Ctx<'_>, pi: usize) -> Result<Option<Formula>, SrcError> {
    let p = &ctx.paths[pi];
    let start = ctx.identity();
    let mut tc = ctx.ranges();
    tc.push(ctx.guard_at(p, &start)?);
    let flags = ctx.overflow_vars(&tc, p, &start, None)?;
    let start = Ctx::with_flags(&start, &flags);
    let k = ctx.fresh("k");
    let kv = LinExpr::var(k.clone());
    let later = ctx.guard_at(p, &ctx.iterate(p, &start, &kv)?)?;
    tc.push(Formula::forall(k, Formula::or([Formula::lt(kv, 1), later])));
    let f = ctx.finish(Formula::And(tc))?;
    Ok((f != Formula::False).then_some(f))
}

enum ShiftStep {
    Lin(VarId, Update),
    Shr(VarId, u32),
    Guard(Formula),
}

fn shift_steps(cfg: &Cfg, p: &LoopPath) -> Option<Vec<ShiftStep>> {
    let mut out = Vec::new();
    for (i, &b) in p.blocks[..p.blocks.len() - 1].iter().enumerate() {
        for ins in &cfg.block(b).instrs {
            match ins {
                Instr::Assign(v, e) => {
                    let ty = cfg.vars[v.0].ty;
                    if let Some(u) = linear_update(*v, ty, e) {
                        out.push(ShiftStep::Lin(*v, u));
                    } else {
                        out.push(ShiftStep::Shr(*v, shift_update(*v, ty, e)?));
                    }
                }
                Instr::Skip | Instr::Break => {}
                Instr::Store(..) | Instr::Nondet(_) => return None,
            }
        }
        match &cfg.edges[p.edges[i]].cond {
            Cond::Always => {}
            Cond::If(c) => out.push(ShiftStep::Guard(cond_to_formula(&cfg.vars, c).ok()?)),
            Cond::IfNot(c) => out.push(ShiftStep::Guard(Formula::not(cond_to_formula(&cfg.vars, c).ok()?))),
        }
    }
    Some(out)
}

/// Eventual-value summary of a path whose only non-linear updates are
/// unsigned right shifts by a positive constant. Other variables read by the
/// guards must be left unchanged.
pub fn nonlinear_summary(cfg: &Cfg, path: &LoopPath, k: &Var) -> Option<Summary> {
    let steps = shift_steps(cfg, path)?;
    let mut shifted: BTreeMap<VarId, u32> = BTreeMap::new();
    let mut changed = BTreeSet::new();
    let mut guard_vars = BTreeSet::new();
    for s in &steps {
        match s {
            ShiftStep::Shr(v, c) if *c > 0 => *shifted.entry(*v).or_default() += c,
            ShiftStep::Shr(..) | ShiftStep::Lin(_, Update::Offset(0)) => {}
            ShiftStep::Lin(v, _) => {
                changed.insert(*v);
            }
            ShiftStep::Guard(g) => guard_vars.extend(g.free_vars()),
        }
    }
    if shifted.is_empty() || shifted.keys().any(|v| changed.contains(v)) {
        return None;
    }
    if changed.iter().any(|v| guard_vars.contains(&lia_var(&cfg.vars, *v))) {
        return None;
    }
    let kv = LinExpr::var(k.clone());
    let mut phase = Vec::new();
    for (v, c) in &shifted {
        let ty = cfg.vars[v.0].ty;
        let x = LinExpr::var(lia_var(&cfg.vars, *v));
        // After ⌈width / c⌉ iterations every bit is gone.
        let settle = (ty.width() as i128 + *c as i128 - 1) / *c as i128;
        phase.push(Formula::or([
            Formula::and([Formula::eq(x.clone(), 0), Formula::ge(kv.clone(), settle)]),
            Formula::and([
                Formula::lt(kv.clone(), settle),
                Formula::ge(x.clone(), 0),
                Formula::le(x, ty.max()),
            ]),
        ]));
    }
    let mut sigma = BTreeMap::new();
    for (v, c) in &shifted {
        sigma.insert(*v, SigmaEntry::EventuallyZero { shift: *c });
    }
    let mut rel = BTreeMap::new();
    for s in &steps {
        if let ShiftStep::Lin(v, u) = s {
            let cur = rel.get(v).copied().unwrap_or(Update::Offset(0));
            rel.insert(*v, compose(cur, *u, cfg.vars[v.0].ty));
        }
    }
    for (v, u) in rel {
        sigma.insert(
            v,
            match u {
                Update::Offset(c) => SigmaEntry::Affine { step: c },
                Update::Const(c) => SigmaEntry::Reset(c),
            },
        );
    }
    let types = (0..cfg.vars.len())
        .filter(|&i| !cfg.vars[i].is_array())
        .map(|i| (VarId(i), cfg.vars[i].ty))
        .collect();
    Some(Summary {
        path: path.id,
        k: k.clone(),
        sigma,
        phi: Formula::And(phase),
        wrap: changed,
        types,
    })
}

/// Stuck condition of a shift path: the guard must hold for every value the
/// shifted variables can take before they settle, and for zero afterwards.
fn shift_stuck(ctx: &Ctx<'_>, path: &LoopPath) -> Result<Option<Formula>, SrcError> {
    let k = ctx.fresh("k");
    let Some(sum) = nonlinear_summary(ctx.cfg, path, &k) else {
        return Ok(None);
    };
    let steps = shift_steps(ctx.cfg, path).expect("summarised above");
    let shifted: Vec<VarId> = sum
        .sigma
        .iter()
        .filter(|(_, s)| matches!(s, SigmaEntry::EventuallyZero { .. }))
        .map(|(v, _)| *v)
        .collect();
    // Each guard read of a shifted variable gets its own value.
    let build = |settled: bool| -> Result<(Formula, Vec<(Var, VarId)>), SrcError> {
        let mut parts = Vec::new();
        let mut fresh = Vec::new();
        for s in &steps {
            if let ShiftStep::Guard(g) = s {
                let mut sub = BTreeMap::new();
                for &v in &shifted {
                    let name = lia_var(&ctx.cfg.vars, v);
                    if g.free_vars().contains(&name) {
                        if settled {
                            sub.insert(name, LinExpr::constant(0));
                        } else {
                            let r = ctx.fresh("w");
                            sub.insert(name, LinExpr::var(r.clone()));
                            fresh.push((r, v));
                        }
                    }
                }
                parts.push(g.substitute(&sub)?);
            }
        }
        Ok((Formula::And(parts), fresh))
    };
    let (early, fresh) = build(false)?;
    let (late, _) = build(true)?;
    let mut early = early;
    for (r, v) in fresh.into_iter().rev() {
        early = Formula::forall(
            r.clone(),
            Formula::implies(ctx.in_range(v, &LinExpr::var(r)), early),
        );
    }
    let mut tc = ctx.ranges();
    tc.push(early);
    tc.push(late);
    let f = ctx.finish(Formula::And(tc))?;
    Ok((f != Formula::False).then_some(f))
}

// ---------------------------------------------------------------------------
// Lasso search

#[derive(Clone, Debug)]
struct SymState {
    /// Indices into the cyclic path list.
    trace: Vec<usize>,
    tc: Vec<Formula>,
    store: SymStore,
    /// Store at the start of each trace element.
    store_at: Vec<SymStore>,
    pairs: BTreeSet<(usize, usize)>,
}

#[derive(Clone, Debug, Default)]
pub struct InferResult {
    pub srcs: Vec<Src>,
    pub budget_exhausted: bool,
    /// SRCs that failed replay, and other internal inconsistencies.
    pub defects: Vec<String>,
}

fn canonical_rotation(c: &[usize]) -> Vec<usize> {
    (0..c.len())
        .map(|i| c[i..].iter().chain(&c[..i]).copied().collect::<Vec<_>>())
        .min()
        .unwrap_or_default()
}

fn equivalent(a: &Formula, b: &Formula, conf: &LiaConfig) -> bool {
    let diff = |x: &Formula, y: &Formula| {
        is_sat_with(&Formula::and([x.clone(), Formula::not(y.clone())]), conf).map(|r| !r.is_sat())
    };
    matches!((diff(a, b), diff(b, a)), (Ok(true), Ok(true)))
}

/// Worklist symbolic execution from each cyclic path, collecting lasso SRCs.
pub fn infer_src(cfg: &Cfg, l: &Loop, paths: &[LoopPath], conf: &SrcConfig) -> Result<InferResult, SrcError> {
    let cyclic: Vec<LoopPath> = paths.iter().filter(|p| p.is_cyclic()).cloned().collect();
    let ctx = Ctx::new(cfg, &cyclic, conf)?;
    let mut res = InferResult::default();
    let mut found: Vec<(Vec<usize>, Src)> = Vec::new();
    let mut iterations = 0usize;
    let region = |b: BlockId| l.contains(b);

    'outer: for p0 in 0..ctx.paths.len() {
        let start = ctx.identity();
        let mut tc = ctx.ranges();
        tc.push(ctx.guard_at(&ctx.paths[p0], &start)?);
        match is_sat_with(&Formula::And(tc.clone()), &conf.lia) {
            Ok(SatResult::Sat(_)) => {}
            Ok(SatResult::Unsat) => continue,
            Err(_) => {
                res.budget_exhausted = true;
                continue;
            }
        }
        let mut work = VecDeque::from([SymState {
            trace: vec![p0],
            tc,
            store: start.clone(),
            store_at: vec![start],
            pairs: BTreeSet::new(),
        }]);
        while let Some(s) = work.pop_front() {
            iterations += 1;
            if iterations > conf.step_cap {
                res.budget_exhausted = true;
                break 'outer;
            }
            let t = *s.trace.last().unwrap();
            let pt = &ctx.paths[t];
            for t2 in 0..ctx.paths.len() {
                if cyclic[t2].head() != cyclic[t].tail() {
                    continue;
                }
                if conf.prune_visited && s.pairs.contains(&(t, t2)) {
                    continue;
                }
                let step = (|| -> Result<Option<SymState>, SrcError> {
                    let k = ctx.fresh("k");
                    let kv = LinExpr::var(k.clone());
                    let mut tc = s.tc.clone();
                    tc.push(Formula::ge(kv.clone(), 1));
                    let flags = ctx.overflow_vars(&tc, pt, &s.store, Some(&kv))?;
                    let from = Ctx::with_flags(&s.store, &flags);
                    tc.push(ctx.guard_upto(pt, &from, &kv.checked_add_const(-1)?)?);
                    let after = ctx.iterate(pt, &from, &kv)?;
                    tc.push(ctx.guard_at(&ctx.paths[t2], &after)?);
                    if !is_sat_with(&Formula::And(tc.clone()), &conf.lia)?.is_sat() {
                        return Ok(None);
                    }
                    let mut n = s.clone();
                    n.trace.push(t2);
                    n.tc = tc;
                    n.store = after.clone();
                    n.store_at.push(after);
                    n.pairs.insert((t, t2));
                    Ok(Some(n))
                })();
                let n = match step {
                    Ok(Some(n)) => n,
                    Ok(None) => continue,
                    Err(SrcError::Lia(LiaError::ResourceBudgetExceeded(_))) => {
                        res.budget_exhausted = true;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let last = n.trace.len() - 1;
                if let Some(m) = n.trace[..last].iter().position(|&x| x == t2) {
                    let cycle: Vec<usize> = n.trace[m..last].to_vec();
                    let canon = canonical_rotation(&cycle);
                    let dup = found.iter().any(|(c, _)| *c == canon);
                    if !dup {
                        let inferred = (|| -> Result<Formula, SrcError> {
                            let mut body = n.tc.clone();
                            body.push(ctx.store_eq(&n.store_at[m], &n.store)?);
                            let mut f = Formula::And(body);
                            let xs: BTreeSet<Var> = ctx.names.keys().cloned().collect();
                            for v in f.free_vars().into_iter().rev() {
                                if !xs.contains(&v) {
                                    f = Formula::exists(v, f);
                                }
                            }
                            ctx.finish(f)
                        })();
                        match inferred {
                            Ok(Formula::False) => {}
                            Ok(f) => {
                                let ids = |v: &[usize]| v.iter().map(|&i| cyclic[i].id).collect::<Vec<_>>();
                                let src = Src {
                                    loop_id: l.id,
                                    header: l.header,
                                    formula: f,
                                    kind: SrcKind::Lasso,
                                    provenance: Provenance {
                                        stem: ids(&n.trace[..m]),
                                        cycle: ids(&cycle),
                                    },
                                    validated: false,
                                };
                                found.push((canon, src));
                            }
                            Err(SrcError::Lia(LiaError::ResourceBudgetExceeded(_))) => res.budget_exhausted = true,
                            Err(e) => return Err(e),
                        }
                    }
                }
                work.push_back(n);
            }
        }
    }

    for (_, mut src) in found {
        if res.srcs.iter().any(|s: &Src| equivalent(&s.formula, &src.formula, &conf.lia)) {
            continue;
        }
        match validate(&ctx, &src, &region) {
            Ok(true) => {
                src.validated = true;
                res.srcs.push(src);
            }
            Ok(false) => res
                .defects
                .push(format!("lasso SRC {} failed replay", src.formula)),
            Err(e) => res.defects.push(format!("lasso SRC {} not checked: {e}", src.formula)),
        }
    }
    Ok(res)
}

fn validate(ctx: &Ctx<'_>, src: &Src, region: &dyn Fn(BlockId) -> bool) -> Result<bool, SrcError> {
    let Some(store) = ctx.model_store(&src.formula)? else {
        return Ok(false);
    };
    let run = run_from_header(ctx.cfg, src.header, region, &store, ctx.conf.replay_visits);
    Ok(match src.kind {
        SrcKind::Lasso => matches!(run, HeaderRun::Revisit { .. }),
        SrcKind::Stuck => matches!(run, HeaderRun::Revisit { .. } | HeaderRun::Budget { .. }),
    })
}

// ---------------------------------------------------------------------------
// Per-loop driver

#[derive(Clone, Debug, Serialize)]
pub struct SrcReport {
    pub kind: SrcKind,
    pub formula_text: String,
    pub provenance: Provenance,
    pub validated: bool,
}

#[derive(Clone, Debug)]
pub struct LoopAnalysis {
    pub loop_id: LoopId,
    pub header: BlockId,
    pub line: usize,
    pub class: LoopClass,
    pub paths: Vec<LoopPath>,
    pub srcs: Vec<Src>,
    pub budget_exhausted: bool,
    pub defects: Vec<String>,
}

impl LoopAnalysis {
    /// Loops the revisit monitor must watch at run time.
    pub fn needs_monitor(&self) -> bool {
        !matches!(self.class, LoopClass::Linear) || self.budget_exhausted
    }

    pub fn report(&self) -> serde_json::Value {
        serde_json::json!({
            "loop_id": self.loop_id.0,
            "line": self.line,
            "class": self.class,
            "srcs": self.srcs.iter().map(|s| SrcReport {
                kind: s.kind,
                formula_text: s.formula.to_string(),
                provenance: s.provenance.clone(),
                validated: s.validated,
            }).collect::<Vec<_>>(),
            "budget_exhausted": self.budget_exhausted,
        })
    }
}

fn shift_only(class: &LoopClass, cfg: &Cfg, l: &Loop) -> bool {
    let LoopClass::NonLinear(rs) = class else { return false };
    rs.iter().all(|r| match r {
        NonLinearReason::NonLinearAssignment { .. } => true,
        _ => false,
    }) && l.region.iter().all(|&b| {
        cfg.block(b).instrs.iter().all(|ins| match ins {
            Instr::Assign(v, e) => {
                let ty = cfg.vars[v.0].ty;
                linear_update(*v, ty, e).is_some() || shift_update(*v, ty, e).is_some()
            }
            _ => true,
        })
    })
}

pub fn analyze_loop(cfg: &Cfg, l: &Loop, conf: &SrcConfig) -> LoopAnalysis {
    let mut a = LoopAnalysis {
        loop_id: l.id,
        header: l.header,
        line: l.line(),
        class: l.class.clone(),
        paths: Vec::new(),
        srcs: Vec::new(),
        budget_exhausted: false,
        defects: Vec::new(),
    };
    let shift = shift_only(&l.class, cfg, l);
    if !l.is_linear() && !shift {
        return a;
    }
    let paths = match enumerate_paths(cfg, l, conf.path_cap) {
        Ok(p) => p,
        Err(_) => {
            a.class = demote(&a.class, NonLinearReason::PathExplosion);
            return a;
        }
    };
    a.paths = paths.clone();
    let region = |b: BlockId| l.contains(b);
    if l.is_linear() {
        match infer_src(cfg, l, &paths, conf) {
            Ok(r) => {
                a.srcs = r.srcs;
                a.budget_exhausted = r.budget_exhausted;
                a.defects = r.defects;
            }
            Err(e) => {
                a.budget_exhausted = true;
                a.defects.push(e.to_string());
            }
        }
    }
    let cyclic: Vec<LoopPath> = paths.iter().filter(|p| p.is_cyclic()).cloned().collect();
    let ctx = if l.is_linear() {
        Ctx::new(cfg, &cyclic, conf).ok()
    } else {
        Ctx::new(cfg, &[], conf).ok()
    };
    let Some(ctx) = ctx else { return a };
    for (i, p) in cyclic.iter().enumerate() {
        let r = if l.is_linear() { stuck_in(&ctx, i) } else { shift_stuck(&ctx, p) };
        match r {
            Ok(Some(f)) => {
                if a.srcs.iter().any(|s| s.kind == SrcKind::Stuck && s.formula == f) {
                    continue;
                }
                let mut src = Src {
                    loop_id: l.id,
                    header: l.header,
                    formula: f,
                    kind: SrcKind::Stuck,
                    provenance: Provenance {
                        stem: Vec::new(),
                        cycle: vec![p.id],
                    },
                    validated: false,
                };
                match validate(&ctx, &src, &region) {
                    Ok(true) => {
                        src.validated = true;
                        a.srcs.push(src);
                    }
                    Ok(false) => a.defects.push(format!("stuck SRC {} failed replay", src.formula)),
                    Err(e) => a.defects.push(format!("stuck SRC {} not checked: {e}", src.formula)),
                }
            }
            Ok(None) => {}
            Err(SrcError::Lia(LiaError::ResourceBudgetExceeded(_))) => a.budget_exhausted = true,
            Err(e) => a.defects.push(e.to_string()),
        }
    }
    if a.budget_exhausted && l.is_linear() {
        a.class = demote(&a.class, NonLinearReason::AnalysisBudget);
    }
    a
}

fn demote(c: &LoopClass, r: NonLinearReason) -> LoopClass {
    match c {
        LoopClass::Linear => LoopClass::NonLinear(vec![r]),
        LoopClass::NonLinear(rs) => {
            let mut rs = rs.clone();
            if !rs.contains(&r) {
                rs.push(r);
            }
            LoopClass::NonLinear(rs)
        }
    }
}

pub fn analyze_program(cfg: &Cfg, conf: &SrcConfig) -> Result<Vec<LoopAnalysis>, LoopError> {
    let loops = crate::lang::extract_loops(cfg)?;
    Ok(loops.iter().map(|l| analyze_loop(cfg, l, conf)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{build_cfg, extract_loops, parse};
    use crate::lia::equivalent_on;

    const FIG1: &str = "i32 i; while (i < 100) { if (i < 50) { i = i + 1; } else { i = i - 1; } }";

    fn setup(src: &str) -> (Cfg, Loop, Vec<LoopPath>) {
        let cfg = build_cfg(&parse(src).unwrap());
        let l = extract_loops(&cfg).unwrap().pop().unwrap();
        let paths = enumerate_paths(&cfg, &l, DEFAULT_PATH_CAP).unwrap();
        (cfg, l, paths)
    }

    #[test]
    fn running_example_src() {
        let (cfg, l, paths) = setup(FIG1);
        let r = infer_src(&cfg, &l, &paths, &SrcConfig::default()).unwrap();
        assert!(!r.budget_exhausted);
        assert!(r.defects.is_empty(), "{:?}", r.defects);
        assert_eq!(r.srcs.len(), 1);
        let s = &r.srcs[0];
        assert_eq!(s.kind, SrcKind::Lasso);
        assert!(s.validated);
        assert_eq!(s.provenance.cycle, vec![1, 2]);
        assert!(equivalent_on(&s.formula, &Formula::eq("i", 49), &[(Var::new("i"), -1000, 1000)]).unwrap());
        assert_eq!(s.formula.to_string(), "(and (<= i 49) (>= i 49))");
    }

    #[test]
    fn bounded_counter_has_no_src() {
        let (cfg, l, paths) = setup("i32 i; while (i < 10) { i = i + 1; }");
        let r = infer_src(&cfg, &l, &paths, &SrcConfig::default()).unwrap();
        assert!(r.srcs.is_empty());
        assert!(!r.budget_exhausted);
    }

    #[test]
    fn wrapping_step_of_four() {
        let (cfg, l, paths) = setup("u8 x; while (x != 200) { x = x + 4; }");
        let r = infer_src(&cfg, &l, &paths, &SrcConfig::default()).unwrap();
        assert_eq!(r.srcs.len(), 1, "{:?}", r.defects);
        let f = &r.srcs[0].formula;
        for x in 0..256 {
            let env = BTreeMap::from([(Var::new("x"), x)]);
            assert_eq!(f.eval(&env).unwrap(), x % 4 != 0, "x = {x}");
        }
    }

    #[test]
    fn stuck_conditions() {
        let conf = SrcConfig::default();
        let (cfg, _, paths) = setup("i32 x; while (true) { skip; }");
        assert_eq!(detect_stuck(&cfg, &paths[0], &conf).unwrap(), Some(Formula::True));
        let (cfg, _, paths) = setup(FIG1);
        assert_eq!(detect_stuck(&cfg, &paths[0], &conf).unwrap(), None);
        let (cfg, _, paths) = setup("i32 x; while (x < 0) { x = x - 1; }");
        let ignore = SrcConfig {
            overflow: OverflowMode::Ignore,
            ..SrcConfig::default()
        };
        let f = detect_stuck(&cfg, &paths[0], &ignore).unwrap().unwrap();
        assert!(equivalent_on(&f, &Formula::lt("x", 0), &[(Var::new("x"), -100, 100)]).unwrap());
        // With wraparound the decrement eventually turns positive.
        assert!(matches!(
            detect_stuck(&cfg, &paths[0], &conf),
            Ok(None) | Err(SrcError::Lia(LiaError::ResourceBudgetExceeded(_)))
        ));
        let (cfg, _, paths) = setup("i32 x; i32 y; while (x != 0) { y = y + 1; }");
        let f = detect_stuck(&cfg, &paths[0], &conf).unwrap().unwrap();
        assert_eq!(simplify(&f).unwrap(), simplify(&Formula::ne("x", 0)).unwrap());
    }

    #[test]
    fn shift_loops() {
        let conf = SrcConfig::default();
        let (cfg, l, _) = setup("u32 x; while (x > 0) { x = x >> 1; }");
        let a = analyze_loop(&cfg, &l, &conf);
        assert!(a.srcs.is_empty());
        assert!(a.needs_monitor());
        let (cfg, l, _) = setup("u8 x; while (x >= 0) { x = x >> 1; }");
        let a = analyze_loop(&cfg, &l, &conf);
        assert_eq!(a.srcs.len(), 1);
        assert_eq!(a.srcs[0].kind, SrcKind::Stuck);
        assert_eq!(a.srcs[0].formula, Formula::True);
        assert!(a.srcs[0].validated);
    }

    #[test]
    fn summaries() {
        let conf = SrcConfig::default();
        let (cfg, _, paths) = setup(FIG1);
        let k = Var::new("k1");
        let s = summarize_path(&cfg, &paths[0], &k, &conf).unwrap();
        assert_eq!(s.sigma[&VarId(0)], SigmaEntry::Affine { step: 1 });
        assert!(s.wrap.is_empty());
        let want = Formula::and([Formula::lt(LinExpr::var("i") + LinExpr::var("k1") - 1, 50)]);
        let b = [(Var::new("i"), -60, 60), (Var::new("k1"), 1, 60)];
        assert!(equivalent_on(&s.phi, &want, &b).unwrap());

        let (cfg, _, paths) = setup("u16 x; while (true) { x = x - 1; }");
        let s = summarize_path(&cfg, &paths[0], &k, &conf).unwrap();
        assert!(s.wrap.contains(&VarId(0)));
        let pre = BTreeMap::from([(VarId(0), 3)]);
        assert_eq!(s.apply(&pre, 5)[&VarId(0)], 65534);
    }
}
