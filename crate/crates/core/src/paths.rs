//! Loop paths: header-free block sequences from a loop header to a header or
//! an exit, with their composed transition relation and path condition.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;
use thiserror::Error;

use crate::lang::ast::{BinOp, Decl, Expr, ExprKind, UnOp, VarId};
use crate::lang::cfg::{BlockId, Cfg, Cond, Instr};
use crate::lang::classify::{const_value, linear_update, Update};
use crate::lang::loops::{Loop, LoopId};
use crate::lang::printer::expr_to_string;
use crate::lang::types::Ty;
use crate::lia::{Formula, LinExpr, Var};

pub const DEFAULT_PATH_CAP: usize = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PathError {
    #[error("loop {loop_id} has more than {cap} paths")]
    PathExplosion { loop_id: LoopId, cap: usize },
    #[error("unsupported construct on a linear path: {0}")]
    Unsupported(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PathKind {
    Cyclic,
    Exiting,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LoopPath {
    /// 1-based, in enumeration order.
    pub id: usize,
    pub loop_id: LoopId,
    pub blocks: Vec<BlockId>,
    /// Indices into `Cfg::edges`; `edges[i]` goes from `blocks[i]` to `blocks[i + 1]`.
    pub edges: Vec<usize>,
    pub kind: PathKind,
}

impl LoopPath {
    pub fn head(&self) -> BlockId {
        self.blocks[0]
    }

    pub fn tail(&self) -> BlockId {
        *self.blocks.last().unwrap()
    }

    pub fn is_cyclic(&self) -> bool {
        self.kind == PathKind::Cyclic
    }

    pub fn name(&self) -> String {
        format!("τ{}", self.id)
    }
}

/// All loop paths of `l`, lexicographic by block ids.
pub fn enumerate_paths(cfg: &Cfg, l: &Loop, cap: usize) -> Result<Vec<LoopPath>, PathError> {
    let mut out: Vec<(Vec<BlockId>, Vec<usize>)> = Vec::new();
    for &h in &l.headers {
        let mut stack = vec![(vec![h], Vec::new())];
        while let Some((blocks, edges)) = stack.pop() {
            let last = *blocks.last().unwrap();
            let mut succ: Vec<usize> = cfg.succs[last.0].clone();
            succ.sort_by_key(|&e| (cfg.edges[e].to, e));
            // Reverse so the smallest successor is explored first.
            for e in succ.into_iter().rev() {
                if edge_is_dead(&cfg.edges[e].cond) {
                    continue;
                }
                let to = cfg.edges[e].to;
                let mut b = blocks.clone();
                let mut es = edges.clone();
                b.push(to);
                es.push(e);
                if l.headers.contains(&to) || !l.contains(to) {
                    out.push((b, es));
                    if out.len() > cap {
                        return Err(PathError::PathExplosion { loop_id: l.id, cap });
                    }
                } else {
                    stack.push((b, es));
                }
            }
        }
    }
    out.sort();
    Ok(out
        .into_iter()
        .enumerate()
        .map(|(i, (blocks, edges))| {
            let kind = if l.contains(*blocks.last().unwrap()) {
                PathKind::Cyclic
            } else {
                PathKind::Exiting
            };
            LoopPath {
                id: i + 1,
                loop_id: l.id,
                blocks,
                edges,
                kind,
            }
        })
        .collect())
}

/// Edges whose condition is a constant that never lets control through.
fn edge_is_dead(c: &Cond) -> bool {
    match c {
        Cond::Always => false,
        Cond::If(e) => const_value(e) == Some(0),
        Cond::IfNot(e) => const_value(e).is_some_and(|v| v != 0),
    }
}

fn cond_string(decls: &[Decl], e: &Expr) -> String {
    let s = expr_to_string(decls, e);
    match s.strip_prefix('(').and_then(|t| t.strip_suffix(')')) {
        // Only strip when the outer parentheses match each other.
        Some(inner) if inner.chars().try_fold(0i32, |d, c| {
            let d = d + (c == '(') as i32 - (c == ')') as i32;
            (d >= 0).then_some(d)
        }) == Some(0) => inner.to_string(),
        _ => s,
    }
}

/// One line per path: `τ1: b1 -[i < 100]-> b2 --> b4`.
pub fn dump_paths(cfg: &Cfg, paths: &[LoopPath]) -> String {
    let mut s = String::new();
    for p in paths {
        let _ = write!(s, "{}: {}", p.name(), p.blocks[0]);
        for (&e, b) in p.edges.iter().zip(&p.blocks[1..]) {
            match &cfg.edges[e].cond {
                Cond::Always => {
                    let _ = write!(s, " --> {b}");
                }
                Cond::If(c) => {
                    let _ = write!(s, " -[{}]-> {b}", cond_string(&cfg.vars, c));
                }
                Cond::IfNot(c) => {
                    let _ = write!(s, " -[!({})]-> {b}", cond_string(&cfg.vars, c));
                }
            }
        }
        s.push('\n');
    }
    s
}

/// Name of a program variable inside formulas.
pub fn lia_var(decls: &[Decl], v: VarId) -> Var {
    Var::new(&decls[v.0].name)
}

/// One element of a path in execution order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Assign(VarId, Update),
    /// A branch condition over the values current at that point.
    Guard(Formula),
}

/// Translate a linear condition into a formula over the current values.
pub fn cond_to_formula(decls: &[Decl], e: &Expr) -> Result<Formula, PathError> {
    let unsupported = || PathError::Unsupported(expr_to_string(decls, e));
    if let Some(c) = const_value(e) {
        return Ok(Formula::bool(c != 0));
    }
    Ok(match &e.kind {
        ExprKind::Var(v) => Formula::ne(LinExpr::var(lia_var(decls, *v)), 0),
        ExprKind::Unary(UnOp::Not, inner) => Formula::not(cond_to_formula(decls, inner)?),
        ExprKind::Binary { op: BinOp::And, lhs, rhs, .. } => {
            Formula::and([cond_to_formula(decls, lhs)?, cond_to_formula(decls, rhs)?])
        }
        ExprKind::Binary { op: BinOp::Or, lhs, rhs, .. } => {
            Formula::or([cond_to_formula(decls, lhs)?, cond_to_formula(decls, rhs)?])
        }
        ExprKind::Binary {
            op,
            operand_ty,
            lhs,
            rhs,
        } if op.is_comparison() => {
            let operand = |x: &Expr| -> Result<LinExpr, PathError> {
                match &x.kind {
                    ExprKind::Var(v) => Ok(LinExpr::var(lia_var(decls, *v))),
                    _ => const_value(x)
                        .map(|c| LinExpr::constant(operand_ty.wrap(c)))
                        .ok_or_else(unsupported),
                }
            };
            let (a, b) = (operand(lhs)?, operand(rhs)?);
            match op {
                BinOp::Lt => Formula::lt(a, b),
                BinOp::Le => Formula::le(a, b),
                BinOp::Gt => Formula::gt(a, b),
                BinOp::Ge => Formula::ge(a, b),
                BinOp::Eq => Formula::eq(a, b),
                _ => Formula::ne(a, b),
            }
        }
        _ => return Err(unsupported()),
    })
}

/// The path's assignments and branch conditions in execution order. The
/// instructions of the final block are not part of the path.
pub fn path_steps(cfg: &Cfg, p: &LoopPath) -> Result<Vec<Step>, PathError> {
    let mut steps = Vec::new();
    for (i, &b) in p.blocks[..p.blocks.len() - 1].iter().enumerate() {
        for ins in &cfg.block(b).instrs {
            match ins {
                Instr::Assign(v, e) => {
                    let u = linear_update(*v, cfg.vars[v.0].ty, e)
                        .ok_or_else(|| PathError::Unsupported(expr_to_string(&cfg.vars, e)))?;
                    steps.push(Step::Assign(*v, u));
                }
                Instr::Skip | Instr::Break => {}
                Instr::Store(..) => return Err(PathError::Unsupported("array store".into())),
                Instr::Nondet(_) => return Err(PathError::Unsupported("nondet()".into())),
            }
        }
        match &cfg.edges[p.edges[i]].cond {
            Cond::Always => {}
            Cond::If(c) => steps.push(Step::Guard(cond_to_formula(&cfg.vars, c)?)),
            Cond::IfNot(c) => steps.push(Step::Guard(Formula::not(cond_to_formula(&cfg.vars, c)?))),
        }
    }
    Ok(steps)
}

/// `σ`: each scalar loop variable mapped to an expression over pre-path
/// values. Wraparound is not applied here.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitionRelation {
    pub map: BTreeMap<VarId, LinExpr>,
    pub types: BTreeMap<VarId, Ty>,
}

impl TransitionRelation {
    pub fn identity(decls: &[Decl]) -> TransitionRelation {
        let mut map = BTreeMap::new();
        let mut types = BTreeMap::new();
        for (i, d) in decls.iter().enumerate() {
            if !d.is_array() {
                map.insert(VarId(i), LinExpr::var(Var::new(&d.name)));
                types.insert(VarId(i), d.ty);
            }
        }
        TransitionRelation { map, types }
    }

    pub fn apply(&mut self, v: VarId, u: Update) {
        let cur = self.map.get(&v).cloned().unwrap_or_default();
        self.map.insert(
            v,
            match u {
                Update::Offset(c) => cur + c,
                Update::Const(c) => LinExpr::constant(c),
            },
        );
    }

    /// As a lia substitution keyed by variable name.
    pub fn substitution(&self, decls: &[Decl]) -> BTreeMap<Var, LinExpr> {
        self.map
            .iter()
            .map(|(v, e)| (lia_var(decls, *v), e.clone()))
            .collect()
    }

    /// Apply to a concrete store of scalar values, wrapping into each type.
    pub fn eval(&self, pre: &BTreeMap<Var, i128>) -> BTreeMap<VarId, i128> {
        self.map
            .iter()
            .map(|(v, e)| (*v, self.types[v].wrap(e.eval(pre).expect("all loop variables bound"))))
            .collect()
    }
}

pub fn path_relation(cfg: &Cfg, p: &LoopPath) -> Result<TransitionRelation, PathError> {
    let mut rel = TransitionRelation::identity(&cfg.vars);
    for s in path_steps(cfg, p)? {
        if let Step::Assign(v, u) = s {
            rel.apply(v, u);
        }
    }
    Ok(rel)
}

/// Conjunction of every branch condition pulled back to pre-path values.
pub fn path_condition(cfg: &Cfg, p: &LoopPath) -> Result<Formula, PathError> {
    let mut rel = TransitionRelation::identity(&cfg.vars);
    let mut parts = Vec::new();
    for s in path_steps(cfg, p)? {
        match s {
            Step::Assign(v, u) => rel.apply(v, u),
            Step::Guard(f) => parts.push(
                f.substitute(&rel.substitution(&cfg.vars))
                    .map_err(|e| PathError::Unsupported(e.to_string()))?,
            ),
        }
    }
    Ok(match parts.len() {
        0 => Formula::True,
        1 => parts.pop().unwrap(),
        _ => Formula::And(parts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{build_cfg, extract_loops, parse};
    use crate::lia::{equivalent_on, simplify};

    const FIG1: &str = "i32 i; while (i < 100) { if (i < 50) { i = i + 1; } else { i = i - 1; } }";

    fn setup(src: &str) -> (Cfg, Vec<Loop>) {
        let cfg = build_cfg(&parse(src).unwrap());
        let loops = extract_loops(&cfg).unwrap();
        (cfg, loops)
    }

    #[test]
    fn running_example_paths() {
        let (cfg, loops) = setup(FIG1);
        let paths = enumerate_paths(&cfg, &loops[0], DEFAULT_PATH_CAP).unwrap();
        let seqs: Vec<Vec<usize>> = paths.iter().map(|p| p.blocks.iter().map(|b| b.0).collect()).collect();
        assert_eq!(seqs, vec![vec![1, 2, 4, 6, 1], vec![1, 2, 5, 6, 1], vec![1, 3]]);
        assert_eq!(
            dump_paths(&cfg, &paths),
            "τ1: b1 -[i < 100]-> b2 -[i < 50]-> b4 --> b6 --> b1\n\
             τ2: b1 -[i < 100]-> b2 -[!(i < 50)]-> b5 --> b6 --> b1\n\
             τ3: b1 -[!(i < 100)]-> b3\n"
        );
        let rel = path_relation(&cfg, &paths[0]).unwrap();
        assert_eq!(rel.map[&VarId(0)], LinExpr::var("i") + 1);
        let th = path_condition(&cfg, &paths[0]).unwrap();
        assert_eq!(th, Formula::and([Formula::lt("i", 100), Formula::lt("i", 50)]));
    }

    #[test]
    fn trivial_and_if_chain() {
        let (cfg, loops) = setup("i32 x; while (true) { skip; }");
        let paths = enumerate_paths(&cfg, &loops[0], DEFAULT_PATH_CAP).unwrap();
        assert_eq!(paths.len(), 1);
        assert!(paths[0].is_cyclic());
        assert_eq!(path_condition(&cfg, &paths[0]).unwrap(), Formula::True);

        let (cfg, loops) = setup(
            "i32 x; while (x < 10) { if (x < 3) { x = x + 1; } else { if (x < 6) { x = x + 2; } else { x = x + 3; } } }",
        );
        let paths = enumerate_paths(&cfg, &loops[0], DEFAULT_PATH_CAP).unwrap();
        assert_eq!(paths.iter().filter(|p| p.is_cyclic()).count(), 3);
        assert_eq!(paths.iter().filter(|p| !p.is_cyclic()).count(), 1);
    }

    #[test]
    fn composition_and_mid_path_condition() {
        let (cfg, loops) = setup("i32 x; while (x < 100) { x = 5; x = x + 2; }");
        let paths = enumerate_paths(&cfg, &loops[0], DEFAULT_PATH_CAP).unwrap();
        assert_eq!(path_relation(&cfg, &paths[0]).unwrap().map[&VarId(0)], LinExpr::constant(7));
        assert_eq!(path_relation(&cfg, &paths[1]).unwrap().map[&VarId(0)], LinExpr::var("x"));

        let (cfg, loops) = setup("i32 x; while (x < 100) { x = x + 1; if (x < 10) { skip; } }");
        let paths = enumerate_paths(&cfg, &loops[0], DEFAULT_PATH_CAP).unwrap();
        let th = path_condition(&cfg, &paths[0]).unwrap();
        let want = Formula::and([Formula::lt("x", 100), Formula::lt("x", 9)]);
        assert!(equivalent_on(&th, &want, &[(Var::new("x"), -20, 20)]).unwrap());
        assert_eq!(simplify(&th).unwrap(), simplify(&Formula::lt("x", 9)).unwrap());
    }

    #[test]
    fn cap_is_enforced() {
        let body: String = (0..9).map(|i| format!("if (x < {i}) {{ x = x + 1; }} ")).collect();
        let (cfg, loops) = setup(&format!("i32 x; while (x < 100) {{ {body} }}"));
        assert!(matches!(
            enumerate_paths(&cfg, &loops[0], DEFAULT_PATH_CAP),
            Err(PathError::PathExplosion { .. })
        ));
        assert_eq!(enumerate_paths(&cfg, &loops[0], 1000).unwrap().len(), 513);
    }
}
